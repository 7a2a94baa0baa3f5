#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "bnnood/data.hpp"
#include "bnnood/rng.hpp"

using namespace bnnood;
using ad::Tensor;

namespace {

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::size_t hash_values(const std::vector<double>& v) {
  std::size_t h = 1469598103934665603ull;
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    h = (h ^ bits) * 1099511628211ull;
  }
  return h;
}

}  // namespace

TEST_CASE("toy gaussians: defaults, balance, determinism") {
  const LabeledSet d = gen_toy_gaussians({});
  CHECK(d.size() == 400);
  CHECK(d.dim() == 2);
  int counts[4] = {0, 0, 0, 0};
  for (int y : d.hard) ++counts[y];
  for (int c : counts) CHECK(c == 100);

  const LabeledSet d2 = gen_toy_gaussians({});
  CHECK(d.X.values == d2.X.values);

  ToyGaussiansSpec tight;
  tight.stddev = 1e-12;
  const LabeledSet point = gen_toy_gaussians(tight);
  CHECK(std::abs(point.X.at(0, 0) - (-2.0)) < 1e-9);
  CHECK(std::abs(point.X.at(399, 1) - 2.0) < 1e-9);
}

TEST_CASE("uniform ood respects bounds and moments") {
  const LabeledSet d = gen_uniform_ood(-6, 6, 2, 5000, 3);
  CHECK(d.size() == 5000);
  CHECK_FALSE(d.has_hard());
  CHECK(d.origin == Origin::OutOfDistribution);
  for (double v : d.X.values) {
    CHECK(v >= -6.0);
    CHECK(v <= 6.0);
  }
  // per-coordinate empirical mean within 4 sigma of the midpoint
  const LabeledSet big = gen_uniform_ood(0, 1, 784, 128, 11);  // pixel-noise images
  CHECK(big.dim() == 784);
  const LabeledSet wide = gen_uniform_ood(-6, 6, 1, 100000, 5);
  double mean = 0.0;
  for (double v : wide.X.values) mean += v;
  mean /= 100000.0;
  const double sigma = std::sqrt(12.0 * 12.0 / 12.0 / 100000.0);
  CHECK(std::abs(mean - 0.0) <= 4.0 * sigma);
  CHECK_THROWS_AS(gen_uniform_ood(2, 2, 2, 10, 0), std::invalid_argument);
}

TEST_CASE("ring ood stays inside the annulus") {
  const LabeledSet d = gen_ring_ood(8, 12, 2000, 9);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = std::hypot(d.X.at(i, 0), d.X.at(i, 1));
    CHECK(r >= 8.0);
    CHECK(r <= 12.0);
  }
}

TEST_CASE("generators: different seeds give different outputs") {
  CHECK(hash_values(gen_uniform_ood(-1, 1, 3, 50, 1).X.values) !=
        hash_values(gen_uniform_ood(-1, 1, 3, 50, 2).X.values));
  ToyGaussiansSpec a, b;
  b.seed = 1;
  CHECK(hash_values(gen_toy_gaussians(a).X.values) != hash_values(gen_toy_gaussians(b).X.values));
}

TEST_CASE("smooth ood: constant image maps to kappa/2") {
  LabeledSet src;
  src.X = Tensor::zeros({1, 16});
  for (double& v : src.X.values) v = 0.7;
  SmoothNoiseSpec spec;
  spec.seed = 4;
  const LabeledSet out = gen_smooth_ood(src, spec);
  const double first = out.X.values[0];
  CHECK(first > 0.3 / 2 - 1e-12);
  CHECK(first < 1.0 / 2 + 1e-12);
  for (double v : out.X.values) CHECK(v == doctest::Approx(first).epsilon(1e-12));
}

TEST_CASE("smooth ood: exact [0, kappa] range for non-constant sources") {
  Rng rng(8);
  LabeledSet src;
  src.X = Tensor::zeros({6, 49});
  for (double& v : src.X.values) v = rng.uniform01();
  SmoothNoiseSpec spec;
  spec.seed = 21;
  const LabeledSet out = gen_smooth_ood(src, spec);
  CHECK(out.size() == 6);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double mn = 1e9, mx = -1e9;
    for (std::size_t j = 0; j < 49; ++j) {
      mn = std::min(mn, out.X.at(i, j));
      mx = std::max(mx, out.X.at(i, j));
    }
    CHECK(mn == 0.0);          // rescale contract: exact bounds
    CHECK(mx >= 0.3 - 1e-12);  // kappa in [0.3, 1.0]
    CHECK(mx <= 1.0 + 1e-12);
  }
  const LabeledSet out2 = gen_smooth_ood(src, spec);
  CHECK(out.X.values == out2.X.values);

  LabeledSet bad;
  bad.X = Tensor::zeros({1, 15});  // not square
  CHECK_THROWS_AS(gen_smooth_ood(bad, spec), std::invalid_argument);
}

TEST_CASE("idx writer/reader round-trips bit-exactly") {
  Rng rng(13);
  LabeledSet set;
  set.X = Tensor::zeros({5, 9});
  for (double& v : set.X.values) {
    v = static_cast<double>(rng.below(256)) / 255.0;  // representable pixels
  }
  set.hard = {3, 1, 4, 1, 5};
  const auto img = temp_path("bnnood_test_images.idx");
  const auto lbl = temp_path("bnnood_test_labels.idx");
  write_idx(img, lbl, set, 3, 3);
  const LabeledSet back = load_idx(img, lbl);
  CHECK(back.size() == 5);
  CHECK(back.hard == set.hard);
  CHECK(back.X.values == set.X.values);

  // writing the loaded copy reproduces identical bytes
  const auto img2 = temp_path("bnnood_test_images2.idx");
  const auto lbl2 = temp_path("bnnood_test_labels2.idx");
  write_idx(img2, lbl2, back, 3, 3);
  for (auto [a, b] : {std::pair{img, img2}, std::pair{lbl, lbl2}}) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
  }
  for (const auto& p : {img, lbl, img2, lbl2}) std::filesystem::remove(p);
}

TEST_CASE("idx loader: hand-built 2-image 2x2 fixture") {
  const auto img = temp_path("bnnood_fixture_images.idx");
  const auto lbl = temp_path("bnnood_fixture_labels.idx");
  {
    std::ofstream os(img, std::ios::binary);
    const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
    os.write(reinterpret_cast<const char*>(header), 16);
    const unsigned char pixels[] = {0, 255, 51, 102, 255, 0, 204, 153};
    os.write(reinterpret_cast<const char*>(pixels), 8);
  }
  {
    std::ofstream os(lbl, std::ios::binary);
    const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 2};
    os.write(reinterpret_cast<const char*>(header), 8);
    const unsigned char labels[] = {7, 2};
    os.write(reinterpret_cast<const char*>(labels), 2);
  }
  const LabeledSet set = load_idx(img, lbl);
  CHECK(set.size() == 2);
  CHECK(set.dim() == 4);
  CHECK(set.hard == std::vector<int>{7, 2});
  CHECK(set.X.at(0, 0) == 0.0);
  CHECK(set.X.at(0, 1) == 1.0);
  CHECK(set.X.at(0, 2) == doctest::Approx(51.0 / 255.0));
  CHECK(set.X.at(1, 3) == doctest::Approx(153.0 / 255.0));
  std::filesystem::remove(img);
  std::filesystem::remove(lbl);
}

TEST_CASE("idx loader rejects wrong magic and count mismatch") {
  const auto img = temp_path("bnnood_badmagic_images.idx");
  const auto lbl = temp_path("bnnood_badmagic_labels.idx");
  {
    std::ofstream os(img, std::ios::binary);
    const unsigned char header[] = {0, 0, 9, 9, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 42};
    os.write(reinterpret_cast<const char*>(header), 17);
  }
  {
    std::ofstream os(lbl, std::ios::binary);
    const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 1, 5};
    os.write(reinterpret_cast<const char*>(header), 9);
  }
  CHECK_THROWS_AS(load_idx(img, lbl), std::runtime_error);
  std::filesystem::remove(img);
  std::filesystem::remove(lbl);
}

TEST_CASE("split_validation: disjoint, deterministic, size contract") {
  ToyGaussiansSpec spec;
  spec.n_per_class = 5;
  const LabeledSet d = gen_toy_gaussians(spec);  // 20 rows

  auto [train, val] = split_validation(d, 4, 17);
  CHECK(train.size() == 16);
  CHECK(val.size() == 4);

  // disjoint: every row of d appears exactly once across the two parts
  std::multiset<double> seen;
  for (std::size_t i = 0; i < train.size(); ++i) seen.insert(train.X.at(i, 0));
  for (std::size_t i = 0; i < val.size(); ++i) seen.insert(val.X.at(i, 0));
  std::multiset<double> all;
  for (std::size_t i = 0; i < d.size(); ++i) all.insert(d.X.at(i, 0));
  CHECK(seen == all);

  auto [train2, val2] = split_validation(d, 4, 17);
  CHECK(train.X.values == train2.X.values);
  CHECK(val.X.values == val2.X.values);

  auto [train3, val3] = split_validation(d, 0, 17);
  CHECK(train3.size() == 20);
  CHECK(val3.size() == 0);

  CHECK_THROWS_AS(split_validation(d, 20, 0), std::invalid_argument);
}

TEST_CASE("csv round-trip") {
  LabeledSet set;
  set.X = Tensor::matrix(3, 2, {0.125, -1.5, 3.0, 0.333333333333333315, 2.25, -0.75});
  set.hard = {0, 2, 1};
  const auto path = temp_path("bnnood_test.csv");
  write_csv(path, set);
  const LabeledSet back = load_csv(path);
  CHECK(back.size() == 3);
  CHECK(back.dim() == 2);
  CHECK(back.hard == set.hard);
  CHECK(back.X.values == set.X.values);  // %.17g survives the round trip
  std::filesystem::remove(path);
}
