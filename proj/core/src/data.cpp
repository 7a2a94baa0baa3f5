#include "bnnood/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bnnood/rng.hpp"

namespace bnnood {

void LabeledSet::validate() const {
  if (has_hard() && hard.size() != size()) {
    throw std::invalid_argument("labeled set: hard label count != row count");
  }
  if (has_soft()) {
    if (soft.rows() != size()) {
      throw std::invalid_argument("labeled set: soft label rows != row count");
    }
    for (std::size_t i = 0; i < soft.rows(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < soft.cols(); ++k) {
        const double y = soft.at(i, k);
        if (y < 0.0) throw std::invalid_argument("labeled set: negative soft label entry");
        s += y;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw std::invalid_argument("labeled set: soft label row does not sum to 1");
      }
    }
  }
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (b.size() == 0) return a;
  if (a.size() == 0) return b;
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("concat: feature dimension mismatch");
  }
  LabeledSet out;
  out.X = ad::Tensor::zeros({a.size() + b.size(), a.dim()});
  std::copy(a.X.values.begin(), a.X.values.end(), out.X.values.begin());
  std::copy(b.X.values.begin(), b.X.values.end(),
            out.X.values.begin() + static_cast<std::ptrdiff_t>(a.X.size()));
  if (a.has_hard() && b.has_hard()) {
    out.hard = a.hard;
    out.hard.insert(out.hard.end(), b.hard.begin(), b.hard.end());
  }
  if (a.has_soft() && b.has_soft()) {
    if (a.soft.cols() != b.soft.cols()) {
      throw std::invalid_argument("concat: soft label width mismatch");
    }
    out.soft = ad::Tensor::zeros({a.size() + b.size(), a.soft.cols()});
    std::copy(a.soft.values.begin(), a.soft.values.end(), out.soft.values.begin());
    std::copy(b.soft.values.begin(), b.soft.values.end(),
              out.soft.values.begin() + static_cast<std::ptrdiff_t>(a.soft.size()));
  }
  out.origin = a.origin;
  return out;
}

LabeledSet take_rows(const LabeledSet& s, const std::vector<std::size_t>& rows) {
  LabeledSet out;
  out.origin = s.origin;
  out.X = ad::Tensor::zeros({rows.size(), s.dim()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < s.dim(); ++j) out.X.at(i, j) = s.X.at(rows[i], j);
  }
  if (s.has_hard()) {
    out.hard.reserve(rows.size());
    for (std::size_t r : rows) out.hard.push_back(s.hard[r]);
  }
  if (s.has_soft()) {
    out.soft = ad::Tensor::zeros({rows.size(), s.soft.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < s.soft.cols(); ++k) out.soft.at(i, k) = s.soft.at(rows[i], k);
    }
  }
  return out;
}

LabeledSet gen_toy_gaussians(const ToyGaussiansSpec& spec) {
  if (!(spec.stddev > 0.0)) throw std::invalid_argument("toy gaussians: stddev must be > 0");
  if (spec.means.empty()) throw std::invalid_argument("toy gaussians: need cluster means");
  const std::size_t k = spec.means.size();
  const std::size_t m = k * spec.n_per_class;
  LabeledSet out;
  out.X = ad::Tensor::zeros({m, 2});
  out.hard.resize(m);
  out.origin = Origin::InDistribution;
  Rng rng(spec.seed);
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < k; ++cls) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
      out.X.at(row, 0) = spec.means[cls][0] + spec.stddev * rng.normal();
      out.X.at(row, 1) = spec.means[cls][1] + spec.stddev * rng.normal();
      out.hard[row] = static_cast<int>(cls);
    }
  }
  return out;
}

LabeledSet gen_uniform_ood(double low, double high, std::size_t dim, std::size_t m_out,
                           std::uint64_t seed) {
  if (!(low < high)) throw std::invalid_argument("uniform ood: low must be < high");
  LabeledSet out;
  out.X = ad::Tensor::zeros({m_out, dim});
  out.origin = Origin::OutOfDistribution;
  Rng rng(seed);
  for (std::size_t i = 0; i < m_out; ++i) {
    for (std::size_t j = 0; j < dim; ++j) out.X.at(i, j) = rng.uniform(low, high);
  }
  return out;
}

LabeledSet gen_ring_ood(double r_lo, double r_hi, std::size_t m_out, std::uint64_t seed) {
  if (!(0.0 <= r_lo && r_lo < r_hi)) throw std::invalid_argument("ring ood: bad radii");
  LabeledSet out;
  out.X = ad::Tensor::zeros({m_out, 2});
  out.origin = Origin::OutOfDistribution;
  Rng rng(seed);
  for (std::size_t i = 0; i < m_out; ++i) {
    const double u = rng.uniform01();
    const double r = std::sqrt(r_lo * r_lo + u * (r_hi * r_hi - r_lo * r_lo));
    const double t = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    out.X.at(i, 0) = r * std::cos(t);
    out.X.at(i, 1) = r * std::sin(t);
  }
  return out;
}

namespace {

std::size_t image_side(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim) {
    throw std::invalid_argument("smooth ood: images must be square");
  }
  return side;
}

}  // namespace

LabeledSet gen_smooth_ood(const LabeledSet& source, const SmoothNoiseSpec& spec) {
  if (!(spec.blur_sigma_lo > 0.0 && spec.blur_sigma_lo <= spec.blur_sigma_hi)) {
    throw std::invalid_argument("smooth ood: bad blur sigma range");
  }
  if (!(spec.contrast_lo > 0.0 && spec.contrast_lo <= spec.contrast_hi)) {
    throw std::invalid_argument("smooth ood: bad contrast range");
  }
  const std::size_t side = image_side(source.dim());
  const int R = spec.kernel_radius;
  LabeledSet out;
  out.X = ad::Tensor::zeros({source.size(), source.dim()});
  out.origin = Origin::OutOfDistribution;

  std::vector<double> img(source.dim());
  std::vector<double> tmp(source.dim());
  std::vector<std::size_t> perm(source.dim());
  std::vector<double> kernel(static_cast<std::size_t>(2 * R + 1));

  for (std::size_t n = 0; n < source.size(); ++n) {
    Rng rng(Rng::mix(spec.seed, n));

    // 1. fresh uniform permutation of all pixels
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    for (std::size_t i = 0; i < perm.size(); ++i) img[i] = source.X.at(n, perm[i]);

    // 2. separable Gaussian blur, clamp-to-edge
    const double sigma = rng.uniform(spec.blur_sigma_lo, spec.blur_sigma_hi);
    double ksum = 0.0;
    for (int t = -R; t <= R; ++t) {
      const double w = std::exp(-0.5 * (t * t) / (sigma * sigma));
      kernel[static_cast<std::size_t>(t + R)] = w;
      ksum += w;
    }
    for (double& w : kernel) w /= ksum;
    const auto clampi = [&](long v) {
      return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(side) - 1));
    };
    for (std::size_t r = 0; r < side; ++r) {  // horizontal
      for (std::size_t c = 0; c < side; ++c) {
        double acc = 0.0;
        for (int t = -R; t <= R; ++t) {
          acc += kernel[static_cast<std::size_t>(t + R)] *
                 img[r * side + clampi(static_cast<long>(c) + t)];
        }
        tmp[r * side + c] = acc;
      }
    }
    for (std::size_t r = 0; r < side; ++r) {  // vertical
      for (std::size_t c = 0; c < side; ++c) {
        double acc = 0.0;
        for (int t = -R; t <= R; ++t) {
          acc += kernel[static_cast<std::size_t>(t + R)] *
                 tmp[clampi(static_cast<long>(r) + t) * side + c];
        }
        img[r * side + c] = acc;
      }
    }

    // 3. linear rescale to [0, kappa]
    const double kappa = rng.uniform(spec.contrast_lo, spec.contrast_hi);
    const auto [mn_it, mx_it] = std::minmax_element(img.begin(), img.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx - mn < 1e-12) {
      for (std::size_t i = 0; i < img.size(); ++i) out.X.at(n, i) = kappa / 2.0;
    } else {
      const double scale = kappa / (mx - mn);
      for (std::size_t i = 0; i < img.size(); ++i) out.X.at(n, i) = (img[i] - mn) * scale;
    }
  }
  return out;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error(std::string("idx: truncated ") + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledSet load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path.string());
  if (read_be_u32(imgs, "image magic") != 0x00000803u) {
    throw std::runtime_error("idx: wrong image magic in " + images_path.string());
  }
  const std::uint32_t count = read_be_u32(imgs, "image count");
  const std::uint32_t rows = read_be_u32(imgs, "image rows");
  const std::uint32_t cols = read_be_u32(imgs, "image cols");
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open " + labels_path.string());
  if (read_be_u32(labs, "label magic") != 0x00000801u) {
    throw std::runtime_error("idx: wrong label magic in " + labels_path.string());
  }
  const std::uint32_t lcount = read_be_u32(labs, "label count");
  if (lcount != count) throw std::runtime_error("idx: image/label count mismatch");

  LabeledSet out;
  out.X = ad::Tensor::zeros({count, dim});
  out.hard.resize(count);
  out.origin = Origin::InDistribution;
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!imgs) throw std::runtime_error("idx: truncated image data");
    for (std::size_t j = 0; j < dim; ++j) {
      out.X.values[static_cast<std::size_t>(i) * dim + j] = buf[j] / 255.0;
    }
  }
  std::vector<unsigned char> lbuf(count);
  labs.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(count));
  if (!labs) throw std::runtime_error("idx: truncated label data");
  for (std::uint32_t i = 0; i < count; ++i) out.hard[i] = lbuf[i];
  return out;
}

void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const LabeledSet& set,
               std::size_t rows, std::size_t cols) {
  if (rows * cols != set.dim()) {
    throw std::invalid_argument("idx: rows*cols must equal feature dimension");
  }
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path.string());
  write_be_u32(imgs, 0x00000803u);
  write_be_u32(imgs, static_cast<std::uint32_t>(set.size()));
  write_be_u32(imgs, static_cast<std::uint32_t>(rows));
  write_be_u32(imgs, static_cast<std::uint32_t>(cols));
  for (double v : set.X.values) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    imgs.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open " + labels_path.string());
  write_be_u32(labs, 0x00000801u);
  write_be_u32(labs, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int label = set.has_hard() ? set.hard[i] : 0;
    labs.put(static_cast<char>(static_cast<unsigned char>(label)));
  }
  if (!imgs || !labs) throw std::runtime_error("idx: write failed");
}

std::pair<LabeledSet, LabeledSet> split_validation(const LabeledSet& D, std::size_t n_val,
                                                   std::uint64_t seed) {
  if (n_val >= D.size()) {
    throw std::invalid_argument("split_validation: n_val must be < dataset size");
  }
  std::vector<std::size_t> idx(D.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::size_t> train_rows(idx.begin(),
                                      idx.begin() + static_cast<std::ptrdiff_t>(D.size() - n_val));
  std::vector<std::size_t> val_rows(idx.begin() + static_cast<std::ptrdiff_t>(D.size() - n_val),
                                    idx.end());
  return {take_rows(D, train_rows), take_rows(D, val_rows)};
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const LabeledSet& set) {
  std::ofstream os(path, std::ios::binary);  // binary: exact '\n' endings
  if (!os) throw std::runtime_error("csv: cannot open " + path.string());
  for (std::size_t j = 0; j < set.dim(); ++j) os << "x" << j << ",";
  os << "label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = 0; j < set.dim(); ++j) os << format_double(set.X.at(i, j)) << ",";
    os << (set.has_hard() ? set.hard[i] : -1) << "\n";
  }
  if (!os) throw std::runtime_error("csv: write failed");
}

LabeledSet load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
  std::size_t dim = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "label") break;
      ++dim;
    }
  }
  if (dim == 0) throw std::runtime_error("csv: no feature columns");
  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("csv: short row");
      values.push_back(std::stod(cell));
    }
    if (!std::getline(ss, cell, ',')) throw std::runtime_error("csv: missing label");
    labels.push_back(std::stoi(cell));
  }
  const std::size_t m = labels.size();
  LabeledSet out;
  out.X = ad::Tensor::matrix(m, dim, std::move(values));
  const bool unlabeled = std::all_of(labels.begin(), labels.end(), [](int v) { return v < 0; });
  if (!unlabeled) out.hard = std::move(labels);
  out.origin = unlabeled ? Origin::OutOfDistribution : Origin::InDistribution;
  return out;
}

}  // namespace bnnood
