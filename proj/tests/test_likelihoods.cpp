#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bnnood/likelihoods.hpp"
#include "bnnood/rng.hpp"
#include "bnnood/special.hpp"

using namespace bnnood;
using ad::Tensor;

namespace {

Mlp zeroed(std::vector<std::size_t> widths) {
  Mlp m = init_mlp(std::move(widths), Activation::Tanh, 0);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  return m;
}

LabeledSet hard_set(Tensor X, std::vector<int> labels) {
  LabeledSet s;
  s.X = std::move(X);
  s.hard = std::move(labels);
  return s;
}

LabeledSet soft_set(Tensor X, Tensor labels) {
  LabeledSet s;
  s.X = std::move(X);
  s.soft = std::move(labels);
  return s;
}

LabeledSet random_points(std::size_t m, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  LabeledSet s;
  s.X = Tensor::zeros({m, dim});
  for (double& v : s.X.values) v = rng.uniform(-2, 2);
  s.origin = Origin::OutOfDistribution;
  return s;
}

}  // namespace

TEST_CASE("categorical: uniform softmax baseline") {
  const Mlp m = zeroed({3, 4});
  const LabeledSet batch = hard_set(Tensor::matrix(3, 3, {1, 2, 3, 0, 0, 0, -1, 2, 0.5}),
                                    {0, 3, 2});
  CHECK(categorical_log_lik(m, m.params, batch) ==
        doctest::Approx(3 * std::log(0.25)).epsilon(1e-12));
  CHECK(categorical_log_lik(m, m.params, batch) == doctest::Approx(-4.1588831).epsilon(1e-7));
}

TEST_CASE("categorical: direct softmax evaluation and saturation") {
  // bias-only 1x2 model producing exactly the wanted logits on x = 0
  Mlp m = zeroed({1, 2});
  const Tensor X = Tensor::matrix(1, 1, {0.0});
  m.params[2] = 1.0;  // bias of class 0
  m.params[3] = 0.0;
  CHECK(categorical_log_lik(m, m.params, hard_set(X, {0})) ==
        doctest::Approx(-std::log1p(std::exp(-1.0))).epsilon(1e-12));
  m.params[2] = 50.0;
  CHECK(std::abs(categorical_log_lik(m, m.params, hard_set(X, {0}))) < 1e-20);
}

TEST_CASE("categorical rejects soft labels") {
  const Mlp m = zeroed({2, 2});
  const LabeledSet batch = soft_set(Tensor::matrix(1, 2, {0, 0}),
                                    Tensor::matrix(1, 2, {0.5, 0.5}));
  CHECK_THROWS_AS(categorical_log_lik(m, m.params, batch), std::invalid_argument);
}

TEST_CASE("none_class_transform labels OOD rows with class c") {
  LabeledSet D = hard_set(Tensor::matrix(3, 2, {0, 0, 1, 1, 2, 2}), {0, 5, 9});
  LabeledSet D_out = random_points(2, 2, 1);
  const LabeledSet joined = none_class_transform(D, D_out, 10);
  CHECK(joined.size() == 5);
  CHECK(joined.hard[0] == 0);
  CHECK(joined.hard[2] == 9);
  CHECK(joined.hard[3] == 10);
  CHECK(joined.hard[4] == 10);

  const LabeledSet only_d = none_class_transform(D, LabeledSet{}, 10);
  CHECK(only_d.size() == 3);
  CHECK(only_d.hard == D.hard);

  const LabeledSet only_out = none_class_transform(LabeledSet{}, D_out, 10);
  CHECK(only_out.size() == 2);
  CHECK(only_out.hard == std::vector<int>{10, 10});

  LabeledSet bad = random_points(2, 3, 2);
  CHECK_THROWS_AS(none_class_transform(D, bad, 10), std::invalid_argument);
}

TEST_CASE("dirichlet: hand evaluation with Gamma(1/2) = sqrt(pi)") {
  const Mlp m = zeroed({2, 2});
  const LabeledSet batch = soft_set(Tensor::matrix(1, 2, {0.4, -1.0}),
                                    Tensor::matrix(1, 2, {0.5, 0.5}));
  const double expected = -2.0 * log_gamma(0.5) - std::log(0.5);
  CHECK(dirichlet_log_lik(m, m.params, batch, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(dirichlet_log_lik(m, m.params, batch, 1.0) == doctest::Approx(-0.4515827).epsilon(1e-7));
}

TEST_CASE("dirichlet: gamma = c at uniform softmax is the uniform density Gamma(c)") {
  const Mlp m = zeroed({2, 3});
  const Tensor X = Tensor::matrix(1, 2, {3.0, -2.0});
  Rng rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    // random interior soft label
    double a = rng.uniform(0.05, 0.9);
    double b = rng.uniform(0.05, 0.95 - a);
    const LabeledSet batch = soft_set(X, Tensor::matrix(1, 3, {a, b, 1.0 - a - b}));
    CHECK(dirichlet_log_lik(m, m.params, batch, 3.0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("dirichlet: gamma = c constant in interior y within 1e-12") {
  const Mlp m = zeroed({2, 4});
  const Tensor X = Tensor::matrix(1, 2, {0.3, 0.7});
  Rng rng(12);
  double reference = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    std::vector<double> y(4);
    double total = 0.0;
    for (double& v : y) {
      v = rng.uniform(0.05, 1.0);
      total += v;
    }
    for (double& v : y) v /= total;
    const double val =
        dirichlet_log_lik(m, m.params, soft_set(X, Tensor::matrix(1, 4, std::move(y))), 4.0);
    if (rep == 0) {
      reference = val;
    } else {
      CHECK(std::abs(val - reference) < 1e-12);
    }
  }
}

TEST_CASE("dirichlet rejects boundary labels (one-hot pathology)") {
  const Mlp m = zeroed({2, 2});
  const LabeledSet batch = soft_set(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {1.0, 0.0}));
  CHECK_THROWS_AS(dirichlet_log_lik(m, m.params, batch, 2.0), std::domain_error);
}

TEST_CASE("dirichlet: logit gradient vanishes at equal logits with uniform labels") {
  // symmetry: d/dz of log Dir(u | gamma*softmax(z)) = 0 at z = const
  ad::Graph g;
  const int z = g.input(Tensor::matrix(2, 3, {0.5, 0.5, 0.5, -1, -1, -1}));
  const int term = dirichlet_term(g, z, uniform_soft_labels(2, 3), 2.7);
  g.backward(term);
  for (double v : g.grad(z)) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("replicate_ood_labels: construction order") {
  const LabeledSet D_out = random_points(2, 2, 3);
  const LabeledSet rep = replicate_ood_labels(D_out, 3);
  CHECK(rep.size() == 6);
  CHECK(rep.hard == std::vector<int>{0, 1, 2, 0, 1, 2});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(rep.X.at(k, 0) == D_out.X.at(0, 0));
    CHECK(rep.X.at(3 + k, 1) == D_out.X.at(1, 1));
  }
  CHECK(replicate_ood_labels(LabeledSet{}, 3).size() == 0);
  const LabeledSet single = replicate_ood_labels(random_points(1, 2, 4), 2);
  CHECK(single.size() == 2);
  CHECK(single.X.at(0, 0) == single.X.at(1, 0));
}

TEST_CASE("oe: uniform softmax value and tempering") {
  const Mlp m = zeroed({2, 4});
  const LabeledSet D_out = random_points(1, 2, 5);
  const double v = oe_log_lik(m, m.params, D_out);
  CHECK(v == doctest::Approx(4 * std::log(0.25)).epsilon(1e-12));
  CHECK(v == doctest::Approx(-5.5451774).epsilon(1e-7));
  CHECK(v / (4.0 * 1.0) == doctest::Approx(-1.3862944).epsilon(1e-7));
  CHECK(oe_log_lik(m, m.params, LabeledSet{}) == 0.0);
}

TEST_CASE("oe equals categorical over replicated labels, bit-exactly") {
  const Mlp m = init_mlp({2, 8, 5}, Activation::Tanh, 31);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LabeledSet D_out = random_points(7, 2, seed);
    const double oe = oe_log_lik(m, m.params, D_out);
    const double cat = categorical_log_lik(m, m.params, replicate_ood_labels(D_out, 5));
    CHECK(oe == cat);  // exact: same summation order enforced
  }
}

TEST_CASE("oe: logit gradient vanishes iff softmax is uniform") {
  ad::Graph g;
  const int z = g.input(Tensor::matrix(1, 4, {0.3, 0.3, 0.3, 0.3}));
  g.backward(oe_term(g, z));
  for (double v : g.grad(z)) CHECK(std::abs(v) < 1e-8);

  ad::Graph h;
  const int z2 = h.input(Tensor::matrix(1, 4, {1.0, 0.0, 0.0, 0.0}));
  h.backward(oe_term(h, z2));
  double norm = 0.0;
  for (double v : h.grad(z2)) norm += std::abs(v);
  CHECK(norm > 1e-3);
}

TEST_CASE("mixed: decomposition and degenerate cases") {
  const Mlp m = init_mlp({2, 6, 3}, Activation::Tanh, 8);
  const LabeledSet D = hard_set(Tensor::matrix(2, 2, {0.5, -0.5, 1.0, 1.0}), {0, 2});
  LabeledSet D_out = random_points(3, 2, 9);
  D_out.soft = uniform_soft_labels(3, 3);

  const double cat = categorical_log_lik(m, m.params, D);
  const double dir = dirichlet_log_lik(m, m.params, D_out, 3.0);
  CHECK(mixed_log_lik(m, m.params, D, D_out, 3.0) == cat + dir);  // exact by definition
  CHECK(mixed_log_lik(m, m.params, D, LabeledSet{}, 3.0) == cat);

  // m = 0 with one OOD point at equal logits reuses the dirichlet hand value
  const Mlp z = zeroed({2, 2});
  LabeledSet one = random_points(1, 2, 10);
  one.soft = uniform_soft_labels(1, 2);
  CHECK(mixed_log_lik(z, z.params, LabeledSet{}, one, 1.0) ==
        doctest::Approx(-0.4515827).epsilon(1e-7));
}

TEST_CASE("shift invariance: adding a constant to all logits changes nothing") {
  Rng rng(40);
  Tensor z = Tensor::zeros({3, 4});
  for (double& v : z.values) v = rng.uniform(-3, 3);
  Tensor z_shift = z;
  for (double& v : z_shift.values) v += 17.5;
  const std::vector<int> labels = {1, 3, 0};

  ad::Graph g1, g2;
  CHECK(std::abs(g1.scalar_value(categorical_term(g1, g1.input(z), labels)) -
                 g2.scalar_value(categorical_term(g2, g2.input(z_shift), labels))) < 1e-10);

  ad::Graph g3, g4;
  const Tensor u = uniform_soft_labels(3, 4);
  CHECK(std::abs(g3.scalar_value(dirichlet_term(g3, g3.input(z), u, 4.0)) -
                 g4.scalar_value(dirichlet_term(g4, g4.input(z_shift), u, 4.0))) < 1e-10);

  ad::Graph g5, g6;
  CHECK(std::abs(g5.scalar_value(oe_term(g5, g5.input(z))) -
                 g6.scalar_value(oe_term(g6, g6.input(z_shift)))) < 1e-10);
}

namespace {

LikelihoodSpec spec_for(LikelihoodVariant v) {
  LikelihoodSpec s;
  s.variant = v;
  return s;
}

// FD harness: objective and gradient as a function of the flat parameters.
double joint_fd_error(LikelihoodVariant variant, std::uint64_t seed) {
  Rng rng(seed);
  Mlp model = init_mlp({2, 6, 3}, Activation::Tanh, seed);
  if (variant == LikelihoodVariant::NoneClass) model = expand_none_class(model, seed);
  LabeledSet D = hard_set(Tensor::zeros({5, 2}), {});
  for (double& v : D.X.values) v = rng.uniform(-2, 2);
  D.hard.resize(5);
  for (int& y : D.hard) y = static_cast<int>(rng.below(3));
  const LabeledSet D_out = random_points(4, 2, seed + 1000);
  const LikelihoodSpec spec = spec_for(variant);

  JointBatch batch;
  batch.in_set = &D;
  batch.out_set = &D_out;
  const ad::DiffFn f = [&](const std::vector<double>& theta) {
    return joint_objective_grad(spec, model, theta, batch, 1e-2);
  };
  return ad::grad_check(f, model.params, 1e-5);
}

}  // namespace

TEST_CASE("joint objective: finite differences across all five variants") {
  for (const LikelihoodVariant v :
       {LikelihoodVariant::Categorical, LikelihoodVariant::NoneClass, LikelihoodVariant::SoftLabel,
        LikelihoodVariant::MixedLabel, LikelihoodVariant::OeLikelihood}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CHECK(joint_fd_error(v, seed) < 1e-4);
    }
  }
}

TEST_CASE("joint objective: categorical with zero prior equals the bare likelihood") {
  const Mlp m = init_mlp({2, 5, 3}, Activation::Tanh, 2);
  LabeledSet D = hard_set(Tensor::matrix(4, 2, {0, 0, 1, -1, 0.5, 2, -2, 0.25}), {0, 1, 2, 1});
  const LikelihoodSpec spec = spec_for(LikelihoodVariant::Categorical);
  CHECK(joint_objective(spec, m, m.params, D, nullptr, 0.0) ==
        categorical_log_lik(m, m.params, D));
}

TEST_CASE("joint objective: zero parameters contribute zero log-prior") {
  const Mlp m = zeroed({2, 3});
  LabeledSet D = hard_set(Tensor::matrix(2, 2, {1, 1, -1, -1}), {0, 2});
  const LikelihoodSpec spec = spec_for(LikelihoodVariant::Categorical);
  CHECK(joint_objective(spec, m, m.params, D, nullptr, 10.0) ==
        doctest::Approx(categorical_log_lik(m, m.params, D)).epsilon(1e-15));
}

TEST_CASE("joint objective equals the sum of its components") {
  const Mlp base = init_mlp({2, 5, 3}, Activation::Tanh, 21);
  Rng rng(22);
  LabeledSet D = hard_set(Tensor::zeros({6, 2}), {});
  for (double& v : D.X.values) v = rng.uniform(-2, 2);
  D.hard = {0, 1, 2, 0, 1, 2};
  LabeledSet D_out = random_points(4, 2, 23);
  const double lambda = 0.05;

  const auto prior = [&](const Mlp& m) {
    double sq = 0.0;
    for (double v : m.params) sq += v * v;
    return -0.5 * lambda * sq;
  };

  SUBCASE("mixed label") {
    LikelihoodSpec spec = spec_for(LikelihoodVariant::MixedLabel);
    LabeledSet D_out_soft = D_out;
    D_out_soft.soft = uniform_soft_labels(4, 3);
    const double joint = joint_objective(spec, base, base.params, D, &D_out, lambda);
    const double parts = categorical_log_lik(base, base.params, D) +
                         dirichlet_log_lik(base, base.params, D_out_soft, 3.0) + prior(base);
    CHECK(joint == doctest::Approx(parts).epsilon(1e-12));
  }
  SUBCASE("oe likelihood, tempered") {
    LikelihoodSpec spec = spec_for(LikelihoodVariant::OeLikelihood);
    const double joint = joint_objective(spec, base, base.params, D, &D_out, lambda);
    const double parts = categorical_log_lik(base, base.params, D) +
                         oe_log_lik(base, base.params, D_out) / (3.0 * 4.0) + prior(base);
    CHECK(joint == doctest::Approx(parts).epsilon(1e-12));
  }
  SUBCASE("none class") {
    const Mlp expanded = expand_none_class(base, 7);
    LikelihoodSpec spec = spec_for(LikelihoodVariant::NoneClass);
    const double joint = joint_objective(spec, expanded, expanded.params, D, &D_out, lambda);
    const double parts =
        categorical_log_lik(expanded, expanded.params, none_class_transform(D, D_out, 3)) +
        prior(expanded);
    CHECK(joint == doctest::Approx(parts).epsilon(1e-12));
  }
  SUBCASE("soft label") {
    LikelihoodSpec spec = spec_for(LikelihoodVariant::SoftLabel);
    LabeledSet D_soft = D;
    D_soft.soft = smooth_one_hot(D.hard, 3, spec.label_smoothing);
    D_soft.hard.clear();
    LabeledSet D_out_soft = D_out;
    D_out_soft.soft = uniform_soft_labels(4, 3);
    const double joint = joint_objective(spec, base, base.params, D, &D_out, lambda);
    const double parts = dirichlet_log_lik(base, base.params, D_soft, 3.0) +
                         dirichlet_log_lik(base, base.params, D_out_soft, 3.0) + prior(base);
    CHECK(joint == doctest::Approx(parts).epsilon(1e-12));
  }
}

TEST_CASE("joint objective: missing OOD set for OOD variants is an error") {
  const Mlp m = init_mlp({2, 4, 3}, Activation::Tanh, 0);
  LabeledSet D = hard_set(Tensor::matrix(1, 2, {0, 0}), {1});
  CHECK_THROWS_AS(
      joint_objective(spec_for(LikelihoodVariant::MixedLabel), m, m.params, D, nullptr, 0.0),
      std::invalid_argument);
}
