#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "bnnood/autodiff.hpp"

namespace bnnood {

enum class Origin : std::uint8_t { InDistribution = 0, OutOfDistribution = 1 };

// Feature matrix with either hard integer labels, soft probability-vector
// labels, or no labels (typical for OOD training pools).
struct LabeledSet {
  ad::Tensor X;            // m x n
  std::vector<int> hard;   // length m, or empty
  ad::Tensor soft;         // m x c, or empty
  Origin origin = Origin::InDistribution;

  std::size_t size() const { return X.values.empty() ? 0 : X.rows(); }
  std::size_t dim() const { return X.values.empty() && X.shape.size() < 2 ? 0 : X.cols(); }
  bool has_hard() const { return !hard.empty(); }
  bool has_soft() const { return soft.size() > 0; }
  void validate() const;
};

LabeledSet concat(const LabeledSet& a, const LabeledSet& b);
LabeledSet take_rows(const LabeledSet& s, const std::vector<std::size_t>& rows);

struct ToyGaussiansSpec {
  std::vector<std::array<double, 2>> means = {{{-2, -2}, {-2, 2}, {2, -2}, {2, 2}}};
  double stddev = 0.35;
  std::size_t n_per_class = 100;
  std::uint64_t seed = 0;
};
LabeledSet gen_toy_gaussians(const ToyGaussiansSpec& spec);

// m_out i.i.d. uniform points in [low, high]^dim, unlabeled, out-of-distribution.
LabeledSet gen_uniform_ood(double low, double high, std::size_t dim, std::size_t m_out,
                           std::uint64_t seed);

// Uniform over the 2-D annulus r in [r_lo, r_hi] (by area), unlabeled.
LabeledSet gen_ring_ood(double r_lo, double r_hi, std::size_t m_out, std::uint64_t seed);

struct SmoothNoiseSpec {
  double blur_sigma_lo = 1.0;
  double blur_sigma_hi = 2.5;
  double contrast_lo = 0.3;
  double contrast_hi = 1.0;
  int kernel_radius = 2;
  std::uint64_t seed = 0;
};
// Per square image: permute all pixels, Gaussian-blur (sigma ~ U, clamp-to-edge),
// rescale linearly to [0, kappa] with kappa ~ U(contrast range); a constant
// image maps to the constant kappa/2.
LabeledSet gen_smooth_ood(const LabeledSet& source, const SmoothNoiseSpec& spec);

// IDX format (big-endian): images magic 0x00000803 with count/rows/cols and
// u8 pixels, labels magic 0x00000801 with count and u8 labels. Pixels are
// scaled to [0,1] by /255 on load.
LabeledSet load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const LabeledSet& set,
               std::size_t rows, std::size_t cols);

std::pair<LabeledSet, LabeledSet> split_validation(const LabeledSet& D, std::size_t n_val,
                                                   std::uint64_t seed);

// CSV with header row x0..x{n-1},label ('.' decimal, '\n' endings).
void write_csv(const std::filesystem::path& path, const LabeledSet& set);
LabeledSet load_csv(const std::filesystem::path& path);

}  // namespace bnnood
