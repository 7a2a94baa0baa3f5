#include "bnnood/special.hpp"

#include <cmath>
#include <stdexcept>

namespace bnnood {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfLogTwoPi = 0.91893853320467274178;  // log(2*pi)/2

// Lanczos g = 7, 9 coefficients.
constexpr double kLanczos[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

// log Gamma(z + 1) for z >= -0.5 (i.e. argument >= 0.5).
double lanczos_main(double z) {
  double series = kLanczos[0];
  for (int i = 1; i < 9; ++i) {
    series += kLanczos[i] / (z + i);
  }
  const double t = z + 7.5;
  return kHalfLogTwoPi + (z + 0.5) * std::log(t) - t + std::log(series);
}

// d/dz of lanczos_main.
double lanczos_main_deriv(double z) {
  double series = kLanczos[0];
  double dseries = 0.0;
  for (int i = 1; i < 9; ++i) {
    const double denom = z + i;
    series += kLanczos[i] / denom;
    dseries -= kLanczos[i] / (denom * denom);
  }
  const double t = z + 7.5;
  return std::log(t) + (z + 0.5) / t - 1.0 + dseries / series;
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("log_gamma: argument must be positive");
  }
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
    return std::log(kPi / std::sin(kPi * x)) - lanczos_main(-x);  // = lgamma(1-x) with z = -x
  }
  return lanczos_main(x - 1.0);
}

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("digamma: argument must be positive");
  }
  if (x < 0.5) {
    return lanczos_main_deriv(-x) - kPi / std::tan(kPi * x);
  }
  return lanczos_main_deriv(x - 1.0);
}

}  // namespace bnnood
