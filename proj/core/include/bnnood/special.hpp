#pragma once

namespace bnnood {

// log Gamma(x) for x > 0 via the Lanczos approximation (g = 7, 9 coefficients).
// Self-contained on purpose: the Dirichlet likelihood must not depend on
// platform libm behavior. Absolute error < 1e-10 on [0.1, 50].
double log_gamma(double x);

// d/dx log Gamma(x), differentiated from the same Lanczos expression so that
// analytic gradients match the forward value to machine precision.
double digamma(double x);

}  // namespace bnnood
