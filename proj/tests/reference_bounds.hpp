#pragma once

// Plain re-statements of the bound formulas from raw scalars, used to
// cross-check the library evaluators.

#include <cmath>

namespace reference {

inline double pf(int M, int C) {
  const double denom = C * (M > 1 ? M - 1 : 1);
  return (M - C) / denom;
}

inline double sc(double d0, int T, double g, double gs, int n, double L,
                 double mu, int M, int C, double Sigma2, double sigma2) {
  return std::pow(1.0 - gs * mu / 2.0, T) * d0 + 5.0 * g * g * n * L * Sigma2 / mu +
         8.0 * gs * pf(M, C) * sigma2 / mu;
}

inline double cvx(double d0, int T, double g, double gs, int n, double L, int M,
                  int C, double Sigma2, double sigma2) {
  return 5.0 * d0 / (2.0 * gs * T) + 7.0 * g * g * n * L * Sigma2 +
         10.0 * gs * pf(M, C) * sigma2;
}

inline double ncvx(double delta0, int T, double g, double gs, int n, double L,
                   int M, int C, double D2, double Delta) {
  const double p = pf(M, C);
  const double base = 1.0 + 2.0 * L * L * gs * gs * p +
                      1.5 * gs * g * g * n * n * L * L * L;
  return 4.0 * std::pow(base, T) * delta0 / (gs * T) +
         6.0 * g * g * n * L * L * L * D2 + 8.0 * L * L * gs * p * Delta;
}

inline double small_alpha(double d0, int T, double g, double alpha, int n,
                          double mu, int M, int C, double sigma2, double rad2) {
  const double q = std::pow(1.0 - g * mu, n);
  double geo = 0.0;
  for (int i = n - 1; i >= 0; --i) geo += std::pow(1.0 - g * mu, i);
  return std::pow(1.0 - alpha + alpha * q, T) * d0 +
         alpha * g * g * pf(M, C) * sigma2 / ((1.0 - alpha) * (1.0 - q)) +
         2.0 * g * g * g * rad2 * geo / (1.0 - q);
}

}  // namespace reference
