#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedrr/engine.hpp"
#include "fedrr/problems.hpp"

namespace fedrr {

/// Heterogeneity measures at the optimum.
struct HeterogeneityStats {
  int M = 0;
  int n = 0;
  /// (1/M) sum_m ||grad f_m(x*)||^2
  double sigma_star_sq = 0.0;
  /// (1/n) sum_i ||grad f^i_m(x*)||^2, per client
  std::vector<double> sigma_star_m_sq;
  /// ||grad f_m(x*)||^2, per client
  std::vector<double> client_grad_norm_sq;
  /// (1/M) sum_m sigma_star_m_sq + n sigma_star_sq
  double Sigma_star_sq = 0.0;

  // Functional dissimilarity; present only when every sample infimum is known.
  std::optional<double> delta_star;               ///< f* - (1/M) sum_m f_{*,m}
  std::optional<std::vector<double>> delta_star_m;  ///< f* - (1/n) sum_i f^i_{*,m}
  std::optional<double> D_star_sq;  ///< (1/M) sum_m delta_star_m + n delta_star
  /// One-sided uncertainty of the delta fields from estimated infima.
  double delta_uncertainty = 0.0;
};

struct StatsOptions {
  /// Descent oracle used for client infima f_{*,m} without a closed form.
  FStarOptions client_oracle{};
  /// Whether to compute the delta fields at all.
  bool functional = true;
};

/// Throws CapabilityError naming `x_star` or `f_star` when absent.
HeterogeneityStats heterogeneity_stats(const FederatedProblem& problem,
                                       const std::optional<Vector>& x_star,
                                       const std::optional<double>& f_star,
                                       const StatsOptions& opts = {});

/// Uses the optimum stored on `problem`.
HeterogeneityStats heterogeneity_stats(const FederatedProblem& problem,
                                       const StatsOptions& opts = {});

/// (M - C) / (C max{M - 1, 1}): multiplier of the client-sampling variance.
double participation_factor(int M, int C);

enum class BoundKind { SC, CVX, NCVX, SmallAlpha };

const char* to_string(BoundKind kind);
/// Parses "sc", "cvx", "ncvx", "small_alpha"; throws InputError otherwise.
BoundKind parse_bound_kind(const std::string& name);

/// Per-round bound values with their additive parts.
struct BoundCurve {
  BoundKind theorem = BoundKind::SC;
  std::vector<double> values;
  std::vector<double> contraction;
  std::vector<double> client_variance;
  std::vector<double> participation;
};

/// A single bound value with its additive parts.
struct BoundValue {
  double total = 0.0;
  double contraction = 0.0;
  double client_variance = 0.0;
  double participation = 0.0;
};

/// Strongly convex bound on E||x_T - x*||^2 for T = 0..cfg.horizon:
///   (1 - sstep mu / 2)^T dist0_sq
///   + (5 cstep^2 n L / mu) Sigma*^2
///   + (8 sstep / mu) pf sigma*^2
/// Requires cstep n <= sstep <= 1/(16L) and mu > 0; throws RegimeError.
///
/// The proof's restatement ends with (8 sstep / mu) sum_m ||grad f_m(x*)||^2
/// (no 1/M, no participation factor); the headline form above is used.
BoundCurve bound_sc(const HeterogeneityStats& stats, double mu, double L,
                    const RunConfig& cfg, double dist0_sq);

/// Convex bound on E[f(xhat_T) - f*], xhat_T the mean of x_1..x_T,
/// T = cfg.horizon:
///   5 dist0_sq / (2 sstep T) + 7 cstep^2 n L Sigma*^2 + 10 sstep pf sigma*^2
/// Same regime as bound_sc (without the mu condition).
BoundValue bound_cvx(const HeterogeneityStats& stats, double L,
                     const RunConfig& cfg, double dist0_sq);

/// Nonconvex bound on min_{t<T} E||grad f(x_t)||^2:
///   4 (1 + 2 L^2 sstep^2 pf + 1.5 sstep cstep^2 n^2 L^3)^T delta0 / (sstep T)
///   + 6 cstep^2 n L^3 D*^2 + 8 L^2 sstep pf Delta*
/// Requires cstep <= 1/(2nL) and sstep <= 1/(4L).
///
/// The summary table states the base as 1 + 4 sstep cstep^2 n^2 L^3 with
/// sstep <= 1/L; this evaluator follows the proved restatement. The proof's
/// shorthand 2 L^2 sstep^2 / C is read as 2 L^2 sstep^2 pf.
BoundValue bound_ncvx(const HeterogeneityStats& stats, double L,
                      const RunConfig& cfg, double delta0, int T);

/// Small-server-stepsize bound on E||x_T - x*||^2, alpha = sstep/(cstep n):
///   (1 - alpha + alpha q)^T dist0_sq
///   + alpha / ((1 - alpha)(1 - q)) cstep^2 pf sigma*^2
///   + 2 cstep^3 sigma_rad^2 (sum_{i<n} (1 - cstep mu)^i) / (1 - q)
/// with q = (1 - cstep mu)^n. Requires cstep <= 1/L, 0 <= alpha < 1, mu > 0.
BoundCurve bound_small_alpha(const HeterogeneityStats& stats, double mu,
                             double L, const RunConfig& cfg, double dist0_sq,
                             double sigma_rad_sq);

/// L sum_m (n^2 ||grad f_m(x*)||^2 + (n/4) sigma*_m^2), an admissible value
/// of the reshuffling variance constant in bound_small_alpha.
double sigma_rad_upper_bound(const HeterogeneityStats& stats, double L, int n,
                             int M);

enum class StepsizeRegime { SC, CVX, NCVX, SmallAlpha };

struct StepsizeSuggestion {
  double cstep = 0.0;
  double sstep = 0.0;
  double alpha = 0.0;
  std::string governing;  ///< the inequality the suggestion sits on
  std::string note;       ///< empty unless a degenerate case applies
};

/// Stepsizes at the edge of each bound's admissible range. SmallAlpha
/// uses cstep = 1/L and alpha = n eps C / (cstep sigma*^2) clipped to
/// (0, 1/2]; without client-sampling noise it returns the alpha = 1 limit
/// with a note.
StepsizeSuggestion recommended_stepsizes(StepsizeRegime regime, double L,
                                         double mu, int n, int C, int M,
                                         double epsilon, double sigma_star_sq);

struct RegimeCheck {
  BoundKind theorem = BoundKind::SC;
  bool satisfied = false;
  std::string violated;  ///< "; "-joined violated inequalities
};

/// Which bounds apply to `cfg`. Never throws.
std::vector<RegimeCheck> check_stepsizes(const RunConfig& cfg, double L,
                                         double mu, int n);

}  // namespace fedrr
