#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedrr/problems.hpp"
#include "fedrr/sampling.hpp"

namespace fedrr {

/// Inputs of one run of the federated method.
struct RunConfig {
  double cstep = 0.0;  ///< client stepsize, > 0
  double sstep = 0.0;  ///< server stepsize, >= 0
  int cohort = 1;      ///< clients per round, 1 <= cohort <= M
  int horizon = 1;     ///< rounds T, >= 1
  ShuffleMode mode = ShuffleMode::RandomReshuffling;
  std::uint64_t seed = 0;
  Vector x0;
};

/// Throws InputError if `cfg` is not usable on `problem`.
void validate(const RunConfig& cfg, const FederatedProblem& problem);

/// State of round t, recorded before the round's update is applied.
struct RoundTrace {
  int round = 0;
  double f_val = 0.0;
  double grad_norm_sq = 0.0;
  std::optional<double> dist_sq;
  /// ||g_t||^2 of the direction applied in this round; 0 for the terminal
  /// record, which has no outgoing update.
  double g_norm_sq = 0.0;
  CohortSample cohort;
};

struct RunResult {
  std::vector<RoundTrace> traces;  ///< T + 1 records unless diverged
  Vector x_final;
  bool diverged = false;
  std::optional<int> diverged_round;
  long long grad_evals = 0;  ///< sample-gradient evaluations by clients
  /// x_0 .. x_T when requested through RunOptions.
  std::vector<Vector> iterates;
};

struct RunOptions {
  bool record_iterates = false;
};

/// Result of one client's local pass.
struct LocalPass {
  Vector x_end;
  /// Average of the gradients taken along the pass,
  /// (1/n) sum_i grad f^{pi_i}(x^i) = (x_t - x_end) / (gamma n).
  Vector g;
  int grad_evals = 0;
  bool diverged = false;
};

/// n sequential incremental steps over `client` in the order `order`
/// (any index sequence of length n, not necessarily a permutation).
LocalPass local_pass(const ClientDataset& client, const Vector& x_t,
                     double gamma, std::span<const int> order);

/// local_pass over a permutation; throws InputError if `pi` is not a valid
/// permutation of the client's n samples or gamma <= 0.
LocalPass local_pass_rr(const ClientDataset& client, const Vector& x_t,
                        double gamma, const Permutation& pi);

/// Everything produced by one server round.
struct RoundOutcome {
  Vector x_next;
  Vector g;                    ///< aggregated direction g_t
  CohortSample cohort;
  std::vector<Vector> x_ends;  ///< local endpoints, cohort order
  long long grad_evals = 0;
  bool diverged = false;
};

/// How client passes choose their sample order.
enum class LocalSampling { WithoutReplacement, WithReplacement };

/// One round: cohort from stream (seed, t, Cohort), per-client orders per
/// cfg.mode (or i.i.d. indices), g_t = mean of client directions in
/// ascending client order, x_next = x_t - sstep * g_t.
RoundOutcome nastya_round(const FederatedProblem& problem, const Vector& x_t,
                          const RunConfig& cfg, int t,
                          LocalSampling sampling = LocalSampling::WithoutReplacement);

/// (1/C) sum_m (x_end_m + beta (x_end_m - x_t))
Vector extrapolation_update(const Vector& x_t, std::span<const Vector> x_ends,
                            double beta);

/// (1 - alpha) x_t + alpha (1/C) sum_m x_end_m
Vector interpolation_update(const Vector& x_t, std::span<const Vector> x_ends,
                            double alpha);

/// T rounds of nastya_round with trace[0] at x0. A non-finite iterate stops
/// the run with `diverged` set; traces end at the last finite state.
RunResult run_nastya(const FederatedProblem& problem, const RunConfig& cfg,
                     const RunOptions& opts = {});

/// Same as run_nastya except local indices are drawn i.i.d. uniformly
/// (n draws per round) from stream (seed, t, m, LocalIndex).
RunResult run_local_sgd_wr(const FederatedProblem& problem,
                           const RunConfig& cfg, const RunOptions& opts = {});

/// Full-gradient descent x_{t+1} = x_t - step grad f(x_t).
RunResult run_gd(const FederatedProblem& problem, double step, int T,
                 const Vector& x0, const RunOptions& opts = {});

}  // namespace fedrr
