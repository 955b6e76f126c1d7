#include "fedrr/engine.hpp"

#include <cmath>
#include <string>

#include "fedrr/errors.hpp"

namespace fedrr {

void validate(const RunConfig& cfg, const FederatedProblem& problem) {
  if (!(cfg.cstep > 0.0) || !std::isfinite(cfg.cstep)) {
    throw InputError("RunConfig: client stepsize must be > 0");
  }
  if (!(cfg.sstep >= 0.0) || !std::isfinite(cfg.sstep)) {
    throw InputError("RunConfig: server stepsize must be >= 0");
  }
  if (cfg.cohort < 1 || cfg.cohort > problem.num_clients()) {
    throw InputError("RunConfig: cohort size " + std::to_string(cfg.cohort) +
                     " outside [1, " + std::to_string(problem.num_clients()) +
                     "]");
  }
  if (cfg.horizon < 1) throw InputError("RunConfig: horizon must be >= 1");
  if (cfg.x0.size() != problem.dim()) {
    throw InputError("RunConfig: x0 has dimension " +
                     std::to_string(cfg.x0.size()) + ", problem has " +
                     std::to_string(problem.dim()));
  }
  require_finite(cfg.x0, "RunConfig x0");
}

LocalPass local_pass(const ClientDataset& client, const Vector& x_t,
                     double gamma, std::span<const int> order) {
  const int n = client.size();
  if (static_cast<int>(order.size()) != n) {
    throw InputError("local_pass: order length does not match client size");
  }
  LocalPass out;
  out.x_end = x_t;
  Vector grad_sum = Vector::Zero(x_t.size());
  Vector g;
  for (int idx : order) {
    client.samples.at(idx)->gradient_into(out.x_end, g);
    grad_sum += g;
    out.x_end -= gamma * g;
    ++out.grad_evals;
  }
  // Accumulated form rather than (x_t - x_end) / (gamma n): the two agree in
  // exact arithmetic, and this one reduces to grad f(x_t) bitwise for n = 1.
  out.g = grad_sum / static_cast<double>(n);
  out.diverged = !out.x_end.allFinite() || !out.g.allFinite();
  return out;
}

LocalPass local_pass_rr(const ClientDataset& client, const Vector& x_t,
                        double gamma, const Permutation& pi) {
  if (!(gamma > 0.0)) throw InputError("local_pass_rr: gamma must be > 0");
  if (static_cast<int>(pi.size()) != client.size() || !pi.is_valid()) {
    throw InputError("local_pass_rr: invalid permutation for client");
  }
  return local_pass(client, x_t, gamma, pi.order);
}

namespace {

std::vector<int> iid_indices(std::uint64_t seed, int t, int m, int n) {
  RngStream rng = derive_stream(seed, t, m, StreamPurpose::LocalIndex);
  std::vector<int> idx(n);
  for (auto& i : idx) i = static_cast<int>(rng.uniform_below(n));
  return idx;
}

RoundTrace state_trace(const FederatedProblem& problem, const Vector& x,
                       int t) {
  RoundTrace tr;
  tr.round = t;
  tr.f_val = problem.value(x);
  tr.grad_norm_sq = problem.gradient(x).squaredNorm();
  if (problem.x_star()) tr.dist_sq = (x - *problem.x_star()).squaredNorm();
  return tr;
}

bool trace_finite(const RoundTrace& tr) {
  return std::isfinite(tr.f_val) && std::isfinite(tr.grad_norm_sq) &&
         (!tr.dist_sq || std::isfinite(*tr.dist_sq));
}

}  // namespace

RoundOutcome nastya_round(const FederatedProblem& problem, const Vector& x_t,
                          const RunConfig& cfg, int t,
                          LocalSampling sampling) {
  const int n = problem.samples_per_client();
  RngStream cohort_rng =
      derive_stream(cfg.seed, t, std::nullopt, StreamPurpose::Cohort);
  RoundOutcome out;
  out.cohort = sample_cohort(problem.num_clients(), cfg.cohort, cohort_rng);
  out.g = Vector::Zero(x_t.size());
  out.x_ends.reserve(out.cohort.size());

  for (int m : out.cohort.members) {
    LocalPass pass;
    if (sampling == LocalSampling::WithoutReplacement) {
      const Permutation pi = client_permutation(cfg.seed, cfg.mode, t, m, n);
      pass = local_pass(problem.client(m), x_t, cfg.cstep, pi.order);
    } else {
      const std::vector<int> idx = iid_indices(cfg.seed, t, m, n);
      pass = local_pass(problem.client(m), x_t, cfg.cstep, idx);
    }
    out.grad_evals += pass.grad_evals;
    out.diverged = out.diverged || pass.diverged;
    out.g += pass.g;
    out.x_ends.push_back(std::move(pass.x_end));
  }
  out.g /= static_cast<double>(out.cohort.size());
  out.x_next = x_t - cfg.sstep * out.g;
  out.diverged = out.diverged || !out.x_next.allFinite();
  return out;
}

Vector extrapolation_update(const Vector& x_t, std::span<const Vector> x_ends,
                            double beta) {
  if (x_ends.empty()) throw InputError("extrapolation_update: no endpoints");
  Vector acc = Vector::Zero(x_t.size());
  for (const auto& x_end : x_ends) acc += x_end + beta * (x_end - x_t);
  return acc / static_cast<double>(x_ends.size());
}

Vector interpolation_update(const Vector& x_t, std::span<const Vector> x_ends,
                            double alpha) {
  if (x_ends.empty()) throw InputError("interpolation_update: no endpoints");
  if (!(alpha >= 0.0)) throw InputError("interpolation_update: alpha must be >= 0");
  Vector avg = Vector::Zero(x_t.size());
  for (const auto& x_end : x_ends) avg += x_end;
  avg /= static_cast<double>(x_ends.size());
  return (1.0 - alpha) * x_t + alpha * avg;
}

namespace {

RunResult run_federated(const FederatedProblem& problem, const RunConfig& cfg,
                        const RunOptions& opts, LocalSampling sampling) {
  validate(cfg, problem);
  RunResult result;
  result.traces.reserve(cfg.horizon + 1);
  Vector x = cfg.x0;
  if (opts.record_iterates) result.iterates.push_back(x);

  for (int t = 0; t < cfg.horizon; ++t) {
    RoundTrace tr = state_trace(problem, x, t);
    RoundOutcome round = nastya_round(problem, x, cfg, t, sampling);
    result.grad_evals += round.grad_evals;
    tr.g_norm_sq = round.g.squaredNorm();
    tr.cohort = std::move(round.cohort);
    if (!trace_finite(tr) || !std::isfinite(tr.g_norm_sq)) {
      result.diverged = true;
      result.diverged_round = t;
      result.x_final = x;
      return result;
    }
    result.traces.push_back(std::move(tr));
    if (round.diverged) {
      result.diverged = true;
      result.diverged_round = t + 1;
      result.x_final = x;
      return result;
    }
    x = std::move(round.x_next);
    if (opts.record_iterates) result.iterates.push_back(x);
  }
  RoundTrace last = state_trace(problem, x, cfg.horizon);
  if (!trace_finite(last)) {
    result.diverged = true;
    result.diverged_round = cfg.horizon;
  } else {
    result.traces.push_back(std::move(last));
  }
  result.x_final = std::move(x);
  return result;
}

}  // namespace

RunResult run_nastya(const FederatedProblem& problem, const RunConfig& cfg,
                     const RunOptions& opts) {
  return run_federated(problem, cfg, opts, LocalSampling::WithoutReplacement);
}

RunResult run_local_sgd_wr(const FederatedProblem& problem,
                           const RunConfig& cfg, const RunOptions& opts) {
  return run_federated(problem, cfg, opts, LocalSampling::WithReplacement);
}

RunResult run_gd(const FederatedProblem& problem, double step, int T,
                 const Vector& x0, const RunOptions& opts) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw InputError("run_gd: step must be > 0");
  }
  if (T < 1) throw InputError("run_gd: T must be >= 1");
  if (x0.size() != problem.dim()) throw InputError("run_gd: x0 dimension");
  require_finite(x0, "run_gd x0");

  RunResult result;
  result.traces.reserve(T + 1);
  Vector x = x0;
  if (opts.record_iterates) result.iterates.push_back(x);
  for (int t = 0; t < T; ++t) {
    RoundTrace tr;
    tr.round = t;
    tr.f_val = problem.value(x);
    const Vector g = problem.gradient(x);
    tr.grad_norm_sq = g.squaredNorm();
    tr.g_norm_sq = tr.grad_norm_sq;
    if (problem.x_star()) tr.dist_sq = (x - *problem.x_star()).squaredNorm();
    if (!trace_finite(tr)) {
      result.diverged = true;
      result.diverged_round = t;
      result.x_final = x;
      return result;
    }
    result.traces.push_back(std::move(tr));
    Vector next = x - step * g;
    if (!next.allFinite()) {
      result.diverged = true;
      result.diverged_round = t + 1;
      result.x_final = x;
      return result;
    }
    x = std::move(next);
    if (opts.record_iterates) result.iterates.push_back(x);
  }
  RoundTrace last = state_trace(problem, x, T);
  if (!trace_finite(last)) {
    result.diverged = true;
    result.diverged_round = T;
  } else {
    result.traces.push_back(std::move(last));
  }
  result.x_final = std::move(x);
  return result;
}

}  // namespace fedrr
