#include "fedrr/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedrr/engine.hpp"
#include "fedrr/errors.hpp"
#include "fedrr/experiment.hpp"
#include "fedrr/libsvm.hpp"
#include "fedrr/problems.hpp"
#include "fedrr/sampling.hpp"
#include "fedrr/theory.hpp"

namespace fedrr {

namespace {

constexpr std::uint64_t kVerifySeed = 20240611;

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

// Runs `body`; a run longer than `limit` seconds fails the check.
CheckResult timed(const std::string& name,
                  const std::function<void(CheckResult&)>& body,
                  double limit = 0.0) {
  CheckResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            start)
                  .count();
  if (limit > 0.0 && r.seconds > limit) {
    r.passed = false;
    r.detail += fmt("; took %.2f s, limit %.0f s", r.seconds, limit);
  }
  return r;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / xs.size();
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (xs.size() - 1)) / std::sqrt(double(xs.size()));
  return out;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

double scale_of(const Vector& x) {
  return std::max(1.0, x.cwiseAbs().maxCoeff());
}

RunConfig config(double cstep, double sstep, int cohort, int T,
                 std::uint64_t seed, Vector x0) {
  RunConfig cfg;
  cfg.cstep = cstep;
  cfg.sstep = sstep;
  cfg.cohort = cohort;
  cfg.horizon = T;
  cfg.seed = seed;
  cfg.x0 = std::move(x0);
  return cfg;
}

FederatedProblem random_logreg(int M, int n, int d, double lambda,
                               double noise, std::uint64_t seed) {
  return make_logreg_problem(
      synthetic_classification_rows(M * n, d, noise, seed), M, lambda, seed);
}

FStarOptions tight_reference() {
  FStarOptions o;
  o.restarts = 1;
  o.tol = 1e-11;
  o.max_iters = 2000000;
  return o;
}

}  // namespace

CheckResult check_lemma1() {
  return timed("lemma1", [](CheckResult& r) {
    constexpr int kCases = 200;
    double worst_rel = 0.0, worst_mean = 0.0;
    int failed = 0, comparisons = 0;
    for (int c = 0; c < kCases; ++c) {
      RngStream rng = derive_stream(kVerifySeed, c, std::nullopt,
                                    StreamPurpose::Problem);
      const int n = 2 + static_cast<int>(rng.uniform_below(6));
      const int d = 1 + static_cast<int>(rng.uniform_below(3));
      const double scale = std::exp(4.0 * rng.uniform01() - 2.0);
      std::vector<Vector> xs(n, Vector(d));
      for (auto& x : xs) {
        for (int j = 0; j < d; ++j) x[j] = scale * rng.normal() + rng.normal();
      }
      Vector mean = Vector::Zero(d);
      for (const auto& x : xs) mean += x;
      mean /= n;
      const double sigma_sq = population_variance(xs);
      for (int k = 1; k <= n; ++k) {
        const SwrMoments m = swr_moments_oracle(xs, k);
        const double want = swr_formula(sigma_sq, n, k);
        const double rel = std::abs(m.variance - want) /
                           std::max(std::abs(want), 1e-300);
        const bool var_ok = k == n ? std::abs(m.variance) <= 1e-12 * sigma_sq
                                   : rel <= 1e-10;
        const double mean_err = (m.mean - mean).cwiseAbs().maxCoeff();
        if (k < n) worst_rel = std::max(worst_rel, rel);
        worst_mean = std::max(worst_mean, mean_err);
        ++comparisons;
        if (!var_ok || mean_err > 1e-12) ++failed;
      }
    }
    r.detail = fmt("%d cases, %d (case,k) pairs, %d failed; max rel var err "
                   "%.3g, max mean err %.3g",
                   kCases, comparisons, failed, worst_rel, worst_mean);
    r.passed = failed == 0;
  }, 5.0);
}

CheckResult check_equivalence() {
  return timed("equivalence", [](CheckResult& r) {
    constexpr int kInstances = 50;
    double worst = 0.0;
    int failed = 0;
    for (int c = 0; c < kInstances; ++c) {
      RngStream rng = derive_stream(kVerifySeed + 1, c, std::nullopt,
                                    StreamPurpose::Problem);
      const int M = 2 + static_cast<int>(rng.uniform_below(5));
      const int n = 1 + static_cast<int>(rng.uniform_below(6));
      const int d = 1 + static_cast<int>(rng.uniform_below(4));
      const FederatedProblem problem =
          c % 2 == 0
              ? make_quadratic_problem(M, n, d, 0.1, 1.0 + 4.0 * rng.uniform01(),
                                       2.0 * rng.uniform01(), kVerifySeed + c)
              : random_logreg(M, n, d, 0.1 * rng.uniform01(), 0.2,
                              kVerifySeed + c);
      const double cstep = (0.05 + 0.9 * rng.uniform01()) / (n * problem.L());
      const double sstep = cstep * n * (0.1 + 10.0 * rng.uniform01());
      const int C = 1 + static_cast<int>(rng.uniform_below(M));
      Vector x0(d);
      for (int j = 0; j < d; ++j) x0[j] = 3.0 * rng.normal();
      RunConfig cfg = config(cstep, sstep, C, 1, kVerifySeed + 100 + c, x0);
      cfg.mode = c % 3 == 0 ? ShuffleMode::ShuffleOnce
                            : ShuffleMode::RandomReshuffling;
      const int t = static_cast<int>(rng.uniform_below(10));
      const RoundOutcome out = nastya_round(problem, x0, cfg, t);
      const double beta = sstep / (cstep * n) - 1.0;
      const double alpha = sstep / (cstep * n);
      const Vector a = out.x_next;
      const Vector b = extrapolation_update(x0, out.x_ends, beta);
      const Vector e = interpolation_update(x0, out.x_ends, alpha);
      const double diff = std::max({max_abs_diff(a, b), max_abs_diff(a, e),
                                    max_abs_diff(b, e)}) /
                          scale_of(x0);
      worst = std::max(worst, diff);
      if (!(diff <= 1e-12)) ++failed;
    }
    r.detail = fmt("%d instances, %d failed; max pairwise diff %.3g "
                   "(relative to max(1, |x_t|_inf))",
                   kInstances, failed, worst);
    r.passed = failed == 0;
  }, 5.0);
}

CheckResult check_reductions() {
  return timed("reductions", [](CheckResult& r) {
    // (a) M = n = 1 is gradient descent with step sstep, bit for bit.
    const FederatedProblem single =
        make_quadratic_problem(1, 1, 3, 0.5, 2.0, 0.0, kVerifySeed);
    const Vector x0 = Vector::Constant(3, 1.5);
    const RunConfig cfg_a = config(0.05, 0.3, 1, 100, 9, x0);
    const RunResult fed = run_nastya(single, cfg_a);
    const RunResult gd = run_gd(single, cfg_a.sstep, 100, x0);
    bool bitwise = fed.traces.size() == gd.traces.size() &&
                   fed.traces.size() == 101;
    for (std::size_t t = 0; bitwise && t < fed.traces.size(); ++t) {
      const RoundTrace& p = fed.traces[t];
      const RoundTrace& q = gd.traces[t];
      bitwise = p.f_val == q.f_val && p.grad_norm_sq == q.grad_norm_sq &&
                p.dist_sq == q.dist_sq;
    }
    bitwise = bitwise && (fed.x_final.array() == gd.x_final.array()).all();

    // (b) sstep = cstep n with full participation is the average of the
    // local endpoints; coded here without the engine.
    const int M = 5, n = 4, d = 3, T = 60;
    const FederatedProblem problem =
        make_quadratic_problem(M, n, d, 0.2, 1.0, 1.0, kVerifySeed + 1);
    const double cstep = 0.1;
    double worst = 0.0;
    for (ShuffleMode mode :
         {ShuffleMode::RandomReshuffling, ShuffleMode::ShuffleOnce}) {
      RunConfig cfg = config(cstep, cstep * n, M, T, 77, Vector::Ones(d));
      cfg.mode = mode;
      RunOptions ro;
      ro.record_iterates = true;
      const RunResult run = run_nastya(problem, cfg, ro);
      Vector x = cfg.x0;
      for (int t = 0; t < T; ++t) {
        Vector sum = Vector::Zero(d);
        for (int m = 0; m < M; ++m) {
          const Permutation pi = client_permutation(cfg.seed, mode, t, m, n);
          Vector y = x;
          for (int i = 0; i < n; ++i) {
            y = y - cstep * problem.client(m).samples[pi.order[i]]->gradient(y);
          }
          sum += y;
        }
        x = sum / static_cast<double>(M);
        worst = std::max(worst, max_abs_diff(x, run.iterates.at(t + 1)) /
                                    scale_of(x));
      }
    }
    r.detail = fmt("(a) M=n=1 vs GD over 100 rounds: %s; (b) max per-round "
                   "diff vs endpoint averaging %.3g",
                   bitwise ? "bitwise equal" : "MISMATCH", worst);
    r.passed = bitwise && worst <= 1e-12;
  });
}

CheckResult check_consistency() {
  return timed("consistency", [](CheckResult& r) {
    const int M = 4, n = 6, d = 3;
    const FederatedProblem problem =
        make_quadratic_problem(M, n, d, 0.1, 1.0, 1.0, kVerifySeed + 2);
    const Vector x0 = *problem.x_star() + Vector::Ones(d);
    const Vector full = problem.gradient(x0);
    std::vector<double> lx, ly;
    for (int k = 4; k <= 12; ++k) {
      const double gamma = std::ldexp(1.0, -k) / (n * problem.L());
      const RunConfig cfg = config(gamma, gamma * n, M, 1, 5, x0);
      const RoundOutcome out = nastya_round(problem, x0, cfg, 0);
      lx.push_back(std::log(gamma));
      ly.push_back(std::log((out.g - full).norm()));
    }
    const MeanSe mx = mean_se(lx), my = mean_se(ly);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx.mean) * (ly[i] - my.mean);
      sxx += (lx[i] - mx.mean) * (lx[i] - mx.mean);
    }
    const double slope = sxy / sxx;
    r.detail = fmt("log-log slope of |g_0 - grad f(x_0)| vs cstep: %.4f", slope);
    r.passed = std::abs(slope - 1.0) <= 0.2;
  });
}

CheckResult check_bounds_sc() {
  return timed("bounds_sc", [](CheckResult& r) {
    const int M = 10, n = 8, d = 5, C = 5, T = 300, seeds = 100;
    const double L = 1.0, mu = L / 100.0;
    const FederatedProblem problem =
        make_quadratic_problem(M, n, d, mu, L, 1.0, kVerifySeed + 3);
    const double sstep = 1.0 / (16.0 * L);
    const RunConfig base =
        config(sstep / (10.0 * n), sstep, C, T, 1000, Vector::Zero(d));
    const HeterogeneityStats st = heterogeneity_stats(problem);
    const double dist0 = (base.x0 - *problem.x_star()).squaredNorm();
    const BoundCurve bound = bound_sc(st, mu, L, base, dist0);

    std::vector<std::vector<double>> dist(T + 1);
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = base;
      cfg.seed = base.seed + s;
      const RunResult run = run_nastya(problem, cfg);
      if (run.diverged) throw DataError("run diverged");
      for (int t = 0; t <= T; ++t) dist[t].push_back(*run.traces[t].dist_sq);
    }
    int violations = 0;
    double worst_ratio = 0.0;
    for (int t = 0; t <= T; ++t) {
      const MeanSe ms = mean_se(dist[t]);
      if (!(ms.mean <= bound.values[t] + 2.0 * ms.se)) ++violations;
      worst_ratio = std::max(worst_ratio, ms.mean / bound.values[t]);
    }
    r.detail = fmt("%d seeds, T=%d: %d violating rounds; max mean/bound %.3g; "
                   "sigma*^2=%.3g",
                   seeds, T, violations, worst_ratio, st.sigma_star_sq);
    r.passed = violations == 0 && st.sigma_star_sq > 0.0;
  }, 120.0);
}

CheckResult check_bounds_cvx() {
  return timed("bounds_cvx", [](CheckResult& r) {
    const int M = 10, n = 10, d = 5, C = 5, T = 200, seeds = 100;
    const FederatedProblem problem = with_reference_optimum(
        random_logreg(M, n, d, 0.0, 0.2, kVerifySeed + 4), tight_reference());
    const double L = problem.L();
    const double sstep = 1.0 / (16.0 * L);
    const RunConfig base =
        config(sstep / (10.0 * n), sstep, C, T, 2000, Vector::Zero(d));
    StatsOptions so;
    so.functional = false;
    const HeterogeneityStats st = heterogeneity_stats(problem, so);
    const double dist0 = (base.x0 - *problem.x_star()).squaredNorm();
    const double f_star = *problem.f_star();

    const std::vector<int> horizons = {50, 100, 200};
    std::vector<std::vector<double>> gaps(horizons.size());
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = base;
      cfg.seed = base.seed + s;
      RunOptions ro;
      ro.record_iterates = true;
      const RunResult run = run_nastya(problem, cfg, ro);
      if (run.diverged) throw DataError("run diverged");
      Vector sum = Vector::Zero(d);
      std::size_t next = 0;
      for (int t = 1; t <= T; ++t) {
        sum += run.iterates[t];
        if (next < horizons.size() && t == horizons[next]) {
          gaps[next].push_back(problem.value(sum / double(t)) - f_star);
          ++next;
        }
      }
    }
    bool ok = true;
    std::string parts;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      RunConfig c = base;
      c.horizon = horizons[h];
      const double b = bound_cvx(st, L, c, dist0).total;
      const MeanSe ms = mean_se(gaps[h]);
      const bool pass = ms.mean <= b + 2.0 * ms.se;
      ok = ok && pass;
      parts += fmt("%sT=%d mean %.3g bound %.3g", h ? "; " : "", horizons[h],
                   ms.mean, b);
    }
    r.detail = parts;
    r.passed = ok;
  });
}

CheckResult check_bounds_ncvx() {
  return timed("bounds_ncvx", [](CheckResult& r) {
    const int M = 8, n = 8, d = 4, T = 200, seeds = 100;
    const FederatedProblem problem =
        make_nonconvex_problem(M, n, d, kVerifySeed + 5);
    const double L = problem.L();
    const HeterogeneityStats st = heterogeneity_stats(problem);
    const Vector x0 = Vector::Zero(d);
    const double delta0 = problem.value(x0) - *problem.f_star();
    bool ok = true;
    std::string parts;
    for (int C : {4, 8}) {
      const RunConfig base = config(1.0 / (2.0 * n * L) / 4.0,
                                    1.0 / (4.0 * L) / 4.0, C, T, 3000, x0);
      std::vector<double> mins;
      for (int s = 0; s < seeds; ++s) {
        RunConfig cfg = base;
        cfg.seed = base.seed + s;
        const RunResult run = run_nastya(problem, cfg);
        if (run.diverged) throw DataError("run diverged");
        double best = run.traces[0].grad_norm_sq;
        for (int t = 1; t < T; ++t) {
          best = std::min(best, run.traces[t].grad_norm_sq);
        }
        mins.push_back(best);
      }
      const double b = bound_ncvx(st, L, base, delta0, T).total;
      const MeanSe ms = mean_se(mins);
      const bool pass = ms.mean <= b + 2.0 * ms.se;
      ok = ok && pass;
      parts += fmt("%sC=%d mean %.3g bound %.3g", C == 4 ? "" : "; ", C,
                   ms.mean, b);
    }
    r.detail = parts + fmt("; Delta*=%.3g D*^2=%.3g", *st.delta_star,
                           *st.D_star_sq);
    r.passed = ok;
  });
}

CheckResult check_small_alpha() {
  return timed("small_alpha", [](CheckResult& r) {
    const int M = 10, n = 5, d = 3, T = 400, seeds = 100, window = 50;
    const double L = 1.0, mu = 0.1;
    const FederatedProblem problem =
        make_quadratic_problem(M, n, d, mu, L, 3.0, kVerifySeed + 6);
    const HeterogeneityStats st = heterogeneity_stats(problem);
    const double cstep = 1.0 / (2.0 * L);
    const double rad = sigma_rad_upper_bound(st, L, n, M);
    const Vector x0 = Vector::Zero(d);
    const double dist0 = (x0 - *problem.x_star()).squaredNorm();

    double best_small = std::numeric_limits<double>::infinity();
    double best_alpha = 0.0, at_one = 0.0;
    int bound_failures = 0;
    std::string failures;
    for (int k = 1; k <= 10; ++k) {
      const double alpha = k / 10.0;
      const RunConfig base = config(cstep, alpha * cstep * n, 1, T, 4000, x0);
      std::vector<std::vector<double>> dist(T + 1);
      for (int s = 0; s < seeds; ++s) {
        RunConfig cfg = base;
        cfg.seed = base.seed + s;
        const RunResult run = run_nastya(problem, cfg);
        if (run.diverged) throw DataError("run diverged");
        for (int t = 0; t <= T; ++t) dist[t].push_back(*run.traces[t].dist_sq);
      }
      double steady = 0.0;
      for (int t = T - window + 1; t <= T; ++t) steady += mean_se(dist[t]).mean;
      steady /= window;
      if (k == 10) {
        at_one = steady;
        continue;
      }
      if (steady < best_small) {
        best_small = steady;
        best_alpha = alpha;
      }
      const BoundCurve bound = bound_small_alpha(st, mu, L, base, dist0, rad);
      for (int t = 0; t <= T; ++t) {
        const MeanSe ms = mean_se(dist[t]);
        if (!(ms.mean <= bound.values[t] + 2.0 * ms.se)) {
          ++bound_failures;
          failures += fmt(" alpha=%.1f@t=%d", alpha, t);
          break;
        }
      }
    }
    r.detail = fmt("steady-state error %.4g at alpha=1, best %.4g at "
                   "alpha=%.1f; bound failures: %d",
                   at_one, best_small, best_alpha, bound_failures) +
               failures;
    r.passed = best_small < at_one && bound_failures == 0;
  });
}

CheckResult check_speedup() {
  return timed("speedup", [](CheckResult& r) {
    const int n = 20, d = 5, seeds = 20, T = 20000;
    const FederatedProblem problem = with_reference_optimum(
        random_logreg(1, n, d, 1.0, 0.1, kVerifySeed + 7), tight_reference());
    const double L = problem.L();
    const double f_star = *problem.f_star();
    const double cstep = 1.0 / (16.0 * L * n) / 10.0;
    const auto epochs_to_target = [&](double sstep, std::uint64_t seed) {
      const RunResult run =
          run_nastya(problem, config(cstep, sstep, 1, T, seed, Vector::Zero(d)));
      for (const auto& tr : run.traces) {
        if (tr.f_val - f_star <= 1e-6) return tr.round;
      }
      return T + 1;
    };
    int wins = 0;
    long long sum_two = 0, sum_plain = 0;
    for (int s = 0; s < seeds; ++s) {
      const int two = epochs_to_target(1.0 / (16.0 * L), 5000 + s);
      const int plain = epochs_to_target(cstep * n, 5000 + s);
      sum_two += two;
      sum_plain += plain;
      if (two < plain) ++wins;
    }
    r.detail = fmt("%d/%d seed wins; mean epochs %.1f (sstep=1/(16L)) vs %.1f "
                   "(sstep=cstep*n)",
                   wins, seeds, double(sum_two) / seeds,
                   double(sum_plain) / seeds);
    r.passed = wins == seeds;
  });
}

namespace {

const char* kDeterminismSpec =
    "problem.kind = quadratic\n"
    "problem.M = 6\n"
    "problem.n = 5\n"
    "problem.d = 3\n"
    "problem.mu = 0.1\n"
    "problem.L = 1\n"
    "problem.heterogeneity = 1\n"
    "problem.seed = 3\n"
    "algo = nastya\n"
    "cstep = 0.0025\n"
    "sstep = 0.05\n"
    "cohort = 3\n"
    "T = 40\n"
    "seed = 11\n"
    "ensemble = 8\n"
    "bounds = sc, cvx\n"
    "out = det\n";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path scratch(const VerifyOptions& opts, const char* sub) {
  std::filesystem::path base = opts.work_dir;
  if (base.empty()) base = std::filesystem::temp_directory_path() / "fedrr_verify";
  const auto dir = base / sub;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

CheckResult check_determinism(const VerifyOptions& opts) {
  return timed("determinism", [&](CheckResult& r) {
    const auto dir = scratch(opts, "determinism");
    {
      std::ofstream(dir / "det.spec", std::ios::binary) << kDeterminismSpec;
    }
    const ExperimentSpec spec = load_spec(dir / "det.spec");
    std::vector<std::vector<std::filesystem::path>> outputs;
    const int threads[] = {1, std::max(2, opts.threads), 1};
    for (int k = 0; k < 3; ++k) {
      ExperimentOptions eo;
      eo.out_dir = dir / ("run" + std::to_string(k));
      eo.threads = threads[k];
      outputs.push_back(run_experiment(spec, eo).files);
    }
    int compared = 0, differing = 0;
    for (std::size_t i = 0; i < outputs[0].size(); ++i) {
      const std::string ref = slurp(outputs[0][i]);
      for (int k = 1; k < 3; ++k) {
        const auto other = outputs[k].at(i);
        ++compared;
        if (other.filename() != outputs[0][i].filename() || slurp(other) != ref) {
          ++differing;
        }
      }
    }
    const bool same_count = outputs[1].size() == outputs[0].size() &&
                            outputs[2].size() == outputs[0].size();
    r.detail = fmt("%zu files per run, %d comparisons (threads 1, %d, 1), "
                   "%d differ",
                   outputs[0].size(), compared, threads[1], differing);
    r.passed = same_count && differing == 0 && !outputs[0].empty();
  });
}

CheckResult check_gradients() {
  return timed("gradients", [](CheckResult& r) {
    RngStream rng = derive_stream(kVerifySeed + 8, 0, std::nullopt,
                                  StreamPurpose::Problem);
    const auto random_vec = [&](int d, double s) {
      Vector v(d);
      for (int j = 0; j < d; ++j) v[j] = s * rng.normal();
      return v;
    };
    std::vector<std::pair<std::string, SampleLossPtr>> losses;
    for (int k = 0; k < 5; ++k) {
      const int d = 1 + k;
      Matrix B(d, d);
      for (int i = 0; i < d; ++i) B.row(i) = random_vec(d, 1.0).transpose();
      losses.emplace_back("quadratic",
                          std::make_shared<QuadraticLoss>(B.transpose() * B,
                                                          random_vec(d, 1.0), 0.5));
      losses.emplace_back("logistic",
                          std::make_shared<LogisticLoss>(random_vec(d, 1.0),
                                                         k % 2 ? 1.0 : -1.0,
                                                         0.1 * k));
      losses.emplace_back("saturating",
                          std::make_shared<SaturatingSquareLoss>(
                              random_vec(d, 1.0), rng.normal()));
    }
    int checks = 0, failed = 0;
    double worst = 0.0;
    const auto fd_check = [&](const std::function<double(const Vector&)>& f,
                              const Vector& g, const Vector& x) {
      Vector fd(x.size());
      for (int j = 0; j < x.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd[j] = (f(xp) - f(xm)) / (2.0 * h);
      }
      const double err = (fd - g).norm() / std::max(1.0, g.norm());
      worst = std::max(worst, err);
      ++checks;
      if (!(err <= 1e-6)) ++failed;
    };
    for (const auto& [name, loss] : losses) {
      for (int p = 0; p < 10; ++p) {
        const Vector x = random_vec(loss->dim(), 2.0);
        fd_check([&](const Vector& y) { return loss->value(y); },
                 loss->gradient(x), x);
      }
    }
    for (int k = 0; k < 3; ++k) {
      const FederatedProblem problem =
          k == 0 ? make_quadratic_problem(3, 4, 3, 0.1, 2.0, 1.0, 5)
          : k == 1 ? random_logreg(3, 4, 3, 0.05, 0.1, 6)
                   : make_nonconvex_problem(3, 4, 3, 7);
      for (int p = 0; p < 10; ++p) {
        const Vector x = random_vec(3, 2.0);
        fd_check([&](const Vector& y) { return problem.value(y); },
                 problem.gradient(x), x);
      }
    }
    r.detail = fmt("%d finite-difference checks, %d failed, max rel err %.3g",
                   checks, failed, worst);
    r.passed = failed == 0;
  });
}

CheckResult check_schema(const VerifyOptions& opts) {
  return timed("schema", [&](CheckResult& r) {
    const auto dir = scratch(opts, "schema");
    ExperimentSpec spec = parse_spec(kDeterminismSpec);
    spec.ensemble = 2;
    spec.out = "schema";
    ExperimentOptions eo;
    eo.out_dir = dir;
    const SummaryRecord summary = run_experiment(spec, eo);
    const SweepResult sweep =
        run_sweep(spec, SweepAxis::Cohort, {1.0, 6.0}, eo);

    const auto header = [](const std::filesystem::path& p) {
      std::ifstream in(p);
      std::string line;
      std::getline(in, line);
      return line;
    };
    const std::string trace_want = "round,seed,f,grad_norm_sq,dist_sq,g_norm_sq";
    const std::string summary_want =
        "round,mean_f,se_f,mean_grad_norm_sq,se_grad_norm_sq,mean_dist_sq,"
        "se_dist_sq,bound_sc,bound_cvx";
    std::string problems;
    if (header(dir / "schema_seed11.csv") != trace_want) problems += " trace";
    if (header(dir / "schema_summary.csv") != summary_want) problems += " summary";
    if (header(sweep.file) != "cohort," + summary_want) problems += " sweep";

    // Every float must round-trip through its rendering.
    const double probe = summary.mean_dist_sq.back();
    if (std::strtod(format_double(probe).c_str(), nullptr) != probe) {
      problems += " float-format";
    }
    r.detail = problems.empty() ? "trace, summary and sweep headers match"
                                : "drift in:" + problems;
    r.passed = problems.empty();
  });
}

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = {
      "lemma1",      "equivalence", "reductions", "consistency",
      "gradients",   "bounds_sc",   "bounds_cvx", "bounds_ncvx",
      "small_alpha", "speedup",     "determinism", "schema",
      "all"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& suite,
                                   const VerifyOptions& opts) {
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> all = {
      {"lemma1", check_lemma1},
      {"equivalence", check_equivalence},
      {"reductions", check_reductions},
      {"consistency", check_consistency},
      {"gradients", check_gradients},
      {"bounds_sc", check_bounds_sc},
      {"bounds_cvx", check_bounds_cvx},
      {"bounds_ncvx", check_bounds_ncvx},
      {"small_alpha", check_small_alpha},
      {"speedup", check_speedup},
      {"determinism", [&] { return check_determinism(opts); }},
      {"schema", [&] { return check_schema(opts); }},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, fn] : all) {
    if (suite == "all" || suite == name) out.push_back(fn());
  }
  if (out.empty()) throw ConfigError("unknown verify suite '" + suite + "'");
  return out;
}

nlohmann::json report_json(const std::string& suite,
                           const std::vector<CheckResult>& results) {
  nlohmann::json j;
  j["suite"] = suite;
  bool passed = true;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& r : results) {
    passed = passed && r.passed;
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"detail", r.detail},
                      {"seconds", r.seconds}});
  }
  j["passed"] = passed;
  j["checks"] = std::move(checks);
  return j;
}

}  // namespace fedrr
