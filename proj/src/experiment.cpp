#include "fedrr/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "fedrr/errors.hpp"
#include "fedrr/libsvm.hpp"

namespace fedrr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FStarOptions reference_oracle() {
  FStarOptions o;
  o.restarts = 1;
  o.tol = 1e-9;
  o.max_iters = 100000;
  return o;
}

// Per-seed series derived from one run, indexed by round.
struct SeedSeries {
  std::vector<double> f, grad, dist;
  std::vector<double> avg_gap;  ///< f(mean x_1..x_t) - f*, NaN at t = 0
  std::vector<double> run_min;  ///< min_{s<t} ||grad f(x_s)||^2, NaN at t = 0
  bool diverged = false;
};

SeedSeries derive_series(const FederatedProblem& problem, const RunResult& run,
                         bool want_avg) {
  SeedSeries s;
  s.diverged = run.diverged;
  const std::size_t len = run.traces.size();
  s.f.reserve(len);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < len; ++t) {
    const RoundTrace& tr = run.traces[t];
    s.f.push_back(tr.f_val);
    s.grad.push_back(tr.grad_norm_sq);
    s.dist.push_back(tr.dist_sq.value_or(kNaN));
    s.run_min.push_back(t == 0 ? kNaN : best);
    best = std::min(best, tr.grad_norm_sq);
  }
  if (want_avg && problem.f_star()) {
    Vector sum = Vector::Zero(problem.dim());
    s.avg_gap.push_back(kNaN);
    for (std::size_t t = 1; t < len && t < run.iterates.size(); ++t) {
      sum += run.iterates[t];
      const Vector avg = sum / static_cast<double>(t);
      s.avg_gap.push_back(problem.value(avg) - *problem.f_star());
    }
  }
  return s;
}

void mean_se(const std::vector<const std::vector<double>*>& series,
             std::size_t t, double& mean, double& se) {
  double sum = 0.0;
  int count = 0;
  for (const auto* v : series) {
    if (t < v->size() && !std::isnan((*v)[t])) {
      sum += (*v)[t];
      ++count;
    }
  }
  if (count == 0) {
    mean = kNaN;
    se = kNaN;
    return;
  }
  mean = sum / count;
  if (count == 1) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (const auto* v : series) {
    if (t < v->size() && !std::isnan((*v)[t])) {
      const double dlt = (*v)[t] - mean;
      ss += dlt * dlt;
    }
  }
  se = std::sqrt(ss / (count - 1)) / std::sqrt(static_cast<double>(count));
}

RunResult run_one(const PreparedExperiment& prepared, const RunConfig& cfg,
                  const RunOptions& ro) {
  switch (prepared.spec.algo) {
    case Algorithm::Nastya:
      return run_nastya(prepared.problem, cfg, ro);
    case Algorithm::LocalSgdWr:
      return run_local_sgd_wr(prepared.problem, cfg, ro);
    case Algorithm::GD:
      return run_gd(prepared.problem, cfg.sstep, cfg.horizon, cfg.x0, ro);
  }
  throw InputError("unknown algorithm");
}

BoundCheck compare(const std::string& name, const std::vector<double>& mean,
                   const std::vector<double>& se,
                   const std::vector<double>& bound, int first_round) {
  BoundCheck c;
  c.name = name;
  c.satisfied = true;
  c.worst_margin = -std::numeric_limits<double>::infinity();
  int checked = 0;
  for (std::size_t t = first_round; t < bound.size() && t < mean.size(); ++t) {
    if (std::isnan(bound[t])) continue;
    ++checked;
    const double margin = (mean[t] - 2.0 * se[t]) - bound[t];
    if (std::isnan(mean[t]) || !(mean[t] <= bound[t] + 2.0 * se[t])) {
      if (c.satisfied) c.first_violation = static_cast<int>(t);
      c.satisfied = false;
      c.worst_margin = std::isnan(margin)
                           ? std::numeric_limits<double>::infinity()
                           : std::max(c.worst_margin, margin);
    } else {
      c.worst_margin = std::max(c.worst_margin, margin);
    }
  }
  if (checked == 0) {
    c.satisfied = false;
    c.worst_margin = kNaN;
    c.detail = "no rounds to compare";
  }
  return c;
}

void write_text(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ResourceError("cannot write " + path.string());
  written.push_back(path);
  out << text;
  out.flush();
  if (!out) throw ResourceError("write failed: " + path.string());
}

void remove_all(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) {
    std::error_code ec;
    std::filesystem::remove(f, ec);
  }
}

nlohmann::json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json checks_json(const std::vector<BoundCheck>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json j;
    j["bound"] = c.name;
    j["satisfied"] = c.satisfied;
    j["first_violation"] =
        c.first_violation ? nlohmann::json(*c.first_violation) : nullptr;
    j["worst_margin"] = number(c.worst_margin);
    j["detail"] = c.detail;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool SummaryRecord::all_bounds_satisfied() const {
  for (const auto& c : checks) {
    if (!c.satisfied) return false;
  }
  return true;
}

FederatedProblem build_problem(const ProblemSpec& spec) {
  if (spec.kind == "quadratic") {
    return make_quadratic_problem(spec.M, spec.n, spec.d, spec.mu, spec.L,
                                  spec.heterogeneity, spec.seed);
  }
  if (spec.kind == "nonconvex") {
    return make_nonconvex_problem(spec.M, spec.n, spec.d, spec.seed);
  }
  if (spec.kind == "logreg") {
    const LibsvmData data = parse_libsvm(spec.libsvm_path);
    const FederatedProblem p =
        make_logreg_problem(data, spec.M, spec.lambda, spec.seed);
    return with_reference_optimum(p, reference_oracle());
  }
  if (spec.kind == "logreg_synthetic") {
    const LibsvmData data = synthetic_classification_rows(
        spec.M * spec.n, spec.d, spec.label_noise, spec.seed);
    const FederatedProblem p =
        make_logreg_problem(data, spec.M, spec.lambda, spec.seed);
    return with_reference_optimum(p, reference_oracle());
  }
  throw ConfigError("problem.kind: unknown generator '" + spec.kind + "'");
}

PreparedExperiment prepare_experiment(const ExperimentSpec& spec,
                                      bool functional_stats) {
  FederatedProblem problem = build_problem(spec.problem);
  if (spec.x0.size() != 1 &&
      static_cast<int>(spec.x0.size()) != problem.dim()) {
    throw ConfigError("x0: expected 1 or " + std::to_string(problem.dim()) +
                      " values");
  }
  if (spec.cohort_size() > problem.num_clients()) {
    throw ConfigError("cohort: exceeds the number of clients");
  }
  std::optional<HeterogeneityStats> stats;
  if (problem.x_star() && problem.f_star()) {
    StatsOptions so;
    so.functional = functional_stats;
    for (BoundKind b : spec.bounds) so.functional = so.functional || b == BoundKind::NCVX;
    stats = heterogeneity_stats(problem, so);
  }
  return PreparedExperiment{spec, std::move(problem), std::move(stats)};
}

RunConfig make_run_config(const PreparedExperiment& prepared) {
  const ExperimentSpec& s = prepared.spec;
  RunConfig cfg;
  cfg.cstep = s.cstep;
  cfg.sstep = s.sstep;
  cfg.cohort = s.cohort_size();
  cfg.horizon = s.T;
  cfg.mode = s.mode;
  cfg.seed = s.seed;
  const int d = prepared.problem.dim();
  if (s.x0.size() == 1) {
    cfg.x0 = Vector::Constant(d, s.x0.front());
  } else {
    cfg.x0 = Eigen::Map<const Vector>(s.x0.data(), d);
  }
  return cfg;
}

SummaryRecord run_ensemble(const PreparedExperiment& prepared,
                           const RunConfig& cfg, int ensemble, int threads,
                           const std::filesystem::path& out_dir,
                           const std::string& prefix) {
  if (ensemble < 1) throw InputError("ensemble must be >= 1");
  const FederatedProblem& problem = prepared.problem;
  if (prepared.spec.algo != Algorithm::GD) {
    validate(cfg, problem);
  } else if (!(cfg.sstep > 0.0) || cfg.horizon < 1 ||
             cfg.x0.size() != problem.dim()) {
    throw InputError("gd: need step > 0, T >= 1 and x0 of dimension d");
  }

  const auto& bounds = prepared.spec.bounds;
  bool want_avg = false;
  for (BoundKind b : bounds) want_avg = want_avg || b == BoundKind::CVX;
  RunOptions ro;
  ro.record_iterates = want_avg;

  std::vector<std::optional<RunResult>> runs(ensemble);
  std::vector<std::exception_ptr> failures(ensemble);
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < ensemble; i = next++) {
      try {
        RunConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(i);
        runs[i] = run_one(prepared, c, ro);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int pool = std::max(1, std::min(threads, ensemble));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> workers;
    for (int k = 0; k < pool; ++k) workers.emplace_back(worker);
    for (auto& w : workers) w.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<SeedSeries> series;
  series.reserve(ensemble);
  SummaryRecord out;
  out.ensemble = ensemble;
  for (const auto& r : runs) {
    series.push_back(derive_series(problem, *r, want_avg));
    if (r->diverged) ++out.diverged;
  }

  std::vector<const std::vector<double>*> f_s, g_s, d_s, avg_s, min_s;
  for (const auto& s : series) {
    if (s.diverged) continue;
    f_s.push_back(&s.f);
    g_s.push_back(&s.grad);
    d_s.push_back(&s.dist);
    avg_s.push_back(&s.avg_gap);
    min_s.push_back(&s.run_min);
  }
  const int rounds = cfg.horizon + 1;
  std::vector<double> mean_avg(rounds), se_avg(rounds), mean_min(rounds),
      se_min(rounds);
  for (int t = 0; t < rounds; ++t) {
    out.rounds.push_back(t);
    double m = 0.0, e = 0.0;
    mean_se(f_s, t, m, e);
    out.mean_f.push_back(m);
    out.se_f.push_back(e);
    mean_se(g_s, t, m, e);
    out.mean_grad_norm_sq.push_back(m);
    out.se_grad_norm_sq.push_back(e);
    mean_se(d_s, t, m, e);
    out.mean_dist_sq.push_back(m);
    out.se_dist_sq.push_back(e);
    mean_se(avg_s, t, mean_avg[t], se_avg[t]);
    mean_se(min_s, t, mean_min[t], se_min[t]);
  }

  const int n = problem.samples_per_client();
  const double L = problem.L();
  const double mu = problem.mu();
  const std::vector<RegimeCheck> regimes =
      check_stepsizes(cfg, L, mu, n);
  for (BoundKind b : bounds) {
    const std::string name = to_string(b);
    std::vector<double> column(rounds, kNaN);
    BoundCheck check;
    check.name = name;
    std::string why;
    if (prepared.spec.algo != Algorithm::Nastya) {
      why = "bounds apply to the reshuffling method only";
    } else if (!prepared.stats) {
      why = "needs x* and f*";
    } else {
      for (const auto& rc : regimes) {
        if (rc.theorem == b && !rc.satisfied) why = "regime violated: " + rc.violated;
      }
    }
    if (why.empty()) {
      try {
        const HeterogeneityStats& st = *prepared.stats;
        const double dist0 = (cfg.x0 - *problem.x_star()).squaredNorm();
        switch (b) {
          case BoundKind::SC:
            column = bound_sc(st, mu, L, cfg, dist0).values;
            check = compare(name, out.mean_dist_sq, out.se_dist_sq, column, 0);
            break;
          case BoundKind::SmallAlpha:
            column = bound_small_alpha(st, mu, L, cfg, dist0,
                                       sigma_rad_upper_bound(st, L, n, problem.num_clients()))
                         .values;
            check = compare(name, out.mean_dist_sq, out.se_dist_sq, column, 0);
            break;
          case BoundKind::CVX:
            for (int t = 1; t < rounds; ++t) {
              RunConfig c = cfg;
              c.horizon = t;
              column[t] = bound_cvx(st, L, c, dist0).total;
            }
            check = compare(name, mean_avg, se_avg, column, 1);
            break;
          case BoundKind::NCVX: {
            const double delta0 = problem.value(cfg.x0) - *problem.f_star();
            for (int t = 1; t < rounds; ++t) {
              column[t] = bound_ncvx(st, L, cfg, delta0, t).total;
            }
            check = compare(name, mean_min, se_min, column, 1);
            break;
          }
        }
      } catch (const Error& e) {
        why = e.what();
        column.assign(rounds, kNaN);
      }
    }
    if (!why.empty()) {
      check = BoundCheck{};
      check.name = name;
      check.satisfied = false;
      check.worst_margin = kNaN;
      check.detail = why;
    }
    out.bound_columns.emplace_back("bound_" + name, std::move(column));
    out.checks.push_back(std::move(check));
  }

  if (prefix.empty()) return out;

  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(out_dir);
    for (int i = 0; i < ensemble; ++i) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
      const auto path = out_dir / (prefix + "_seed" + std::to_string(seed) + ".csv");
      write_text(path, trace_csv(*runs[i], seed), written);
    }
    write_text(out_dir / (prefix + "_summary.csv"), summary_csv(out), written);

    nlohmann::json meta;
    meta["algo"] = to_string(prepared.spec.algo);
    meta["ensemble"] = ensemble;
    meta["base_seed"] = cfg.seed;
    meta["diverged"] = out.diverged;
    meta["checks"] = checks_json(out.checks);
    nlohmann::json empirical;
    if (want_avg) {
      nlohmann::json col = nlohmann::json::array();
      for (double v : mean_avg) col.push_back(number(v));
      empirical["mean_avg_iterate_gap"] = std::move(col);
    }
    for (BoundKind b : bounds) {
      if (b != BoundKind::NCVX) continue;
      nlohmann::json col = nlohmann::json::array();
      for (double v : mean_min) col.push_back(number(v));
      empirical["mean_running_min_grad_norm_sq"] = std::move(col);
    }
    meta["empirical"] = std::move(empirical);
    meta["stats"] = stats_json(prepared);
    write_text(out_dir / (prefix + "_meta.json"), meta.dump(2) + "\n", written);
  } catch (...) {
    remove_all(written);
    throw;
  }
  out.files = written;
  return out;
}

SummaryRecord run_experiment(const ExperimentSpec& spec,
                             const ExperimentOptions& opts) {
  ExperimentSpec s = spec;
  if (opts.seed) s.seed = *opts.seed;
  if (opts.ensemble) s.ensemble = *opts.ensemble;
  const PreparedExperiment prepared = prepare_experiment(s);
  const RunConfig cfg = make_run_config(prepared);
  return run_ensemble(prepared, cfg, s.ensemble, opts.threads, opts.out_dir,
                      opts.write_files ? s.out : std::string());
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "cstep") return SweepAxis::CStep;
  if (name == "sstep") return SweepAxis::SStep;
  if (name == "cohort") return SweepAxis::Cohort;
  if (name == "alpha") return SweepAxis::Alpha;
  throw ConfigError("unknown sweep axis '" + name + "'");
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::CStep:
      return "cstep";
    case SweepAxis::SStep:
      return "sstep";
    case SweepAxis::Cohort:
      return "cohort";
    case SweepAxis::Alpha:
      return "alpha";
  }
  return "unknown";
}

SweepResult run_sweep(const ExperimentSpec& spec, SweepAxis axis,
                      const std::vector<double>& values,
                      const ExperimentOptions& opts) {
  ExperimentSpec s = spec;
  if (opts.seed) s.seed = *opts.seed;
  if (opts.ensemble) s.ensemble = *opts.ensemble;
  const PreparedExperiment prepared = prepare_experiment(s);
  const RunConfig base = make_run_config(prepared);
  const int n = prepared.problem.samples_per_client();

  SweepResult result;
  result.axis = axis;
  result.values = values;
  for (double v : values) {
    RunConfig cfg = base;
    try {
      switch (axis) {
        case SweepAxis::CStep:
          cfg.cstep = v;
          break;
        case SweepAxis::SStep:
          cfg.sstep = v;
          break;
        case SweepAxis::Cohort:
          if (v != std::floor(v)) throw InputError("cohort must be an integer");
          cfg.cohort = static_cast<int>(v);
          break;
        case SweepAxis::Alpha:
          if (v < 0.0) throw InputError("alpha must be >= 0");
          cfg.sstep = v * cfg.cstep * n;
          break;
      }
      result.summaries.push_back(
          run_ensemble(prepared, cfg, s.ensemble, opts.threads, {}, {}));
      result.errors.emplace_back();
    } catch (const Error& e) {
      result.summaries.emplace_back(std::nullopt);
      result.errors.emplace_back(e.what());
    }
  }

  if (!opts.write_files) return result;
  std::ostringstream csv;
  csv << to_string(axis);
  for (const auto& c : kSummaryColumns) csv << ',' << c;
  for (BoundKind b : s.bounds) csv << ",bound_" << to_string(b);
  csv << '\n';
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!result.summaries[k]) continue;
    const std::string head = format_double(values[k]) + ",";
    const std::string body = summary_csv(*result.summaries[k]);
    std::istringstream lines(body);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) csv << head << line << '\n';
  }
  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(opts.out_dir);
    result.file = opts.out_dir / (s.out + "_sweep_" + to_string(axis) + ".csv");
    write_text(result.file, csv.str(), written);
  } catch (...) {
    remove_all(written);
    throw;
  }
  return result;
}

nlohmann::json stats_json(const PreparedExperiment& prepared) {
  const FederatedProblem& p = prepared.problem;
  nlohmann::json j;
  j["M"] = p.num_clients();
  j["n"] = p.samples_per_client();
  j["d"] = p.dim();
  j["L"] = p.L();
  j["mu"] = p.mu();
  j["convexity"] = to_string(p.convexity());
  j["f_star"] = p.f_star() ? number(*p.f_star()) : nullptr;
  j["f_star_tolerance"] = p.f_star_tolerance();
  j["participation_factor"] =
      participation_factor(p.num_clients(), prepared.spec.cohort_size());
  if (!prepared.stats) {
    j["heterogeneity"] = nullptr;
    return j;
  }
  const HeterogeneityStats& st = *prepared.stats;
  nlohmann::json h;
  h["sigma_star_sq"] = number(st.sigma_star_sq);
  h["Sigma_star_sq"] = number(st.Sigma_star_sq);
  h["sigma_star_m_sq"] = st.sigma_star_m_sq;
  h["client_grad_norm_sq"] = st.client_grad_norm_sq;
  h["delta_star"] = st.delta_star ? number(*st.delta_star) : nullptr;
  h["delta_star_m"] =
      st.delta_star_m ? nlohmann::json(*st.delta_star_m) : nullptr;
  h["D_star_sq"] = st.D_star_sq ? number(*st.D_star_sq) : nullptr;
  h["delta_uncertainty"] = st.delta_uncertainty;
  j["heterogeneity"] = std::move(h);
  return j;
}

std::string summary_csv(const SummaryRecord& s) {
  std::ostringstream out;
  for (std::size_t k = 0; k < kSummaryColumns.size(); ++k) {
    out << (k ? "," : "") << kSummaryColumns[k];
  }
  for (const auto& [name, col] : s.bound_columns) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < s.rounds.size(); ++t) {
    out << s.rounds[t] << ',' << format_double(s.mean_f[t]) << ','
        << format_double(s.se_f[t]) << ','
        << format_double(s.mean_grad_norm_sq[t]) << ','
        << format_double(s.se_grad_norm_sq[t]) << ','
        << format_double(s.mean_dist_sq[t]) << ','
        << format_double(s.se_dist_sq[t]);
    for (const auto& [name, col] : s.bound_columns) {
      out << ',' << format_double(t < col.size() ? col[t] : kNaN);
    }
    out << '\n';
  }
  return out.str();
}

std::string trace_csv(const RunResult& run, std::uint64_t seed) {
  std::ostringstream out;
  for (std::size_t k = 0; k < kTraceColumns.size(); ++k) {
    out << (k ? "," : "") << kTraceColumns[k];
  }
  out << '\n';
  for (const auto& tr : run.traces) {
    out << tr.round << ',' << seed << ',' << format_double(tr.f_val) << ','
        << format_double(tr.grad_norm_sq) << ','
        << format_double(tr.dist_sq.value_or(kNaN)) << ','
        << format_double(tr.g_norm_sq) << '\n';
  }
  return out.str();
}

}  // namespace fedrr
