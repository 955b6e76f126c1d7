#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedrr/engine.hpp"
#include "fedrr/spec_file.hpp"
#include "fedrr/theory.hpp"

namespace fedrr {

/// Column order of per-seed trace CSVs.
inline const std::vector<std::string> kTraceColumns = {
    "round", "seed", "f", "grad_norm_sq", "dist_sq", "g_norm_sq"};

/// Fixed leading columns of summary CSVs; bound_<name> columns follow.
inline const std::vector<std::string> kSummaryColumns = {
    "round",       "mean_f",           "se_f",        "mean_grad_norm_sq",
    "se_grad_norm_sq", "mean_dist_sq", "se_dist_sq"};

/// Renders a double with 17 significant digits ("nan" for NaN).
std::string format_double(double v);

struct ExperimentOptions {
  std::filesystem::path out_dir = ".";
  int threads = 1;
  std::optional<std::uint64_t> seed;  ///< overrides spec.seed
  std::optional<int> ensemble;        ///< overrides spec.ensemble
  bool write_files = true;
};

/// Outcome of comparing an empirical curve against a bound.
struct BoundCheck {
  std::string name;
  bool satisfied = false;
  std::optional<int> first_violation;  ///< round index of the first failure
  /// Largest (mean - 2 SE) - bound over checked rounds (<= 0 when satisfied).
  double worst_margin = 0.0;
  std::string detail;
};

/// Per-round ensemble statistics of one experiment.
struct SummaryRecord {
  std::vector<int> rounds;
  std::vector<double> mean_f, se_f;
  std::vector<double> mean_grad_norm_sq, se_grad_norm_sq;
  std::vector<double> mean_dist_sq, se_dist_sq;  ///< NaN without x*
  /// (column name, per-round values), in requested order.
  std::vector<std::pair<std::string, std::vector<double>>> bound_columns;
  std::vector<BoundCheck> checks;
  int ensemble = 0;
  int diverged = 0;
  std::vector<std::filesystem::path> files;

  bool all_bounds_satisfied() const;
};

/// An experiment's problem and derived quantities, built once.
struct PreparedExperiment {
  ExperimentSpec spec;
  FederatedProblem problem;
  std::optional<HeterogeneityStats> stats;
};

FederatedProblem build_problem(const ProblemSpec& spec);
/// The delta statistics are computed only when an ncvx bound is requested
/// or `functional_stats` is set; they may need a descent oracle per client.
PreparedExperiment prepare_experiment(const ExperimentSpec& spec,
                                      bool functional_stats = false);
RunConfig make_run_config(const PreparedExperiment& prepared);

/// Runs `cfg` for seeds base_seed + i, i < ensemble. Seeds may run in
/// parallel; the reduction and all file writes happen in seed order.
/// `prefix` names the written files; nothing is written if empty.
SummaryRecord run_ensemble(const PreparedExperiment& prepared,
                           const RunConfig& cfg, int ensemble, int threads,
                           const std::filesystem::path& out_dir,
                           const std::string& prefix);

/// Runs the spec file's ensemble and writes <out>_seed<k>.csv per seed,
/// <out>_summary.csv and <out>_meta.json. Outputs already written are
/// removed if the run fails.
SummaryRecord run_experiment(const ExperimentSpec& spec,
                             const ExperimentOptions& opts);

enum class SweepAxis { CStep, SStep, Cohort, Alpha };

SweepAxis parse_sweep_axis(const std::string& name);
const char* to_string(SweepAxis axis);

struct SweepResult {
  SweepAxis axis = SweepAxis::CStep;
  std::vector<double> values;
  std::vector<std::optional<SummaryRecord>> summaries;  ///< nullopt on error
  std::vector<std::string> errors;                      ///< per value, "" if ok
  std::filesystem::path file;
};

/// Runs one ensemble per axis value with the same seeds (paired
/// comparison) and writes <out>_sweep_<axis>.csv. A value that yields an
/// invalid configuration is reported and skipped.
SweepResult run_sweep(const ExperimentSpec& spec, SweepAxis axis,
                      const std::vector<double>& values,
                      const ExperimentOptions& opts);

/// Heterogeneity statistics and problem constants as JSON.
nlohmann::json stats_json(const PreparedExperiment& prepared);

/// Writes a CSV of the summary (header + rows). Used by run and sweep.
std::string summary_csv(const SummaryRecord& summary);
/// Trace CSV for one seed.
std::string trace_csv(const RunResult& run, std::uint64_t seed);

}  // namespace fedrr
