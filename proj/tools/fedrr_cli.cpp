#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedrr/errors.hpp"
#include "fedrr/experiment.hpp"
#include "fedrr/spec_file.hpp"
#include "fedrr/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<int> ensemble;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Base seed (overrides the spec file)");
  cmd->add_option("--out-dir", flags.out_dir, "Output directory");
  cmd->add_option("--ensemble", flags.ensemble, "Ensemble size (overrides the spec file)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--threads", flags.threads, "Worker threads for seeds")
      ->check(CLI::PositiveNumber);
}

fedrr::ExperimentOptions options(const CommonFlags& flags) {
  fedrr::ExperimentOptions o;
  o.out_dir = flags.out_dir;
  o.threads = flags.threads;
  o.seed = flags.seed;
  o.ensemble = flags.ensemble;
  return o;
}

void print_checks(const std::vector<fedrr::BoundCheck>& checks) {
  for (const auto& c : checks) {
    std::printf("bound %-12s %s", c.name.c_str(),
                c.satisfied ? "satisfied" : "VIOLATED");
    if (c.first_violation) std::printf(" (first at round %d)", *c.first_violation);
    if (!c.detail.empty()) std::printf(" [%s]", c.detail.c_str());
    std::printf("\n");
  }
}

int cmd_run(const std::string& spec_path, const CommonFlags& flags) {
  const fedrr::ExperimentSpec spec = fedrr::load_spec(spec_path);
  const fedrr::SummaryRecord s = fedrr::run_experiment(spec, options(flags));
  for (const auto& f : s.files) std::printf("wrote %s\n", f.string().c_str());
  std::printf("ensemble %d, diverged %d\n", s.ensemble, s.diverged);
  print_checks(s.checks);
  return s.all_bounds_satisfied() ? kOk : kFailure;
}

int cmd_sweep(const std::string& spec_path, const std::string& axis,
              const std::vector<double>& values, const CommonFlags& flags) {
  const fedrr::ExperimentSpec spec = fedrr::load_spec(spec_path);
  const fedrr::SweepResult r = fedrr::run_sweep(
      spec, fedrr::parse_sweep_axis(axis), values, options(flags));
  bool ok = true;
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    std::printf("%s = %s: ", axis.c_str(),
                fedrr::format_double(r.values[i]).c_str());
    if (!r.summaries[i]) {
      ok = false;
      std::printf("skipped (%s)\n", r.errors[i].c_str());
      continue;
    }
    const auto& s = *r.summaries[i];
    std::printf("final mean_f %s, diverged %d\n",
                fedrr::format_double(s.mean_f.back()).c_str(), s.diverged);
  }
  if (!r.file.empty()) std::printf("wrote %s\n", r.file.string().c_str());
  return ok ? kOk : kFailure;
}

int cmd_verify(const std::string& suite, const CommonFlags& flags) {
  fedrr::VerifyOptions o;
  o.work_dir = std::filesystem::path(flags.out_dir) / "verify_work";
  o.threads = std::max(2, flags.threads);
  const auto results = fedrr::run_suite(suite, o);
  const nlohmann::json report = fedrr::report_json(suite, results);
  std::cout << report.dump(2) << "\n";
  return report["passed"].get<bool>() ? kOk : kFailure;
}

int cmd_stats(const std::string& spec_path) {
  const fedrr::ExperimentSpec spec = fedrr::load_spec(spec_path);
  const fedrr::PreparedExperiment prepared =
      fedrr::prepare_experiment(spec, /*functional_stats=*/true);
  std::cout << fedrr::stats_json(prepared).dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated random-reshuffling simulator"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string spec_path, axis, suite = "all";
  std::vector<double> values;

  auto* run = app.add_subcommand("run", "Run a seed ensemble from a spec file");
  run->add_option("spec", spec_path, "Spec file")->required();
  add_common(run, flags);

  auto* sweep = app.add_subcommand("sweep", "Sweep one parameter over values");
  sweep->add_option("spec", spec_path, "Spec file")->required();
  sweep->add_option("--axis", axis, "cstep | sstep | cohort | alpha")->required();
  sweep->add_option("--values", values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  add_common(sweep, flags);

  auto* verify = app.add_subcommand("verify", "Run the verification suite");
  verify->add_option("suite", suite, "Suite name (default: all)");
  add_common(verify, flags);

  auto* stats = app.add_subcommand("stats", "Print heterogeneity statistics");
  stats->add_option("spec", spec_path, "Spec file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(spec_path, flags);
    if (*sweep) return cmd_sweep(spec_path, axis, values, flags);
    if (*verify) return cmd_verify(suite, flags);
    if (*stats) return cmd_stats(spec_path);
  } catch (const fedrr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
