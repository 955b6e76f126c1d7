#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedrr/sampling.hpp"
#include "fedrr/theory.hpp"

namespace fedrr {

/// How to build the problem of an experiment.
struct ProblemSpec {
  /// quadratic | nonconvex | logreg | logreg_synthetic
  std::string kind;
  int M = 1;
  int n = 1;
  int d = 1;
  double mu = 0.0;
  double L = 0.0;
  double heterogeneity = 0.0;
  std::uint64_t seed = 0;  ///< generator seed, or row-partition seed for logreg
  std::filesystem::path libsvm_path;
  double lambda = 0.0;
  double label_noise = 0.1;
};

enum class Algorithm { Nastya, GD, LocalSgdWr };

const char* to_string(Algorithm a);

/// A validated experiment description.
struct ExperimentSpec {
  ProblemSpec problem;
  Algorithm algo = Algorithm::Nastya;
  double cstep = 0.0;
  double sstep = 0.0;
  std::optional<int> cohort;  ///< defaults to M
  int T = 1;
  ShuffleMode mode = ShuffleMode::RandomReshuffling;
  std::uint64_t seed = 0;
  int ensemble = 100;
  std::vector<BoundKind> bounds;
  /// Either one value broadcast to all coordinates or exactly d values.
  std::vector<double> x0{0.0};
  std::string out = "run";

  int cohort_size() const { return cohort.value_or(problem.M); }
};

/// Parses "key = value" lines ('#' comments, blank lines ignored) and
/// validates. Throws ConfigError naming the offending key or line.
ExperimentSpec parse_spec(const std::string& text);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Every key the spec format accepts, in documentation order.
const std::vector<std::string>& spec_keys();

}  // namespace fedrr
