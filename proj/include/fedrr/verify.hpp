#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace fedrr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  /// Scratch directory for checks that write files.
  std::filesystem::path work_dir;
  int threads = 2;
};

// One check per acceptance criterion, numbered as in the README.
CheckResult check_lemma1();                                   // 1
CheckResult check_equivalence();                              // 2
CheckResult check_reductions();                               // 3
CheckResult check_consistency();                              // 4
CheckResult check_bounds_sc();                                // 5
CheckResult check_bounds_cvx();                               // 6
CheckResult check_bounds_ncvx();                              // 7
CheckResult check_small_alpha();                              // 8
CheckResult check_speedup();                                  // 9
CheckResult check_determinism(const VerifyOptions& opts);     // 10

/// Finite-difference checks of every loss gradient and of grad f.
CheckResult check_gradients();
/// Written CSV headers match the documented column lists.
CheckResult check_schema(const VerifyOptions& opts);

/// Suite names accepted by run_suite, "all" last.
const std::vector<std::string>& verify_suites();

/// Throws ConfigError for an unknown suite name.
std::vector<CheckResult> run_suite(const std::string& suite,
                                   const VerifyOptions& opts);

nlohmann::json report_json(const std::string& suite,
                           const std::vector<CheckResult>& results);

}  // namespace fedrr
