// Runs acceptance criteria 1-10 and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fedrr/verify.hpp"

int main(int argc, char** argv) {
  fedrr::VerifyOptions opts;
  opts.work_dir = std::filesystem::temp_directory_path() / "fedrr_acceptance";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--out-dir") == 0) opts.work_dir = argv[++i];
  }
  opts.threads = 4;

  const std::vector<std::function<fedrr::CheckResult()>> criteria = {
      fedrr::check_lemma1,
      fedrr::check_equivalence,
      fedrr::check_reductions,
      fedrr::check_consistency,
      fedrr::check_bounds_sc,
      fedrr::check_bounds_cvx,
      fedrr::check_bounds_ncvx,
      fedrr::check_small_alpha,
      fedrr::check_speedup,
      [&] { return fedrr::check_determinism(opts); },
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const fedrr::CheckResult r = criteria[k]();
    if (!r.passed) ++failures;
    std::printf("criterion %2zu %-12s %s  %s (%.2f s)\n", k + 1, r.name.c_str(),
                r.passed ? "PASS" : "FAIL", r.detail.c_str(), r.seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
