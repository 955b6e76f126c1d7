#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"

#include "fedrr/errors.hpp"
#include "fedrr/sampling.hpp"

using namespace fedrr;

namespace {

// Independent variance-of-subset-mean oracle: draws every ordered k-tuple of
// distinct indices (so each subset appears k! times) and averages.
double ordered_tuple_variance(const std::vector<Vector>& xs, int k,
                              Vector& mean_out) {
  const int n = static_cast<int>(xs.size());
  Vector pop = Vector::Zero(xs[0].size());
  for (const auto& x : xs) pop += x;
  pop /= n;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  double sum_sq = 0.0;
  Vector sum = Vector::Zero(pop.size());
  long count = 0;
  std::set<std::vector<int>> seen;
  do {
    std::vector<int> prefix(idx.begin(), idx.begin() + k);
    if (!seen.insert(prefix).second) continue;
    Vector m = Vector::Zero(pop.size());
    for (int i : prefix) m += xs[i];
    m /= k;
    sum += m;
    sum_sq += (m - pop).squaredNorm();
    ++count;
  } while (std::next_permutation(idx.begin(), idx.end()));
  mean_out = sum / static_cast<double>(count);
  return sum_sq / count;
}

}  // namespace

TEST_CASE("derive_stream is deterministic and separates its inputs") {
  RngStream a = derive_stream(42, 0, 1, StreamPurpose::Permutation);
  RngStream b = derive_stream(42, 0, 1, StreamPurpose::Permutation);
  RngStream c = derive_stream(42, 0, 2, StreamPurpose::Permutation);
  RngStream d = derive_stream(42, 0, 1, StreamPurpose::Cohort);
  RngStream e = derive_stream(42, 0, std::nullopt, StreamPurpose::Permutation);
  bool differs_c = false, differs_d = false, differs_e = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    differs_c = differs_c || x != c();
    differs_d = differs_d || x != d();
    differs_e = differs_e || x != e();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  CHECK(differs_e);
  CHECK_THROWS_AS(derive_stream(1, -1, std::nullopt, StreamPurpose::Cohort),
                  InputError);
}

TEST_CASE("client streams do not depend on what other clients drew") {
  RngStream first = derive_stream(7, 3, 5, StreamPurpose::Permutation);
  const auto alone = sample_permutation(9, first).order;
  for (int m = 0; m < 5; ++m) {
    RngStream other = derive_stream(7, 3, m, StreamPurpose::Permutation);
    (void)sample_permutation(9, other);
  }
  RngStream again = derive_stream(7, 3, 5, StreamPurpose::Permutation);
  CHECK(sample_permutation(9, again).order == alone);
}

TEST_CASE("uniform_below and uniform01 stay in range") {
  RngStream rng(123);
  for (int i = 0; i < 10000; ++i) {
    const auto k = rng.uniform_below(7);
    CHECK(k < 7);
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal variates have mean 0 and variance 1") {
  RngStream rng(99);
  const int N = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < N; ++i) {
    const double z = rng.normal();
    s += z;
    ss += z * z;
  }
  const double mean = s / N;
  CHECK(std::abs(mean) < 5.0 / std::sqrt(double(N)));
  CHECK(std::abs(ss / N - mean * mean - 1.0) < 0.02);
}

TEST_CASE("sample_permutation") {
  RngStream rng(1);
  SUBCASE("n = 1") { CHECK(sample_permutation(1, rng).order == std::vector<int>{0}); }
  SUBCASE("n <= 0 is rejected") {
    CHECK_THROWS_AS(sample_permutation(0, rng), InputError);
    CHECK_THROWS_AS(sample_permutation(-3, rng), InputError);
  }
  SUBCASE("always a bijection") {
    for (int n = 1; n <= 20; ++n) {
      const Permutation p = sample_permutation(n, rng);
      CHECK(p.is_valid());
      std::vector<int> sorted = p.order;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < n; ++i) CHECK(sorted[i] == i);
    }
  }
  SUBCASE("n = 3: all six permutations equally likely") {
    std::map<std::vector<int>, int> counts;
    const int draws = 60000;
    for (int i = 0; i < draws; ++i) ++counts[sample_permutation(3, rng).order];
    CHECK(counts.size() == 6);
    double chi2 = 0.0;
    for (const auto& [perm, c] : counts) {
      CHECK(std::abs(double(c) / draws - 1.0 / 6.0) <= 0.01);
      const double e = draws / 6.0;
      chi2 += (c - e) * (c - e) / e;
    }
    // 5 degrees of freedom; 20.5 is the 0.999 quantile.
    CHECK(chi2 < 20.5);
  }
}

TEST_CASE("Permutation::is_valid") {
  CHECK(Permutation{{2, 0, 1}}.is_valid());
  CHECK_FALSE(Permutation{{0, 0, 1}}.is_valid());
  CHECK_FALSE(Permutation{{0, 3, 1}}.is_valid());
  CHECK_FALSE(Permutation{{-1, 0}}.is_valid());
}

TEST_CASE("sample_cohort") {
  RngStream rng(5);
  SUBCASE("C = M gives every client") {
    for (int i = 0; i < 20; ++i) {
      CHECK(sample_cohort(6, 6, rng).members == std::vector<int>{0, 1, 2, 3, 4, 5});
    }
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(sample_cohort(4, 0, rng), InputError);
    CHECK_THROWS_AS(sample_cohort(4, 5, rng), InputError);
  }
  SUBCASE("members sorted and distinct") {
    for (int i = 0; i < 200; ++i) {
      const auto c = sample_cohort(10, 4, rng).members;
      CHECK(c.size() == 4);
      CHECK(std::is_sorted(c.begin(), c.end()));
      CHECK(std::adjacent_find(c.begin(), c.end()) == c.end());
    }
  }
  SUBCASE("M = 3, C = 2: three subsets equally likely") {
    std::map<std::vector<int>, int> counts;
    const int draws = 30000;
    for (int i = 0; i < draws; ++i) ++counts[sample_cohort(3, 2, rng).members];
    CHECK(counts.size() == 3);
    double chi2 = 0.0;
    for (const auto& [s, c] : counts) {
      CHECK(std::abs(double(c) / draws - 1.0 / 3.0) <= 0.02);
      chi2 += (c - draws / 3.0) * (c - draws / 3.0) / (draws / 3.0);
    }
    CHECK(chi2 < 13.8);  // 2 dof, 0.999 quantile
  }
  SUBCASE("C = 1: singletons uniform") {
    for (int M : {2, 5, 9}) {
      std::vector<int> counts(M, 0);
      const int draws = 10000 * M;
      for (int i = 0; i < draws; ++i) ++counts[sample_cohort(M, 1, rng).members[0]];
      for (int c : counts) CHECK(std::abs(double(c) / draws - 1.0 / M) <= 0.02);
    }
  }
}

TEST_CASE("client_permutation: shuffle-once is fixed, reshuffling varies") {
  const int n = 8;
  for (int m = 0; m < 4; ++m) {
    const auto p0 = client_permutation(11, ShuffleMode::ShuffleOnce, 0, m, n);
    bool rr_changes = false;
    for (int t = 1; t < 10; ++t) {
      CHECK(client_permutation(11, ShuffleMode::ShuffleOnce, t, m, n).order ==
            p0.order);
      rr_changes =
          rr_changes ||
          client_permutation(11, ShuffleMode::RandomReshuffling, t, m, n).order !=
              p0.order;
    }
    CHECK(rr_changes);
    CHECK(client_permutation(11, ShuffleMode::RandomReshuffling, 0, m, n).order ==
          p0.order);
  }
}

TEST_CASE("swr_formula") {
  CHECK(swr_formula(3.0, 5, 5) == 0.0);
  CHECK(swr_formula(3.0, 5, 1) == doctest::Approx(3.0));
  CHECK(swr_formula(2.0 / 3.0, 3, 2) == doctest::Approx(1.0 / 6.0));
  CHECK(swr_formula(1.0, 1, 1) == 0.0);
  CHECK_THROWS_AS(swr_formula(1.0, 4, 0), InputError);
  CHECK_THROWS_AS(swr_formula(1.0, 4, 5), InputError);
}

TEST_CASE("swr_moments_oracle") {
  SUBCASE("scalars 1, 2, 3 with k = 2") {
    const std::vector<Vector> xs = {Vector::Constant(1, 1.0), Vector::Constant(1, 2.0),
                                    Vector::Constant(1, 3.0)};
    const SwrMoments m = swr_moments_oracle(xs, 2);
    CHECK(m.subsets == 3);
    CHECK(m.mean[0] == doctest::Approx(2.0));
    CHECK(m.variance == doctest::Approx(1.0 / 6.0));
    CHECK(population_variance(xs) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("identical vectors have no variance") {
    const std::vector<Vector> xs(5, Vector::Constant(3, 1.5));
    for (int k = 1; k <= 5; ++k) CHECK(swr_moments_oracle(xs, k).variance == 0.0);
  }
  SUBCASE("k = n has no variance") {
    RngStream rng(3);
    std::vector<Vector> xs(6, Vector(2));
    for (auto& x : xs) x << rng.normal(), rng.normal();
    CHECK(swr_moments_oracle(xs, 6).variance == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("enumeration limit") {
    const std::vector<Vector> xs(kSwrEnumerationLimit + 1, Vector::Zero(1));
    CHECK_THROWS_AS(swr_moments_oracle(xs, 2), ResourceError);
  }
}

TEST_CASE("Lemma-1 variance: subset enumeration, ordered-tuple oracle and formula agree") {
  for (int c = 0; c < 60; ++c) {
    RngStream rng = derive_stream(2024, c, std::nullopt, StreamPurpose::Problem);
    const int n = 2 + static_cast<int>(rng.uniform_below(5));
    const int d = 1 + static_cast<int>(rng.uniform_below(3));
    std::vector<Vector> xs(n, Vector(d));
    for (auto& x : xs) {
      for (int j = 0; j < d; ++j) x[j] = 2.0 * rng.normal();
    }
    const double sigma_sq = population_variance(xs);
    for (int k = 1; k < n; ++k) {
      Vector tuple_mean;
      const double tuple_var = ordered_tuple_variance(xs, k, tuple_mean);
      const SwrMoments m = swr_moments_oracle(xs, k);
      CHECK(std::abs(m.variance - tuple_var) <= 1e-12 * tuple_var);
      CHECK(std::abs(swr_formula(sigma_sq, n, k) - tuple_var) <= 1e-10 * tuple_var);
      CHECK((m.mean - tuple_mean).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("Monte Carlo permutation prefixes match the formula") {
  RngStream data(17);
  const int n = 7, k = 3;
  std::vector<Vector> xs(n, Vector(2));
  for (auto& x : xs) x << data.normal(), data.normal();
  Vector pop = Vector::Zero(2);
  for (const auto& x : xs) pop += x;
  pop /= n;
  RngStream rng(18);
  const int draws = 200000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto p = sample_permutation(n, rng);
    Vector m = Vector::Zero(2);
    for (int j = 0; j < k; ++j) m += xs[p.order[j]];
    acc += (m / k - pop).squaredNorm();
  }
  const double want = swr_formula(population_variance(xs), n, k);
  CHECK(acc / draws == doctest::Approx(want).epsilon(0.02));
}
