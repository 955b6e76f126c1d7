#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "doctest.h"

#include "fedrr/errors.hpp"
#include "fedrr/theory.hpp"
#include "reference_bounds.hpp"

using namespace fedrr;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

// f^1_1(x) = x^2/2, f^1_2(x) = (x - 2)^2/2: x* = 1, f* = 1/2.
FederatedProblem two_quadratics() {
  const Matrix one = Matrix::Identity(1, 1);
  return make_explicit_quadratic_problem({{{one, scalar(0.0)}}, {{one, scalar(2.0)}}});
}

RunConfig config(double cstep, double sstep, int cohort, int T) {
  RunConfig cfg;
  cfg.cstep = cstep;
  cfg.sstep = sstep;
  cfg.cohort = cohort;
  cfg.horizon = T;
  return cfg;
}

bool close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

HeterogeneityStats random_stats(RngStream& rng, int M, int n, bool deltas) {
  HeterogeneityStats s;
  s.M = M;
  s.n = n;
  s.sigma_star_sq = 2.0 * rng.uniform01();
  s.Sigma_star_sq = s.sigma_star_sq * n + 3.0 * rng.uniform01();
  for (int m = 0; m < M; ++m) {
    s.sigma_star_m_sq.push_back(rng.uniform01());
    s.client_grad_norm_sq.push_back(rng.uniform01());
  }
  if (deltas) {
    s.delta_star = rng.uniform01();
    s.D_star_sq = *s.delta_star * n + rng.uniform01();
  }
  return s;
}

int flat_horizon(double d0, double floor, double base) {
  const double ratio = std::max(d0 / floor, 1e8);
  return static_cast<int>(std::ceil(10.0 * std::log(ratio) / -std::log(base))) + 1;
}

}  // namespace

TEST_CASE("heterogeneity_stats by hand") {
  const FederatedProblem p = two_quadratics();
  const HeterogeneityStats s = heterogeneity_stats(p);
  CHECK(s.M == 2);
  CHECK(s.n == 1);
  CHECK(s.sigma_star_sq == doctest::Approx(1.0));
  CHECK(s.sigma_star_m_sq[0] == doctest::Approx(1.0));
  CHECK(s.Sigma_star_sq == doctest::Approx(2.0));
  REQUIRE(s.delta_star);
  CHECK(*s.delta_star == doctest::Approx(0.5));
  CHECK((*s.delta_star_m)[1] == doctest::Approx(0.5));
  CHECK(*s.D_star_sq == doctest::Approx(1.0));
  CHECK(s.delta_uncertainty == 0.0);
}

TEST_CASE("heterogeneity_stats: zero client drift") {
  SUBCASE("homogeneous clients") {
    const FederatedProblem p = make_quadratic_problem(5, 4, 3, 0.5, 2.0, 0.0, 1);
    CHECK(heterogeneity_stats(p).sigma_star_sq <= 1e-24);
  }
  SUBCASE("a single client") {
    const FederatedProblem p = make_quadratic_problem(1, 6, 3, 0.5, 2.0, 3.0, 2);
    const HeterogeneityStats s = heterogeneity_stats(p);
    CHECK(s.sigma_star_sq <= 1e-24);
    CHECK(s.Sigma_star_sq > 0.0);
  }
}

TEST_CASE("heterogeneity_stats needs the optimum") {
  const FederatedProblem p = make_quadratic_problem(2, 2, 2, 0.5, 1.0, 1.0, 3);
  const FederatedProblem bare = p.with_optimum(std::nullopt, std::nullopt);
  try {
    heterogeneity_stats(bare);
    FAIL("expected CapabilityError");
  } catch (const CapabilityError& e) {
    CHECK(e.field() == "x_star");
  }
  try {
    heterogeneity_stats(p, p.x_star(), std::nullopt);
    FAIL("expected CapabilityError");
  } catch (const CapabilityError& e) {
    CHECK(e.field() == "f_star");
  }
}

TEST_CASE("composite statistics match their definitions") {
  const FederatedProblem p = make_quadratic_problem(4, 5, 3, 0.2, 2.0, 1.5, 4);
  const HeterogeneityStats s = heterogeneity_stats(p);
  const Vector& x = *p.x_star();
  double sigma = 0.0, inner = 0.0, drift = 0.0;
  for (const auto& c : p.clients()) {
    sigma += c.gradient(x).squaredNorm() / 4.0;
    double sm = 0.0, inf = 0.0;
    for (const auto& f : c.samples) {
      sm += f->gradient(x).squaredNorm() / 5.0;
      inf += *f->infimum() / 5.0;
    }
    inner += sm / 4.0;
    drift += (*p.f_star() - inf) / 4.0;
  }
  CHECK(close(s.sigma_star_sq, sigma, 1e-12));
  CHECK(close(s.Sigma_star_sq, inner + 5.0 * sigma, 1e-12));
  CHECK(close(*s.D_star_sq, drift + 5.0 * *s.delta_star, 1e-12));
  CHECK(*s.delta_star >= 0.0);
}

TEST_CASE("constant shifts leave the statistics unchanged") {
  const FederatedProblem p = make_quadratic_problem(3, 4, 2, 0.3, 1.0, 1.0, 5);
  const FederatedProblem q = shift_losses(p, 3.25);
  const HeterogeneityStats a = heterogeneity_stats(p);
  const HeterogeneityStats b = heterogeneity_stats(q);
  CHECK(a.sigma_star_sq == b.sigma_star_sq);
  CHECK(a.Sigma_star_sq == b.Sigma_star_sq);
  CHECK(a.sigma_star_m_sq == b.sigma_star_m_sq);
  CHECK(*b.delta_star == doctest::Approx(*a.delta_star).epsilon(1e-12));
  CHECK(*b.D_star_sq == doctest::Approx(*a.D_star_sq).epsilon(1e-12));
}

TEST_CASE("nonconvex statistics use the descent oracle") {
  const FederatedProblem p = make_nonconvex_problem(3, 3, 2, 6);
  const HeterogeneityStats s = heterogeneity_stats(p);
  REQUIRE(s.delta_star);
  CHECK(s.delta_uncertainty > 0.0);
  CHECK(*s.delta_star >= -s.delta_uncertainty);
  for (double dm : *s.delta_star_m) CHECK(dm == doctest::Approx(*p.f_star()));

  StatsOptions no_deltas;
  no_deltas.functional = false;
  CHECK_FALSE(heterogeneity_stats(p, no_deltas).delta_star);
}

TEST_CASE("participation factor") {
  for (int M = 2; M <= 10; ++M) {
    CHECK(participation_factor(M, M) == 0.0);
    CHECK(participation_factor(M, 1) == 1.0);
    for (int C = 1; C < M; ++C) {
      CHECK(participation_factor(M, C + 1) < participation_factor(M, C));
    }
  }
  CHECK(participation_factor(1, 1) == 0.0);
  CHECK_THROWS_AS(participation_factor(3, 0), InputError);
  CHECK_THROWS_AS(participation_factor(3, 4), InputError);
}

TEST_CASE("bound names round-trip") {
  for (BoundKind k : {BoundKind::SC, BoundKind::CVX, BoundKind::NCVX, BoundKind::SmallAlpha}) {
    CHECK(parse_bound_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_bound_kind("theorem1"), InputError);
}

TEST_CASE("bound_sc") {
  const FederatedProblem p = two_quadratics();
  const HeterogeneityStats s = heterogeneity_stats(p);
  SUBCASE("hand evaluation on two quadratics") {
    const RunConfig cfg = config(1.0 / 16.0, 1.0 / 16.0, 1, 10);
    const BoundCurve c = bound_sc(s, 1.0, 1.0, cfg, 4.0);
    REQUIRE(c.values.size() == 11);
    CHECK(c.client_variance[0] == doctest::Approx(5.0 * 2.0 / 256.0));
    CHECK(c.participation[0] == doctest::Approx(0.5));
    CHECK(c.values[10] ==
          doctest::Approx(std::pow(31.0 / 32.0, 10) * 4.0 + 10.0 / 256.0 + 0.5));
  }
  SUBCASE("full participation removes the sampling term") {
    const BoundCurve c = bound_sc(s, 1.0, 1.0, config(1.0 / 32.0, 1.0 / 16.0, 2, 5), 1.0);
    for (double v : c.participation) CHECK(v == 0.0);
  }
  SUBCASE("vanishing client step leaves only the sampling floor") {
    const BoundCurve c = bound_sc(s, 1.0, 1.0, config(1e-9, 1.0 / 16.0, 1, 5000), 1.0);
    CHECK(c.values.back() == doctest::Approx(8.0 / 16.0 * s.sigma_star_sq).epsilon(1e-9));
  }
  SUBCASE("regime errors name the inequality") {
    try {
      bound_sc(s, 1.0, 1.0, config(0.1, 0.05, 1, 5), 1.0);
      FAIL("expected RegimeError");
    } catch (const RegimeError& e) {
      CHECK(std::string(e.what()).find("cstep*n <= sstep") != std::string::npos);
    }
    try {
      bound_sc(s, 1.0, 1.0, config(0.01, 0.5, 1, 5), 1.0);
      FAIL("expected RegimeError");
    } catch (const RegimeError& e) {
      CHECK(std::string(e.what()).find("sstep <= 1/(16L)") != std::string::npos);
    }
    CHECK_THROWS_AS(bound_sc(s, 0.0, 1.0, config(0.01, 0.05, 1, 5), 1.0), RegimeError);
  }
}

TEST_CASE("bound_cvx") {
  const HeterogeneityStats s = heterogeneity_stats(two_quadratics());
  const BoundValue a = bound_cvx(s, 1.0, config(0.01, 0.05, 1, 100), 2.0);
  const BoundValue b = bound_cvx(s, 1.0, config(0.01, 0.05, 1, 200), 2.0);
  CHECK(b.contraction == doctest::Approx(a.contraction / 2.0));
  CHECK(b.client_variance == a.client_variance);
  CHECK(b.participation == a.participation);
  const BoundValue z = bound_cvx(s, 1.0, config(1e-12, 1.0 / 16.0, 2, 100000000), 2.0);
  CHECK(z.total < 1e-5);
  CHECK(z.participation == 0.0);
}

TEST_CASE("bound_ncvx") {
  const HeterogeneityStats s = heterogeneity_stats(two_quadratics());
  const double L = 1.0;
  SUBCASE("full participation") {
    const RunConfig cfg = config(0.1, 0.2, 2, 1);
    const BoundValue v = bound_ncvx(s, L, cfg, 1.0, 7);
    const double base = 1.0 + 1.5 * 0.2 * 0.01 * 1.0;
    CHECK(v.contraction == doctest::Approx(4.0 * std::pow(base, 7) / (0.2 * 7)));
    CHECK(v.participation == 0.0);
  }
  SUBCASE("starting at a minimizer leaves the variance terms") {
    const BoundValue v = bound_ncvx(s, L, config(0.1, 0.2, 1, 1), 0.0, 10);
    CHECK(v.contraction == 0.0);
    CHECK(v.total == doctest::Approx(v.client_variance + v.participation));
  }
  SUBCASE("missing or inconsistent deltas") {
    HeterogeneityStats bare = s;
    bare.delta_star.reset();
    CHECK_THROWS_AS(bound_ncvx(bare, L, config(0.1, 0.2, 1, 1), 1.0, 10), CapabilityError);
    HeterogeneityStats neg = s;
    neg.delta_star = -0.1;
    CHECK_THROWS_AS(bound_ncvx(neg, L, config(0.1, 0.2, 1, 1), 1.0, 10), DataError);
    neg.delta_uncertainty = 0.2;
    CHECK_NOTHROW(bound_ncvx(neg, L, config(0.1, 0.2, 1, 1), 1.0, 10));
  }
  SUBCASE("regime") {
    CHECK_THROWS_AS(bound_ncvx(s, L, config(0.6, 0.2, 1, 1), 1.0, 10), RegimeError);
    CHECK_THROWS_AS(bound_ncvx(s, L, config(0.1, 0.3, 1, 1), 1.0, 10), RegimeError);
  }
}

TEST_CASE("bound_small_alpha") {
  const FederatedProblem p = make_quadratic_problem(4, 3, 2, 0.2, 1.0, 1.0, 7);
  const HeterogeneityStats s = heterogeneity_stats(p);
  const double mu = 0.2, L = 1.0, g = 0.5;
  SUBCASE("alpha = 0 never moves") {
    const BoundCurve c = bound_small_alpha(s, mu, L, config(g, 0.0, 1, 20), 3.0, 2.0);
    for (std::size_t t = 0; t < c.values.size(); ++t) {
      CHECK(c.contraction[t] == 3.0);
      CHECK(c.participation[t] == 0.0);
      CHECK(c.values[t] == doctest::Approx(3.0 + c.client_variance[0]));
    }
  }
  SUBCASE("full participation") {
    const BoundCurve c = bound_small_alpha(s, mu, L, config(g, 0.5 * g * 3, 4, 5), 1.0, 2.0);
    CHECK(c.participation[0] == 0.0);
  }
  SUBCASE("geometric-sum identity") {
    for (double rad : {0.5, 2.0, 10.0}) {
      const BoundCurve c = bound_small_alpha(s, mu, L, config(g, 0.3 * g * 3, 1, 1), 1.0, rad);
      CHECK(close(c.client_variance[0], 2.0 * g * g * rad / mu, 1e-12));
    }
  }
  SUBCASE("regime") {
    CHECK_THROWS_AS(bound_small_alpha(s, mu, L, config(g, g * 3, 1, 5), 1.0, 1.0), RegimeError);
    CHECK_THROWS_AS(bound_small_alpha(s, mu, L, config(2.0, 0.1, 1, 5), 1.0, 1.0), RegimeError);
    CHECK_THROWS_AS(bound_small_alpha(s, 0.0, L, config(g, 0.1, 1, 5), 1.0, 1.0), RegimeError);
  }
}

TEST_CASE("sigma_rad_upper_bound") {
  const HeterogeneityStats s = heterogeneity_stats(two_quadratics());
  CHECK(sigma_rad_upper_bound(s, 1.0, 1, 2) == doctest::Approx(2.5));
  CHECK(sigma_rad_upper_bound(s, 3.0, 1, 2) == doctest::Approx(7.5));

  Matrix A = Matrix::Identity(2, 2);
  const auto q = std::make_shared<QuadraticLoss>(A, Vector::Ones(2));
  FederatedProblem homog({ClientDataset{{q, q}}, ClientDataset{{q, q}}}, 1.0, 1.0,
                         ConvexityClass::StronglyConvex);
  homog = homog.with_optimum(Vector::Ones(2), 0.0);
  CHECK(sigma_rad_upper_bound(heterogeneity_stats(homog), 1.0, 2, 2) == 0.0);
  CHECK_THROWS_AS(sigma_rad_upper_bound(s, 1.0, 1, 3), InputError);
}

TEST_CASE("evaluators agree with the reference formulas") {
  RngStream rng(2025);
  for (int draw = 0; draw < 100; ++draw) {
    const int M = 1 + static_cast<int>(rng.uniform_below(10));
    const int C = 1 + static_cast<int>(rng.uniform_below(M));
    const int n = 1 + static_cast<int>(rng.uniform_below(8));
    const int T = 1 + static_cast<int>(rng.uniform_below(300));
    const double L = 0.5 + 5.0 * rng.uniform01();
    const double mu = L * (0.01 + 0.5 * rng.uniform01());
    const double d0 = 10.0 * rng.uniform01();
    const HeterogeneityStats s = random_stats(rng, M, n, true);

    const double gs = (0.1 + 0.9 * rng.uniform01()) / (16.0 * L);
    const double g = gs / n * (0.05 + 0.95 * rng.uniform01());
    RunConfig cfg = config(g, gs, C, T);
    CHECK(close(bound_sc(s, mu, L, cfg, d0).values[T],
                reference::sc(d0, T, g, gs, n, L, mu, M, C, s.Sigma_star_sq,
                              s.sigma_star_sq),
                1e-14));
    CHECK(close(bound_cvx(s, L, cfg, d0).total,
                reference::cvx(d0, T, g, gs, n, L, M, C, s.Sigma_star_sq, s.sigma_star_sq),
                1e-14));

    const double ng = (0.1 + 0.9 * rng.uniform01()) / (2.0 * n * L);
    const double ngs = (0.1 + 0.9 * rng.uniform01()) / (4.0 * L);
    const double delta0 = 5.0 * rng.uniform01();
    const double got = bound_ncvx(s, L, config(ng, ngs, C, 1), delta0, T).total;
    const double want =
        reference::ncvx(delta0, T, ng, ngs, n, L, M, C, *s.D_star_sq, *s.delta_star);
    INFO(got, " vs ", want, " M=", M, " C=", C, " n=", n, " T=", T);
    CHECK(close(got, want, 1e-14 + 4.0 * T * std::numeric_limits<double>::epsilon()));

    const double ag = (0.1 + 0.9 * rng.uniform01()) / L;
    const double alpha = 0.95 * rng.uniform01();
    const double rad = 5.0 * rng.uniform01();
    CHECK(close(bound_small_alpha(s, mu, L, config(ag, alpha * ag * n, C, T), d0, rad)
                    .values[T],
                reference::small_alpha(d0, T, ag, alpha, n, mu, M, C, s.sigma_star_sq, rad),
                1e-14));
  }
}

TEST_CASE("bound curves are non-negative and flatten to their floor") {
  RngStream rng(7);
  for (int draw = 0; draw < 20; ++draw) {
    const int M = 2 + static_cast<int>(rng.uniform_below(6));
    const int n = 1 + static_cast<int>(rng.uniform_below(5));
    const double L = 1.0, mu = 0.05 + 0.5 * rng.uniform01();
    const HeterogeneityStats s = random_stats(rng, M, n, false);
    const double d0 = 1.0 + 10.0 * rng.uniform01();

    const double gs = 1.0 / 16.0;
    const double base_sc = 1.0 - gs * mu / 2.0;
    RunConfig cfg = config(gs / n, gs, 1, 1);
    const double floor_sc = bound_sc(s, mu, L, cfg, 0.0).values[0];
    cfg.horizon = flat_horizon(d0, floor_sc, base_sc);
    const BoundCurve c = bound_sc(s, mu, L, cfg, d0);
    for (double v : c.values) CHECK(v >= 0.0);
    CHECK(std::abs(c.values.back() - floor_sc) <= floor_sc * 1e-6);

    const double g = 0.5 / L, alpha = 0.3;
    RunConfig acfg = config(g, alpha * g * n, 1, 1);
    const double floor_sa = bound_small_alpha(s, mu, L, acfg, 0.0, 1.0).values[0];
    const double base_sa = 1.0 - alpha + alpha * std::pow(1.0 - g * mu, n);
    acfg.horizon = flat_horizon(d0, floor_sa, base_sa);
    const BoundCurve a = bound_small_alpha(s, mu, L, acfg, d0, 1.0);
    for (double v : a.values) CHECK(v >= 0.0);
    CHECK(std::abs(a.values.back() - floor_sa) <= floor_sa * 1e-6);
  }
}

TEST_CASE("recommended_stepsizes") {
  SUBCASE("strongly convex") {
    const StepsizeSuggestion s =
        recommended_stepsizes(StepsizeRegime::SC, 2.0, 0.1, 5, 2, 4, 1e-3, 1.0);
    CHECK(s.sstep == doctest::Approx(1.0 / 32.0));
    CHECK(s.cstep == doctest::Approx(1.0 / 160.0));
    CHECK(s.note.empty());
  }
  SUBCASE("nonconvex") {
    const StepsizeSuggestion s =
        recommended_stepsizes(StepsizeRegime::NCVX, 2.0, 0.0, 5, 2, 4, 1e-3, 1.0);
    CHECK(s.cstep == doctest::Approx(1.0 / 20.0));
    CHECK(s.sstep == doctest::Approx(1.0 / 8.0));
  }
  SUBCASE("small alpha shrinks the server step with the cohort") {
    const auto small = recommended_stepsizes(StepsizeRegime::SmallAlpha, 1.0, 0.1, 4, 1,
                                             10, 1e-4, 50.0);
    const auto large = recommended_stepsizes(StepsizeRegime::SmallAlpha, 1.0, 0.1, 4, 3,
                                             10, 1e-4, 50.0);
    CHECK(small.sstep < large.sstep);
    CHECK(large.sstep / small.sstep == doctest::Approx(3.0));
    CHECK(small.alpha < 1.0);
    const auto noisier = recommended_stepsizes(StepsizeRegime::SmallAlpha, 1.0, 0.1, 4, 1,
                                               10, 1e-4, 100.0);
    CHECK(noisier.sstep == doctest::Approx(small.sstep / 2.0));
  }
  SUBCASE("no sampling noise") {
    const auto s = recommended_stepsizes(StepsizeRegime::SmallAlpha, 1.0, 0.1, 4, 10, 10,
                                         1e-4, 50.0);
    CHECK(s.alpha == 1.0);
    CHECK_FALSE(s.note.empty());
  }
}

TEST_CASE("check_stepsizes") {
  const auto find = [](const std::vector<RegimeCheck>& v, BoundKind k) {
    for (const auto& r : v) {
      if (r.theorem == k) return r;
    }
    return RegimeCheck{};
  };
  const double L = 2.0, mu = 0.1;
  const int n = 4;
  SUBCASE("at the strongly convex boundary") {
    const double gs = 1.0 / (16.0 * L);
    const auto v = check_stepsizes(config(gs / n, gs, 1, 1), L, mu, n);
    CHECK(find(v, BoundKind::SC).satisfied);
    CHECK(find(v, BoundKind::CVX).satisfied);
  }
  SUBCASE("server step 1/L") {
    const auto v = check_stepsizes(config(0.01, 1.0 / L, 1, 1), L, mu, n);
    CHECK(find(v, BoundKind::SC).violated.find("sstep <= 1/(16L)") != std::string::npos);
    CHECK(find(v, BoundKind::CVX).violated.find("sstep <= 1/(16L)") != std::string::npos);
    CHECK(find(v, BoundKind::NCVX).violated.find("sstep <= 1/(4L)") != std::string::npos);
  }
  SUBCASE("alpha = 1") {
    const auto v = check_stepsizes(config(0.1, 0.4, 1, 1), L, mu, n);
    CHECK(find(v, BoundKind::SmallAlpha).violated.find("0 <= alpha < 1") !=
          std::string::npos);
  }
}
