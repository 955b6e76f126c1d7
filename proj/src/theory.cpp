#include "fedrr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fedrr/errors.hpp"

namespace fedrr {

namespace {

// a <= b up to rounding in how callers form boundary stepsizes.
bool leq(double a, double b) { return a <= b + 1e-12 * std::abs(b); }

void append(std::string& acc, const std::string& item) {
  if (!acc.empty()) acc += "; ";
  acc += item;
}

std::string sc_violations(const RunConfig& cfg, double L, int n) {
  std::string v;
  if (!leq(cfg.cstep * n, cfg.sstep)) append(v, "cstep*n <= sstep");
  if (!leq(cfg.sstep, 1.0 / (16.0 * L))) append(v, "sstep <= 1/(16L)");
  return v;
}

std::string ncvx_violations(const RunConfig& cfg, double L, int n) {
  std::string v;
  if (!leq(cfg.cstep, 1.0 / (2.0 * n * L))) append(v, "cstep <= 1/(2nL)");
  if (!leq(cfg.sstep, 1.0 / (4.0 * L))) append(v, "sstep <= 1/(4L)");
  return v;
}

std::string small_alpha_violations(const RunConfig& cfg, double L, double mu,
                                   int n) {
  std::string v;
  if (!leq(cfg.cstep, 1.0 / L)) append(v, "cstep <= 1/L");
  const double alpha = cfg.sstep / (cfg.cstep * n);
  if (!(alpha >= 0.0 && alpha < 1.0)) append(v, "0 <= alpha < 1");
  if (!(mu > 0.0)) append(v, "mu > 0");
  return v;
}

// Minimum of a client objective: exact for all-quadratic clients, else the
// descent oracle. Returns the value and whether it is exact.
std::pair<double, bool> client_infimum(const FederatedProblem& problem, int m,
                                       const FStarOptions& oracle) {
  const ClientDataset& client = problem.client(m);
  const int d = problem.dim();
  Matrix hessian = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  bool quadratic = true;
  for (const auto& s : client.samples) {
    const auto* q = dynamic_cast<const QuadraticLoss*>(s.get());
    if (q == nullptr) {
      quadratic = false;
      break;
    }
    hessian += q->hessian();
    rhs += q->hessian() * q->center();
  }
  if (quadratic) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (hi > 0.0 && lo > 1e-13 * hi) {
      const Vector coeffs = eig.eigenvectors().transpose() * rhs;
      const Vector x = eig.eigenvectors() * coeffs.cwiseQuotient(eig.eigenvalues());
      return {client.value(x), true};
    }
  }
  return {estimate_client_minimum(problem, m, oracle).value, false};
}

}  // namespace

double participation_factor(int M, int C) {
  if (M < 1 || C < 1 || C > M) {
    throw InputError("participation_factor: need 1 <= C <= M");
  }
  return static_cast<double>(M - C) /
         (static_cast<double>(C) * std::max(M - 1, 1));
}

HeterogeneityStats heterogeneity_stats(const FederatedProblem& problem,
                                       const std::optional<Vector>& x_star,
                                       const std::optional<double>& f_star,
                                       const StatsOptions& opts) {
  if (!x_star) throw CapabilityError("x_star", "heterogeneity_stats");
  if (!f_star) throw CapabilityError("f_star", "heterogeneity_stats");
  if (x_star->size() != problem.dim()) {
    throw InputError("heterogeneity_stats: x_star dimension mismatch");
  }
  const int M = problem.num_clients();
  const int n = problem.samples_per_client();

  HeterogeneityStats s;
  s.M = M;
  s.n = n;
  s.sigma_star_m_sq.resize(M);
  s.client_grad_norm_sq.resize(M);
  Vector g;
  for (int m = 0; m < M; ++m) {
    const ClientDataset& client = problem.client(m);
    Vector client_grad = Vector::Zero(problem.dim());
    double sample_sq = 0.0;
    for (const auto& sample : client.samples) {
      sample->gradient_into(*x_star, g);
      sample_sq += g.squaredNorm();
      client_grad += g;
    }
    client_grad /= static_cast<double>(n);
    s.sigma_star_m_sq[m] = sample_sq / n;
    s.client_grad_norm_sq[m] = client_grad.squaredNorm();
  }
  s.sigma_star_sq =
      std::accumulate(s.client_grad_norm_sq.begin(), s.client_grad_norm_sq.end(), 0.0) / M;
  s.Sigma_star_sq =
      std::accumulate(s.sigma_star_m_sq.begin(), s.sigma_star_m_sq.end(), 0.0) / M +
      n * s.sigma_star_sq;

  // Functional dissimilarity needs every per-sample infimum.
  bool infima_known = opts.functional;
  std::vector<double> sample_inf_mean(M, 0.0);
  for (int m = 0; m < M && infima_known; ++m) {
    for (const auto& sample : problem.client(m).samples) {
      const auto inf = sample->infimum();
      if (!inf) {
        infima_known = false;
        break;
      }
      sample_inf_mean[m] += *inf;
    }
    sample_inf_mean[m] /= n;
  }
  if (!infima_known) return s;

  std::vector<double> delta_m(M);
  double client_inf_sum = 0.0;
  bool all_exact = true;
  for (int m = 0; m < M; ++m) {
    delta_m[m] = *f_star - sample_inf_mean[m];
    const auto [inf, exact] = client_infimum(problem, m, opts.client_oracle);
    client_inf_sum += inf;
    all_exact = all_exact && exact;
  }
  s.delta_star = *f_star - client_inf_sum / M;
  s.D_star_sq =
      std::accumulate(delta_m.begin(), delta_m.end(), 0.0) / M + n * *s.delta_star;
  s.delta_star_m = std::move(delta_m);
  s.delta_uncertainty =
      problem.f_star_tolerance() + (all_exact ? 0.0 : opts.client_oracle.tol);
  return s;
}

HeterogeneityStats heterogeneity_stats(const FederatedProblem& problem,
                                       const StatsOptions& opts) {
  return heterogeneity_stats(problem, problem.x_star(), problem.f_star(), opts);
}

const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::SC:
      return "sc";
    case BoundKind::CVX:
      return "cvx";
    case BoundKind::NCVX:
      return "ncvx";
    case BoundKind::SmallAlpha:
      return "small_alpha";
  }
  return "unknown";
}

BoundKind parse_bound_kind(const std::string& name) {
  for (BoundKind k : {BoundKind::SC, BoundKind::CVX, BoundKind::NCVX,
                      BoundKind::SmallAlpha}) {
    if (name == to_string(k)) return k;
  }
  throw InputError("unknown bound '" + name + "'");
}

BoundCurve bound_sc(const HeterogeneityStats& stats, double mu, double L,
                    const RunConfig& cfg, double dist0_sq) {
  std::string violated = sc_violations(cfg, L, stats.n);
  if (!(mu > 0.0)) append(violated, "mu > 0");
  if (!violated.empty()) throw RegimeError("bound_sc: violated " + violated);

  const int n = stats.n;
  const double pf = participation_factor(stats.M, cfg.cohort);
  const double client_term =
      5.0 * cfg.cstep * cfg.cstep * n * L / mu * stats.Sigma_star_sq;
  const double part_term = 8.0 * cfg.sstep / mu * pf * stats.sigma_star_sq;
  const double base = 1.0 - cfg.sstep * mu / 2.0;

  BoundCurve c;
  c.theorem = BoundKind::SC;
  for (int t = 0; t <= cfg.horizon; ++t) {
    const double contraction = std::pow(base, t) * dist0_sq;
    c.contraction.push_back(contraction);
    c.client_variance.push_back(client_term);
    c.participation.push_back(part_term);
    c.values.push_back(contraction + client_term + part_term);
  }
  return c;
}

BoundValue bound_cvx(const HeterogeneityStats& stats, double L,
                     const RunConfig& cfg, double dist0_sq) {
  const std::string violated = sc_violations(cfg, L, stats.n);
  if (!violated.empty()) throw RegimeError("bound_cvx: violated " + violated);
  if (!(cfg.sstep > 0.0)) throw RegimeError("bound_cvx: violated sstep > 0");

  const int n = stats.n;
  const double pf = participation_factor(stats.M, cfg.cohort);
  BoundValue b;
  b.contraction = 5.0 * dist0_sq / (2.0 * cfg.sstep * cfg.horizon);
  b.client_variance = 7.0 * cfg.cstep * cfg.cstep * n * L * stats.Sigma_star_sq;
  b.participation = 10.0 * cfg.sstep * pf * stats.sigma_star_sq;
  b.total = b.contraction + b.client_variance + b.participation;
  return b;
}

BoundValue bound_ncvx(const HeterogeneityStats& stats, double L,
                      const RunConfig& cfg, double delta0, int T) {
  std::string violated = ncvx_violations(cfg, L, stats.n);
  if (!(cfg.sstep > 0.0)) append(violated, "sstep > 0");
  if (!violated.empty()) throw RegimeError("bound_ncvx: violated " + violated);
  if (T < 1) throw InputError("bound_ncvx: T must be >= 1");
  if (!stats.delta_star || !stats.D_star_sq) {
    throw CapabilityError("delta_star", "bound_ncvx");
  }
  const double tol = stats.delta_uncertainty + 1e-12;
  if (*stats.delta_star < -tol || *stats.D_star_sq < -tol) {
    throw DataError("bound_ncvx: negative functional dissimilarity beyond "
                    "estimation tolerance");
  }
  const double delta_star = std::max(0.0, *stats.delta_star);
  const double D_star_sq = std::max(0.0, *stats.D_star_sq);

  const int n = stats.n;
  const double pf = participation_factor(stats.M, cfg.cohort);
  const double g2 = cfg.cstep * cfg.cstep;
  const double L3 = L * L * L;
  const double base = 1.0 + 2.0 * L * L * cfg.sstep * cfg.sstep * pf +
                      1.5 * cfg.sstep * g2 * n * n * L3;

  BoundValue b;
  b.contraction = 4.0 * std::pow(base, T) * delta0 / (cfg.sstep * T);
  b.client_variance = 6.0 * g2 * n * L3 * D_star_sq;
  b.participation = 8.0 * L * L * cfg.sstep * pf * delta_star;
  b.total = b.contraction + b.client_variance + b.participation;
  return b;
}

BoundCurve bound_small_alpha(const HeterogeneityStats& stats, double mu,
                             double L, const RunConfig& cfg, double dist0_sq,
                             double sigma_rad_sq) {
  const int n = stats.n;
  const std::string violated = small_alpha_violations(cfg, L, mu, n);
  if (!violated.empty()) {
    throw RegimeError("bound_small_alpha: violated " + violated);
  }
  const double alpha = cfg.sstep / (cfg.cstep * n);
  const double pf = participation_factor(stats.M, cfg.cohort);
  const double r = 1.0 - cfg.cstep * mu;
  const double q = std::pow(r, n);
  double geometric = 0.0;
  for (int i = 0; i < n; ++i) geometric += std::pow(r, i);

  const double part_term = alpha / ((1.0 - alpha) * (1.0 - q)) * cfg.cstep *
                           cfg.cstep * pf * stats.sigma_star_sq;
  const double rr_term = 2.0 * cfg.cstep * cfg.cstep * cfg.cstep *
                         sigma_rad_sq * geometric / (1.0 - q);
  const double base = 1.0 - alpha + alpha * q;

  BoundCurve c;
  c.theorem = BoundKind::SmallAlpha;
  for (int t = 0; t <= cfg.horizon; ++t) {
    const double contraction = std::pow(base, t) * dist0_sq;
    c.contraction.push_back(contraction);
    c.client_variance.push_back(rr_term);
    c.participation.push_back(part_term);
    c.values.push_back(contraction + part_term + rr_term);
  }
  return c;
}

double sigma_rad_upper_bound(const HeterogeneityStats& stats, double L, int n,
                             int M) {
  if (static_cast<int>(stats.client_grad_norm_sq.size()) != M ||
      static_cast<int>(stats.sigma_star_m_sq.size()) != M) {
    throw InputError("sigma_rad_upper_bound: stats do not have M clients");
  }
  double acc = 0.0;
  for (int m = 0; m < M; ++m) {
    acc += static_cast<double>(n) * n * stats.client_grad_norm_sq[m] +
           n / 4.0 * stats.sigma_star_m_sq[m];
  }
  return L * acc;
}

StepsizeSuggestion recommended_stepsizes(StepsizeRegime regime, double L,
                                         double mu, int n, int C, int M,
                                         double epsilon, double sigma_star_sq) {
  if (!(epsilon > 0.0)) throw InputError("recommended_stepsizes: epsilon must be > 0");
  if (!(L > 0.0) || n < 1) throw InputError("recommended_stepsizes: bad L or n");
  StepsizeSuggestion s;
  switch (regime) {
    case StepsizeRegime::SC:
    case StepsizeRegime::CVX:
      s.sstep = 1.0 / (16.0 * L);
      s.cstep = s.sstep / n;
      s.governing = "cstep*n <= sstep <= 1/(16L)";
      if (regime == StepsizeRegime::SC && !(mu > 0.0)) {
        s.note = "mu = 0: the strongly convex bound does not apply";
      }
      break;
    case StepsizeRegime::NCVX:
      s.cstep = 1.0 / (2.0 * n * L);
      s.sstep = 1.0 / (4.0 * L);
      s.governing = "cstep <= 1/(2nL), sstep <= 1/(4L)";
      break;
    case StepsizeRegime::SmallAlpha: {
      s.cstep = 1.0 / L;
      s.governing = "cstep <= 1/L, 0 <= alpha < 1, alpha ~ n eps C/(cstep sigma*^2)";
      const double pf = participation_factor(M, C);
      if (pf == 0.0 || sigma_star_sq <= 0.0) {
        s.alpha = 1.0;
        s.note = "no client-sampling noise to damp; alpha -> 1 (plain averaging)";
      } else {
        s.alpha = std::min(0.5, n * epsilon * C / (s.cstep * sigma_star_sq));
      }
      s.sstep = s.alpha * s.cstep * n;
      if (!(mu > 0.0)) append(s.note, "mu = 0: the small-alpha bound does not apply");
      break;
    }
  }
  if (regime != StepsizeRegime::SmallAlpha) s.alpha = s.sstep / (s.cstep * n);
  return s;
}

std::vector<RegimeCheck> check_stepsizes(const RunConfig& cfg, double L,
                                         double mu, int n) {
  std::vector<RegimeCheck> out;
  std::string sc = sc_violations(cfg, L, n);
  const std::string cvx = sc;
  if (!(mu > 0.0)) append(sc, "mu > 0");
  out.push_back({BoundKind::SC, sc.empty(), sc});
  out.push_back({BoundKind::CVX, cvx.empty(), cvx});
  const std::string ncvx = ncvx_violations(cfg, L, n);
  out.push_back({BoundKind::NCVX, ncvx.empty(), ncvx});
  const std::string sa = small_alpha_violations(cfg, L, mu, n);
  out.push_back({BoundKind::SmallAlpha, sa.empty(), sa});
  return out;
}

}  // namespace fedrr
