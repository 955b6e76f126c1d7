#include "fedrr/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "fedrr/errors.hpp"
#include "fedrr/libsvm.hpp"

namespace fedrr {

void require_finite(const Vector& x, const char* context) {
  if (!x.allFinite()) {
    throw InputError(std::string(context) + ": non-finite entry");
  }
}

// ---------------------------------------------------------------------------
// Sample losses

QuadraticLoss::QuadraticLoss(Matrix hessian, Vector center, double offset)
    : hessian_(std::move(hessian)), center_(std::move(center)), offset_(offset) {
  const auto d = center_.size();
  if (d < 1 || hessian_.rows() != d || hessian_.cols() != d) {
    throw InputError("QuadraticLoss: hessian/center dimension mismatch");
  }
  require_finite(center_, "QuadraticLoss center");
  if (!hessian_.allFinite()) {
    throw InputError("QuadraticLoss: non-finite hessian");
  }
  const double scale = 1.0 + hessian_.cwiseAbs().maxCoeff();
  if ((hessian_ - hessian_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InputError("QuadraticLoss: hessian is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian_, Eigen::EigenvaluesOnly);
  min_eig_ = eig.eigenvalues().minCoeff();
  max_eig_ = eig.eigenvalues().maxCoeff();
  if (min_eig_ < -1e-12 * scale) {
    throw InputError("QuadraticLoss: hessian is not positive semidefinite");
  }
}

double QuadraticLoss::value(const Vector& x) const {
  const Vector r = x - center_;
  return 0.5 * r.dot(hessian_ * r) + offset_;
}

void QuadraticLoss::gradient_into(const Vector& x, Vector& out) const {
  out.noalias() = hessian_ * (x - center_);
}

std::optional<Vector> QuadraticLoss::minimizer() const { return center_; }

namespace {

// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

// 1 / (1 + exp(z))
double sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

}  // namespace

LogisticLoss::LogisticLoss(Vector features, double label, double lambda)
    : features_(std::move(features)), label_(label), lambda_(lambda) {
  if (features_.size() < 1) throw InputError("LogisticLoss: empty features");
  require_finite(features_, "LogisticLoss features");
  if (label_ != 1.0 && label_ != -1.0) {
    throw InputError("LogisticLoss: label must be -1 or +1");
  }
  if (!(lambda_ >= 0.0)) throw InputError("LogisticLoss: lambda must be >= 0");

  // The minimizer lies on the line through a; with z = y a^T x it solves
  // z = (||a||^2 / lambda) sigma(-z), a monotone scalar equation.
  const double a_sq = features_.squaredNorm();
  if (lambda_ == 0.0) {
    infimum_ = a_sq == 0.0 ? std::log(2.0) : 0.0;
  } else if (a_sq == 0.0) {
    infimum_ = std::log(2.0);
  } else {
    const double ratio = a_sq / lambda_;
    double lo = 0.0;
    double hi = ratio;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid - ratio * sigmoid_neg(mid) > 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    const double z = 0.5 * (lo + hi);
    infimum_ = softplus_neg(z) + 0.5 * lambda_ * z * z / a_sq;
  }
}

double LogisticLoss::value(const Vector& x) const {
  return softplus_neg(label_ * features_.dot(x)) +
         0.5 * lambda_ * x.squaredNorm();
}

void LogisticLoss::gradient_into(const Vector& x, Vector& out) const {
  const double weight = -label_ * sigmoid_neg(label_ * features_.dot(x));
  out = weight * features_ + lambda_ * x;
}

std::optional<double> LogisticLoss::smoothness() const {
  return 0.25 * features_.squaredNorm() + lambda_;
}

SaturatingSquareLoss::SaturatingSquareLoss(Vector direction, double target)
    : direction_(std::move(direction)), target_(target) {
  if (direction_.size() < 1) {
    throw InputError("SaturatingSquareLoss: empty direction");
  }
  require_finite(direction_, "SaturatingSquareLoss direction");
}

double SaturatingSquareLoss::value(const Vector& x) const {
  const double s = direction_.dot(x) - target_;
  const double s2 = s * s;
  return s2 / (1.0 + s2);
}

void SaturatingSquareLoss::gradient_into(const Vector& x, Vector& out) const {
  const double s = direction_.dot(x) - target_;
  const double denom = 1.0 + s * s;
  out = (2.0 * s / (denom * denom)) * direction_;
}

std::optional<double> SaturatingSquareLoss::smoothness() const {
  return 2.0 * direction_.squaredNorm();
}

ShiftedLoss::ShiftedLoss(SampleLossPtr base, double shift)
    : base_(std::move(base)), shift_(shift) {
  if (!base_) throw InputError("ShiftedLoss: null base");
}

std::optional<double> ShiftedLoss::infimum() const {
  if (auto inf = base_->infimum()) return *inf + shift_;
  return std::nullopt;
}

FunctionLoss::FunctionLoss(int dim, ValueFn value, GradientFn gradient,
                           std::optional<double> smoothness,
                           std::optional<double> infimum)
    : dim_(dim),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      smoothness_(smoothness),
      infimum_(infimum) {
  if (dim_ < 1) throw InputError("FunctionLoss: dim must be >= 1");
}

// ---------------------------------------------------------------------------
// Datasets and the federated objective

double ClientDataset::value(const Vector& x) const {
  double acc = 0.0;
  for (const auto& s : samples) acc += s->value(x);
  return acc / static_cast<double>(samples.size());
}

Vector ClientDataset::gradient(const Vector& x) const {
  Vector acc = Vector::Zero(x.size());
  Vector g;
  for (const auto& s : samples) {
    s->gradient_into(x, g);
    acc += g;
  }
  acc /= static_cast<double>(samples.size());
  return acc;
}

const char* to_string(ConvexityClass c) {
  switch (c) {
    case ConvexityClass::StronglyConvex:
      return "strongly_convex";
    case ConvexityClass::Convex:
      return "convex";
    case ConvexityClass::Nonconvex:
      return "nonconvex";
  }
  return "unknown";
}

FederatedProblem::FederatedProblem(std::vector<ClientDataset> clients,
                                   double L, double mu,
                                   ConvexityClass convexity)
    : clients_(std::move(clients)), L_(L), mu_(mu), convexity_(convexity) {
  if (clients_.empty()) throw InputError("FederatedProblem: no clients");
  n_ = clients_.front().size();
  if (n_ < 1) throw InputError("FederatedProblem: empty client dataset");
  if (!clients_.front().samples.front()) {
    throw InputError("FederatedProblem: null sample");
  }
  d_ = clients_.front().samples.front()->dim();
  for (std::size_t m = 0; m < clients_.size(); ++m) {
    if (clients_[m].size() != n_) {
      throw InputError("FederatedProblem: client " + std::to_string(m) +
                       " has " + std::to_string(clients_[m].size()) +
                       " samples, expected " + std::to_string(n_) +
                       " (equal local dataset sizes are required)");
    }
    for (const auto& s : clients_[m].samples) {
      if (!s || s->dim() != d_) {
        throw InputError("FederatedProblem: sample dimension mismatch");
      }
    }
  }
  if (!(L_ > 0.0) || !std::isfinite(L_)) {
    throw InputError("FederatedProblem: L must be positive");
  }
  if (!(mu_ >= 0.0) || mu_ > L_) {
    throw InputError("FederatedProblem: need 0 <= mu <= L");
  }
}

FederatedProblem FederatedProblem::with_optimum(std::optional<Vector> x_star,
                                                std::optional<double> f_star,
                                                double f_star_tolerance) const {
  if (x_star) check_dim(*x_star, "with_optimum");
  FederatedProblem copy = *this;
  copy.x_star_ = std::move(x_star);
  copy.f_star_ = f_star;
  copy.f_star_tol_ = f_star_tolerance;
  return copy;
}

void FederatedProblem::check_dim(const Vector& x, const char* context) const {
  if (x.size() != d_) {
    throw InputError(std::string(context) + ": expected dimension " +
                     std::to_string(d_) + ", got " + std::to_string(x.size()));
  }
}

double FederatedProblem::value(const Vector& x) const {
  check_dim(x, "eval_f");
  double acc = 0.0;
  for (const auto& c : clients_) acc += c.value(x);
  return acc / static_cast<double>(clients_.size());
}

Vector FederatedProblem::gradient(const Vector& x) const {
  check_dim(x, "grad_f");
  Vector acc = Vector::Zero(d_);
  for (const auto& c : clients_) acc += c.gradient(x);
  acc /= static_cast<double>(clients_.size());
  return acc;
}

double eval_f(const FederatedProblem& problem, const Vector& x) {
  return problem.value(x);
}

Vector grad_f(const FederatedProblem& problem, const Vector& x) {
  return problem.gradient(x);
}

// ---------------------------------------------------------------------------
// Quadratic problems

Vector solve_quadratic_optimum(const FederatedProblem& problem) {
  const int d = problem.dim();
  Matrix hessian_sum = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (const auto& client : problem.clients()) {
    for (const auto& s : client.samples) {
      const auto* q = dynamic_cast<const QuadraticLoss*>(s.get());
      if (q == nullptr) {
        throw InputError("solve_quadratic_optimum: non-quadratic sample");
      }
      hessian_sum += q->hessian();
      rhs += q->hessian() * q->center();
    }
  }
  const double count =
      static_cast<double>(problem.num_clients()) * problem.samples_per_client();
  const Matrix avg_hessian = hessian_sum / count;
  rhs /= count;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(avg_hessian);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo <= 1e-13 * hi) {
    throw DegeneracyError("solve_quadratic_optimum: average Hessian is singular");
  }
  const Vector coeffs = eig.eigenvectors().transpose() * rhs;
  return eig.eigenvectors() * coeffs.cwiseQuotient(eig.eigenvalues());
}

FederatedProblem make_explicit_quadratic_problem(
    const std::vector<std::vector<QuadraticTerm>>& terms) {
  std::vector<ClientDataset> clients;
  double L = 0.0;
  double mu = std::numeric_limits<double>::infinity();
  for (const auto& client_terms : terms) {
    ClientDataset client;
    for (const auto& t : client_terms) {
      auto q = std::make_shared<QuadraticLoss>(t.hessian, t.center);
      L = std::max(L, q->max_eigenvalue());
      mu = std::min(mu, std::max(0.0, q->min_eigenvalue()));
      client.samples.push_back(std::move(q));
    }
    clients.push_back(std::move(client));
  }
  const auto cls =
      mu > 0.0 ? ConvexityClass::StronglyConvex : ConvexityClass::Convex;
  FederatedProblem problem(std::move(clients), L, std::min(mu, L), cls);
  Vector x_star = solve_quadratic_optimum(problem);
  const double f_star = problem.value(x_star);
  return problem.with_optimum(std::move(x_star), f_star);
}

namespace {

Matrix random_orthogonal(int d, RngStream& rng) {
  Matrix g(d, d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Vector random_normal_vector(int d, RngStream& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

Vector random_sphere_point(int d, double radius, RngStream& rng) {
  if (radius == 0.0) return Vector::Zero(d);
  Vector v;
  do {
    v = random_normal_vector(d, rng);
  } while (v.norm() == 0.0);
  return radius * v / v.norm();
}

}  // namespace

FederatedProblem make_quadratic_problem(int M, int n, int d, double mu,
                                        double L, double heterogeneity,
                                        std::uint64_t seed) {
  if (M < 1 || n < 1 || d < 1) {
    throw InputError("make_quadratic_problem: M, n, d must be >= 1");
  }
  if (!(mu > 0.0)) throw InputError("make_quadratic_problem: mu must be > 0");
  if (mu > L) throw InputError("make_quadratic_problem: mu must be <= L");
  if (!(heterogeneity >= 0.0)) {
    throw InputError("make_quadratic_problem: heterogeneity must be >= 0");
  }

  RngStream rng = derive_stream(seed, 0, std::nullopt, StreamPurpose::Problem);
  std::vector<Matrix> hessians;
  std::vector<Vector> base_centers;
  for (int i = 0; i < n; ++i) {
    Vector eigs(d);
    for (int j = 0; j < d; ++j) eigs[j] = mu + (L - mu) * rng.uniform01();
    if (d >= 2) {
      std::sort(eigs.begin(), eigs.end());
      eigs[0] = mu;
      eigs[d - 1] = L;
    }
    const Matrix q = random_orthogonal(d, rng);
    Matrix a = q * eigs.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose());
    hessians.push_back(std::move(a));
    base_centers.push_back(random_normal_vector(d, rng));
  }

  std::vector<std::vector<QuadraticTerm>> terms(M);
  for (int m = 0; m < M; ++m) {
    const Vector offset = random_sphere_point(d, heterogeneity, rng);
    for (int i = 0; i < n; ++i) {
      terms[m].push_back({hessians[i], base_centers[i] + offset});
    }
  }

  std::vector<ClientDataset> clients;
  for (const auto& client_terms : terms) {
    ClientDataset client;
    for (const auto& t : client_terms) {
      client.samples.push_back(
          std::make_shared<QuadraticLoss>(t.hessian, t.center));
    }
    clients.push_back(std::move(client));
  }
  FederatedProblem problem(std::move(clients), L, mu,
                           ConvexityClass::StronglyConvex);
  Vector x_star = solve_quadratic_optimum(problem);
  const double f_star = problem.value(x_star);
  return problem.with_optimum(std::move(x_star), f_star);
}

// ---------------------------------------------------------------------------
// Logistic regression

FederatedProblem make_logreg_problem(const LibsvmData& data, int M,
                                     double lambda,
                                     std::uint64_t partition_seed) {
  if (M < 1) throw InputError("make_logreg_problem: M must be >= 1");
  if (!(lambda >= 0.0)) {
    throw InputError("make_logreg_problem: lambda must be >= 0");
  }
  const int count = static_cast<int>(data.rows.size());
  if (count < M) {
    throw InputError("make_logreg_problem: " + std::to_string(count) +
                     " rows cannot fill " + std::to_string(M) + " clients");
  }
  if (data.dim < 1) throw InputError("make_logreg_problem: no features");
  const std::vector<double> labels = coerce_binary_labels(data.rows);

  RngStream rng = derive_stream(partition_seed, 0, std::nullopt,
                                StreamPurpose::Partition);
  const Permutation order = sample_permutation(count, rng);
  const int n = count / M;

  std::vector<ClientDataset> clients(M);
  double max_sq = 0.0;
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < n; ++i) {
      const int r = order.order[m * n + i];
      Vector a = Vector::Zero(data.dim);
      for (const auto& [idx, val] : data.rows[r].features) a[idx - 1] = val;
      max_sq = std::max(max_sq, a.squaredNorm());
      clients[m].samples.push_back(
          std::make_shared<LogisticLoss>(std::move(a), labels[r], lambda));
    }
  }
  const double L = 0.25 * max_sq + lambda;
  if (!(L > 0.0)) throw InputError("make_logreg_problem: all-zero features");
  const auto cls =
      lambda > 0.0 ? ConvexityClass::StronglyConvex : ConvexityClass::Convex;
  return FederatedProblem(std::move(clients), L, lambda, cls);
}

LibsvmData synthetic_classification_rows(int count, int d, double label_noise,
                                         std::uint64_t seed) {
  if (count < 0 || d < 1) {
    throw InputError("synthetic_classification_rows: bad size");
  }
  RngStream rng = derive_stream(seed, 0, std::nullopt, StreamPurpose::Problem);
  const Vector separator = random_normal_vector(d, rng);
  LibsvmData data;
  data.dim = d;
  for (int r = 0; r < count; ++r) {
    const Vector a = random_normal_vector(d, rng);
    double y = a.dot(separator) >= 0.0 ? 1.0 : -1.0;
    if (rng.uniform01() < label_noise) y = -y;
    SparseRow row;
    row.label = y;
    for (int j = 0; j < d; ++j) row.features.emplace_back(j + 1, a[j]);
    data.rows.push_back(std::move(row));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Descent oracle

namespace {

struct DescentRun {
  double value;
  Vector x;
  bool converged;
  long long iterations;
};

template <typename ValueFn, typename GradFn>
DescentRun descend(const ValueFn& value, const GradFn& gradient, double L,
                   Vector x, double tol, int max_iters) {
  const double step = 1.0 / L;
  Vector g = gradient(x);
  long long it = 0;
  while (it < max_iters && g.norm() > tol) {
    x -= step * g;
    g = gradient(x);
    ++it;
  }
  return {value(x), std::move(x), g.norm() <= tol, it};
}

template <typename ValueFn, typename GradFn>
FStarEstimate multi_start(const FederatedProblem& problem,
                          const ValueFn& value, const GradFn& gradient,
                          const FStarOptions& opts, std::int64_t stream_client) {
  if (opts.restarts < 1) throw InputError("descent oracle: restarts must be >= 1");
  const int d = problem.dim();
  RngStream rng = derive_stream(opts.seed, 0, stream_client,
                                StreamPurpose::Restart);
  FStarEstimate best;
  best.value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    Vector start;
    if (r == 0) {
      if (opts.first_start) {
        start = *opts.first_start;
      } else if (problem.x_star()) {
        start = *problem.x_star();
      } else {
        start = Vector::Zero(d);
      }
    } else {
      start = opts.start_scale * random_normal_vector(d, rng);
    }
    if (start.size() != d) throw InputError("descent oracle: start dimension");
    DescentRun run = descend(value, gradient, problem.L(), std::move(start),
                             opts.tol, opts.max_iters);
    best.iterations += run.iterations;
    if (run.converged) ++best.runs_converged;
    if (run.value < best.value) {
      best.value = run.value;
      best.argmin = std::move(run.x);
      best.converged = run.converged;
    }
  }
  return best;
}

}  // namespace

FStarEstimate estimate_minimum(const FederatedProblem& problem,
                               const FStarOptions& opts) {
  return multi_start(
      problem, [&](const Vector& x) { return problem.value(x); },
      [&](const Vector& x) { return problem.gradient(x); }, opts, -1);
}

FStarEstimate estimate_client_minimum(const FederatedProblem& problem, int m,
                                      const FStarOptions& opts) {
  const ClientDataset& client = problem.client(m);
  return multi_start(
      problem, [&](const Vector& x) { return client.value(x); },
      [&](const Vector& x) { return client.gradient(x); }, opts, m);
}

double estimate_f_star(const FederatedProblem& problem, int restarts,
                       double tol) {
  FStarOptions opts;
  opts.restarts = restarts;
  opts.tol = tol;
  return estimate_minimum(problem, opts).value;
}

FederatedProblem make_nonconvex_problem(int M, int n, int d,
                                        std::uint64_t seed,
                                        const FStarOptions& opts) {
  if (M < 1 || n < 1 || d < 1) {
    throw InputError("make_nonconvex_problem: M, n, d must be >= 1");
  }
  RngStream rng = derive_stream(seed, 0, std::nullopt, StreamPurpose::Problem);
  std::vector<ClientDataset> clients(M);
  double L = 0.0;
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < n; ++i) {
      Vector a = random_normal_vector(d, rng);
      const double b = rng.normal();
      auto loss = std::make_shared<SaturatingSquareLoss>(std::move(a), b);
      L = std::max(L, *loss->smoothness());
      clients[m].samples.push_back(std::move(loss));
    }
  }
  FederatedProblem problem(std::move(clients), L, 0.0,
                           ConvexityClass::Nonconvex);
  FStarOptions o = opts;
  o.seed = opts.seed ^ seed;
  const FStarEstimate est = estimate_minimum(problem, o);
  return problem.with_optimum(est.argmin, est.value, o.tol);
}

FederatedProblem with_reference_optimum(const FederatedProblem& problem,
                                        const FStarOptions& opts) {
  const FStarEstimate est = estimate_minimum(problem, opts);
  return problem.with_optimum(est.argmin, est.value, opts.tol);
}

FederatedProblem shift_losses(const FederatedProblem& problem, double shift) {
  std::vector<ClientDataset> clients;
  for (const auto& c : problem.clients()) {
    ClientDataset shifted;
    for (const auto& s : c.samples) {
      shifted.samples.push_back(std::make_shared<ShiftedLoss>(s, shift));
    }
    clients.push_back(std::move(shifted));
  }
  FederatedProblem out(std::move(clients), problem.L(), problem.mu(),
                       problem.convexity());
  std::optional<double> f_star;
  if (problem.f_star()) f_star = *problem.f_star() + shift;
  return out.with_optimum(problem.x_star(), f_star,
                          problem.f_star_tolerance());
}

}  // namespace fedrr
