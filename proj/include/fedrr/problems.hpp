#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fedrr/sampling.hpp"

namespace fedrr {

using Matrix = Eigen::MatrixXd;

/// Throws InputError unless every entry of `x` is finite.
void require_finite(const Vector& x, const char* context);

/// One differentiable sample loss f^i_m. Implementations are immutable and
/// safe to share between threads.
class SampleLoss {
 public:
  virtual ~SampleLoss() = default;

  virtual int dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  /// Writes the gradient at `x` into `out` (resized as needed).
  virtual void gradient_into(const Vector& x, Vector& out) const = 0;

  Vector gradient(const Vector& x) const {
    Vector g;
    gradient_into(x, g);
    return g;
  }

  /// Per-sample smoothness constant, when known.
  virtual std::optional<double> smoothness() const { return std::nullopt; }
  /// inf_x f(x), when known.
  virtual std::optional<double> infimum() const { return std::nullopt; }
  /// argmin_x f(x), when it exists and is known.
  virtual std::optional<Vector> minimizer() const { return std::nullopt; }
};

using SampleLossPtr = std::shared_ptr<const SampleLoss>;

/// 1/2 (x - c)^T A (x - c) + offset with symmetric positive semidefinite A.
class QuadraticLoss final : public SampleLoss {
 public:
  QuadraticLoss(Matrix hessian, Vector center, double offset = 0.0);

  int dim() const override { return static_cast<int>(center_.size()); }
  double value(const Vector& x) const override;
  void gradient_into(const Vector& x, Vector& out) const override;
  std::optional<double> smoothness() const override { return max_eig_; }
  std::optional<double> infimum() const override { return offset_; }
  std::optional<Vector> minimizer() const override;

  const Matrix& hessian() const { return hessian_; }
  const Vector& center() const { return center_; }
  double offset() const { return offset_; }
  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }

 private:
  Matrix hessian_;
  Vector center_;
  double offset_;
  double min_eig_ = 0.0;
  double max_eig_ = 0.0;
};

/// log(1 + exp(-y a^T x)) + (lambda/2) ||x||^2 with label y in {-1, +1}.
class LogisticLoss final : public SampleLoss {
 public:
  LogisticLoss(Vector features, double label, double lambda);

  int dim() const override { return static_cast<int>(features_.size()); }
  double value(const Vector& x) const override;
  void gradient_into(const Vector& x, Vector& out) const override;
  /// ||a||^2 / 4 + lambda.
  std::optional<double> smoothness() const override;
  std::optional<double> infimum() const override { return infimum_; }

  const Vector& features() const { return features_; }
  double label() const { return label_; }

 private:
  Vector features_;
  double label_;
  double lambda_;
  double infimum_ = 0.0;
};

/// l(a^T x - b) with l(s) = s^2 / (1 + s^2): smooth, bounded, nonconvex,
/// infimum 0 attained on the hyperplane a^T x = b.
class SaturatingSquareLoss final : public SampleLoss {
 public:
  SaturatingSquareLoss(Vector direction, double target);

  int dim() const override { return static_cast<int>(direction_.size()); }
  double value(const Vector& x) const override;
  void gradient_into(const Vector& x, Vector& out) const override;
  /// sup |l''| = 2, so 2 ||a||^2.
  std::optional<double> smoothness() const override;
  std::optional<double> infimum() const override { return 0.0; }

 private:
  Vector direction_;
  double target_;
};

/// base(x) + shift. Gradients are those of `base`.
class ShiftedLoss final : public SampleLoss {
 public:
  ShiftedLoss(SampleLossPtr base, double shift);

  int dim() const override { return base_->dim(); }
  double value(const Vector& x) const override {
    return base_->value(x) + shift_;
  }
  void gradient_into(const Vector& x, Vector& out) const override {
    base_->gradient_into(x, out);
  }
  std::optional<double> smoothness() const override {
    return base_->smoothness();
  }
  std::optional<double> infimum() const override;
  std::optional<Vector> minimizer() const override {
    return base_->minimizer();
  }

 private:
  SampleLossPtr base_;
  double shift_;
};

/// A loss given by value and gradient callables; mainly for tests.
class FunctionLoss final : public SampleLoss {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  FunctionLoss(int dim, ValueFn value, GradientFn gradient,
               std::optional<double> smoothness = std::nullopt,
               std::optional<double> infimum = std::nullopt);

  int dim() const override { return dim_; }
  double value(const Vector& x) const override { return value_(x); }
  void gradient_into(const Vector& x, Vector& out) const override {
    out = gradient_(x);
  }
  std::optional<double> smoothness() const override { return smoothness_; }
  std::optional<double> infimum() const override { return infimum_; }

 private:
  int dim_;
  ValueFn value_;
  GradientFn gradient_;
  std::optional<double> smoothness_;
  std::optional<double> infimum_;
};

/// The local finite sum of one client.
struct ClientDataset {
  std::vector<SampleLossPtr> samples;

  int size() const { return static_cast<int>(samples.size()); }
  /// (1/n) sum_i f^i(x)
  double value(const Vector& x) const;
  /// (1/n) sum_i grad f^i(x)
  Vector gradient(const Vector& x) const;
};

enum class ConvexityClass { StronglyConvex, Convex, Nonconvex };

const char* to_string(ConvexityClass c);

/// f(x) = (1/M) sum_m (1/n) sum_i f^i_m(x) over M clients with n samples
/// each. Immutable after construction.
class FederatedProblem {
 public:
  /// Throws InputError on empty clients, unequal client sizes, mismatched
  /// dimensions, L <= 0 or mu < 0.
  FederatedProblem(std::vector<ClientDataset> clients, double L, double mu,
                   ConvexityClass convexity);

  int num_clients() const { return static_cast<int>(clients_.size()); }
  int samples_per_client() const { return n_; }
  int dim() const { return d_; }
  double L() const { return L_; }
  double mu() const { return mu_; }
  ConvexityClass convexity() const { return convexity_; }

  const std::vector<ClientDataset>& clients() const { return clients_; }
  const ClientDataset& client(int m) const { return clients_.at(m); }

  const std::optional<Vector>& x_star() const { return x_star_; }
  const std::optional<double>& f_star() const { return f_star_; }
  /// Width of the one-sided uncertainty on f_star (0 when exact).
  double f_star_tolerance() const { return f_star_tol_; }

  /// Copy with the optimum recorded.
  FederatedProblem with_optimum(std::optional<Vector> x_star,
                                std::optional<double> f_star,
                                double f_star_tolerance = 0.0) const;

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;

 private:
  void check_dim(const Vector& x, const char* context) const;

  std::vector<ClientDataset> clients_;
  int n_ = 0;
  int d_ = 0;
  double L_;
  double mu_;
  ConvexityClass convexity_;
  std::optional<Vector> x_star_;
  std::optional<double> f_star_;
  double f_star_tol_ = 0.0;
};

double eval_f(const FederatedProblem& problem, const Vector& x);
Vector grad_f(const FederatedProblem& problem, const Vector& x);

struct QuadraticTerm {
  Matrix hessian;
  Vector center;
};

/// Builds a quadratic problem from explicit per-sample terms, indexed
/// [client][sample]. L and mu are the extreme per-sample eigenvalues; x* and
/// f* are solved exactly.
FederatedProblem make_explicit_quadratic_problem(
    const std::vector<std::vector<QuadraticTerm>>& terms);

/// Random strongly convex quadratics. Sample i of every client shares the
/// Hessian A_i (eigenvalues in [mu, L]) and base center s_i; client m adds
/// an offset drawn uniformly from the sphere of radius `heterogeneity`, so
/// heterogeneity = 0 gives identical clients.
FederatedProblem make_quadratic_problem(int M, int n, int d, double mu,
                                        double L, double heterogeneity,
                                        std::uint64_t seed);

/// Exact minimizer of a problem whose samples are all QuadraticLoss.
/// Throws InputError for non-quadratic samples, DegeneracyError when the
/// average Hessian is singular.
Vector solve_quadratic_optimum(const FederatedProblem& problem);

struct SparseRow;
struct LibsvmData;

/// l2-regularized logistic regression on `data`: rows shuffled once by
/// `partition_seed`, truncated to M * floor(count / M) and split
/// contiguously into M clients.
FederatedProblem make_logreg_problem(const LibsvmData& data, int M,
                                     double lambda,
                                     std::uint64_t partition_seed = 0);

/// Random linear classification rows: features N(0, I_d), labels from a
/// random separator flipped with probability `label_noise`.
LibsvmData synthetic_classification_rows(int count, int d, double label_noise,
                                         std::uint64_t seed);

struct FStarOptions {
  int restarts = 8;
  double tol = 1e-10;
  int max_iters = 200000;
  std::uint64_t seed = 0;
  double start_scale = 1.0;
  /// Starting point of the first restart; defaults to the stored x* if any,
  /// else the origin. Later restarts start at N(0, start_scale^2 I).
  std::optional<Vector> first_start;
};

struct FStarEstimate {
  /// Smallest objective value found; an upper bound on the infimum.
  double value = 0.0;
  Vector argmin;
  /// Whether the best run met the gradient tolerance before the cap.
  bool converged = false;
  int runs_converged = 0;
  long long iterations = 0;
};

/// Multi-start gradient descent (step 1/L) on f.
FStarEstimate estimate_minimum(const FederatedProblem& problem,
                               const FStarOptions& opts);
/// Multi-start gradient descent on the client objective f_m.
FStarEstimate estimate_client_minimum(const FederatedProblem& problem, int m,
                                      const FStarOptions& opts);

double estimate_f_star(const FederatedProblem& problem, int restarts,
                       double tol);

/// Sum of (1/n) l(a^T x - b) losses with random (a, b); f* estimated by
/// estimate_minimum and stored with its convergence tolerance.
FederatedProblem make_nonconvex_problem(int M, int n, int d,
                                        std::uint64_t seed,
                                        const FStarOptions& opts = {});

/// Copy of `problem` with x*, f* taken from a long descent run.
FederatedProblem with_reference_optimum(const FederatedProblem& problem,
                                        const FStarOptions& opts = {});

/// Copy with every sample loss shifted by `shift` (and f* if stored).
FederatedProblem shift_losses(const FederatedProblem& problem, double shift);

}  // namespace fedrr
