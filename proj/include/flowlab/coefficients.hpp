#pragma once

#include "flowlab/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flowlab {

/// Growth and integrability constants of a coefficient system.
///
/// Exponents p1..p5 and constants C1..C3 enter the ellipticity floor, the
/// polynomial growth bounds and the Jacobian growth bound; R1 is the radius
/// beyond which the Jacobian bounds apply and delta the shift radius of the
/// one-sided growth condition. kappa(p) is the exponential-integrability
/// budget used for the moment window T0(p) = kappa(p) / (d + 2).
///
/// c2_constant and c4aa_constant are the C(p) of the one-sided growth and
/// log-growth conditions. They are optional: when empty the checker reports
/// the fitted constant instead of a pass/fail verdict against a bound.
struct AssumptionConstants {
  double p1 = 0.0;
  double p2 = 1.0;
  double p3 = 0.0;
  double p4 = 0.0;
  double p5 = 1.0;
  double C1 = 1.0;
  double C2 = 1.0;
  double C3 = 1.0;
  double R1 = 1.0;
  double delta = 1.0;
  std::function<double(double)> kappa = [](double p) { return 1.0 / p; };
  std::string kappa_source = "kappa(p) = 1/p";
  std::function<double(double)> c2_constant;
  std::function<double(double)> c4aa_constant;

  /// Constants with p3, p4 at the smallest admissible integers for dimension d.
  static AssumptionConstants generic(int d) {
    AssumptionConstants c;
    c.p3 = 2.0 * (d + 1) + 1.0;
    c.p4 = d + 2.0;
    return c;
  }

  void validate(int d) const {
    if (!(p3 > 2.0 * (d + 1)))
      throw ParameterError("assumption constants: p3 > 2(d+1) violated (p3 = " + std::to_string(p3) + ")");
    if (!(p4 > d + 1.0))
      throw ParameterError("assumption constants: p4 > d+1 violated (p4 = " + std::to_string(p4) + ")");
    if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("assumption constants: delta in (0,1] violated");
    // p1 = 0 is admitted: uniformly elliptic systems have a constant floor.
    if (!(p1 >= 0.0)) throw ParameterError("assumption constants: p1 >= 0 violated");
    if (!(p2 > 0.0 && p5 > 0.0)) throw ParameterError("assumption constants: p2 > 0 and p5 > 0 required");
    if (!(C1 > 0.0 && C2 > 0.0 && C3 > 0.0 && R1 > 0.0))
      throw ParameterError("assumption constants: C1, C2, C3, R1 must be positive");
    if (!kappa) throw ParameterError("assumption constants: kappa(p) missing");
  }
};

/// Vector fields X_0 (drift) and X_1..X_m (diffusion columns) on R^d.
///
/// Implementations must be pure: the same x always produces the same
/// output, and concurrent calls are allowed.
class FieldModel {
 public:
  virtual ~FieldModel() = default;

  virtual int dim() const noexcept = 0;
  virtual int noise_dim() const noexcept = 0;

  /// out is d x (m+1); column k receives X_k(x).
  virtual void values(const Vec& x, FieldMatrix& out) const = 0;

  /// Fills closed-form Jacobians and returns true, or returns false when
  /// none are available at x (the caller then differentiates numerically).
  virtual bool analytic_jacobians(const Vec& /*x*/, JacobianSet& /*out*/) const { return false; }

  /// Single-pass evaluation of values and Jacobians. Returns whether the
  /// Jacobians were filled.
  virtual bool values_and_jacobians(const Vec& x, FieldMatrix& vals, JacobianSet& jac) const {
    values(x, vals);
    return analytic_jacobians(x, jac);
  }

  virtual bool has_singular_set() const noexcept { return false; }
  virtual bool jacobian_singular(const Vec& /*x*/) const { return false; }
  virtual bool value_singular(const Vec& /*x*/) const { return false; }
};

/// Value-semantic handle on a FieldModel plus its constants.
class CoefficientSystem {
 public:
  CoefficientSystem() = default;
  CoefficientSystem(std::shared_ptr<const FieldModel> model, AssumptionConstants constants, std::string name,
                    double fd_step = 1e-5)
      : model_(std::move(model)), constants_(std::move(constants)), name_(std::move(name)), fd_step_(fd_step) {
    if (!model_) throw ParameterError("coefficient system: null model");
    if (dim() < 1 || dim() > kMaxDim) throw ParameterError("coefficient system: 1 <= d <= 4 required");
    if (noise_dim() < 1 || noise_dim() > kMaxNoise) throw ParameterError("coefficient system: 1 <= m <= 4 required");
  }

  int dim() const noexcept { return model_->dim(); }
  int noise_dim() const noexcept { return model_->noise_dim(); }
  int field_count() const noexcept { return noise_dim() + 1; }
  const std::string& name() const noexcept { return name_; }
  const AssumptionConstants& constants() const noexcept { return constants_; }
  double fd_step() const noexcept { return fd_step_; }
  const FieldModel& model() const noexcept { return *model_; }
  std::shared_ptr<const FieldModel> model_ptr() const noexcept { return model_; }
  bool has_singular_set() const noexcept { return model_->has_singular_set(); }
  bool jacobian_singular(const Vec& x) const { return model_->jacobian_singular(x); }

  void values(const Vec& x, FieldMatrix& out) const {
    if (model_->value_singular(x))
      throw SingularPointError("value requested at singular point " + to_string(x), x);
    out.resize(dim(), field_count());
    model_->values(x, out);
  }

  FieldMatrix values(const Vec& x) const {
    FieldMatrix out;
    values(x, out);
    return out;
  }

  Vec value(int k, const Vec& x) const {
    check_field(k);
    return values(x).col(k);
  }

  JacobianKind jacobians(const Vec& x, JacobianSet& out) const {
    check_jacobian_point(x);
    out.resize(dim(), field_count());
    if (model_->analytic_jacobians(x, out)) return JacobianKind::analytic;
    finite_difference_jacobians(x, out);
    return JacobianKind::finite_difference;
  }

  JacobianSet jacobians(const Vec& x) const {
    JacobianSet out;
    jacobians(x, out);
    return out;
  }

  Mat jacobian(int k, const Vec& x) const {
    check_field(k);
    return jacobians(x)[k];
  }

  JacobianKind jacobian_kind(const Vec& x) const {
    JacobianSet tmp;
    return jacobians(x, tmp);
  }

  /// Values at x and Jacobians at jx (normally jx == x; the integrator
  /// passes a clamped point near singularities).
  JacobianKind evaluate(const Vec& x, const Vec& jx, FieldMatrix& vals, JacobianSet& jac) const {
    if (model_->value_singular(x))
      throw SingularPointError("value requested at singular point " + to_string(x), x);
    vals.resize(dim(), field_count());
    if (&x == &jx || x == jx) {
      check_jacobian_point(x);
      jac.resize(dim(), field_count());
      if (model_->values_and_jacobians(x, vals, jac)) return JacobianKind::analytic;
      finite_difference_jacobians(x, jac);
      return JacobianKind::finite_difference;
    }
    model_->values(x, vals);
    return jacobians(jx, jac);
  }

  /// Central differences of the values at step fd_step().
  void finite_difference_jacobians(const Vec& x, JacobianSet& out) const {
    const int d = dim();
    const int fields = field_count();
    out.resize(d, fields);
    FieldMatrix plus(d, fields), minus(d, fields);
    Vec xp = x, xm = x;
    for (int j = 0; j < d; ++j) {
      xp(j) = x(j) + fd_step_;
      xm(j) = x(j) - fd_step_;
      model_->values(xp, plus);
      model_->values(xm, minus);
      const double inv = 1.0 / (xp(j) - xm(j));
      for (int k = 0; k < fields; ++k) out[k].col(j) = (plus.col(k) - minus.col(k)) * inv;
      xp(j) = x(j);
      xm(j) = x(j);
    }
  }

 private:
  void check_field(int k) const {
    if (k < 0 || k > noise_dim()) throw RangeError("field index " + std::to_string(k) + " out of range");
  }
  void check_jacobian_point(const Vec& x) const {
    if (model_->jacobian_singular(x))
      throw SingularPointError("Jacobian requested inside singular set at " + to_string(x), x);
  }

  std::shared_ptr<const FieldModel> model_;
  AssumptionConstants constants_;
  std::string name_;
  double fd_step_ = 1e-5;
};

/// FieldModel backed by callables; convenient for ad-hoc systems and tests.
class FunctionModel final : public FieldModel {
 public:
  using ValueFn = std::function<void(const Vec&, FieldMatrix&)>;
  using JacobianFn = std::function<bool(const Vec&, JacobianSet&)>;
  using SingularFn = std::function<bool(const Vec&)>;

  FunctionModel(int d, int m, ValueFn values, JacobianFn jac = {}, SingularFn singular = {})
      : d_(d), m_(m), values_(std::move(values)), jac_(std::move(jac)), singular_(std::move(singular)) {}

  int dim() const noexcept override { return d_; }
  int noise_dim() const noexcept override { return m_; }
  void values(const Vec& x, FieldMatrix& out) const override { values_(x, out); }
  bool analytic_jacobians(const Vec& x, JacobianSet& out) const override { return jac_ ? jac_(x, out) : false; }
  bool has_singular_set() const noexcept override { return static_cast<bool>(singular_); }
  bool jacobian_singular(const Vec& x) const override { return singular_ ? singular_(x) : false; }

 private:
  int d_, m_;
  ValueFn values_;
  JacobianFn jac_;
  SingularFn singular_;
};

inline CoefficientSystem make_system(int d, int m, FunctionModel::ValueFn values, FunctionModel::JacobianFn jac = {},
                                     AssumptionConstants constants = {}, std::string name = "custom",
                                     FunctionModel::SingularFn singular = {}) {
  if (constants.p3 == 0.0) {
    const auto kappa = constants.kappa;
    constants = AssumptionConstants::generic(d);
    if (kappa) constants.kappa = kappa;
  }
  return CoefficientSystem(std::make_shared<FunctionModel>(d, m, std::move(values), std::move(jac), std::move(singular)),
                           std::move(constants), std::move(name));
}

// ---------------------------------------------------------------------------
// Small symmetric eigenproblems.

struct SymmetricSpectrum {
  Vec eigenvalues;  // ascending
  Mat eigenvectors;
};

inline SymmetricSpectrum symmetric_spectrum(const Mat& a) {
  SymmetricSpectrum s;
  if (a.rows() == 1) {
    s.eigenvalues = Vec::Constant(1, a(0, 0));
    s.eigenvectors = Mat::Identity(1, 1);
    return s;
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(a);
  s.eigenvalues = solver.eigenvalues();
  s.eigenvectors = solver.eigenvectors();
  return s;
}

inline double largest_eigenvalue(const Mat& a) {
  if (a.rows() == 1) return a(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(a.rows() - 1);
}

inline double smallest_eigenvalue(const Mat& a) {
  if (a.rows() == 1) return a(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

// ---------------------------------------------------------------------------
// Diffusion matrix and right inverse.

inline Mat diffusion_matrix_from(const FieldMatrix& fields) {
  const auto sigma = fields.rightCols(fields.cols() - 1);
  return sigma * sigma.transpose();
}

/// A(x) = sum_k X_k(x) X_k(x)^T.
inline Mat diffusion_matrix(const CoefficientSystem& system, const Vec& x) {
  return diffusion_matrix_from(system.values(x));
}

inline constexpr double kDefaultMaxCondition = 1e12;

/// Y(x)(xi) = Sigma^T A^{-1} xi from precomputed fields. Throws
/// NearSingularDiffusionError when cond(A) exceeds max_condition.
inline NoiseVec right_inverse_from(const FieldMatrix& fields, const Vec& xi, const Vec& x,
                                   double max_condition = kDefaultMaxCondition) {
  const auto sigma = fields.rightCols(fields.cols() - 1);
  const Mat a = sigma * sigma.transpose();
  if (a.rows() == 1) {
    const double lambda = a(0, 0);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw NearSingularDiffusionError(lambda, HUGE_VAL, x);
    return sigma.transpose() * (xi / lambda);
  }
  const SymmetricSpectrum s = symmetric_spectrum(a);
  const double lo = s.eigenvalues(0);
  const double hi = s.eigenvalues(s.eigenvalues.size() - 1);
  const double cond = lo > 0.0 ? hi / lo : HUGE_VAL;
  if (!(lo > 0.0) || !(cond <= max_condition)) throw NearSingularDiffusionError(lo, cond, x);
  Vec z = s.eigenvectors.transpose() * xi;
  z.array() /= s.eigenvalues.array();
  return sigma.transpose() * (s.eigenvectors * z);
}

inline NoiseVec right_inverse_apply(const CoefficientSystem& system, const Vec& x, const Vec& xi,
                                    double max_condition = kDefaultMaxCondition) {
  return right_inverse_from(system.values(x), xi, x, max_condition);
}

// ---------------------------------------------------------------------------
// K_p.

struct SpectralReport {
  Vec x;
  double p = 0.0;
  double kp = 0.0;
  Mat matrix;
};

/// Symmetric matrix of the quadratic form
///   xi -> 2p <J0 xi, xi> + (2p-1) p sum_k |J_k xi|^2.
inline Mat kp_matrix(const JacobianSet& jac, double p) {
  Mat h = p * (jac[0] + jac[0].transpose());
  for (int k = 1; k < jac.count; ++k) h.noalias() += (2.0 * p - 1.0) * p * (jac[k].transpose() * jac[k]);
  return h;
}

inline SpectralReport kp_max(const CoefficientSystem& system, const Vec& x, double p) {
  if (!(p > 0.0)) throw RangeError("kp_max: p must be positive");
  SpectralReport r;
  r.x = x;
  r.p = p;
  r.matrix = kp_matrix(system.jacobians(x), p);
  r.kp = largest_eigenvalue(r.matrix);
  return r;
}

// ---------------------------------------------------------------------------
// Theta_g for g(x) = log(1 + |x|^2).

/// Caller-supplied tail statement: for |x| >= radius,
///   <x, X_0(x)> + (lambda + 1/2) sum_k |X_k(x)|^2 <= growth (1 + |x|^2).
/// The Theta_g integrand is then at most 2 * growth outside the ball.
struct TailCertificate {
  double radius = 0.0;
  double growth = 0.0;
};

struct ThetaOptions {
  double lo = -50.0;
  double hi = 50.0;
  int points_per_axis = 0;  // 0: 401 for d <= 2, 101 for d = 3, 41 for d = 4
  std::optional<TailCertificate> tail;
};

struct ThetaReport {
  double value = -HUGE_VAL;
  Vec argmax;
  bool certified = false;
  std::size_t grid_points = 0;
};

/// Integrand Dg(X_0) + 1/2 sum_k (lambda |Dg(X_k)|^2 + D^2 g(X_k, X_k)).
inline double theta_integrand(const FieldMatrix& fields, const Vec& x, double lambda) {
  const double s = 1.0 + x.squaredNorm();
  const Vec grad = (2.0 / s) * x;
  double total = grad.dot(fields.col(0));
  for (Eigen::Index k = 1; k < fields.cols(); ++k) {
    const auto xk = fields.col(k);
    const double dg = grad.dot(xk);
    const double d2g = 2.0 * xk.squaredNorm() / s - 4.0 * std::pow(x.dot(xk), 2) / (s * s);
    total += 0.5 * (lambda * dg * dg + d2g);
  }
  return total;
}

template <class Fn>
void for_each_grid_point(int d, double lo, double hi, int n, Fn&& fn) {
  std::array<int, kMaxDim> idx{};
  Vec x(d);
  const double step = n > 1 ? (hi - lo) / (n - 1) : 0.0;
  while (true) {
    for (int j = 0; j < d; ++j) x(j) = n > 1 ? lo + step * idx[j] : 0.5 * (lo + hi);
    fn(x);
    int j = 0;
    while (j < d && ++idx[j] == n) idx[j++] = 0;
    if (j == d) break;
  }
}

inline ThetaReport theta_g(const CoefficientSystem& system, double lambda, const ThetaOptions& opt = {}) {
  if (!(lambda > 0.0)) throw RangeError("theta_g: lambda must be positive");
  const int d = system.dim();
  int n = opt.points_per_axis;
  if (n <= 0) n = d <= 2 ? 401 : (d == 3 ? 101 : 41);
  ThetaReport r;
  FieldMatrix fields;
  for_each_grid_point(d, opt.lo, opt.hi, n, [&](const Vec& x) {
    system.values(x, fields);
    const double v = theta_integrand(fields, x, lambda);
    ++r.grid_points;
    if (v > r.value) {
      r.value = v;
      r.argmax = x;
    }
  });
  if (opt.tail) {
    const double half_width = std::min(-opt.lo, opt.hi);
    r.certified = opt.tail->radius <= half_width && 2.0 * opt.tail->growth <= r.value;
  }
  return r;
}

}  // namespace flowlab
