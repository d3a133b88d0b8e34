#pragma once

#include "flowlab/coefficients.hpp"
#include "flowlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

namespace flowlab {

// ---------------------------------------------------------------------------
// Spherical truncation: fields frozen along rays beyond radius R.

namespace detail {

class TruncatedModel final : public FieldModel {
 public:
  TruncatedModel(CoefficientSystem base, double radius) : base_(std::move(base)), radius_(radius) {}

  int dim() const noexcept override { return base_.dim(); }
  int noise_dim() const noexcept override { return base_.noise_dim(); }

  Vec project(const Vec& x) const {
    const double r = x.norm();
    return r > radius_ ? Vec((radius_ / r) * x) : x;
  }

  void values(const Vec& x, FieldMatrix& out) const override { base_.model().values(project(x), out); }

  /// Inside the ball the base Jacobians; outside, the chain rule through the
  /// projection: DX~(x) = (R/|x|) DX(pi_R x) (I - xhat xhat^T).
  bool analytic_jacobians(const Vec& x, JacobianSet& out) const override {
    const double r = x.norm();
    if (r <= radius_) return base_.model().analytic_jacobians(x, out);
    const Vec px = (radius_ / r) * x;
    JacobianSet inner;
    inner.resize(dim(), base_.field_count());
    if (!base_.model().analytic_jacobians(px, inner)) return false;
    const Vec xhat = x / r;
    const Mat tangent = Mat::Identity(dim(), dim()) - xhat * xhat.transpose();
    for (int k = 0; k < base_.field_count(); ++k) out[k] = (radius_ / r) * inner[k] * tangent;
    return true;
  }

  bool has_singular_set() const noexcept override { return base_.has_singular_set(); }
  bool jacobian_singular(const Vec& x) const override { return base_.model().jacobian_singular(project(x)); }
  bool value_singular(const Vec& x) const override { return base_.model().value_singular(project(x)); }

  const CoefficientSystem& base() const noexcept { return base_; }
  double radius() const noexcept { return radius_; }

 private:
  CoefficientSystem base_;
  double radius_;
};

}  // namespace detail

class TruncatedSystem {
 public:
  TruncatedSystem(CoefficientSystem base, double radius)
      : model_(std::make_shared<detail::TruncatedModel>(base, radius)),
        system_(model_, base.constants(), base.name() + "|R", base.fd_step()) {}

  const CoefficientSystem& base() const noexcept { return model_->base(); }
  double radius() const noexcept { return model_->radius(); }
  const CoefficientSystem& system() const noexcept { return system_; }
  Vec project(const Vec& x) const { return model_->project(x); }
  Vec value(int k, const Vec& x) const { return system_.value(k, x); }

 private:
  std::shared_ptr<const detail::TruncatedModel> model_;
  CoefficientSystem system_;
};

/// Requires R >= R1 + 1 of the base constants.
inline TruncatedSystem truncate(const CoefficientSystem& base, double radius) {
  const double floor = base.constants().R1 + 1.0;
  if (!(radius >= floor))
    throw RangeError("truncate: radius " + std::to_string(radius) + " below R1 + 1 = " + std::to_string(floor));
  return TruncatedSystem(base, radius);
}

struct DerivativeStructure {
  double radial_norm = 0.0;       // |finite-difference derivative along x/|x||, max over fields
  double tangential_error = 0.0;  // max deviation from (R/|x|) DX(pi_R x) xi over tangent basis
};

/// Orthonormal basis of the complement of span{x}, as matrix columns.
inline Mat tangent_basis(const Vec& x) {
  const int d = static_cast<int>(x.size());
  Mat q = Eigen::HouseholderQR<Mat>(Mat(x)).householderQ() * Mat::Identity(d, d);
  return q.rightCols(d - 1);
}

inline DerivativeStructure radial_tangential_derivative_check(const TruncatedSystem& ts, const Vec& x,
                                                               double h = 1e-5) {
  const double r = x.norm();
  if (!(r > ts.radius() + 10.0 * h))
    throw RangeError("radial_tangential_derivative_check: |x| > R + 10h required");
  const CoefficientSystem& sys = ts.system();
  const int fields = sys.field_count();
  const Vec xhat = x / r;
  DerivativeStructure out;

  const FieldMatrix radial = (sys.values(Vec(x + h * xhat)) - sys.values(Vec(x - h * xhat))) / (2.0 * h);
  for (int k = 0; k < fields; ++k) out.radial_norm = std::max(out.radial_norm, radial.col(k).norm());

  if (x.size() == 1) return out;
  const JacobianSet inner = ts.base().jacobians(ts.project(x));
  const Mat basis = tangent_basis(x);
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    const Vec xi = basis.col(c);
    const FieldMatrix fd = (sys.values(Vec(x + h * xi)) - sys.values(Vec(x - h * xi))) / (2.0 * h);
    for (int k = 0; k < fields; ++k) {
      const Vec expected = (ts.radius() / r) * (inner[k] * xi);
      out.tangential_error = std::max(out.tangential_error, (fd.col(k) - expected).norm());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mollifier eta(u) = C exp(1/(|u|^2 - 1)) on the unit ball, eta_eps(y) = eps^-d eta(y/eps).

inline double mollifier_profile(double s2) { return s2 < 1.0 ? std::exp(1.0 / (s2 - 1.0)) : 0.0; }

/// C such that C * sum_i w_i profile(|u_i|^2) = 1 for the given ball rule.
/// Cached per (d, radial, angular).
inline double mollifier_norm_constant(int d, BallQuadratureSpec spec) {
  spec = spec.resolved(d);
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, double> cache;
  const auto key = std::make_tuple(d, spec.radial, d == 2 ? spec.angular : 0);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const BallRule rule = ball_rule(d, spec);
  double mass = 0.0;
  for (std::size_t i = 0; i < rule.points.size(); ++i)
    mass += rule.weights[i] * mollifier_profile(rule.points[i].squaredNorm());
  const double c = 1.0 / mass;
  std::lock_guard lock(mutex);
  cache.emplace(key, c);
  return c;
}

class Mollifier {
 public:
  Mollifier(int d, double eps, BallQuadratureSpec spec = {}) : d_(d), eps_(eps), spec_(spec.resolved(d)) {
    if (d < 1 || d > 3) throw RangeError("Mollifier: 1 <= d <= 3 supported");
    if (!(eps > 0.0)) throw RangeError("Mollifier: eps must be positive");
    norm_ = mollifier_norm_constant(d, spec_);
    const BallRule rule = ball_rule(d, spec_);
    for (std::size_t i = 0; i < rule.points.size(); ++i) {
      const double w = rule.weights[i] * norm_ * mollifier_profile(rule.points[i].squaredNorm());
      if (w == 0.0) continue;
      offsets_.push_back(eps * rule.points[i]);
      weights_.push_back(w);
    }
  }

  int dim() const noexcept { return d_; }
  double eps() const noexcept { return eps_; }
  double norm_constant() const noexcept { return norm_; }
  const BallQuadratureSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return offsets_.size(); }
  const std::vector<Vec>& offsets() const noexcept { return offsets_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  /// eta_eps(y).
  double operator()(const Vec& y) const {
    return norm_ * std::pow(eps_, -d_) * mollifier_profile(y.squaredNorm() / (eps_ * eps_));
  }

  /// Integral of eta_eps evaluated with an independent ball rule.
  double mass(BallQuadratureSpec reference) const {
    const BallRule rule = ball_rule(d_, reference);
    double total = 0.0;
    for (std::size_t i = 0; i < rule.points.size(); ++i)
      total += rule.weights[i] * std::pow(eps_, d_) * (*this)(eps_ * rule.points[i]);
    return total;
  }

  /// sum_i w_i f(x - y_i) ~ (f * eta_eps)(x); f writes into its second argument.
  template <class Out, class F>
  void convolve(const Vec& x, Out& acc, Out& scratch, F&& f) const {
    acc.setZero();
    Vec y(x.size());
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      y = x - offsets_[i];
      f(y, scratch);
      acc += weights_[i] * scratch;
    }
  }

 private:
  int d_;
  double eps_;
  BallQuadratureSpec spec_;
  double norm_ = 0.0;
  std::vector<Vec> offsets_;
  std::vector<double> weights_;
};

struct MollifiedValue {
  Vec value;
  double error_estimate = 0.0;  // |full rule - half-resolution rule|
};

inline MollifiedValue mollify_value(const TruncatedSystem& ts, const Mollifier& mol, int k, const Vec& x) {
  const CoefficientSystem& sys = ts.system();
  if (k < 0 || k > sys.noise_dim()) throw RangeError("mollify_value: field index out of range");
  auto run = [&](const Mollifier& m) {
    FieldMatrix acc(sys.dim(), sys.field_count()), scratch(sys.dim(), sys.field_count());
    m.convolve(x, acc, scratch, [&](const Vec& y, FieldMatrix& out) { sys.model().values(y, out); });
    return Vec(acc.col(k));
  };
  MollifiedValue out;
  out.value = run(mol);
  BallQuadratureSpec coarse = mol.spec();
  coarse.radial = std::max(2, coarse.radial / 2);
  if (mol.dim() == 2) coarse.angular = std::max(4, coarse.angular / 2);
  out.error_estimate = (run(Mollifier(mol.dim(), mol.eps(), coarse)) - out.value).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Mollified family X_k^eps = (X_k truncated at eps^-lambda0) * eta_eps.

struct LambdaSelection {
  double lambda0 = 0.0;
  double eps0 = 0.0;
  double iota = 0.0;  // Hoelder exponent 1 - d/p3
};

inline LambdaSelection select_lambda0(const AssumptionConstants& c, int d) {
  LambdaSelection s;
  s.iota = 1.0 - d / c.p3;
  if (!(s.iota > 0.0)) throw ParameterError("select_lambda0: p3 > d required");
  s.lambda0 = 0.5 * std::min(s.iota / (c.p1 + c.p2), 1.0 / (c.p1 + c.p2 + c.p5));
  s.eps0 = std::min(std::pow(c.R1 + 2.0, -1.0 / s.lambda0), c.delta / 4.0);
  return s;
}

namespace detail {

class MollifiedModel final : public FieldModel {
 public:
  MollifiedModel(CoefficientSystem base, double eps, double radius, BallQuadratureSpec spec, double clamp_radius)
      : base_(std::move(base)),
        truncated_(base_, radius),
        mollifier_(base_.dim(), eps, spec),
        radius_(radius),
        clamp_radius_(clamp_radius) {}

  int dim() const noexcept override { return base_.dim(); }
  int noise_dim() const noexcept override { return base_.noise_dim(); }

  void values(const Vec& x, FieldMatrix& out) const override {
    FieldMatrix scratch(dim(), base_.field_count());
    const auto& model = truncated_.system().model();
    mollifier_.convolve(x, out, scratch, [&](const Vec& y, FieldMatrix& v) { model.values(y, v); });
  }

  bool analytic_jacobians(const Vec& x, JacobianSet& out) const override {
    FieldMatrix vals(dim(), base_.field_count());
    return values_and_jacobians(x, vals, out);
  }

  /// Where the truncation is inactive on the whole kernel support,
  /// D(X * eta) = (DX) * eta; elsewhere the caller differentiates numerically.
  bool values_and_jacobians(const Vec& x, FieldMatrix& vals, JacobianSet& jac) const override {
    if (x.norm() + mollifier_.eps() >= radius_) {
      values(x, vals);
      return false;
    }
    const int fields = base_.field_count();
    const auto& model = base_.model();
    FieldMatrix v(dim(), fields);
    JacobianSet j;
    j.resize(dim(), fields);
    vals.setZero();
    for (int k = 0; k < fields; ++k) jac[k].setZero();
    Vec y(dim());
    const auto& offsets = mollifier_.offsets();
    const auto& weights = mollifier_.weights();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      y = x - offsets[i];
      if (model.jacobian_singular(y)) {
        model.values(y, v);
        const double r = y.norm();
        const Vec clamped = r > 0.0 ? Vec(clamp_radius_ / r * y) : Vec(clamp_radius_ * unit_vec(dim(), 0));
        base_.jacobians(clamped, j);
      } else if (!model.values_and_jacobians(y, v, j)) {
        base_.finite_difference_jacobians(y, j);
      }
      vals += weights[i] * v;
      for (int k = 0; k < fields; ++k) jac[k] += weights[i] * j[k];
    }
    return true;
  }

  const Mollifier& mollifier() const noexcept { return mollifier_; }
  double radius() const noexcept { return radius_; }

 private:
  CoefficientSystem base_;
  TruncatedSystem truncated_;
  Mollifier mollifier_;
  double radius_;
  double clamp_radius_;
};

}  // namespace detail

struct FamilyOptions {
  BallQuadratureSpec quadrature;
  /// Admissible-eps ceiling override. The guaranteed range (0, eps0) is often
  /// far too small to simulate; a larger ceiling admits diagnostic members,
  /// which are reported as uncertified.
  std::optional<double> eps_ceiling;
  /// Radius at which singular base Jacobians are evaluated inside the kernel.
  double clamp_radius = 1e-6;
};

class MollifiedFamily {
 public:
  explicit MollifiedFamily(CoefficientSystem base, FamilyOptions options = {})
      : base_(std::move(base)),
        options_(options),
        selection_(select_lambda0(base_.constants(), base_.dim())),
        cache_(std::make_shared<Cache>()) {
    if (base_.dim() > 3) throw RangeError("MollifiedFamily: mollification supports d <= 3");
  }

  const CoefficientSystem& base() const noexcept { return base_; }
  double lambda0() const noexcept { return selection_.lambda0; }
  double eps0() const noexcept { return selection_.eps0; }
  double iota() const noexcept { return selection_.iota; }
  double ceiling() const noexcept { return options_.eps_ceiling.value_or(selection_.eps0); }
  const FamilyOptions& options() const noexcept { return options_; }
  bool certified(double eps) const noexcept { return eps > 0.0 && eps < selection_.eps0; }

  /// eps^-lambda0, floored at R1 + 1 so that uncertified members still
  /// truncate outside the region where the growth bounds apply.
  double truncation_radius(double eps) const {
    return std::max(std::pow(eps, -selection_.lambda0), base_.constants().R1 + 1.0);
  }

  CoefficientSystem member(double eps) const {
    if (!(eps > 0.0 && eps < ceiling()))
      throw RangeError("family member: eps = " + std::to_string(eps) + " outside (0, " + std::to_string(ceiling()) +
                       ")");
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = cache_->members.find(eps); it != cache_->members.end()) return it->second;
    }
    auto model = std::make_shared<detail::MollifiedModel>(base_, eps, truncation_radius(eps), options_.quadrature,
                                                          options_.clamp_radius);
    CoefficientSystem sys(std::move(model), base_.constants(), base_.name() + "*eta", base_.fd_step());
    std::lock_guard lock(cache_->mutex);
    cache_->members.insert_or_assign(eps, sys);
    return sys;
  }

 private:
  struct Cache {
    std::mutex mutex;
    std::map<double, CoefficientSystem> members;
  };

  CoefficientSystem base_;
  FamilyOptions options_;
  LambdaSelection selection_;
  std::shared_ptr<Cache> cache_;
};

inline CoefficientSystem family_member(const MollifiedFamily& family, double eps) { return family.member(eps); }

// ---------------------------------------------------------------------------
// L^p distances on a ball.

enum class LpMode { values, jacobians };

struct LpOptions {
  int panels = 12;           // geometric radial panels between R * 1e-6 and R
  int nodes_per_panel = 8;   // Gauss-Legendre nodes per panel
  int angular = 64;          // d = 2 only
  double excise_radius = 1e-6;
};

struct LpReport {
  double value = 0.0;
  double excised_volume = 0.0;
};

/// int_{|x| <= R} |a_k - b_k|^p dx, or the Frobenius analogue for Jacobians
/// with |x| < excise_radius removed.
inline LpReport lp_distance(const CoefficientSystem& a, const CoefficientSystem& b, int k, double R, double p,
                            LpMode mode, const LpOptions& opt = {}) {
  const int d = a.dim();
  if (b.dim() != d || b.noise_dim() != a.noise_dim()) throw RangeError("lp_distance: systems differ in shape");
  if (k < 0 || k > a.noise_dim()) throw RangeError("lp_distance: field index out of range");
  if (d > 3) throw RangeError("lp_distance: d <= 3 supported");
  const double r_start = mode == LpMode::jacobians ? opt.excise_radius : 0.0;

  std::vector<double> breaks{r_start};
  const double r_inner = R * 1e-6;
  for (int j = 0; j <= opt.panels; ++j) {
    const double b_j = r_inner * std::pow(R / r_inner, static_cast<double>(j) / opt.panels);
    if (b_j > breaks.back()) breaks.push_back(b_j);
  }

  const SphereRule sphere = sphere_rule(d, opt.angular);
  FieldMatrix va, vb;
  JacobianSet ja, jb;
  double total = 0.0;
  for (std::size_t panel = 0; panel + 1 < breaks.size(); ++panel) {
    const auto gl = gauss_legendre(opt.nodes_per_panel, breaks[panel], breaks[panel + 1]);
    for (int i = 0; i < opt.nodes_per_panel; ++i) {
      const double r = gl.nodes[i];
      const double wr = gl.weights[i] * std::pow(r, d - 1);
      for (std::size_t s = 0; s < sphere.directions.size(); ++s) {
        const Vec x = r * sphere.directions[s];
        double diff = 0.0;
        if (mode == LpMode::values) {
          a.values(x, va);
          b.values(x, vb);
          diff = (va.col(k) - vb.col(k)).norm();
        } else {
          a.jacobians(x, ja);
          b.jacobians(x, jb);
          diff = (ja[k] - jb[k]).norm();
        }
        total += wr * sphere.weights[s] * std::pow(diff, p);
      }
    }
  }
  LpReport out;
  out.value = total;
  out.excised_volume = unit_ball_volume(d) * std::pow(r_start, d);
  return out;
}

}  // namespace flowlab
