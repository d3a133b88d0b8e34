#pragma once

#include "flowlab/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace flowlab {

// ---------------------------------------------------------------------------
// Smooth partition used by the irregular example's cut-off functions.

namespace detail {

inline double bump_phi(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

}  // namespace detail

/// C-infinity step: 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = detail::bump_phi(t);
  return a / (a + detail::bump_phi(1.0 - t));
}

// ---------------------------------------------------------------------------
// Irregular example: non-Lipschitz diffusion near the origin, a singular but
// strongly dissipative drift, and polynomial behaviour beyond radius 3.
//
//   X_k(x) = ((1 + |x|^q1) g1(x) + |x|^q2 g2(x)) e_k,     k = 1..d
//   X_0(x) = (-(1 + |x|^-q3) g1(x) - |x|^q4 g2(x)) x
//
// with g1 = 1 on |x| <= 2, 0 on |x| >= 3 and g2 = 0 on |x| <= 1, 1 on |x| >= 2.

enum class OriginPolicy {
  limit,   // values at the origin are their limits: X_0(0) = 0, X_k(0) = e_k
  forbid,  // values inside |x| < r_min raise SingularPointError
};

struct Example21Params {
  int d = 2;
  double q1 = 0.8;
  double q2 = 0.5;
  double q3 = 0.5;
  double q4 = 1.0;
  double r_min = 1e-6;
  OriginPolicy origin = OriginPolicy::limit;

  void validate() const {
    if (d < 1 || d > kMaxDim) throw ParameterError("example21: 1 <= d <= 4 required");
    const double dd = d;
    if (!(q1 > 0.0 && q3 > 0.0 && q4 > 0.0)) throw ParameterError("example21: q1, q3, q4 must be positive");
    if (!(q4 + 2.0 > 2.0 * q2)) throw ParameterError("example21: constraint q4 + 2 > 2 q2 violated");
    if (!(1.0 - dd / (2.0 * (dd + 1.0)) < q1))
      throw ParameterError("example21: constraint 1 - d/(2(d+1)) < q1 violated");
    if (!(q1 < 1.0)) throw ParameterError("example21: constraint q1 < 1 violated");
    if (!(2.0 * (1.0 - q1) < q3)) throw ParameterError("example21: constraint 2(1-q1) < q3 violated");
    if (!(q3 < dd / (dd + 1.0))) throw ParameterError("example21: constraint q3 < d/(d+1) violated");
    if (!(r_min > 0.0)) throw ParameterError("example21: r_min must be positive");
  }
};

class Example21Model final : public FieldModel {
 public:
  explicit Example21Model(Example21Params params) : p_(params) { p_.validate(); }

  int dim() const noexcept override { return p_.d; }
  int noise_dim() const noexcept override { return p_.d; }

  double g1(double r) const { return 1.0 - smooth_step(r - 2.0); }
  double g2(double r) const { return smooth_step(r - 1.0); }

  void values(const Vec& x, FieldMatrix& out) const override {
    const double r = x.norm();
    const double a = g1(r);
    const double b = g2(r);
    double diffusion = 0.0;
    double drift = 0.0;
    if (a > 0.0) {
      diffusion += (1.0 + std::pow(r, p_.q1)) * a;
      // |x|^{-q3} x -> 0 at the origin since q3 < 1.
      drift -= (r > 0.0 ? 1.0 + std::pow(r, -p_.q3) : 1.0) * a;
    }
    if (b > 0.0) {
      diffusion += std::pow(r, p_.q2) * b;
      drift -= std::pow(r, p_.q4) * b;
    }
    out.setZero();
    out.col(0) = r > 0.0 ? Vec(drift * x) : Vec(Vec::Zero(p_.d));
    for (int k = 1; k <= p_.d; ++k) out(k - 1, k) = diffusion;
  }

  /// Closed forms on 0 < |x| <= 1 and |x| >= 3; the cut-off annulus falls
  /// back to finite differences.
  bool analytic_jacobians(const Vec& x, JacobianSet& out) const override {
    const double r = x.norm();
    const int d = p_.d;
    const Mat xx = x * x.transpose();
    if (r >= p_.r_min && r <= 1.0) {
      const double c = p_.q1 * std::pow(r, p_.q1 - 2.0);
      for (int k = 1; k <= d; ++k) {
        out[k].setZero();
        out[k].row(k - 1) = c * x.transpose();
      }
      out[0] = p_.q3 * std::pow(r, -p_.q3 - 2.0) * xx - (1.0 + std::pow(r, -p_.q3)) * Mat::Identity(d, d);
      return true;
    }
    if (r >= 3.0) {
      const double c = p_.q2 * std::pow(r, p_.q2 - 2.0);
      for (int k = 1; k <= d; ++k) {
        out[k].setZero();
        out[k].row(k - 1) = c * x.transpose();
      }
      out[0] = -std::pow(r, p_.q4) * Mat::Identity(d, d) - p_.q4 * std::pow(r, p_.q4 - 2.0) * xx;
      return true;
    }
    return false;
  }

  bool has_singular_set() const noexcept override { return true; }
  bool jacobian_singular(const Vec& x) const override { return x.norm() < p_.r_min; }
  bool value_singular(const Vec& x) const override {
    return p_.origin == OriginPolicy::forbid && x.norm() < p_.r_min;
  }

  const Example21Params& params() const noexcept { return p_; }

 private:
  Example21Params p_;
};

inline AssumptionConstants example21_constants(const Example21Params& p) {
  AssumptionConstants c;
  const double d = p.d;
  c.p1 = std::max(0.0, -2.0 * p.q2);
  c.C1 = 1.0;
  c.p2 = std::max(p.q2, 1.0 + p.q4);
  c.C2 = 8.0;
  c.p3 = 0.5 * (2.0 * (d + 1.0) + d / (1.0 - p.q1));
  c.p4 = 0.5 * ((d + 1.0) + d / p.q3);
  c.p5 = std::max(p.q4, p.q2 - 1.0);
  c.C3 = 2.0 + p.q4 + std::abs(p.q2);
  c.R1 = 3.0;
  c.delta = 1.0;
  return c;
}

inline CoefficientSystem example21(const Example21Params& params = {}) {
  auto model = std::make_shared<Example21Model>(params);
  return CoefficientSystem(std::move(model), example21_constants(params), "example21");
}

// ---------------------------------------------------------------------------
// Smooth reference systems.

namespace detail {

class LinearModel final : public FieldModel {
 public:
  // X_0(x) = drift_matrix x + drift_offset, X_k(x) = noise_matrix_k x + noise_offset_k
  LinearModel(int d, int m) : d_(d), m_(m) {
    drift_matrix = Mat::Zero(d, d);
    drift_offset = Vec::Zero(d);
    noise_matrix.fill(Mat::Zero(d, d));
    noise_offset = FieldMatrix::Zero(d, m + 1);
  }

  int dim() const noexcept override { return d_; }
  int noise_dim() const noexcept override { return m_; }

  void values(const Vec& x, FieldMatrix& out) const override {
    out.col(0) = drift_matrix * x + drift_offset;
    for (int k = 1; k <= m_; ++k) out.col(k) = noise_matrix[k] * x + noise_offset.col(k);
  }
  bool analytic_jacobians(const Vec&, JacobianSet& out) const override {
    out[0] = drift_matrix;
    for (int k = 1; k <= m_; ++k) out[k] = noise_matrix[k];
    return true;
  }

  Mat drift_matrix;
  Vec drift_offset;
  std::array<Mat, kMaxFields> noise_matrix;
  FieldMatrix noise_offset;

 private:
  int d_, m_;
};

inline AssumptionConstants smooth_constants(int d) {
  AssumptionConstants c = AssumptionConstants::generic(d);
  c.p1 = 0.0;
  c.p2 = 1.0;
  c.p5 = 1.0;
  c.R1 = 1.0;
  c.delta = 1.0;
  return c;
}

inline constexpr double kTiny = 1e-300;

}  // namespace detail

/// dx = -theta x dt + sigma dW, m = d.
inline CoefficientSystem ornstein_uhlenbeck(double theta = 1.0, double sigma = 1.0, int d = 1) {
  if (d < 1 || d > kMaxDim) throw ParameterError("ornstein_uhlenbeck: 1 <= d <= 4 required");
  auto model = std::make_shared<detail::LinearModel>(d, d);
  model->drift_matrix = -theta * Mat::Identity(d, d);
  for (int k = 1; k <= d; ++k) model->noise_offset(k - 1, k) = sigma;
  AssumptionConstants c = detail::smooth_constants(d);
  c.C1 = sigma != 0.0 ? sigma * sigma : 1.0;
  c.C2 = std::max({std::abs(theta), std::abs(sigma), detail::kTiny});
  c.C3 = std::max(std::abs(theta), detail::kTiny);
  c.c2_constant = [=](double p) { return p * d * sigma * sigma + std::abs(theta); };
  c.c4aa_constant = [=](double p) { return std::max(0.0, -2.0 * p * theta) / std::log(2.0); };
  return CoefficientSystem(std::move(model), std::move(c), "ornstein_uhlenbeck");
}

/// dx = mu x dt + sigma x dW (single noise), componentwise in d dimensions.
inline CoefficientSystem geometric_bm(double mu = 0.1, double sigma = 0.2, int d = 1) {
  if (d < 1 || d > kMaxDim) throw ParameterError("geometric_bm: 1 <= d <= 4 required");
  auto model = std::make_shared<detail::LinearModel>(d, 1);
  model->drift_matrix = mu * Mat::Identity(d, d);
  model->noise_matrix[1] = sigma * Mat::Identity(d, d);
  AssumptionConstants c = detail::smooth_constants(d);
  // Degenerate at the origin: the ellipticity check is expected to fail there.
  c.C1 = sigma != 0.0 ? sigma * sigma : 1.0;
  c.C2 = std::max({std::abs(mu), std::abs(sigma), detail::kTiny});
  c.C3 = c.C2;
  c.c2_constant = [=](double p) { return 2.0 * p * sigma * sigma + 1.5 * std::abs(mu); };
  c.c4aa_constant = [=](double p) {
    return std::max(0.0, 2.0 * p * mu + (2.0 * p - 1.0) * p * sigma * sigma) / std::log(2.0);
  };
  return CoefficientSystem(std::move(model), std::move(c), "geometric_bm");
}

/// X_0 = drift (1, ..., 1), X_k = sigma e_k for k <= min(d, m), zero beyond.
inline CoefficientSystem constant_system(double sigma = 1.0, double drift = 0.0, int d = 1, int m = 1) {
  if (d < 1 || d > kMaxDim || m < 1 || m > kMaxNoise) throw ParameterError("constant: 1 <= d, m <= 4 required");
  auto model = std::make_shared<detail::LinearModel>(d, m);
  model->drift_offset = Vec::Constant(d, drift);
  for (int k = 1; k <= std::min(d, m); ++k) model->noise_offset(k - 1, k) = sigma;
  AssumptionConstants c = detail::smooth_constants(d);
  c.C1 = sigma != 0.0 ? sigma * sigma : 1.0;
  c.C2 = std::max({std::abs(sigma), std::abs(drift) * std::sqrt(static_cast<double>(d)), detail::kTiny});
  c.C3 = 1.0;
  const int active = std::min(d, m);
  c.c2_constant = [=](double p) {
    return p * active * sigma * sigma + std::abs(drift) * std::sqrt(static_cast<double>(d));
  };
  c.c4aa_constant = [](double) { return 0.0; };
  return CoefficientSystem(std::move(model), std::move(c), "constant");
}

/// dx = sigma dW with m = d.
inline CoefficientSystem additive_noise(double sigma = 1.0, int d = 1) {
  CoefficientSystem base = constant_system(sigma, 0.0, d, d);
  return CoefficientSystem(base.model_ptr(), base.constants(), "additive_noise");
}

// ---------------------------------------------------------------------------
// Name + parameter map construction used by the CLI.

using ParamMap = std::map<std::string, double>;

inline const std::map<std::string, std::set<std::string>>& builtin_parameter_names() {
  static const std::map<std::string, std::set<std::string>> names = {
      {"example21", {"d", "q1", "q2", "q3", "q4", "r_min"}},
      {"ornstein_uhlenbeck", {"d", "theta", "sigma"}},
      {"geometric_bm", {"d", "mu", "sigma"}},
      {"constant", {"d", "m", "sigma", "drift"}},
      {"additive_noise", {"d", "sigma"}},
  };
  return names;
}

inline CoefficientSystem builtin(std::string_view name, const ParamMap& params = {}) {
  const auto& table = builtin_parameter_names();
  const auto it = table.find(std::string(name));
  if (it == table.end()) throw ParameterError("unknown built-in system '" + std::string(name) + "'");
  for (const auto& [key, value] : params)
    if (!it->second.count(key))
      throw ParameterError("built-in '" + std::string(name) + "' has no parameter '" + key + "'");
  auto get = [&](const char* key, double fallback) {
    const auto p = params.find(key);
    return p == params.end() ? fallback : p->second;
  };
  auto get_dim = [&](const char* key, int fallback) {
    const double v = get(key, fallback);
    if (v != std::floor(v)) throw ParameterError(std::string("parameter '") + key + "' must be an integer");
    return static_cast<int>(v);
  };
  if (name == "example21") {
    Example21Params p;
    p.d = get_dim("d", 2);
    p.q1 = get("q1", p.q1);
    p.q2 = get("q2", p.q2);
    p.q3 = get("q3", p.q3);
    p.q4 = get("q4", p.q4);
    p.r_min = get("r_min", p.r_min);
    return example21(p);
  }
  if (name == "ornstein_uhlenbeck") return ornstein_uhlenbeck(get("theta", 1.0), get("sigma", 1.0), get_dim("d", 1));
  if (name == "geometric_bm") return geometric_bm(get("mu", 0.1), get("sigma", 0.2), get_dim("d", 1));
  if (name == "constant")
    return constant_system(get("sigma", 1.0), get("drift", 0.0), get_dim("d", 1), get_dim("m", 1));
  return additive_noise(get("sigma", 1.0), get_dim("d", 1));
}

}  // namespace flowlab
