#pragma once

#include "flowlab/coefficients.hpp"
#include "flowlab/rng.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace flowlab {

/// Brownian increments on a uniform grid, regenerable from
/// (master_seed, path_index).
struct BrownianPath {
  std::size_t n_steps = 0;
  double h = 0.0;
  int m = 0;
  std::vector<double> increments;  // n_steps x m, row-major
  std::uint64_t master_seed = 0;
  std::uint64_t path_index = 0;

  std::span<const double> dw(std::size_t step) const {
    return {increments.data() + step * static_cast<std::size_t>(m), static_cast<std::size_t>(m)};
  }
};

/// Increment (step, component) is sqrt(h) * Phi^{-1}(U) with U drawn by
/// Philox at counter (step, component, path_index) under key master_seed.
/// A longer path therefore extends a shorter one with the same prefix.
inline BrownianPath sample_path(std::uint64_t master_seed, std::uint64_t path_index, std::size_t n_steps, double h,
                                int m) {
  if (!(h > 0.0)) throw RangeError("sample_path: h must be positive");
  if (m < 1) throw RangeError("sample_path: m >= 1 required");
  BrownianPath path{n_steps, h, m, {}, master_seed, path_index};
  path.increments.resize(n_steps * static_cast<std::size_t>(m));
  const CounterNormal normal(master_seed);
  const double scale = std::sqrt(h);
  for (std::size_t n = 0; n < n_steps; ++n)
    for (int c = 0; c < m; ++c)
      path.increments[n * m + c] =
          scale * normal(path_index, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(c));
  return path;
}

/// Sums consecutive blocks of `factor` increments: the same Brownian
/// realisation on a grid `factor` times coarser.
inline BrownianPath coarsen(const BrownianPath& fine, std::size_t factor) {
  if (factor == 0 || fine.n_steps % factor != 0) throw RangeError("coarsen: factor must divide n_steps");
  if (factor == 1) return fine;
  BrownianPath out{fine.n_steps / factor, fine.h * factor, fine.m, {}, fine.master_seed, fine.path_index};
  out.increments.assign(out.n_steps * static_cast<std::size_t>(out.m), 0.0);
  for (std::size_t n = 0; n < fine.n_steps; ++n)
    for (int c = 0; c < fine.m; ++c) out.increments[(n / factor) * out.m + c] += fine.increments[n * fine.m + c];
  return out;
}

struct IntegratorConfig {
  double h = 1e-3;
  double T = 1.0;
  double guard_radius = 1e6;
  double r_min = 1e-6;

  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(T / h)); }

  void validate() const {
    if (!(h > 0.0)) throw ParameterError("integrator: h > 0 required");
    if (!(T >= h)) throw ParameterError("integrator: T >= h required");
    if (!(guard_radius > 0.0)) throw ParameterError("integrator: guard_radius > 0 required");
    if (!(r_min > 0.0)) throw ParameterError("integrator: r_min > 0 required");
    if (std::abs(static_cast<double>(n_steps()) * h - T) > 1e-9 * T)
      throw ParameterError("integrator: T must be an integer multiple of h");
  }

  IntegratorConfig with_horizon(double t) const {
    IntegratorConfig c = *this;
    c.T = t;
    return c;
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> x;
  std::vector<Vec> v;
  bool exploded = false;
  std::optional<std::size_t> exit_step;
  std::size_t clamped = 0;
  std::size_t stride = 1;
};

/// State handed to observers before each Euler step.
struct StepView {
  std::size_t step;
  double t;
  const Vec& x;
  const Vec& v;
  const FieldMatrix& fields;
  const JacobianSet& jac;  // unset when only the flow is tracked
  std::span<const double> dw;
};

struct PathOutcome {
  Vec x;
  Vec v;
  std::size_t steps = 0;  // Euler steps completed
  bool exploded = false;
  bool stopped = false;  // observer requested early stop
  std::size_t clamped = 0;
};

enum class Track { flow, flow_and_derivative };

/// Point at which Jacobians are evaluated: x itself, or its radial clamp to
/// r_min when x sits inside the system's singular set. Returns true if clamped.
inline bool jacobian_evaluation_point(const CoefficientSystem& system, const Vec& x, double r_min, Vec& jx) {
  const double r = x.norm();
  const bool inside = system.has_singular_set() && r < r_min;
  if (!inside && !system.jacobian_singular(x)) {
    jx = x;
    return false;
  }
  jx = r > 0.0 ? Vec((r_min / r) * x) : Vec(r_min * unit_vec(static_cast<int>(x.size()), 0));
  return true;
}

namespace detail {

inline bool all_finite(const FieldMatrix& m) { return m.allFinite(); }
inline bool all_finite(const JacobianSet& j) {
  for (int k = 0; k < j.count; ++k)
    if (!j[k].allFinite()) return false;
  return true;
}

}  // namespace detail

/// Explicit Euler-Maruyama for the pair (x, v):
///   x+ = x + sum_k X_k(x) dW^k + X_0(x) h
///   v+ = v + sum_k DX_k(x) v dW^k + DX_0(x) v h
/// with every coefficient evaluated at the pre-step state. The observer sees
/// each pre-step state and may return false to stop.
template <class Observer>
PathOutcome propagate(const CoefficientSystem& system, const Vec& x0, const Vec& v0, const BrownianPath& path,
                      const IntegratorConfig& cfg, Observer&& observer, Track track = Track::flow_and_derivative) {
  const int d = system.dim();
  const int m = system.noise_dim();
  if (x0.size() != d || v0.size() != d) throw RangeError("propagate: x0 and v0 must have dimension d");
  if (path.m != m) throw RangeError("propagate: path noise dimension differs from system");
  if (!x0.allFinite()) throw RangeError("propagate: x0 must be finite");
  const std::size_t n_steps = std::min(path.n_steps, cfg.n_steps());
  const double h = cfg.h;

  PathOutcome out;
  out.x = x0;
  out.v = v0;
  FieldMatrix fields(d, m + 1);
  JacobianSet jac;
  jac.resize(d, m + 1);
  Vec jx(d), xn(d), vn(d);
  const bool with_v = track == Track::flow_and_derivative;

  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto dw = path.dw(n);
    if (with_v) {
      if (jacobian_evaluation_point(system, out.x, cfg.r_min, jx)) ++out.clamped;
      system.evaluate(out.x, jx, fields, jac);
      if (!detail::all_finite(fields) || !detail::all_finite(jac))
        throw IntegrationError("non-finite coefficient", n, out.x);
    } else {
      system.values(out.x, fields);
      if (!detail::all_finite(fields)) throw IntegrationError("non-finite coefficient", n, out.x);
    }
    if (!observer(StepView{n, n * h, out.x, out.v, fields, jac, dw})) {
      out.stopped = true;
      return out;
    }
    xn.noalias() = out.x + fields.col(0) * h;
    for (int k = 1; k <= m; ++k) xn.noalias() += fields.col(k) * dw[k - 1];
    if (with_v) {
      vn.noalias() = out.v + (jac[0] * out.v) * h;
      for (int k = 1; k <= m; ++k) vn.noalias() += (jac[k] * out.v) * dw[k - 1];
      out.v = vn;
    }
    out.x = xn;
    out.steps = n + 1;
    if (!out.x.allFinite()) throw IntegrationError("non-finite state", n + 1, out.x);
    if (out.x.norm() > cfg.guard_radius) {
      out.exploded = true;
      return out;
    }
  }
  return out;
}

inline PathOutcome propagate(const CoefficientSystem& system, const Vec& x0, const Vec& v0, const BrownianPath& path,
                             const IntegratorConfig& cfg, Track track = Track::flow_and_derivative) {
  return propagate(system, x0, v0, path, cfg, [](const StepView&) { return true; }, track);
}

/// Records every `stride`-th state plus the final one.
inline Trajectory integrate(const CoefficientSystem& system, const Vec& x0, const Vec& v0, const BrownianPath& path,
                            const IntegratorConfig& cfg, std::size_t stride = 1) {
  cfg.validate();
  if (stride == 0) throw RangeError("integrate: stride >= 1 required");
  Trajectory traj;
  traj.stride = stride;
  auto record = [&](std::size_t n, const Vec& x, const Vec& v) {
    traj.times.push_back(n * cfg.h);
    traj.x.push_back(x);
    traj.v.push_back(v);
  };
  const PathOutcome out = propagate(system, x0, v0, path, cfg, [&](const StepView& s) {
    if (s.step % stride == 0) record(s.step, s.x, s.v);
    return true;
  });
  if (traj.times.empty() || traj.times.back() != out.steps * cfg.h) record(out.steps, out.x, out.v);
  traj.exploded = out.exploded;
  if (out.exploded) traj.exit_step = out.steps;
  traj.clamped = out.clamped;
  return traj;
}

/// Every start driven by the same increments; output order follows input.
inline std::vector<Trajectory> multi_start(const CoefficientSystem& system, const std::vector<Vec>& starts,
                                           const Vec& v0, const BrownianPath& path, const IntegratorConfig& cfg,
                                           std::size_t stride = 1) {
  std::vector<Trajectory> out;
  out.reserve(starts.size());
  for (const Vec& x0 : starts) out.push_back(integrate(system, x0, v0, path, cfg, stride));
  return out;
}

/// |v_T|^p computed directly and through |v_0|^p exp(M - <M>/2 + a), with
///   M   = p sum_k int <DX_k(x) v, v> / |v|^2 dW^k
///   <M> = sum_k int (p <DX_k(x) v, v> / |v|^2)^2 dt
///   a   = (p/2) int Hbar_p(x)(v, v) / |v|^2 dt,
///   Hbar_p(x)(v, v) = 2 <DX_0 v, v> + sum_k (|DX_k v|^2 + (p - 2) <DX_k v, v>^2 / |v|^2),
/// all accumulated as left-point sums on the trajectory grid.
struct LogExponentialCheck {
  double direct = 0.0;
  double reconstructed = 0.0;
  double martingale = 0.0;
  double quadratic_variation = 0.0;
  double drift = 0.0;
};

inline LogExponentialCheck log_exponential_check(const CoefficientSystem& system, const Trajectory& traj,
                                                 const BrownianPath& path, double p, const IntegratorConfig& cfg) {
  if (traj.exploded) throw RangeError("log_exponential_check: trajectory exploded");
  if (traj.stride != 1) throw RangeError("log_exponential_check: trajectory stride must be 1");
  const std::size_t n_steps = traj.x.size() - 1;
  if (n_steps > path.n_steps) throw RangeError("log_exponential_check: path shorter than trajectory");
  const int m = system.noise_dim();
  LogExponentialCheck out;
  JacobianSet jac;
  Vec jx;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const Vec& x = traj.x[n];
    const Vec& v = traj.v[n];
    const double v2 = v.squaredNorm();
    if (!(v2 > 0.0)) throw RangeError("log_exponential_check: zero derivative vector at step " + std::to_string(n));
    jacobian_evaluation_point(system, x, cfg.r_min, jx);
    system.jacobians(jx, jac);
    const auto dw = path.dw(n);
    double hbar = 2.0 * v.dot(jac[0] * v);
    for (int k = 1; k <= m; ++k) {
      const Vec jv = jac[k] * v;
      const double c = jv.dot(v) / v2;
      out.martingale += p * c * dw[k - 1];
      out.quadratic_variation += p * p * c * c * cfg.h;
      hbar += jv.squaredNorm() + (p - 2.0) * c * c * v2;
    }
    out.drift += 0.5 * p * hbar / v2 * cfg.h;
  }
  out.direct = std::pow(traj.v.back().norm(), p);
  out.reconstructed =
      std::pow(traj.v.front().norm(), p) * std::exp(out.martingale - 0.5 * out.quadratic_variation + out.drift);
  return out;
}

}  // namespace flowlab
