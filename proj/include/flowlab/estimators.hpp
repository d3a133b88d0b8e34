#pragma once

#include "flowlab/approximation.hpp"
#include "flowlab/coefficients.hpp"
#include "flowlab/engine.hpp"
#include "flowlab/parallel.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace flowlab {

struct SimulationOptions {
  IntegratorConfig integrator;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 0;
  int workers = 1;
  double failure_tolerance = 1e-3;  // failed fraction above which a run is unreliable
};

/// Monte Carlo point estimate with its bookkeeping.
struct EstimateReport {
  double value = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_paths = 0;      // paths contributing to value
  std::size_t n_requested = 0;  // paths simulated
  std::size_t n_failed = 0;     // excluded: exits, non-finite states, singular diffusion
  std::size_t n_exits = 0;
  std::size_t n_near_singular = 0;
  std::size_t n_clamped = 0;  // clamped steps summed over paths
  double h = 0.0;
  double t = 0.0;
  bool unreliable = false;
  bool window_exceeded = false;
  std::vector<std::string> notes;
};

/// Combined standard error of a difference of two estimates.
inline double combined_error(const EstimateReport& a, const EstimateReport& b) {
  return std::hypot(a.std_error, b.std_error);
}

struct PathSample {
  std::vector<double> values;
  bool ok = true;
  bool exited = false;
  bool near_singular = false;
  std::size_t clamped = 0;
};

namespace detail {

/// Mean and standard error of column j over successful paths, summed in
/// path-index order.
inline EstimateReport summarize(const std::vector<PathSample>& samples, std::size_t j, const SimulationOptions& opt,
                                double t) {
  EstimateReport r;
  r.n_requested = samples.size();
  r.h = opt.integrator.h;
  r.t = t;
  double sum = 0.0;
  for (const auto& s : samples) {
    r.n_clamped += s.clamped;
    if (s.exited) ++r.n_exits;
    if (s.near_singular) ++r.n_near_singular;
    if (!s.ok) {
      ++r.n_failed;
      continue;
    }
    sum += s.values[j];
    ++r.n_paths;
  }
  if (r.n_paths > 0) {
    r.value = sum / r.n_paths;
    double ss = 0.0;
    for (const auto& s : samples)
      if (s.ok) ss += (s.values[j] - r.value) * (s.values[j] - r.value);
    r.std_error = r.n_paths > 1 ? std::sqrt(ss / (r.n_paths - 1) / r.n_paths) : 0.0;
  }
  r.unreliable = r.n_requested == 0 || r.n_paths == 0 ||
                 static_cast<double>(r.n_failed) > opt.failure_tolerance * static_cast<double>(r.n_requested);
  if (r.n_exits) r.notes.push_back(std::to_string(r.n_exits) + " guard exits");
  if (r.n_near_singular) r.notes.push_back(std::to_string(r.n_near_singular) + " near-singular diffusion paths");
  if (r.n_failed > r.n_exits + r.n_near_singular)
    r.notes.push_back(std::to_string(r.n_failed - r.n_exits - r.n_near_singular) + " integration failures");
  if (r.n_clamped) r.notes.push_back(std::to_string(r.n_clamped) + " clamped steps");
  if (r.unreliable) r.notes.push_back("unreliable: failed fraction above tolerance");
  return r;
}

/// Runs per_path(index, path) -> PathSample over all paths; integration and
/// ellipticity failures mark the path as failed instead of aborting.
template <class Fn>
std::vector<PathSample> simulate_paths(const CoefficientSystem& system, const SimulationOptions& opt,
                                       std::size_t n_steps, Fn&& per_path) {
  opt.integrator.validate();
  if (opt.n_paths == 0) throw RangeError("simulation: n_paths >= 1 required");
  const int m = system.noise_dim();
  return run_indexed<PathSample>(opt.n_paths, opt.workers, [&](std::size_t i) {
    const BrownianPath path = sample_path(opt.seed, i, n_steps, opt.integrator.h, m);
    try {
      return per_path(i, path);
    } catch (const NearSingularDiffusionError&) {
      PathSample s;
      s.ok = false;
      s.near_singular = true;
      return s;
    } catch (const IntegrationError&) {
      PathSample s;
      s.ok = false;
      return s;
    }
  });
}

inline std::size_t steps_for(const IntegratorConfig& cfg, double t) {
  if (!(t > 0.0)) throw RangeError("estimator: t > 0 required");
  const auto n = static_cast<std::size_t>(std::llround(t / cfg.h));
  if (n == 0 || std::abs(n * cfg.h - t) > 1e-9 * t) throw RangeError("estimator: t must be a multiple of h");
  return n;
}

inline PathSample exited_sample(std::size_t clamped) {
  PathSample s;
  s.ok = false;
  s.exited = true;
  s.clamped = clamped;
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Payoffs.

struct Payoff {
  std::string name;
  std::function<double(const Vec&)> f;
  double operator()(const Vec& x) const { return f(x); }
};

/// identity: x_1; sine: sin(x_1); gaussian: exp(-|x|^2); constant: c.
inline Payoff make_payoff(const std::string& name, double c = 1.0) {
  if (name == "identity") return {name, [](const Vec& x) { return x(0); }};
  if (name == "sine") return {name, [](const Vec& x) { return std::sin(x(0)); }};
  if (name == "gaussian") return {name, [](const Vec& x) { return std::exp(-x.squaredNorm()); }};
  if (name == "constant") return {name, [c](const Vec&) { return c; }};
  throw ParameterError("unknown payoff '" + name + "' (expected identity, sine, gaussian, constant)");
}

// ---------------------------------------------------------------------------
// Moment window.

struct MomentWindow {
  double p = 0.0;
  double T0 = 0.0;
  std::string source;
};

/// T0(p) = kappa(p) / (d + 2).
inline MomentWindow moment_window(const CoefficientSystem& system, double p) {
  const double kappa = system.constants().kappa(p);
  if (!(kappa > 0.0)) throw ParameterError("moment window: kappa(p) must be positive");
  return {p, kappa / (system.dim() + 2.0), system.constants().kappa_source};
}

inline void flag_window(EstimateReport& r, const CoefficientSystem& system, double p, double t) {
  const MomentWindow w = moment_window(system, p);
  if (t > w.T0 * (1.0 + 1e-12)) {
    r.window_exceeded = true;
    r.notes.push_back("t exceeds moment window T0(" + std::to_string(p) + ") = " + std::to_string(w.T0) +
                      "; bound not claimed");
  }
}

// ---------------------------------------------------------------------------

/// E |V_t(x, v)|^p.
inline EstimateReport derivative_moment(const CoefficientSystem& system, const Vec& x, const Vec& v, double p,
                                        double t, const SimulationOptions& opt) {
  const auto cfg = opt.integrator.with_horizon(t);
  const std::size_t n = detail::steps_for(opt.integrator, t);
  auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
    const PathOutcome o = propagate(system, x, v, path, cfg);
    if (o.exploded) return detail::exited_sample(o.clamped);
    PathSample s;
    s.values = {std::pow(o.v.norm(), p)};
    s.clamped = o.clamped;
    return s;
  });
  EstimateReport r = detail::summarize(samples, 0, opt, t);
  flag_window(r, system, p, t);
  return r;
}

/// Bismut-Elworthy-Li estimate of D_x E f(F_t(x))(v):
///   (1/t) E[ f(F_t(x)) sum_n <Y(x_n) v_n, dW_n> ]
/// with Y the right inverse and the stochastic integral taken at left points.
inline EstimateReport bel_gradient(const CoefficientSystem& system, const Vec& x, const Vec& v, const Payoff& f,
                                   double t, const SimulationOptions& opt,
                                   double max_condition = kDefaultMaxCondition) {
  const auto cfg = opt.integrator.with_horizon(t);
  const std::size_t n = detail::steps_for(opt.integrator, t);
  const int m = system.noise_dim();
  auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
    double weight = 0.0;
    const PathOutcome o = propagate(system, x, v, path, cfg, [&](const StepView& s) {
      const NoiseVec y = right_inverse_from(s.fields, s.v, s.x, max_condition);
      for (int k = 0; k < m; ++k) weight += y(k) * s.dw[k];
      return true;
    });
    if (o.exploded) return detail::exited_sample(o.clamped);
    PathSample s;
    s.values = {f(o.x) * weight / t};
    s.clamped = o.clamped;
    return s;
  });
  return detail::summarize(samples, 0, opt, t);
}

/// Central difference (P_t f(x + delta v) - P_t f(x - delta v)) / (2 delta)
/// with common random numbers.
inline EstimateReport fd_gradient(const CoefficientSystem& system, const Vec& x, const Vec& v, const Payoff& f,
                                  double t, double delta, const SimulationOptions& opt) {
  if (!(delta > 0.0)) throw RangeError("fd_gradient: delta > 0 required");
  const auto cfg = opt.integrator.with_horizon(t);
  const std::size_t n = detail::steps_for(opt.integrator, t);
  const Vec xp = x + delta * v;
  const Vec xm = x - delta * v;
  auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
    const PathOutcome a = propagate(system, xp, v, path, cfg, Track::flow);
    const PathOutcome b = propagate(system, xm, v, path, cfg, Track::flow);
    if (a.exploded || b.exploded) return detail::exited_sample(0);
    PathSample s;
    s.values = {(f(a.x) - f(b.x)) / (2.0 * delta)};
    return s;
  });
  return detail::summarize(samples, 0, opt, t);
}

// ---------------------------------------------------------------------------
// Moment bound through Theta_g.

struct MomentCheckpoint {
  double t = 0.0;
  EstimateReport lhs;  // E (1 + |F_t|^2)^lambda
  double rhs = 0.0;    // (1 + |x|^2)^lambda exp(lambda Theta t)
  bool pass = false;   // lhs <= rhs + 3 std errors
};

struct FlowMomentBound {
  double lambda = 0.0;
  ThetaReport theta;
  std::vector<MomentCheckpoint> checkpoints;
  bool all_pass = false;
};

inline FlowMomentBound flow_moment_bound_check(const CoefficientSystem& system, const Vec& x, double lambda, double T,
                                               const SimulationOptions& opt, const ThetaOptions& theta_opt = {},
                                               int n_checkpoints = 10) {
  if (n_checkpoints < 1) throw RangeError("flow_moment_bound_check: at least one checkpoint");
  FlowMomentBound out;
  out.lambda = lambda;
  out.theta = theta_g(system, lambda, theta_opt);
  const std::size_t n = detail::steps_for(opt.integrator, T);
  std::vector<std::size_t> steps;
  for (int j = 1; j <= n_checkpoints; ++j)
    steps.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(j) * n / n_checkpoints)));
  const auto cfg = opt.integrator.with_horizon(T);
  auto moment = [lambda](const Vec& y) { return std::pow(1.0 + y.squaredNorm(), lambda); };
  auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
    PathSample s;
    s.values.assign(steps.size(), 0.0);
    std::size_t next = 0;
    const PathOutcome o = propagate(
        system, x, x, path, cfg,
        [&](const StepView& v) {
          while (next < steps.size() && steps[next] == v.step) s.values[next++] = moment(v.x);
          return true;
        },
        Track::flow);
    if (o.exploded) return detail::exited_sample(0);
    while (next < steps.size()) s.values[next++] = moment(o.x);
    return s;
  });
  out.all_pass = true;
  const double start = moment(x);
  for (std::size_t j = 0; j < steps.size(); ++j) {
    MomentCheckpoint c;
    c.t = steps[j] * opt.integrator.h;
    c.lhs = detail::summarize(samples, j, opt, c.t);
    c.rhs = start * std::exp(lambda * out.theta.value * c.t);
    c.pass = c.lhs.value <= c.rhs + 3.0 * c.lhs.std_error;
    out.all_pass = out.all_pass && c.pass;
    out.checkpoints.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Approximation-family convergence.

struct GapRow {
  double eps_a = 0.0;
  double eps_b = 0.0;
  EstimateReport flow_gap;        // E sup_n |F^a_n - F^b_n|
  EstimateReport derivative_gap;  // E sup_n |V^a_n - V^b_n|
  bool certified = false;         // both eps below the family's guaranteed eps0
};

struct FamilyConvergence {
  std::vector<double> eps;
  std::vector<GapRow> consecutive;
  std::vector<GapRow> to_finest;
};

/// eps_list must be strictly decreasing; all members share the increments.
inline FamilyConvergence family_convergence(const MollifiedFamily& family, const std::vector<double>& eps_list,
                                            const Vec& x, const Vec& v, double T, const SimulationOptions& opt) {
  if (eps_list.size() < 2) throw RangeError("family_convergence: at least two eps values");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1])) throw RangeError("family_convergence: eps_list must be strictly decreasing");
  std::vector<CoefficientSystem> members;
  for (double e : eps_list) members.push_back(family.member(e));
  const std::size_t K = members.size();
  const auto cfg = opt.integrator.with_horizon(T);
  const std::size_t n = detail::steps_for(opt.integrator, T);

  // Columns: consecutive flow, consecutive derivative, to-finest flow, to-finest derivative.
  auto samples = detail::simulate_paths(members.front(), opt, n, [&](std::size_t, const BrownianPath& path) {
    std::vector<Trajectory> traj;
    std::size_t clamped = 0;
    for (const auto& sys : members) {
      traj.push_back(integrate(sys, x, v, path, cfg));
      clamped += traj.back().clamped;
      if (traj.back().exploded) return detail::exited_sample(clamped);
    }
    auto sup_gap = [&](std::size_t a, std::size_t b, bool derivative) {
      double g = 0.0;
      for (std::size_t s = 0; s < traj[a].x.size(); ++s) {
        const Vec& u = derivative ? traj[a].v[s] : traj[a].x[s];
        const Vec& w = derivative ? traj[b].v[s] : traj[b].x[s];
        g = std::max(g, (u - w).norm());
      }
      return g;
    };
    PathSample s;
    s.clamped = clamped;
    for (std::size_t i = 0; i + 1 < K; ++i) s.values.push_back(sup_gap(i, i + 1, false));
    for (std::size_t i = 0; i + 1 < K; ++i) s.values.push_back(sup_gap(i, i + 1, true));
    for (std::size_t i = 0; i + 1 < K; ++i) s.values.push_back(sup_gap(i, K - 1, false));
    for (std::size_t i = 0; i + 1 < K; ++i) s.values.push_back(sup_gap(i, K - 1, true));
    return s;
  });

  FamilyConvergence out;
  out.eps = eps_list;
  const std::size_t P = K - 1;
  for (std::size_t i = 0; i < P; ++i) {
    GapRow c{eps_list[i], eps_list[i + 1], detail::summarize(samples, i, opt, T),
             detail::summarize(samples, P + i, opt, T),
             family.certified(eps_list[i]) && family.certified(eps_list[i + 1])};
    GapRow f{eps_list[i], eps_list[K - 1], detail::summarize(samples, 2 * P + i, opt, T),
             detail::summarize(samples, 3 * P + i, opt, T),
             family.certified(eps_list[i]) && family.certified(eps_list[K - 1])};
    for (GapRow* row : {&c, &f}) {
      flag_window(row->flow_gap, family.base(), 2.0, T);
      flag_window(row->derivative_gap, family.base(), 2.0, T);
    }
    out.consecutive.push_back(std::move(c));
    out.to_finest.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Integration by parts in the starting point.

/// phi(x) = exp(-1 / (1 - |x - c|^2 / rho^2)) on |x - c| < rho.
struct BumpFunction {
  Vec center;
  double radius = 1.0;

  double value(const Vec& x) const {
    const double s = (x - center).squaredNorm() / (radius * radius);
    return s < 1.0 ? std::exp(-1.0 / (1.0 - s)) : 0.0;
  }
  Vec gradient(const Vec& x) const {
    const Vec u = x - center;
    const double s = u.squaredNorm() / (radius * radius);
    if (s >= 1.0) return Vec::Zero(x.size());
    const double e = std::exp(-1.0 / (1.0 - s));
    return (-2.0 * e / ((1.0 - s) * (1.0 - s) * radius * radius)) * u;
  }
};

struct IbpOptions {
  double lo = -0.5;
  double hi = 0.5;
  int points_per_axis = 41;
  int coordinate = 0;          // i: differentiation direction e_i
  std::size_t n_omega = 8;
  std::size_t substeps = 1;    // increments drawn at h / substeps, then summed
  double radius_fraction = 0.9;  // bump radius relative to the box half-width
};

struct IbpReport {
  double mean = 0.0;
  double max = 0.0;
  std::vector<double> residuals;  // per noise sample: max_j |R_j|
  std::size_t grid_points = 0;
  std::size_t support_points = 0;
  std::size_t n_exits = 0;
  bool window_exceeded = false;
};

/// R_j(omega) = | int d_i phi(x) F_t^j(x, omega) dx + int phi(x) V_t^j(x, e_i, omega) dx |
/// by the trapezoid rule on a uniform grid; one path per omega shared by
/// every grid start.
inline IbpReport ibp_residual(const CoefficientSystem& system, double t, const IbpOptions& ibp,
                              const SimulationOptions& opt) {
  const int d = system.dim();
  if (ibp.coordinate < 0 || ibp.coordinate >= d) throw RangeError("ibp_residual: coordinate out of range");
  if (ibp.points_per_axis < 3) throw RangeError("ibp_residual: at least 3 points per axis");
  if (!(ibp.hi > ibp.lo)) throw RangeError("ibp_residual: empty box");
  if (ibp.substeps == 0 || ibp.n_omega == 0) throw RangeError("ibp_residual: substeps and n_omega >= 1 required");
  const auto cfg = opt.integrator.with_horizon(t);
  cfg.validate();
  const std::size_t n = detail::steps_for(opt.integrator, t);

  BumpFunction phi{Vec::Constant(d, 0.5 * (ibp.lo + ibp.hi)), ibp.radius_fraction * 0.5 * (ibp.hi - ibp.lo)};
  const double cell = std::pow((ibp.hi - ibp.lo) / (ibp.points_per_axis - 1), d);
  std::vector<Vec> support;
  IbpReport out;
  for_each_grid_point(d, ibp.lo, ibp.hi, ibp.points_per_axis, [&](const Vec& x) {
    ++out.grid_points;
    if (phi.value(x) > 0.0) support.push_back(x);
  });
  out.support_points = support.size();
  const Vec e = unit_vec(d, ibp.coordinate);

  struct Contribution {
    Vec term;
    bool exited = false;
  };
  for (std::size_t w = 0; w < ibp.n_omega; ++w) {
    const BrownianPath fine =
        sample_path(opt.seed, w, n * ibp.substeps, opt.integrator.h / ibp.substeps, system.noise_dim());
    const BrownianPath path = coarsen(fine, ibp.substeps);
    auto parts = run_indexed<Contribution>(support.size(), opt.workers, [&](std::size_t i) {
      const Vec& x = support[i];
      const PathOutcome o = propagate(system, x, e, path, cfg);
      if (o.exploded) return Contribution{Vec::Zero(d), true};
      return Contribution{Vec(phi.gradient(x)(ibp.coordinate) * o.x + phi.value(x) * o.v), false};
    });
    Vec total = Vec::Zero(d);
    for (const auto& c : parts) {
      total += c.term;
      if (c.exited) ++out.n_exits;
    }
    out.residuals.push_back((cell * total).cwiseAbs().maxCoeff());
  }
  for (double r : out.residuals) {
    out.mean += r / out.residuals.size();
    out.max = std::max(out.max, r);
  }
  out.window_exceeded = t > moment_window(system, 2.0).T0 * (1.0 + 1e-12);
  return out;
}

// ---------------------------------------------------------------------------
// Krylov-type occupation estimate.

struct KrylovOptions {
  double R = 1.0;            // localisation radius for F_t - x
  double f_value = 1.0;      // f = f_value on [0, T] x B_R
  double q = 0.0;            // Hoelder exponent p > d + 1 for the Q-shapes; 0 selects 2(d + 1)
  double C_d = 1.0;          // multiplicative constant (unknown in general)
};

struct KrylovReport {
  EstimateReport lhs;  // E int_0^{T ^ tau_R} f det(A(F_t))^{1/(d+1)} dt
  EstimateReport A;    // E int_0^{T ^ tau_R} tr A(F_t) dt
  EstimateReport B;    // E int_0^{T ^ tau_R} |X_0(F_t)| dt
  double f_norm = 0.0;     // ||f||_{L^{d+1}([0,T] x B_R)}
  double rhs_shape = 0.0;  // e^T (A + B^2)^{d / (2(d+1))} ||f||
  double rhs = 0.0;        // C_d * rhs_shape
  double ratio = 0.0;      // lhs / rhs_shape
  double alpha = 0.0;      // q / (d + 1)
  double Q1_shape = 0.0;   // T^{(alpha-1)/alpha} (T + T^2)^{d/(2(d+1)alpha)}; the e^{C(1+T)} factor is omitted
  double Q2_shape = 0.0;   // 1 + |x|^{d(p1+p2)/((d+1)alpha)}
};

inline KrylovReport krylov_check(const CoefficientSystem& system, const Vec& x, double T, const KrylovOptions& ko,
                                 const SimulationOptions& opt) {
  const int d = system.dim();
  if (!(ko.R > 0.0)) throw RangeError("krylov_check: R > 0 required");
  if (!(ko.f_value >= 0.0)) throw RangeError("krylov_check: f must be non-negative");
  const auto cfg = opt.integrator.with_horizon(T);
  const std::size_t n = detail::steps_for(opt.integrator, T);
  const double h = opt.integrator.h;
  const double q = d + 1.0;
  auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
    PathSample s;
    s.values.assign(3, 0.0);
    const PathOutcome o = propagate(
        system, x, x, path, cfg,
        [&](const StepView& v) {
          if ((v.x - x).norm() > ko.R) return false;
          const Mat a = diffusion_matrix_from(v.fields);
          const double det = std::max(a.determinant(), 0.0);
          s.values[0] += ko.f_value * std::pow(det, 1.0 / q) * h;
          s.values[1] += a.trace() * h;
          s.values[2] += v.fields.col(0).norm() * h;
          return true;
        },
        Track::flow);
    if (o.exploded) return detail::exited_sample(0);
    return s;
  });
  KrylovReport r;
  r.lhs = detail::summarize(samples, 0, opt, T);
  r.A = detail::summarize(samples, 1, opt, T);
  r.B = detail::summarize(samples, 2, opt, T);
  r.f_norm = ko.f_value * std::pow(T * unit_ball_volume(d) * std::pow(ko.R, d), 1.0 / q);
  r.rhs_shape = std::exp(T) * std::pow(r.A.value + r.B.value * r.B.value, d / (2.0 * q)) * r.f_norm;
  r.rhs = ko.C_d * r.rhs_shape;
  r.ratio = r.rhs_shape > 0.0 ? r.lhs.value / r.rhs_shape : std::numeric_limits<double>::quiet_NaN();
  const double p = ko.q > 0.0 ? ko.q : 2.0 * q;
  if (!(p > q)) throw RangeError("krylov_check: Q-shape exponent must exceed d + 1");
  r.alpha = p / q;
  r.Q1_shape = std::pow(T, (r.alpha - 1.0) / r.alpha) * std::pow(T + T * T, d / (2.0 * q * r.alpha));
  const auto& c = system.constants();
  r.Q2_shape = 1.0 + std::pow(x.norm(), d * (c.p1 + c.p2) / (q * r.alpha));
  return r;
}

// ---------------------------------------------------------------------------
// Lipschitz-in-mean modulus.

struct HolderRow {
  Vec x;
  Vec y;
  EstimateReport ratio;  // E |F_t(x) - F_t(y)|^p / |x - y|^p
};

inline std::vector<HolderRow> holder_modulus(const CoefficientSystem& system,
                                             const std::vector<std::pair<Vec, Vec>>& pairs, double p, double t,
                                             const SimulationOptions& opt) {
  const auto cfg = opt.integrator.with_horizon(t);
  const std::size_t n = detail::steps_for(opt.integrator, t);
  std::vector<HolderRow> rows;
  for (const auto& [x, y] : pairs) {
    const double dist = (x - y).norm();
    if (!(dist > 0.0)) throw RangeError("holder_modulus: pair points must differ");
    auto samples = detail::simulate_paths(system, opt, n, [&](std::size_t, const BrownianPath& path) {
      const PathOutcome a = propagate(system, x, x, path, cfg, Track::flow);
      const PathOutcome b = propagate(system, y, y, path, cfg, Track::flow);
      if (a.exploded || b.exploded) return detail::exited_sample(0);
      PathSample s;
      s.values = {std::pow((a.x - b.x).norm() / dist, p)};
      return s;
    });
    HolderRow row{x, y, detail::summarize(samples, 0, opt, t)};
    flag_window(row.ratio, system, p, t);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace flowlab
