#pragma once

#include "flowlab/coefficients.hpp"
#include "flowlab/quadrature.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace flowlab {

enum class CheckStatus { pass, fail, not_evaluated };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    default: return "not_evaluated";
  }
}

/// One sampled condition. margin >= 0 means satisfied at the worst point.
struct ConditionReport {
  std::string name;
  double p = 0.0;  // moment order for p-dependent conditions, else 0
  CheckStatus status = CheckStatus::not_evaluated;
  Vec worst_point;
  double worst_margin = std::numeric_limits<double>::infinity();
  double fitted = std::numeric_limits<double>::quiet_NaN();  // fitted constant where one is reported
  std::size_t samples = 0;
  std::size_t skipped = 0;  // points where the quantity could not be evaluated
  std::string detail;
};

struct AssumptionCheckSpec {
  double r_lo = 1e-3;            // innermost probe shell (the origin is probed separately)
  double r_hi = 20.0;            // outermost probe shell
  int shells = 40;               // geometric shells between r_lo and r_hi
  int directions = 16;           // d = 2 angles; d = 3 uses the 50-point sphere set; d = 4 uses axes and diagonals
  std::vector<double> p_list{2.0};
  int shift_directions = 8;      // shifts y on |y| = delta/2 and |y| = delta, plus y = 0
  double c3_radius = 2.0;        // ball for the exponential integrability quadrature
  double c3_inner = 1e-6;        // excised radius (singular sets)
  int c3_nodes_per_decade = 16;
  double c3_budget_log10 = 300.0;  // log10 of the largest acceptable integral
  double tolerance = 1e-12;
};

namespace detail {

inline std::vector<Vec> probe_directions(int d, int count) {
  std::vector<Vec> out;
  if (d == 1) return {make_vec({1.0}), make_vec({-1.0})};
  if (d == 2) {
    for (int i = 0; i < count; ++i) {
      const double a = 2.0 * std::numbers::pi * (i + 0.25) / count;
      out.push_back(make_vec({std::cos(a), std::sin(a)}));
    }
    return out;
  }
  if (d == 3) return sphere_rule(3).directions;
  for (int i = 0; i < d; ++i)
    for (double s : {1.0, -1.0}) out.push_back(s * unit_vec(d, i));
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = (mask >> i) & 1 ? -1.0 : 1.0;
    out.push_back(v / std::sqrt(static_cast<double>(d)));
  }
  return out;
}

inline std::vector<Vec> probe_points(int d, double lo, double hi, int shells, int directions, bool origin) {
  std::vector<Vec> pts;
  if (origin) pts.push_back(Vec::Zero(d));
  const auto dirs = probe_directions(d, directions);
  for (int s = 0; s < shells; ++s) {
    const double r = shells == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(s) / (shells - 1));
    for (const Vec& u : dirs) pts.push_back(r * u);
  }
  return pts;
}

inline double operator_norm(const Mat& a) { return std::sqrt(std::max(largest_eigenvalue(a.transpose() * a), 0.0)); }

inline void record(ConditionReport& r, const Vec& x, double margin) {
  ++r.samples;
  if (margin < r.worst_margin) {
    r.worst_margin = margin;
    r.worst_point = x;
  }
}

inline void finish(ConditionReport& r, double tol) {
  if (r.samples == 0) {
    r.status = CheckStatus::not_evaluated;
    return;
  }
  r.status = r.worst_margin >= -tol ? CheckStatus::pass : CheckStatus::fail;
}

/// log of int_{|x| <= R} exp(kappa K_p(x)) dx over r in [inner, R], by
/// Gauss-Legendre on decade panels times the angular probe set. Returns the
/// per-panel log contributions (outermost first).
inline std::vector<double> c3_panel_logs(const CoefficientSystem& system, double p, const AssumptionCheckSpec& spec,
                                         std::size_t& skipped) {
  const int d = system.dim();
  const double kappa = system.constants().kappa(p);
  const SphereRule sphere = sphere_rule(std::min(d, 3), spec.directions * 4);
  std::vector<Vec> dirs = sphere.directions;
  std::vector<double> dir_w = sphere.weights;
  if (d == 4) {
    dirs = probe_directions(4, 0);
    dir_w.assign(dirs.size(), 2.0 * std::numbers::pi * std::numbers::pi / dirs.size());
  }
  std::vector<double> logs;
  double outer = spec.c3_radius;
  JacobianSet jac;
  while (outer > spec.c3_inner * (1.0 + 1e-12)) {
    const double inner = std::max(outer / 10.0, spec.c3_inner);
    const auto gl = gauss_legendre(spec.c3_nodes_per_decade, std::log(inner), std::log(outer));
    std::vector<double> terms;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double r = std::exp(gl.nodes[i]);
      const double radial = std::log(gl.weights[i]) + d * std::log(r);  // dr = r d(log r), r^{d-1} dr
      for (std::size_t a = 0; a < dirs.size(); ++a) {
        const Vec x = r * dirs[a];
        if (system.jacobian_singular(x)) {
          ++skipped;
          continue;
        }
        system.jacobians(x, jac);
        const double kp = largest_eigenvalue(kp_matrix(jac, p));
        terms.push_back(radial + std::log(dir_w[a]) + kappa * kp);
      }
    }
    double top = -std::numeric_limits<double>::infinity();
    for (double t : terms) top = std::max(top, t);
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - top);
    logs.push_back(terms.empty() ? -std::numeric_limits<double>::infinity() : top + std::log(sum));
    outer = inner;
  }
  return logs;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : xs) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

}  // namespace detail

/// Sampled diagnostics for the growth, ellipticity and integrability
/// conditions. Nothing here is a proof: a pass means no violation was seen on
/// the probe set.
inline std::vector<ConditionReport> check_assumptions(const CoefficientSystem& system,
                                                      const AssumptionCheckSpec& spec = {}) {
  const int d = system.dim();
  const int m = system.noise_dim();
  const AssumptionConstants& c = system.constants();
  if (!(spec.r_hi > spec.r_lo && spec.r_lo > 0.0)) throw RangeError("check_assumptions: need 0 < r_lo < r_hi");
  if (spec.shells < 1) throw RangeError("check_assumptions: shells >= 1 required");
  for (double p : spec.p_list)
    if (!(p > 1.0)) throw RangeError("check_assumptions: moment orders must exceed 1");
  const auto points = detail::probe_points(d, spec.r_lo, spec.r_hi, spec.shells, spec.directions, true);
  std::vector<ConditionReport> out;
  FieldMatrix fields;
  JacobianSet jac;

  // Ellipticity floor.
  {
    ConditionReport r{"c1"};
    for (const Vec& x : points) {
      try {
        system.values(x, fields);
      } catch (const SingularPointError&) {
        ++r.skipped;
        continue;
      }
      const double floor = c.C1 / (1.0 + std::pow(x.norm(), c.p1));
      const double lo = smallest_eigenvalue(diffusion_matrix_from(fields));
      detail::record(r, x, (lo - floor) / floor);
    }
    r.detail = "relative margin of smallest eigenvalue of A over C1/(1+|x|^p1)";
    detail::finish(r, spec.tolerance);
    out.push_back(std::move(r));
  }

  // Polynomial growth.
  {
    ConditionReport r{"c2aa"};
    for (const Vec& x : points) {
      try {
        system.values(x, fields);
      } catch (const SingularPointError&) {
        ++r.skipped;
        continue;
      }
      const double bound = c.C2 * (1.0 + std::pow(x.norm(), c.p2));
      for (int k = 0; k <= m; ++k) detail::record(r, x, (bound - fields.col(k).norm()) / bound);
    }
    r.detail = "relative margin of C2(1+|x|^p2) over max_k |X_k(x)|";
    detail::finish(r, spec.tolerance);
    out.push_back(std::move(r));
  }

  // One-sided growth under shifts |y| <= delta.
  {
    std::vector<Vec> shifts{Vec::Zero(d)};
    for (const Vec& u : detail::probe_directions(d, spec.shift_directions))
      for (double s : {0.5, 1.0}) shifts.push_back(s * c.delta * u);
    for (double p : spec.p_list) {
      ConditionReport r{"c2", p};
      double fitted = -std::numeric_limits<double>::infinity();
      Vec arg;
      for (const Vec& x : points) {
        double sup = -std::numeric_limits<double>::infinity();
        for (const Vec& y : shifts) {
          try {
            system.values(x + y, fields);
          } catch (const SingularPointError&) {
            ++r.skipped;
            continue;
          }
          double q = x.dot(fields.col(0));
          for (int k = 1; k <= m; ++k) q += p * fields.col(k).squaredNorm();
          sup = std::max(sup, q);
        }
        if (!std::isfinite(sup)) continue;
        const double ratio = sup / (1.0 + x.squaredNorm());
        ++r.samples;
        if (ratio > fitted) {
          fitted = ratio;
          arg = x;
        }
      }
      r.fitted = fitted;
      r.worst_point = arg;
      if (r.samples == 0) {
        r.status = CheckStatus::not_evaluated;
      } else if (c.c2_constant) {
        const double C = c.c2_constant(p);
        r.worst_margin = (C - fitted) / std::max(std::abs(C), 1.0);
        r.status = r.worst_margin >= -spec.tolerance ? CheckStatus::pass : CheckStatus::fail;
        r.detail = "sup ratio against supplied C(p) = " + std::to_string(C);
      } else {
        r.worst_margin = std::isfinite(fitted) ? 0.0 : -std::numeric_limits<double>::infinity();
        r.status = std::isfinite(fitted) ? CheckStatus::pass : CheckStatus::fail;
        r.detail = "no C(p) supplied; fitted constant reported";
      }
      out.push_back(std::move(r));
    }
  }

  // Local exponential integrability of K_p.
  for (double p : spec.p_list) {
    ConditionReport r{"c3", p};
    try {
      const auto logs = detail::c3_panel_logs(system, p, spec, r.skipped);
      const double total = detail::log_sum_exp(logs) / std::log(10.0);
      r.fitted = total;
      r.samples = logs.size();
      // Divergence signature: the innermost decade dominates and is still growing.
      const bool growing = logs.size() >= 2 && logs.back() > logs[logs.size() - 2] &&
                           logs.back() >= detail::log_sum_exp(logs) - std::log(2.0);
      const bool finite = std::isfinite(total) && total <= spec.c3_budget_log10;
      r.worst_margin = spec.c3_budget_log10 - total;
      r.worst_point = Vec::Constant(d, spec.c3_inner / std::sqrt(static_cast<double>(d)));
      r.status = finite && !growing ? CheckStatus::pass : CheckStatus::fail;
      r.detail = "log10 integral = " + std::to_string(total) +
                 (growing ? "; innermost decade dominates and increases (divergent trend)" : "");
    } catch (const Error& e) {
      r.status = CheckStatus::not_evaluated;
      r.detail = e.what();
    }
    out.push_back(std::move(r));
  }

  // Jacobian growth and log-growth of K_p outside R1.
  const double r_out_lo = c.R1 * (1.0 + 1e-3);
  const auto outer = detail::probe_points(d, r_out_lo, std::max(spec.r_hi, 2.0 * r_out_lo), spec.shells,
                                          spec.directions, false);
  {
    ConditionReport r{"c4"};
    for (const Vec& x : outer) {
      try {
        system.jacobians(x, jac);
      } catch (const SingularPointError&) {
        ++r.skipped;
        continue;
      }
      const double bound = c.C3 * (1.0 + std::pow(x.norm(), c.p5));
      for (int k = 0; k <= m; ++k) detail::record(r, x, (bound - detail::operator_norm(jac[k])) / bound);
    }
    r.detail = "relative margin of C3(1+|x|^p5) over operator norms of DX_k for |x| > R1";
    detail::finish(r, spec.tolerance);
    out.push_back(std::move(r));
  }
  for (double p : spec.p_list) {
    ConditionReport r{"c4aa", p};
    double fitted = -std::numeric_limits<double>::infinity();
    for (const Vec& x : outer) {
      try {
        system.jacobians(x, jac);
      } catch (const SingularPointError&) {
        ++r.skipped;
        continue;
      }
      ++r.samples;
      const double ratio = largest_eigenvalue(kp_matrix(jac, p)) / std::log(1.0 + x.squaredNorm());
      if (ratio > fitted) {
        fitted = ratio;
        r.worst_point = x;
      }
    }
    r.fitted = fitted;
    if (r.samples == 0) {
      r.status = CheckStatus::not_evaluated;
    } else if (c.c4aa_constant) {
      const double C = c.c4aa_constant(p);
      r.worst_margin = (C - fitted) / std::max(std::abs(C), 1.0);
      r.status = r.worst_margin >= -spec.tolerance ? CheckStatus::pass : CheckStatus::fail;
      r.detail = "sup K_p/log(1+|x|^2) against supplied C(p) = " + std::to_string(C);
    } else {
      r.worst_margin = std::isfinite(fitted) ? 0.0 : -std::numeric_limits<double>::infinity();
      r.status = std::isfinite(fitted) ? CheckStatus::pass : CheckStatus::fail;
      r.detail = "no C(p) supplied; fitted constant reported";
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace flowlab
