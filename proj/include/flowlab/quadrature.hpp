#pragma once

#include "flowlab/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace flowlab {

struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b]; nodes from Newton iteration on P_n.
inline GaussLegendreRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  if (n < 1) throw RangeError("gauss_legendre: n >= 1 required");
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Re-evaluate the derivative at the converged node.
    double p0 = 1.0, p1 = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = mid - half * z;
    rule.nodes[n - 1 - i] = mid + half * z;
    rule.weights[i] = rule.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

/// Points with weights on the unit sphere S^{d-1}; weights sum to its area.
struct SphereRule {
  std::vector<Vec> directions;
  std::vector<double> weights;
};

namespace detail {

// 50-point octahedrally symmetric sphere rule, exact through degree 11.
// Weights below are normalised to sum 1.
inline SphereRule lebedev50() {
  SphereRule rule;
  auto add = [&](double x, double y, double z, double w) {
    rule.directions.push_back(make_vec({x, y, z}));
    rule.weights.push_back(4.0 * std::numbers::pi * w);
  };
  const double w1 = 0.1269841269841270e-1;
  const double w2 = 0.2257495590828924e-1;
  const double w3 = 0.2109375000000000e-1;
  const double w4 = 0.2017333553791887e-1;
  for (int axis = 0; axis < 3; ++axis)
    for (double s : {1.0, -1.0}) {
      double v[3] = {0, 0, 0};
      v[axis] = s;
      add(v[0], v[1], v[2], w1);
    }
  const double a2 = std::sqrt(0.5);
  for (int zero = 0; zero < 3; ++zero)
    for (double s1 : {1.0, -1.0})
      for (double s2 : {1.0, -1.0}) {
        double v[3];
        int slot = 0;
        for (int c = 0; c < 3; ++c) v[c] = c == zero ? 0.0 : (slot++ == 0 ? s1 : s2) * a2;
        add(v[0], v[1], v[2], w2);
      }
  const double a3 = std::sqrt(1.0 / 3.0);
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0})
      for (double s3 : {1.0, -1.0}) add(s1 * a3, s2 * a3, s3 * a3, w3);
  const double a4 = 0.3015113445777636;
  const double b4 = std::sqrt(1.0 - 2.0 * a4 * a4);
  for (int big = 0; big < 3; ++big)
    for (double s1 : {1.0, -1.0})
      for (double s2 : {1.0, -1.0})
        for (double s3 : {1.0, -1.0}) {
          const double sign[3] = {s1, s2, s3};
          double v[3];
          for (int c = 0; c < 3; ++c) v[c] = sign[c] * (c == big ? b4 : a4);
          add(v[0], v[1], v[2], w4);
        }
  return rule;
}

}  // namespace detail

/// d = 1: {-1, +1}; d = 2: `angular` equispaced angles; d = 3: the tabulated
/// 50-point rule (angular is ignored).
inline SphereRule sphere_rule(int d, int angular = 64) {
  SphereRule rule;
  if (d == 1) {
    rule.directions = {make_vec({-1.0}), make_vec({1.0})};
    rule.weights = {1.0, 1.0};
  } else if (d == 2) {
    if (angular < 1) throw RangeError("sphere_rule: angular >= 1 required");
    for (int i = 0; i < angular; ++i) {
      const double a = 2.0 * std::numbers::pi * (i + 0.5) / angular;
      rule.directions.push_back(make_vec({std::cos(a), std::sin(a)}));
      rule.weights.push_back(2.0 * std::numbers::pi / angular);
    }
  } else if (d == 3) {
    rule = detail::lebedev50();
  } else {
    throw RangeError("sphere_rule: only d <= 3 supported");
  }
  return rule;
}

struct BallQuadratureSpec {
  int radial = 0;   // 0: dimension default
  int angular = 0;  // only used for d = 2

  static BallQuadratureSpec defaults(int d) {
    if (d == 1) return {64, 0};
    if (d == 2) return {32, 64};
    return {24, 50};
  }
  BallQuadratureSpec resolved(int d) const {
    BallQuadratureSpec r = defaults(d);
    if (radial > 0) r.radial = radial;
    if (angular > 0) r.angular = angular;
    return r;
  }
  bool operator==(const BallQuadratureSpec&) const = default;
};

/// Product rule on the closed unit ball: sum_i w_i f(u_i) ~ int_{|u|<=1} f.
struct BallRule {
  std::vector<Vec> points;
  std::vector<double> weights;
};

inline BallRule ball_rule(int d, BallQuadratureSpec spec = {}) {
  spec = spec.resolved(d);
  BallRule rule;
  if (d == 1) {
    // Mirrored halves, so a kink at the centre does not spoil convergence.
    const int half = std::max(1, spec.radial / 2);
    const auto gl = gauss_legendre(half, 0.0, 1.0);
    for (double sign : {-1.0, 1.0})
      for (int i = 0; i < half; ++i) {
        rule.points.push_back(make_vec({sign * gl.nodes[i]}));
        rule.weights.push_back(gl.weights[i]);
      }
    return rule;
  }
  const auto gl = gauss_legendre(spec.radial, 0.0, 1.0);
  const SphereRule sphere = sphere_rule(d, spec.angular);
  for (int i = 0; i < spec.radial; ++i) {
    const double r = gl.nodes[i];
    const double wr = gl.weights[i] * std::pow(r, d - 1);
    for (std::size_t a = 0; a < sphere.directions.size(); ++a) {
      rule.points.push_back(r * sphere.directions[a]);
      rule.weights.push_back(wr * sphere.weights[a]);
    }
  }
  return rule;
}

inline double unit_ball_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi / 3.0;
    case 4: return 0.5 * std::numbers::pi * std::numbers::pi;
    default: throw RangeError("unit_ball_volume: d <= 4 supported");
  }
}

}  // namespace flowlab
