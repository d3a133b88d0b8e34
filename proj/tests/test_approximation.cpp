#include "flowlab/approximation.hpp"
#include "flowlab/builtins.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace flowlab;

namespace {

// Reference values from an arbitrary-precision 1-d quadrature.
constexpr double kEtaConstant1d = 2.25228362104358101;
constexpr double kEtaConstant2d = 2.14356577579223660;
constexpr double kEtaConstant3d = 2.26711673960832646;
constexpr double kAbsAtOrigin = 0.0334453997709975349;  // (|x| * eta_0.1)(0)

double eta_profile(double u) { return std::abs(u) < 1.0 ? std::exp(1.0 / (u * u - 1.0)) : 0.0; }

CoefficientSystem field_system(int d, std::function<Vec(const Vec&)> f, AssumptionConstants c = {}) {
  return make_system(
      d, 1, [f, d](const Vec& x, FieldMatrix& out) {
        out.setZero();
        out.col(1) = f(x);
      },
      {}, c);
}

CoefficientSystem abs_system() {
  return field_system(1, [](const Vec& x) { return make_vec({std::abs(x(0))}); });
}

CoefficientSystem affine_system(int d) {
  return make_system(d, d, [d](const Vec& x, FieldMatrix& out) {
    for (int i = 0; i < d; ++i) {
      out(i, 0) = 0.5 - 2.0 * x(i);
      for (int k = 1; k <= d; ++k) out(i, k) = (i + 1) * x((i + k) % d) + 0.25 * k;
    }
  });
}

Vec random_point(std::mt19937_64& rng, int d, double lo, double hi) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(lo, hi);
  Vec x(d);
  for (int i = 0; i < d; ++i) x(i) = g(rng);
  return u(rng) * x.normalized();
}

}  // namespace

// ---------------------------------------------------------------------------
// Truncation

TEST(Truncate, ConstantFieldUnchanged) {
  const auto ts = truncate(constant_system(1.7, 0.3, 2, 1), 5.0);
  for (const Vec& x : {make_vec({0.0, 0.0}), make_vec({3.0, 1.0}), make_vec({40.0, -7.0})})
    EXPECT_TRUE(ts.system().values(x).isApprox(constant_system(1.7, 0.3, 2, 1).values(x)));
}

TEST(Truncate, ProjectsOutsideTheBall) {
  const auto ts = truncate(field_system(1, [](const Vec& x) { return Vec(x.array().square()); }), 5.0);
  EXPECT_DOUBLE_EQ(ts.value(1, make_vec({7.0}))(0), 25.0);
  EXPECT_DOUBLE_EQ(ts.value(1, make_vec({-7.0}))(0), 25.0);
  EXPECT_DOUBLE_EQ(ts.value(1, make_vec({3.0}))(0), 9.0);
  EXPECT_DOUBLE_EQ(ts.value(1, make_vec({0.0}))(0), 0.0);
}

TEST(Truncate, Example21UsesProjectedPoint) {
  const auto base = example21();
  const auto ts = truncate(base, 10.0);
  const FieldMatrix got = ts.system().values(make_vec({20.0, 0.0}));
  const FieldMatrix expected = base.values(make_vec({10.0, 0.0}));
  EXPECT_TRUE(got.isApprox(expected, 1e-15));
  // Hand expansion: X_k = |x|^{q2} e_k, X_0 = -|x|^{q4} x at (10, 0).
  EXPECT_NEAR(got(0, 1), std::sqrt(10.0), 1e-13);
  EXPECT_NEAR(got(0, 0), -100.0, 1e-12);
}

TEST(Truncate, RadiusBelowFloorRejected) {
  EXPECT_THROW(truncate(example21(), 3.5), RangeError);
  EXPECT_NO_THROW(truncate(example21(), 4.0));
}

TEST(Truncate, Idempotent) {
  std::mt19937_64 rng(17);
  const auto ts = truncate(example21(), 6.0);
  const auto twice = truncate(ts.system(), 6.0);
  for (int i = 0; i < 200; ++i) {
    const Vec x = random_point(rng, 2, 0.0, 30.0);
    EXPECT_TRUE(ts.system().values(x).isApprox(twice.system().values(x), 1e-15)) << to_string(x);
  }
}

TEST(Truncate, ContinuousAcrossSphere) {
  const auto ts = truncate(example21(), 5.0);
  const Vec dir = make_vec({0.6, 0.8});
  const FieldMatrix in = ts.system().values(Vec((5.0 - 1e-9) * dir));
  const FieldMatrix out = ts.system().values(Vec((5.0 + 1e-9) * dir));
  EXPECT_LE((in - out).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(TruncatedDerivative, IdentityFieldHalfScale) {
  // X(x) = x, R = 2, x = (4, 0): tangential derivative along e_2 is 0.5 e_2.
  const auto base = field_system(2, [](const Vec& x) { return x; });
  const auto ts = truncate(base, 2.0);
  const auto rep = radial_tangential_derivative_check(ts, make_vec({4.0, 0.0}));
  EXPECT_LT(rep.radial_norm, 1e-6);
  EXPECT_LT(rep.tangential_error, 1e-8);
  const JacobianSet j = ts.system().jacobians(make_vec({4.0, 0.0}));
  EXPECT_NEAR(j[1](1, 1), 0.5, 1e-8);
  EXPECT_NEAR(j[1](0, 0), 0.0, 1e-8);
}

TEST(TruncatedDerivative, ConstantFieldHasNoDerivative) {
  const auto ts = truncate(constant_system(2.0, 1.0, 3, 1), 3.0);
  const auto rep = radial_tangential_derivative_check(ts, make_vec({1.0, 5.0, -2.0}));
  EXPECT_LT(rep.radial_norm, 1e-10);
  EXPECT_LT(rep.tangential_error, 1e-10);
}

TEST(TruncatedDerivative, Example21RandomProbes) {
  std::mt19937_64 rng(23);
  const auto ts = truncate(example21(), 5.0);
  for (int i = 0; i < 50; ++i) {
    const Vec x = random_point(rng, 2, 5.0 + 1e-3, 25.0);
    const auto rep = radial_tangential_derivative_check(ts, x);
    EXPECT_LT(rep.radial_norm, 1e-6) << to_string(x);
    EXPECT_LT(rep.tangential_error, 1e-4) << to_string(x);
  }
}

TEST(TruncatedDerivative, KinkGuard) {
  const auto ts = truncate(example21(), 5.0);
  EXPECT_THROW(radial_tangential_derivative_check(ts, make_vec({5.00005, 0.0})), RangeError);
}

TEST(TruncatedDerivative, AnalyticJacobianMatchesChainRule) {
  const auto ts = truncate(example21(), 4.0);
  const Vec x = make_vec({-6.0, 8.0});
  const JacobianSet got = ts.system().jacobians(x);
  const JacobianSet inner = example21().jacobians(make_vec({-2.4, 3.2}));
  const Vec xhat = x / 10.0;
  const Mat tangent = Mat::Identity(2, 2) - xhat * xhat.transpose();
  for (int k = 0; k < 3; ++k) EXPECT_LE((got[k] - 0.4 * inner[k] * tangent).cwiseAbs().maxCoeff(), 1e-13);
  // Noise Jacobians are rank one along x^T, so the tangential part vanishes.
  EXPECT_LE(got[1].norm(), 1e-13);
}

// ---------------------------------------------------------------------------
// Mollifier

TEST(Mollifier, NormalizationConstantMatchesAdaptiveQuadrature) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double oracle = 1.0 / ts.integrate([](double u) { return eta_profile(u); }, -1.0, 1.0);
  EXPECT_NEAR(oracle, kEtaConstant1d, 1e-12);
  EXPECT_NEAR(mollifier_norm_constant(1, {}), oracle, 1e-8);
}

TEST(Mollifier, NormalizationConstantHigherDimensions) {
  using boost::math::quadrature::gauss_kronrod;
  const double m2 = gauss_kronrod<double, 61>::integrate(
      [](double r) { return 2.0 * std::numbers::pi * r * eta_profile(r); }, 0.0, 1.0, 15, 1e-14);
  const double m3 = gauss_kronrod<double, 61>::integrate(
      [](double r) { return 4.0 * std::numbers::pi * r * r * eta_profile(r); }, 0.0, 1.0, 15, 1e-14);
  EXPECT_NEAR(1.0 / m2, kEtaConstant2d, 1e-10);
  EXPECT_NEAR(1.0 / m3, kEtaConstant3d, 1e-10);
  EXPECT_NEAR(mollifier_norm_constant(2, {}), kEtaConstant2d, 1e-6);
  EXPECT_NEAR(mollifier_norm_constant(3, {}), kEtaConstant3d, 1e-6);
}

TEST(Mollifier, UnitMassAcrossScalesAndDimensions) {
  for (int d = 1; d <= 3; ++d)
    for (double eps : {1.0, 0.1, 0.01}) {
      const Mollifier m(d, eps);
      double sum = 0.0;
      for (double w : m.weights()) sum += w;
      EXPECT_NEAR(sum, 1.0, 1e-12) << "d=" << d;
      BallQuadratureSpec reference = BallQuadratureSpec::defaults(d);
      reference.radial *= 2;
      if (d == 2) reference.angular *= 2;
      EXPECT_NEAR(m.mass(reference), 1.0, 1e-6) << "d=" << d << " eps=" << eps;
    }
}

TEST(Mollifier, NonNegativeWithCompactSupport) {
  const Mollifier m(2, 0.3);
  for (double w : m.weights()) EXPECT_GE(w, 0.0);
  for (const Vec& y : m.offsets()) EXPECT_LE(y.norm(), 0.3);
  EXPECT_EQ(m(make_vec({0.3, 0.0})), 0.0);
  EXPECT_EQ(m(make_vec({0.5, 0.1})), 0.0);
  EXPECT_GT(m(make_vec({0.29, 0.0})), 0.0);
  EXPECT_NEAR(m(Vec::Zero(2)), kEtaConstant2d * std::exp(-1.0) / 0.09, 1e-6);
}

TEST(Mollifier, RejectsBadArguments) {
  EXPECT_THROW(Mollifier(4, 0.1), RangeError);
  EXPECT_THROW(Mollifier(2, 0.0), RangeError);
}

TEST(Mollify, ConstantFieldIsExact) {
  const auto ts = truncate(constant_system(2.5, -1.0, 2, 1), 10.0);
  const auto v = mollify_value(ts, Mollifier(2, 0.2), 1, make_vec({0.3, 0.4}));
  EXPECT_NEAR(v.value(0), 2.5, 1e-12);
  EXPECT_NEAR(v.value(1), 0.0, 1e-12);
}

TEST(Mollify, AffineFieldsAreExact) {
  for (int d = 1; d <= 3; ++d) {
    const auto base = affine_system(d);
    const auto ts = truncate(base, 50.0);
    std::mt19937_64 rng(d);
    for (double eps : {1.0, 0.1, 0.01})
      for (int i = 0; i < 10; ++i) {
        const Vec x = random_point(rng, d, 0.0, 5.0);
        for (int k = 0; k <= d; ++k) {
          const auto v = mollify_value(ts, Mollifier(d, eps), k, x);
          EXPECT_LE((v.value - base.value(k, x)).norm(), 1e-8) << "d=" << d << " k=" << k;
        }
      }
  }
}

TEST(Mollify, AbsoluteValueAtOrigin) {
  // Independent oracle: 0.1 * 2 C int_0^1 u eta(u) du.
  boost::math::quadrature::tanh_sinh<double> ts;
  const double c = 1.0 / ts.integrate([](double u) { return eta_profile(u); }, -1.0, 1.0);
  const double oracle = 0.1 * 2.0 * c * ts.integrate([](double u) { return u * eta_profile(u); }, 0.0, 1.0);
  EXPECT_NEAR(oracle, kAbsAtOrigin, 1e-12);

  const auto v = mollify_value(truncate(abs_system(), 10.0), Mollifier(1, 0.1), 1, make_vec({0.0}));
  // The kink sits at the centre of the rule, so convergence is algebraic.
  EXPECT_NEAR(v.value(0), kAbsAtOrigin, 1e-6);
  EXPECT_LT(v.error_estimate, 1e-4);
}

TEST(Mollify, ErrorEstimateSmallForSmoothFields) {
  const auto ts = truncate(example21(), 10.0);
  const auto v = mollify_value(ts, Mollifier(2, 0.1), 1, make_vec({0.5, 0.5}));
  EXPECT_LT(v.error_estimate, 1e-8);
}

// ---------------------------------------------------------------------------
// lambda0 selection

TEST(SelectLambda0, WorkedExample) {
  AssumptionConstants c = AssumptionConstants::generic(2);
  c.p1 = c.p2 = c.p5 = 1.0;
  c.p3 = 8.0;
  c.R1 = 1.0;
  c.delta = 1.0;
  const auto s = select_lambda0(c, 2);
  EXPECT_DOUBLE_EQ(s.iota, 0.75);
  EXPECT_NEAR(s.lambda0, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.eps0, std::min(std::pow(3.0, -6.0), 0.25), 1e-15);
}

TEST(SelectLambda0, Example21Defaults) {
  const auto s = select_lambda0(example21().constants(), 2);
  EXPECT_DOUBLE_EQ(s.iota, 0.75);
  // p1 = 0, p2 = 2, p5 = 1: min(0.375, 1/3) / 2.
  EXPECT_NEAR(s.lambda0, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.eps0, std::pow(5.0, -6.0), 1e-18);
}

TEST(SelectLambda0, DecreasesInP5) {
  AssumptionConstants c = AssumptionConstants::generic(2);
  c.p1 = 0.5;
  c.p2 = 1.0;
  c.p3 = 10.0;
  double last = HUGE_VAL;
  for (double p5 : {0.5, 1.0, 10.0, 100.0, 1e4, 1e8}) {
    c.p5 = p5;
    const double l = select_lambda0(c, 2).lambda0;
    EXPECT_LE(l, last);
    last = l;
  }
  EXPECT_LT(last, 1e-8);
}

TEST(SelectLambda0, InequalitiesHoldOnRandomConstants) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    AssumptionConstants c;
    const int d = 1 + static_cast<int>(u(rng) * 4) % 4;
    c.p1 = 3.0 * u(rng);
    c.p2 = 1e-3 + 3.0 * u(rng);
    c.p5 = 1e-3 + 3.0 * u(rng);
    c.p3 = 2.0 * (d + 1) + 1e-3 + 20.0 * u(rng);
    c.R1 = 0.1 + 5.0 * u(rng);
    c.delta = 1e-3 + u(rng);
    const auto s = select_lambda0(c, d);
    EXPECT_GT(s.lambda0, 0.0);
    EXPECT_LT(s.lambda0 * c.p1, s.iota - s.lambda0 * c.p2);
    EXPECT_LT(s.lambda0 * c.p1, 1.0 - s.lambda0 * (c.p2 + c.p5));
    EXPECT_GT(s.eps0, 0.0);
    EXPECT_LE(s.eps0, c.delta / 4.0);
  }
}

// ---------------------------------------------------------------------------
// Family

TEST(Family, RangeEnforced) {
  const MollifiedFamily fam(example21());
  EXPECT_THROW(fam.member(0.0), RangeError);
  EXPECT_THROW(fam.member(1e-4), RangeError);  // above eps0 = 6.4e-5
  EXPECT_NO_THROW(fam.member(5e-5));
  EXPECT_TRUE(fam.certified(5e-5));

  FamilyOptions opt;
  opt.eps_ceiling = 0.25;
  const MollifiedFamily wide(example21(), opt);
  EXPECT_NO_THROW(wide.member(0.2));
  EXPECT_FALSE(wide.certified(0.2));
  EXPECT_THROW(wide.member(0.3), RangeError);
}

TEST(Family, ConstantBaseIsFixed) {
  FamilyOptions opt;
  opt.eps_ceiling = 1.0;
  const MollifiedFamily fam(constant_system(1.5, 0.5, 2, 2), opt);
  for (double eps : {0.5, 0.05, 1e-5}) {
    const FieldMatrix v = fam.member(eps).values(make_vec({0.7, -2.0}));
    EXPECT_TRUE(v.isApprox(constant_system(1.5, 0.5, 2, 2).values(make_vec({0.0, 0.0})), 1e-12));
  }
}

TEST(Family, AbsoluteValueMemberAtOrigin) {
  FamilyOptions opt;
  opt.eps_ceiling = 1.0;
  const MollifiedFamily fam(abs_system(), opt);
  EXPECT_NEAR(fam.member(0.1).value(1, make_vec({0.0}))(0), kAbsAtOrigin, 1e-6);
}

TEST(Family, Example21OriginApproachesUnitVector) {
  FamilyOptions opt;
  opt.eps_ceiling = 0.25;
  const MollifiedFamily fam(example21(), opt);
  double last = HUGE_VAL;
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    const double gap = (fam.member(eps).value(1, Vec::Zero(2)) - unit_vec(2, 0)).norm();
    EXPECT_LE(gap, 2.0 * std::pow(eps, fam.iota())) << "eps=" << eps;
    EXPECT_LT(gap, last);
    last = gap;
  }
}

TEST(Family, JacobianInsideMatchesFiniteDifferences) {
  FamilyOptions opt;
  opt.eps_ceiling = 0.25;
  const MollifiedFamily fam(example21(), opt);
  const auto m = fam.member(0.1);
  for (const Vec& x : {make_vec({0.3, 0.2}), make_vec({1.5, -0.4}), make_vec({-3.5, 1.0})}) {
    const JacobianSet a = m.jacobians(x);
    CoefficientSystem fd(m.model_ptr(), m.constants(), "fd", 1e-4);
    JacobianSet b;
    fd.finite_difference_jacobians(x, b);
    for (int k = 0; k < 3; ++k) EXPECT_LE((a[k] - b[k]).cwiseAbs().maxCoeff(), 1e-5) << to_string(x);
  }
}

TEST(Family, TruncationRadiusFloor) {
  const MollifiedFamily fam(example21());
  EXPECT_NEAR(fam.truncation_radius(1e-6), 10.0, 1e-9);
  EXPECT_DOUBLE_EQ(fam.truncation_radius(0.5), 4.0);
}

TEST(Family, EllipticityPreserved) {
  const auto base = example21();
  const MollifiedFamily fam(base);
  const auto& c = base.constants();
  std::mt19937_64 rng(31);
  std::vector<Vec> probes{Vec::Zero(2)};
  for (int i = 0; i < 60; ++i) probes.push_back(random_point(rng, 2, 0.0, 20.0));
  for (double eps : {5e-5, 1e-5, 2e-6, 4e-7}) {
    const auto m = fam.member(eps);
    for (const Vec& x : probes) {
      const double floor = c.C1 / (2.0 * (1.0 + std::pow(x.norm(), c.p1)));
      EXPECT_GE(smallest_eigenvalue(diffusion_matrix(m, x)), floor) << "eps=" << eps << " x=" << to_string(x);
    }
  }
}

// ---------------------------------------------------------------------------
// L^p distances

TEST(LpDistance, IdenticalSystemsGiveZero) {
  const auto sys = example21();
  EXPECT_EQ(lp_distance(sys, sys, 1, 4.0, 2.0, LpMode::values).value, 0.0);
  EXPECT_EQ(lp_distance(sys, sys, 1, 4.0, 8.0, LpMode::jacobians).value, 0.0);
}

TEST(LpDistance, ConstantsOnUnitInterval) {
  const auto a = constant_system(1.0, 0.0, 1, 1);
  const auto b = constant_system(3.5, 0.0, 1, 1);
  EXPECT_NEAR(lp_distance(a, b, 1, 1.0, 2.0, LpMode::values).value, 2.0 * 2.5 * 2.5, 1e-12);
}

TEST(LpDistance, ConstantsOnBalls) {
  const auto a = constant_system(1.0, 0.0, 3, 1);
  const auto b = constant_system(2.0, 0.0, 3, 1);
  EXPECT_NEAR(lp_distance(a, b, 1, 2.0, 3.0, LpMode::values).value, unit_ball_volume(3) * 8.0, 1e-10);
}

TEST(LpDistance, ExcisedVolumeReported) {
  const auto sys = example21();
  LpOptions opt;
  opt.excise_radius = 1e-3;
  const auto r = lp_distance(sys, sys, 1, 4.0, 2.0, LpMode::jacobians, opt);
  EXPECT_NEAR(r.excised_volume, std::numbers::pi * 1e-6, 1e-18);
}

TEST(LpDistance, Example21FamilyDecreases) {
  FamilyOptions opt;
  opt.eps_ceiling = 0.25;
  opt.quadrature = {16, 32};
  const MollifiedFamily fam(example21(), opt);
  const auto base = example21();
  const double R = base.constants().R1 + 1.0;
  const double p3 = base.constants().p3;
  double last_v = HUGE_VAL, last_j = HUGE_VAL;
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto m = fam.member(eps);
    const double v = lp_distance(base, m, 1, R, 2.0, LpMode::values).value;
    const double j = lp_distance(base, m, 1, R, p3, LpMode::jacobians).value;
    EXPECT_LT(v, last_v) << "eps=" << eps;
    EXPECT_LT(j, last_j) << "eps=" << eps;
    last_v = v;
    last_j = j;
  }
}
