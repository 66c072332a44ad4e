#include <gtest/gtest.h>

#include <boost/math/special_functions/expint.hpp>

#include "blab/disk_quad.hpp"
#include "blab/weights.hpp"

using namespace blab;

namespace {
std::function<LogComplex(cplx)> plain(std::function<cplx(cplx)> f) {
  return [f](cplx z) { return LogComplex::from_complex(f(z)); };
}

std::function<LogComplex(cplx)> weighted_power(const WeightSpec& w, int n) {
  return [w, n](cplx z) {
    const double r = std::abs(z);
    const double lr = r > 0 ? 2.0 * n * std::log(r) : (n == 0 ? 0.0 : -INFINITY);
    return LogComplex::from_polar_log(lr + w.log_weight(z), 0.0);
  };
}
}  // namespace

TEST(GaussLegendre, WeightsSumToTwo) {
  std::vector<double> x, w;
  gauss_legendre(17, x, w);
  double s = 0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 2.0, 1e-14);
  EXPECT_NEAR(x[8], 0.0, 1e-15);
}

TEST(BuildRule, AreaIdentity) {
  for (double r_max : {0.5, 0.9, 0.99}) {
    const QuadRule rule = build_rule(12, 10, 32, r_max);
    double s = 0;
    for (double w : rule.weights) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s / (r_max * r_max), 1.0, 1e-12);
  }
}

TEST(BuildRule, GradingEndsAtEdgeWidth) {
  const QuadRule rule = build_rule(24, 20, 64, 0.99);
  const double last = rule.panel_edges[24] - rule.panel_edges[23];
  EXPECT_NEAR(last, default_edge_width(0.99), 1e-12);
  for (int k = 1; k < 24; ++k)
    EXPECT_LT(rule.panel_edges[k + 1] - rule.panel_edges[k], rule.panel_edges[k] - rule.panel_edges[k - 1] + 1e-15);
}

TEST(BuildRule, DegenerateParametersThrow) {
  EXPECT_THROW(build_rule(0, 10, 10, 0.9), QuadratureError);
  EXPECT_THROW(build_rule(4, 10, 10, 1.2), QuadratureError);
  EXPECT_THROW(build_rule(4, 10, 10, 0.0), QuadratureError);
}

TEST(Integrate, SecondMomentFullDisk) {
  const QuadRule rule = build_rule(8, 12, 16, 1.0);
  const auto res = integrate(rule, plain([](cplx z) { return cplx(std::norm(z)); }));
  EXPECT_NEAR(res.value.real(), 0.5, 1e-14);
}

TEST(Integrate, OddMonomialVanishes) {
  const QuadRule rule = build_rule(8, 12, 16, 0.99);
  const auto res = integrate(rule, plain([](cplx z) { return z * z * z; }));
  EXPECT_LT(std::abs(res.value), 1e-14);
}

TEST(Integrate, PolynomialExactness) {
  const QuadRule rule = build_rule(4, 8, 15, 0.9);
  const int deg = rule.degree();
  ASSERT_EQ(deg, 14);
  for (int m = 0; m <= deg; ++m)
    for (int n = 0; m + n <= deg; ++n) {
      const auto res = integrate(rule, plain([m, n](cplx z) { return std::pow(z, m) * std::pow(std::conj(z), n); }));
      const cplx exact = m == n ? cplx(std::pow(0.9, 2 * n + 2) / (n + 1)) : cplx(0.0);
      EXPECT_LT(std::abs(res.value - exact), 1e-12 * std::max(1.0, std::abs(exact))) << m << " " << n;
    }
}

TEST(Integrate, UnweightedMoments) {
  const QuadRule rule = build_rule(4, 30, 8, 1.0);
  const WeightSpec u = WeightSpec::unweighted();
  for (int n = 0; n <= 50; ++n) {
    const auto res = integrate(rule, [n](cplx z) {
      return LogComplex::from_polar_log(std::abs(z) > 0 ? 2.0 * n * std::log(std::abs(z)) : (n ? -INFINITY : 0.0), 0.0);
    });
    EXPECT_NEAR(res.value.real() * (n + 1), 1.0, 1e-12) << n;
  }
}

TEST(Integrate, ExponentialIntegralOracle) {
  const QuadRule rule = build_rule(24, 20, 8, 0.99);
  for (double c : {0.5, 1.0, 2.0}) {
    const auto res = integrate(rule, weighted_power(WeightSpec::exponential(c, 1.0), 0));
    const double e2 = boost::math::expint(2, c);
    EXPECT_NEAR(res.value.real() / e2, 1.0, 1e-8) << c;
  }
  const auto res = integrate(rule, weighted_power(WeightSpec::exponential(1.0, 1.0), 0));
  EXPECT_NEAR(res.value.real(), 0.148495506775922047918359994701, 1e-10);
}

TEST(Integrate, RefinementSelfConvergence) {
  const QuadRule rule = build_rule(24, 20, 8, 0.99);
  const auto res = integrate(rule, weighted_power(WeightSpec::exponential(1.0, 1.0), 0), true);
  EXPECT_LT(res.error_estimate, 1e-10);
}

TEST(Integrate, NaNReportsNode) {
  const QuadRule rule = build_rule(2, 4, 4, 0.5);
  try {
    integrate(rule, [](cplx z) {
      return z.real() > 0.3 ? LogComplex::from_polar_log(NAN, 0.0) : LogComplex::from_complex(1.0);
    });
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_GT(rule.nodes[e.node_index].real(), 0.3);
  }
}

TEST(Integrate, PositiveIntegrandPositiveResult) {
  const QuadRule rule = build_rule(6, 8, 16, 0.95);
  const auto res = integrate(rule, plain([](cplx z) { return cplx(std::exp(-10.0 * std::norm(z - 0.7))); }));
  EXPECT_GT(res.value.real(), 0.0);
}

TEST(IntegrateRegion, TrueMatchesFull) {
  const QuadRule rule = build_rule(6, 8, 16, 0.95);
  auto fn = plain([](cplx z) { return std::exp(z) * std::conj(z); });
  const auto full = integrate(rule, fn);
  const auto reg = integrate_region(rule, [](cplx) { return true; }, fn);
  EXPECT_EQ(reg.node_count, rule.size());
  EXPECT_LT(std::abs(full.value - reg.integral.value), 1e-15);
}

TEST(IntegrateRegion, SmallDiscArea) {
  const QuadRule rule = build_rule(24, 20, 256, 0.99);
  const auto reg = integrate_region(rule, [](cplx z) { return std::abs(z) < 0.1; }, plain([](cplx) { return 1.0; }));
  EXPECT_GE(reg.node_count, 100u);
  EXPECT_NEAR(reg.integral.value.real() / 0.01, 1.0, 0.01);
}

TEST(IntegrateRegion, EmptyRegionSignals) {
  const QuadRule rule = build_rule(2, 4, 4, 0.5);
  EXPECT_THROW(integrate_region(rule, [](cplx z) { return std::abs(z) > 0.9; }, plain([](cplx) { return 0.0; })),
               EmptyRegionError);
}

TEST(IntegrateRegion, ZeroIntegrandGivesZero) {
  const QuadRule rule = build_rule(2, 4, 8, 0.5);
  const auto reg = integrate_region(rule, [](cplx z) { return z.real() > 0; }, plain([](cplx) { return 0.0; }));
  EXPECT_EQ(reg.integral.value, cplx(0.0));
}

TEST(DiscRule, LocalAreaAndCenter) {
  const QuadRule rule = build_disc_rule({0.3, 0.2}, 0.05, 3, 6, 12, 0.1);
  const auto res = integrate(rule, plain([](cplx z) { return z; }));
  EXPECT_NEAR(std::abs(res.value - cplx(0.3, 0.2) * 0.0025), 0.0, 1e-16);
}

TEST(Fourier, MonomialPairingsMatchDirect) {
  const QuadRule rule = build_rule(6, 8, 32, 0.9);
  SampledFn g = sample_complex(rule, [](cplx z) { return std::exp(2.0 * z) * (1.0 + std::conj(z)); });
  const auto c = monomial_pairings(rule, g, 40);
  for (int n : {0, 1, 5, 31, 32, 40}) {
    const auto direct = integrate(rule, plain([n](cplx z) {
      return std::exp(2.0 * z) * (1.0 + std::conj(z)) * std::pow(std::conj(z), n);
    }));
    EXPECT_LT(std::abs(c[n].to_complex() - direct.value), 1e-13 * (1 + std::abs(direct.value))) << n;
  }
}

TEST(Fourier, SeriesOnRuleMatchesPointwise) {
  const QuadRule rule = build_rule(4, 6, 16, 0.8);
  std::vector<LogComplex> a;
  for (int n = 0; n < 80; ++n) a.push_back(LogComplex::from_complex(std::polar(1.0 / (n + 1), 0.3 * n)));
  const auto s = eval_series_on_rule(rule, a);
  for (std::size_t i = 0; i < rule.size(); i += 7) {
    const cplx direct = eval_series(a, rule.nodes[i]).to_complex();
    EXPECT_LT(std::abs(s.values[i].to_complex() - direct), 1e-12 * (1 + std::abs(direct)));
  }
  EXPECT_LT(s.resolved_radius, 0.8);
}
