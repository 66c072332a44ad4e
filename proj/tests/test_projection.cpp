#include <gtest/gtest.h>

#include <random>

#include "blab/lp_fit.hpp"
#include "blab/projection.hpp"

using namespace blab;

namespace {
const WeightSpec exp11 = WeightSpec::exponential(1.0, 1.0);

const ProjectionOperator& op() {
  static const QuadRule rule = build_rule(24, 20, 512, 0.99);
  static const ProjectionOperator P(KernelModel::radial(exp11, rule), rule);
  return P;
}

cplx random_point(std::mt19937_64& rng, double r_max) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return std::polar(r_max * std::sqrt(u(rng)), 2 * std::numbers::pi * u(rng));
}

SampledFn bump(const QuadRule& rule, cplx a, double s) {
  return sample(rule, [a, s](cplx x) {
    const double chi = smooth_cutoff(std::abs(x), 0.8, 0.9);
    return LogComplex::from_complex(chi * std::exp(-std::norm(x - a) / (2 * s * s)) * cplx(1.0, 0.5));
  });
}
}  // namespace

TEST(Project, ConstantReproduced) {
  const SampledFn one = sample_complex(op().rule(), [](cplx) { return cplx(1.0); });
  for (cplx z : eval_grid(0.9, 6, 8)) EXPECT_LT(std::abs(project(op(), one, z) - 1.0), 1e-8);
}

TEST(Project, ConjugateIsAnnihilated) {
  const SampledFn f = sample_complex(op().rule(), [](cplx x) { return std::conj(x); });
  for (cplx z : eval_grid(0.9, 6, 8)) EXPECT_LT(std::abs(project(op(), f, z)), 1e-10);
}

TEST(Reproduce, Polynomials) {
  const auto grid = eval_grid(0.9);
  for (int k = 0; k <= 8; ++k)
    EXPECT_LT(reproduce_check(op(), [k](cplx z) { return std::pow(z, k); }, grid), 1e-6) << k;
}

TEST(Reproduce, GeometricAndKernel) {
  const auto grid = eval_grid(0.9);
  EXPECT_LT(reproduce_check(op(), [](cplx z) { return 1.0 / (1.0 - 0.5 * z); }, grid), 1e-5);
  const auto a = op().model().coefficients(0.3, op().rule().r_max);
  EXPECT_LT(reproduce_check(op(), [&](cplx z) { return eval_series(a, z).to_complex(); }, grid), 1e-5);
}

TEST(Project, DirectRouteAgrees) {
  const SampledFn f = bump(op().rule(), {0.4, 0.3}, 0.1);
  for (cplx z : {cplx(0.0), cplx(0.5, 0.1), cplx(-0.2, 0.7), cplx(0.85, 0.0)}) {
    const cplx a = op().project(f, z), b = op().project_direct(f, z);
    EXPECT_LT(std::abs(a - b), 1e-8 * std::abs(a)) << z;
  }
}

TEST(Project, Linear) {
  const SampledFn f = bump(op().rule(), {0.4, 0.3}, 0.1), g = bump(op().rule(), {-0.5, 0.1}, 0.2);
  SampledFn h = f;
  const cplx a(0.3, -1.2), b(2.0, 0.4);
  for (std::size_t i = 0; i < h.size(); ++i)
    h.values[i] = LogComplex::from_complex(a * f.values[i].to_complex() + b * g.values[i].to_complex());
  for (cplx z : {cplx(0.1, 0.2), cplx(-0.6, 0.3)}) {
    const cplx lhs = op().project(h, z), rhs = a * op().project(f, z) + b * op().project(g, z);
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::abs(rhs));
  }
}

TEST(Project, Idempotent) {
  const QuadRule& rule = op().rule();
  const SampledFn f = bump(rule, {0.3, -0.4}, 0.15);
  const ProjectedFn pf = op().apply(f, rule.r_max);
  const SampledFn pfs = sample(rule, [&](cplx x) { return pf.log_at(x); });
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10; ++i) {
    const cplx z = random_point(rng, 0.9);
    const cplx a = pf(z), b = op().project(pfs, z);
    EXPECT_LT(std::abs(a - b), 1e-6 * std::abs(a));
  }
}

TEST(Project, SelfAdjoint) {
  const QuadRule& rule = op().rule();
  const SampledFn f = bump(rule, {0.3, -0.4}, 0.15), g = bump(rule, {-0.2, 0.5}, 0.1);
  const ProjectedFn pf = op().apply(f, rule.r_max), pg = op().apply(g, rule.r_max);
  const SampledFn pfs = sample(rule, [&](cplx x) { return pf.log_at(x); });
  const SampledFn pgs = sample(rule, [&](cplx x) { return pg.log_at(x); });
  const cplx a = pairing(pfs, g, exp11, rule), b = pairing(f, pgs, exp11, rule);
  EXPECT_LT(std::abs(a - b), 1e-6 * std::abs(a));
}

TEST(Pairing, MonomialsOrthogonal) {
  const QuadRule& rule = op().rule();
  const MomentSeq& m = op().model().moments();
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; b <= 4; ++b) {
      const cplx v = pairing(sample_complex(rule, [a](cplx x) { return std::pow(x, a); }),
                             sample_complex(rule, [b](cplx x) { return std::pow(x, b); }), exp11, rule);
      const double expect = a == b ? m.moment(a) : 0.0;
      EXPECT_LT(std::abs(v - expect), 1e-12 * m.moment(0));
    }
}

TEST(Pairing, ReproducesCube) {
  const QuadRule& rule = op().rule();
  const SampledFn f = sample_complex(rule, [](cplx x) { return x * x * x; });
  for (cplx z : {cplx(0.2, 0.3), cplx(-0.7, 0.1)}) {
    const auto a = op().model().coefficients(z, rule.r_max);
    const SampledFn k = sample(rule, [&](cplx x) { return eval_series(a, x); });
    EXPECT_LT(std::abs(pairing(f, k, exp11, rule) - z * z * z), 1e-6 * std::abs(z * z * z));
  }
}

TEST(Pairing, ConjugateSymmetric) {
  const QuadRule& rule = op().rule();
  const SampledFn f = bump(rule, {0.1, 0.1}, 0.2), g = sample_complex(rule, [](cplx x) { return std::exp(x); });
  EXPECT_EQ(pairing(f, g, exp11, rule), std::conj(pairing(g, f, exp11, rule)));
}

TEST(Norm, PTwoContraction) {
  const auto fns = norm_test_functions(exp11, 12, 5);
  const NormReport r = empirical_norm(op(), 2.0, fns);
  EXPECT_LE(r.max_ratio, 1.0 + 1e-6);
  for (std::size_t i = 0; i < r.ratios.size(); ++i)
    if (r.families[i] == "analytic") EXPECT_NEAR(r.ratios[i], 1.0, 1e-6);
}

TEST(Norm, OtherExponentsFinite) {
  const auto fns = norm_test_functions(exp11, 8, 6);
  for (const NormReport& r : empirical_norms(op(), {1.0, 4.0 / 3.0, 4.0, INFINITY}, fns)) {
    EXPECT_TRUE(std::isfinite(r.max_ratio));
    EXPECT_GT(r.max_ratio, 0.0);
  }
}

TEST(Norm, InverseRootWeightSupNorm) {
  const std::vector<TestFn> fns{{"unit", [](cplx x) { return LogComplex::from_polar_log(-0.5 * exp11.log_weight(x), 0.0); }}};
  const NormReport r = empirical_norm(op(), INFINITY, fns);
  EXPECT_TRUE(std::isfinite(r.max_ratio));
  EXPECT_GT(r.max_ratio, 0.0);
}

TEST(Duality, HilbertAnchor) {
  const QuadRule coarse = build_rule(8, 12, 48, 0.99);
  const auto rep = duality_ratio(exp11, coarse, 2.0, 8, 5, 1);
  EXPECT_NEAR(rep.min, 1.0, 1e-6);
  EXPECT_NEAR(rep.max, 1.0, 1e-6);
}

TEST(Duality, RatiosInUnitInterval) {
  const QuadRule coarse = build_rule(8, 12, 48, 0.99);
  const auto rep = duality_ratio(exp11, coarse, 4.0, 8, 4, 3, 4);
  EXPECT_GT(rep.min, 0.5);
  EXPECT_LE(rep.max, 1.0 + 1e-9);
  Eigen::VectorXcd k0 = Eigen::VectorXcd::Zero(8);
  k0[0] = 1.0;
  const auto kr = duality_ratio(exp11, coarse, 4.0 / 3.0, 8, 0, 3, 4, {k0});
  EXPECT_GT(kr.min, 0.5);
  EXPECT_LE(kr.max, 1.0 + 1e-9);
}

TEST(Density, KernelInSpan) {
  const QuadRule rule = build_rule(16, 16, 128, 0.99);
  const KernelModel k = KernelModel::radial(exp11, rule);
  auto centers = density_centers(exp11, 4);
  centers[0] = 0.2;
  const auto a = k.coefficients(0.2, rule.r_max);
  const auto curve = kernel_density_experiment(k, [&](cplx z) { return eval_series(a, z).to_complex(); }, {0, 1, 4},
                                               2.0, rule, centers);
  EXPECT_NEAR(curve.points[0].error, curve.norm_f, 1e-15);
  EXPECT_LT(curve.points[1].error, 1e-6 * curve.norm_f);
}

TEST(Density, SquareStrictlyDecreasing) {
  const QuadRule rule = build_rule(16, 16, 128, 0.99);
  const KernelModel k = KernelModel::radial(exp11, rule);
  const auto curve = kernel_density_experiment(k, [](cplx z) { return z * z; }, {1, 4, 9, 16}, 2.0, rule,
                                               density_centers(exp11, 16));
  EXPECT_TRUE(curve.strictly_decreasing());
}

TEST(Truncated, PolynomialUnchanged) {
  const QuadRule rule = build_rule(16, 16, 128, 0.99);
  const auto t = truncated_approx(exp11, [](cplx z) { return 1.0 + z * z; }, 200, 0.5, rule);
  EXPECT_LT(t.compact_error, 1e-10);
}

TEST(Truncated, KernelErrorDecreases) {
  const QuadRule rule = build_rule(24, 20, 256, 0.99);
  const KernelModel& k = op().model();
  double prev = INFINITY;
  for (int n : {5, 10, 20}) {
    const auto t = truncated_approx(exp11, [&](cplx z) { return k.eval(0.5, z).value.to_complex(); }, n, 0.5, rule);
    EXPECT_LT(t.compact_error, prev);
    EXPECT_TRUE(std::isfinite(t.norm_ratio));
    prev = t.compact_error;
  }
}
