#include <gtest/gtest.h>

#include <random>

#include <boost/math/special_functions/expint.hpp>

#include "blab/kernel.hpp"

using namespace blab;

namespace {
const WeightSpec exp11 = WeightSpec::exponential(1.0, 1.0);

const QuadRule& default_rule() {
  static const QuadRule rule = build_rule(24, 20, 64, 0.99);
  return rule;
}

const KernelModel& exp_model() {
  static const KernelModel k = KernelModel::radial(exp11, default_rule());
  return k;
}

const KernelModel& unweighted_model() {
  static const KernelModel k = KernelModel::radial(WeightSpec::unweighted(), build_rule(4, 40, 8, 1.0), 4000);
  return k;
}

cplx random_point(std::mt19937_64& rng, double r_max) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return std::polar(r_max * std::sqrt(u(rng)), 2 * std::numbers::pi * u(rng));
}
}  // namespace

TEST(Moments, UnweightedClosedForm) {
  const MomentSeq m = compute_moments(WeightSpec::unweighted(), 50, build_rule(4, 30, 8, 1.0));
  for (int n = 0; n <= 50; ++n) EXPECT_NEAR(m.moment(n) * (n + 1), 1.0, 1e-12) << n;
}

TEST(Moments, ExponentialIntegralOracle) {
  for (double c : {0.5, 1.0, 2.0}) {
    const MomentSeq m = compute_moments(WeightSpec::exponential(c, 1.0), 0, default_rule());
    EXPECT_NEAR(m.moment(0) / boost::math::expint(2, c), 1.0, 1e-8) << c;
  }
  EXPECT_NEAR(compute_moments(WeightSpec::exponential(2.0, 1.0), 0, default_rule()).moment(0),
              0.0375342618204904527595198245164, 1e-11);
}

TEST(Moments, DecreasingAndRefinementStable) {
  const MomentSeq m = compute_moments(exp11, 100, default_rule(), true);
  for (int n = 1; n <= 100; ++n) EXPECT_LT(m.log_moment(n), m.log_moment(n - 1));
  EXPECT_LT(m.refinement_change, 1e-10);
}

TEST(Moments, ExtendedPrecisionAgrees) {
  const MomentSeq a = compute_moments(exp11, 200, default_rule(), false, Precision::double_);
  const MomentSeq b = compute_moments(exp11, 200, default_rule(), false, Precision::extended);
  for (int n = 0; n <= 200; n += 10) EXPECT_NEAR(a.log_moment(n), b.log_moment(n), 1e-12);
}

TEST(Moments, NonRadialNeedsGram) {
  const auto w = WeightSpec::modulated(exp11, 2.0, AnalyticFn::exponential(1.0));
  EXPECT_THROW(compute_moments(w, 10, default_rule()), ModeError);
}

TEST(Kernel, UnweightedDiagonal) {
  const double k = eval_kernel(unweighted_model(), 0.5, 0.5).to_complex().real();
  EXPECT_NEAR(k / (16.0 / 9.0), 1.0, 1e-9);
  EXPECT_NEAR(kernel_norm_sq(unweighted_model(), 0.5).to_double() / (16.0 / 9.0), 1.0, 1e-9);
}

TEST(Kernel, UnweightedClosedFormRandomPairs) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const cplx z = random_point(rng, 0.9), xi = random_point(rng, 0.9);
    const cplx exact = 1.0 / ((1.0 - xi * std::conj(z)) * (1.0 - xi * std::conj(z)));
    const cplx k = eval_kernel(unweighted_model(), z, xi).to_complex();
    EXPECT_LT(std::abs(k - exact) / std::abs(exact), 1e-9);
  }
}

TEST(Kernel, AtOriginIsInverseMass) {
  const double m0 = exp_model().moments().moment(0);
  EXPECT_NEAR(eval_kernel(exp_model(), {0.3, 0.4}, 0.0).to_complex().real() * m0, 1.0, 1e-14);
  EXPECT_NEAR(kernel_norm_sq(exp_model(), 0.0).to_double() * m0, 1.0, 1e-14);
}

TEST(Kernel, HermitianSymmetry) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const cplx z = random_point(rng, 0.9), xi = random_point(rng, 0.9);
    const cplx a = eval_kernel(exp_model(), z, xi).to_complex();
    const cplx b = std::conj(eval_kernel(exp_model(), xi, z).to_complex());
    EXPECT_LE(std::abs(a - b), 1e-13 * std::abs(a));
  }
}

TEST(Kernel, PositiveSemidefinite) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    std::vector<cplx> pts;
    for (int i = 0; i < 8; ++i) pts.push_back(random_point(rng, 0.9));
    EXPECT_GE(kernel_matrix_min_eig(exp_model(), pts), -1e-8);
  }
}

TEST(Kernel, NormMonotoneInRadius) {
  double prev = 0;
  for (double r = 0; r <= 0.95; r += 0.05) {
    const double v = kernel_norm_sq(exp_model(), r).log_magnitude;
    EXPECT_GT(v, prev - (r == 0 ? INFINITY : 0));
    prev = v;
  }
}

TEST(Kernel, UnresolvedRaisesWithSuggestion) {
  KernelModel k = KernelModel::radial(compute_moments(exp11, 60, default_rule()));
  try {
    k.eval(0.95, 0.95);
    FAIL();
  } catch (const ResolutionError& e) {
    EXPECT_GT(e.suggested_degree, 58);
  }
}

TEST(Kernel, TailBoundAttached) {
  const KernelValue v = exp_model().eval(0.9, 0.9);
  EXPECT_LT(v.tail_bound, 1e-15);
  EXPECT_GT(v.terms, 10);
}

TEST(Gram, RadialMatchesSeries) {
  const KernelModel g = gram_onb(exp11, 40, default_rule());
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const cplx z = random_point(rng, 0.5), xi = random_point(rng, 0.5);
    const cplx a = eval_kernel(g, z, xi).to_complex(), b = eval_kernel(exp_model(), z, xi).to_complex();
    EXPECT_LT(std::abs(a - b) / std::abs(b), 1e-8);
  }
}

TEST(Gram, DegreeZeroIsConstant) {
  const KernelModel g = gram_onb(exp11, 0, default_rule());
  const double m0 = compute_moments(exp11, 0, default_rule()).moment(0);
  EXPECT_NEAR(eval_kernel(g, {0.5, 0.2}, {-0.3, 0.7}).to_complex().real() * m0, 1.0, 1e-12);
}

TEST(Gram, ModulatedReproducesQuadratic) {
  const auto w = WeightSpec::modulated(exp11, 2.0, AnalyticFn::exponential(1.0));
  const QuadRule& rule = default_rule();
  const KernelModel g = gram_onb(w, 16, rule);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const cplx z = random_point(rng, 0.8);
    const auto res = integrate(rule, [&](cplx x) {
      const LogComplex k = eval_kernel(g, z, x).conj();
      return LogComplex::from_complex(x * x) * k * LogComplex::from_polar_log(w.log_weight(x), 0.0);
    });
    EXPECT_LT(std::abs(res.value - z * z), 1e-6 * std::max(std::abs(z * z), 1e-3));
  }
}

TEST(Gram, SingularReportsAchievableDegree) {
  const QuadRule tiny = build_rule(1, 1, 4, 0.9);
  try {
    gram_onb(exp11, 10, tiny);
    FAIL();
  } catch (const DegreeReductionError& e) {
    EXPECT_EQ(e.achievable_degree, 3);
  }
}

TEST(Checks, NormAsymptoticSpread) {
  std::vector<double> grid;
  for (int i = 0; i <= 19; ++i) grid.push_back(0.95 * i / 19);
  const auto rep = check_norm_asymptotic(exp_model(), exp11, grid);
  EXPECT_LT(rep.spread, 100.0);
  EXPECT_LT(rep.extras.at("max_adjacent_jump"), 2.0);
  EXPECT_DOUBLE_EQ(check_norm_asymptotic(exp_model(), exp11, {0.4}).spread, 1.0);
}

TEST(Checks, NearDiagonalBoundedByOne) {
  const TauFn fn = estimate_class_constants(exp11, disk_samples(0.99, 40, 16));
  const auto rep = check_near_diagonal(exp_model(), exp11, 0.5, fn.m_tau / 4, fn.m_tau);
  EXPECT_LE(rep.max, 1.0 + 1e-9);
  EXPECT_NEAR(rep.samples.front().value, 1.0, 1e-12);
  EXPECT_GT(rep.min, 0.0);
  const auto tiny = check_near_diagonal(exp_model(), exp11, 0.5, 1e-6);
  EXPECT_LT(tiny.spread, 1.0 + 1e-6);
  EXPECT_THROW(check_near_diagonal(exp_model(), exp11, 0.5, 0.3, fn.m_tau), PreconditionError);
}

TEST(Checks, PointwiseDecayFiniteAndRotationInvariant) {
  const double delta = 0.06;
  const auto pairs = separated_pairs(exp11, delta);
  const auto rep = check_pointwise_decay(exp_model(), exp11, 3.0, pairs, delta);
  EXPECT_TRUE(rep.finite());
  const cplx rot = std::polar(1.0, 0.7);
  const auto a = check_pointwise_decay(exp_model(), exp11, 3.0, {{0.6, -0.6}}, delta);
  const auto b = check_pointwise_decay(exp_model(), exp11, 3.0, {{0.6 * rot, -0.6 * rot}}, delta);
  EXPECT_NEAR(a.max / b.max, 1.0, 1e-10);
  EXPECT_THROW(check_pointwise_decay(exp_model(), exp11, 3.0, {{0.5, 0.5001}}, delta), PreconditionError);
}

TEST(Checks, IntegralEstimateUnweightedOrigin) {
  const QuadRule rule = build_rule(8, 10, 32, 0.95);
  const KernelModel k = KernelModel::radial(WeightSpec::unweighted(), rule, 2000);
  const auto rep = check_integral_estimate(k, {0.0}, 0.0, rule);
  const double m0 = k.moments().moment(0);
  EXPECT_NEAR(rep.max, 0.95 * 0.95 / m0, 1e-12);
}

TEST(Checks, IntegralEstimateBoundedExponential) {
  const auto rep = check_integral_estimate(exp_model(), {0.0, 0.3, 0.6, 0.8, 0.9}, 0.0, default_rule());
  EXPECT_TRUE(rep.finite());
  EXPECT_GT(rep.min, 0.0);
}

TEST(Checks, SubmeanConstantIsOne) {
  const auto rep = check_submean(exp11, [](cplx) { return 0.0; }, 2.0, 0.0, 0.05, {0.2, 0.5, 0.8});
  for (const auto& s : rep.samples) EXPECT_NEAR(s.value, 1.0, 1e-12);
}

TEST(Checks, SubmeanMonomialFinite) {
  const auto rep = check_submean(exp11, [](cplx x) { return 5.0 * std::log(std::abs(x)); }, 2.0, 1.0, 0.05,
                                 {0.2, 0.5, 0.8});
  EXPECT_TRUE(rep.finite());
  EXPECT_GT(rep.max, 0.5);
}

TEST(Report, DriftAndJson) {
  EstimateReport r;
  r.quantity = "q";
  r.add(0.1, 2.0);
  r.add(0.2, 4.0);
  r.finalize();
  r.refinement.push_back(4.4);
  EXPECT_NEAR(r.drift(), 0.4 / 4.4, 1e-15);
  EXPECT_EQ(r.to_json()["spread"], 2.0);
}
