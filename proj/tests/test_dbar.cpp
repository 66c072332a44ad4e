#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "blab/dbar.hpp"

using namespace blab;

namespace {
const WeightSpec exp11 = WeightSpec::exponential(1.0, 1.0);
const double m_tau = m_tau_from(0.84415408638, 1.01065981688);

const QuadRule& rule() {
  static const QuadRule r = build_rule(24, 20, 512, 0.99);
  return r;
}

const KernelModel& model() {
  static const KernelModel m = KernelModel::radial(exp11, rule());
  return m;
}

struct Setup {
  Covering cov = build_covering(exp11, m_tau / 2, 0.6, m_tau);
  PartitionOfUnity pou{cov, exp11};
};

const Setup& setup() {
  static const Setup s;
  return s;
}

Covering single_disc(cplx a, double rho) {
  Covering cov;
  cov.delta1 = m_tau / 2;
  cov.delta0 = 2 * cov.delta1;
  cov.delta = 10 * cov.delta1;
  cov.multiplicity = 1;
  cov.r_max = std::abs(a) + rho;
  cov.add(a, rho);
  return cov;
}

cplx cut(cplx z) { return smooth_cutoff(std::abs(z), 0.1, 0.35); }

double quad(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-12);
}
}  // namespace

TEST(Normalized, UnitNorm) {
  for (cplx a : {cplx(0.0), cplx(0.3, 0.2), cplx(-0.6, 0.1)}) {
    const NormalizedKernel h = normalized_kernel(model(), a);
    EXPECT_NEAR(normalized_norm_sq(h, exp11, rule()), 1.0, 1e-8) << a;
  }
}

TEST(Normalized, OriginIsConstant) {
  const double m0 = 2 * quad([](double r) { return r * std::exp(exp11.log_weight(cplx(r, 0.0))); }, 0.0, 1.0);
  const NormalizedKernel h = normalized_kernel(model(), 0.0);
  for (cplx z : {cplx(0.0), cplx(0.5, 0.3), cplx(-0.9, 0.0)}) {
    const cplx v = h(z).to_complex();
    EXPECT_NEAR(v.real(), 1 / std::sqrt(m0), 1e-9 / std::sqrt(m0)) << z;
    EXPECT_NEAR(v.imag(), 0.0, 1e-12) << z;
  }
}

TEST(Normalized, NearDiagonalComparable) {
  for (cplx a : {cplx(0.0), cplx(0.5, 0.0), cplx(0.2, -0.7)}) {
    const auto rep = check_normalized_near_diagonal(normalized_kernel(model(), a), exp11, 0.5);
    EXPECT_TRUE(rep.finite());
    EXPECT_LT(rep.spread, 3.0) << a;
  }
}

TEST(Normalized, DecayWithM3Bounded) {
  std::vector<std::pair<cplx, cplx>> pairs;
  for (cplx a : {cplx(0.0), cplx(0.4, 0.3), cplx(0.8, 0.0)})
    for (double k : {0.5, 1.0, 2.0, 4.0, 8.0})
      for (double th : {0.0, 2.0, 4.0}) {
        const cplx z = a + std::polar(k * exp11.tau(a), th);
        if (std::abs(z) < 0.95) pairs.emplace_back(a, z);
      }
  const auto rep = check_normalized_decay(model(), exp11, 3.0, pairs);
  EXPECT_TRUE(rep.finite());
  EXPECT_LT(rep.max, 50.0);
}

TEST(InverseTaylor, InvertsKernel) {
  const NormalizedKernel h = normalized_kernel(model(), cplx(0.3, 0.1));
  const InverseTaylor inv = inverse_taylor(h, 0.05);
  for (cplx z : disk_samples(0.05, 3, 7, 0.2)) {
    const cplx zeta = cplx(0.3, 0.1) + z;
    const LogComplex v = h(zeta);
    const cplx prod = inv.scaled(zeta) * std::polar(std::exp(v.log_magnitude - inv.log_scale), v.phase);
    EXPECT_LT(std::abs(prod - 1.0), 1e-10) << zeta;
  }
}

TEST(InverseTaylor, GuardFiresOnShortSeries) {
  EXPECT_NO_THROW(inverse_taylor(normalized_kernel(model(), 0.2), 0.3));
  EXPECT_THROW(inverse_taylor(normalized_kernel(model(), 0.2), 0.3, 4), DivisionGuardError);
}

TEST(Dbar, SingleDiscRadialData) {
  const cplx a(0.1, -0.05);
  const double rho = 0.08;
  const Covering cov = single_disc(a, rho);
  const PartitionOfUnity pou(cov, exp11);
  const NormalizedKernel h = normalized_kernel(model(), a, 0.5);
  const auto g = [rho](double s) { return smooth_cutoff(s, 0.2 * rho, 0.45 * rho); };
  const DbarSolver S(cov, pou, model(), [&](cplx z) { return g(std::abs(z - a)) * h(z).to_complex(); }, cov.r_max, 0.5);
  for (cplx z : {a, a + cplx(0.03, 0.02), a + cplx(-0.07, 0.0), a + cplx(0.09, 0.01), cplx(0.4, 0.2)}) {
    const cplx d = z - a, hz = h(z).to_complex();
    const double t = std::abs(d);
    const cplx want = t == 0 ? cplx(0.0) : hz * 2.0 * quad([&](double s) { return g(s) * s; }, 0.0, std::min(t, rho)) / d;
    EXPECT_LT(std::abs(S(z) - want), 1e-8 * std::abs(hz)) << z;
  }
}

TEST(Dbar, ZeroDataGivesZero) {
  const DbarSolver S(setup().cov, setup().pou, model(), [](cplx) { return cplx(0.0); }, 0.3, 0.5);
  for (cplx z : disk_samples(0.5, 4, 6)) EXPECT_EQ(S(z), cplx(0.0));
}

TEST(Dbar, ResidualOfSmoothCut) {
  const DbarSolver S(setup().cov, setup().pou, model(), cut, 0.35, 0.5);
  const auto rep = dbar_residual(S, cut, disk_samples(0.4, 5, 9, 0.1), exp11, 0.5);
  EXPECT_EQ(rep.skipped, 0u);
  EXPECT_LT(rep.rel_l2, 1e-3);
}

TEST(Dbar, ConstantDataMinusConjugateIsHolomorphic) {
  const DbarSolver S(setup().cov, setup().pou, model(), cut, 0.35, 0.5);
  const auto hol = [&](cplx z) { return S(z) - std::conj(z); };
  const auto rep = dbar_residual(hol, [](cplx) { return cplx(0.0); }, disk_samples(0.06, 3, 6, 0.1), exp11, 0.5);
  EXPECT_LT(rep.sup, 1e-5);
}

TEST(Dbar, Linear) {
  const auto f1 = cut;
  const auto f2 = [](cplx z) { return smooth_cutoff(std::abs(z), 0.1, 0.25) * z * z; };
  const cplx c(0.0, 2.0);
  const DbarSolver S1(setup().cov, setup().pou, model(), f1, 0.35, 0.5);
  const DbarSolver S2(setup().cov, setup().pou, model(), f2, 0.35, 0.5);
  const DbarSolver S12(setup().cov, setup().pou, model(), [&](cplx z) { return f1(z) + c * f2(z); }, 0.35, 0.5);
  for (cplx z : disk_samples(0.5, 3, 5, 0.3)) {
    const cplx want = S1(z) + c * S2(z);
    EXPECT_LT(std::abs(S12(z) - want), 1e-12 * (1 + std::abs(want))) << z;
  }
}

TEST(Dbar, RejectsSupportOutsideCovering) {
  EXPECT_THROW(DbarSolver(setup().cov, setup().pou, model(), cut, 0.7, 0.5), PreconditionError);
}

TEST(GKernel, SingleDiscAtCentre) {
  const double rho = m_tau / 2 * exp11.tau(0.0);
  const Covering cov = single_disc(0.0, rho);
  const PartitionOfUnity pou(cov, exp11);
  const GKernel G(cov, pou, model());
  const double lw0 = exp11.log_weight(0.0);
  const double want = 2 * quad([&](double r) {
    return std::exp(0.5 * (lw0 - exp11.log_weight(cplx(r, 0.0)))) / exp11.tau(cplx(r, 0.0));
  }, 0.0, rho);
  const auto got = G.integral(0.0, exp11, tau_rule(exp11, cov.delta1, rho, 16), 64, 128);
  EXPECT_NEAR(got.total(), want, 1e-4 * want);
}

TEST(GKernel, SingleDiscOffCentre) {
  const double rho = m_tau / 2 * exp11.tau(0.0);
  const Covering cov = single_disc(0.0, rho);
  const PartitionOfUnity pou(cov, exp11);
  const GKernel G(cov, pou, model());
  const cplx z(0.4 * rho, 0.2 * rho);
  const double lwz = exp11.log_weight(z);
  const double want = quad([&](double th) {
    const cplx e = std::polar(1.0, th);
    const double b = z.real() * e.real() + z.imag() * e.imag();
    const double R = -b + std::sqrt(b * b + rho * rho - std::norm(z));
    return quad([&](double r) {
      const cplx zeta = z + r * e;
      return std::exp(0.5 * (lwz - exp11.log_weight(zeta))) / exp11.tau(zeta);
    }, 0.0, R);
  }, 0.0, 2 * std::numbers::pi) / std::numbers::pi;
  const auto got = G.integral(z, exp11, tau_rule(exp11, cov.delta1, rho, 16), 64, 128);
  EXPECT_NEAR(got.total(), want, 1e-4 * want);
}

TEST(GKernel, IntegralStableUnderRefinement) {
  const GKernel G(setup().cov, setup().pou, model());
  const auto rep = check_G_integral(G, exp11, {cplx(0.0), cplx(0.2, 0.1)}, 2, 2.0, 8, 16);
  EXPECT_TRUE(rep.finite());
  EXPECT_LT(rep.drift(), 0.05);
}

namespace {
const ProjectionOperator& op() {
  static const ProjectionOperator P(model(), rule());
  return P;
}

SampledFn bump_chi() {
  return sample_complex(rule(), [](cplx z) {
    return smooth_cutoff(std::abs(z - cplx(0.2, 0.1)), 0.1, 0.25) * cplx(1.0, -0.5) * std::exp(z);
  });
}
}  // namespace

TEST(Minimal, OrthogonalToMonomials) {
  const MinimalSolution sol = minimal_solution(bump_chi(), op());
  for (int k = 0; k <= 6; ++k) EXPECT_LT(orthogonality_residual(sol, op(), k), 1e-6) << k;
}

TEST(Minimal, ProjectedPartIsHolomorphic) {
  const MinimalSolution sol = minimal_solution(bump_chi(), op());
  const auto rep = dbar_residual([&](cplx z) { return sol.projected(z); }, [](cplx) { return cplx(0.0); },
                                 disk_samples(0.6, 4, 7, 0.2), exp11, 0.9);
  EXPECT_LT(rep.sup, 1e-6);
}

TEST(Minimal, HolomorphicInputVanishes) {
  const MinimalSolution sol = minimal_solution(sample_complex(rule(), [](cplx z) { return z * z - 0.3; }), op());
  for (cplx z : disk_samples(0.8, 4, 7, 0.2)) EXPECT_LT(std::abs(sol(z)), 1e-8) << z;
}

TEST(Minimal, NeedsEvaluator) {
  SampledFn f = bump_chi();
  f.evaluator = nullptr;
  EXPECT_THROW(minimal_solution(f, op()), PreconditionError);
}
