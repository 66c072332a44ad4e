#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "analytic.hpp"
#include "disk_quad.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "log_real.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "weights.hpp"

namespace blab {

/// P f as a power series sum_n a_n z^n.
struct ProjectedFn {
  std::vector<LogComplex> coeffs;
  bool resolved = true;  // false when the kernel tail bound asked for more terms than were kept

  LogComplex log_at(cplx z) const { return eval_series(coeffs, z); }
  cplx operator()(cplx z) const { return log_at(z).to_complex(); }
  SeriesOnRule on_rule(const QuadRule& rule) const { return eval_series_on_rule(rule, coeffs); }
};

/// Largest ring radius carrying a nonzero sample.
inline double support_radius(const QuadRule& rule, const SampledFn& f) {
  double r = 0;
  const std::size_t M = static_cast<std::size_t>(rule.angular_count);
  for (std::size_t ring = 0; ring < rule.ring_count(); ++ring)
    for (std::size_t j = 0; j < M; ++j)
      if (!f.values[ring * M + j].zero) {
        r = rule.ring_r[ring];
        break;
      }
  return r;
}

/// P_omega f(z) = int f(xi) conj(K_z(xi)) omega(xi) dA(xi) on a quadrature rule.
class ProjectionOperator {
 public:
  ProjectionOperator(KernelModel model, QuadRule rule) : model_(std::move(model)), rule_(std::move(rule)) {
    log_w_.resize(rule_.size());
    parallel_for(rule_.size(), [&](std::size_t i) { log_w_[i] = model_.weight().log_weight(rule_.nodes[i]); });
  }

  const KernelModel& model() const { return model_; }
  const WeightSpec& spec() const { return model_.weight(); }
  const QuadRule& rule() const { return rule_; }
  double log_weight_at(std::size_t node) const { return log_w_[node]; }

  /// Coefficients of P f, resolved for evaluation at |z| <= r_eval when possible.
  /// At most angular_count / 2 terms are kept; higher angular frequencies alias on the rule.
  ProjectedFn apply(const SampledFn& f, double r_eval) const {
    if (f.size() != rule_.size()) throw QuadratureError("sampled function does not match the projection rule");
    SampledFn g;
    g.values.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      g.values[i] = f.values[i];
      if (!g.values[i].zero) g.values[i].log_magnitude += log_w_[i];
    }
    ProjectedFn out;
    int n_terms = 0;
    if (model_.mode() == KernelModel::Mode::gram) {
      n_terms = model_.degree() + 1;
    } else {
      try {
        n_terms = model_.terms_needed(support_radius(rule_, f) * r_eval);
      } catch (const ResolutionError&) {
        n_terms = model_.cap + 1;
        out.resolved = false;
      }
    }
    const int nyquist = rule_.angular_count / 2;
    if (n_terms > nyquist) {
      n_terms = nyquist;
      out.resolved = false;
    }
    const auto c = monomial_pairings(rule_, g, n_terms - 1);
    out.coeffs.resize(n_terms);
    if (model_.mode() == KernelModel::Mode::radial) {
      for (int n = 0; n < n_terms; ++n) {
        out.coeffs[n] = c[n];
        if (!c[n].zero) out.coeffs[n].log_magnitude -= model_.moments().log_m[n];
      }
      return out;
    }
    // a = s .* (Linv^T (conj(Linv) (s .* c))).
    const auto& L = model_.gram_linv();
    const auto& s = model_.gram_log_scale();
    Eigen::VectorXcd sc(n_terms);
    for (int n = 0; n < n_terms; ++n) {
      LogComplex v = c[n];
      if (!v.zero) v.log_magnitude += s[n];
      sc[n] = v.to_complex();
    }
    const Eigen::VectorXcd u = L.conjugate() * sc;
    const Eigen::VectorXcd a = L.transpose() * u;
    for (int n = 0; n < n_terms; ++n) {
      LogComplex v = LogComplex::from_complex(a[n]);
      if (!v.zero) v.log_magnitude += s[n];
      out.coeffs[n] = v;
    }
    return out;
  }

  /// P f(z) through the monomial pairings.
  cplx project(const SampledFn& f, cplx z) const { return apply(f, std::abs(z)).log_at(z).to_complex(); }

  /// P f(z) as a direct quadrature against conj(K_z) omega.
  cplx project_direct(const SampledFn& f, cplx z) const {
    const SeriesOnRule k = eval_series_on_rule(rule_, model_.coefficients(z, rule_.r_max));
    return integrate_nodes(rule_, [&](std::size_t i) {
             if (f.values[i].zero || k.values.values[i].zero) return LogComplex{};
             LogComplex v = f.values[i] * k.values.values[i].conj();
             v.log_magnitude += log_w_[i];
             return v;
           })
        .value;
  }

 private:
  KernelModel model_;
  QuadRule rule_;
  std::vector<double> log_w_;
};

inline cplx project(const ProjectionOperator& op, const SampledFn& f, cplx z) { return op.project(f, z); }

/// Points of a polar grid of radius r (origin included).
inline std::vector<cplx> eval_grid(double r, int n_r = 18, int n_theta = 36) { return disk_samples(r, n_r, n_theta, 0.1); }

/// max over the grid of |P f(z) - f(z)| / (1 + |f(z)|).
inline double reproduce_check(const ProjectionOperator& op, const std::function<cplx(cplx)>& f,
                              const std::vector<cplx>& grid) {
  const SampledFn s = sample_complex(op.rule(), f);
  double r_eval = 0;
  for (cplx z : grid) r_eval = std::max(r_eval, std::abs(z));
  const ProjectedFn pf = op.apply(s, r_eval);
  std::vector<double> err(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const cplx fz = f(grid[i]);
    err[i] = std::abs(pf(grid[i]) - fz) / (1.0 + std::abs(fz));
  });
  return *std::max_element(err.begin(), err.end());
}

/// <f, g>_omega = sum f conj(g) omega w over the rule.
inline cplx pairing(const SampledFn& f, const SampledFn& g, const WeightSpec& spec, const QuadRule& rule) {
  return integrate_nodes(rule, [&](std::size_t i) {
           if (f.values[i].zero || g.values[i].zero) return LogComplex{};
           LogComplex v = f.values[i] * g.values[i].conj();
           v.log_magnitude += spec.log_weight(rule.nodes[i]);
           return v;
         })
      .value;
}

/// log of ||h||_{L^p(omega^{p/2})} over rings with radius <= r_limit; p = inf gives the weighted sup.
inline double log_lp_norm(const QuadRule& rule, const std::vector<LogComplex>& h, const std::vector<double>& log_w,
                          double p, double r_limit = 2.0) {
  const std::size_t M = static_cast<std::size_t>(rule.angular_count);
  if (std::isinf(p)) {
    double best = -INFINITY;
    for (std::size_t i = 0; i < rule.size(); ++i)
      if (rule.ring_r[i / M] <= r_limit && !h[i].zero) best = std::max(best, h[i].log_magnitude + 0.5 * log_w[i]);
    return best;
  }
  std::vector<double> terms;
  terms.reserve(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const std::size_t ring = i / M;
    if (rule.ring_r[ring] > r_limit || h[i].zero) continue;
    terms.push_back(p * h[i].log_magnitude + 0.5 * p * log_w[i] + std::log(rule.ring_weight[ring]));
  }
  return log_sum_exp(terms) / p;
}

/// Test function for the operator-norm experiments, defined at every point.
struct TestFn {
  std::string family;
  std::function<LogComplex(cplx)> fn;
};

/// Smooth cutoff equal to 1 for r <= r0 and 0 for r >= r1.
inline double smooth_cutoff(double r, double r0, double r1) {
  if (r <= r0) return 1.0;
  if (r >= r1) return 0.0;
  auto psi = [](double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; };
  const double t = (r1 - r) / (r1 - r0);
  return psi(t) / (psi(t) + psi(1.0 - t));
}

/// Seeded families: omega^{-1/2}-scaled bumps on the tau scale, conjugate-analytic
/// and random-phase functions (all cut off to |xi| <= support), plus analytic polynomials.
inline std::vector<TestFn> norm_test_functions(const WeightSpec& spec, int count, unsigned seed, double support = 0.9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> G(0.0, 1.0);
  const double r0 = support - 0.1;
  std::vector<TestFn> out;
  for (int i = 0; i < count; ++i) {
    const int kind = i % 4;
    if (kind == 0) {
      const int nb = 1 + static_cast<int>(3 * U(rng));
      std::vector<cplx> a, amp;
      std::vector<double> s;
      for (int b = 0; b < nb; ++b) {
        const cplx c = std::polar(r0 * std::sqrt(U(rng)), 2 * std::numbers::pi * U(rng));
        a.push_back(c);
        s.push_back(spec.tau(c) * (0.5 + 1.5 * U(rng)));
        amp.emplace_back(G(rng), G(rng));
      }
      out.push_back({"bump", [=](cplx x) {
                       const double chi = smooth_cutoff(std::abs(x), r0, support);
                       if (chi == 0) return LogComplex{};
                       cplx v = 0;
                       for (std::size_t b = 0; b < a.size(); ++b)
                         v += amp[b] * std::exp(-std::norm(x - a[b]) / (2 * s[b] * s[b]));
                       LogComplex l = LogComplex::from_complex(v * chi);
                       if (!l.zero) l.log_magnitude -= 0.5 * spec.log_weight(x);
                       return l;
                     }});
    } else if (kind == 1) {
      const int deg = 1 + static_cast<int>(5 * U(rng));
      std::vector<cplx> c;
      for (int k = 0; k <= deg; ++k) c.emplace_back(G(rng), G(rng));
      out.push_back({"conjugate_analytic", [=](cplx x) {
                       const double chi = smooth_cutoff(std::abs(x), r0, support);
                       if (chi == 0) return LogComplex{};
                       cplx v = 0;
                       for (int k = deg; k >= 0; --k) v = v * std::conj(x) + c[k];
                       LogComplex l = LogComplex::from_complex(v * chi);
                       if (!l.zero) l.log_magnitude -= 0.5 * spec.log_weight(x);
                       return l;
                     }});
    } else if (kind == 2) {
      std::vector<double> kx, ky, ph, am;
      for (int m = 0; m < 4; ++m) {
        kx.push_back(8 * G(rng));
        ky.push_back(8 * G(rng));
        ph.push_back(2 * std::numbers::pi * U(rng));
        am.push_back(U(rng) * 2);
      }
      out.push_back({"random_phase", [=](cplx x) {
                       const double chi = smooth_cutoff(std::abs(x), r0, support);
                       if (chi == 0) return LogComplex{};
                       double theta = 0;
                       for (std::size_t m = 0; m < kx.size(); ++m)
                         theta += am[m] * std::sin(kx[m] * x.real() + ky[m] * x.imag() + ph[m]);
                       return LogComplex::from_polar_log(std::log(chi) - 0.5 * spec.log_weight(x), theta);
                     }});
    } else {
      const int deg = static_cast<int>(9 * U(rng));
      std::vector<cplx> c;
      for (int k = 0; k <= deg; ++k) c.emplace_back(G(rng), G(rng));
      out.push_back({"analytic", [=](cplx x) {
                       cplx v = 0;
                       for (int k = deg; k >= 0; --k) v = v * x + c[k];
                       return LogComplex::from_complex(v);
                     }});
    }
  }
  return out;
}

struct NormReport {
  double p = 2;
  std::string test_set;
  std::vector<std::string> families;
  std::vector<double> ratios;
  double max_ratio = 0;
  double resolved_radius = 0;  // norms are taken over rings inside this radius
  int skipped = 0;

  nlohmann::json to_json() const {
    return {{"p", std::isinf(p) ? nlohmann::json("inf") : nlohmann::json(p)},
            {"test_set", test_set},
            {"ratios", ratios},
            {"families", families},
            {"max_ratio", max_ratio},
            {"resolved_radius", resolved_radius},
            {"skipped", skipped},
            {"note", "max_ratio is a lower bound for the operator norm"}};
  }
};

/// Ratios ||P f|| / ||f|| in L^p(omega^{p/2}) for each p, over the rings where
/// P f is resolved. Each test function is projected once.
inline std::vector<NormReport> empirical_norms(const ProjectionOperator& op, const std::vector<double>& ps,
                                               const std::vector<TestFn>& fns) {
  const QuadRule& rule = op.rule();
  std::vector<double> log_w(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) log_w[i] = op.log_weight_at(i);
  std::vector<std::vector<double>> ratio(ps.size(), std::vector<double>(fns.size(), -1.0));
  std::vector<double> radius(fns.size(), rule.r_max);
  for (std::size_t t = 0; t < fns.size(); ++t) {
    const SampledFn f = sample(rule, fns[t].fn);
    const SeriesOnRule on = op.apply(f, rule.r_max).on_rule(rule);
    const double lim = on.resolved_radius;
    radius[t] = lim;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const double nf = log_lp_norm(rule, f.values, log_w, ps[k], lim);
      if (std::isinf(nf)) continue;
      ratio[k][t] = std::exp(log_lp_norm(rule, on.values.values, log_w, ps[k], lim) - nf);
    }
  }
  std::vector<NormReport> out(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) {
    NormReport& rep = out[k];
    rep.p = ps[k];
    rep.test_set = std::to_string(fns.size()) + " seeded test functions";
    rep.resolved_radius = rule.r_max;
    for (std::size_t t = 0; t < fns.size(); ++t) {
      if (ratio[k][t] < 0) {
        ++rep.skipped;
        continue;
      }
      rep.families.push_back(fns[t].family);
      rep.ratios.push_back(ratio[k][t]);
      rep.max_ratio = std::max(rep.max_ratio, ratio[k][t]);
      rep.resolved_radius = std::min(rep.resolved_radius, radius[t]);
    }
  }
  return out;
}

inline NormReport empirical_norm(const ProjectionOperator& op, double p, const std::vector<TestFn>& fns) {
  return empirical_norms(op, {p}, fns).front();
}

}  // namespace blab
