#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "disk_quad.hpp"
#include "errors.hpp"
#include "log_real.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "weights.hpp"

namespace blab {

enum class Precision { double_, extended };

/// Accumulation precision from BLAB_PRECISION (unset means double).
inline Precision precision_from_env() {
  const char* v = std::getenv("BLAB_PRECISION");
  if (!v || std::string(v).empty() || std::string(v) == "double") return Precision::double_;
  if (std::string(v) == "extended") return Precision::extended;
  throw UsageError("BLAB_PRECISION must be 'double' or 'extended'");
}

/// m_n = <z^n, z^n> under the rule, stored as logs.
struct MomentSeq {
  WeightSpec weight = WeightSpec::unweighted();
  int N = 0;
  std::vector<double> log_m;
  double refinement_change = -1;  // max_n |m_n(refined)/m_n - 1|, when computed

  double log_moment(int n) const { return log_m.at(static_cast<std::size_t>(n)); }
  double moment(int n) const { return std::exp(log_moment(n)); }
  LogReal m(int n) const { return LogReal::from_log(log_moment(n)); }
};

namespace detail {
inline std::vector<double> moments_on_rule(const WeightSpec& spec, int N, const QuadRule& rule, Precision prec) {
  const std::size_t rings = rule.ring_count();
  std::vector<double> base(rings), lr(rings);
  for (std::size_t i = 0; i < rings; ++i) {
    const double r = rule.ring_r[i];
    base[i] = std::log(rule.ring_weight[i] * rule.angular_count) + spec.log_weight(cplx(r, 0.0));
    lr[i] = 2.0 * std::log(r);
  }
  std::vector<double> out(static_cast<std::size_t>(N) + 1);
  parallel_for(out.size(), [&](std::size_t n) {
    std::vector<double> terms(rings);
    for (std::size_t i = 0; i < rings; ++i) terms[i] = base[i] + static_cast<double>(n) * lr[i];
    out[n] = prec == Precision::extended ? log_sum_exp<long double>(terms) : log_sum_exp<double>(terms);
  });
  return out;
}
}  // namespace detail

/// Moments m_0..m_N of a radial weight on `rule`. With `with_refinement` the
/// change against the refined rule is attached.
inline MomentSeq compute_moments(const WeightSpec& spec, int N, const QuadRule& rule, bool with_refinement = false,
                                 Precision prec = precision_from_env()) {
  if (!spec.radial()) throw ModeError("weight is not radial; use gram_onb for a non-radial weight");
  if (N < 0) throw PreconditionError("moment degree must be >= 0");
  MomentSeq seq;
  seq.weight = spec;
  seq.N = N;
  seq.log_m = detail::moments_on_rule(spec, N, rule, prec);
  if (with_refinement) {
    const auto fine = detail::moments_on_rule(spec, N, refine(rule), prec);
    double worst = 0;
    for (int n = 0; n <= N; ++n) worst = std::max(worst, std::abs(std::expm1(fine[n] - seq.log_m[n])));
    seq.refinement_change = worst;
  }
  return seq;
}

struct KernelValue {
  LogComplex value;
  double tail_bound = 0;  // bound on the truncated tail relative to sum |terms|
  int terms = 0;
};

/// K_z(xi) either from the radial moment series or from an orthonormal basis
/// of polynomials of degree <= N.
class KernelModel {
 public:
  enum class Mode { radial, gram };

  double tolerance = 1e-15;
  int cap = 4000;

  static KernelModel radial(MomentSeq moments) {
    KernelModel k;
    k.mode_ = Mode::radial;
    k.weight_ = moments.weight;
    k.moments_ = std::move(moments);
    k.prepare_ratios();
    return k;
  }

  /// Radial model with moments up to the truncation cap.
  static KernelModel radial(const WeightSpec& spec, const QuadRule& rule, int cap = 4000) {
    KernelModel k = radial(compute_moments(spec, cap + 2, rule));
    k.cap = cap;
    return k;
  }

  /// e = Linv * diag(scale) * (1, xi, ..., xi^N).
  static KernelModel gram(const WeightSpec& spec, int N, Eigen::MatrixXcd linv, std::vector<double> log_scale) {
    KernelModel k;
    k.mode_ = Mode::gram;
    k.weight_ = spec;
    k.gram_N_ = N;
    k.linv_ = std::move(linv);
    k.log_scale_ = std::move(log_scale);
    return k;
  }

  Mode mode() const { return mode_; }
  const WeightSpec& weight() const { return weight_; }
  const MomentSeq& moments() const { return moments_; }
  int degree() const { return mode_ == Mode::gram ? gram_N_ : cap; }
  const Eigen::MatrixXcd& gram_linv() const { return linv_; }
  const std::vector<double>& gram_log_scale() const { return log_scale_; }

  KernelValue eval(cplx z, cplx xi) const {
    return mode_ == Mode::radial ? eval_radial(xi * std::conj(z)) : eval_gram(z, xi);
  }

  /// Coefficients a_n with K_z(xi) = sum_n a_n xi^n, truncated so that the
  /// series is resolved for |xi| <= r_eval.
  std::vector<LogComplex> coefficients(cplx z, double r_eval) const {
    if (mode_ == Mode::gram) {
      const Eigen::VectorXcd ez = basis(z);
      std::vector<LogComplex> a(gram_N_ + 1);
      for (int n = 0; n <= gram_N_; ++n) {
        cplx s = 0;
        for (int k = 0; k < linv_.rows(); ++k) s += std::conj(ez[k]) * linv_(k, n);
        a[n] = LogComplex::from_complex(s);
        if (!a[n].zero) a[n].log_magnitude += log_scale_[n];
      }
      return a;
    }
    const int n_terms = terms_needed(std::abs(z) * r_eval);
    std::vector<LogComplex> a(n_terms);
    const double lz = std::abs(z) > 0 ? std::log(std::abs(z)) : -INFINITY;
    const double th = -std::arg(z);
    for (int n = 0; n < n_terms; ++n) {
      const double lm = n == 0 ? 0.0 : n * lz;
      a[n] = LogComplex::from_polar_log(lm - moments_.log_m[n], n * th);
    }
    return a;
  }

  /// Number of radial terms so the tail bound at |xi conj(z)| = rho is below tolerance.
  int terms_needed(double rho) const {
    if (mode_ == Mode::gram) return gram_N_ + 1;
    if (rho == 0) return 1;
    const double lrho = std::log(rho);
    double log_sum = -moments_.log_m[0];
    for (int n = 1; n <= cap; ++n) {
      const double lt = n * lrho - moments_.log_m[n];
      log_sum = std::max(log_sum, lt) + std::log1p(std::exp(-std::abs(log_sum - lt)));
      const double ratio = rho * ratio_[n + 1];
      if (ratio < 1) {
        const double lt1 = (n + 1) * lrho - moments_.log_m[n + 1];
        if (lt1 - std::log1p(-ratio) - log_sum < std::log(tolerance)) return n + 1;
      }
    }
    throw ResolutionError("kernel series unresolved at |w| = " + std::to_string(rho) + " within " +
                              std::to_string(cap) + " terms",
                          suggest_degree(rho));
  }

 private:
  Mode mode_ = Mode::radial;
  WeightSpec weight_ = WeightSpec::unweighted();
  MomentSeq moments_;
  std::vector<double> ratio_;  // m_{n-1}/m_n (ratio_[0] unused)
  int gram_N_ = 0;
  Eigen::MatrixXcd linv_;
  std::vector<double> log_scale_;

  void prepare_ratios() {
    const auto& lm = moments_.log_m;
    ratio_.assign(lm.size(), 0.0);
    for (std::size_t n = 1; n < lm.size(); ++n) ratio_[n] = std::exp(lm[n - 1] - lm[n]);
    cap = std::min<int>(cap, static_cast<int>(lm.size()) - 2);
  }

  int suggest_degree(double rho) const {
    const double r = rho * ratio_[cap + 1];
    if (!(r < 1)) return 2 * (cap + 1);
    const double lt = (cap + 1) * std::log(rho) - moments_.log_m[cap + 1];
    const double need = (std::log(tolerance) + std::log1p(-r) - lt) / std::log(r);
    return cap + 1 + static_cast<int>(std::ceil(std::max(0.0, need)));
  }

  KernelValue eval_radial(cplx w) const {
    const double rho = std::abs(w);
    KernelValue out;
    if (rho == 0) {
      out.value = LogComplex::from_polar_log(-moments_.log_m[0], 0.0);
      out.terms = 1;
      return out;
    }
    const int n_terms = terms_needed(rho);
    // Mantissa recurrence t_n = t_{n-1} w m_{n-1}/m_n with rescaling.
    cplx term = 1.0;
    cplx sum = 1.0;
    double abs_sum = 1.0;
    double scale = -moments_.log_m[0];
    for (int n = 1; n < n_terms; ++n) {
      term *= w * ratio_[n];
      sum += term;
      abs_sum += std::abs(term);
      if (abs_sum > 1e250) {
        term *= 1e-250;
        sum *= 1e-250;
        abs_sum *= 1e-250;
        scale += 250.0 * std::log(10.0);
      }
    }
    out.terms = n_terms;
    const double lt1 = n_terms * std::log(rho) - moments_.log_m[n_terms];
    const double r1 = rho * ratio_[n_terms + 1];
    out.tail_bound = std::exp(lt1 - std::log1p(-r1) - (std::log(abs_sum) + scale));
    if (sum == cplx(0.0, 0.0)) return out;
    out.value = LogComplex::from_polar_log(std::log(std::abs(sum)) + scale, std::arg(sum));
    return out;
  }

  Eigen::VectorXcd basis(cplx xi) const {
    Eigen::VectorXcd v(gram_N_ + 1);
    const double lx = std::abs(xi) > 0 ? std::log(std::abs(xi)) : -INFINITY;
    for (int n = 0; n <= gram_N_; ++n) {
      const double lm = (n == 0 ? 0.0 : n * lx) + log_scale_[n];
      v[n] = std::isinf(lm) ? cplx(0.0) : std::polar(std::exp(lm), n * std::arg(xi));
    }
    return linv_.triangularView<Eigen::Lower>() * v;
  }

  KernelValue eval_gram(cplx z, cplx xi) const {
    const Eigen::VectorXcd ez = basis(z), ex = basis(xi);
    const cplx k = ez.dot(ex);
    KernelValue out;
    out.terms = gram_N_ + 1;
    out.value = LogComplex::from_complex(k);
    return out;
  }
};

inline LogComplex eval_kernel(const KernelModel& model, cplx z, cplx xi) { return model.eval(z, xi).value; }

/// K_z(z) > 0.
inline LogReal kernel_norm_sq(const KernelModel& model, cplx z) {
  const LogComplex v = model.eval(z, z).value;
  if (v.zero) return {};
  return LogReal::from_log(v.log_magnitude);
}

/// Gram matrix G_mn = <z^m, z^n> of the weight on the rule, entrywise scaled
/// by exp(-(s_m + s_n)/2) with s_n = log G_nn.
struct ScaledGram {
  Eigen::MatrixXcd g;
  std::vector<double> log_diag;
};

inline ScaledGram gram_matrix(const WeightSpec& spec, int N, const QuadRule& rule) {
  if (rule.center != cplx(0.0, 0.0)) throw QuadratureError("gram_matrix needs a rule centred at 0");
  SampledFn w = sample(rule, [&spec](cplx z) { return LogComplex::from_polar_log(spec.log_weight(z), 0.0); });
  const std::size_t rings = rule.ring_count();
  const int M = rule.angular_count;
  std::vector<double> scale(rings);
  std::vector<std::vector<cplx>> spec_r(rings);
  parallel_for(rings, [&](std::size_t r) {
    double s = -INFINITY;
    for (int j = 0; j < M; ++j) s = std::max(s, w.values[r * M + j].log_magnitude);
    std::vector<cplx> in(M);
    for (int j = 0; j < M; ++j) in[j] = std::polar(std::exp(w.values[r * M + j].log_magnitude - s), 0.0);
    Eigen::FFT<double> fft;
    fft.fwd(spec_r[r], in);
    scale[r] = s + std::log(rule.ring_weight[r]);
  });
  // <z^m, z^n> = sum_r w_r r^{m+n} sum_j omega e^{i (m-n) theta_j}, the inner sum being F[(n-m) mod M].
  std::vector<LogComplex> raw(static_cast<std::size_t>((N + 1) * (N + 1)));
  parallel_for(static_cast<std::size_t>(N + 1), [&](std::size_t m) {
    for (int n = 0; n <= N; ++n) {
      ScaledSum acc;
      const int k = ((n - static_cast<int>(m)) % M + M) % M;
      for (std::size_t r = 0; r < rings; ++r)
        acc.add_scaled(spec_r[r][k], scale[r] + (static_cast<double>(m) + n) * std::log(rule.ring_r[r]));
      raw[m * (N + 1) + n] = acc.result();
    }
  });
  ScaledGram out;
  out.log_diag.resize(N + 1);
  for (int n = 0; n <= N; ++n) out.log_diag[n] = raw[n * (N + 1) + n].log_magnitude;
  out.g.resize(N + 1, N + 1);
  for (int m = 0; m <= N; ++m)
    for (int n = 0; n <= N; ++n) {
      LogComplex v = raw[m * (N + 1) + n];
      if (!v.zero) v.log_magnitude -= 0.5 * (out.log_diag[m] + out.log_diag[n]);
      out.g(m, n) = v.to_complex();
    }
  return out;
}

/// Orthonormal basis of polynomials of degree <= N by Cholesky of the scaled
/// Gram matrix. Throws DegreeReductionError with the largest stable degree.
inline KernelModel gram_onb(const WeightSpec& spec, int N, const QuadRule& rule, double pivot_tol = 1e-12) {
  if (N < 0) throw PreconditionError("gram degree must be >= 0");
  const ScaledGram sg = gram_matrix(spec, N, rule);
  auto stable = [&](int k) {
    Eigen::LLT<Eigen::MatrixXcd> f(sg.g.topLeftCorner(k + 1, k + 1));
    if (f.info() != Eigen::Success) return false;
    const Eigen::MatrixXcd l = f.matrixL();
    for (int i = 0; i <= k; ++i)
      if (!(std::norm(l(i, i)) > pivot_tol)) return false;
    return true;
  };
  if (!stable(N)) {
    int lo = -1, hi = N;  // stable(lo) or lo = -1; !stable(hi)
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      (stable(mid) ? lo : hi) = mid;
    }
    throw DegreeReductionError("Gram matrix numerically singular beyond degree " + std::to_string(lo), lo);
  }
  const Eigen::MatrixXcd L = Eigen::LLT<Eigen::MatrixXcd>(sg.g).matrixL();
  const Eigen::MatrixXcd linv =
      L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXcd::Identity(N + 1, N + 1));
  std::vector<double> log_scale(N + 1);
  for (int n = 0; n <= N; ++n) log_scale[n] = -0.5 * sg.log_diag[n];
  return KernelModel::gram(spec, N, linv, log_scale);
}

/// Smallest eigenvalue of [K_{z_i}(z_j)] divided by its trace.
inline double kernel_matrix_min_eig(const KernelModel& model, const std::vector<cplx>& pts) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXcd K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K(i, j) = model.eval(pts[j], pts[i]).value.to_complex();
  const Eigen::MatrixXcd H = 0.5 * (K + K.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  return es.eigenvalues().minCoeff() / H.trace().real();
}

// ---------------------------------------------------------------------------
// Estimate checks. Each returns one level; with_refinement stacks levels.

/// rho(r) = K_r(r) omega(r) tau(r)^2 on a radial grid.
inline EstimateReport check_norm_asymptotic(const KernelModel& model, const WeightSpec& spec,
                                            const std::vector<double>& r_grid) {
  EstimateReport rep;
  rep.quantity = "norm_asymptotic";
  rep.headline = EstimateReport::Headline::spread;
  std::vector<double> vals(r_grid.size());
  parallel_for(r_grid.size(), [&](std::size_t i) {
    const cplx z = r_grid[i];
    const double t = spec.tau(z);
    vals[i] = std::exp(kernel_norm_sq(model, z).log_magnitude + spec.log_weight(z) + 2.0 * std::log(t));
  });
  double jump = 1.0;
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    rep.add(r_grid[i], vals[i]);
    if (i > 0) jump = std::max(jump, std::max(vals[i] / vals[i - 1], vals[i - 1] / vals[i]));
  }
  rep.extras["max_adjacent_jump"] = jump;
  rep.finalize();
  return rep;
}

/// Points of D(radius) about z: the centre plus `rings` circles of `per_ring` points.
inline std::vector<cplx> disc_points(cplx z, double radius, int rings, int per_ring) {
  std::vector<cplx> pts{z};
  for (int k = 1; k <= rings; ++k)
    for (int j = 0; j < per_ring; ++j)
      pts.push_back(z + std::polar(radius * k / rings, 2.0 * std::numbers::pi * (j + 0.5 * (k % 2)) / per_ring));
  return pts;
}

/// |K_z(zeta)| / sqrt(K_z(z) K_zeta(zeta)) for zeta in D(delta tau(z)).
inline EstimateReport check_near_diagonal(const KernelModel& model, const WeightSpec& spec, cplx z, double delta,
                                          double m_tau = 0, int rings = 4, int per_ring = 12) {
  if (m_tau > 0 && !(delta < m_tau)) throw PreconditionError("near-diagonal check needs delta < m_tau");
  EstimateReport rep;
  rep.quantity = "near_diagonal";
  rep.headline = EstimateReport::Headline::min;
  const auto pts = disc_points(z, delta * spec.tau(z), rings, per_ring);
  const double kzz = kernel_norm_sq(model, z).log_magnitude;
  std::vector<double> vals(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const double k = model.eval(z, pts[i]).value.log_magnitude;
    vals[i] = std::exp(k - 0.5 * (kzz + kernel_norm_sq(model, pts[i]).log_magnitude));
  });
  for (std::size_t i = 0; i < pts.size(); ++i) rep.add(z, pts[i], vals[i]);
  rep.finalize();
  return rep;
}

/// Pairs (z, xi) from a polar lattice of radius r_max whose discs D(delta tau) are disjoint.
inline std::vector<std::pair<cplx, cplx>> separated_pairs(const WeightSpec& spec, double delta, double r_max = 0.9,
                                                           int n_r = 9, int n_theta = 12) {
  const auto pts = disk_samples(r_max, n_r, n_theta, 0.0);
  std::vector<std::pair<cplx, cplx>> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (std::abs(pts[i] - pts[j]) > delta * (spec.tau(pts[i]) + spec.tau(pts[j]))) out.emplace_back(pts[i], pts[j]);
  return out;
}

/// C_M(z, xi) = |K_z(xi)| tau(z) tau(xi) (omega(z) omega(xi))^{1/2} (|z - xi| / min tau)^M.
inline EstimateReport check_pointwise_decay(const KernelModel& model, const WeightSpec& spec, double M,
                                            const std::vector<std::pair<cplx, cplx>>& pairs, double delta) {
  for (auto [z, xi] : pairs)
    if (!(std::abs(z - xi) > delta * (spec.tau(z) + spec.tau(xi))))
      throw PreconditionError("pointwise decay pair lies in the near-diagonal region");
  EstimateReport rep;
  rep.quantity = "pointwise_decay";
  std::vector<double> vals(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto [z, xi] = pairs[i];
    const double tz = spec.tau(z), tx = spec.tau(xi);
    const double lk = model.eval(z, xi).value.log_magnitude;
    vals[i] = std::exp(lk + std::log(tz) + std::log(tx) + 0.5 * (spec.log_weight(z) + spec.log_weight(xi)) +
                       M * std::log(std::abs(z - xi) / std::min(tz, tx)));
  });
  for (std::size_t i = 0; i < pairs.size(); ++i) rep.add(pairs[i].first, pairs[i].second, vals[i]);
  rep.finalize();
  return rep;
}

/// I(z) = omega(z)^{1/2} tau(z)^{-beta} int |K_z(xi)| omega(xi)^{1/2} tau(xi)^beta dA(xi),
/// where omega is the model's weight.
inline EstimateReport check_integral_estimate(const KernelModel& model, const std::vector<cplx>& z_samples,
                                              double beta, const QuadRule& rule) {
  const WeightSpec& spec = model.weight();
  EstimateReport rep;
  rep.quantity = "integral_estimate";
  std::vector<double> factor(rule.size());
  parallel_for(rule.size(), [&](std::size_t i) {
    const cplx x = rule.nodes[i];
    factor[i] = 0.5 * spec.log_weight(x) + beta * std::log(spec.tau(x));
  });
  for (cplx z : z_samples) {
    const auto a = model.coefficients(z, rule.r_max);
    const SeriesOnRule k = eval_series_on_rule(rule, a);
    const auto res = integrate_nodes(rule, [&](std::size_t i) {
      const LogComplex& v = k.values.values[i];
      return v.zero ? LogComplex{} : LogComplex::from_polar_log(v.log_magnitude + factor[i], 0.0);
    });
    const double val = std::exp(res.log_value.log_magnitude + 0.5 * spec.log_weight(z) - beta * std::log(spec.tau(z)));
    rep.add(z, val);
  }
  rep.finalize();
  return rep;
}

/// M(z) = |f(z)|^p omega(z)^beta (delta tau(z))^2 / int_{D(delta tau(z))} |f|^p omega^beta dA,
/// the disc integral taken on a local polar rule.
inline EstimateReport check_submean(const WeightSpec& spec, const std::function<double(cplx)>& log_abs_f, double p,
                                    double beta, double delta, const std::vector<cplx>& z_samples,
                                    double m_tau = 0, int panels = 4, int gl = 8, int angular = 32) {
  if (m_tau > 0 && !(delta < m_tau)) throw PreconditionError("sub-mean check needs delta < m_tau");
  if (panels * gl * angular < 100) throw ResolutionError("sub-mean disc resolved by fewer than 100 nodes", 100);
  EstimateReport rep;
  rep.quantity = "submean";
  for (cplx z : z_samples) {
    const double R = delta * spec.tau(z);
    if (std::abs(z) + R >= 1.0) throw DomainError("sub-mean disc leaves the unit disk");
    const QuadRule local = build_disc_rule(z, R, panels, gl, angular);
    auto g = [&](cplx x) { return p * log_abs_f(x) + beta * spec.log_weight(x); };
    const auto res = integrate_nodes(local, [&](std::size_t i) { return LogComplex::from_polar_log(g(local.nodes[i]), 0.0); });
    rep.add(z, std::exp(g(z) + 2.0 * std::log(R) - res.log_value.log_magnitude));
  }
  rep.finalize();
  return rep;
}

}  // namespace blab
