#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "covering.hpp"
#include "kernel.hpp"
#include "projection.hpp"
#include "report.hpp"

namespace blab {

/// sum_n a_n z^n stored as c_n = a_n r^n e^{-s}, evaluated by Horner in z / r.
class ScaledSeries {
 public:
  ScaledSeries() = default;
  ScaledSeries(const std::vector<LogComplex>& a, double r_eval, double extra_log = 0.0) : r_(r_eval) {
    if (!(r_eval > 0)) throw PreconditionError("series radius must be positive");
    const double lr = std::log(r_eval);
    double top = -INFINITY;
    for (std::size_t n = 0; n < a.size(); ++n)
      if (!a[n].zero) top = std::max(top, a[n].log_magnitude + n * lr);
    log_scale_ = std::isfinite(top) ? top : 0.0;
    c_.resize(a.size());
    for (std::size_t n = 0; n < a.size(); ++n)
      c_[n] = a[n].zero ? cplx(0.0) : std::polar(std::exp(a[n].log_magnitude + n * lr - log_scale_), a[n].phase);
    log_scale_ += extra_log;
  }

  double radius() const { return r_; }
  double log_scale() const { return log_scale_; }
  std::size_t terms() const { return c_.size(); }

  /// Value times exp(-log_scale()).
  cplx scaled(cplx z) const {
    const cplx u = z / r_;
    cplx s = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) s = s * u + *it;
    return s;
  }

  LogComplex operator()(cplx z) const {
    if (std::abs(z) > r_ * (1 + 1e-12)) throw ResolutionError("series evaluated outside its radius");
    LogComplex v = LogComplex::from_complex(scaled(z));
    if (!v.zero) v.log_magnitude += log_scale_;
    return v;
  }

 private:
  std::vector<cplx> c_;
  double r_ = 1;
  double log_scale_ = 0;
};

/// h_a = K_a / ||K_a||, resolved on |z| <= r_eval.
class NormalizedKernel {
 public:
  NormalizedKernel(const KernelModel& model, cplx a, double r_eval)
      : a_(a),
        log_norm_(0.5 * kernel_norm_sq(model, a).log_magnitude),
        series_(model.coefficients(a, r_eval), r_eval, -log_norm_) {}

  cplx center() const { return a_; }
  double radius() const { return series_.radius(); }
  /// log ||K_a||.
  double log_norm() const { return log_norm_; }
  LogComplex operator()(cplx z) const { return series_(z); }

 private:
  cplx a_;
  double log_norm_;
  ScaledSeries series_;
};

inline NormalizedKernel normalized_kernel(const KernelModel& model, cplx a, double r_eval = 0.99) {
  return NormalizedKernel(model, a, r_eval);
}

/// ||h||^2 in A^2(omega) on the rule.
inline double normalized_norm_sq(const NormalizedKernel& h, const WeightSpec& spec, const QuadRule& rule) {
  return integrate_nodes(rule, [&](std::size_t i) {
           const LogComplex v = h(rule.nodes[i]);
           return v.zero ? LogComplex{} : LogComplex::from_polar_log(2 * v.log_magnitude + spec.log_weight(rule.nodes[i]), 0.0);
         })
      .value.real();
}

/// |h_a(z)| tau(z) omega(z)^{1/2} on D(delta tau(a)).
inline EstimateReport check_normalized_near_diagonal(const NormalizedKernel& h, const WeightSpec& spec, double delta,
                                                     int rings = 4, int per_ring = 12) {
  EstimateReport rep;
  rep.quantity = "normalized_near_diagonal";
  rep.headline = EstimateReport::Headline::spread;
  for (cplx z : disc_points(h.center(), delta * spec.tau(h.center()), rings, per_ring))
    rep.add(h.center(), z, std::exp(h(z).log_magnitude + std::log(spec.tau(z)) + 0.5 * spec.log_weight(z)));
  rep.finalize();
  return rep;
}

/// |h_a(z)| tau(z) omega(z)^{1/2} (|z - a| / min(tau(z), tau(a)))^M over (a, z) pairs.
inline EstimateReport check_normalized_decay(const KernelModel& model, const WeightSpec& spec, double M,
                                             const std::vector<std::pair<cplx, cplx>>& pairs) {
  EstimateReport rep;
  rep.quantity = "normalized_decay";
  std::vector<double> vals(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto [a, z] = pairs[i];
    const double ta = spec.tau(a), tz = spec.tau(z);
    const double lh = model.eval(a, z).value.log_magnitude - 0.5 * kernel_norm_sq(model, a).log_magnitude;
    vals[i] = std::exp(lh + std::log(tz) + 0.5 * spec.log_weight(z) + M * std::log(std::abs(z - a) / std::min(ta, tz)));
  });
  for (std::size_t i = 0; i < pairs.size(); ++i) rep.add(pairs[i].first, pairs[i].second, vals[i]);
  rep.finalize();
  return rep;
}

/// e^L / h(zeta) = sum_k t_k ((zeta - a) / rho)^k on D(a, rho), L = log |h(a)|.
struct InverseTaylor {
  cplx a;
  double rho = 0;
  double log_scale = 0;
  std::vector<cplx> t;

  cplx scaled(cplx zeta) const {
    const cplx u = (zeta - a) / rho;
    cplx s = 0;
    for (auto it = t.rbegin(); it != t.rend(); ++it) s = s * u + *it;
    return s;
  }
};

/// Taylor coefficients from samples on |zeta - a| = radius_factor * rho.
inline InverseTaylor inverse_taylor(const NormalizedKernel& h, double rho, int samples = 32,
                                    double radius_factor = 2.5) {
  InverseTaylor out;
  out.a = h.center();
  out.rho = rho;
  const LogComplex ha = h(out.a);
  if (ha.zero) throw DivisionGuardError("normalized kernel vanishes at its centre", out.a);
  out.log_scale = ha.log_magnitude;
  const double R = radius_factor * rho;
  std::vector<cplx> vals(samples);
  for (int m = 0; m < samples; ++m) {
    const cplx zeta = out.a + std::polar(R, 2.0 * std::numbers::pi * m / samples);
    const LogComplex v = h(zeta);
    if (v.zero) throw DivisionGuardError("normalized kernel vanishes near its centre", zeta);
    vals[m] = std::polar(std::exp(out.log_scale - v.log_magnitude), -v.phase);
  }
  out.t.resize(samples);
  for (int k = 0; k < samples; ++k) {
    cplx s = 0;
    for (int m = 0; m < samples; ++m) s += vals[m] * std::polar(1.0, -2.0 * std::numbers::pi * k * m / samples);
    out.t[k] = s / double(samples) * std::pow(1.0 / radius_factor, k);
  }
  for (int k = 0; k < 4; ++k) {
    const cplx zeta = out.a + std::polar(rho, std::numbers::pi * (0.25 + 0.5 * k));
    const LogComplex v = h(zeta);
    const cplx prod = out.scaled(zeta) * std::polar(std::exp(v.log_magnitude - out.log_scale), v.phase);
    if (!(std::abs(prod - 1.0) < 1e-8)) throw DivisionGuardError("inverse series of the normalized kernel fails on its disc", zeta);
  }
  return out;
}

/// Nodes and weights for dA = dx dy / pi on {|z| <= r_max}: Gauss-Legendre panels of
/// width about gl delta1 tau(r) / density and rings of about 2 pi r density / (delta1 tau(r)) nodes.
struct PointRule {
  std::vector<cplx> nodes;
  std::vector<double> weights;
  double r_max = 0;
  std::size_t size() const { return nodes.size(); }
};

inline PointRule tau_rule(const WeightSpec& spec, double delta1, double r_max, double density, int gl = 4) {
  PointRule rule;
  rule.r_max = r_max;
  std::vector<double> x, w;
  gauss_legendre(gl, x, w);
  double lo = 0;
  while (lo < r_max) {
    const double width = gl * delta1 * spec.tau(cplx(lo, 0.0)) / density;
    double hi = std::min(lo + width, r_max);
    if (r_max - hi < 0.25 * width) hi = r_max;
    for (int k = 0; k < gl; ++k) {
      const double r = lo + 0.5 * (hi - lo) * (x[k] + 1.0), wr = 0.5 * (hi - lo) * w[k];
      const double h = delta1 * spec.tau(cplx(r, 0.0)) / density;
      const int n = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / h)));
      for (int j = 0; j < n; ++j) {
        rule.nodes.push_back(std::polar(r, 2.0 * std::numbers::pi * (j + 0.5) / n));
        rule.weights.push_back(2.0 * r * wr / n);
      }
    }
    lo = hi;
  }
  return rule;
}

struct DbarOptions {
  int panels = 8, gl = 16, angles = 128;
  int taylor_samples = 32;
  double norm_density = 2.0;

  int modes() const { return angles / 2 - 1; }

  DbarOptions refined() const {
    DbarOptions o = *this;
    o.panels *= 2;
    o.angles *= 2;
    o.norm_density *= 2;
    return o;
  }
};

/// u = sum_j S_j f with S_j f(z) = h_j(z) int f chi_j / ((z - zeta) h_j(zeta)) dA(zeta),
/// so that dbar u = f.
///
/// Per disc the data g = f chi_j e^L / h_j is expanded as sum_m g_m(s) e^{i m phi} about a_j.
/// For z = a_j + t e^{i psi},
///   int g / (z - zeta) dA = 2 sum_{k>=0} [e^{-i(k+1)psi} A_k(t) - e^{i k psi} B_k(t)],
///   A_k(t) = int_0^t g_{-k}(s) (s/t)^{k+1} ds,  B_k(t) = int_t^rho g_{k+1}(s) (t/s)^k ds,
/// which is the multipole expansion once t >= rho.
class DbarSolver {
 public:
  DbarSolver(const Covering& cov, const PartitionOfUnity& pou, const KernelModel& model,
             std::function<cplx(cplx)> f, double support_radius, double eval_radius, DbarOptions opt = {})
      : pou_(&pou), f_(std::move(f)), opt_(opt), eval_radius_(eval_radius) {
    if (support_radius > cov.r_max) throw PreconditionError("dbar: data support exceeds the covering");
    if (opt_.angles < 8 || opt_.panels < 1 || opt_.gl < 2) throw PreconditionError("dbar: rule too coarse");
    gauss_legendre(opt_.gl, x_, w_);
    bary_.assign(opt_.gl, 1.0);
    for (int i = 0; i < opt_.gl; ++i)
      for (int k = 0; k < opt_.gl; ++k)
        if (k != i) bary_[i] /= x_[i] - x_[k];
    std::vector<int> ids;
    for (std::size_t j = 0; j < cov.size(); ++j)
      if (std::abs(cov.centers[j]) - cov.radii[j] < support_radius) ids.push_back(static_cast<int>(j));
    discs_.resize(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
      const int j = ids[i];
      const cplx a = cov.centers[j];
      const double rho = cov.radii[j];
      const double r_eval = std::max(eval_radius, std::abs(a) + 2.5 * rho);
      if (r_eval >= 1) throw DomainError("dbar: evaluation radius leaves the disk");
      NormalizedKernel h(model, a, r_eval);
      InverseTaylor inv = inverse_taylor(h, rho, opt_.taylor_samples);
      discs_[i] = std::make_unique<Disc>(Disc{j, a, rho, std::move(h), std::move(inv), {}, {}, {}});
      expand(*discs_[i]);
    });
  }

  std::size_t disc_count() const { return discs_.size(); }
  const DbarOptions& options() const { return opt_; }

  cplx operator()(cplx z) const {
    if (std::abs(z) > eval_radius_ * (1 + 1e-12)) throw ResolutionError("dbar: evaluation outside the solver radius");
    cplx u = 0;
    for (const auto& d : discs_) {
      const LogComplex hz = d->h(z);
      if (hz.zero) continue;
      const cplx scale = std::polar(std::exp(hz.log_magnitude - d->inv.log_scale), hz.phase);
      u += scale * cauchy(*d, z);
    }
    return u;
  }

  std::vector<cplx> evaluate(const std::vector<cplx>& pts) const {
    std::vector<cplx> out(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) { out[i] = (*this)(pts[i]); });
    return out;
  }

 private:
  struct Disc {
    int j;
    cplx a;
    double rho;
    NormalizedKernel h;
    InverseTaylor inv;
    std::vector<cplx> gm;        // [node][m + K], m in [-K, K + 1]
    std::vector<cplx> A_edge;    // [edge][k]
    std::vector<cplx> B_edge;    // [edge][k]
  };

  int K() const { return opt_.modes(); }
  int width() const { return 2 * K() + 2; }

  cplx g(const Disc& d, cplx zeta) const {
    const double c = pou_->chi(d.j, zeta);
    if (c == 0) return 0;
    return f_(zeta) * c * d.inv.scaled(zeta);
  }

  double node_s(const Disc& d, int panel, int i) const {
    const double h = d.rho / opt_.panels;
    return h * (panel + 0.5 * (x_[i] + 1.0));
  }

  void expand(Disc& d) const {
    const int P = opt_.panels, n = opt_.gl, Na = opt_.angles, Kk = K(), W = width();
    Eigen::FFT<double> fft;
    std::vector<cplx> ring(Na), spec(Na);
    d.gm.assign(static_cast<std::size_t>(P) * n * W, 0.0);
    for (int l = 0; l < P; ++l)
      for (int i = 0; i < n; ++i) {
        const double s = node_s(d, l, i);
        for (int q = 0; q < Na; ++q) ring[q] = g(d, d.a + std::polar(s, 2.0 * std::numbers::pi * q / Na));
        fft.fwd(spec, ring);
        cplx* row = &d.gm[(static_cast<std::size_t>(l) * n + i) * W];
        for (int m = -Kk; m <= Kk + 1; ++m) row[m + Kk] = spec[(m + Na) % Na] / double(Na);
      }
    const double h = d.rho / P;
    d.A_edge.assign(static_cast<std::size_t>(P + 1) * Kk, 0.0);
    d.B_edge.assign(static_cast<std::size_t>(P + 1) * Kk, 0.0);
    for (int l = 0; l < P; ++l) {
      const double lo = l * h, hi = lo + h;
      for (int k = 0; k < Kk; ++k) {
        cplx acc = std::pow(lo / hi, k + 1) * d.A_edge[l * Kk + k];
        for (int i = 0; i < n; ++i) {
          const double s = node_s(d, l, i);
          acc += 0.5 * h * w_[i] * mode(d, l, i, -k) * std::pow(s / hi, k + 1);
        }
        d.A_edge[(l + 1) * Kk + k] = acc;
      }
    }
    for (int l = P - 1; l >= 0; --l) {
      const double lo = l * h, hi = lo + h;
      for (int k = 0; k < Kk; ++k) {
        cplx acc = std::pow(lo / hi, k) * d.B_edge[(l + 1) * Kk + k];
        for (int i = 0; i < n; ++i) {
          const double s = node_s(d, l, i);
          acc += 0.5 * h * w_[i] * mode(d, l, i, k + 1) * std::pow(lo / s, k);
        }
        d.B_edge[l * Kk + k] = acc;
      }
    }
  }

  cplx mode(const Disc& d, int panel, int i, int m) const {
    return d.gm[(static_cast<std::size_t>(panel) * opt_.gl + i) * width() + m + K()];
  }

  /// Lagrange weights at y in [-1, 1] for the panel's Gauss-Legendre nodes.
  void lagrange(double y, std::vector<double>& out) const {
    const int n = opt_.gl;
    out.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      if (y == x_[i]) {
        out[i] = 1.0;
        return;
      }
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      out[i] = bary_[i] / (y - x_[i]);
      sum += out[i];
    }
    for (double& v : out) v /= sum;
  }

  /// int_{D(a, rho)} g(zeta) / (z - zeta) dA(zeta).
  cplx cauchy(const Disc& d, cplx z) const {
    const int Kk = K(), P = opt_.panels, n = opt_.gl;
    const cplx v = z - d.a;
    const double t = std::abs(v), psi = t > 0 ? std::arg(v) : 0.0;
    const cplx e_psi = std::polar(1.0, psi), e_neg = std::conj(e_psi);
    cplx total = 0;
    if (t >= d.rho) {
      const double q = d.rho / t;
      double qk = q;
      cplx ek = e_neg;
      for (int k = 0; k < Kk; ++k) {
        total += ek * (qk * d.A_edge[P * Kk + k]);
        qk *= q;
        ek *= e_neg;
      }
      return 2.0 * total;
    }
    const double h = d.rho / P;
    const int l = std::min(P - 1, static_cast<int>(t / h));
    const double lo = l * h, hi = lo + h;
    static thread_local std::vector<double> lag;
    std::vector<cplx> A(Kk), B(Kk);
    for (int k = 0; k < Kk; ++k) {
      A[k] = t > 0 ? std::pow(lo / t, k + 1) * d.A_edge[l * Kk + k] : cplx(0.0);
      B[k] = std::pow(t / hi, k) * d.B_edge[(l + 1) * Kk + k];
    }
    auto sub = [&](double from, double to, bool inner) {
      if (to <= from) return;
      for (int p = 0; p < n; ++p) {
        const double s = from + 0.5 * (to - from) * (x_[p] + 1.0), wp = 0.5 * (to - from) * w_[p];
        lagrange(2.0 * (s - lo) / h - 1.0, lag);
        for (int k = 0; k < Kk; ++k) {
          cplx gv = 0;
          const int m = inner ? -k : k + 1;
          for (int i = 0; i < n; ++i) gv += lag[i] * mode(d, l, i, m);
          if (inner) A[k] += wp * gv * std::pow(s / t, k + 1);
          else B[k] += wp * gv * std::pow(t / s, k);
        }
      }
    };
    sub(lo, t, true);
    sub(t, hi, false);
    cplx ek1 = e_neg, ek = 1.0;
    for (int k = 0; k < Kk; ++k) {
      total += ek1 * A[k] - ek * B[k];
      ek1 *= e_neg;
      ek *= e_psi;
    }
    return 2.0 * total;
  }

  const PartitionOfUnity* pou_;
  std::function<cplx(cplx)> f_;
  DbarOptions opt_;
  double eval_radius_;
  std::vector<double> x_, w_, bary_;
  std::vector<std::unique_ptr<Disc>> discs_;
};

struct ResidualReport {
  double sup = 0, l2 = 0, rel_l2 = 0;
  std::size_t points = 0, skipped = 0;

  nlohmann::json to_json() const {
    return {{"sup", sup}, {"l2", l2}, {"rel_l2", rel_l2}, {"points", points}, {"skipped", skipped}};
  }
};

/// Fourth-order central differences for dbar u with step step_fraction * tau(z),
/// compared with f. Points whose stencil leaves |z| < domain_radius are skipped.
template <class U, class F>
ResidualReport dbar_residual(U&& u, F&& f, const std::vector<cplx>& pts, const WeightSpec& spec,
                             double domain_radius, double step_fraction = 1.0 / 40) {
  std::vector<double> err(pts.size(), -1.0), ref(pts.size(), 0.0);
  parallel_for(pts.size(), [&](std::size_t i) {
    const cplx z = pts[i];
    const double h = step_fraction * spec.tau(z);
    if (std::abs(z) + 2 * h >= domain_radius) return;
    auto d = [&](cplx e) { return (-u(z + 2.0 * e) + 8.0 * u(z + e) - 8.0 * u(z - e) + u(z - 2.0 * e)) / (12.0 * h); };
    const cplx dbar = 0.5 * (d(cplx(h, 0)) + cplx(0, 1) * d(cplx(0, h)));
    const cplx fz = f(z);
    err[i] = std::abs(dbar - fz);
    ref[i] = std::abs(fz);
  });
  ResidualReport rep;
  double e2 = 0, f2 = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (err[i] < 0) {
      ++rep.skipped;
      continue;
    }
    ++rep.points;
    rep.sup = std::max(rep.sup, err[i]);
    e2 += err[i] * err[i];
    f2 += ref[i] * ref[i];
  }
  if (rep.points > 0) rep.l2 = std::sqrt(e2 / rep.points);
  rep.rel_l2 = f2 > 0 ? std::sqrt(e2 / f2) : rep.l2;
  return rep;
}

/// ||u||_{L^p(omega_*^{p/2})} / ||f tau||_{L^p(omega_*^{p/2})} on the rule.
inline double lp_ratio(const PointRule& rule, const std::vector<cplx>& u, const std::vector<cplx>& f,
                       const WeightSpec& spec_star, double p) {
  std::vector<double> num, den;
  num.reserve(rule.size());
  den.reserve(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const cplx z = rule.nodes[i];
    const double lw = 0.5 * spec_star.log_weight(z), lt = std::log(spec_star.tau(z));
    const double lw_node = std::log(rule.weights[i]);
    if (std::abs(u[i]) > 0) num.push_back(std::isinf(p) ? std::log(std::abs(u[i])) + lw
                                                        : p * (std::log(std::abs(u[i])) + lw) + lw_node);
    if (std::abs(f[i]) > 0) den.push_back(std::isinf(p) ? std::log(std::abs(f[i])) + lt + lw
                                                        : p * (std::log(std::abs(f[i])) + lt + lw) + lw_node);
  }
  if (den.empty()) throw PreconditionError("lp_ratio: data vanishes on the rule");
  if (num.empty()) return 0.0;
  if (std::isinf(p)) return std::exp(*std::max_element(num.begin(), num.end()) - *std::max_element(den.begin(), den.end()));
  return std::exp((log_sum_exp(num) - log_sum_exp(den)) / p);
}

struct DbarProblem {
  std::function<cplx(cplx)> f;
  WeightSpec weight_star = WeightSpec::unweighted();
  double p = 2;
  double support_radius = 1;
  std::string label;

  nlohmann::json to_json() const {
    return {{"label", label}, {"weight_star", weight_star.to_json()}, {"p", std::isinf(p) ? -1.0 : p},
            {"support_radius", support_radius}};
  }
};

struct DbarSolution {
  PointRule rule;
  std::vector<cplx> u, f;
  ResidualReport residual;
  double lp_ratio = 0;

  nlohmann::json to_json() const {
    return {{"nodes", rule.size()},   {"residual_sup", residual.sup}, {"residual_l2", residual.l2},
            {"residual_rel_l2", residual.rel_l2}, {"lp_ratio", lp_ratio}};
  }
};

/// Solves on the covering, evaluates u on a tau-adapted rule of radius norm_radius
/// and the residual on `interior`.
inline DbarSolution solve_dbar_S(const DbarProblem& problem, const Covering& cov, const PartitionOfUnity& pou,
                                 const KernelModel& model, const std::vector<cplx>& interior, double norm_radius,
                                 DbarOptions opt = {}) {
  const DbarSolver solver(cov, pou, model, problem.f, problem.support_radius, norm_radius, opt);
  DbarSolution sol;
  sol.rule = tau_rule(problem.weight_star, cov.delta1, norm_radius, opt.norm_density);
  sol.u = solver.evaluate(sol.rule.nodes);
  sol.f.resize(sol.rule.size());
  for (std::size_t i = 0; i < sol.rule.size(); ++i) sol.f[i] = problem.f(sol.rule.nodes[i]);
  sol.residual = dbar_residual(solver, problem.f, interior, problem.weight_star, norm_radius);
  sol.lp_ratio = lp_ratio(sol.rule, sol.u, sol.f, problem.weight_star, problem.p);
  return sol;
}

/// Taylor inverses of every h_{a_j}, reused for G(z, zeta) at many z.
class GKernel {
 public:
  struct Split {
    double near = 0, far = 0;
    double total() const { return near + far; }
  };

  GKernel(const Covering& cov, const PartitionOfUnity& pou, const KernelModel& model, int taylor_samples = 32)
      : cov_(&cov), pou_(&pou), model_(&model), inv_(cov.size()), log_norm_(cov.size()) {
    parallel_for(cov.size(), [&](std::size_t j) {
      const cplx a = cov.centers[j];
      const double r_eval = std::abs(a) + 2.5 * cov.radii[j];
      if (r_eval >= 1) throw DomainError("G kernel: disc too close to the boundary");
      const NormalizedKernel h(model, a, std::max(r_eval, 1e-3));
      inv_[j] = inverse_taylor(h, cov.radii[j], taylor_samples);
      log_norm_[j] = h.log_norm();
    });
  }

  const Covering& covering() const { return *cov_; }

  /// int |G(z, zeta)| dA(zeta) / tau(zeta) over |zeta| <= r_max, split smoothly at delta0 tau(z).
  Split integral(cplx z, const WeightSpec& spec_star, const PointRule& far_rule, int near_radii = 16,
                 int near_angles = 32) const {
    const Covering& cov = *cov_;
    const double R = cov.r_max;
    double reach = R;
    for (cplx a : cov.centers) reach = std::max(reach, std::abs(a));
    const ScaledSeries kz(model_->coefficients(z, reach), reach);
    const double half_lw_z = 0.5 * spec_star.log_weight(z);
    std::vector<cplx> B(cov.size());
    for (std::size_t j = 0; j < cov.size(); ++j) {
      const LogComplex k = kz(cov.centers[j]);
      B[j] = k.zero ? cplx(0.0)
                    : std::polar(std::exp(k.log_magnitude - log_norm_[j] - inv_[j].log_scale + half_lw_z), -k.phase);
    }
    auto F = [&](cplx zeta) {
      static thread_local std::vector<std::pair<int, double>> hit;
      hit.clear();
      double top = -std::numeric_limits<double>::infinity();
      cov.index.for_each_containing(zeta, 1.0, [&](int j, double d) {
        const double u = 2.0 * d / cov.radii[j] - 1.0;
        if (u >= 1) return;
        hit.emplace_back(j, PartitionOfUnity::log_step(u));
        top = std::max(top, hit.back().second);
      });
      if (hit.empty()) return 0.0;
      cplx s = 0;
      double sum_eta = 0;
      for (const auto& [j, le] : hit) {
        const double e2 = std::exp(2.0 * (le - top));
        sum_eta += e2;
        s += B[j] * e2 * inv_[j].scaled(zeta);
      }
      return std::abs(s) / sum_eta * std::exp(-0.5 * spec_star.log_weight(zeta)) / spec_star.tau(zeta);
    };
    const double s = cov.delta0 * spec_star.tau(z);
    auto psi = [&](double dist) { return PartitionOfUnity::step(2.0 * dist / s - 1.0); };

    Split out;
    std::vector<double> xr, wr;
    gauss_legendre(near_radii, xr, wr);
    for (int m = 0; m < near_angles; ++m) {
      const double theta = 2.0 * std::numbers::pi * (m + 0.5) / near_angles;
      const cplx e = std::polar(1.0, theta);
      const double b = z.real() * e.real() + z.imag() * e.imag();
      const double t = std::min(s, -b + std::sqrt(b * b + R * R - std::norm(z)));
      double acc = 0;
      for (int k = 0; k < near_radii; ++k) {
        const double r = 0.5 * t * (xr[k] + 1.0);
        acc += wr[k] * F(z + r * e) * psi(r);
      }
      out.near += 0.5 * t * acc * (2.0 / near_angles);
    }
    std::vector<double> part(far_rule.size(), 0.0);
    parallel_for(far_rule.size(), [&](std::size_t i) {
      const cplx zeta = far_rule.nodes[i];
      const double dist = std::abs(zeta - z);
      const double cut = 1.0 - psi(dist);
      if (cut > 0) part[i] = far_rule.weights[i] * cut * F(zeta) / dist;
    });
    for (double v : part) out.far += v;
    return out;
  }

 private:
  const Covering* cov_;
  const PartitionOfUnity* pou_;
  const KernelModel* model_;
  std::vector<InverseTaylor> inv_;
  std::vector<double> log_norm_;
};

/// Sup over z of int |G(z, .)| dA / tau, with `levels` refinement steps (far rule
/// density and near rule doubled each step).
inline EstimateReport check_G_integral(const GKernel& G, const WeightSpec& spec_star, const std::vector<cplx>& z_samples,
                                       int levels = 2, double density = 4.0, int near_radii = 16, int near_angles = 32) {
  const Covering& cov = G.covering();
  std::vector<GKernel::Split> finest(z_samples.size());
  EstimateReport rep = with_refinement(levels, [&](int level) {
    const double scale = std::pow(2.0, level);
    const PointRule far = tau_rule(spec_star, cov.delta1, cov.r_max, density * scale);
    EstimateReport r;
    r.quantity = "G_integral";
    for (std::size_t i = 0; i < z_samples.size(); ++i) {
      finest[i] = G.integral(z_samples[i], spec_star, far, static_cast<int>(near_radii * scale),
                             static_cast<int>(near_angles * scale));
      r.add(z_samples[i], finest[i].total());
    }
    r.finalize();
    return r;
  });
  double worst_near_share = 0;
  for (const auto& s : finest) worst_near_share = std::max(worst_near_share, s.near / s.total());
  rep.extras["max_near_share"] = worst_near_share;
  rep.extras["multiplicity"] = cov.multiplicity;
  return rep;
}

inline EstimateReport check_G_integral(const Covering& cov, const PartitionOfUnity& pou, const KernelModel& model,
                                       const WeightSpec& spec_star, const std::vector<cplx>& z_samples, int levels = 2) {
  return check_G_integral(GKernel(cov, pou, model), spec_star, z_samples, levels);
}

/// u = f chi - P(f chi), the solution orthogonal to holomorphic functions.
struct MinimalSolution {
  SampledFn u;
  ProjectedFn projected;
  std::function<LogComplex(cplx)> fchi;

  cplx operator()(cplx z) const { return fchi(z).to_complex() - projected(z); }
};

inline MinimalSolution minimal_solution(const SampledFn& fchi, const ProjectionOperator& op_star) {
  if (!fchi.evaluator) throw PreconditionError("minimal_solution needs f chi at arbitrary points");
  const QuadRule& rule = op_star.rule();
  MinimalSolution out;
  out.fchi = fchi.evaluator;
  out.projected = op_star.apply(fchi, rule.r_max);
  const SeriesOnRule pf = out.projected.on_rule(rule);
  out.u.values.resize(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    out.u.values[i] = LogComplex::from_complex(fchi.values[i].to_complex() - pf.values.values[i].to_complex());
  out.u.evaluator = [fc = out.fchi, p = out.projected](cplx z) {
    return LogComplex::from_complex(fc(z).to_complex() - p(z));
  };
  return out;
}

/// |<u, z^k>| / (||u|| ||z^k||) in L^2(omega_*) on the rule.
inline double orthogonality_residual(const MinimalSolution& sol, const ProjectionOperator& op_star, int k) {
  const QuadRule& rule = op_star.rule();
  const SampledFn zk = sample_complex(rule, [k](cplx z) { return std::pow(z, k); });
  const double nu = std::sqrt(pairing(sol.u, sol.u, op_star.spec(), rule).real());
  const double nz = std::sqrt(pairing(zk, zk, op_star.spec(), rule).real());
  if (nu == 0) return 0.0;
  return std::abs(pairing(sol.u, zk, op_star.spec(), rule)) / (nu * nz);
}

}  // namespace blab
