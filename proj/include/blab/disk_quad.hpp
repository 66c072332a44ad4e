#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "errors.hpp"
#include "log_real.hpp"
#include "parallel.hpp"

namespace blab {

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

/// Tensor polar rule on the disc of radius r_max about `center`, normalized
/// area measure dA = dx dy / pi. Nodes are ring-major: node = ring * M + j at
/// angle theta_offset + 2 pi j / M.
struct QuadRule {
  cplx center{0.0, 0.0};
  double r_max = 0.99;
  int radial_panels = 0;
  int gl_order = 0;
  int angular_count = 0;
  double theta_offset = 0.0;
  std::vector<double> panel_edges;
  std::vector<double> ring_r;       // ring radii
  std::vector<double> ring_weight;  // weight of each node on the ring
  std::vector<double> cell_lo, cell_hi;  // radial extent of each ring's cells
  std::vector<cplx> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
  std::size_t ring_count() const { return ring_r.size(); }
  std::size_t ring_of(std::size_t node) const { return node / static_cast<std::size_t>(angular_count); }
  /// z^m conj(z)^n (about the center) integrate exactly for m + n <= degree().
  int degree() const { return std::min(2 * gl_order - 2, angular_count - 1); }
};

/// Last-panel width of the geometric grading.
inline double default_edge_width(double r_max) { return std::max(0.5 * (1.0 - r_max), 0.005); }

inline QuadRule rule_from_edges(std::vector<double> edges, int gl_order, int angular_count, cplx center,
                                double theta_offset) {
  QuadRule rule;
  rule.center = center;
  rule.r_max = edges.back();
  rule.radial_panels = static_cast<int>(edges.size()) - 1;
  rule.gl_order = gl_order;
  rule.angular_count = angular_count;
  rule.theta_offset = theta_offset;
  rule.panel_edges = std::move(edges);
  std::vector<double> gx, gw;
  gauss_legendre(gl_order, gx, gw);
  const double dtheta_norm = 2.0 / angular_count;  // (2 pi / M) / pi
  for (int p = 0; p < rule.radial_panels; ++p) {
    const double a = rule.panel_edges[p], b = rule.panel_edges[p + 1];
    double cum = 0;
    for (int k = 0; k < gl_order; ++k) {
      rule.cell_lo.push_back(a + 0.5 * (b - a) * cum);
      cum += gw[k];
      rule.cell_hi.push_back(k + 1 == gl_order ? b : a + 0.5 * (b - a) * cum);
      const double r = 0.5 * (a + b) + 0.5 * (b - a) * gx[k];
      rule.ring_r.push_back(r);
      rule.ring_weight.push_back(0.5 * (b - a) * gw[k] * r * dtheta_norm);
    }
  }
  rule.nodes.reserve(rule.ring_r.size() * angular_count);
  rule.weights.reserve(rule.ring_r.size() * angular_count);
  for (std::size_t i = 0; i < rule.ring_r.size(); ++i)
    for (int j = 0; j < angular_count; ++j) {
      rule.nodes.push_back(center + std::polar(rule.ring_r[i], theta_offset + 2.0 * std::numbers::pi * j / angular_count));
      rule.weights.push_back(rule.ring_weight[i]);
    }
  return rule;
}

/// Panel widths grow geometrically away from r_max: w_k = w_last s^(P-1-k),
/// with s >= 1 fixed by sum w_k = r_max.
inline std::vector<double> graded_edges(int panels, double r_max, double w_last) {
  std::vector<double> edges{0.0};
  if (panels == 1 || w_last * panels >= r_max) {
    for (int k = 1; k <= panels; ++k) edges.push_back(r_max * k / panels);
    return edges;
  }
  auto total = [&](double s) {
    double sum = 0, w = w_last;
    for (int k = 0; k < panels; ++k, w *= s) sum += w;
    return sum;
  };
  double lo = 1.0, hi = 2.0;
  while (total(hi) < r_max) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < r_max ? lo : hi) = mid;
  }
  double r = r_max;
  std::vector<double> rev{r_max};
  double w = w_last;
  for (int k = 0; k < panels - 1; ++k, w *= hi) rev.push_back(r -= w);
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) edges.push_back(*it);
  return edges;
}

/// Global rule on {|z| <= r_max}, panels graded geometrically toward r_max so
/// the last panel has width default_edge_width(r_max). r_max = 1 is accepted
/// for integrands bounded up to the circle (Gauss nodes stay interior).
inline QuadRule build_rule(int radial_panels, int gl_order, int angular_count, double r_max,
                           std::optional<double> edge_width = std::nullopt) {
  if (!(r_max > 0 && r_max <= 1.0)) throw QuadratureError("r_max must lie in (0, 1]");
  if (radial_panels < 1 || gl_order < 1 || angular_count < 1)
    throw QuadratureError("rule counts must be >= 1");
  const double w_last = edge_width.value_or(default_edge_width(r_max));
  return rule_from_edges(graded_edges(radial_panels, r_max, w_last), gl_order, angular_count, 0.0, 0.0);
}

/// Local polar rule on the disc D(center, radius) with uniform panels.
inline QuadRule build_disc_rule(cplx center, double radius, int panels, int gl_order, int angular_count,
                                double theta_offset = 0.0) {
  if (!(radius > 0)) throw QuadratureError("disc rule needs a positive radius");
  if (panels < 1 || gl_order < 1 || angular_count < 1) throw QuadratureError("rule counts must be >= 1");
  std::vector<double> edges;
  for (int k = 0; k <= panels; ++k) edges.push_back(radius * k / panels);
  return rule_from_edges(std::move(edges), gl_order, angular_count, center, theta_offset);
}

/// The same rule family with radial panels and angular count doubled.
inline QuadRule refine(const QuadRule& rule) {
  if (rule.center == cplx(0.0, 0.0) && rule.panel_edges.front() == 0.0 && rule.radial_panels > 1) {
    const double w_last = rule.panel_edges.back() - rule.panel_edges[rule.panel_edges.size() - 2];
    return build_rule(2 * rule.radial_panels, rule.gl_order, 2 * rule.angular_count, rule.r_max, w_last / 2);
  }
  return build_disc_rule(rule.center, rule.r_max, 2 * rule.radial_panels, rule.gl_order, 2 * rule.angular_count,
                         rule.theta_offset);
}

/// Node values as (log magnitude, phase). `evaluator`, when present, gives
/// the same function at arbitrary points.
struct SampledFn {
  enum class Origin { closed_form, grid_data };
  std::vector<LogComplex> values;
  Origin origin = Origin::grid_data;
  std::function<LogComplex(cplx)> evaluator;

  std::size_t size() const { return values.size(); }
  const LogComplex& operator[](std::size_t i) const { return values[i]; }
  LogComplex& operator[](std::size_t i) { return values[i]; }

  LogComplex at(cplx z) const {
    if (!evaluator) throw ModeError("sampled function has no closed form");
    return evaluator(z);
  }
};

inline SampledFn sample(const QuadRule& rule, std::function<LogComplex(cplx)> fn) {
  SampledFn out;
  out.values.resize(rule.size());
  parallel_for(rule.size(), [&](std::size_t i) { out.values[i] = fn(rule.nodes[i]); });
  out.origin = SampledFn::Origin::closed_form;
  out.evaluator = std::move(fn);
  return out;
}

inline SampledFn sample_complex(const QuadRule& rule, std::function<cplx(cplx)> fn) {
  return sample(rule, [fn = std::move(fn)](cplx z) { return LogComplex::from_complex(fn(z)); });
}

struct IntegralResult {
  LogComplex log_value;
  cplx value;
  double error_estimate = -1;  // |I(rule) - I(refined)|, when requested
};

namespace detail {
inline void check_finite(const LogComplex& v, const QuadRule& rule, std::size_t i) {
  if (v.zero) return;
  if (std::isnan(v.log_magnitude) || std::isnan(v.phase) || (std::isinf(v.log_magnitude) && v.log_magnitude > 0)) {
    const cplx z = rule.nodes[i];
    throw IntegrationError("integrand is not finite at node " + std::to_string(i) + " (z = " +
                               std::to_string(z.real()) + " + " + std::to_string(z.imag()) + "i)",
                           i);
  }
}
}  // namespace detail

/// Log-domain quadrature of a node-indexed integrand.
template <class Integrand>
IntegralResult integrate_nodes(const QuadRule& rule, Integrand&& integrand) {
  const std::size_t rings = rule.ring_count();
  const std::size_t M = static_cast<std::size_t>(rule.angular_count);
  std::vector<ScaledSum> partial(rings);
  parallel_for(rings, [&](std::size_t r) {
    ScaledSum s;
    const double lw = std::log(rule.ring_weight[r]);
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t i = r * M + j;
      LogComplex v = integrand(i);
      detail::check_finite(v, rule, i);
      if (!v.zero) s.add_scaled(std::polar(1.0, v.phase), v.log_magnitude + lw);
    }
    partial[r] = s;
  });
  ScaledSum total;
  for (const auto& p : partial) total.add(p.result());
  IntegralResult res;
  res.log_value = total.result();
  res.value = res.log_value.to_complex();
  return res;
}

inline IntegralResult integrate(const QuadRule& rule, const SampledFn& f) {
  if (f.size() != rule.size()) throw QuadratureError("sampled function does not match the rule");
  return integrate_nodes(rule, [&](std::size_t i) { return f.values[i]; });
}

/// Integrand given by point; `refined` adds a one-level refinement error estimate.
inline IntegralResult integrate(const QuadRule& rule, const std::function<LogComplex(cplx)>& fn,
                                bool refined = false) {
  IntegralResult res = integrate_nodes(rule, [&](std::size_t i) { return fn(rule.nodes[i]); });
  if (refined) {
    const QuadRule fine = refine(rule);
    const IntegralResult r2 = integrate_nodes(fine, [&](std::size_t i) { return fn(fine.nodes[i]); });
    res.error_estimate = std::abs(r2.value - res.value);
  }
  return res;
}

struct RegionIntegral {
  IntegralResult integral;
  std::size_t node_count = 0;
};

/// Fraction of the quadrature cell of `node` where `predicate` holds,
/// from an 8 x 8 sub-sample when the cell straddles the region boundary.
inline double cell_fraction(const QuadRule& rule, std::size_t node, const std::function<bool(cplx)>& predicate) {
  const std::size_t ring = rule.ring_of(node);
  const int j = static_cast<int>(node % rule.angular_count);
  const double r0 = rule.cell_lo[ring], r1 = rule.cell_hi[ring];
  const double dth = 2.0 * std::numbers::pi / rule.angular_count;
  const double th = rule.theta_offset + dth * j;
  auto at = [&](double u, double v) {
    return predicate(rule.center + std::polar(r0 + (r1 - r0) * u, th + dth * (v - 0.5)));
  };
  const bool c = predicate(rule.nodes[node]);
  if (at(0, 0) == c && at(1, 0) == c && at(0, 1) == c && at(1, 1) == c && at(0.5, 0) == c && at(0.5, 1) == c &&
      at(0, 0.5) == c && at(1, 0.5) == c)
    return c ? 1.0 : 0.0;
  constexpr int k = 8;
  double inside = 0, total = 0;
  for (int a = 0; a < k; ++a) {
    const double u = (a + 0.5) / k;
    const double area = r0 + (r1 - r0) * u;  // r dr weighting
    for (int b = 0; b < k; ++b) {
      total += area;
      if (at(u, (b + 0.5) / k)) inside += area;
    }
  }
  return inside / total;
}

/// Integral over the region where `predicate` holds. Straddling cells are
/// weighted by their covered fraction. Throws EmptyRegionError when no node
/// lies inside.
inline RegionIntegral integrate_region(const QuadRule& rule, const std::function<bool(cplx)>& predicate,
                                       const std::function<LogComplex(cplx)>& fn) {
  std::vector<double> frac(rule.size());
  parallel_for(rule.size(), [&](std::size_t i) { frac[i] = cell_fraction(rule, i, predicate); });
  std::size_t count = 0;
  for (std::size_t i = 0; i < rule.size(); ++i) count += predicate(rule.nodes[i]) ? 1 : 0;
  if (count == 0) throw EmptyRegionError("region contains no quadrature node");
  RegionIntegral out;
  out.node_count = count;
  out.integral = integrate_nodes(rule, [&](std::size_t i) {
    if (frac[i] == 0.0) return LogComplex{};
    LogComplex v = fn(rule.nodes[i]);
    if (!v.zero) v.log_magnitude += std::log(frac[i]);
    return v;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Ring-wise Fourier machinery. On a ring of radius r the angular trapezoid
// sum of g(xi) conj(xi)^n equals r^n times an entry of the ring DFT, so all
// monomial pairings and power-series evaluations reduce to one FFT per ring.

/// c_n = sum_nodes g(xi) conj(xi - center)^n w(xi), n = 0..n_max.
inline std::vector<LogComplex> monomial_pairings(const QuadRule& rule, const SampledFn& g, int n_max) {
  if (g.size() != rule.size()) throw QuadratureError("sampled function does not match the rule");
  const std::size_t rings = rule.ring_count();
  const int M = rule.angular_count;
  // Per ring: scale s_i and DFT mantissas G_i[k] = sum_j g_ij e^{-2 pi i jk/M} e^{-i k theta_offset}.
  std::vector<double> scale(rings, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<cplx>> spectra(rings);
  parallel_for(rings, [&](std::size_t r) {
    double s = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) {
      const auto& v = g.values[r * M + j];
      if (!v.zero) s = std::max(s, v.log_magnitude);
    }
    scale[r] = s;
    if (std::isinf(s)) return;
    std::vector<cplx> in(M), out;
    for (int j = 0; j < M; ++j) {
      const auto& v = g.values[r * M + j];
      in[j] = v.zero ? cplx(0.0, 0.0) : std::polar(std::exp(v.log_magnitude - s), v.phase);
    }
    Eigen::FFT<double> fft;
    fft.fwd(out, in);
    spectra[r] = std::move(out);
  });
  std::vector<LogComplex> c(static_cast<std::size_t>(n_max) + 1);
  parallel_for(c.size(), [&](std::size_t n) {
    ScaledSum acc;
    const std::size_t k = n % static_cast<std::size_t>(M);
    const cplx twist = std::polar(1.0, -static_cast<double>(n) * rule.theta_offset);
    for (std::size_t r = 0; r < rings; ++r) {
      if (std::isinf(scale[r])) continue;
      const cplx m = spectra[r][k] * twist;
      acc.add_scaled(m, scale[r] + std::log(rule.ring_weight[r]) + static_cast<double>(n) * std::log(rule.ring_r[r]));
    }
    c[n] = acc.result();
  });
  return c;
}

struct SeriesOnRule {
  SampledFn values;
  std::vector<char> ring_resolved;  // 1 when the truncated series converged on the ring
  double resolved_radius = 0;       // largest r such that all rings with radius <= r are resolved
};

/// Evaluates sum_n a_n (xi - center)^n at every node of `rule`.
inline SeriesOnRule eval_series_on_rule(const QuadRule& rule, const std::vector<LogComplex>& a,
                                        double tail_log_tol = -37.0) {
  const std::size_t rings = rule.ring_count();
  const int M = rule.angular_count;
  const std::size_t N = a.size();
  SeriesOnRule out;
  out.values.values.resize(rule.size());
  out.ring_resolved.assign(rings, 0);
  parallel_for(rings, [&](std::size_t r) {
    const double lr = std::log(rule.ring_r[r]);
    double s = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < N; ++n)
      if (!a[n].zero) s = std::max(s, a[n].log_magnitude + n * lr);
    if (std::isinf(s)) {
      out.ring_resolved[r] = 1;
      return;
    }
    std::vector<cplx> folded(M, 0.0);
    double tail = -std::numeric_limits<double>::infinity();
    const std::size_t tail_start = N - std::max<std::size_t>(N / 20, 1);
    for (std::size_t n = 0; n < N; ++n) {
      if (a[n].zero) continue;
      const double lm = a[n].log_magnitude + n * lr - s;
      if (n >= tail_start) tail = std::max(tail, lm);
      if (lm < -745) continue;
      folded[n % M] += std::polar(std::exp(lm), a[n].phase + n * rule.theta_offset);
    }
    out.ring_resolved[r] = tail < tail_log_tol ? 1 : 0;
    // values_j = sum_k folded[k] e^{2 pi i jk / M} = M * ifft.
    std::vector<cplx> vals;
    Eigen::FFT<double> fft;
    fft.inv(vals, folded);
    for (int j = 0; j < M; ++j) {
      const cplx v = vals[j] * static_cast<double>(M);
      out.values.values[r * M + j] =
          v == cplx(0.0, 0.0) ? LogComplex{} : LogComplex::from_polar_log(std::log(std::abs(v)) + s, std::arg(v));
    }
  });
  out.resolved_radius = 0;
  for (std::size_t r = 0; r < rings; ++r) {
    if (!out.ring_resolved[r]) break;
    out.resolved_radius = rule.ring_r[r];
  }
  return out;
}

/// Evaluates sum_n a_n z^n at one point, log-domain accumulation.
inline LogComplex eval_series(const std::vector<LogComplex>& a, cplx z) {
  ScaledSum acc;
  if (z == cplx(0.0, 0.0)) {
    if (!a.empty()) acc.add(a[0]);
    return acc.result();
  }
  const double lr = std::log(std::abs(z));
  const double th = std::arg(z);
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n].zero) continue;
    acc.add(LogComplex::from_polar_log(a[n].log_magnitude + n * lr, a[n].phase + n * th));
  }
  return acc.result();
}

}  // namespace blab
