#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kernel.hpp"
#include "projection.hpp"
#include "report.hpp"

namespace blab {

struct LpFit {
  Eigen::VectorXcd coef;
  double objective = 0;  // sum q |y - A coef|^p, or max |y - A coef| for p = inf
  int iterations = 0;
  bool converged = false;
};

namespace detail {
inline Eigen::VectorXcd weighted_ls(const Eigen::MatrixXcd& A, const Eigen::VectorXcd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd s = w.cwiseSqrt();
  return (s.asDiagonal() * A).colPivHouseholderQr().solve(s.asDiagonal() * y);
}

inline double lp_objective(const Eigen::VectorXcd& r, const Eigen::VectorXd& q, double p) {
  double s = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += q[i] * std::pow(std::abs(r[i]), p);
  return s;
}
}  // namespace detail

/// Iteratively reweighted least squares for min_v sum_i q_i |y_i - (A v)_i|^p, p >= 1.
/// Steps for p > 2 are damped by 1/(p - 1); the smoothing eps shrinks geometrically.
inline LpFit irls_lp(const Eigen::MatrixXcd& A, const Eigen::VectorXcd& y, const Eigen::VectorXd& q, double p,
                     const Eigen::VectorXcd& start = {}, int max_iter = 500, double rtol = 1e-11) {
  LpFit fit;
  Eigen::VectorXcd v = start.size() == A.cols() ? start : detail::weighted_ls(A, y, q);
  if (p == 2.0) {
    fit.coef = detail::weighted_ls(A, y, q);
    fit.objective = detail::lp_objective(y - A * fit.coef, q, p);
    fit.converged = true;
    return fit;
  }
  double best = detail::lp_objective(y - A * v, q, p);
  Eigen::VectorXcd best_v = v;
  double scale = (y - A * v).cwiseAbs().maxCoeff();
  double eps = 0.1 * std::max(scale, 1e-300);
  const double eps_floor = 1e-9 * std::max(scale, 1e-300);
  int stale = 0;
  double prev = best;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXcd r = y - A * v;
    Eigen::VectorXd w(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) w[i] = q[i] * std::pow(std::norm(r[i]) + eps * eps, 0.5 * (p - 2.0));
    const Eigen::VectorXcd v_ls = detail::weighted_ls(A, y, w);
    v = p > 2 ? Eigen::VectorXcd(v + (v_ls - v) / (p - 1.0)) : v_ls;
    const double obj = detail::lp_objective(y - A * v, q, p);
    fit.iterations = it + 1;
    if (obj < best * (1 - 1e-15)) {
      best = obj;
      best_v = v;
      stale = 0;
    } else if (++stale >= 100) {
      break;
    }
    if (eps <= eps_floor && std::abs(prev - obj) <= rtol * obj) {
      fit.converged = true;
      break;
    }
    prev = obj;
    eps = std::max(eps_floor, 0.5 * eps);
  }
  fit.coef = best_v;
  fit.objective = best;
  return fit;
}

// ---------------------------------------------------------------------------
// Duality.

struct DualityTrial {
  double ratio = 0;
  double dual_norm = 0;  // lower estimate of ||Lambda_g|| on the subspace
  double g_norm = 0;     // ||g|| in A^{p'}(omega^{p'/2})
  bool converged = false;
};

/// Polynomial subspace of degree < d sampled on a rule, rows scaled by omega^{1/2}.
struct PolySubspace {
  Eigen::MatrixXcd A;
  Eigen::VectorXd q;
  std::vector<double> col_norm;  // L^2 norms of z^k

  PolySubspace(const WeightSpec& spec, const QuadRule& rule, int d) : A(rule.size(), d), q(rule.size()) {
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const cplx x = rule.nodes[i];
      const double h = std::exp(0.5 * spec.log_weight(x));
      cplx xp = 1.0;
      for (int k = 0; k < d; ++k, xp *= x) A(i, k) = h * xp;
      q[i] = rule.weights[i];
    }
    col_norm.resize(d);
    for (int k = 0; k < d; ++k) col_norm[k] = std::sqrt(detail::lp_objective(A.col(k), q, 2.0));
  }

  double norm(const Eigen::VectorXcd& vals, double p) const {
    if (std::isinf(p)) return vals.cwiseAbs().maxCoeff();
    return std::pow(detail::lp_objective(vals, q, p), 1.0 / p);
  }
};

inline double conjugate_exponent(double p) {
  if (p == 1.0) return INFINITY;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

/// ||Lambda_g|| / ||g||_{p'} for one g; ||Lambda_g|| = 1 / min{ ||f||_p : <f, g> = 1 } over the subspace.
inline DualityTrial duality_trial(const PolySubspace& S, const Eigen::VectorXcd& g, double p, int restarts,
                                  std::mt19937_64& rng) {
  const int d = static_cast<int>(S.A.cols());
  const double pc = conjugate_exponent(p);
  const Eigen::VectorXcd G = S.A * g;
  // beta_k = <z^k, g>.
  Eigen::VectorXcd beta(d);
  for (int k = 0; k < d; ++k) {
    cplx s = 0;
    for (Eigen::Index i = 0; i < G.size(); ++i) s += S.q[i] * S.A(i, k) * std::conj(G[i]);
    beta[k] = s;
  }
  Eigen::Index j = 0;
  beta.cwiseAbs().maxCoeff(&j);
  Eigen::MatrixXcd N = Eigen::MatrixXcd::Zero(d, d - 1);
  for (int k = 0, col = 0; k < d; ++k) {
    if (k == j) continue;
    N(k, col) = 1.0;
    N(j, col) = -beta[k] / beta[j];
    ++col;
  }
  const Eigen::VectorXcd y = S.A.col(j) / beta[j];
  const Eigen::MatrixXcd An = S.A * N;
  auto to_v = [&](Eigen::VectorXcd c) {
    c /= beta.cwiseProduct(c).sum();  // beta^T c = 1
    Eigen::VectorXcd v(d - 1);
    for (int k = 0, col = 0; k < d; ++k)
      if (k != j) v[col++] = -c[k];
    return v;
  };

  std::vector<Eigen::VectorXcd> starts;
  // Hoelder seed: the extremal |G|^{p'-2} G of the full L^p pairing, fitted into the subspace.
  if (!std::isinf(pc)) {
    Eigen::VectorXcd h(G.size());
    for (Eigen::Index i = 0; i < G.size(); ++i) h[i] = std::pow(std::abs(G[i]), pc - 2.0) * G[i];
    starts.push_back(to_v(detail::weighted_ls(S.A, h, S.q)));
  } else {
    starts.push_back(to_v(g));
  }
  std::normal_distribution<double> Nd(0.0, 1.0);
  while (static_cast<int>(starts.size()) < restarts) {
    Eigen::VectorXcd c(d);
    for (int k = 0; k < d; ++k) c[k] = cplx(Nd(rng), Nd(rng)) / S.col_norm[k];
    if (std::abs(beta.cwiseProduct(c).sum()) < 1e-300) continue;
    starts.push_back(to_v(c));
  }
  DualityTrial out;
  double best_norm = INFINITY;
  bool conv = false;
  const double pe = std::isinf(p) ? 64.0 : p;
  for (const auto& v0 : starts) {
    const LpFit fit = irls_lp(An, y, S.q, pe, v0);
    const Eigen::VectorXcd c_vals = y - An * fit.coef;
    const double nf = S.norm(c_vals, p);
    if (nf < best_norm) {
      best_norm = nf;
      conv = fit.converged;
    }
  }
  out.dual_norm = 1.0 / best_norm;
  out.g_norm = S.norm(G, pc);
  out.ratio = out.dual_norm / out.g_norm;
  out.converged = conv;
  return out;
}

/// Random g of degree < d (or the given coefficient vectors); one sample per trial.
inline EstimateReport duality_ratio(const WeightSpec& spec, const QuadRule& rule, double p, int d, int trials,
                                    unsigned seed, int restarts = 20,
                                    const std::vector<Eigen::VectorXcd>& given = {}) {
  if (!(p >= 1)) throw PreconditionError("duality needs p >= 1");
  const PolySubspace S(spec, rule, d);
  EstimateReport rep;
  rep.quantity = "duality_ratio";
  rep.headline = EstimateReport::Headline::spread;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> Nd(0.0, 1.0);
  const int n = given.empty() ? trials : static_cast<int>(given.size());
  int lower_only = 0;
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXcd g(d);
    if (given.empty()) {
      for (int k = 0; k < d; ++k) g[k] = cplx(Nd(rng), Nd(rng)) / S.col_norm[k];
    } else {
      g = given[t];
    }
    const DualityTrial tr = duality_trial(S, g, p, restarts, rng);
    if (!tr.converged) ++lower_only;
    rep.add(static_cast<double>(t), tr.ratio);
  }
  rep.extras["p"] = std::isinf(p) ? -1.0 : p;
  rep.extras["degree"] = d;
  rep.extras["lower_estimates"] = lower_only;
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------
// Kernel density.

/// Nested tau-adapted centres: 0, then rings carrying 3, 5, 7, ... points with
/// radius stepping r <- r + tau(r) / 2.
inline std::vector<cplx> density_centers(const WeightSpec& spec, int k_max) {
  std::vector<cplx> out{0.0};
  double r = 0.5 * spec.tau(0.0);
  for (int ring = 1; static_cast<int>(out.size()) < k_max; ++ring) {
    const int n = 2 * ring + 1;
    for (int j = 0; j < n && static_cast<int>(out.size()) < k_max; ++j)
      out.push_back(std::polar(r, 2.0 * std::numbers::pi * j / n + 0.3 * ring));
    r += 0.5 * spec.tau(r);
  }
  return out;
}

struct DensityPoint {
  int k = 0;
  double error = 0;
  double condition = 1;
  double regularization = 0;
};

struct DensityCurve {
  double p = 2;
  double norm_f = 0;
  std::vector<DensityPoint> points;

  bool strictly_decreasing() const {
    for (std::size_t i = 1; i < points.size(); ++i)
      if (!(points[i].error < points[i - 1].error)) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& d : points)
      pts.push_back({{"k", d.k}, {"error", d.error}, {"condition", d.condition}, {"regularization", d.regularization}});
    return {{"p", p}, {"norm_f", norm_f}, {"points", pts}, {"strictly_decreasing", strictly_decreasing()}};
  }
};

/// Best approximation of f from span{K_{z_1}, ..., K_{z_k}} in A^p(omega^{p/2}) for each k.
/// p = 2 uses the kernel Gram system (Tikhonov-regularized when ill-conditioned);
/// other p use IRLS on the rule.
inline DensityCurve kernel_density_experiment(const KernelModel& model, const std::function<cplx(cplx)>& f,
                                              const std::vector<int>& ks, double p, const QuadRule& rule,
                                              const std::vector<cplx>& centers) {
  const WeightSpec& spec = model.weight();
  const std::size_t n_nodes = rule.size();
  Eigen::VectorXcd y(n_nodes);
  Eigen::VectorXd q(n_nodes);
  std::vector<double> half(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    half[i] = 0.5 * spec.log_weight(rule.nodes[i]);
    y[i] = f(rule.nodes[i]) * std::exp(half[i]);
    q[i] = rule.weights[i];
  }
  DensityCurve curve;
  curve.p = p;
  curve.norm_f = std::pow(detail::lp_objective(y, q, p), 1.0 / p);
  const int k_max = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  if (k_max > static_cast<int>(centers.size())) throw PreconditionError("not enough kernel centres");
  Eigen::MatrixXcd cols(n_nodes, k_max);
  for (int j = 0; j < k_max; ++j) {
    const SeriesOnRule kv = eval_series_on_rule(rule, model.coefficients(centers[j], rule.r_max));
    for (std::size_t i = 0; i < n_nodes; ++i) {
      LogComplex v = kv.values.values[i];
      if (!v.zero) v.log_magnitude += half[i];
      cols(i, j) = v.to_complex();
    }
  }
  for (int k : ks) {
    DensityPoint pt;
    pt.k = k;
    if (k == 0) {
      pt.error = curve.norm_f;
      curve.points.push_back(pt);
      continue;
    }
    const Eigen::MatrixXcd A = cols.leftCols(k);
    Eigen::VectorXcd c;
    if (p == 2.0) {
      Eigen::MatrixXcd G(k, k);
      Eigen::VectorXcd b(k);
      for (int i = 0; i < k; ++i) {
        b[i] = f(centers[i]);
        for (int j = 0; j < k; ++j) G(i, j) = model.eval(centers[j], centers[i]).value.to_complex();
      }
      const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (G + G.adjoint())).eigenvalues();
      pt.condition = ev.maxCoeff() / std::max(ev.minCoeff(), 1e-300);
      if (pt.condition > 1e12) {
        pt.regularization = 1e-12 * ev.maxCoeff();
        G += pt.regularization * Eigen::MatrixXcd::Identity(k, k);
      }
      c = G.ldlt().solve(b);
    } else {
      c = irls_lp(A, y, q, p).coef;
    }
    pt.error = std::pow(detail::lp_objective(y - A * c, q, p), 1.0 / p);
    curve.points.push_back(pt);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Truncated approximation f_n = P_{omega_*}(f chi_n) with omega_* = omega tau^2.

/// chi_n(r) = 1 for r <= 1 - 1/n, 0 for r >= 1 - 1/(2n), cubic smoothstep between.
inline double chi_n(double r, int n) {
  const double a = 1.0 - 1.0 / n, b = 1.0 - 0.5 / n;
  if (r <= a) return 1.0;
  if (r >= b) return 0.0;
  const double t = (b - r) / (b - a);
  return t * t * (3.0 - 2.0 * t);
}

struct TruncatedApprox {
  ProjectedFn fn;
  double norm_ratio = 0;     // ||f_n|| / ||f|| in A^1(omega^{1/2}) over the resolved rings
  double compact_error = 0;  // max |f_n - f| on |z| <= R
  double resolved_radius = 0;
};

inline TruncatedApprox truncated_approx(const WeightSpec& spec, const std::function<cplx(cplx)>& f, int n,
                                        double R, const QuadRule& rule, const KernelModel* associated_model = nullptr) {
  const WeightSpec star = build_associated(spec, 2.0);
  const KernelModel model = associated_model ? *associated_model : KernelModel::radial(star, rule);
  const ProjectionOperator op(model, rule);
  const SampledFn g = sample_complex(rule, [&](cplx x) { return f(x) * chi_n(std::abs(x), n); });
  TruncatedApprox out;
  out.fn = op.apply(g, rule.r_max);
  const SeriesOnRule on = out.fn.on_rule(rule);
  out.resolved_radius = on.resolved_radius;
  std::vector<double> log_w(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) log_w[i] = spec.log_weight(rule.nodes[i]);
  const SampledFn fs = sample_complex(rule, f);
  out.norm_ratio = std::exp(log_lp_norm(rule, on.values.values, log_w, 1.0, on.resolved_radius) -
                            log_lp_norm(rule, fs.values, log_w, 1.0, on.resolved_radius));
  for (cplx z : eval_grid(R)) out.compact_error = std::max(out.compact_error, std::abs(out.fn(z) - f(z)));
  return out;
}

}  // namespace blab
