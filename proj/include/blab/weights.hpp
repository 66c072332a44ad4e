#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "analytic.hpp"
#include "errors.hpp"
#include "log_real.hpp"

namespace blab {

/// Weight omega = exp(-2 phi) on the unit disk.
///
/// Every family exposes log omega, Delta phi (classical Laplacian) and the
/// length scale tau = (Delta phi)^(-1/2). Two families are conventions rather
/// than Laplacian-driven: the unweighted oracle uses tau = (1-|z|)/2, and an
/// associated weight omega * tau^alpha keeps the tau of its base weight.
class WeightSpec {
 public:
  enum class Family { exponential, unweighted, standard, custom_radial, modulated, associated };

  static WeightSpec exponential(double c, double alpha) {
    if (!(c > 0) || !(alpha > 0)) throw WeightSpecError("exponential weight needs c > 0 and alpha > 0");
    WeightSpec w(Family::exponential);
    w.c_ = c;
    w.alpha_ = alpha;
    return w;
  }

  static WeightSpec unweighted() { return WeightSpec(Family::unweighted); }

  static WeightSpec standard(double beta) {
    if (!(beta > -1)) throw WeightSpecError("standard weight needs beta > -1");
    WeightSpec w(Family::standard);
    w.beta_ = beta;
    return w;
  }

  /// Knots (r_k, log omega(r_k)) with r increasing from 0; monotone cubic interpolation.
  static WeightSpec custom_radial(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2) throw WeightSpecError("custom_radial needs at least two knots");
    std::sort(knots.begin(), knots.end());
    if (knots.front().first != 0.0) throw WeightSpecError("custom_radial knots must start at r = 0");
    if (knots.back().first >= 1.0) throw WeightSpecError("custom_radial knots must lie in [0, 1)");
    WeightSpec w(Family::custom_radial);
    for (auto [r, lw] : knots) {
      if (!std::isfinite(lw)) throw WeightSpecError("custom_radial log-weight must be finite");
      w.knot_r_.push_back(r);
      w.knot_v_.push_back(lw);
    }
    for (std::size_t i = 1; i < w.knot_r_.size(); ++i)
      if (w.knot_r_[i] == w.knot_r_[i - 1]) throw WeightSpecError("custom_radial knots must be distinct");
    w.build_monotone_slopes();
    return w;
  }

  /// omega_{p,f} = |f|^p * base, f zero-free on the disk.
  static WeightSpec modulated(const WeightSpec& base, double p, const AnalyticFn& f) {
    if (!base.radial()) throw WeightSpecError("modulated weight needs a radial base");
    if (!(p > 0)) throw WeightSpecError("modulated weight needs p > 0");
    if (!f.zero_free_on_disk()) throw WeightSpecError("modulating function must be zero-free on the disk");
    WeightSpec w(Family::modulated);
    w.base_ = std::make_shared<const WeightSpec>(base);
    w.p_ = p;
    w.f_ = f;
    return w;
  }

  /// omega_* = omega * tau^alpha_star.
  static WeightSpec associated(const WeightSpec& base, double alpha_star) {
    WeightSpec w(Family::associated);
    w.base_ = std::make_shared<const WeightSpec>(base);
    w.alpha_star_ = alpha_star;
    return w;
  }

  Family family() const { return family_; }

  bool radial() const {
    switch (family_) {
      case Family::modulated:
        return false;
      case Family::associated:
        return base_->radial();
      default:
        return true;
    }
  }

  double c() const { return c_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double p() const { return p_; }
  double alpha_star() const { return alpha_star_; }
  const AnalyticFn& modulator() const { return f_; }
  const WeightSpec* base() const { return base_.get(); }

  /// log omega(z). Throws DomainError for |z| >= 1.
  double log_weight(cplx z) const {
    const double r = std::abs(z);
    check_domain(r);
    switch (family_) {
      case Family::exponential:
        return -c_ * std::pow(1.0 - r * r, -alpha_);
      case Family::unweighted:
        return 0.0;
      case Family::standard:
        return beta_ * std::log1p(-r * r);
      case Family::custom_radial:
        return interpolate(r);
      case Family::modulated:
        return base_->log_weight(z) + p_ * f_.log_abs(z);
      case Family::associated:
        return base_->log_weight(z) + alpha_star_ * std::log(tau(z));
    }
    return 0.0;
  }

  /// phi = -log(omega)/2.
  double phi(cplx z) const { return -0.5 * log_weight(z); }

  /// Classical Laplacian of phi; positive for every family it is defined on.
  double laplacian_phi(cplx z) const {
    const double r = std::abs(z);
    check_domain(r);
    double lap = 0.0;
    switch (family_) {
      case Family::exponential: {
        const double s = 1.0 - r * r;
        lap = 2.0 * c_ * alpha_ * (1.0 + alpha_ * r * r) * std::pow(s, -alpha_ - 2.0);
        break;
      }
      case Family::unweighted:
        lap = 0.0;
        break;
      case Family::standard: {
        const double s = 1.0 - r * r;
        lap = 2.0 * beta_ / (s * s);
        break;
      }
      case Family::modulated:
        // log|f| is harmonic, so the modulation leaves Delta phi unchanged.
        lap = base_->laplacian_phi(z);
        break;
      case Family::custom_radial:
      case Family::associated:
        lap = fd_laplacian(z, fd_step(z));
        break;
    }
    if (!(lap > 0) || !std::isfinite(lap))
      throw WeightSpecError("non-positive Laplacian of phi at z = " + std::to_string(z.real()) + "+" +
                            std::to_string(z.imag()) + "i");
    return lap;
  }

  /// Five-point Laplacian of phi with one Richardson step (h, h/2).
  double fd_laplacian(cplx z, double h) const {
    auto stencil = [&](double step) {
      const double c = phi(z);
      const double sum = phi(z + step) + phi(z - step) + phi(z + cplx(0, step)) + phi(z - cplx(0, step));
      return (sum - 4.0 * c) / (step * step);
    };
    return (4.0 * stencil(0.5 * h) - stencil(h)) / 3.0;
  }

  /// tau(z) = (Delta phi)^(-1/2). Radial specs evaluate at |z| on the real axis.
  double tau(cplx z) const {
    const double r = std::abs(z);
    check_domain(r);
    switch (family_) {
      case Family::unweighted:
        return 0.5 * (1.0 - r);
      case Family::associated:
        return base_->tau(z);
      case Family::modulated:
        return base_->tau(z);
      case Family::custom_radial:
        return 1.0 / std::sqrt(laplacian_phi(cplx(r, 0.0)));
      default:
        return 1.0 / std::sqrt(laplacian_phi(cplx(r, 0.0)));
    }
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    switch (family_) {
      case Family::exponential:
        return {{"family", "exponential"}, {"c", c_}, {"alpha", alpha_}};
      case Family::unweighted:
        return {{"family", "unweighted_oracle"}};
      case Family::standard:
        return {{"family", "standard_oracle"}, {"beta", beta_}};
      case Family::custom_radial: {
        json k = json::array();
        for (std::size_t i = 0; i < knot_r_.size(); ++i) k.push_back(json::array({knot_r_[i], knot_v_[i]}));
        return {{"family", "custom_radial"}, {"knots", k}};
      }
      case Family::modulated:
        return {{"family", "modulated"}, {"base", base_->to_json()}, {"p", p_}, {"f", analytic_to_json(f_)}};
      case Family::associated:
        return {{"family", "associated"}, {"base", base_->to_json()}, {"alpha_star", alpha_star_}};
    }
    return {};
  }

 private:
  explicit WeightSpec(Family f) : family_(f) {}

  static void check_domain(double r) {
    if (!(r < 1.0)) throw DomainError("point outside the unit disk (|z| = " + std::to_string(r) + ")");
  }

  // Step tau/100, with tau bootstrapped from a (1-|z|)/100 first pass.
  double fd_step(cplx z) const {
    const double r = std::abs(z);
    double h = std::min(1e-2, (1.0 - r) / 100.0);
    const double lap0 = fd_laplacian(z, h);
    if (lap0 > 0) h = std::min(h * 4.0, 1.0 / std::sqrt(lap0) / 100.0);
    return std::min(h, (1.0 - r) / 4.0);
  }

  void build_monotone_slopes() {
    // Fritsch-Carlson monotone cubic Hermite slopes.
    const std::size_t n = knot_r_.size();
    std::vector<double> delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
      delta[i] = (knot_v_[i + 1] - knot_v_[i]) / (knot_r_[i + 1] - knot_r_[i]);
    slope_.assign(n, 0.0);
    slope_[0] = delta[0];
    slope_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i)
      slope_[i] = (delta[i - 1] * delta[i] <= 0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (delta[i] == 0) {
        slope_[i] = slope_[i + 1] = 0.0;
        continue;
      }
      const double a = slope_[i] / delta[i];
      const double b = slope_[i + 1] / delta[i];
      const double s = a * a + b * b;
      if (s > 9.0) {
        const double t = 3.0 / std::sqrt(s);
        slope_[i] = t * a * delta[i];
        slope_[i + 1] = t * b * delta[i];
      }
    }
  }

  double interpolate(double r) const {
    if (r > knot_r_.back()) throw DomainError("radius beyond the last custom_radial knot");
    auto it = std::upper_bound(knot_r_.begin(), knot_r_.end(), r);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - knot_r_.begin()) - 1));
    if (i + 1 >= knot_r_.size()) i = knot_r_.size() - 2;
    const double h = knot_r_[i + 1] - knot_r_[i];
    const double t = (r - knot_r_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * knot_v_[i] + (t3 - 2 * t2 + t) * h * slope_[i] +
           (-2 * t3 + 3 * t2) * knot_v_[i + 1] + (t3 - t2) * h * slope_[i + 1];
  }

  Family family_;
  double c_ = 1.0, alpha_ = 1.0, beta_ = 0.0, p_ = 1.0, alpha_star_ = 0.0;
  std::vector<double> knot_r_, knot_v_, slope_;
  std::shared_ptr<const WeightSpec> base_;
  AnalyticFn f_;
};

inline WeightSpec weight_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family")) throw UsageError("weight block needs a \"family\" field");
  const std::string fam = j.at("family").get<std::string>();
  try {
    if (fam == "exponential") return WeightSpec::exponential(j.value("c", 1.0), j.value("alpha", 1.0));
    if (fam == "unweighted_oracle" || fam == "unweighted") return WeightSpec::unweighted();
    if (fam == "standard_oracle" || fam == "standard") return WeightSpec::standard(j.at("beta").get<double>());
    if (fam == "custom_radial") {
      std::vector<std::pair<double, double>> knots;
      for (const auto& k : j.at("knots")) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
      return WeightSpec::custom_radial(std::move(knots));
    }
    if (fam == "modulated")
      return WeightSpec::modulated(weight_from_json(j.at("base")), j.at("p").get<double>(),
                                   analytic_from_json(j.at("f")));
    if (fam == "associated")
      return WeightSpec::associated(weight_from_json(j.at("base")), j.at("alpha_star").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("weight block: ") + e.what());
  }
  throw UsageError("unknown weight family: " + fam);
}

// ---------------------------------------------------------------------------
// Free-function surface.

inline LogReal log_weight(const WeightSpec& spec, cplx z) { return LogReal::from_log(spec.log_weight(z)); }
inline double tau(const WeightSpec& spec, cplx z) { return spec.tau(z); }
inline double laplacian_phi(const WeightSpec& spec, cplx z) { return spec.laplacian_phi(z); }

inline WeightSpec build_associated(const WeightSpec& spec, double alpha_star) {
  return WeightSpec::associated(spec, alpha_star);
}

/// Empirical constants of conditions (A) and (B) for tau.
struct TauFn {
  std::function<double(cplx)> eval;
  double c1 = 0;      // sup tau(z) / (1 - |z|) on the sample
  double c2 = 0;      // sup |tau(z) - tau(w)| / |z - w| on the sample
  double margin = 0.1;
  double m_tau = 0;   // min(1, 1/c1, 1/c2) / 4

  double c1_certified() const { return c1 * (1 + margin); }
  double c2_certified() const { return c2 * (1 + margin); }
  double operator()(cplx z) const { return eval(z); }
};

inline double m_tau_from(double c1, double c2) { return std::min({1.0, 1.0 / c1, 1.0 / c2}) / 4.0; }

/// Polar sample grid on {|z| <= r_max}: n_r radii (including 0) by n_theta angles.
inline std::vector<cplx> disk_samples(double r_max, int n_r, int n_theta, double theta_offset = 0.0) {
  std::vector<cplx> pts;
  pts.emplace_back(0.0, 0.0);
  for (int i = 1; i <= n_r; ++i) {
    const double r = r_max * i / n_r;
    for (int j = 0; j < n_theta; ++j)
      pts.push_back(std::polar(r, theta_offset + 2.0 * std::numbers::pi * j / n_theta));
  }
  return pts;
}

inline TauFn estimate_class_constants(const WeightSpec& spec, const std::vector<cplx>& samples,
                                      double margin = 0.1) {
  if (samples.size() < 2) throw PreconditionError("class-constant estimation needs at least two samples");
  std::vector<double> t(samples.size());
  double c1 = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t[i] = spec.tau(samples[i]);
    c1 = std::max(c1, t[i] / (1.0 - std::abs(samples[i])));
  }
  double c2 = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double d = std::abs(samples[i] - samples[j]);
      if (d > 0) c2 = std::max(c2, std::abs(t[i] - t[j]) / d);
    }
  if (!std::isfinite(c1) || !std::isfinite(c2) || c1 > 1e8 || c2 > 1e8)
    throw ClassificationError("tau not in class L at the sampled scale (unbounded ratio)");
  if (c2 == 0) c2 = std::numeric_limits<double>::min();
  TauFn fn;
  fn.eval = [spec](cplx z) { return spec.tau(z); };
  fn.c1 = c1;
  fn.c2 = c2;
  fn.margin = margin;
  fn.m_tau = m_tau_from(c1, c2);
  return fn;
}

/// Largest violation ratios of (A) and (B) with the certified (margin) constants;
/// both are <= 1 when the certificate holds on `samples`.
struct ClassCertificate {
  double worst_a = 0;
  double worst_b = 0;
  bool holds() const { return worst_a <= 1.0 && worst_b <= 1.0; }
};

inline ClassCertificate certify_class_constants(const TauFn& fn, const std::vector<cplx>& samples) {
  ClassCertificate cert;
  std::vector<double> t(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t[i] = fn(samples[i]);
    cert.worst_a = std::max(cert.worst_a, t[i] / (fn.c1_certified() * (1 - std::abs(samples[i]))));
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double d = std::abs(samples[i] - samples[j]);
      if (d > 0) cert.worst_b = std::max(cert.worst_b, std::abs(t[i] - t[j]) / (fn.c2_certified() * d));
    }
  return cert;
}

struct ConditionEReport {
  int m = 1;
  bool feasible = false;
  double b_m = 0;
  double t_m = 0;
  std::size_t checked_pairs = 0;  // pairs with |z - xi| > b_m tau(xi) at the reported b_m
  std::vector<std::pair<cplx, cplx>> violations;
};

struct ConditionEGrid {
  std::vector<double> b_values;  // ascending
  int t_steps = 20;              // t_k = k / ((t_steps + 1) m)

  static ConditionEGrid geometric(double b_min, double b_max, double ratio = 1.189207115) {
    ConditionEGrid g;
    for (double b = b_min; b <= b_max * (1 + 1e-12); b *= ratio) g.b_values.push_back(b);
    return g;
  }
  static ConditionEGrid defaults() { return geometric(0.25, 1e4); }
};

/// All unordered pairs drawn from `points`, both orientations.
inline std::vector<std::pair<cplx, cplx>> all_pairs(const std::vector<cplx>& points) {
  std::vector<std::pair<cplx, cplx>> out;
  out.reserve(points.size() * (points.size() - 1));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) out.emplace_back(points[i], points[j]);
  return out;
}

/// Searches (b, t) on `grid` for tau(z) <= tau(xi) + t|z - xi| whenever |z - xi| > b tau(xi).
/// Pairs are (z, xi).
inline ConditionEReport check_condition_E(const WeightSpec& spec, int m,
                                          const std::vector<std::pair<cplx, cplx>>& pairs,
                                          const ConditionEGrid& grid = ConditionEGrid::defaults()) {
  if (m < 1) throw PreconditionError("condition (E) needs m >= 1");
  struct P {
    double d, tz, txi;
  };
  std::vector<P> ps;
  ps.reserve(pairs.size());
  for (auto [z, xi] : pairs) ps.push_back({std::abs(z - xi), spec.tau(z), spec.tau(xi)});

  ConditionEReport rep;
  rep.m = m;
  const double t_cap = 1.0 / m;
  for (double b : grid.b_values) {
    double need = 0;
    std::size_t checked = 0;
    for (const auto& p : ps) {
      if (p.d > b * p.txi) {
        ++checked;
        need = std::max(need, (p.tz - p.txi) / p.d);
      }
    }
    for (int k = 1; k <= grid.t_steps; ++k) {
      const double t = t_cap * k / (grid.t_steps + 1);
      if (need <= t) {
        rep.feasible = true;
        rep.b_m = b;
        rep.t_m = t;
        rep.checked_pairs = checked;
        return rep;
      }
    }
  }
  // Witnesses at the largest b with the largest admissible t.
  const double b = grid.b_values.empty() ? 0.0 : grid.b_values.back();
  const double t = t_cap * grid.t_steps / (grid.t_steps + 1);
  rep.b_m = b;
  rep.t_m = t;
  for (std::size_t i = 0; i < ps.size() && rep.violations.size() < 20; ++i) {
    const auto& p = ps[i];
    if (p.d > b * p.txi && p.tz > p.txi + t * p.d) {
      rep.violations.push_back(pairs[i]);
      ++rep.checked_pairs;
    }
  }
  return rep;
}

/// phi_a(z) = (M/4) log(1 + |z-a|^2 / (beta tau(a))^2) and its derivatives.
struct LfiBump {
  cplx a;
  double M = 1;
  double eps = 0.5;
  double beta = 1;
  double tau_a = 1;
  double b = 0;  // the b > max(m, b_m) used to size beta

  double operator()(cplx z) const {
    const double d2 = std::norm(z - a);
    return M / 4.0 * std::log1p(d2 / (beta * beta * tau_a * tau_a));
  }
  /// |d phi_a / dz|^2.
  double grad_sq(cplx z) const {
    const double d2 = std::norm(z - a);
    const double den = beta * beta * tau_a * tau_a + d2;
    return (M / 4.0) * (M / 4.0) * d2 / (den * den);
  }
  /// Classical Laplacian of phi_a.
  double laplacian(cplx z) const {
    const double d2 = std::norm(z - a);
    const double bt2 = beta * beta * tau_a * tau_a;
    const double den = bt2 + d2;
    return M * bt2 / (den * den);
  }
};

inline LfiBump lfi_bump(cplx a, double M, double eps, const TauFn& tau_fn, const ConditionEReport& e_report) {
  if (!(M >= 1)) throw PreconditionError("lfi_bump needs M >= 1");
  if (!(eps > 0 && eps < 1)) throw PreconditionError("lfi_bump needs eps in (0, 1)");
  const double m_needed = 2.0 * M / std::sqrt(eps);
  if (!e_report.feasible || !(e_report.m > m_needed))
    throw PreconditionError("lfi_bump needs a feasible condition-(E) certificate with m > 2 M eps^(-1/2) = " +
                            std::to_string(m_needed));
  LfiBump bump;
  bump.a = a;
  bump.M = M;
  bump.eps = eps;
  bump.tau_a = tau_fn(a);
  bump.b = 1.01 * std::max<double>(e_report.m, e_report.b_m);
  const double c2 = tau_fn.c2_certified();
  const double beta_sq = (1.0 / eps) * std::pow(1.0 + c2 * bump.b, 2) * std::max(M, (M / 4.0) * (M / 4.0));
  bump.beta = std::sqrt(1.01 * beta_sq);
  return bump;
}

/// Worst ratios |d phi_a|^2 / (eps Delta phi) and Delta phi_a / (eps Delta phi) over `grid`.
struct LfiVerification {
  double worst_gradient = 0;
  double worst_laplacian = 0;
  bool holds() const { return worst_gradient <= 1.0 && worst_laplacian <= 1.0; }
};

inline LfiVerification verify_lfi(const LfiBump& bump, const WeightSpec& spec, const std::vector<cplx>& grid) {
  LfiVerification v;
  for (cplx z : grid) {
    const double lap = spec.laplacian_phi(z);
    v.worst_gradient = std::max(v.worst_gradient, bump.grad_sq(z) / (bump.eps * lap));
    v.worst_laplacian = std::max(v.worst_laplacian, bump.laplacian(z) / (bump.eps * lap));
  }
  return v;
}

}  // namespace blab
