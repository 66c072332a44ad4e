#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "weights.hpp"

namespace blab {

/// Discs D(a_j, rho_j) bucketed by radial band and sorted by angle within a band.
class DiscIndex {
 public:
  explicit DiscIndex(double band_width = 0.005) : width_(band_width) {}

  void insert(int id, cplx a, double rho) {
    const std::size_t b = band_of(std::abs(a));
    if (b >= bands_.size()) bands_.resize(b + 1);
    Band& band = bands_[b];
    const Entry e{std::arg(a), id, a, rho};
    band.entries.insert(std::upper_bound(band.entries.begin(), band.entries.end(), e,
                                         [](const Entry& x, const Entry& y) { return x.theta < y.theta; }),
                        e);
    band.max_rho = std::max(band.max_rho, rho);
    max_rho_ = std::max(max_rho_, rho);
  }

  /// Calls f(id, |z - a|) for every disc with |z - a| < scale * rho.
  template <class F>
  void for_each_containing(cplx z, double scale, F&& f) const {
    const double r = std::abs(z), theta = std::arg(z), reach = scale * max_rho_;
    const std::size_t b_lo = band_of(std::max(0.0, r - reach));
    const std::size_t b_hi = std::min(bands_.size(), band_of(r + reach) + 1);
    for (std::size_t b = b_lo; b < b_hi; ++b) {
      const Band& band = bands_[b];
      if (band.entries.empty()) continue;
      const double lo = b * width_, hi = lo + width_, R = scale * band.max_rho;
      if (r + R <= lo || r - R >= hi) continue;
      const double s = lo * r > 0 ? R / (2.0 * std::sqrt(lo * r)) : 2.0;
      auto visit = [&](const Entry& e) {
        const double d = std::abs(z - e.a);
        if (d < scale * e.rho) f(e.id, d);
      };
      if (s >= 1.0) {
        for (const Entry& e : band.entries) visit(e);
        continue;
      }
      const double span = 2.0 * std::asin(s);
      scan(band, theta - span, theta + span, visit);
    }
  }

 private:
  struct Entry {
    double theta;
    int id;
    cplx a;
    double rho;
  };
  struct Band {
    std::vector<Entry> entries;
    double max_rho = 0;
  };

  std::size_t band_of(double r) const { return static_cast<std::size_t>(r / width_); }

  template <class V>
  static void scan(const Band& band, double from, double to, V& visit) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto range = [&](double a, double b) {
      auto it = std::lower_bound(band.entries.begin(), band.entries.end(), a,
                                 [](const Entry& e, double t) { return e.theta < t; });
      for (; it != band.entries.end() && it->theta <= b; ++it) visit(*it);
    };
    range(std::max(from, -std::numbers::pi), std::min(to, std::numbers::pi));
    if (from < -std::numbers::pi) range(from + two_pi, std::numbers::pi);
    if (to > std::numbers::pi) range(-std::numbers::pi, to - two_pi);
  }

  double width_;
  double max_rho_ = 0;
  std::vector<Band> bands_;
};

/// Rings of spacing delta1 tau(r) / density; each ring equally spaced at about that spacing.
/// `ring_shift` and `angle_shift` in [0, 1) move the grid off the build lattice.
inline std::vector<cplx> tau_probe_grid(const WeightSpec& spec, double delta1, double r_max, double density,
                                        double ring_shift = 0.0, double angle_shift = 0.0) {
  std::vector<cplx> pts;
  auto h = [&](double r) { return delta1 * spec.tau(cplx(r, 0.0)) / density; };
  double r = ring_shift * h(0.0);
  for (;;) {
    const bool last = r >= r_max;
    if (last) r = r_max;
    if (r == 0.0) {
      pts.emplace_back(0.0, 0.0);
    } else {
      const int n = std::max(3, static_cast<int>(std::ceil(2.0 * std::numbers::pi * r / h(r))));
      const double phase = angle_shift + 0.5 * (pts.size() % 2);
      for (int j = 0; j < n; ++j) pts.push_back(std::polar(r, 2.0 * std::numbers::pi * (j + phase) / n));
    }
    if (last) break;
    r += h(r);
  }
  return pts;
}

/// Candidate centres: rings spaced `spacing` delta1 tau(r) apart radially, each
/// ring holding points at least that far apart along the circle, alternate rings
/// shifted by half a step. Continues one ring past r_max.
inline std::vector<cplx> staggered_lattice(const WeightSpec& spec, double delta1, double r_max, double spacing) {
  std::vector<cplx> pts{cplx(0.0, 0.0)};
  auto h = [&](double r) { return spacing * delta1 * spec.tau(cplx(r, 0.0)); };
  double r = 0;
  for (int ring = 1; r < r_max; ++ring) {
    r += h(r);
    if (r >= 1.0) throw DomainError("covering: lattice leaves the unit disk");
    const int n = std::max(1, static_cast<int>(std::floor(2.0 * std::numbers::pi * r / h(r))));
    const double phase = 0.5 * (ring % 2);
    for (int j = 0; j < n; ++j) pts.push_back(std::polar(r, 2.0 * std::numbers::pi * (j + phase) / n));
  }
  return pts;
}

struct Covering {
  std::vector<cplx> centers;
  std::vector<double> radii;  // delta1 tau(a_j)
  double delta1 = 0, delta0 = 0, delta = 0;
  int multiplicity = 0;
  double r_max = 0;
  std::size_t probe_count = 0;
  DiscIndex index;

  std::size_t size() const { return centers.size(); }

  void add(cplx a, double rho) {
    index.insert(static_cast<int>(centers.size()), a, rho);
    centers.push_back(a);
    radii.push_back(rho);
  }

  /// Number of discs D(3 delta1 tau(a_j)) containing z.
  int multiplicity_at(cplx z) const {
    int n = 0;
    index.for_each_containing(z, 3.0, [&](int, double) { ++n; });
    return n;
  }

  bool covered(cplx z) const {
    bool hit = false;
    index.for_each_containing(z, 1.0, [&](int, double) { hit = true; });
    return hit;
  }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (cplx a : centers) c.push_back({a.real(), a.imag()});
    return {{"centers", c},         {"radii", radii}, {"delta1", delta1},
            {"delta0", delta0},     {"delta", delta}, {"multiplicity", multiplicity},
            {"r_max", r_max},       {"probe_count", probe_count}};
  }
};

inline Covering covering_from_json(const nlohmann::json& j) {
  Covering cov;
  cov.delta1 = j.at("delta1").get<double>();
  cov.delta0 = j.at("delta0").get<double>();
  cov.delta = j.at("delta").get<double>();
  cov.multiplicity = j.at("multiplicity").get<int>();
  cov.r_max = j.at("r_max").get<double>();
  cov.probe_count = j.value("probe_count", std::size_t{0});
  const auto& c = j.at("centers");
  const auto& r = j.at("radii");
  if (c.size() != r.size()) throw UsageError("covering: centers and radii differ in length");
  for (std::size_t i = 0; i < c.size(); ++i) cov.add({c[i].at(0).get<double>(), c[i].at(1).get<double>()}, r[i]);
  return cov;
}

struct CoveringReport {
  struct Condition {
    bool pass = true;
    std::optional<cplx> witness;
  };
  Condition separation, cover, tilde, multiplicity;  // (i)..(iv)
  int measured_multiplicity = 0;
  std::size_t probe_count = 0;

  bool all_pass() const { return separation.pass && cover.pass && tilde.pass && multiplicity.pass; }

  nlohmann::json to_json() const {
    auto cj = [](const Condition& c) {
      nlohmann::json j = {{"pass", c.pass}};
      if (c.witness) j["witness"] = {c.witness->real(), c.witness->imag()};
      return j;
    };
    return {{"i", cj(separation)},   {"ii", cj(cover)},
            {"iii", cj(tilde)},      {"iv", cj(multiplicity)},
            {"measured_multiplicity", measured_multiplicity}, {"probe_count", probe_count}};
  }
};

namespace detail {
inline void fail_at(CoveringReport::Condition& c, cplx z) {
  if (c.pass) c.witness = z;
  c.pass = false;
}
}  // namespace detail

/// Checks (i)-(iv) over `probes`; (iv) passes when the measured multiplicity
/// is at most `allowed_multiplicity`.
inline CoveringReport check_covering(const Covering& cov, const WeightSpec& spec, const std::vector<cplx>& probes,
                                     int allowed_multiplicity) {
  CoveringReport rep;
  rep.probe_count = probes.size();
  for (std::size_t j = 0; j < cov.size(); ++j)
    cov.index.for_each_containing(cov.centers[j], 1.0, [&](int k, double) {
      if (static_cast<std::size_t>(k) != j) detail::fail_at(rep.separation, cov.centers[j]);
    });

  std::vector<int> mult(probes.size(), 0);
  std::vector<char> uncovered(probes.size(), 0), bad_tilde(probes.size(), 0);
  parallel_for(probes.size(), [&](std::size_t i) {
    const cplx z = probes[i];
    const double reach = cov.delta1 * spec.tau(z);
    bool in_some = false;
    cov.index.for_each_containing(z, 3.0, [&](int k, double d) {
      ++mult[i];
      if (d < cov.radii[k]) {
        in_some = true;
        if (d + reach > 3.0 * cov.radii[k]) bad_tilde[i] = 1;
      }
    });
    uncovered[i] = !in_some;
  });
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (uncovered[i]) detail::fail_at(rep.cover, probes[i]);
    if (bad_tilde[i]) detail::fail_at(rep.tilde, probes[i]);
    if (mult[i] > rep.measured_multiplicity) {
      rep.measured_multiplicity = mult[i];
      if (mult[i] > allowed_multiplicity) detail::fail_at(rep.multiplicity, probes[i]);
    }
  }
  return rep;
}

/// Greedy covering: walks a staggered tau-adapted candidate lattice outward and
/// makes every candidate not yet covered by D(delta1 tau(a_j)) a new centre.
/// (i)-(iii) are then checked on a probe grid of the given density.
inline Covering build_covering(const WeightSpec& spec, double delta1, double r_max, double m_tau = 0.0,
                               double density = 4.0, double spacing = 1.05) {
  if (!(delta1 > 0)) throw PreconditionError("covering: delta1 must be positive");
  if (m_tau > 0 && delta1 > 0.5 * m_tau * (1 + 1e-12))
    throw PreconditionError("covering: delta1 exceeds m_tau / 2");
  if (!(r_max > 0 && r_max < 1)) throw DomainError("covering: r_max must lie in (0, 1)");
  Covering cov;
  cov.delta1 = delta1;
  cov.delta0 = 2 * delta1;
  cov.delta = 10 * delta1;
  cov.r_max = r_max;
  for (cplx z : staggered_lattice(spec, delta1, r_max, spacing))
    if (!cov.covered(z)) cov.add(z, delta1 * spec.tau(z));

  const auto probes = tau_probe_grid(spec, delta1, r_max, density);
  cov.probe_count = probes.size();
  const CoveringReport rep = check_covering(cov, spec, probes, 1 << 30);
  cov.multiplicity = rep.measured_multiplicity;
  const std::pair<const char*, const CoveringReport::Condition*> conds[] = {
      {"(i) separation", &rep.separation}, {"(ii) cover", &rep.cover}, {"(iii) enlarged disc", &rep.tilde}};
  for (const auto& [name, c] : conds)
    if (!c->pass) throw CoveringError(std::string("covering condition ") + name + " fails", *c->witness);
  return cov;
}

/// Probes on {|z| <= r_max} offset from the build lattice.
inline std::vector<cplx> covering_probes(const Covering& cov, const WeightSpec& spec, double density = 10.0) {
  return tau_probe_grid(spec, cov.delta1, cov.r_max, density, 0.5, 0.37);
}

/// Re-checks (i)-(iv) on an independent grid of the given density.
inline CoveringReport verify_covering(const Covering& cov, const WeightSpec& spec, double density = 10.0) {
  return check_covering(cov, spec, covering_probes(cov, spec, density), cov.multiplicity + 1);
}

/// chi_j = eta_j^2 / sum_k eta_k^2 with eta_j a smooth radial bump, 1 on
/// D(rho_j / 2) and 0 off D(rho_j).
class PartitionOfUnity {
 public:
  struct Term {
    int j;
    double chi;
    cplx dbar;
  };

  PartitionOfUnity(const Covering& cov, const WeightSpec& spec) : cov_(&cov), spec_(spec) {}

  /// psi(1 - u) / (psi(1 - u) + psi(u)), psi(x) = exp(-1/x): 1 for u <= 0, 0 for u >= 1, smooth.
  static double step(double u) { return std::exp(log_step(u)); }

  static double log_step(double u) {
    if (u <= 0) return 0.0;
    if (u >= 1) return -std::numeric_limits<double>::infinity();
    const double x = 1.0 / (1.0 - u) - 1.0 / u;
    return x > 40 ? -x - std::log1p(std::exp(-x)) : -std::log1p(std::exp(x));
  }

  /// d/du log step(u).
  static double log_step_derivative(double u) {
    if (u <= 0 || u >= 1) return 0.0;
    const double x = 1.0 / (1.0 - u) - 1.0 / u;
    return -(1.0 / ((1.0 - u) * (1.0 - u)) + 1.0 / (u * u)) / (1.0 + std::exp(-x));
  }

  static double step_derivative(double u) { return step(u) * log_step_derivative(u); }

  double eta(int j, cplx z) const {
    const double t = std::abs(z - cov_->centers[j]) / cov_->radii[j];
    return step(2.0 * t - 1.0);
  }

  /// Nonzero chi_j(z) with their dbar derivatives.
  std::vector<Term> terms(cplx z) const {
    struct Raw {
      int j;
      double log_eta;
      cplx dlog;
    };
    std::vector<Raw> raw;
    double top = -std::numeric_limits<double>::infinity();
    cov_->index.for_each_containing(z, 1.0, [&](int j, double d) {
      const double rho = cov_->radii[j];
      const double u = 2.0 * d / rho - 1.0;
      if (u >= 1) return;
      const cplx dir = d > 0 ? (z - cov_->centers[j]) / (2.0 * d) : cplx(0.0);
      raw.push_back({j, log_step(u), log_step_derivative(u) * (2.0 / rho) * dir});
      top = std::max(top, raw.back().log_eta);
    });
    if (raw.empty()) return {};
    double s = 0;
    cplx ds = 0;
    std::vector<double> e(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      e[i] = std::exp(raw[i].log_eta - top);
      s += e[i] * e[i];
      ds += 2.0 * e[i] * e[i] * raw[i].dlog;
    }
    std::vector<std::size_t> order(raw.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a].j < raw[b].j; });
    std::vector<Term> out;
    out.reserve(raw.size());
    for (std::size_t i : order) {
      const double c = e[i] * e[i] / s;
      if (c > 0) out.push_back({raw[i].j, c, 2.0 * c * raw[i].dlog - c * ds / s});
    }
    return out;
  }

  double chi(int j, cplx z) const {
    const double lj = log_step(2.0 * std::abs(z - cov_->centers[j]) / cov_->radii[j] - 1.0);
    if (std::isinf(lj)) return 0.0;
    double s = 0;
    cov_->index.for_each_containing(z, 1.0, [&](int k, double d) {
      const double u = 2.0 * d / cov_->radii[k] - 1.0;
      if (u < 1) s += std::exp(2.0 * (log_step(u) - lj));
    });
    return 1.0 / s;
  }

  double sum(cplx z) const {
    double s = 0;
    for (const Term& t : terms(z)) s += t.chi;
    return s;
  }

  /// max |dbar chi_j|^2 tau^2 / chi_j over the probes.
  double gradient_constant(const std::vector<cplx>& probes) const {
    std::vector<double> worst(probes.size(), 0.0);
    parallel_for(probes.size(), [&](std::size_t i) {
      const double t2 = std::pow(spec_.tau(probes[i]), 2);
      for (const Term& t : terms(probes[i]))
        if (t.chi > 0) worst[i] = std::max(worst[i], std::norm(t.dbar) * t2 / t.chi);
    });
    return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
  }

  /// max |sum_j chi_j - 1| over covered probes.
  double sum_defect(const std::vector<cplx>& probes) const {
    double worst = 0;
    for (cplx z : probes)
      if (cov_->covered(z)) worst = std::max(worst, std::abs(sum(z) - 1.0));
    return worst;
  }

  const Covering& covering() const { return *cov_; }

 private:
  const Covering* cov_;
  WeightSpec spec_;
};

inline PartitionOfUnity build_pou(const Covering& cov, const WeightSpec& spec) { return PartitionOfUnity(cov, spec); }

}  // namespace blab
