#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <nlohmann/json.hpp>

#include "covering.hpp"
#include "dbar.hpp"
#include "kernel.hpp"
#include "lp_fit.hpp"
#include "projection.hpp"
#include "report.hpp"
#include "weights.hpp"

namespace blab::cli {

using nlohmann::json;

struct QuadConfig {
  int radial_panels = 24, gl_order = 20, angular = 512;
  double r_max = 0.99;

  QuadRule build() const { return build_rule(radial_panels, gl_order, angular, r_max); }
  json to_json() const {
    return {{"radial_panels", radial_panels}, {"gl_order", gl_order}, {"angular", angular}, {"r_max", r_max}};
  }
};

struct CheckConfig {
  std::string name;
  json params = json::object();
};

struct RunConfig {
  json weight;
  WeightSpec spec = WeightSpec::unweighted();
  QuadConfig quad;
  std::vector<CheckConfig> checks;
  std::string out_dir = "blab-out";
  std::set<std::string> formats{"json", "csv"};
  unsigned seed = 0;

  json to_json() const {
    json c = json::array();
    for (const auto& k : checks) c.push_back({{"name", k.name}, {"params", k.params}});
    return {{"weight", weight},
            {"quad", quad.to_json()},
            {"checks", c},
            {"output", {{"dir", out_dir}, {"formats", std::vector<std::string>(formats.begin(), formats.end())}}},
            {"seed", seed}};
  }
};

/// Registered names with the subcommand that owns them.
inline const std::map<std::string, std::string>& registry_groups() {
  static const std::map<std::string, std::string> g = {
      {"class-constants", "weights-report"},     {"moments-oracle", "moments"},
      {"moments-refinement", "moments"},         {"kernel-oracle", "kernel-verify"},
      {"norm-asymptotic", "kernel-verify"},      {"pointwise-decay", "kernel-verify"},
      {"integral-estimate", "kernel-verify"},    {"reproduce", "projection-verify"},
      {"projection-norms", "projection-verify"}, {"kernel-density", "projection-verify"},
      {"covering", "covering"},                  {"dbar", "dbar"},
      {"duality", "duality"},
  };
  return g;
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"weights-report",    "moments", "kernel-verify", "projection-verify",
                                             "covering",          "dbar",    "duality",       "suite"};
  return s;
}

inline QuadConfig quad_from_json(const json& j, QuadConfig q = {}) {
  if (!j.is_object()) throw UsageError("quad block must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "radial_panels") q.radial_panels = v.get<int>();
    else if (k == "gl_order") q.gl_order = v.get<int>();
    else if (k == "angular") q.angular = v.get<int>();
    else if (k == "r_max") q.r_max = v.get<double>();
    else throw UsageError("unknown quad field \"" + k + "\"");
  }
  if (q.radial_panels < 1 || q.gl_order < 1 || q.angular < 1 || !(q.r_max > 0 && q.r_max <= 1))
    throw UsageError("quad block out of range");
  return q;
}

inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::set<std::string> top = {"weight", "quad", "checks", "output", "seed"};
  for (const auto& [k, v] : j.items())
    if (!top.count(k)) throw UsageError("unknown config field \"" + k + "\"");
  RunConfig c;
  try {
    c.weight = j.value("weight", json{{"family", "exponential"}, {"c", 1.0}, {"alpha", 1.0}});
    c.spec = weight_from_json(c.weight);
    if (j.contains("quad")) c.quad = quad_from_json(j.at("quad"));
    if (!j.contains("checks") || !j.at("checks").is_array()) throw UsageError("config needs a \"checks\" array");
    for (const auto& e : j.at("checks")) {
      CheckConfig k;
      if (e.is_string()) {
        k.name = e.get<std::string>();
      } else if (e.is_object() && e.contains("name")) {
        k.name = e.at("name").get<std::string>();
        for (const auto& [f, v] : e.items())
          if (f != "name" && f != "parameters" && f != "params") throw UsageError("unknown check field \"" + f + "\"");
        if (e.contains("parameters")) k.params = e.at("parameters");
        if (e.contains("params")) k.params = e.at("params");
        if (!k.params.is_object()) throw UsageError("check parameters must be an object");
      } else {
        throw UsageError("each check is a name or an object with \"name\"");
      }
      if (!registry_groups().count(k.name)) throw UsageError("unknown check \"" + k.name + "\"");
      c.checks.push_back(std::move(k));
    }
    if (j.contains("output")) {
      const json& o = j.at("output");
      if (!o.is_object()) throw UsageError("output block must be an object");
      c.out_dir = o.value("dir", c.out_dir);
      if (o.contains("formats")) {
        c.formats.clear();
        for (const auto& f : o.at("formats")) {
          const std::string s = f.get<std::string>();
          if (s != "json" && s != "csv" && s != "svg") throw UsageError("unknown output format \"" + s + "\"");
          c.formats.insert(s);
        }
      }
    }
    if (j.contains("seed")) {
      const long long s = j.at("seed").get<long long>();
      if (s < 0) throw UsageError("seed must be non-negative");
      c.seed = static_cast<unsigned>(s);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const WeightSpecError& e) {
    throw UsageError(std::string("weight block: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Results.

/// One plotted series: x, y pairs with axis labels.
struct Series {
  std::string quantity, x_label, y_label;
  enum class Kind { line, scatter, history } kind = Kind::line;
  std::vector<double> x, y;
};

struct CheckResult {
  std::string name;
  json report = json::object();
  std::map<std::string, double> metrics;
  std::vector<std::string> failed;  // threshold violations
  bool pass = true;
  bool thresholded = false;
  std::string csv;
  std::vector<Series> plots;
  double seconds = 0;

  json to_json() const {
    return {{"name", name}, {"metrics", metrics}, {"pass", pass}, {"thresholded", thresholded},
            {"failed", failed}, {"report", report}};
  }
};

/// thresholds: {"metric": {"max": x}} or {"min": y}; pass iff all hold.
inline void apply_thresholds(CheckResult& r, const json& params) {
  if (!params.contains("thresholds")) return;
  const json& t = params.at("thresholds");
  if (!t.is_object()) throw UsageError(r.name + ": thresholds must be an object");
  r.thresholded = !t.empty();
  for (const auto& [metric, bound] : t.items()) {
    auto it = r.metrics.find(metric);
    if (it == r.metrics.end()) throw UsageError(r.name + ": no metric \"" + metric + "\"");
    const double v = it->second;
    if (!bound.is_object()) throw UsageError(r.name + ": threshold for " + metric + " must be an object");
    for (const auto& [kind, lim] : bound.items()) {
      const double b = lim.get<double>();
      bool ok;
      if (kind == "max") ok = v <= b;
      else if (kind == "min") ok = v >= b;
      else throw UsageError(r.name + ": threshold kind must be max or min");
      if (!(ok && std::isfinite(v))) r.failed.push_back(metric);
    }
  }
  r.pass = r.failed.empty();
}

inline std::string estimate_csv(const EstimateReport& rep) { return rep.to_csv(); }

// ---------------------------------------------------------------------------
// SVG.

/// Line, scatter or convergence chart; log y when max/min > 1e2.
inline std::string plot_svg(const Series& s) {
  if (s.x.empty() || s.x.size() != s.y.size()) throw UsageError("plot: no samples for " + s.quantity);
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  double x0 = *std::min_element(s.x.begin(), s.x.end()), x1 = *std::max_element(s.x.begin(), s.x.end());
  double y0 = *std::min_element(s.y.begin(), s.y.end()), y1 = *std::max_element(s.y.begin(), s.y.end());
  const bool logy = y0 > 0 && y1 / y0 > 1e2;
  auto fy = [&](double v) { return logy ? std::log10(v) : v; };
  double a = fy(y0), b = fy(y1);
  if (x1 == x0) x1 = x0 + 1;
  if (b == a) {
    a -= 0.5;
    b += 0.5;
  }
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (fy(v) - a) / (b - a) * (H - T - B); };
  std::ostringstream o;
  o.precision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">" << s.quantity
    << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = a + (b - a) * i / 4;
    const double yl = logy ? std::pow(10.0, yv) : yv;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"11\">" << xv
      << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yl) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << yl
      << "</text>\n";
  }
  o << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << s.x_label
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
    << ")\" text-anchor=\"middle\" font-size=\"12\">" << s.y_label << (logy ? " (log)" : "") << "</text>\n";
  std::vector<std::size_t> order(s.x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (s.kind != Series::Kind::scatter)
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s.x[i] < s.x[j]; });
  if (s.kind == Series::Kind::scatter) {
    for (std::size_t i : order)
      o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"steelblue\"/>\n";
  } else {
    o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i : order) o << px(s.x[i]) << "," << py(s.y[i]) << " ";
    o << "\"/>\n";
    if (s.kind == Series::Kind::history)
      for (std::size_t i : order)
        o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Plot of a named quantity from a finished run.
inline std::string plot(const std::vector<CheckResult>& results, const std::string& quantity) {
  for (const auto& r : results)
    for (const auto& s : r.plots)
      if (s.quantity == quantity) return plot_svg(s);
  throw UsageError("plot: unknown quantity \"" + quantity + "\"");
}

// ---------------------------------------------------------------------------
// Checks.

class Context {
 public:
  explicit Context(const RunConfig& cfg) : cfg_(&cfg) {}

  const RunConfig& config() const { return *cfg_; }
  const WeightSpec& spec() const { return cfg_->spec; }

  QuadConfig quad(const json& params) const {
    return params.contains("quad") ? quad_from_json(params.at("quad"), cfg_->quad) : cfg_->quad;
  }

  /// Rule and radial model for a quad block; level 1 is the refined rule.
  const QuadRule& rule(const QuadConfig& q, int level = 0) {
    const std::string key = q.to_json().dump() + "#" + std::to_string(level);
    auto it = rules_.find(key);
    if (it != rules_.end()) return it->second;
    QuadRule r = level == 0 ? q.build() : refine(rule(q, level - 1));
    return rules_.emplace(key, std::move(r)).first->second;
  }

  const KernelModel& model(const QuadConfig& q, int level = 0) {
    const std::string key = q.to_json().dump() + "#" + std::to_string(level);
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
    return models_.emplace(key, KernelModel::radial(spec(), rule(q, level))).first->second;
  }

  const TauFn& class_constants() {
    if (!tau_) tau_ = std::make_unique<TauFn>(estimate_class_constants(spec(), disk_samples(0.99, 40, 16)));
    return *tau_;
  }

 private:
  const RunConfig* cfg_;
  std::map<std::string, QuadRule> rules_;
  std::map<std::string, KernelModel> models_;
  std::unique_ptr<TauFn> tau_;
};

template <class T>
T param(const json& p, const std::string& key, T fallback) {
  if (!p.contains(key)) return fallback;
  try {
    return p.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("parameter \"" + key + "\" has the wrong type");
  }
}

inline double exponent_from_json(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return INFINITY;
    const auto slash = s.find('/');
    if (slash != std::string::npos) return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
    return std::stod(s);
  }
  return v.get<double>();
}

inline std::vector<double> exponents(const json& p, const std::string& key, std::vector<double> fallback) {
  if (!p.contains(key)) return fallback;
  std::vector<double> out;
  for (const auto& v : p.at(key)) out.push_back(exponent_from_json(v));
  return out;
}

inline std::string p_label(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream o;
  o << p;
  return o.str();
}

inline cplx random_in_disc(std::mt19937_64& rng, double r_max) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = r_max * std::sqrt(u(rng)), t = 2 * std::numbers::pi * u(rng);
  return std::polar(r, t);
}

/// Seeded pairs in {|z| <= r_max} with |z - xi| > delta (tau(z) + tau(xi)).
inline std::vector<std::pair<cplx, cplx>> decay_pairs(const WeightSpec& spec, double delta, int count, double r_max,
                                                      unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<cplx, cplx>> out;
  while (static_cast<int>(out.size()) < count) {
    const cplx z = random_in_disc(rng, r_max), xi = random_in_disc(rng, r_max);
    if (std::abs(z - xi) > delta * (spec.tau(z) + spec.tau(xi))) out.emplace_back(z, xi);
  }
  return out;
}

inline double rel_change(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(b - a) / std::max(std::abs(a), std::abs(b));
}

inline Series estimate_series(const EstimateReport& rep, const std::string& x_label, bool pair_distance,
                              Series::Kind kind) {
  Series s;
  s.quantity = rep.quantity;
  s.x_label = x_label;
  s.y_label = rep.quantity;
  s.kind = kind;
  for (const auto& e : rep.samples) {
    s.x.push_back(pair_distance && e.xi ? std::abs(e.z - *e.xi) : std::abs(e.z));
    s.y.push_back(e.value);
  }
  return s;
}

inline Series history_series(const std::string& quantity, const std::vector<double>& levels) {
  Series s;
  s.quantity = quantity + "_refinement";
  s.x_label = "level";
  s.y_label = quantity;
  s.kind = Series::Kind::history;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    s.x.push_back(static_cast<double>(i));
    s.y.push_back(levels[i]);
  }
  return s;
}

inline CheckResult check_class_constants(Context& ctx, const json& p) {
  CheckResult r;
  const auto samples = disk_samples(param(p, "r_max", 0.99), param(p, "n_r", 40), param(p, "n_theta", 16));
  const TauFn fn = estimate_class_constants(ctx.spec(), samples, param(p, "margin", 0.1));
  const ClassCertificate cert = certify_class_constants(fn, samples);
  r.metrics = {{"c1", fn.c1}, {"c2", fn.c2}, {"m_tau", fn.m_tau}, {"certificate_a", cert.worst_a},
               {"certificate_b", cert.worst_b}, {"certified", cert.holds() ? 1.0 : 0.0}};
  r.report = {{"weight", ctx.spec().to_json()}, {"c1", fn.c1}, {"c2", fn.c2}, {"m_tau", fn.m_tau},
              {"margin", fn.margin}, {"certificate", {{"a", cert.worst_a}, {"b", cert.worst_b}}}};
  Series s{"tau", "r", "tau(r)", Series::Kind::line, {}, {}};
  std::ostringstream csv;
  csv.precision(17);
  csv << "r,tau\n";
  for (int i = 0; i <= 99; ++i) {
    const double x = 0.99 * i / 99;
    s.x.push_back(x);
    s.y.push_back(ctx.spec().tau(x));
    csv << x << "," << s.y.back() << "\n";
  }
  r.csv = csv.str();
  r.plots.push_back(s);
  return r;
}

/// Independent moments where a closed form exists.
inline std::vector<std::pair<int, double>> moment_oracle(const WeightSpec& w, int N) {
  std::vector<std::pair<int, double>> out;
  switch (w.family()) {
    case WeightSpec::Family::unweighted:
      for (int n = 0; n <= N; ++n) out.emplace_back(n, 1.0 / (n + 1));
      break;
    case WeightSpec::Family::standard:
      for (int n = 0; n <= N; ++n) out.emplace_back(n, boost::math::beta(n + 1.0, w.beta() + 1.0));
      break;
    case WeightSpec::Family::exponential:
      if (w.alpha() != 1.0) throw UsageError("moments-oracle: exponential oracle needs alpha = 1");
      out.emplace_back(0, boost::math::expint(2, w.c()));
      break;
    default:
      throw UsageError("moments-oracle: no closed form for this weight family");
  }
  return out;
}

inline CheckResult check_moments_oracle(Context& ctx, const json& p) {
  CheckResult r;
  const int N = param(p, "N", 50);
  const auto oracle = moment_oracle(ctx.spec(), N);
  const MomentSeq m = compute_moments(ctx.spec(), N, ctx.rule(ctx.quad(p)));
  double worst = 0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,computed,oracle,rel_error\n";
  Series s{"moments_rel_error", "n", "relative error", Series::Kind::scatter, {}, {}};
  for (auto [n, want] : oracle) {
    const double got = m.moment(n), e = std::abs(got / want - 1.0);
    worst = std::max(worst, e);
    csv << n << "," << got << "," << want << "," << e << "\n";
    s.x.push_back(n);
    s.y.push_back(e);
  }
  r.metrics = {{"max_rel_error", worst}, {"checked", static_cast<double>(oracle.size())}};
  r.report = {{"N", N}, {"checked", oracle.size()}, {"max_rel_error", worst}};
  r.csv = csv.str();
  r.plots.push_back(s);
  return r;
}

inline CheckResult check_moments_refinement(Context& ctx, const json& p) {
  CheckResult r;
  const int N = param(p, "N", 50);
  const MomentSeq m = compute_moments(ctx.spec(), N, ctx.rule(ctx.quad(p)), true);
  std::ostringstream csv;
  csv.precision(17);
  csv << "n,log_moment\n";
  for (int n = 0; n <= N; ++n) csv << n << "," << m.log_moment(n) << "\n";
  r.metrics = {{"refinement_change", m.refinement_change}};
  r.report = {{"N", N}, {"log_moments", m.log_m}, {"refinement_change", m.refinement_change}};
  r.csv = csv.str();
  return r;
}

inline CheckResult check_kernel_oracle(Context& ctx, const json& p) {
  if (ctx.spec().family() != WeightSpec::Family::unweighted)
    throw UsageError("kernel-oracle: closed form needs the unweighted family");
  CheckResult r;
  const KernelModel& k = ctx.model(ctx.quad(p));
  std::mt19937_64 rng(ctx.config().seed);
  const int count = param(p, "pairs", 100);
  const double rm = param(p, "r_max", 0.9);
  double worst = 0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "z_re,z_im,xi_re,xi_im,rel_error\n";
  for (int i = 0; i < count; ++i) {
    const cplx z = random_in_disc(rng, rm), xi = random_in_disc(rng, rm);
    const cplx exact = 1.0 / std::pow(1.0 - xi * std::conj(z), 2);
    const double e = std::abs(eval_kernel(k, z, xi).to_complex() - exact) / std::abs(exact);
    worst = std::max(worst, e);
    csv << z.real() << "," << z.imag() << "," << xi.real() << "," << xi.imag() << "," << e << "\n";
  }
  r.metrics = {{"max_rel_error", worst}};
  r.report = {{"pairs", count}, {"r_max", rm}, {"max_rel_error", worst}};
  r.csv = csv.str();
  return r;
}

/// Runs `level` on the rule and its refinement; reports both and the per-sample drift.
template <class Level>
std::pair<EstimateReport, double> two_levels(Context& ctx, const QuadConfig& q, Level&& level) {
  EstimateReport coarse = level(ctx.model(q, 0), ctx.rule(q, 0));
  EstimateReport fine = level(ctx.model(q, 1), ctx.rule(q, 1));
  double drift = 0;
  for (std::size_t i = 0; i < coarse.samples.size(); ++i)
    drift = std::max(drift, rel_change(coarse.samples[i].value, fine.samples[i].value));
  fine.refinement.insert(fine.refinement.begin(), coarse.headline_value());
  return {fine, drift};
}

inline CheckResult check_norm_asymptotic_cmd(Context& ctx, const json& p) {
  CheckResult r;
  const double rm = param(p, "r_max", 0.95);
  const int n = param(p, "points", 20);
  std::vector<double> grid;
  for (int i = 0; i < n; ++i) grid.push_back(rm * i / (n - 1));
  auto [rep, drift] = two_levels(ctx, ctx.quad(p), [&](const KernelModel& k, const QuadRule&) {
    return check_norm_asymptotic(k, ctx.spec(), grid);
  });
  r.metrics = {{"spread", rep.spread}, {"drift", drift}, {"min", rep.min}, {"max", rep.max}};
  r.report = rep.to_json();
  r.report["drift"] = drift;
  r.csv = rep.to_csv();
  r.plots.push_back(estimate_series(rep, "r", false, Series::Kind::line));
  return r;
}

inline CheckResult check_pointwise_decay_cmd(Context& ctx, const json& p) {
  CheckResult r;
  const double M = param(p, "M", 3.0), delta = param(p, "delta", 0.06);
  const auto pairs = decay_pairs(ctx.spec(), delta, param(p, "pairs", 60), param(p, "r_max", 0.9),
                                 ctx.config().seed);
  auto [rep, drift] = two_levels(ctx, ctx.quad(p), [&](const KernelModel& k, const QuadRule&) {
    return check_pointwise_decay(k, ctx.spec(), M, pairs, delta);
  });
  const double headline_drift = rel_change(rep.refinement.front(), rep.refinement.back());
  r.metrics = {{"max", rep.max}, {"drift", headline_drift}, {"sample_drift", drift}, {"finite", rep.finite() ? 1.0 : 0.0}};
  r.report = rep.to_json();
  r.report["M"] = M;
  r.report["delta"] = delta;
  r.csv = rep.to_csv();
  r.plots.push_back(estimate_series(rep, "|z - xi|", true, Series::Kind::scatter));
  return r;
}

inline CheckResult check_integral_estimate_cmd(Context& ctx, const json& p) {
  CheckResult r;
  std::vector<cplx> zs;
  for (double x : param(p, "z", std::vector<double>{0.0, 0.3, 0.6, 0.8, 0.9})) zs.emplace_back(x, 0.0);
  const double beta = param(p, "beta", 0.0);
  auto [rep, drift] = two_levels(ctx, ctx.quad(p), [&](const KernelModel& k, const QuadRule& rule) {
    return check_integral_estimate(k, zs, beta, rule);
  });
  const double headline_drift = rel_change(rep.refinement.front(), rep.refinement.back());
  r.metrics = {{"sup", rep.max}, {"drift", headline_drift}, {"sample_drift", drift}, {"finite", rep.finite() ? 1.0 : 0.0}};
  r.report = rep.to_json();
  r.report["beta"] = beta;
  r.csv = rep.to_csv();
  r.plots.push_back(estimate_series(rep, "|z|", false, Series::Kind::line));
  return r;
}

inline CheckResult check_reproduce(Context& ctx, const json& p) {
  CheckResult r;
  const QuadConfig q = ctx.quad(p);
  const ProjectionOperator op(ctx.model(q), ctx.rule(q));
  const auto grid = eval_grid(param(p, "r_eval", 0.9));
  std::vector<std::pair<std::string, std::function<cplx(cplx)>>> fns;
  for (int k = 0; k <= param(p, "k_max", 8); ++k)
    fns.emplace_back("z^" + std::to_string(k), [k](cplx z) { return std::pow(z, k); });
  fns.emplace_back("1/(1-0.5z)", [](cplx z) { return 1.0 / (1.0 - 0.5 * z); });
  const double a = param(p, "kernel_point", 0.3);
  const auto coef = op.model().coefficients(a, op.rule().r_max);
  fns.emplace_back("K_a", [coef](cplx z) { return eval_series(coef, z).to_complex(); });
  double worst = 0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "function,max_rel_error\n";
  json per = json::object();
  for (const auto& [name, f] : fns) {
    const double e = reproduce_check(op, f, grid);
    worst = std::max(worst, e);
    csv << name << "," << e << "\n";
    per[name] = e;
  }
  r.metrics = {{"max_rel_error", worst}};
  r.report = {{"functions", per}, {"max_rel_error", worst}};
  r.csv = csv.str();
  return r;
}

inline CheckResult check_projection_norms(Context& ctx, const json& p) {
  CheckResult r;
  const QuadConfig q = ctx.quad(p);
  const auto ps = exponents(p, "p", {1.0, 4.0 / 3.0, 2.0, 4.0, INFINITY});
  const auto fns = norm_test_functions(ctx.spec(), param(p, "count", 50), ctx.config().seed);
  std::vector<std::vector<NormReport>> levels;
  for (int level = 0; level < 2; ++level) {
    const ProjectionOperator op(ctx.model(q, level), ctx.rule(q, level));
    levels.push_back(empirical_norms(op, ps, fns));
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "p,function,family,ratio_coarse,ratio_fine\n";
  json per = json::array();
  double max_drift = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const NormReport& c = levels[0][i];
    const NormReport& f = levels[1][i];
    const double drift = rel_change(c.max_ratio, f.max_ratio);
    max_drift = std::max(max_drift, drift);
    const std::string lab = p_label(ps[i]);
    r.metrics["max_ratio_p" + lab] = f.max_ratio;
    r.metrics["drift_p" + lab] = drift;
    if (ps[i] == 2.0) {
      double dev = std::abs(f.max_ratio - 1.0);
      for (std::size_t k = 0; k < f.ratios.size(); ++k)
        if (f.families[k] == "analytic") dev = std::max(dev, std::abs(f.ratios[k] - 1.0));
      r.metrics["p2_deviation"] = dev;
    }
    for (std::size_t k = 0; k < f.ratios.size(); ++k)
      csv << lab << "," << k << "," << f.families[k] << "," << c.ratios[k] << "," << f.ratios[k] << "\n";
    json e = f.to_json();
    e["coarse_max_ratio"] = c.max_ratio;
    e["drift"] = drift;
    per.push_back(e);
    Series s{"ratios_p" + lab, "function index", "||Pf|| / ||f||", Series::Kind::scatter, {}, {}};
    for (std::size_t k = 0; k < f.ratios.size(); ++k) {
      s.x.push_back(static_cast<double>(k));
      s.y.push_back(f.ratios[k]);
    }
    r.plots.push_back(s);
  }
  r.metrics["max_drift"] = max_drift;
  r.report = {{"exponents", per}, {"functions", fns.size()}};
  r.csv = csv.str();
  return r;
}

inline CheckResult check_kernel_density(Context& ctx, const json& p) {
  CheckResult r;
  const QuadConfig q = ctx.quad(p);
  const auto ks = param(p, "k", std::vector<int>{1, 4, 9, 16});
  const double pe = exponent_from_json(p.value("p", json(2.0)));
  const int k_max = *std::max_element(ks.begin(), ks.end());
  const DensityCurve curve = kernel_density_experiment(ctx.model(q), [](cplx w) { return w * w; }, ks, pe,
                                                       ctx.rule(q), density_centers(ctx.spec(), k_max));
  std::ostringstream csv;
  csv.precision(17);
  csv << "k,error,condition\n";
  Series s{"density_error", "k", "error", Series::Kind::history, {}, {}};
  for (const auto& d : curve.points) {
    csv << d.k << "," << d.error << "," << d.condition << "\n";
    s.x.push_back(d.k);
    s.y.push_back(d.error);
    r.metrics["error_k" + std::to_string(d.k)] = d.error;
  }
  r.metrics["strictly_decreasing"] = curve.strictly_decreasing() ? 1.0 : 0.0;
  r.report = curve.to_json();
  r.csv = csv.str();
  r.plots.push_back(s);
  return r;
}

struct CoveringSetup {
  Covering cov;
  PartitionOfUnity pou{cov, WeightSpec::unweighted()};
};

inline std::unique_ptr<CoveringSetup> covering_setup(Context& ctx, const json& p, double& m_tau) {
  m_tau = param(p, "m_tau", ctx.class_constants().m_tau);
  const double delta1 = param(p, "delta1_factor", 0.5) * m_tau;
  auto s = std::make_unique<CoveringSetup>();
  s->cov = build_covering(ctx.spec(), delta1, param(p, "r_max", 0.95), m_tau);
  s->pou = PartitionOfUnity(s->cov, ctx.spec());
  return s;
}

inline CheckResult check_covering_cmd(Context& ctx, const json& p) {
  CheckResult r;
  double m_tau = 0;
  const auto s = covering_setup(ctx, p, m_tau);
  const Covering& cov = s->cov;
  const Covering again = build_covering(ctx.spec(), cov.delta1, cov.r_max, m_tau);
  const bool identical = again.centers == cov.centers && again.radii == cov.radii;
  const CoveringReport rep = verify_covering(cov, ctx.spec(), param(p, "verify_density", 10.0));
  std::mt19937_64 rng(ctx.config().seed);
  std::vector<cplx> pts;
  for (int i = 0; i < param(p, "sum_points", 10000); ++i) pts.push_back(random_in_disc(rng, cov.r_max));
  const double defect = s->pou.sum_defect(pts);
  const auto dens = param(p, "gradient_density", std::vector<double>{16.0, 32.0});
  const double g_r = param(p, "gradient_r_max", 0.5);
  const Covering gc = build_covering(ctx.spec(), cov.delta1, g_r, m_tau);
  const PartitionOfUnity gp(gc, ctx.spec());
  std::vector<double> consts;
  for (double d : dens) consts.push_back(gp.gradient_constant(covering_probes(gc, ctx.spec(), d)));
  const double g_drift = consts.size() > 1 ? rel_change(consts[consts.size() - 2], consts.back()) : 0.0;
  r.metrics = {{"conditions_pass", rep.all_pass() ? 1.0 : 0.0},
               {"centres", static_cast<double>(cov.size())},
               {"multiplicity", cov.multiplicity},
               {"measured_multiplicity", rep.measured_multiplicity},
               {"pou_sum_defect", defect},
               {"gradient_constant", consts.back()},
               {"gradient_drift", g_drift},
               {"rerun_identical", identical ? 1.0 : 0.0}};
  r.report = {{"delta1", cov.delta1}, {"delta0", cov.delta0}, {"delta", cov.delta},   {"m_tau", m_tau},
              {"r_max", cov.r_max},   {"centres", cov.size()},  {"conditions", rep.to_json()},
              {"pou_sum_defect", defect}, {"gradient_constants", consts}, {"gradient_density", dens}};
  std::ostringstream csv;
  csv.precision(17);
  csv << "a_re,a_im,rho\n";
  for (std::size_t j = 0; j < cov.size(); ++j)
    csv << cov.centers[j].real() << "," << cov.centers[j].imag() << "," << cov.radii[j] << "\n";
  r.csv = csv.str();
  Series sr{"covering_radii", "|a_j|", "rho_j", Series::Kind::scatter, {}, {}};
  for (std::size_t j = 0; j < cov.size(); j += std::max<std::size_t>(1, cov.size() / 2000)) {
    sr.x.push_back(std::abs(cov.centers[j]));
    sr.y.push_back(cov.radii[j]);
  }
  r.plots.push_back(sr);
  return r;
}

inline CheckResult check_dbar_cmd(Context& ctx, const json& p) {
  CheckResult r;
  double m_tau = 0;
  const auto s = covering_setup(ctx, p, m_tau);
  const QuadConfig q = ctx.quad(p);
  const KernelModel& model = ctx.model(q);
  const double r0 = param(p, "cut_inner", 0.5), r1 = param(p, "cut_outer", 0.6);
  const double eval_r = param(p, "norm_radius", 0.9);
  const auto f = [r0, r1](cplx z) { return cplx(smooth_cutoff(std::abs(z), r0, r1)); };
  const auto alphas = param(p, "alpha", std::vector<double>{-1.0, 0.0, 2.0});
  const auto ps = exponents(p, "p", {1.0, 2.0, INFINITY});
  const auto interior = disk_samples(param(p, "residual_radius", 0.7), 7, 12, 0.1);

  DbarOptions opt;
  std::map<std::string, std::vector<double>> lp;
  ResidualReport residual;
  std::size_t discs = 0;
  for (int level = 0; level < 2; ++level) {
    const DbarOptions o = level == 0 ? opt : opt.refined();
    const DbarSolver solver(s->cov, s->pou, model, f, r1, eval_r, o);
    discs = solver.disc_count();
    if (level == 0) residual = dbar_residual(solver, f, interior, ctx.spec(), eval_r);
    const PointRule rule = tau_rule(ctx.spec(), s->cov.delta1, eval_r, o.norm_density);
    const auto u = solver.evaluate(rule.nodes);
    std::vector<cplx> fv(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) fv[i] = f(rule.nodes[i]);
    for (double a : alphas)
      for (double pe : ps) {
        const WeightSpec star = WeightSpec::associated(ctx.spec(), a);
        std::ostringstream key;
        key << "lp_a" << a << "_p" << p_label(pe);
        lp[key.str()].push_back(lp_ratio(rule, u, fv, star, pe));
      }
  }
  double lp_max = 0, lp_drift = 0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "quantity,coarse,fine,drift\n";
  for (const auto& [k, v] : lp) {
    const double d = rel_change(v[0], v[1]);
    r.metrics[k] = v[1];
    lp_max = std::max(lp_max, v[1]);
    lp_drift = std::max(lp_drift, d);
    csv << k << "," << v[0] << "," << v[1] << "," << d << "\n";
  }
  std::vector<cplx> zs;
  for (double x : param(p, "G_z", std::vector<double>{0.0, 0.3, 0.6, 0.8})) zs.emplace_back(x, 0.0);
  const GKernel G(s->cov, s->pou, model);
  const EstimateReport g = check_G_integral(G, ctx.spec(), zs, 2, param(p, "G_density", 2.0));
  csv << "G_sup," << g.refinement.front() << "," << g.refinement.back() << "," << g.drift() << "\n";
  r.metrics["residual_rel_l2"] = residual.rel_l2;
  r.metrics["residual_sup"] = residual.sup;
  r.metrics["lp_max"] = lp_max;
  r.metrics["lp_drift"] = lp_drift;
  r.metrics["G_sup"] = g.max;
  r.metrics["G_drift"] = g.drift();
  r.metrics["finite"] = std::isfinite(lp_max) && g.finite() ? 1.0 : 0.0;
  r.report = {{"discs", discs},
              {"cut", {r0, r1}},
              {"residual", {{"sup", residual.sup}, {"l2", residual.l2}, {"rel_l2", residual.rel_l2},
                            {"points", residual.points}, {"skipped", residual.skipped}}},
              {"lp_ratio", lp},
              {"G_integral", g.to_json()}};
  r.csv = csv.str();
  r.plots.push_back(estimate_series(g, "|z|", false, Series::Kind::line));
  r.plots.push_back(history_series("G_sup", g.refinement));
  return r;
}

inline CheckResult check_duality_cmd(Context& ctx, const json& p) {
  CheckResult r;
  const QuadConfig q = p.contains("quad") ? ctx.quad(p) : QuadConfig{8, 12, 48, 0.99};
  const QuadRule& rule = ctx.rule(q);
  const int d = param(p, "degree", 8), trials = param(p, "trials", 20), restarts = param(p, "restarts", 20);
  const unsigned seed = ctx.config().seed, reseed = seed + param(p, "reseed_offset", 1000u);
  const auto ps = exponents(p, "p", {4.0 / 3.0, 4.0});
  const EstimateReport anchor = duality_ratio(ctx.spec(), rule, 2.0, d, 5, seed, restarts);
  r.metrics["p2_deviation"] = std::max(std::abs(anchor.max - 1.0), std::abs(anchor.min - 1.0));
  std::ostringstream csv;
  csv.precision(17);
  csv << "p,seed,trial,ratio\n";
  json per = json::array();
  double worst = 0;
  for (double pe : ps) {
    const EstimateReport a = duality_ratio(ctx.spec(), rule, pe, d, trials, seed, restarts);
    const EstimateReport b = duality_ratio(ctx.spec(), rule, pe, d, trials, reseed, restarts);
    const double drift = std::max(rel_change(a.min, b.min), rel_change(a.max, b.max));
    worst = std::max(worst, drift);
    const std::string lab = p_label(pe);
    r.metrics["min_p" + lab] = std::min(a.min, b.min);
    r.metrics["max_p" + lab] = std::max(a.max, b.max);
    r.metrics["endpoint_drift_p" + lab] = drift;
    for (const auto* rep : {&a, &b})
      for (std::size_t t = 0; t < rep->samples.size(); ++t)
        csv << lab << "," << (rep == &a ? seed : reseed) << "," << t << "," << rep->samples[t].value << "\n";
    per.push_back({{"p", lab}, {"interval", {a.min, a.max}}, {"reseeded_interval", {b.min, b.max}}, {"drift", drift}});
    Series s{"duality_p" + lab, "trial", "ratio", Series::Kind::scatter, {}, {}};
    for (std::size_t t = 0; t < a.samples.size(); ++t) {
      s.x.push_back(static_cast<double>(t));
      s.y.push_back(a.samples[t].value);
    }
    r.plots.push_back(s);
  }
  r.metrics["max_endpoint_drift"] = worst;
  r.report = {{"degree", d}, {"trials", trials}, {"anchor", anchor.to_json()}, {"exponents", per}};
  r.csv = csv.str();
  return r;
}

using CheckFn = std::function<CheckResult(Context&, const json&)>;

inline const std::map<std::string, CheckFn>& registry() {
  static const std::map<std::string, CheckFn> r = {
      {"class-constants", check_class_constants},
      {"moments-oracle", check_moments_oracle},
      {"moments-refinement", check_moments_refinement},
      {"kernel-oracle", check_kernel_oracle},
      {"norm-asymptotic", check_norm_asymptotic_cmd},
      {"pointwise-decay", check_pointwise_decay_cmd},
      {"integral-estimate", check_integral_estimate_cmd},
      {"reproduce", check_reproduce},
      {"projection-norms", check_projection_norms},
      {"kernel-density", check_kernel_density},
      {"covering", check_covering_cmd},
      {"dbar", check_dbar_cmd},
      {"duality", check_duality_cmd},
  };
  return r;
}

inline CheckResult run_check(Context& ctx, const CheckConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = registry().at(c.name)(ctx, c.params);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    r = CheckResult{};
    r.pass = false;
    r.thresholded = true;
    r.failed = {"error"};
    r.report = {{"error", e.what()}};
  }
  r.name = c.name;
  if (r.failed.empty()) apply_thresholds(r, c.params);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// ---------------------------------------------------------------------------
// Run.

struct RunResult {
  std::vector<CheckResult> checks;
  json report;
  int exit_code = 0;
};

inline std::vector<CheckConfig> select_checks(const RunConfig& cfg, const std::string& subcommand) {
  if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
    throw UsageError("unknown subcommand \"" + subcommand + "\"");
  std::vector<CheckConfig> out;
  for (const auto& c : cfg.checks)
    if (subcommand == "suite" || registry_groups().at(c.name) == subcommand) out.push_back(c);
  if (out.empty()) throw UsageError("config has no checks for \"" + subcommand + "\"");
  return out;
}

/// Executes the selected checks in order; nothing is written here.
inline RunResult execute(const RunConfig& cfg, const std::string& subcommand, std::ostream* log = nullptr) {
  const auto selected = select_checks(cfg, subcommand);
  Context ctx(cfg);
  RunResult out;
  json checks = json::array(), timing = json::object();
  bool all = true;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    CheckResult r = run_check(ctx, selected[i]);
    if (log) *log << r.name << ": " << (r.pass ? "pass" : "FAIL") << " (" << r.seconds << " s)\n";
    all = all && r.pass;
    checks.push_back(r.to_json());
    timing[std::to_string(i) + ":" + r.name] = r.seconds;
    out.checks.push_back(std::move(r));
  }
  out.report = {{"config", cfg.to_json()}, {"subcommand", subcommand}, {"checks", checks}, {"pass", all},
                {"timing", timing}};
  out.exit_code = all ? 0 : 1;
  return out;
}

/// report.json, one CSV per check and one SVG per plotted series.
inline void write_outputs(const RunConfig& cfg, const RunResult& res) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream o(dir / "report.json");
    o << res.report.dump(2) << "\n";
  }
  for (std::size_t i = 0; i < res.checks.size(); ++i) {
    const CheckResult& r = res.checks[i];
    std::ostringstream stem;
    stem << (i < 9 ? "0" : "") << i + 1 << "-" << r.name;
    if (cfg.formats.count("csv") && !r.csv.empty()) std::ofstream(dir / (stem.str() + ".csv")) << r.csv;
    if (cfg.formats.count("svg"))
      for (const Series& s : r.plots)
        if (!s.x.empty()) std::ofstream(dir / (stem.str() + "-" + s.quantity + ".svg")) << plot_svg(s);
  }
}

}  // namespace blab::cli
