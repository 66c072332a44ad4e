#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "log_real.hpp"

namespace blab {

/// Bounded-ratio summary of one estimate: per-sample values, their range and
/// the headline statistic at each refinement level.
struct EstimateReport {
  struct Sample {
    cplx z;
    std::optional<cplx> xi;
    double value = 0;
  };
  enum class Headline { max, min, spread };

  std::string quantity;
  std::vector<Sample> samples;
  double min = 0, max = 0, spread = 1;
  Headline headline = Headline::max;
  std::vector<double> refinement;  // headline value per level, coarse to fine
  std::map<std::string, double> extras;

  void add(cplx z, double value) { samples.push_back({z, std::nullopt, value}); }
  void add(cplx z, cplx xi, double value) { samples.push_back({z, xi, value}); }

  double headline_value() const {
    switch (headline) {
      case Headline::min: return min;
      case Headline::spread: return spread;
      default: return max;
    }
  }

  /// Recomputes min/max/spread and appends the headline to the history.
  EstimateReport& finalize() {
    if (samples.empty()) {
      min = max = 0;
      spread = 1;
    } else {
      min = max = samples.front().value;
      for (const auto& s : samples) {
        min = std::min(min, s.value);
        max = std::max(max, s.value);
      }
      spread = min > 0 ? max / min : std::numeric_limits<double>::infinity();
    }
    refinement.push_back(headline_value());
    return *this;
  }

  /// Relative change of the headline between the two finest levels.
  double drift() const {
    if (refinement.size() < 2) return 0.0;
    const double a = refinement[refinement.size() - 2], b = refinement.back();
    if (a == b) return 0.0;
    return std::abs(b - a) / std::max(std::abs(a), std::abs(b));
  }

  bool finite() const { return std::isfinite(min) && std::isfinite(max); }

  nlohmann::json to_json() const {
    using nlohmann::json;
    json s = json::array();
    for (const auto& x : samples) {
      json e = {{"z", {x.z.real(), x.z.imag()}}, {"value", x.value}};
      if (x.xi) e["xi"] = {x.xi->real(), x.xi->imag()};
      s.push_back(e);
    }
    json j = {{"quantity", quantity}, {"samples", s},  {"min", min},
              {"max", max},           {"spread", spread}, {"refinement", refinement}};
    if (!extras.empty()) j["extras"] = extras;
    return j;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "z_re,z_im,xi_re,xi_im,value\n";
    for (const auto& x : samples) {
      os << x.z.real() << ',' << x.z.imag() << ',';
      if (x.xi) os << x.xi->real() << ',' << x.xi->imag();
      else os << ',';
      os << ',' << x.value << '\n';
    }
    return os.str();
  }
};

/// Runs `level(k)` for k = 0..levels-1 and keeps the finest samples with the
/// headline history of all levels.
template <class Level>
EstimateReport with_refinement(int levels, Level&& level) {
  EstimateReport out;
  std::vector<double> history;
  for (int k = 0; k < levels; ++k) {
    out = level(k);
    history.push_back(out.headline_value());
  }
  out.refinement = history;
  return out;
}

}  // namespace blab
