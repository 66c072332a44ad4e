#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "log_real.hpp"

namespace blab {

using HoloFn = std::function<cplx(cplx)>;

/// Serializable descriptor of a holomorphic function on the disk.
struct AnalyticFn {
  enum class Kind { polynomial, exponential, geometric };

  Kind kind = Kind::polynomial;
  std::vector<cplx> coeffs{cplx(1.0, 0.0)};  // polynomial: sum coeffs[k] z^k
  cplx scale{1.0, 0.0};                       // exponential: exp(scale z)
  cplx pole_inv{0.5, 0.0};                    // geometric: 1/(1 - pole_inv z)

  static AnalyticFn polynomial(std::vector<cplx> c) {
    AnalyticFn f;
    f.coeffs = std::move(c);
    return f;
  }
  static AnalyticFn monomial(int k, cplx lead = 1.0) {
    std::vector<cplx> c(static_cast<std::size_t>(k) + 1, 0.0);
    c.back() = lead;
    return polynomial(std::move(c));
  }
  static AnalyticFn exponential(cplx s) {
    AnalyticFn f;
    f.kind = Kind::exponential;
    f.scale = s;
    return f;
  }
  static AnalyticFn geometric(cplx a) {
    AnalyticFn f;
    f.kind = Kind::geometric;
    f.pole_inv = a;
    return f;
  }

  cplx operator()(cplx z) const {
    switch (kind) {
      case Kind::polynomial: {
        cplx acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
        return acc;
      }
      case Kind::exponential:
        return std::exp(scale * z);
      case Kind::geometric:
        return 1.0 / (1.0 - pole_inv * z);
    }
    return 0.0;
  }

  /// log|f(z)|, exact for the exponential kind even when |f| overflows.
  double log_abs(cplx z) const {
    if (kind == Kind::exponential) return (scale * z).real();
    return std::log(std::abs((*this)(z)));
  }

  /// True when f has no zeros in the closed unit disk (checked exactly per kind).
  bool zero_free_on_disk() const {
    switch (kind) {
      case Kind::exponential:
        return true;
      case Kind::geometric:
        return true;
      case Kind::polynomial: {
        // Constant-dominant test: |c0| > sum_{k>0} |ck| implies no zeros in |z| <= 1.
        double rest = 0.0;
        for (std::size_t k = 1; k < coeffs.size(); ++k) rest += std::abs(coeffs[k]);
        return !coeffs.empty() && std::abs(coeffs[0]) > rest;
      }
    }
    return false;
  }

  HoloFn fn() const {
    return [f = *this](cplx z) { return f(z); };
  }
};

inline cplx complex_from_json(const nlohmann::json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw UsageError("complex value must be a number or [re, im]");
}

inline nlohmann::json complex_to_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline AnalyticFn analytic_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "polynomial") {
    std::vector<cplx> c;
    for (const auto& e : j.at("coeffs")) c.push_back(complex_from_json(e));
    return AnalyticFn::polynomial(std::move(c));
  }
  if (kind == "monomial") return AnalyticFn::monomial(j.at("k").get<int>());
  if (kind == "exp") return AnalyticFn::exponential(complex_from_json(j.value("scale", nlohmann::json(1.0))));
  if (kind == "geometric") return AnalyticFn::geometric(complex_from_json(j.at("a")));
  throw UsageError("unknown analytic function kind: " + kind);
}

inline nlohmann::json analytic_to_json(const AnalyticFn& f) {
  switch (f.kind) {
    case AnalyticFn::Kind::polynomial: {
      nlohmann::json c = nlohmann::json::array();
      for (auto z : f.coeffs) c.push_back(complex_to_json(z));
      return {{"kind", "polynomial"}, {"coeffs", c}};
    }
    case AnalyticFn::Kind::exponential:
      return {{"kind", "exp"}, {"scale", complex_to_json(f.scale)}};
    case AnalyticFn::Kind::geometric:
      return {{"kind", "geometric"}, {"a", complex_to_json(f.pole_inv)}};
  }
  return {};
}

}  // namespace blab
