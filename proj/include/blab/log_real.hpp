#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

namespace blab {

using cplx = std::complex<double>;

/// Non-negative real stored as (zero flag, log magnitude).
struct LogReal {
  bool zero = true;
  double log_magnitude = -std::numeric_limits<double>::infinity();

  LogReal() = default;

  static LogReal from_log(double log_mag) {
    LogReal r;
    if (std::isinf(log_mag) && log_mag < 0) return r;
    r.zero = false;
    r.log_magnitude = log_mag;
    return r;
  }

  static LogReal from_double(double x) {
    if (x < 0) throw std::domain_error("LogReal: negative value");
    if (x == 0) return {};
    return from_log(std::log(x));
  }

  /// exp(log_magnitude); underflows quietly to 0.
  double to_double() const { return zero ? 0.0 : std::exp(log_magnitude); }

  LogReal& operator*=(const LogReal& o) {
    if (zero || o.zero) return *this = LogReal{};
    log_magnitude += o.log_magnitude;
    return *this;
  }
  LogReal& operator/=(const LogReal& o) {
    if (o.zero) throw std::domain_error("LogReal: division by zero");
    if (zero) return *this;
    log_magnitude -= o.log_magnitude;
    return *this;
  }
  LogReal& operator+=(const LogReal& o) {
    if (o.zero) return *this;
    if (zero) return *this = o;
    const double hi = std::max(log_magnitude, o.log_magnitude);
    const double lo = std::min(log_magnitude, o.log_magnitude);
    log_magnitude = hi + std::log1p(std::exp(lo - hi));
    return *this;
  }

  LogReal pow(double e) const {
    if (zero) return e == 0 ? from_log(0.0) : LogReal{};
    return from_log(log_magnitude * e);
  }

  friend LogReal operator*(LogReal a, const LogReal& b) { return a *= b; }
  friend LogReal operator/(LogReal a, const LogReal& b) { return a /= b; }
  friend LogReal operator+(LogReal a, const LogReal& b) { return a += b; }
  friend bool operator<(const LogReal& a, const LogReal& b) {
    if (a.zero) return !b.zero;
    if (b.zero) return false;
    return a.log_magnitude < b.log_magnitude;
  }
};

/// Complex number as (log magnitude, phase); phase in (-pi, pi].
struct LogComplex {
  bool zero = true;
  double log_magnitude = -std::numeric_limits<double>::infinity();
  double phase = 0.0;

  static LogComplex from_polar_log(double log_mag, double ph) {
    LogComplex c;
    if (std::isinf(log_mag) && log_mag < 0) return c;
    c.zero = false;
    c.log_magnitude = log_mag;
    c.phase = normalize_phase(ph);
    return c;
  }

  static LogComplex from_complex(cplx z) {
    if (z == cplx(0.0, 0.0)) return {};
    return from_polar_log(std::log(std::abs(z)), std::arg(z));
  }

  cplx to_complex() const {
    if (zero) return {0.0, 0.0};
    return std::polar(std::exp(log_magnitude), phase);
  }

  LogReal magnitude() const {
    return zero ? LogReal{} : LogReal::from_log(log_magnitude);
  }

  LogComplex conj() const {
    LogComplex c = *this;
    if (!zero) c.phase = normalize_phase(-phase);
    return c;
  }

  friend LogComplex operator*(const LogComplex& a, const LogComplex& b) {
    if (a.zero || b.zero) return {};
    return from_polar_log(a.log_magnitude + b.log_magnitude, a.phase + b.phase);
  }
  friend LogComplex operator/(const LogComplex& a, const LogComplex& b) {
    if (b.zero) throw std::domain_error("LogComplex: division by zero");
    if (a.zero) return {};
    return from_polar_log(a.log_magnitude - b.log_magnitude, a.phase - b.phase);
  }

  static double normalize_phase(double ph) {
    constexpr double pi = std::numbers::pi;
    if (ph > -pi && ph <= pi) return ph;
    ph = std::remainder(ph, 2 * pi);
    if (ph <= -pi) ph += 2 * pi;
    return ph;
  }
};

/// Max-shifted complex accumulator: value = mantissa * exp(scale).
class ScaledSum {
 public:
  void add(const LogComplex& term) {
    if (term.zero) return;
    add_scaled(std::polar(1.0, term.phase), term.log_magnitude);
  }

  /// Adds m * exp(log_scale).
  void add_scaled(cplx m, double log_scale) {
    if (m == cplx(0.0, 0.0)) return;
    if (empty_) {
      scale_ = log_scale;
      mantissa_ = m;
      empty_ = false;
      return;
    }
    if (log_scale > scale_) {
      mantissa_ *= std::exp(scale_ - log_scale);
      scale_ = log_scale;
      mantissa_ += m;
    } else {
      mantissa_ += m * std::exp(log_scale - scale_);
    }
  }

  void add(cplx z) { add_scaled(z, 0.0); }

  LogComplex result() const {
    if (empty_ || mantissa_ == cplx(0.0, 0.0)) return {};
    return LogComplex::from_polar_log(std::log(std::abs(mantissa_)) + scale_,
                                      std::arg(mantissa_));
  }

  cplx value() const { return result().to_complex(); }

  bool empty() const { return empty_; }

 private:
  bool empty_ = true;
  double scale_ = 0.0;
  cplx mantissa_{0.0, 0.0};
};

/// log(sum_i exp(x_i)) accumulated in `Acc` precision.
template <class Acc = double, class Range>
double log_sum_exp(const Range& xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (std::isinf(hi)) return hi;
  Acc s = 0;
  for (double x : xs) s += std::exp(static_cast<Acc>(x - hi));
  return hi + static_cast<double>(std::log(s));
}

}  // namespace blab
