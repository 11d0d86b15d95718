#pragma once

// Unit-mean service-time distributions: survival, density, hazard, sampling.

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sqd/error.hpp"
#include "sqd/format.hpp"

namespace sqd {

enum class DistKind { exponential, gamma, weibull, lognormal, pareto, burr };

/// Finds k with k * B(k - 1/c, 1 + 1/c) = 1, the Burr XII shape that gives unit mean.
/// The left side decreases from +inf (k -> 1/c) to 0 (k -> inf), so plain bisection on
/// (1/c, 100] is enough.
inline double solve_burr_k(double c) {
  if (!(c > 1.0) || !std::isfinite(c)) {
    throw ConfigError("burr: c must be > 1 (got " + shortest(c) + ")");
  }
  auto residual = [c](double k) {
    return k * boost::math::beta(k - 1.0 / c, 1.0 + 1.0 / c) - 1.0;
  };
  double lo = 1.0 / c;
  double hi = 100.0;
  if (residual(hi) > 0.0) throw ConfigError("burr: no unit-mean k in (1/c, 100] for c=" + shortest(c));
  // Step lo off the pole so the bracket has a finite positive end.
  double step = 1e-3;
  while (!(residual(lo + step) > 0.0)) {
    step *= 0.5;
    if (step < 1e-300) throw ConfigError("burr: cannot bracket unit-mean k for c=" + shortest(c));
  }
  lo += step;
  for (int it = 0; it < 400; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  double k = std::abs(residual(lo)) < std::abs(residual(hi)) ? lo : hi;
  if (std::abs(residual(k)) >= 1e-10) {
    throw ConfigError("burr: unit-mean residual " + shortest(residual(k)) + " too large for c=" + shortest(c));
  }
  return k;
}

/// A service law normalised to mean 1. Immutable after construction; all parameters
/// are validated by the named constructors.
class ServiceDistribution {
 public:
  static ServiceDistribution exponential() { return ServiceDistribution(DistKind::exponential, 1.0); }

  static ServiceDistribution gamma(double alpha) {
    require(alpha > 0.0, "gamma: alpha must be > 0");
    return ServiceDistribution(DistKind::gamma, alpha);
  }

  static ServiceDistribution weibull(double a) {
    require(a > 0.0, "weibull: a must be > 0");
    ServiceDistribution d(DistKind::weibull, a);
    d.scale_ = 1.0 / std::tgamma(1.0 + 1.0 / a);
    return d;
  }

  static ServiceDistribution lognormal(double sigma) {
    require(sigma > 0.0, "lognormal: sigma must be > 0");
    ServiceDistribution d(DistKind::lognormal, sigma);
    d.scale_ = -0.5 * sigma * sigma;  // mu
    return d;
  }

  static ServiceDistribution pareto(double alpha) {
    require(alpha > 1.0, "pareto: alpha must be > 1 for a finite mean");
    ServiceDistribution d(DistKind::pareto, alpha);
    d.scale_ = (alpha - 1.0) / alpha;  // x_m
    return d;
  }

  static ServiceDistribution burr(double c) {
    require(c > 1.0, "burr: c must be > 1");
    ServiceDistribution d(DistKind::burr, c);
    d.second_ = solve_burr_k(c);
    require(c * d.second_ > 1.0, "burr: c*k must be > 1");
    return d;
  }

  [[nodiscard]] DistKind kind() const noexcept { return kind_; }
  /// Shape parameter as written in the spec string (alpha, a, sigma, alpha, c).
  [[nodiscard]] double shape() const noexcept { return shape_; }
  /// Burr k (solved); 0 for other kinds.
  [[nodiscard]] double burr_k() const noexcept { return second_; }
  /// Weibull scale b, lognormal mu or Pareto x_m, depending on kind.
  [[nodiscard]] double scale() const noexcept { return scale_; }
  [[nodiscard]] double support_end() const noexcept { return std::numeric_limits<double>::infinity(); }

  [[nodiscard]] double survival(double x) const {
    if (x <= 0.0) return 1.0;
    switch (kind_) {
      case DistKind::exponential: return std::exp(-x);
      case DistKind::gamma: return boost::math::gamma_q(shape_, shape_ * x);
      case DistKind::weibull: return std::exp(-std::pow(x / scale_, shape_));
      case DistKind::lognormal:
        return 0.5 * boost::math::erfc((std::log(x) - scale_) / (std::numbers::sqrt2 * shape_));
      case DistKind::pareto: return x < scale_ ? 1.0 : std::pow(scale_ / x, shape_);
      case DistKind::burr: return std::pow(1.0 + std::pow(x, shape_), -second_);
    }
    return 0.0;
  }

  [[nodiscard]] double density(double x) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (x < 0.0) return 0.0;
    switch (kind_) {
      case DistKind::exponential: return std::exp(-x);
      case DistKind::gamma:
        if (x == 0.0) return shape_ < 1.0 ? inf : (shape_ == 1.0 ? 1.0 : 0.0);
        return shape_ * boost::math::gamma_p_derivative(shape_, shape_ * x);
      case DistKind::weibull: {
        if (x == 0.0) return shape_ < 1.0 ? inf : (shape_ == 1.0 ? 1.0 / scale_ : 0.0);
        double z = x / scale_;
        return shape_ / scale_ * std::pow(z, shape_ - 1.0) * std::exp(-std::pow(z, shape_));
      }
      case DistKind::lognormal: {
        if (x == 0.0) return 0.0;
        double z = (std::log(x) - scale_) / shape_;
        return std::exp(-0.5 * z * z) / (x * shape_ * std::sqrt(2.0 * std::numbers::pi));
      }
      case DistKind::pareto:
        return x < scale_ ? 0.0 : shape_ * std::pow(scale_, shape_) / std::pow(x, shape_ + 1.0);
      case DistKind::burr: {
        if (x == 0.0) return 0.0;
        double xc = std::pow(x, shape_);
        return second_ * shape_ * xc / x * std::pow(1.0 + xc, -second_ - 1.0);
      }
    }
    return 0.0;
  }

  [[nodiscard]] double hazard(double x) const {
    double s = survival(x);
    if (!(s > 0.0)) throw Error("hazard: survival vanishes at x=" + shortest(x));
    return density(x) / s;
  }

  /// Integral of the survival function over [x, inf), i.e. E[(S - x)^+], in closed form.
  [[nodiscard]] double tail_integral(double x) const {
    if (x <= 0.0) return 1.0 - x;  // unit mean
    switch (kind_) {
      case DistKind::exponential: return std::exp(-x);
      case DistKind::gamma:
        return boost::math::gamma_q(shape_ + 1.0, shape_ * x) - x * boost::math::gamma_q(shape_, shape_ * x);
      case DistKind::weibull: return boost::math::gamma_q(1.0 / shape_, std::pow(x / scale_, shape_));
      case DistKind::lognormal: {
        double upper = 0.5 * boost::math::erfc((std::log(x) - scale_ - shape_ * shape_) /
                                               (std::numbers::sqrt2 * shape_));
        return std::max(0.0, upper - x * survival(x));
      }
      case DistKind::pareto:
        if (x < scale_) return (scale_ - x) + scale_ / (shape_ - 1.0);
        return std::pow(scale_, shape_) * std::pow(x, 1.0 - shape_) / (shape_ - 1.0);
      case DistKind::burr: {
        // substitute t = 1/(1+x^c): (1/c) * B_t(k - 1/c, 1/c)
        double t = 1.0 / (1.0 + std::pow(x, shape_));
        return boost::math::beta(second_ - 1.0 / shape_, 1.0 / shape_, t) / shape_;
      }
    }
    return 0.0;
  }

  /// Points where the density jumps; quadrature over this law must split there.
  [[nodiscard]] std::vector<double> kinks() const {
    if (kind_ == DistKind::pareto) return {scale_};
    return {};
  }

  /// Power-law tail index beta with G-bar(x) <= C x^-beta (infinite for light or
  /// lognormal tails).
  [[nodiscard]] double tail_index() const {
    if (kind_ == DistKind::pareto) return shape_;
    if (kind_ == DistKind::burr) return shape_ * second_;
    return std::numeric_limits<double>::infinity();
  }

  /// Draws one service time. `Rng` is any 64-bit uniform random bit generator.
  template <class Rng>
  [[nodiscard]] double sample(Rng& rng) const {
    switch (kind_) {
      case DistKind::gamma: {
        std::gamma_distribution<double> g(shape_, 1.0 / shape_);
        return g(rng);
      }
      case DistKind::lognormal: {
        std::normal_distribution<double> n(scale_, shape_);
        return std::exp(n(rng));
      }
      default: return inverse_survival(uniform_open(rng));
    }
  }

  /// Closed-form x with survival(x) = u for the inverse-CDF samplers (exponential,
  /// Weibull, Pareto, Burr). Other kinds throw.
  [[nodiscard]] double inverse_survival(double u) const {
    switch (kind_) {
      case DistKind::exponential: return -std::log(u);
      case DistKind::weibull: return scale_ * std::pow(-std::log(u), 1.0 / shape_);
      case DistKind::pareto: return scale_ * std::pow(u, -1.0 / shape_);
      case DistKind::burr: return std::pow(std::pow(u, -1.0 / second_) - 1.0, 1.0 / shape_);
      default: throw Error("inverse_survival: no closed form for " + spec());
    }
  }

  /// Uniform draw in the open interval (0, 1) built from the top 53 bits.
  template <class Rng>
  static double uniform_open(Rng& rng) {
    static_assert(Rng::max() - Rng::min() == ~std::uint64_t{0}, "needs a 64-bit engine");
    return (static_cast<double>((rng() - Rng::min()) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Canonical spec string, e.g. `weibull:a=0.5`. Parsing it yields an equal distribution.
  [[nodiscard]] std::string spec() const {
    switch (kind_) {
      case DistKind::exponential: return "exp";
      case DistKind::gamma: return "gamma:alpha=" + shortest(shape_);
      case DistKind::weibull: return "weibull:a=" + shortest(shape_);
      case DistKind::lognormal: return "lognormal:sigma=" + shortest(shape_);
      case DistKind::pareto: return "pareto:alpha=" + shortest(shape_);
      case DistKind::burr: return "burr:c=" + shortest(shape_);
    }
    return {};
  }

  friend bool operator==(const ServiceDistribution& a, const ServiceDistribution& b) {
    return a.kind_ == b.kind_ && a.shape_ == b.shape_;
  }

 private:
  ServiceDistribution(DistKind kind, double shape) : kind_(kind), shape_(shape) {}

  static void require(bool ok, const char* message) {
    if (!ok) throw ConfigError(message);
  }

  DistKind kind_;
  double shape_;
  double scale_ = 1.0;
  double second_ = 0.0;
};

/// Parses `name[:key=value[,key=value]]`. Errors name the offending key.
inline ServiceDistribution parse_distribution(std::string_view text) {
  std::string_view name = text;
  std::map<std::string, double, std::less<>> params;
  if (auto colon = text.find(':'); colon != std::string_view::npos) {
    name = text.substr(0, colon);
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      auto comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("distribution '" + std::string(text) + "': expected key=value, got '" +
                          std::string(item) + "'");
      }
      std::string key(item.substr(0, eq));
      auto value = parse_real(item.substr(eq + 1));
      if (!value) {
        throw ConfigError("distribution '" + std::string(text) + "': bad value for key '" + key + "'");
      }
      params[key] = *value;
    }
  }

  auto take = [&](const char* key) {
    auto it = params.find(key);
    if (it == params.end()) {
      throw ConfigError("distribution '" + std::string(text) + "': missing key '" + key + "'");
    }
    double v = it->second;
    params.erase(it);
    return v;
  };

  auto finish = [&](ServiceDistribution d) {
    if (!params.empty()) {
      throw ConfigError("distribution '" + std::string(text) + "': unknown key '" + params.begin()->first + "'");
    }
    return d;
  };

  auto one = [&](const char* key) {
    for (const auto& [k, v] : params) {
      if (k != key) throw ConfigError("distribution '" + std::string(text) + "': unknown key '" + k + "'");
    }
    return take(key);
  };
  if (name == "exp" || name == "exponential") return finish(ServiceDistribution::exponential());
  if (name == "gamma") return finish(ServiceDistribution::gamma(one("alpha")));
  if (name == "weibull") return finish(ServiceDistribution::weibull(one("a")));
  if (name == "lognormal") return finish(ServiceDistribution::lognormal(one("sigma")));
  if (name == "pareto") return finish(ServiceDistribution::pareto(one("alpha")));
  if (name == "burr") return finish(ServiceDistribution::burr(one("c")));
  throw ConfigError("unknown distribution '" + std::string(name) + "'");
}

}  // namespace sqd
