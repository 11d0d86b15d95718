#pragma once

// Quadrature against the survival function and its Laplace transform
//   Phi(b) = int_0^inf e^{-bx} G-bar(x) dx.

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include "sqd/distributions.hpp"
#include "sqd/error.hpp"
#include "sqd/quadrature.hpp"

namespace sqd {

inline constexpr double kDefaultQuadTol = 1e-12;

/// Envelope of a weight function on the tail: |f(x)| <= scale * exp(-rate * x).
struct WeightBound {
  double scale = 1.0;
  double rate = 0.0;
};

/// Upper bound on |int_X^inf f(x) G-bar(x) dx| for f inside `bound`.
inline double tail_bound(const ServiceDistribution& dist, WeightBound bound, double x) {
  return bound.scale * std::exp(-bound.rate * x) * dist.tail_integral(x);
}

/// Smallest X = start * 2^k (X >= start) whose tail bound is below `target`.
inline double truncation_point(const ServiceDistribution& dist, WeightBound bound, double target,
                               double start = 1.0) {
  double x = std::max(start, 1.0);
  for (int k = 0; k < 400; ++k) {
    if (tail_bound(dist, bound, x) < target) return x;
    x *= 2.0;
  }
  throw QuadratureError("no truncation point keeps the tail below " + shortest(target), target);
}

namespace detail {

/// Panel edges on [a, b]: distribution kinks plus a doubling grid, so that power-law
/// tails are resolved panel by panel.
inline std::vector<double> weighted_edges(const ServiceDistribution& dist, double a, double b) {
  std::vector<double> edges = dist.kinks();
  for (double x = 0.25; x < b; x *= 2.0) {
    if (x > a) edges.push_back(x);
  }
  return edges;
}

}  // namespace detail

/// int_a^b f(x) G-bar(x) dx with absolute error below `tol`. An infinite `b` is
/// truncated at a doubling point where the tail bound implied by `bound` is below
/// tol/10; that bound is added to the reported error.
template <class F>
QuadResult integrate_weighted(const ServiceDistribution& dist, F&& f, double a, double b,
                              double tol = kDefaultQuadTol, WeightBound bound = {}) {
  if (!(tol > 0.0)) throw ConfigError("quadrature tolerance must be positive");
  double tail = 0.0;
  if (std::isinf(b)) {
    b = truncation_point(dist, bound, tol / 10.0, a + 1.0);
    tail = tail_bound(dist, bound, b);
  }
  auto edges = detail::weighted_edges(dist, a, b);
  auto integrand = [&](double x) { return f(x) * dist.survival(x); };
  QuadResult r = integrate(integrand, a, b, tol - tail, edges);
  r.abs_error += tail;
  return r;
}

/// Phi(b) truncated at an explicit x_max (no tail correction). Used to check that the
/// automatic truncation is sound.
inline double laplace_truncated(const ServiceDistribution& dist, double b, double x_max,
                                double tol = kDefaultQuadTol) {
  auto edges = detail::weighted_edges(dist, 0.0, x_max);
  auto integrand = [&](double x) { return std::exp(-b * x) * dist.survival(x); };
  return integrate(integrand, 0.0, x_max, tol, edges).value;
}

/// int_0^inf e^{-bx} G-bar(x + r) dx: the transform of the survival function seen from
/// age offset r.
inline double shifted_laplace(const ServiceDistribution& dist, double b, double r,
                              double tol = kDefaultQuadTol) {
  if (b == 0.0) return dist.tail_integral(r);
  auto f = [b, r](double y) { return std::exp(-b * (y - r)); };
  return integrate_weighted(dist, f, r, std::numeric_limits<double>::infinity(), tol,
                            WeightBound{std::exp(b * r), b})
      .value;
}

/// Memoised Phi(b), keyed by the exact rate. Single writer; copy per thread.
class LaplaceCache {
 public:
  explicit LaplaceCache(ServiceDistribution dist, double tol = kDefaultQuadTol)
      : dist_(std::move(dist)), tol_(tol) {
    if (!(tol > 0.0)) throw ConfigError("laplace: tolerance must be positive");
    x_max_ = truncation_point(dist_, WeightBound{}, tol_ / 10.0);
  }

  [[nodiscard]] const ServiceDistribution& dist() const noexcept { return dist_; }
  [[nodiscard]] double tol() const noexcept { return tol_; }
  /// Truncation point for b = 0; every other rate truncates no later than this.
  [[nodiscard]] double x_max() const noexcept { return x_max_; }
  [[nodiscard]] std::size_t size() const noexcept { return phi_.size(); }

  double phi(double b) {
    if (b < 0.0) throw ConfigError("laplace: rate must be nonnegative");
    if (auto it = phi_.find(b); it != phi_.end()) return it->second;
    auto f = [b](double x) { return std::exp(-b * x); };
    double v = integrate_weighted(dist_, f, 0.0, std::numeric_limits<double>::infinity(), tol_,
                                  WeightBound{1.0, b})
                   .value;
    phi_.emplace(b, v);
    return v;
  }

  /// int_0^inf x e^{-bx} G-bar(x) dx = -Phi'(b), for b > 0.
  double phi_moment(double b) {
    if (!(b > 0.0)) throw ConfigError("laplace: moment transform needs a positive rate");
    if (auto it = moment_.find(b); it != moment_.end()) return it->second;
    auto f = [b](double x) { return x * std::exp(-b * x); };
    // x e^{-bx} <= (2/b) e^{-bx/2} e^{-1}; use the looser (2/b) e^{-bx/2}.
    double v = integrate_weighted(dist_, f, 0.0, std::numeric_limits<double>::infinity(), tol_,
                                  WeightBound{2.0 / b, 0.5 * b})
                   .value;
    moment_.emplace(b, v);
    return v;
  }

 private:
  ServiceDistribution dist_;
  double tol_;
  double x_max_ = 0.0;
  std::map<double, double> phi_;
  std::map<double, double> moment_;
};

}  // namespace sqd
