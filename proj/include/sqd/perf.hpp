#pragma once

// Performance measures derived from a solved invariant state: the residual-service
// profile Z_l, the mean virtual waiting time W*, the decay diagnostic H(l) and the
// asymptotic decay exponent n_d.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sqd/error.hpp"
#include "sqd/invariant.hpp"
#include "sqd/laplace.hpp"
#include "sqd/quadrature.hpp"

namespace sqd {

/// Z_l(r) = int_0^inf r_l(x) G-bar(x + r) dx: mass of level-l queues whose job in service
/// still needs more than r time units.
inline double z(const InvariantState& state, int ell, double r, double tol = kDefaultQuadTol) {
  if (ell < 1) throw ConfigError("z: level must be >= 1");
  const ExpMixture* mix = state.mixture(ell);
  if (mix == nullptr) return 0.0;
  detail::CompensatedSum acc;
  acc.add(mix->base * state.dist.tail_integral(r));
  for (const auto& t : mix->terms) acc.add(t.coeff * shifted_laplace(state.dist, t.rate, r, tol));
  return acc.value();
}

/// How the inner age integral combines adjacent levels. `difference` integrates
/// Z_l - Z_{l+1} (the residual work of the job in service at a queue of length exactly l)
/// and reproduces the tabulated W* values; `printed_sum` integrates Z_l + Z_{l+1}.
enum class WaitFormula { difference, printed_sum };

struct WaitConfig {
  int l0 = 6;
  double r0 = 20.0;
  double delta = 0.003;
  WaitFormula formula = WaitFormula::difference;
  double tol = kDefaultQuadTol;

  void validate() const {
    if (l0 < 2) throw ConfigError("wait: L0 must be >= 2");
    if (!(r0 > 0.0)) throw ConfigError("wait: R0 must be positive");
    if (!(delta > 0.0)) throw ConfigError("wait: delta must be positive");
  }
};

/// Z_l(r_j) on the grid r_j = j * delta, j = 0..floor(R0/delta), for l = 1..levels.
/// Each distinct mixture rate b gets Psi(b, r_j) = int_0^inf e^{-bx} G-bar(x + r_j) dx by
/// the backward recursion Psi(b, r_j) = e^{-b delta} Psi(b, r_{j+1}) + panel integral.
class ZTable {
 public:
  ZTable(const InvariantState& state, int levels, double r0, double delta, double tol = kDefaultQuadTol) {
    const auto& dist = state.dist;
    const std::size_t count = static_cast<std::size_t>(std::floor(r0 / delta + 1e-9)) + 1;
    grid_.resize(count);
    for (std::size_t j = 0; j < count; ++j) grid_[j] = static_cast<double>(j) * delta;

    std::set<double> rates;
    for (int ell = 1; ell <= levels; ++ell) {
      if (const ExpMixture* m = state.mixture(ell)) {
        for (const auto& t : m->terms) rates.insert(t.rate);
      }
    }
    const auto kinks = dist.kinks();
    for (double b : rates) {
      std::vector<double> psi(count);
      psi[count - 1] = shifted_laplace(dist, b, grid_[count - 1], tol);
      for (std::size_t j = count - 1; j-- > 0;) {
        const double lo = grid_[j];
        const double hi = grid_[j + 1];
        auto f = [&](double y) { return std::exp(-b * (y - lo)) * dist.survival(y); };
        double panel = integrate(f, lo, hi, tol * 1e-3, kinks).value;
        psi[j] = std::exp(-b * (hi - lo)) * psi[j + 1] + panel;
      }
      psi_.emplace(b, std::move(psi));
    }
    std::vector<double> tail(count);
    for (std::size_t j = 0; j < count; ++j) tail[j] = dist.tail_integral(grid_[j]);

    values_.assign(static_cast<std::size_t>(levels), std::vector<double>(count, 0.0));
    for (int ell = 1; ell <= levels; ++ell) {
      const ExpMixture* m = state.mixture(ell);
      if (m == nullptr) continue;
      auto& row = values_[ell - 1];
      for (std::size_t j = 0; j < count; ++j) {
        detail::CompensatedSum acc;
        acc.add(m->base * tail[j]);
        for (const auto& t : m->terms) acc.add(t.coeff * psi_.at(t.rate)[j]);
        row[j] = acc.value();
      }
    }
  }

  [[nodiscard]] const std::vector<double>& grid() const noexcept { return grid_; }
  [[nodiscard]] int levels() const noexcept { return static_cast<int>(values_.size()); }
  /// Z_l on the grid; levels past the table are zero.
  [[nodiscard]] double at(int ell, std::size_t j) const {
    if (ell < 1 || ell > levels()) return 0.0;
    return values_[ell - 1][j];
  }

 private:
  std::vector<double> grid_;
  std::map<double, std::vector<double>> psi_;
  std::vector<std::vector<double>> values_;
};

/// Truncated W* = sum_{l=2}^{L0} Z_l(0)^2
///              + sum_{l=1}^{L0-1} [Z_l(0) + Z_{l+1}(0)] sum_j [Z_l(r_j) -/+ Z_{l+1}(r_j)] delta
/// with the left-endpoint rule r_j = j delta, j <= floor(R0/delta). Defined for d = 2.
inline double mean_virtual_wait(const InvariantState& state, const WaitConfig& cfg = {}) {
  cfg.validate();
  if (state.d != 2) {
    throw UnsupportedMeasure("mean virtual waiting time is only defined for d = 2 (got d = " +
                             std::to_string(state.d) + ")");
  }
  ZTable table(state, cfg.l0, cfg.r0, cfg.delta, cfg.tol);
  const double sign = cfg.formula == WaitFormula::difference ? -1.0 : 1.0;
  const std::size_t count = table.grid().size();

  detail::CompensatedSum w;
  for (int ell = 2; ell <= cfg.l0; ++ell) w.add(table.at(ell, 0) * table.at(ell, 0));
  for (int ell = 1; ell < cfg.l0; ++ell) {
    detail::CompensatedSum inner;
    for (std::size_t j = 0; j < count; ++j) inner.add(table.at(ell, j) + sign * table.at(ell + 1, j));
    w.add((table.at(ell, 0) + table.at(ell + 1, 0)) * inner.value() * cfg.delta);
  }
  return w.value();
}

/// H(l) = log_d(log(1/s*_l)) / l, or nullopt where s*_l is not in (0, 1).
inline std::optional<double> h_diagnostic(const InvariantState& state, int ell) {
  if (ell < 1) return std::nullopt;
  const double s = state.s(ell);
  if (!(s > 0.0 && s < 1.0)) return std::nullopt;
  return std::log(std::log(1.0 / s)) / std::log(static_cast<double>(state.d)) / ell;
}

struct DecayExponent {
  int j = 0;
  double eta = 0.0;
  double root = 0.0;    // 1/gamma_2, the positive root of P in (0,1)
  double gamma2 = 0.0;
  double n_d = 0.0;     // log_d gamma_2
};

/// P(x) = 1 - (d-1) sum_{i=1}^{j-1} x^i - (d-1) eta x^j.
inline double decay_polynomial(double x, int j, double eta, int d) {
  double sum = 0.0;
  double xi = 1.0;
  for (int i = 1; i < j; ++i) {
    xi *= x;
    sum += xi;
  }
  return 1.0 - (d - 1) * sum - (d - 1) * eta * xi * x;
}

/// Unique positive root of P for explicit (j, eta), by bisection on (0, 1).
inline DecayExponent decay_exponent_for(int j, double eta, int d, double tol = 1e-16) {
  if (d < 2) throw ConfigError("decay: d must be >= 2");
  if (j < 1) throw ConfigError("decay: j must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("decay: eta must lie in (0,1)");
  if (!((d - 1) * (j + eta - 1.0) > 1.0)) {
    throw ConfigError("decay: need (d-1)(j+eta-1) > 1, got " + shortest((d - 1) * (j + eta - 1.0)));
  }
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    (decay_polynomial(mid, j, eta, d) > 0.0 ? lo : hi) = mid;
  }
  DecayExponent out;
  out.j = j;
  out.eta = eta;
  out.root = 0.5 * (lo + hi);
  out.gamma2 = 1.0 / out.root;
  out.n_d = std::log(out.gamma2) / std::log(static_cast<double>(d));
  return out;
}

/// n_d for a tail index beta > d/(d-1), using j = floor(beta) and eta = beta - floor(beta).
/// Integer beta would need an unspecified slack parameter and is refused; call
/// decay_exponent_for(beta - 1, 1 - slack, d) to choose one explicitly.
inline DecayExponent decay_exponent(double beta, int d, double tol = 1e-16) {
  if (d < 2) throw ConfigError("decay: d must be >= 2");
  if (!std::isfinite(beta)) throw ConfigError("decay: beta must be finite");
  if (!(beta > static_cast<double>(d) / (d - 1))) {
    throw ConfigError("decay: beta must exceed d/(d-1) = " + shortest(static_cast<double>(d) / (d - 1)));
  }
  const double j = std::floor(beta);
  if (beta == j) {
    throw ConfigError("decay: integer beta needs an explicit slack in (0,1); use decay_exponent_for");
  }
  return decay_exponent_for(static_cast<int>(j), beta - j, d, tol);
}

/// Iterates R_l = c1 - (l-1) c2 + (d-1) (sum_{i=l-j+1}^{l-1} R_i + eta R_{l-j}) for
/// l = 1..n, from j starting values R_{-j+1..0}. Returns R_1..R_n.
inline std::vector<double> decay_recursion(double c1, double c2, int j, double eta, int d,
                                           const std::vector<double>& initial, int n) {
  if (static_cast<int>(initial.size()) != j) throw ConfigError("decay: need exactly j initial values");
  std::vector<double> all(initial);  // all[k] = R_{k - j + 1}
  all.reserve(initial.size() + static_cast<std::size_t>(n));
  for (int ell = 1; ell <= n; ++ell) {
    auto at = [&](int idx) { return all[static_cast<std::size_t>(idx + j - 1)]; };
    double sum = 0.0;
    for (int i = ell - j + 1; i <= ell - 1; ++i) sum += at(i);
    all.push_back(c1 - (ell - 1) * c2 + (d - 1) * (sum + eta * at(ell - j)));
  }
  return {all.begin() + j, all.end()};
}

/// The affine solution R_l = p + q l of the recursion, which exists whenever
/// (d-1)(j+eta-1) > 1. Every other solution differs from it by a solution of the
/// homogeneous recursion.
struct AffineSolution {
  double p;
  double q;
};

inline AffineSolution decay_affine_solution(double c1, double c2, int j, double eta, int d) {
  const double k = (d - 1) * (j - 1 + eta) - 1.0;
  if (!(k > 0.0)) throw ConfigError("decay: need (d-1)(j+eta-1) > 1");
  const double q = c2 / k;
  const double p = -(c1 + c2 - (d - 1) * q * j * ((j - 1) / 2.0 + eta)) / k;
  return {p, q};
}

/// Power-law tail index of the service law and whether it clears the doubly
/// exponential decay threshold beta > d/(d-1). Informational only.
struct TailCondition {
  double beta;
  double threshold;
  bool satisfied;
};

inline TailCondition tail_condition(const ServiceDistribution& dist, int d) {
  const double beta = dist.tail_index();
  const double threshold = static_cast<double>(d) / (d - 1);
  return {beta, threshold, beta > threshold};
}

}  // namespace sqd
