#pragma once

// Invariant state of the SQ(d) hydrodynamic limit: queue-length tails s*_l and the
// age-density factors r_l, built level by level from the scalar fixed point
// s*_l = F_l(s*_l) on [0, s*_{l-1}].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqd/distributions.hpp"
#include "sqd/error.hpp"
#include "sqd/format.hpp"
#include "sqd/laplace.hpp"

namespace sqd {

/// P_d(x, y) = (x^d - y^d)/(x - y), evaluated as sum_{m<d} x^m y^{d-1-m} so that it stays
/// accurate when x and y are close.
inline double pd(double x, double y, int d) {
  double sum = 0.0;
  double xm = 1.0;
  for (int m = 0; m < d; ++m) {
    sum += xm * std::pow(y, d - 1 - m);
    xm *= x;
  }
  return sum;
}

namespace detail {

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

struct MixtureTerm {
  double coeff;
  double rate;
  friend bool operator==(const MixtureTerm&, const MixtureTerm&) = default;
};

/// r(x) = base + sum_i coeff_i * exp(-rate_i * x).
struct ExpMixture {
  double base = 0.0;
  std::vector<MixtureTerm> terms;

  [[nodiscard]] double operator()(double x) const {
    detail::CompensatedSum acc;
    acc.add(base);
    for (const auto& t : terms) acc.add(t.coeff * std::exp(-t.rate * x));
    return acc.value();
  }

  [[nodiscard]] double derivative(double x) const {
    double v = 0.0;
    for (const auto& t : terms) v -= t.rate * t.coeff * std::exp(-t.rate * x);
    return v;
  }

  /// Crude sup bound |r(x)| <= |base| + sum |coeff_i|.
  [[nodiscard]] double magnitude_bound() const {
    double m = std::abs(base);
    for (const auto& t : terms) m += std::abs(t.coeff);
    return m;
  }

  friend bool operator==(const ExpMixture&, const ExpMixture&) = default;
};

struct LevelDiagnostics {
  int ell = 0;
  double s = 0.0;
  double h_at_zero = 0.0;   // F_l(0) - 0
  double h_at_upper = 0.0;  // F_l(s*_{l-1}) - s*_{l-1}
  double residual = 0.0;    // F_l(s*_l) - s*_l
  double bracket_width = 0.0;
  int iterations = 0;
  int sign_changes = -1;  // from the optional grid scan; -1 when not scanned
  double noise = 0.0;     // bound on the error of F_l at s*_{l-1} from quadrature tolerance
  std::string warning;
};

struct SolveOptions {
  double cutoff = 1e-12;
  int ell_max = 50;
  double quad_tol = kDefaultQuadTol;
  double bisect_tol = 1e-12;
  /// Scan H on a 1024-point grid for extra sign changes (only meaningful for d > 2).
  bool scan_brackets = false;
  /// Relative separation below which two mixture rates count as colliding.
  double collision_threshold = 1e-10;
  /// A level whose fixed-point residual exceeds this is rejected and the solve stops:
  /// the mixture coefficients have grown until Phi rounding dominates F_l.
  double residual_guard = 1e-11;
  /// A level whose propagated quadrature noise exceeds this fraction of s*_l, and is
  /// amplified well beyond quad_tol, is rejected.
  double noise_guard = 1e-3;
};

enum class StopReason { cutoff, ell_max, conditioning };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::cutoff: return "cutoff";
    case StopReason::ell_max: return "ell_max";
    case StopReason::conditioning: return "conditioning";
  }
  return "?";
}

inline StopReason parse_stop_reason(std::string_view s) {
  if (s == "cutoff") return StopReason::cutoff;
  if (s == "ell_max") return StopReason::ell_max;
  if (s == "conditioning") return StopReason::conditioning;
  throw ConfigError("unknown stop reason '" + std::string(s) + "'");
}

/// Solved invariant state. Levels are stored from l = 1; anything past the last stored
/// level is zero (below the cutoff).
struct InvariantState {
  double lambda = 0.0;
  int d = 2;
  ServiceDistribution dist = ServiceDistribution::exponential();
  double cutoff = 1e-12;
  std::vector<double> s_star;   // s_star[l-1] = s*_l
  std::vector<ExpMixture> r;    // r[l-1] = r_l
  std::vector<LevelDiagnostics> levels;  // one per attempted level l >= 2
  StopReason stop = StopReason::ell_max;

  [[nodiscard]] int depth() const noexcept { return static_cast<int>(s_star.size()); }

  /// s*_l with the conventions s*_0 = 1 and s*_l = 0 past the cutoff.
  [[nodiscard]] double s(int ell) const {
    if (ell <= 0) return 1.0;
    return ell <= depth() ? s_star[ell - 1] : 0.0;
  }

  /// r_l, or nullptr past the cutoff (where r_l is identically zero).
  [[nodiscard]] const ExpMixture* mixture(int ell) const {
    if (ell < 1 || ell > depth()) return nullptr;
    return &r[ell - 1];
  }
};

/// Data needed to evaluate F_l: the previous level of the state.
struct LevelInput {
  double lambda;
  int d;
  double s_prev;
  const ExpMixture& r_prev;
};

/// F_l(s) = lambda s^d Phi(a) + a * int_0^inf (int_0^x e^{-a(x-u)} r_{l-1}(u) du) G-bar(x) dx
/// with a = lambda P_d(s*_{l-1}, s). For r_{l-1} = b0 + sum b_i e^{-a_i u} the inner
/// convolution is closed form, leaving only Phi values:
///   b0 (Phi(0) - Phi(a)) + sum b_i a/(a - a_i) (Phi(a_i) - Phi(a)).
/// Colliding rates use the confluent limit a * int x e^{-ax} G-bar.
inline double f_ell(double s, const LevelInput& in, LaplaceCache& cache,
                    double collision_threshold = 1e-10) {
  const double a = in.lambda * pd(in.s_prev, s, in.d);
  const double phi_a = cache.phi(a);
  detail::CompensatedSum acc;
  acc.add(in.lambda * std::pow(s, in.d) * phi_a);
  acc.add(in.r_prev.base * (cache.phi(0.0) - phi_a));
  double max_rate = a;
  for (const auto& t : in.r_prev.terms) max_rate = std::max(max_rate, t.rate);
  for (const auto& t : in.r_prev.terms) {
    if (std::abs(a - t.rate) <= collision_threshold * max_rate) {
      acc.add(t.coeff * a * cache.phi_moment(a));
    } else {
      acc.add(t.coeff * a / (a - t.rate) * (cache.phi(t.rate) - phi_a));
    }
  }
  return acc.value();
}

/// Error bound on F_l(s) implied by an absolute error `tol` in every Phi value. The
/// mixture coefficients grow with l for slow tails, so this is what limits depth.
inline double f_ell_noise(double s, const LevelInput& in, double tol) {
  const double a = in.lambda * pd(in.s_prev, s, in.d);
  double sum = in.lambda * std::pow(s, in.d) + 2.0 * std::abs(in.r_prev.base);
  for (const auto& t : in.r_prev.terms) {
    sum += a == t.rate ? std::abs(t.coeff) : 2.0 * std::abs(t.coeff * a / (a - t.rate));
  }
  return tol * sum;
}

struct LevelSolution {
  double s;
  LevelDiagnostics diag;
};

/// Bisection for the root of H(s) = F_l(s) - s on [0, s*_{l-1}]. The bracket signs
/// H(0) > 0 and H(s*_{l-1}) <= 0 are checked, never assumed. Stops once the bracket is
/// narrower than bisect_tol in absolute terms and relative to its upper end, or once
/// the upper end falls below the cutoff.
inline LevelSolution solve_level(int ell, const LevelInput& in, LaplaceCache& cache,
                                 const SolveOptions& opts = {}) {
  auto h = [&](double s) { return f_ell(s, in, cache, opts.collision_threshold) - s; };
  LevelDiagnostics diag;
  diag.ell = ell;
  diag.h_at_zero = h(0.0);
  diag.h_at_upper = h(in.s_prev);
  diag.noise = f_ell_noise(in.s_prev, in, cache.tol());
  if (!(diag.h_at_zero > 0.0) && diag.h_at_upper <= 0.0 && in.s_prev > opts.cutoff &&
      h(opts.cutoff) <= 0.0) {
    // F_l(0) is positive but lost in roundoff; H <= 0 already at the cutoff, so the
    // fixed point lies in [0, cutoff] and reports as zero.
    diag.s = 0.0;
    diag.residual = diag.h_at_zero;
    diag.bracket_width = opts.cutoff;
    diag.warning = "H(0) not resolvable above roundoff; level is below the cutoff";
    return {0.0, diag};
  }
  if (!(diag.h_at_zero > 0.0) || diag.h_at_upper > 0.0) {
    throw SolverError("level " + std::to_string(ell) + ": bracket sign condition violated, H(0)=" +
                      shortest(diag.h_at_zero) + ", H(" + shortest(in.s_prev) + ")=" +
                      shortest(diag.h_at_upper));
  }

  if (opts.scan_brackets) {
    constexpr int n = 1024;
    int changes = 0;
    double prev = diag.h_at_zero;
    for (int i = 1; i <= n; ++i) {
      double v = i == n ? diag.h_at_upper : h(in.s_prev * i / n);
      if ((prev > 0.0) != (v > 0.0)) ++changes;
      prev = v;
    }
    diag.sign_changes = changes;
    if (changes > 1) {
      diag.warning = "H has " + std::to_string(changes) + " sign changes on the grid; fixed point may not be unique";
    }
  }

  double lo = 0.0;
  double hi = in.s_prev;
  int it = 0;
  for (; it < 2000; ++it) {
    const double width = hi - lo;
    if (width < opts.bisect_tol && width <= opts.bisect_tol * hi) break;
    if (hi <= opts.cutoff) break;
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  const double s = 0.5 * (lo + hi);
  diag.s = s;
  diag.iterations = it;
  diag.bracket_width = hi - lo;
  diag.residual = h(s);
  return {s, diag};
}

/// r_l from r_{l-1} and the new level: with a = lambda P_d(s*_{l-1}, s*_l),
///   r_l(x) = lambda s_l^d e^{-ax} + b0 (1 - e^{-ax}) + sum b_i a/(a - a_i) (e^{-a_i x} - e^{-ax}),
/// which is the c_{i,j} recursion with coeff = lambda * c. The new coefficient is
/// accumulated with compensation since it is a sum of signed terms near -lambda.
inline ExpMixture extend_mixture(int ell, double lambda, int d, double s_prev, double s_new,
                                 const ExpMixture& prev, double collision_threshold = 1e-10) {
  const double a = lambda * pd(s_prev, s_new, d);
  double max_rate = a;
  for (const auto& t : prev.terms) max_rate = std::max(max_rate, t.rate);
  ExpMixture next;
  next.base = prev.base;
  detail::CompensatedSum last;
  last.add(lambda * std::pow(s_new, d));
  last.add(-prev.base);
  for (const auto& t : prev.terms) {
    if (std::abs(a - t.rate) <= collision_threshold * max_rate) {
      throw SolverError("level " + std::to_string(ell) + ": mixture rate " + shortest(a) +
                        " collides with earlier rate " + shortest(t.rate));
    }
    const double c = t.coeff * a / (a - t.rate);
    next.terms.push_back({c, t.rate});
    last.add(-c);
  }
  next.terms.push_back({last.value(), a});
  return next;
}

/// Level-by-level solve: s*_1 = lambda, r_1 = lambda, then alternating solve_level and
/// extend_mixture until s*_l <= cutoff (reported as zero) or l = ell_max. For slowly
/// decaying tails the mixture coefficients grow geometrically with l; once the fixed-point
/// residual exceeds `residual_guard` the level is rejected and the solve stops with
/// StopReason::conditioning.
inline InvariantState solve(double lambda, int d, const ServiceDistribution& dist,
                            const SolveOptions& opts = {}) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("lambda must lie in (0,1), got " + shortest(lambda));
  }
  if (d < 2) throw ConfigError("d must be >= 2, got " + std::to_string(d));
  if (opts.ell_max < 1) throw ConfigError("ell_max must be >= 1");
  if (!(opts.cutoff > 0.0)) throw ConfigError("cutoff must be positive");

  InvariantState state;
  state.lambda = lambda;
  state.d = d;
  state.dist = dist;
  state.cutoff = opts.cutoff;
  state.s_star.push_back(lambda);
  state.r.push_back(ExpMixture{lambda, {}});

  LaplaceCache cache(dist, opts.quad_tol);
  for (int ell = 2; ell <= opts.ell_max; ++ell) {
    const double s_prev = state.s_star.back();
    LevelInput in{lambda, d, s_prev, state.r.back()};
    LevelSolution sol;
    try {
      sol = solve_level(ell, in, cache, opts);
    } catch (const SolverError& e) {
      // A sign violation within the noise of F_l means the level is not resolvable.
      LevelDiagnostics diag;
      diag.ell = ell;
      diag.noise = f_ell_noise(s_prev, in, cache.tol());
      diag.h_at_zero = f_ell(0.0, in, cache, opts.collision_threshold);
      diag.h_at_upper = f_ell(s_prev, in, cache, opts.collision_threshold) - s_prev;
      const bool lost = (diag.h_at_zero <= 0.0 && -diag.h_at_zero <= diag.noise) ||
                        (diag.h_at_upper > 0.0 && diag.h_at_upper <= diag.noise);
      if (!lost) throw;
      diag.warning = std::string(e.what()) + "; within quadrature noise, level rejected";
      state.levels.push_back(diag);
      state.stop = StopReason::conditioning;
      break;
    }
    if (sol.s <= opts.cutoff) {
      state.levels.push_back(sol.diag);
      state.stop = StopReason::cutoff;
      break;
    }
    if (std::abs(sol.diag.residual) > opts.residual_guard) {
      sol.diag.warning = "fixed-point residual above guard; mixture ill-conditioned, level rejected";
      state.levels.push_back(sol.diag);
      state.stop = StopReason::conditioning;
      break;
    }
    if (sol.diag.noise > std::max(opts.noise_guard * sol.s, 10.0 * cache.tol())) {
      sol.diag.warning = "quadrature noise " + shortest(sol.diag.noise) + " above guard relative to s*, level rejected";
      state.levels.push_back(sol.diag);
      state.stop = StopReason::conditioning;
      break;
    }
    state.levels.push_back(sol.diag);
    ExpMixture next = extend_mixture(ell, lambda, d, s_prev, sol.s, state.r.back(), opts.collision_threshold);
    state.s_star.push_back(sol.s);
    state.r.push_back(std::move(next));
  }
  return state;
}

struct VerifyOptions {
  double threshold = 1e-8;     // identity residuals
  double fixed_point_tol = 1e-11;
  double slack = 1e-10;        // monotonicity / positivity
  int grid_points = 200;
  double quad_tol = 1e-11;
};

struct VerifyReport {
  double max_consistency = 0.0;   // |s*_l - int r_l G-bar|
  double max_departure = 0.0;     // |lambda s*_{l-1}^d - int g r_l|
  double max_fixed_point = 0.0;   // |F_l(s*_l) - s*_l|
  double max_ell_violation = 0.0; // max (r_{l+1} - r_l) on the grid
  double max_x_violation = 0.0;   // max (r_l(x_i) - r_l(x_{i+1}))
  double min_value = 0.0;         // min r_l on the grid
  double max_excess = 0.0;        // max (r_l - lambda)
  bool s_decreasing = true;
  bool passed = true;
  std::vector<std::string> failures;
};

/// int_0^inf g(x) f(x) dx for |f(x)| <= bound.scale * exp(-bound.rate * x), truncating
/// where that envelope times G-bar(X) drops below tol/10.
template <class F>
double integrate_density(const ServiceDistribution& dist, F&& f, WeightBound bound, double tol) {
  double x = 1.0;
  while (bound.scale * std::exp(-bound.rate * x) * dist.survival(x) >= tol / 10.0) {
    x *= 2.0;
    if (x > 1e300) throw QuadratureError("density truncation failed", tol);
  }
  auto edges = detail::weighted_edges(dist, 0.0, x);
  auto integrand = [&](double u) { return dist.density(u) * f(u); };
  return integrate(integrand, 0.0, x, tol, edges, 100000).value;
}

/// Checks the identities a physical invariant state must satisfy, each by a route
/// independent of the one used to solve it (direct quadrature of r_l against G-bar and g).
inline VerifyReport verify(const InvariantState& state, const VerifyOptions& opts = {}) {
  VerifyReport rep;
  const auto& dist = state.dist;
  const int n = state.depth();

  for (int ell = 1; ell <= n; ++ell) {
    // The constant part integrates to base against both G-bar (unit mean) and g; only
    // the decaying exponential part goes through quadrature.
    const ExpMixture& r = state.r[ell - 1];
    const ExpMixture decaying{0.0, r.terms};
    double min_rate = std::numeric_limits<double>::infinity();
    for (const auto& t : r.terms) min_rate = std::min(min_rate, t.rate);
    const WeightBound bound{decaying.magnitude_bound(), r.terms.empty() ? 0.0 : min_rate};
    // Pointwise evaluation of a mixture with large alternating coefficients carries
    // rounding noise of order eps * sum|coeff|; do not ask quadrature for less.
    const double tol = std::max(opts.quad_tol, 64.0 * std::numeric_limits<double>::epsilon() * bound.scale);
    auto integral = [&](auto&& route) { return r.terms.empty() ? r.base : r.base + route(); };
    double consistency = integral([&] {
      return integrate_weighted(dist, decaying, 0.0, std::numeric_limits<double>::infinity(), tol, bound).value;
    });
    rep.max_consistency = std::max(rep.max_consistency, std::abs(consistency - state.s(ell)));
    if (ell >= 2) {
      double dep = integral([&] { return integrate_density(dist, decaying, bound, tol); });
      double expected = state.lambda * std::pow(state.s(ell - 1), state.d);
      rep.max_departure = std::max(rep.max_departure, std::abs(dep - expected));
    }
    if (ell >= 2 && !(state.s(ell) < state.s(ell - 1))) rep.s_decreasing = false;
  }
  for (const auto& lv : state.levels) {
    if (lv.ell <= n) rep.max_fixed_point = std::max(rep.max_fixed_point, std::abs(lv.residual));
  }

  double min_rate = 1.0;
  for (const auto& r : state.r) {
    for (const auto& t : r.terms) min_rate = std::min(min_rate, t.rate);
  }
  const double x_hi = std::min(1e4, std::max(20.0, 10.0 / min_rate));
  const int m = std::max(2, opts.grid_points);
  std::vector<double> grid(m);
  for (int i = 0; i < m; ++i) grid[i] = x_hi * i / (m - 1);

  rep.min_value = std::numeric_limits<double>::infinity();
  std::vector<double> prev_row;
  for (int ell = 1; ell <= n; ++ell) {
    std::vector<double> row(m);
    for (int i = 0; i < m; ++i) row[i] = state.r[ell - 1](grid[i]);
    for (int i = 0; i < m; ++i) {
      rep.min_value = std::min(rep.min_value, row[i]);
      rep.max_excess = std::max(rep.max_excess, row[i] - state.lambda);
      if (i + 1 < m) rep.max_x_violation = std::max(rep.max_x_violation, row[i] - row[i + 1]);
      if (!prev_row.empty()) rep.max_ell_violation = std::max(rep.max_ell_violation, row[i] - prev_row[i]);
    }
    prev_row = std::move(row);
  }
  if (n == 0) rep.min_value = 0.0;

  auto check = [&](bool ok, const std::string& what) {
    if (!ok) {
      rep.passed = false;
      rep.failures.push_back(what);
    }
  };
  check(rep.max_consistency < opts.threshold, "consistency residual " + shortest(rep.max_consistency));
  check(rep.max_departure < opts.threshold, "departure residual " + shortest(rep.max_departure));
  check(rep.max_fixed_point < opts.fixed_point_tol, "fixed-point residual " + shortest(rep.max_fixed_point));
  check(rep.max_ell_violation <= opts.slack, "r_l not monotone in l by " + shortest(rep.max_ell_violation));
  check(rep.max_x_violation <= opts.slack, "r_l not monotone in x by " + shortest(rep.max_x_violation));
  check(rep.min_value >= -opts.slack, "r_l negative: " + shortest(rep.min_value));
  check(rep.max_excess <= opts.slack, "r_l exceeds lambda by " + shortest(rep.max_excess));
  check(rep.s_decreasing, "s*_l not strictly decreasing");
  return rep;
}

}  // namespace sqd
