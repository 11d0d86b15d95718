#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals with an
// absolute error target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sqd/error.hpp"
#include "sqd/format.hpp"

namespace sqd {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  std::size_t intervals = 0;
  bool roundoff_limited = false;
};

namespace detail {

struct Segment {
  double a, b, value, error;
  bool roundoff;
};

struct ByError {
  bool operator()(const Segment& x, const Segment& y) const { return x.error < y.error; }
};

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
template <class F>
Segment kronrod15(F& f, double a, double b) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double centr = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(centr);
  double resg = fc * kWg[3];
  double resk = fc * kWgk[7];
  double resabs = std::abs(resk);
  std::array<double, 7> fv1{}, fv2{};
  for (int j = 0; j < 7; ++j) {
    const double absc = half * kXgk[j];
    fv1[j] = f(centr - absc);
    fv2[j] = f(centr + absc);
    const double sum = fv1[j] + fv2[j];
    resk += kWgk[j] * sum;
    resabs += kWgk[j] * (std::abs(fv1[j]) + std::abs(fv2[j]));
    if (j % 2 == 1) resg += kWg[j / 2] * sum;
  }
  const double reskh = resk * 0.5;
  double resasc = kWgk[7] * std::abs(fc - reskh);
  for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));

  const double dh = std::abs(half);
  resabs *= dh;
  resasc *= dh;
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  const double floor = 50.0 * eps * resabs;
  bool roundoff = false;
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps) && floor >= err) {
    err = floor;
    roundoff = true;
  }
  return {a, b, resk * half, err, roundoff};
}

}  // namespace detail

/// Integrates f over [a, b] (finite) until the summed error estimate drops below `tol`.
/// `breakpoints` inside (a, b) seed the initial partition so jumps in f or its
/// derivatives sit on panel edges. Throws QuadratureError after `max_intervals` panels.
template <class F>
QuadResult integrate(F&& f, double a, double b, double tol, std::span<const double> breakpoints = {},
                     std::size_t max_intervals = 20000) {
  if (!(b > a)) return {};
  std::vector<double> edges{a};
  for (double p : breakpoints) {
    if (p > a && p < b) edges.push_back(p);
  }
  edges.push_back(b);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::priority_queue<detail::Segment, std::vector<detail::Segment>, detail::ByError> open;
  std::vector<detail::Segment> done;
  double total_err = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    auto s = detail::kronrod15(f, edges[i], edges[i + 1]);
    total_err += s.error;
    (s.roundoff ? done.push_back(s) : open.push(s));
  }

  std::size_t count = edges.size() - 1;
  bool roundoff_limited = false;
  while (total_err > tol && !open.empty()) {
    if (count >= max_intervals) {
      throw QuadratureError("quadrature on [" + shortest(a) + ", " + shortest(b) +
                                "] did not converge: error estimate " + shortest(total_err) +
                                " > tol " + shortest(tol),
                            total_err);
    }
    detail::Segment worst = open.top();
    open.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      roundoff_limited = true;
      done.push_back(worst);
      continue;
    }
    auto left = detail::kronrod15(f, worst.a, mid);
    auto right = detail::kronrod15(f, mid, worst.b);
    // Recompute the running total from scratch now and then to stop drift.
    total_err += left.error + right.error - worst.error;
    for (auto* s : {&left, &right}) (s->roundoff ? done.push_back(*s) : open.push(*s));
    ++count;
    if (count % 64 == 0) {
      total_err = 0.0;
      for (const auto& s : done) total_err += s.error;
      auto copy = open;
      while (!copy.empty()) {
        total_err += copy.top().error;
        copy.pop();
      }
    }
  }
  if (total_err > tol) roundoff_limited = true;

  while (!open.empty()) {
    done.push_back(open.top());
    open.pop();
  }
  std::sort(done.begin(), done.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  // Neumaier summation in left-to-right order.
  double sum = 0.0, comp = 0.0, err = 0.0;
  for (const auto& s : done) {
    double t = sum + s.value;
    comp += std::abs(sum) >= std::abs(s.value) ? (sum - t) + s.value : (s.value - t) + sum;
    sum = t;
    err += s.error;
  }
  return {sum + comp, err, done.size(), roundoff_limited};
}

}  // namespace sqd
