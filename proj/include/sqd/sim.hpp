#pragma once

// Discrete-event simulation of the finite-N SQ(d) network: Poisson arrivals at rate
// lambda*N, each routed to the shortest of d sampled queues, FCFS service with i.i.d.
// times from the service law. Queue-length tail fractions are sampled on a time grid.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "sqd/distributions.hpp"
#include "sqd/error.hpp"
#include "sqd/format.hpp"
#include "sqd/invariant.hpp"

namespace sqd {

enum class InitialCondition { one_job, empty };
enum class Sampling { with_replacement, without_replacement };

inline std::string to_string(InitialCondition c) { return c == InitialCondition::one_job ? "one-job" : "empty"; }
inline std::string to_string(Sampling s) {
  return s == Sampling::with_replacement ? "with-replacement" : "without-replacement";
}

struct SimConfig {
  int n = 600;
  int d = 2;
  double lambda = 0.5;
  ServiceDistribution dist = ServiceDistribution::exponential();
  double horizon = 15.0;
  double grid_step = 0.05;
  int realizations = 600;
  std::uint64_t seed = 1;
  int ell_max = 8;
  InitialCondition initial = InitialCondition::one_job;
  Sampling sampling = Sampling::with_replacement;
  int jobs = 1;  // worker threads; does not affect the result

  void validate() const {
    if (n < 1) throw ConfigError("simulate: N must be >= 1");
    if (d < 1) throw ConfigError("simulate: d must be >= 1");
    if (sampling == Sampling::without_replacement && d > n) {
      throw ConfigError("simulate: sampling without replacement needs d <= N");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("simulate: lambda must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("simulate: horizon must be positive");
    if (!(grid_step > 0.0)) throw ConfigError("simulate: grid step must be positive");
    if (realizations < 1) throw ConfigError("simulate: realizations must be >= 1");
    if (ell_max < 1) throw ConfigError("simulate: ell_max must be >= 1");
    if (jobs < 1) throw ConfigError("simulate: jobs must be >= 1");
  }

  /// Sample instants t_k = k * grid_step, k = 0..floor(horizon / grid_step).
  [[nodiscard]] std::vector<double> times() const {
    const auto count = static_cast<std::size_t>(std::floor(horizon / grid_step + 1e-9)) + 1;
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k) t[k] = static_cast<double>(k) * grid_step;
    return t;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent engine for one realization, a pure function of (seed, index).
inline std::mt19937_64 realization_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ index));
}

/// One realization sampled on the grid: counts[k * ell_max + (l-1)] = #queues with
/// length >= l at t_k, and jobs[k] = jobs in system at t_k.
struct RealizationTrace {
  std::vector<std::uint32_t> counts;
  std::vector<std::uint64_t> jobs;
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
};

namespace detail {

struct Event {
  double t;
  std::uint64_t seq;
  int server;  // -1 for an arrival
};

struct EventLater {
  bool operator()(const Event& x, const Event& y) const {
    return x.t != y.t ? x.t > y.t : x.seq > y.seq;
  }
};

}  // namespace detail

inline RealizationTrace run_realization(const SimConfig& cfg, std::uint64_t index) {
  const auto times = cfg.times();
  const int L = cfg.ell_max;
  std::mt19937_64 rng = realization_rng(cfg.seed, index);
  std::exponential_distribution<double> interarrival(cfg.lambda * cfg.n);
  std::uniform_int_distribution<int> pick(0, cfg.n - 1);

  std::vector<int> len(static_cast<std::size_t>(cfg.n), 0);
  std::vector<std::uint32_t> tail(static_cast<std::size_t>(L) + 1, 0);  // tail[l] = #len >= l
  std::priority_queue<detail::Event, std::vector<detail::Event>, detail::EventLater> events;
  std::uint64_t seq = 0;
  std::uint64_t in_system = 0;

  RealizationTrace trace;
  trace.counts.resize(times.size() * static_cast<std::size_t>(L));
  trace.jobs.resize(times.size());

  auto start_service = [&](int q, double now) { events.push({now + cfg.dist.sample(rng), seq++, q}); };
  const std::uint64_t initial_jobs = cfg.initial == InitialCondition::one_job ? static_cast<std::uint64_t>(cfg.n) : 0;
  if (initial_jobs > 0) {
    std::fill(len.begin(), len.end(), 1);
    tail[1] = static_cast<std::uint32_t>(cfg.n);
    in_system = initial_jobs;
    for (int q = 0; q < cfg.n; ++q) start_service(q, 0.0);
  }
  events.push({interarrival(rng), seq++, -1});

  std::vector<int> sampled(static_cast<std::size_t>(cfg.d));
  std::vector<int> best;
  best.reserve(static_cast<std::size_t>(cfg.d));
  std::size_t k = 0;
  auto record_until = [&](double t) {
    while (k < times.size() && times[k] < t) {
      if (trace.arrivals + initial_jobs != trace.departures + in_system) {
        throw Error("simulate: job conservation violated in realization " + std::to_string(index));
      }
      for (int l = 1; l <= L; ++l) trace.counts[k * L + (l - 1)] = tail[static_cast<std::size_t>(l)];
      trace.jobs[k] = in_system;
      ++k;
    }
  };

  while (k < times.size()) {
    if (events.empty()) throw Error("simulate: event queue exhausted");
    const detail::Event e = events.top();
    // Samples are right-continuous: an event at exactly t_k is seen by the sample at t_k.
    record_until(e.t);
    if (k >= times.size()) break;
    events.pop();
    if (e.server < 0) {
      if (cfg.sampling == Sampling::with_replacement) {
        for (auto& s : sampled) s = pick(rng);
      } else {
        // Floyd's algorithm for d distinct indices.
        std::size_t m = 0;
        for (int j = cfg.n - cfg.d; j < cfg.n; ++j) {
          const int t = std::uniform_int_distribution<int>(0, j)(rng);
          const bool seen = std::find(sampled.begin(), sampled.begin() + m, t) != sampled.begin() + m;
          sampled[m++] = seen ? j : t;
        }
      }
      int shortest_len = std::numeric_limits<int>::max();
      best.clear();
      for (int s : sampled) {
        const int l = len[static_cast<std::size_t>(s)];
        if (l < shortest_len) {
          shortest_len = l;
          best.assign(1, s);
        } else if (l == shortest_len && std::find(best.begin(), best.end(), s) == best.end()) {
          best.push_back(s);
        }
      }
      int target = best.front();
      if (best.size() > 1) {
        target = best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
      }
      ++trace.arrivals;
      int& l = len[static_cast<std::size_t>(target)];
      ++l;
      if (l <= L) ++tail[static_cast<std::size_t>(l)];
      ++in_system;
      if (l == 1) start_service(target, e.t);
      events.push({e.t + interarrival(rng), seq++, -1});
    } else {
      int& l = len[static_cast<std::size_t>(e.server)];
      if (l <= L) --tail[static_cast<std::size_t>(l)];
      --l;
      --in_system;
      ++trace.departures;
      if (l > 0) start_service(e.server, e.t);
    }
  }
  return trace;
}

struct SimResult {
  SimConfig config;
  std::vector<double> times;
  std::vector<double> mean;    // mean[k * ell_max + (l-1)]
  std::vector<double> stderr_;
  std::vector<double> mean_jobs;  // mean jobs per server at t_k
  std::vector<RealizationTrace> traces;

  [[nodiscard]] int ell_max() const noexcept { return config.ell_max; }
  [[nodiscard]] double tail(int ell, std::size_t k) const { return mean[k * config.ell_max + (ell - 1)]; }
  [[nodiscard]] double stderr_at(int ell, std::size_t k) const {
    return stderr_[k * config.ell_max + (ell - 1)];
  }
};

/// Runs all realizations on `cfg.jobs` threads. Each realization owns its RNG stream and
/// output slot, and the statistics are accumulated in index order, so the result does not
/// depend on the thread count.
inline SimResult run(const SimConfig& cfg) {
  cfg.validate();
  SimResult res;
  res.config = cfg;
  res.times = cfg.times();
  const auto R = static_cast<std::size_t>(cfg.realizations);
  res.traces.resize(R);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= R || failed.load()) return;
      try {
        res.traces[i] = run_realization(cfg, i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  const int workers = std::min<int>(cfg.jobs, cfg.realizations);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t cells = res.times.size() * static_cast<std::size_t>(cfg.ell_max);
  res.mean.assign(cells, 0.0);
  res.stderr_.assign(cells, 0.0);
  res.mean_jobs.assign(res.times.size(), 0.0);
  const double n = cfg.n;
  for (std::size_t c = 0; c < cells; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < R; ++i) m += res.traces[i].counts[c] / n;
    m /= static_cast<double>(R);
    double ss = 0.0;
    for (std::size_t i = 0; i < R; ++i) {
      const double dev = res.traces[i].counts[c] / n - m;
      ss += dev * dev;
    }
    res.mean[c] = m;
    res.stderr_[c] = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
  }
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < R; ++i) m += static_cast<double>(res.traces[i].jobs[k]) / n;
    res.mean_jobs[k] = m / static_cast<double>(R);
  }
  return res;
}

struct ComparisonRow {
  int ell;
  double simulated;  // time average over the window, mean over realizations
  double stderr_;    // standard error of that average across realizations
  double s_star;
  double gap;        // simulated - s_star
  double gap_in_se;  // |gap| / stderr, infinite when stderr is zero and gap is not
};

struct ComparisonReport {
  double t0;
  double t1;
  std::vector<ComparisonRow> rows;
};

/// Late-window comparison of simulated tails against s*_l. The window defaults to the
/// last third of the horizon.
inline ComparisonReport compare(const SimResult& result, const InvariantState& state, double t0 = -1.0,
                                double t1 = -1.0) {
  const auto& cfg = result.config;
  if (cfg.lambda != state.lambda || cfg.d != state.d || !(cfg.dist == state.dist)) {
    throw ComparisonError("simulation (lambda=" + shortest(cfg.lambda) + ", d=" + std::to_string(cfg.d) +
                          ", dist=" + cfg.dist.spec() + ") does not match state (lambda=" +
                          shortest(state.lambda) + ", d=" + std::to_string(state.d) +
                          ", dist=" + state.dist.spec() + ")");
  }
  if (t0 < 0.0) t0 = cfg.horizon * 2.0 / 3.0;
  if (t1 < 0.0) t1 = cfg.horizon;
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k < result.times.size(); ++k) {
    if (result.times[k] >= t0 - 1e-9 && result.times[k] <= t1 + 1e-9) ks.push_back(k);
  }
  if (ks.empty()) throw ComparisonError("window [" + shortest(t0) + ", " + shortest(t1) + "] has no sample instants");
  if (result.traces.empty()) throw ComparisonError("simulation result carries no per-realization traces");

  ComparisonReport report{t0, t1, {}};
  const auto R = result.traces.size();
  const int L = cfg.ell_max;
  for (int ell = 1; ell <= L; ++ell) {
    std::vector<double> avg(R, 0.0);
    for (std::size_t i = 0; i < R; ++i) {
      double s = 0.0;
      for (std::size_t k : ks) s += result.traces[i].counts[k * L + (ell - 1)];
      avg[i] = s / static_cast<double>(ks.size()) / cfg.n;
    }
    double m = 0.0;
    for (double v : avg) m += v;
    m /= static_cast<double>(R);
    double ss = 0.0;
    for (double v : avg) ss += (v - m) * (v - m);
    const double se = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
    const double s = state.s(ell);
    const double gap = m - s;
    double in_se = 0.0;
    if (se > 0.0) {
      in_se = std::abs(gap) / se;
    } else if (gap != 0.0) {
      in_se = std::numeric_limits<double>::infinity();
    }
    report.rows.push_back({ell, m, se, s, gap, in_se});
  }
  return report;
}

}  // namespace sqd
