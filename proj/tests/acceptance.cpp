// Acceptance suite: one PASS/FAIL line per criterion, with indented detail lines for
// every failing check. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "sqd/invariant.hpp"
#include "sqd/io.hpp"
#include "sqd/perf.hpp"
#include "sqd/sim.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  std::string summary;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back(what);
    }
  }
};

// A printed table cell: the literal text, so its precision is known.
struct Cell {
  int ell;
  const char* text;  // "0" means the table prints zero; "NaN" means undefined
};

struct Row {
  const char* dist;
  std::vector<Cell> cells;
};

double printed_value(const char* text) { return std::strtod(text, nullptr); }

// Half a unit in the last printed digit of the mantissa.
double half_last_digit(const std::string& text) {
  const auto e = text.find_first_of("eE");
  const std::string mant = text.substr(0, e);
  const int exponent = e == std::string::npos ? 0 : std::stoi(text.substr(e + 1));
  const auto dot = mant.find('.');
  const int decimals = dot == std::string::npos ? 0 : static_cast<int>(mant.size() - dot - 1);
  return 0.5 * std::pow(10.0, exponent - decimals);
}

const std::vector<Row>& reference_s() {
  static const std::vector<Row> rows = {
      {"exp", {{2, "0.125"}, {3, "0.0078"}, {4, "3.0518e-5"}, {5, "4.6566e-10"}}},
      {"gamma:alpha=3", {{2, "0.0871"}, {3, "0.0022"}, {4, "1.1892e-6"}, {5, "3.629e-11"}}},
      {"weibull:a=2", {{2, "0.0838"}, {3, "0.0018"}, {4, "7.1889e-7"}, {5, "0"}}},
      {"weibull:a=0.5",
       {{2, "0.2425"}, {3, "0.0872"}, {4, "0.0166"}, {5, "0.0008"}, {6, "2.7e-6"}, {7, "1.8147e-11"}}},
      {"lognormal:sigma=1/3", {{2, "0.0738"}, {3, "0.0012"}, {4, "2.4229e-7"}, {5, "2.985e-11"}}},
      {"pareto:alpha=3", {{2, "0.0812"}, {3, "0.0024"}, {4, "1.2208e-5"}, {5, "0"}}},
      {"pareto:alpha=1.5",
       {{2, "0.1820"}, {3, "0.0797"}, {4, "0.0460"}, {5, "0.0311"}, {6, "0.0231"}, {7, "0.0182"}, {8, "0.015"}}},
      {"burr:c=2", {{2, "0.1117"}, {3, "0.0076"}, {4, "9.8831e-5"}, {5, "1.1969e-7"}}},
  };
  return rows;
}

const std::vector<Row>& reference_h() {
  static const std::vector<Row> rows = {
      {"exp", {{2, "0.5281"}, {3, "0.7595"}, {4, "0.8445"}, {5, "0.8851"}}},
      {"gamma:alpha=3", {{2, "0.6436"}, {3, "0.8724"}, {4, "0.9425"}, {5, "0.9688"}}},
      {"weibull:a=2", {{2, "0.6549"}, {3, "0.8859"}, {4, "0.9556"}, {5, "NaN"}}},
      {"weibull:a=0.5", {{2, "0.2513"}, {3, "0.4289"}, {4, "0.5085"}, {5, "0.5650"}}},
      {"lognormal:sigma=1/3", {{2, "0.6911"}, {3, "0.9182"}, {4, "0.9821"}, {5, "0.9198"}}},
      {"pareto:alpha=3", {{2, "0.6640"}, {3, "0.8629"}, {4, "0.8878"}, {5, "NaN"}}},
      {"pareto:alpha=1.5", {{2, "0.3843"}, {3, "0.4462"}, {4, "0.4057"}, {5, "0.3590"}}},
      {"burr:c=2", {{2, "0.5562"}, {3, "0.7621"}, {4, "0.8013"}, {5, "0.7989"}}},
  };
  return rows;
}

struct Solved {
  std::string spec;
  sqd::InvariantState state;
};

std::vector<Solved>& table_states() {
  static std::vector<Solved> states;
  return states;
}

const sqd::InvariantState& state_for(const std::string& spec) {
  for (const auto& s : table_states()) {
    if (s.spec == spec) return s.state;
  }
  table_states().push_back({spec, sqd::solve(0.5, 2, sqd::parse_distribution(spec))});
  return table_states().back().state;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Outcome criterion_exponential(std::vector<sqd::InvariantState>& solved) {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (double lambda : {0.3, 0.5, 0.7, 0.9}) {
    for (int d : {2, 3}) {
      auto state = sqd::solve(lambda, d, sqd::ServiceDistribution::exponential());
      for (int ell = 1; ell <= state.depth() + 1; ++ell) {
        double expect = oracle::exponential_s(lambda, d, ell);
        if (expect <= state.cutoff) expect = 0.0;
        const double err = std::abs(state.s(ell) - expect);
        worst = std::max(worst, err);
        o.require(err < 1e-9, "lambda=" + fmt(lambda) + " d=" + std::to_string(d) + " ell=" + std::to_string(ell) +
                                  ": " + fmt(state.s(ell)) + " vs " + fmt(expect));
      }
      o.require(oracle::exponential_s(lambda, d, state.depth() + 1) <= state.cutoff * (1 + 1e-9),
                "lambda=" + fmt(lambda) + " d=" + std::to_string(d) + ": stopped above the cutoff");
      solved.push_back(std::move(state));
    }
  }
  const double t = seconds_since(t0);
  o.require(t < 5.0, "runtime " + fmt(t) + " s >= 5 s");
  o.summary = "max abs error " + fmt(worst) + ", " + fmt(t) + " s";
  return o;
}

Outcome criterion_reference_s() {
  Outcome o;
  const auto t0 = Clock::now();
  int cells = 0, good = 0;
  for (const auto& row : reference_s()) {
    const auto& state = state_for(row.dist);
    for (const auto& c : row.cells) {
      ++cells;
      const double printed = printed_value(c.text);
      const double ours = state.s(c.ell);
      bool ok;
      std::string tol_text;
      if (printed == 0.0) {
        ok = ours == 0.0;
        tol_text = "exact zero";
      } else {
        const double tol = std::max(2e-3 * std::abs(printed), half_last_digit(c.text));
        ok = std::abs(ours - printed) <= tol;
        tol_text = "tol " + fmt(tol);
      }
      good += ok;
      o.require(ok, std::string(row.dist) + " s*_" + std::to_string(c.ell) + " = " + fmt(ours) + ", printed " + c.text +
                        " (" + tol_text + ")");
    }
  }
  const double t = seconds_since(t0);
  o.require(t < 120.0, "runtime " + fmt(t) + " s >= 120 s");
  o.summary = std::to_string(good) + "/" + std::to_string(cells) + " cells, " + fmt(t) + " s";
  return o;
}

Outcome criterion_reference_h() {
  Outcome o;
  int cells = 0, good = 0;
  for (const auto& row : reference_h()) {
    const auto& state = state_for(row.dist);
    for (const auto& c : row.cells) {
      ++cells;
      const auto h = sqd::h_diagnostic(state, c.ell);
      bool ok;
      std::string ours = h ? fmt(*h) : "undefined";
      if (std::string(c.text) == "NaN") {
        ok = !h.has_value();
      } else {
        ok = h.has_value() && std::abs(*h - printed_value(c.text)) <= 5e-4;
      }
      good += ok;
      o.require(ok, std::string(row.dist) + " H(" + std::to_string(c.ell) + ") = " + ours + ", printed " + c.text);
    }
  }
  o.summary = std::to_string(good) + "/" + std::to_string(cells) + " cells";
  return o;
}

Outcome criterion_wait() {
  Outcome o;
  struct W {
    const char* dist;
    double printed;
  };
  const std::vector<W> cells = {{"exp", 0.4246},           {"pareto:alpha=3", 0.1673},   {"pareto:alpha=2.5", 0.1905},
                                {"pareto:alpha=2", 0.2449}, {"pareto:alpha=1.75", 0.3042}, {"pareto:alpha=1.5", 0.4287},
                                {"weibull:a=2", 0.1716},   {"weibull:a=1.5", 0.1966},    {"weibull:a=1", 0.2661},
                                {"weibull:a=0.5", 0.6781}, {"gamma:alpha=3", 0.1789}};
  int good = 0;
  std::vector<double> pareto;
  for (const auto& c : cells) {
    const double w = sqd::mean_virtual_wait(state_for(c.dist));
    const bool ok = std::abs(w - c.printed) <= 5e-3;
    good += ok;
    o.require(ok, std::string(c.dist) + " W* = " + fmt(w) + ", printed " + fmt(c.printed));
    if (std::string(c.dist).rfind("pareto", 0) == 0) pareto.push_back(w);
  }
  for (std::size_t i = 1; i < pareto.size(); ++i) {
    o.require(pareto[i] > pareto[i - 1], "Pareto ordering broken at position " + std::to_string(i));
  }
  o.summary = std::to_string(good) + "/11 cells, Pareto ordering " +
              (std::is_sorted(pareto.begin(), pareto.end()) ? "holds" : "broken");
  return o;
}

Outcome criterion_identities(const std::vector<sqd::InvariantState>& extra) {
  Outcome o;
  int count = 0;
  double consistency = 0, departure = 0, fixed = 0, mono = 0;
  auto check = [&](const sqd::InvariantState& s, const std::string& label) {
    auto rep = sqd::verify(s);
    ++count;
    consistency = std::max(consistency, rep.max_consistency);
    departure = std::max(departure, rep.max_departure);
    fixed = std::max(fixed, rep.max_fixed_point);
    mono = std::max({mono, rep.max_ell_violation, rep.max_x_violation});
    for (const auto& f : rep.failures) o.require(false, label + ": " + f);
  };
  for (const auto& s : table_states()) check(s.state, s.spec);
  for (const auto& s : extra) check(s, "exp lambda=" + fmt(s.lambda) + " d=" + std::to_string(s.d));
  o.summary = std::to_string(count) + " states; max consistency " + fmt(consistency) + ", departure " + fmt(departure) +
              ", fixed point " + fmt(fixed) + ", monotonicity " + fmt(mono);
  return o;
}

Outcome criterion_oracle() {
  Outcome o;
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  int points = 0;
  for (const auto& row : reference_s()) {
    const auto& state = state_for(row.dist);
    sqd::LaplaceCache cache(state.dist);
    const int top = std::min(state.depth() + 1, 6);
    for (int i = 0; i < 20; ++i) {
      const int ell = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(top - 1));
      const double s_prev = state.s(ell - 1);
      const double s = std::uniform_real_distribution<double>(0.0, s_prev)(rng);
      sqd::LevelInput in{state.lambda, state.d, s_prev, *state.mixture(ell - 1)};
      const double ours = sqd::f_ell(s, in, cache);
      const double ref = oracle::f_ell(s, state.lambda, state.d, s_prev, *state.mixture(ell - 1), state.dist);
      const double err = std::abs(ours - ref);
      worst = std::max(worst, err);
      ++points;
      o.require(err < 1e-9, std::string(row.dist) + " ell=" + std::to_string(ell) + " s=" + fmt(s) + ": |diff| " + fmt(err));
    }
  }
  o.summary = std::to_string(points) + " points, max |diff| " + fmt(worst);
  return o;
}

Outcome criterion_simulation(bool fast, int jobs) {
  Outcome o;
  const auto t0 = Clock::now();
  struct Case {
    const char* dist;
    double horizon;
    double w0, w1;
  };
  std::ostringstream summary;
  for (const Case& c : {Case{"lognormal:sigma=1/3", 15.0, 10.0, 15.0}, Case{"pareto:alpha=3", 10.0, 7.0, 10.0}}) {
    sqd::SimConfig cfg;
    cfg.n = fast ? 300 : 600;
    cfg.realizations = fast ? 300 : 600;
    cfg.dist = sqd::parse_distribution(c.dist);
    cfg.horizon = c.horizon;
    cfg.jobs = jobs;
    cfg.ell_max = 4;
    auto result = sqd::run(cfg);
    auto rep = sqd::compare(result, state_for(c.dist), c.w0, c.w1);
    for (const auto& row : rep.rows) {
      if (row.ell > 3) continue;
      const double allowed = std::max(3.0 * row.stderr_, 0.01);
      o.require(std::abs(row.gap) <= allowed, std::string(c.dist) + " ell=" + std::to_string(row.ell) + ": sim " +
                                                   fmt(row.simulated) + " vs s* " + fmt(row.s_star));
      summary << (summary.tellp() > 0 ? "; " : "") << c.dist << " l" << row.ell << " gap " << fmt(row.gap);
    }
  }
  const double t = seconds_since(t0);
  const double budget = fast ? 120.0 : 900.0;
  o.require(t < budget, "runtime " + fmt(t) + " s over budget " + fmt(budget) + " s");
  o.summary = std::string(fast ? "fast" : "full") + " profile, " + fmt(t) + " s; " + summary.str();
  return o;
}

Outcome criterion_decay() {
  Outcome o;
  auto e = sqd::decay_exponent(2.5, 2);
  const double p = sqd::decay_polynomial(e.root, e.j, e.eta, 2);
  o.require(std::abs(p) < 1e-12, "P(1/gamma2) = " + fmt(p));
  o.require(e.gamma2 > 1.0, "gamma2 = " + fmt(e.gamma2));
  // Seeds on the affine particular solution plus the dominant mode gamma2^i.
  const auto aff = sqd::decay_affine_solution(1.0, 1.0, e.j, e.eta, 2);
  std::vector<double> seeds;
  for (int i = -e.j + 1; i <= 0; ++i) seeds.push_back(aff.p + aff.q * i + std::pow(e.gamma2, i));
  auto R = sqd::decay_recursion(1.0, 1.0, e.j, e.eta, 2, seeds, 60);
  const double rate = std::log2(R[59]) / 60.0;
  o.require(std::abs(rate - e.n_d) <= 0.01, "log2(R_60)/60 = " + fmt(rate) + " vs n_2 = " + fmt(e.n_d));
  auto generic = sqd::decay_recursion(1.0, 1.0, e.j, e.eta, 2, {10.0, 10.0}, 60);
  o.summary = "gamma2 " + fmt(e.gamma2) + ", n_2 " + fmt(e.n_d) + ", log2(R_60)/60 " + fmt(rate) +
              " (seeds R=10: " + fmt(std::log2(generic[59]) / 60.0) + ")";
  return o;
}

std::optional<std::string> run_cli(const std::string& cli, const std::string& args, const std::string& out) {
  const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + out + "\"";
  if (std::system(cmd.c_str()) != 0) return std::nullopt;
  return sqd::read_file(out);
}

Outcome criterion_determinism(const std::string& cli, const std::string& workdir) {
  Outcome o;
  sqd::SimConfig cfg;
  cfg.realizations = 40;
  cfg.dist = sqd::parse_distribution("lognormal:sigma=1/3");
  const std::string a = sqd::sim_csv(sqd::run(cfg));
  const std::string b = sqd::sim_csv(sqd::run(cfg));
  cfg.jobs = 8;
  const std::string c = sqd::sim_csv(sqd::run(cfg));
  o.require(a == b, "library: repeated run differs");
  o.require(a == c, "library: jobs 1 vs 8 differ");
  std::string via = "library only";
  if (!cli.empty()) {
    const std::string args = "simulate --dist lognormal:sigma=1/3 --realizations 40 --seed 99";
    auto f1 = run_cli(cli, args + " --jobs 1", workdir + "/accept_sim_1.csv");
    auto f2 = run_cli(cli, args + " --jobs 1", workdir + "/accept_sim_2.csv");
    auto f8 = run_cli(cli, args + " --jobs 8", workdir + "/accept_sim_8.csv");
    o.require(f1 && f2 && f8, "CLI simulate failed");
    if (f1 && f2 && f8) {
      o.require(*f1 == *f2, "CLI: repeated simulate output differs");
      o.require(*f1 == *f8, "CLI: --jobs 1 vs --jobs 8 output differs");
    }
    via = "library and CLI";
  }
  o.summary = via + ", " + std::to_string(a.size()) + " bytes per CSV";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  bool fast = false;
  std::string cli;
  std::string workdir = ".";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_flag("--fast", fast, "Simulator criterion at N = 300, 300 realizations");
  app.add_option("--cli", cli, "Path to the sqd executable for the CLI determinism check");
  app.add_option("--workdir", workdir, "Directory for temporary files");
  app.add_option("--jobs", jobs, "Simulation threads");
  CLI11_PARSE(app, argc, argv);

  std::vector<sqd::InvariantState> exponential_states;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 exponential closed form", [&] { return criterion_exponential(exponential_states); }},
      {"2 reference s*_l", criterion_reference_s},
      {"3 reference H(l)", criterion_reference_h},
      {"4 reference W*", criterion_wait},
      {"5 identity suite", [&] { return criterion_identities(exponential_states); }},
      {"6 F_l oracle cross-check", criterion_oracle},
      {"7 simulator convergence", [&] { return criterion_simulation(fast, jobs); }},
      {"8 decay exponent", criterion_decay},
      {"9 determinism", [&] { return criterion_determinism(cli, workdir); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    std::printf("[%s] criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.summary.c_str());
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
