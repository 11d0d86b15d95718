// sqd: command-line front end for the SQ(d) invariant-state solver, performance
// measures and simulator.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqd/distributions.hpp"
#include "sqd/error.hpp"
#include "sqd/invariant.hpp"
#include "sqd/io.hpp"
#include "sqd/perf.hpp"
#include "sqd/sim.hpp"

namespace {

struct Options {
  double lambda = 0.5;
  int d = 2;
  std::string dist = "exp";
  double tol = sqd::kDefaultQuadTol;
  double cutoff = 1e-12;
  int ell_max = 50;
  bool scan = false;

  int l0 = 6;
  double r0 = 20.0;
  double delta = 0.003;
  std::string formula = "difference";

  int n_servers = 600;
  double horizon = 15.0;
  int realizations = 600;
  std::uint64_t seed = 1;
  double grid_step = 0.05;
  int jobs = 1;
  int sim_levels = 8;
  std::string initial = "one-job";
  bool without_replacement = false;
  bool fast = false;
  std::vector<double> window;

  double beta = 2.5;

  std::string format = "csv";
  std::string out;
  std::string state;
  std::string save_state;
};

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    sqd::write_file(o.out, text);
  }
}

sqd::SolveOptions solve_options(const Options& o) {
  sqd::SolveOptions s;
  s.quad_tol = o.tol;
  s.cutoff = o.cutoff;
  s.ell_max = o.ell_max;
  s.scan_brackets = o.scan;
  return s;
}

sqd::InvariantState obtain_state(const Options& o) {
  if (!o.state.empty()) return sqd::load_state(o.state);
  return sqd::solve(o.lambda, o.d, sqd::parse_distribution(o.dist), solve_options(o));
}

int cmd_solve(const Options& o) {
  auto state = sqd::solve(o.lambda, o.d, sqd::parse_distribution(o.dist), solve_options(o));
  if (!o.save_state.empty()) sqd::write_file(o.save_state, sqd::dump(sqd::to_json(state)));
  emit(o, o.format == "json" ? sqd::dump(sqd::to_json(state)) : sqd::diagnostics_csv(state));
  auto report = sqd::verify(state);
  if (!report.passed) {
    std::string msg;
    for (const auto& f : report.failures) msg += (msg.empty() ? "" : "; ") + f;
    std::fprintf(stderr, "sqd: error[verify]: %s\n", msg.c_str());
    return 3;
  }
  return 0;
}

int cmd_wait(const Options& o) {
  auto state = obtain_state(o);
  sqd::WaitConfig cfg;
  cfg.l0 = o.l0;
  cfg.r0 = o.r0;
  cfg.delta = o.delta;
  cfg.tol = o.tol;
  if (o.formula == "printed-sum") cfg.formula = sqd::WaitFormula::printed_sum;
  const double w = sqd::mean_virtual_wait(state, cfg);
  emit(o, o.format == "json" ? sqd::dump(sqd::wait_json(state, cfg, w)) : sqd::wait_csv(state, cfg, w));
  return 0;
}

int cmd_diag(const Options& o) {
  auto state = obtain_state(o);
  emit(o, o.format == "json" ? sqd::dump(sqd::diagnostics_json(state)) : sqd::diagnostics_csv(state));
  return 0;
}

sqd::SimConfig sim_config(const Options& o) {
  sqd::SimConfig c;
  c.n = o.fast ? 300 : o.n_servers;
  c.realizations = o.fast ? 300 : o.realizations;
  c.d = o.d;
  c.lambda = o.lambda;
  c.dist = sqd::parse_distribution(o.dist);
  c.horizon = o.horizon;
  c.grid_step = o.grid_step;
  c.seed = o.seed;
  c.ell_max = o.sim_levels;
  c.initial = o.initial == "empty" ? sqd::InitialCondition::empty : sqd::InitialCondition::one_job;
  c.sampling = o.without_replacement ? sqd::Sampling::without_replacement : sqd::Sampling::with_replacement;
  c.jobs = o.jobs;
  return c;
}

int cmd_simulate(const Options& o) {
  auto result = sqd::run(sim_config(o));
  emit(o, o.format == "json" ? sqd::dump(sqd::sim_json(result)) : sqd::sim_csv(result));
  return 0;
}

int cmd_compare(const Options& o) {
  if (o.state.empty()) throw sqd::ConfigError("compare: --state FILE is required");
  auto state = sqd::load_state(o.state);
  auto cfg = sim_config(o);
  if (cfg.lambda != state.lambda || cfg.d != state.d || !(cfg.dist == state.dist)) {
    // Fail before spending time on the simulation.
    throw sqd::ComparisonError("simulation flags (lambda=" + sqd::shortest(cfg.lambda) + ", d=" +
                               std::to_string(cfg.d) + ", dist=" + cfg.dist.spec() +
                               ") do not match the state file (lambda=" + sqd::shortest(state.lambda) +
                               ", d=" + std::to_string(state.d) + ", dist=" + state.dist.spec() + ")");
  }
  auto result = sqd::run(cfg);
  double t0 = -1.0, t1 = -1.0;
  if (o.window.size() == 2) {
    t0 = o.window[0];
    t1 = o.window[1];
  }
  auto report = sqd::compare(result, state, t0, t1);
  emit(o, o.format == "json" ? sqd::dump(sqd::compare_json(report)) : sqd::compare_csv(report));
  return 0;
}

int cmd_decay(const Options& o) {
  auto e = sqd::decay_exponent(o.beta, o.d);
  if (o.format == "json") {
    emit(o, sqd::dump(sqd::Json{{"beta", o.beta}, {"d", o.d}, {"j", e.j}, {"eta", e.eta}, {"root", e.root},
                                {"gamma2", e.gamma2}, {"n_d", e.n_d}}));
  } else {
    emit(o, "beta,d,j,eta,root,gamma2,n_d\n" + sqd::shortest(o.beta) + "," + std::to_string(o.d) + "," +
                std::to_string(e.j) + "," + sqd::shortest(e.eta) + "," + sqd::shortest(e.root) + "," +
                sqd::shortest(e.gamma2) + "," + sqd::shortest(e.n_d) + "\n");
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant state, waiting time and simulation of SQ(d) load balancing"};
  app.name("sqd");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file; command-line flags take precedence")->envname("SQD_CONFIG");

  Options o;
  app.add_option("--lambda", o.lambda, "Arrival rate per server, in (0,1)")->capture_default_str();
  app.add_option("--d", o.d, "Number of sampled queues per arrival")->capture_default_str();
  app.add_option("--dist", o.dist, "Service law, e.g. exp, gamma:alpha=3, weibull:a=0.5, pareto:alpha=1.5")
      ->capture_default_str();
  app.add_option("--tol", o.tol, "Absolute quadrature tolerance")->capture_default_str();
  app.add_option("--cutoff", o.cutoff, "s*_l at or below this is reported as zero")->capture_default_str();
  app.add_option("--ell-max", o.ell_max, "Deepest level to solve")->capture_default_str();
  app.add_flag("--scan", o.scan, "Scan H on a grid and report extra sign changes");
  app.add_option("--l0", o.l0, "W*: number of levels")->capture_default_str();
  app.add_option("--r0", o.r0, "W*: truncation of the age integral")->capture_default_str();
  app.add_option("--delta", o.delta, "W*: step of the left-endpoint rule")->capture_default_str();
  app.add_option("--formula", o.formula, "W*: inner integrand")
      ->check(CLI::IsMember({"difference", "printed-sum"}))
      ->capture_default_str();
  app.add_option("--n-servers", o.n_servers, "Simulation: number of servers N")->capture_default_str();
  app.add_option("--horizon", o.horizon, "Simulation: time horizon")->capture_default_str();
  app.add_option("--realizations", o.realizations, "Simulation: independent runs")->capture_default_str();
  app.add_option("--seed", o.seed, "Simulation: master seed")->capture_default_str();
  app.add_option("--grid-step", o.grid_step, "Simulation: sampling interval")->capture_default_str();
  app.add_option("--jobs", o.jobs, "Simulation: worker threads")->capture_default_str();
  app.add_option("--levels", o.sim_levels, "Simulation: track tails for l = 1..levels")->capture_default_str();
  app.add_option("--initial", o.initial, "Simulation: initial condition")
      ->check(CLI::IsMember({"one-job", "empty"}))
      ->capture_default_str();
  app.add_flag("--without-replacement", o.without_replacement, "Simulation: sample d distinct queues");
  app.add_flag("--fast", o.fast, "Simulation: N = 300 and 300 realizations");
  app.add_option("--window", o.window, "Compare: averaging window T0 T1 (default: last third)")->expected(2);
  app.add_option("--beta", o.beta, "Decay: tail index")->capture_default_str();
  app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--out", o.out, "Output file (default: stdout)");
  app.add_option("--state", o.state, "Solved-state JSON to read instead of solving");
  app.add_option("--save-state", o.save_state, "solve: also write the state JSON here");

  int status = 0;
  auto bind = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    app.add_subcommand(name, help)->callback([&status, &o, fn] { status = fn(o); });
  };
  bind("solve", "Solve the invariant state; write (l, s*_l, H) and verify identities", cmd_solve);
  bind("wait", "Mean virtual waiting time W* (d = 2)", cmd_wait);
  bind("diag", "Decay diagnostic H(l) per level", cmd_diag);
  bind("simulate", "Monte Carlo tail fractions of the finite-N network", cmd_simulate);
  bind("compare", "Simulate and compare late-window tails with a solved state", cmd_compare);
  bind("decay", "Asymptotic decay exponent n_d for a tail index beta", cmd_decay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "sqd: error[usage]: %s\n", one_line(e.what()).c_str());
    return 2;
  } catch (const sqd::Error& e) {
    std::fprintf(stderr, "sqd: error[%s]: %s\n", e.category(), one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sqd: error[internal]: %s\n", one_line(e.what()).c_str());
    return 2;
  }
  return status;
}
