#pragma once

// JSON and CSV serialization of solved states, performance measures and simulation
// output. Every real is written in shortest round-trip form.

#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sqd/distributions.hpp"
#include "sqd/error.hpp"
#include "sqd/format.hpp"
#include "sqd/invariant.hpp"
#include "sqd/perf.hpp"
#include "sqd/sim.hpp"

namespace sqd {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline double number_or_nan(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline Json to_json(const ExpMixture& m) {
  Json terms = Json::array();
  for (const auto& t : m.terms) terms.push_back(Json{{"coeff", t.coeff}, {"rate", t.rate}});
  return Json{{"base", m.base}, {"terms", terms}};
}

inline Json to_json(const LevelDiagnostics& d) {
  Json j{{"ell", d.ell},
         {"s", d.s},
         {"h_at_zero", detail::finite_or_null(d.h_at_zero)},
         {"h_at_upper", detail::finite_or_null(d.h_at_upper)},
         {"residual", detail::finite_or_null(d.residual)},
         {"bracket_width", d.bracket_width},
         {"iterations", d.iterations},
         {"sign_changes", d.sign_changes},
         {"noise", detail::finite_or_null(d.noise)}};
  if (!d.warning.empty()) j["warning"] = d.warning;
  return j;
}

inline Json to_json(const InvariantState& s) {
  Json r = Json::array();
  for (const auto& m : s.r) r.push_back(to_json(m));
  Json levels = Json::array();
  for (const auto& d : s.levels) levels.push_back(to_json(d));
  return Json{{"lambda", s.lambda},   {"d", s.d},   {"dist", s.dist.spec()},  {"cutoff", s.cutoff},
              {"stop", to_string(s.stop)}, {"s_star", s.s_star}, {"r", r}, {"residuals", levels}};
}

inline InvariantState state_from_json(const Json& j) {
  try {
    InvariantState s;
    s.lambda = j.at("lambda").get<double>();
    s.d = j.at("d").get<int>();
    s.dist = parse_distribution(j.at("dist").get<std::string>());
    s.cutoff = j.at("cutoff").get<double>();
    s.stop = parse_stop_reason(j.at("stop").get<std::string>());
    s.s_star = j.at("s_star").get<std::vector<double>>();
    for (const auto& m : j.at("r")) {
      ExpMixture mix;
      mix.base = m.at("base").get<double>();
      for (const auto& t : m.at("terms")) mix.terms.push_back({t.at("coeff").get<double>(), t.at("rate").get<double>()});
      s.r.push_back(std::move(mix));
    }
    if (s.r.size() != s.s_star.size()) throw ConfigError("state: s_star and r have different lengths");
    if (j.contains("residuals")) {
      for (const auto& d : j.at("residuals")) {
        LevelDiagnostics diag;
        diag.ell = d.at("ell").get<int>();
        diag.s = d.at("s").get<double>();
        diag.h_at_zero = detail::number_or_nan(d.at("h_at_zero"));
        diag.h_at_upper = detail::number_or_nan(d.at("h_at_upper"));
        diag.residual = detail::number_or_nan(d.at("residual"));
        diag.bracket_width = d.at("bracket_width").get<double>();
        diag.iterations = d.at("iterations").get<int>();
        diag.sign_changes = d.at("sign_changes").get<int>();
        diag.noise = detail::number_or_nan(d.at("noise"));
        if (d.contains("warning")) diag.warning = d.at("warning").get<std::string>();
        s.levels.push_back(std::move(diag));
      }
    }
    return s;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("state JSON: ") + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline InvariantState load_state(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("state file '" + path + "': " + e.what());
  }
  return state_from_json(j);
}

/// `ell,s_star,H` for every solved level, plus the first level reported as zero when
/// the solve stopped at the cutoff. Undefined H is written as NaN.
inline std::string diagnostics_csv(const InvariantState& s) {
  std::ostringstream out;
  out << "ell,s_star,H\n";
  const int last = s.depth() + (s.stop == StopReason::cutoff ? 1 : 0);
  for (int ell = 1; ell <= last; ++ell) {
    const auto h = h_diagnostic(s, ell);
    out << ell << ',' << shortest(s.s(ell)) << ',' << shortest(h.value_or(std::nan(""))) << '\n';
  }
  return out.str();
}

inline Json diagnostics_json(const InvariantState& s) {
  Json rows = Json::array();
  const int last = s.depth() + (s.stop == StopReason::cutoff ? 1 : 0);
  for (int ell = 1; ell <= last; ++ell) {
    const auto h = h_diagnostic(s, ell);
    rows.push_back(Json{{"ell", ell}, {"s_star", s.s(ell)}, {"H", h ? Json(*h) : Json(nullptr)}});
  }
  const auto tc = tail_condition(s.dist, s.d);
  return Json{{"lambda", s.lambda},
              {"d", s.d},
              {"dist", s.dist.spec()},
              {"stop", to_string(s.stop)},
              {"levels", rows},
              {"tail_condition",
               Json{{"beta", detail::finite_or_null(tc.beta)}, {"threshold", tc.threshold}, {"satisfied", tc.satisfied}}}};
}

inline std::string to_string(WaitFormula f) { return f == WaitFormula::difference ? "difference" : "printed-sum"; }

inline std::string wait_csv(const InvariantState& s, const WaitConfig& cfg, double w) {
  std::ostringstream out;
  out << "lambda,d,dist,L0,R0,delta,formula,W*\n"
      << shortest(s.lambda) << ',' << s.d << ',' << s.dist.spec() << ',' << cfg.l0 << ',' << shortest(cfg.r0) << ','
      << shortest(cfg.delta) << ',' << to_string(cfg.formula) << ',' << shortest(w) << '\n';
  return out.str();
}

inline Json wait_json(const InvariantState& s, const WaitConfig& cfg, double w) {
  return Json{{"lambda", s.lambda}, {"d", s.d},           {"dist", s.dist.spec()},
              {"L0", cfg.l0},       {"R0", cfg.r0},       {"delta", cfg.delta},
              {"formula", to_string(cfg.formula)}, {"W*", w}};
}

inline Json to_json(const SimConfig& c) {
  return Json{{"n", c.n},
              {"d", c.d},
              {"lambda", c.lambda},
              {"dist", c.dist.spec()},
              {"horizon", c.horizon},
              {"grid_step", c.grid_step},
              {"realizations", c.realizations},
              {"seed", c.seed},
              {"ell_max", c.ell_max},
              {"initial", to_string(c.initial)},
              {"sampling", to_string(c.sampling)}};
}

/// Long-format `t,ell,mean_tail,stderr`, preceded by the configuration as a JSON
/// comment line. The thread count is not part of the echo, so output bytes do not
/// depend on it.
inline std::string sim_csv(const SimResult& r) {
  std::ostringstream out;
  out << "# " << to_json(r.config).dump() << '\n';
  out << "t,ell,mean_tail,stderr\n";
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    for (int ell = 1; ell <= r.ell_max(); ++ell) {
      out << shortest(r.times[k]) << ',' << ell << ',' << shortest(r.tail(ell, k)) << ','
          << shortest(r.stderr_at(ell, k)) << '\n';
    }
  }
  return out.str();
}

inline Json sim_json(const SimResult& r) {
  Json rows = Json::array();
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    for (int ell = 1; ell <= r.ell_max(); ++ell) {
      rows.push_back(Json{{"t", r.times[k]}, {"ell", ell}, {"mean_tail", r.tail(ell, k)}, {"stderr", r.stderr_at(ell, k)}});
    }
  }
  return Json{{"config", to_json(r.config)}, {"rows", rows}};
}

inline std::string compare_csv(const ComparisonReport& rep) {
  std::ostringstream out;
  out << "# window=[" << shortest(rep.t0) << ',' << shortest(rep.t1) << "]\n";
  out << "ell,simulated,stderr,s_star,gap,gap_in_se\n";
  for (const auto& row : rep.rows) {
    out << row.ell << ',' << shortest(row.simulated) << ',' << shortest(row.stderr_) << ',' << shortest(row.s_star)
        << ',' << shortest(row.gap) << ',' << shortest(row.gap_in_se) << '\n';
  }
  return out.str();
}

inline Json compare_json(const ComparisonReport& rep) {
  Json rows = Json::array();
  for (const auto& row : rep.rows) {
    rows.push_back(Json{{"ell", row.ell},
                        {"simulated", row.simulated},
                        {"stderr", row.stderr_},
                        {"s_star", row.s_star},
                        {"gap", row.gap},
                        {"gap_in_se", detail::finite_or_null(row.gap_in_se)}});
  }
  return Json{{"window", Json::array({rep.t0, rep.t1})}, {"rows", rows}};
}

}  // namespace sqd
