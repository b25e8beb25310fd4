#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "pegs/game_core.hpp"
#include "pegs/nlp.hpp"
#include "pegs/ode.hpp"
#include "pegs/transcription.hpp"
#include "pegs/types.hpp"

// Run configuration: JSON schema (versioned), defaults, validation.
// Unset fields take the benchmark defaults; unknown keys are rejected so
// typos fail loudly instead of silently running the default.

namespace pegs {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  GameParameters parameters;
  GameState initial_state{{0.0, 1.0, 1.0, 0.0}, {0.0, 0.9759, 1.05, 0.4}};
  std::string leader = "evader";
  int mesh_segments = 40;
  CollocationRule rule = CollocationRule::hermite_simpson;
  double t_f_guess = 3.0;
  SolverOptions solver;
  IntegratorOptions integrator;
  std::filesystem::path out_dir = "runs";

  void validate() const {
    parameters.validate();
    if (!(initial_state.pursuer.r > 0.0))
      throw ConfigError("initial_state.pursuer.r must be > 0");
    if (!(initial_state.evader.r > 0.0))
      throw ConfigError("initial_state.evader.r must be > 0");
    if (!initial_state.finite())
      throw ConfigError("initial_state must be finite");
    if (leader != "evader")
      throw ConfigError(
          "leader: only the evader-leads formulation is implemented");
    if (mesh_segments < 2) throw ConfigError("mesh_segments must be >= 2");
    if (!(t_f_guess > 0.0)) throw ConfigError("t_f_guess must be > 0");
    try {
      solver.validate();
      integrator.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

inline double get_num(const json& j, const char* key, double fallback,
                      const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw ConfigError(std::string(where) + "." + key + " must be a number");
  return j[key].get<double>();
}

inline PlayerState player_from_json(const json& j, const PlayerState& dflt,
                                    const std::string& where) {
  reject_unknown_keys(j, {"v_r", "v_theta", "r", "theta"}, where);
  PlayerState s = dflt;
  s.v_r = get_num(j, "v_r", dflt.v_r, where);
  s.v_theta = get_num(j, "v_theta", dflt.v_theta, where);
  s.r = get_num(j, "r", dflt.r, where);
  s.theta = get_num(j, "theta", dflt.theta, where);
  return s;
}

}  // namespace detail

inline json config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["parameters"] = {{"thrust_pursuer", c.parameters.thrust_pursuer},
                     {"thrust_evader", c.parameters.thrust_evader},
                     {"mu", c.parameters.mu}};
  j["initial_state"] = {
      {"pursuer",
       {{"v_r", c.initial_state.pursuer.v_r},
        {"v_theta", c.initial_state.pursuer.v_theta},
        {"r", c.initial_state.pursuer.r},
        {"theta", c.initial_state.pursuer.theta}}},
      {"evader",
       {{"v_r", c.initial_state.evader.v_r},
        {"v_theta", c.initial_state.evader.v_theta},
        {"r", c.initial_state.evader.r},
        {"theta", c.initial_state.evader.theta}}}};
  j["leader"] = c.leader;
  j["mesh_segments"] = c.mesh_segments;
  j["collocation_rule"] = to_string(c.rule);
  j["t_f_guess"] = c.t_f_guess;
  j["solver"] = {{"tol_constraint", c.solver.tol_constraint},
                 {"tol_stationarity", c.solver.tol_stationarity},
                 {"max_major_iterations", c.solver.max_major_iterations},
                 {"fd_step", c.solver.fd_step},
                 {"merit_penalty_initial", c.solver.merit_penalty_initial},
                 {"merit_penalty_max", c.solver.merit_penalty_max},
                 {"feasibility_switch", c.solver.feasibility_switch},
                 {"reduced_step_cap", c.solver.reduced_step_cap},
                 {"verbosity", c.solver.verbosity},
                 {"threads", c.solver.threads}};
  j["integrator"] = {
      {"method",
       c.integrator.method == IntegratorOptions::Method::rk4 ? "rk4"
                                                             : "dopri45"},
      {"rk4_steps", c.integrator.rk4_steps},
      {"rel_tol", c.integrator.rel_tol},
      {"abs_tol", c.integrator.abs_tol},
      {"dense_samples", c.integrator.dense_samples}};
  j["out_dir"] = c.out_dir.string();
  return j;
}

inline RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"schema_version", "parameters", "initial_state", "leader",
       "mesh_segments", "collocation_rule", "t_f_guess", "solver",
       "integrator", "out_dir"},
      "config");
  if (j.contains("schema_version") &&
      j["schema_version"].get<int>() != kConfigSchemaVersion)
    throw ConfigError("unsupported schema_version (want " +
                      std::to_string(kConfigSchemaVersion) + ")");
  RunConfig c;
  if (j.contains("parameters")) {
    const json& p = j["parameters"];
    detail::reject_unknown_keys(p, {"thrust_pursuer", "thrust_evader", "mu"},
                                "parameters");
    c.parameters.thrust_pursuer = detail::get_num(
        p, "thrust_pursuer", c.parameters.thrust_pursuer, "parameters");
    c.parameters.thrust_evader = detail::get_num(
        p, "thrust_evader", c.parameters.thrust_evader, "parameters");
    c.parameters.mu = detail::get_num(p, "mu", c.parameters.mu, "parameters");
  }
  if (j.contains("initial_state")) {
    const json& s = j["initial_state"];
    detail::reject_unknown_keys(s, {"pursuer", "evader"}, "initial_state");
    if (s.contains("pursuer"))
      c.initial_state.pursuer = detail::player_from_json(
          s["pursuer"], c.initial_state.pursuer, "initial_state.pursuer");
    if (s.contains("evader"))
      c.initial_state.evader = detail::player_from_json(
          s["evader"], c.initial_state.evader, "initial_state.evader");
  }
  if (j.contains("leader")) c.leader = j["leader"].get<std::string>();
  if (j.contains("mesh_segments")) c.mesh_segments = j["mesh_segments"].get<int>();
  if (j.contains("collocation_rule")) {
    try {
      c.rule = collocation_rule_from_string(
          j["collocation_rule"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  c.t_f_guess = detail::get_num(j, "t_f_guess", c.t_f_guess, "config");
  if (j.contains("solver")) {
    const json& s = j["solver"];
    detail::reject_unknown_keys(
        s,
        {"tol_constraint", "tol_stationarity", "max_major_iterations",
         "fd_step", "merit_penalty_initial", "merit_penalty_max",
         "feasibility_switch", "reduced_step_cap", "verbosity", "threads"},
        "solver");
    auto& o = c.solver;
    o.tol_constraint = detail::get_num(s, "tol_constraint", o.tol_constraint, "solver");
    o.tol_stationarity =
        detail::get_num(s, "tol_stationarity", o.tol_stationarity, "solver");
    if (s.contains("max_major_iterations"))
      o.max_major_iterations = s["max_major_iterations"].get<int>();
    o.fd_step = detail::get_num(s, "fd_step", o.fd_step, "solver");
    o.merit_penalty_initial = detail::get_num(s, "merit_penalty_initial",
                                              o.merit_penalty_initial, "solver");
    o.merit_penalty_max =
        detail::get_num(s, "merit_penalty_max", o.merit_penalty_max, "solver");
    o.feasibility_switch =
        detail::get_num(s, "feasibility_switch", o.feasibility_switch, "solver");
    o.reduced_step_cap =
        detail::get_num(s, "reduced_step_cap", o.reduced_step_cap, "solver");
    if (s.contains("verbosity")) o.verbosity = s["verbosity"].get<int>();
    if (s.contains("threads")) o.threads = s["threads"].get<int>();
  }
  if (j.contains("integrator")) {
    const json& s = j["integrator"];
    detail::reject_unknown_keys(
        s, {"method", "rk4_steps", "rel_tol", "abs_tol", "dense_samples"},
        "integrator");
    auto& o = c.integrator;
    if (s.contains("method")) {
      const std::string mth = s["method"].get<std::string>();
      if (mth == "rk4")
        o.method = IntegratorOptions::Method::rk4;
      else if (mth == "dopri45")
        o.method = IntegratorOptions::Method::dopri45;
      else
        throw ConfigError("integrator.method must be 'rk4' or 'dopri45'");
    }
    if (s.contains("rk4_steps")) o.rk4_steps = s["rk4_steps"].get<int>();
    o.rel_tol = detail::get_num(s, "rel_tol", o.rel_tol, "integrator");
    o.abs_tol = detail::get_num(s, "abs_tol", o.abs_tol, "integrator");
    if (s.contains("dense_samples"))
      o.dense_samples = s["dense_samples"].get<int>();
  }
  if (j.contains("out_dir"))
    c.out_dir = std::filesystem::path(j["out_dir"].get<std::string>());
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " +
                      e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config schema error in " + path.string() + ": " +
                      e.what());
  }
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config: " + path.string());
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace pegs
