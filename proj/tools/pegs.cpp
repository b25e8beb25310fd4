// Command-line front end: solve / shoot / compare / plotdata.
// Exit codes: 0 success, 2 solver non-convergence, 3 I/O or schema error.

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "pegs/config.hpp"
#include "pegs/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNoConvergence = 2;
constexpr int kExitIoError = 3;

pegs::RunConfig make_config(const std::string& config_path,
                            const std::optional<std::string>& out_dir,
                            const std::optional<int>& mesh,
                            const std::optional<std::string>& rule,
                            const std::optional<double>& tf_guess,
                            int verbosity) {
  pegs::RunConfig cfg;
  if (!config_path.empty()) cfg = pegs::load_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;
  if (mesh) cfg.mesh_segments = *mesh;
  if (rule) cfg.rule = pegs::collocation_rule_from_string(*rule);
  if (tf_guess) cfg.t_f_guess = *tf_guess;
  if (verbosity > 0) cfg.solver.verbosity = verbosity;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg pursuit-evasion solver (direct collocation + "
               "indirect shooting validator)"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<int> mesh;
  std::optional<std::string> rule;
  std::optional<double> tf_guess;
  int verbosity = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_flag_function(
        "-v,--verbose", [&](int n) { verbosity = n; },
        "write an iteration log next to the artifacts");
  };

  CLI::App* solve = app.add_subcommand(
      "solve", "compute the equilibrium by direct collocation");
  add_common(solve);
  solve->add_option("--mesh", mesh, "collocation segments");
  solve->add_option("--rule", rule,
                    "collocation rule: hermite-simpson | gauss-lobatto-5");
  solve->add_option("--tf-guess", tf_guess, "terminal-time initial guess");

  CLI::App* shoot = app.add_subcommand(
      "shoot", "validate by indirect shooting, seeded from a trajectory");
  add_common(shoot);
  std::string seed_path;
  shoot->add_option("--seed", seed_path, "seed trajectory CSV")->required();

  CLI::App* compare =
      app.add_subcommand("compare", "compare two trajectory files");
  std::string traj_a, traj_b, report_path;
  pegs::CompareTolerances tol;
  compare->add_option("a", traj_a, "first trajectory CSV")->required();
  compare->add_option("b", traj_b, "second trajectory CSV")->required();
  compare->add_option("--report", report_path, "report JSON path");
  compare->add_option("--tol-tf", tol.relative_tf,
                      "relative terminal-time tolerance");
  compare->add_option("--tol-state", tol.state_deviation,
                      "max allowed r/theta deviation");

  CLI::App* plotdata =
      app.add_subcommand("plotdata", "emit plot-ready CSV files");
  std::string traj_path, plot_out = "plots";
  plotdata->add_option("trajectory", traj_path, "trajectory CSV")->required();
  plotdata->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      const auto cfg = make_config(config_path, out_dir, mesh, rule, tf_guess,
                                   verbosity);
      const auto art = pegs::run_solve(cfg);
      std::cout << "solve: " << pegs::to_string(art.solver.status)
                << "  t_f = " << art.trajectory.t_f()
                << "  |c| = " << art.solver.kkt.constraint_norm
                << "  stationarity = " << art.solver.kkt.stationarity_norm
                << "  iterations = " << art.solver.iterations << '\n'
                << "artifacts: " << art.dir.string() << '\n';
      return art.converged() ? kExitOk : kExitNoConvergence;
    }
    if (shoot->parsed()) {
      auto cfg = make_config(config_path, out_dir, mesh, rule, tf_guess,
                             verbosity);
      if (!out_dir && config_path.empty()) cfg.out_dir = "runs/shoot";
      const auto art = pegs::run_shoot(cfg, seed_path);
      std::cout << "shoot: " << (art.converged() ? "converged" : "failed")
                << "  t_f = " << art.result.unknowns.t_f
                << "  |residual| = " << art.result.residual_norm
                << "  iterations = " << art.result.iterations << '\n'
                << "artifacts: " << art.dir.string() << '\n';
      if (!art.converged()) std::cerr << art.result.message << '\n';
      return art.converged() ? kExitOk : kExitNoConvergence;
    }
    if (compare->parsed()) {
      const auto rep = pegs::run_compare(
          traj_a, traj_b, tol,
          report_path.empty() ? std::filesystem::path{}
                              : std::filesystem::path(report_path));
      std::cout << "compare: t_f " << rep.t_f_a << " vs " << rep.t_f_b
                << "  relative difference " << rep.relative_tf_difference
                << '\n';
      for (const auto& [name, dev] : rep.max_deviation)
        std::cout << "  max |" << name << "| deviation: " << dev << '\n';
      std::cout << (rep.pass ? "PASS" : "FAIL") << '\n';
      return rep.pass ? kExitOk : kExitNoConvergence;
    }
    if (plotdata->parsed()) {
      const auto files = pegs::emit_plot_data(traj_path, plot_out);
      for (const auto& f : files) std::cout << f.string() << '\n';
      return kExitOk;
    }
  } catch (const pegs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitIoError;
  } catch (const pegs::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIoError;
  }
  return kExitIoError;
}
