#include "hfda/cli.hpp"

#include "hfda/config.hpp"
#include "hfda/errors.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace hfda::cli {

namespace {

struct Common {
  std::string config;
  std::string model = "fitzhugh_nagumo";
  std::vector<std::string> sets;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--model", c.model, "built-in model when no config is given");
  cmd->add_option("--set", c.sets, "override a config key: section.key=value")
      ->allow_extra_args(false);
  cmd->add_option("--out", c.out_dir, "output directory (output.dir)");
}

ExperimentConfig load(const Common& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = c.sets;
  if (!c.out_dir.empty()) overrides.push_back("output.dir=" + c.out_dir);
  for (auto& e : extra) overrides.push_back(std::move(e));
  if (!c.config.empty()) return parse_config(c.config, overrides);
  return parse_config_text("[model]\nname = " + c.model + "\n", overrides, "<defaults>");
}

std::string num(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

ObservationSet simulate(const ExperimentConfig& c) {
  AugmentedSystem system(make_model(c.model));
  SimulationOptions sim;
  sim.period = c.period();
  sim.seed = c.obs_seed;
  return simulate_observations(system, system.reference_initial_condition(),
                               ObservationModel::identity(system.d(), c.obs_sigma), sim);
}

std::filesystem::path model_dir(const ExperimentConfig& c) { return c.output_dir / c.model; }

void summarize(std::ostream& out, const RaceRun& run) {
  out << run.name << ": iterations=" << run.trace.iterations
      << " terminated_by=" << to_string(run.trace.terminated_by)
      << " final_error=" << std::setprecision(6) << run.final_error()
      << (run.truncated ? " truncated" : "") << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parameter estimation for ODE models under high-frequency observations"};
  app.name("hfda");
  app.require_subcommand(1, 1);
  app.footer("Config files hold [section] headers and key = value lines. Keys:\n" +
             config_help());

  Common simulate_opts, modify_opts, solve_opts, check_opts, table_opts, race_opts;

  auto* simulate_cmd = app.add_subcommand("simulate", "generate synthetic observations");
  add_common(simulate_cmd, simulate_opts);

  auto* modify_cmd = app.add_subcommand("modify", "apply a data-modification scheme");
  add_common(modify_cmd, modify_opts);
  std::string modify_kind;
  double modify_potp = 0.01;
  std::optional<std::uint64_t> modify_seed;
  std::string modify_input;
  modify_cmd->add_option("--modify", modify_kind, "scheme name")->required();
  modify_cmd->add_option("--potp", modify_potp, "proportion of observation time points kept");
  modify_cmd->add_option("--seed", modify_seed, "seed for the random schemes");
  modify_cmd->add_option("--input", modify_input, "observation CSV (simulated when omitted)")
      ->check(CLI::ExistingFile);

  auto* solve_cmd = app.add_subcommand("solve", "run one solver and write its error trace");
  add_common(solve_cmd, solve_opts);
  std::string solver;
  std::string solve_kind = "none";
  std::optional<double> solve_potp;
  solve_cmd->add_option("--solver", solver, "gd, gn, sgd or ksgd")
      ->required()
      ->check(CLI::IsMember({"gd", "gn", "sgd", "ksgd"}));
  solve_cmd->add_option("--modify", solve_kind, "scheme for gd/gn (default none)");
  solve_cmd->add_option("--potp", solve_potp, "proportion kept (default race.potp)");

  auto* check_cmd = app.add_subcommand("check", "gradient and estimator self-checks");
  add_common(check_cmd, check_opts);
  CheckOptions check_options;
  check_cmd->add_option("--points", check_options.points, "random points per gradient check");
  check_cmd->add_flag("--corrupt-jacobian", check_options.corrupt_jacobian,
                      "perturb the state Jacobian (negative control)");

  auto* table_cmd = app.add_subcommand("table1", "relative error of every scheme and POTP");
  add_common(table_cmd, table_opts);

  auto* race_cmd = app.add_subcommand("race", "budgeted race of all solvers");
  add_common(race_cmd, race_opts);
  std::size_t jobs = 1;
  race_cmd->add_option("--jobs", jobs, "concurrent runs (1 keeps serial timing)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate_cmd) {
      const ExperimentConfig c = load(simulate_opts);
      const ObservationSet data = simulate(c);
      const auto path = model_dir(c) / "observations.csv";
      write_observations(path, data, {c.model, c.obs_seed, c.period()});
      out << "simulate " << c.model << ": " << data.size() << " observations -> " << path.string()
          << '\n';
      return 0;
    }
    if (*modify_cmd) {
      std::vector<std::string> extra;
      if (modify_seed) extra.push_back("study.scheme_seed=" + std::to_string(*modify_seed));
      const ExperimentConfig c = load(modify_opts, extra);
      const ObservationSet data =
          modify_input.empty() ? simulate(c) : read_observations(modify_input);
      ModificationScheme scheme;
      scheme.kind = parse_modification(modify_kind);
      scheme.potp = modify_potp;
      scheme.seed = c.scheme_seed;
      const ObservationSet modified = apply_modification(data, scheme);
      const auto path =
          model_dir(c) / (to_string(scheme.kind) + "_potp" + num(modify_potp) + ".csv");
      write_observations(path, modified, {c.model, c.scheme_seed, c.period()});
      out << "modify " << to_string(scheme.kind) << " potp=" << num(modify_potp) << ": "
          << data.size() << " -> " << modified.size() << " observations ("
          << modified.distinct_times() << " distinct times) -> " << path.string() << '\n';
      return 0;
    }
    if (*solve_cmd) {
      const ExperimentConfig c = load(solve_opts);
      const Experiment ex = prepare_experiment(c);
      SolverRequest req;
      req.solver = solver;
      req.scheme = parse_modification(solve_kind);
      req.potp = solve_potp.value_or(c.race_potp);
      const RaceRun run = run_solver(ex, req, race_start(ex), race_limits(c, solver));
      const auto dir = model_dir(c) / "solve";
      write_error_trace(dir / (run.name + ".csv"), run.errors);
      write_run_metadata(dir / (run.name + ".meta"), c, run);
      summarize(out, run);
      return 0;
    }
    if (*check_cmd) {
      const ExperimentConfig c = load(check_opts);
      bool ok = true;
      for (const auto& r : run_checks(c, check_options)) {
        out << format_check(r) << '\n';
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
    if (*table_cmd) {
      const ExperimentConfig c = load(table_opts);
      const RelativeErrorReport report = run_table1_study(c);
      const auto path = model_dir(c) / "table1.csv";
      write_report(path, report);
      bool ok = true;
      for (const auto& e : report.entries) {
        out << std::left << std::setw(20) << to_string(e.scheme) << " potp=" << std::setw(5)
            << num(e.potp) << " relative_error=" << std::setprecision(6) << e.relative_error;
        if (!e.note.empty()) out << " (" << e.note << ')';
        out << '\n';
        ok = ok && !e.failed;
      }
      out << "report -> " << path.string() << '\n';
      return ok ? 0 : 1;
    }
    if (*race_cmd) {
      const ExperimentConfig c = load(race_opts);
      RaceOptions options;
      options.jobs = jobs;
      const RaceResult result = run_budget_race(c, options);
      for (const auto& r : result.runs) summarize(out, r);
      out << "traces -> " << model_dir(c).string() << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace hfda::cli
