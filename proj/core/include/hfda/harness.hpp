#pragma once

#include "hfda/modify.hpp"
#include "hfda/optimize.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hfda {

enum class Theta0Policy { reference, perturbed, explicit_vector };
std::string to_string(Theta0Policy p);
Theta0Policy parse_theta0_policy(const std::string& name);

/// Everything needed to regenerate a study or a race. Optional fields are
/// model-dependent and filled by resolve().
struct ExperimentConfig {
  // [model]
  std::string model = "fitzhugh_nagumo";
  bool estimate_initial_state = true;

  // [observations]
  std::optional<double> obs_period;
  double obs_sigma = 0.1;
  std::uint64_t obs_seed = 2020;

  // [integration]
  std::optional<double> h;

  // [study]
  std::vector<ModificationKind> schemes = all_modifications();
  std::vector<double> potps = {0.01, 0.1};
  std::uint64_t scheme_seed = 1;

  // [solver]
  std::optional<double> eta0;      // first-order step per loss term (eta = eta0 / n_terms)
  std::optional<double> sgd_eta0;          // SGD step per loss term
  std::optional<double> gd_modified_eta0;  // GD on modified data, per loss term
  ScheduleKind schedule = ScheduleKind::constant;
  std::optional<ScheduleKind> sgd_schedule;  // defaults to schedule
  double alpha = 1.0;
  double k0 = 100.0;
  double lambda = -1.0;  // Gauss-Newton damping; negative selects the trace rule
  double gn_tol = 1e-10;
  std::size_t gn_max_iter = 200;
  std::size_t batch_kappa = 0;  // 0: round(h / obs_period)
  KsgdForm form = KsgdForm::automatic;
  DerivativeMode mode = DerivativeMode::forward;
  SamplerKind sgd_sampler = SamplerKind::systematic;
  SamplerKind ksgd_sampler = SamplerKind::systematic;
  bool ksgd_simple_run = false;  // extra race run: kSGD with simple random sampling
  bool reweight = false;
  std::uint64_t solver_seed = 7;

  // [race]
  double budget = 1.0;
  std::size_t max_iter = 0;
  double race_potp = 0.01;
  Theta0Policy theta0 = Theta0Policy::perturbed;
  double perturb_scale = 0.5;
  std::uint64_t perturb_seed = 11;
  std::vector<double> theta0_values;
  std::size_t record_every_deterministic = 1;
  std::size_t record_every_stochastic = 10;
  std::size_t max_records = 1000;  // replayed records per run (evenly thinned; 0 keeps all)

  // [output]
  std::filesystem::path output_dir = "out";

  /// Fills model-dependent defaults and checks consistency; throws UsageError.
  void resolve();
  double period() const { return obs_period.value(); }
  double step() const { return h.value(); }
  std::size_t kappa() const;
};

/// Defaults for one of the built-in models (period, step, step sizes).
ExperimentConfig default_config(const std::string& model);

/// Data, full problem and reference minimizer shared by every run of a study.
struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const EstimationProblem> full_problem;
  Vector z_star;              // generating augmented initial condition
  Vector theta_star;          // z_star in free coordinates
  Vector theta_hat;           // minimizer of the unmodified problem
  double reference_objective = 0.0;  // G_nomod(theta_hat)

  const ObservationSet& data() const { return full_problem->data(); }
  ProblemOptions problem_options() const { return full_problem->options(); }
};

/// Simulates the data and computes (or reuses from the in-process cache) the
/// unmodified-problem minimizer by Gauss-Newton from the true parameter.
Experiment prepare_experiment(const ExperimentConfig& config);

/// Key under which the reference minimizer is cached.
std::string reference_key(const ExperimentConfig& config);
/// Forgets every cached reference minimizer.
void clear_reference_cache();

/// (G(theta_mod) - G(theta_nomod)) / G(theta_nomod); throws UsageError unless
/// the denominator is positive.
double relative_error(const std::function<double(const Vector&)>& objective_nomod,
                      const Vector& theta_mod, const Vector& theta_nomod);

struct RelativeErrorEntry {
  ModificationKind scheme = ModificationKind::none;
  double potp = 1.0;
  double relative_error = 0.0;
  bool failed = false;
  std::string note;
};

struct RelativeErrorReport {
  std::vector<RelativeErrorEntry> entries;
  double reference_objective = 0.0;
  Vector theta_hat;

  /// Entry lookup; throws std::out_of_range when absent.
  const RelativeErrorEntry& at(ModificationKind scheme, double potp) const;
};

/// For each scheme and POTP: modify the data, minimize the modified objective
/// by Gauss-Newton from the true parameter, and score the estimate against the
/// unmodified minimizer.
RelativeErrorReport run_table1_study(const ExperimentConfig& config);
RelativeErrorReport run_table1_study(const Experiment& experiment);

/// CSV with header `scheme,potp,relative_error` (failed entries print `nan`).
void write_report(const std::filesystem::path& path, const RelativeErrorReport& report);

using ErrorTrace = std::vector<std::pair<double, double>>;  // (time, relative error)

/// Relative error of every recorded iterate against the reference minimizer.
ErrorTrace replay_trace(const RunTrace& trace, const EstimationProblem& full_problem,
                        const Vector& theta_hat);

/// Keeps at most `max_records` records, evenly spaced by index and always
/// including the first and last; 0 keeps everything.
RunTrace thin_trace(const RunTrace& trace, std::size_t max_records);

struct RaceRun {
  std::string name;   // file stem, e.g. "GD_nomod", "SGD", "kSGD"
  std::string group;  // "first_order" or "second_order"
  std::string solver;
  ModificationKind scheme = ModificationKind::none;
  std::map<std::string, std::string> hyperparameters;
  RunTrace trace;
  ErrorTrace errors;
  bool truncated = false;  // replay hit a non-finite objective

  double final_error() const { return errors.back().second; }
};

/// One solver run: "gd", "gn", "sgd" or "ksgd", optionally on modified data
/// (deterministic solvers only).
struct SolverRequest {
  std::string solver;
  ModificationKind scheme = ModificationKind::none;
  double potp = 1.0;
  std::optional<SamplerKind> sampler;  // stochastic solvers; config default otherwise
  std::string name;                    // empty: GD_<scheme>, GD_nomod, SGD, GN_..., kSGD
};

std::string default_run_name(const SolverRequest& request);

/// Runs one solver from theta0 under `limits` with the configured
/// hyperparameters, thins the trace and replays it.
RaceRun run_solver(const Experiment& experiment, const SolverRequest& request,
                   const Vector& theta0, const RunLimits& limits);

/// The race line-up: GD on each scheme, GD unmodified, SGD, then the same for
/// Gauss-Newton with kSGD (plus kSGD with simple sampling when enabled).
std::vector<SolverRequest> race_requests(const ExperimentConfig& config);
/// Budget, iteration cap and record cadence of a race run.
RunLimits race_limits(const ExperimentConfig& config, const std::string& solver);

struct RaceOptions {
  bool write_files = true;
  /// Worker threads for the runs; 1 keeps the timing of a serial race.
  std::size_t jobs = 1;
  /// Replace the time budget by a per-run iteration cap (keyed by run name).
  std::map<std::string, std::size_t> iteration_caps;
};

struct RaceResult {
  std::vector<RaceRun> runs;
  Vector theta0;
  const RaceRun& at(const std::string& name) const;
};

/// Runs every first-order (GD on each scheme, GD unmodified, SGD) and
/// second-order (GN likewise, kSGD) solver from a shared start under the
/// budget, then replays the traces. Writes `<output>/<model>/<group>/<name>.csv`
/// plus `.meta` sidecars when enabled.
RaceResult run_budget_race(const ExperimentConfig& config, const RaceOptions& options = {});
RaceResult run_budget_race(const Experiment& experiment, const RaceOptions& options = {});

/// Starting point for the race under the configured policy (free coordinates).
Vector race_start(const Experiment& experiment);

/// Trace CSV: header `time,error`.
void write_error_trace(const std::filesystem::path& path, const ErrorTrace& errors);
/// `key = value` metadata sidecar.
void write_run_metadata(const std::filesystem::path& path, const ExperimentConfig& config,
                        const RaceRun& run);

}  // namespace hfda
