#include "hfda/harness.hpp"

#include "hfda/errors.hpp"

#include <algorithm>
#include <charconv>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace hfda {

namespace {

struct ModelDefaults {
  double period;
  double h;
  double eta0;
  double sgd_eta0;
  double gd_modified_eta0;
};

ModelDefaults model_defaults(const std::string& model) {
  if (model == "fitzhugh_nagumo") return {0.01, 1.0, 3.2e-3, 8e-4, 2.5e-5};
  if (model == "lotka_volterra") return {0.005, 0.5, 4e-4, 8e-4, 4e-4};
  if (model == "van_der_pol") return {0.001, 0.1, 1.6e-3, 4e-4, 4e-4};
  return {0.01, 0.1, 1e-4, 1e-4, 1e-4};
}

std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string join(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt(v[i]);
  }
  return out;
}

bool same_potp(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

std::mutex cache_mutex;
std::map<std::string, std::pair<Vector, double>>& reference_cache() {
  static std::map<std::string, std::pair<Vector, double>> cache;
  return cache;
}

std::uint64_t name_stream(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

}  // namespace

std::string to_string(Theta0Policy p) {
  switch (p) {
    case Theta0Policy::reference: return "reference";
    case Theta0Policy::perturbed: return "perturbed";
    case Theta0Policy::explicit_vector: return "explicit";
  }
  return "?";
}

Theta0Policy parse_theta0_policy(const std::string& name) {
  if (name == "reference") return Theta0Policy::reference;
  if (name == "perturbed") return Theta0Policy::perturbed;
  if (name == "explicit") return Theta0Policy::explicit_vector;
  throw UsageError("unknown theta0 policy '" + name + "' (reference, perturbed, explicit)");
}

ExperimentConfig default_config(const std::string& model) {
  ExperimentConfig c;
  c.model = model;
  c.resolve();
  return c;
}

void ExperimentConfig::resolve() {
  (void)make_model(model);  // throws for unknown names
  const ModelDefaults def = model_defaults(model);
  if (!obs_period) obs_period = def.period;
  if (!h) h = def.h;
  if (!eta0) eta0 = def.eta0;
  if (!sgd_eta0) sgd_eta0 = def.sgd_eta0;
  if (!sgd_schedule) sgd_schedule = schedule;
  if (!gd_modified_eta0) gd_modified_eta0 = def.gd_modified_eta0;

  if (!(*obs_period > 0.0)) throw UsageError("observations.period must be positive");
  if (!(*h > 0.0)) throw UsageError("integration.h must be positive");
  if (!(obs_sigma > 0.0)) throw UsageError("observations.sigma must be positive");
  if (!(*eta0 > 0.0) || !(*sgd_eta0 > 0.0) || !(*gd_modified_eta0 > 0.0)) throw UsageError("solver step sizes must be positive");
  for (double p : potps)
    if (!(p > 0.0 && p <= 1.0)) throw UsageError("study.potps entries must lie in (0, 1]");
  if (!(race_potp > 0.0 && race_potp <= 1.0)) throw UsageError("race.potp must lie in (0, 1]");
  if (budget < 0.0) throw UsageError("race.budget must be nonnegative");
  if (budget == 0.0 && max_iter == 0)
    throw UsageError("race needs a budget or an iteration cap");
  if (max_records == 1) throw UsageError("race.max_records must be 0 or at least 2");
  if (record_every_deterministic == 0 || record_every_stochastic == 0)
    throw UsageError("record cadences must be positive");
  if (gn_max_iter == 0) throw UsageError("solver.gn_max_iter must be positive");
  if (perturb_scale < 0.0) throw UsageError("race.perturb_scale must be nonnegative");
  StepSchedule{schedule, *eta0, k0, alpha}.validate();
}

std::size_t ExperimentConfig::kappa() const {
  if (batch_kappa > 0) return batch_kappa;
  return std::max<std::size_t>(1, round_count(step() / period()));
}

void clear_reference_cache() {
  std::lock_guard<std::mutex> lock(cache_mutex);
  reference_cache().clear();
}

std::string reference_key(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17) << c.model << '|' << c.estimate_initial_state << '|' << c.period()
     << '|' << c.obs_sigma << '|' << c.obs_seed << '|' << c.step() << '|' << c.reweight << '|'
     << c.lambda << '|' << c.gn_tol << '|' << c.gn_max_iter;
  return os.str();
}

Experiment prepare_experiment(const ExperimentConfig& config_in) {
  Experiment ex;
  ex.config = config_in;
  ex.config.resolve();
  const ExperimentConfig& c = ex.config;

  AugmentedSystem system(make_model(c.model));
  ex.z_star = system.reference_initial_condition();
  SimulationOptions sim;
  sim.period = c.period();
  sim.seed = c.obs_seed;
  ObservationSet data = simulate_observations(
      system, ex.z_star, ObservationModel::identity(system.d(), c.obs_sigma), sim);

  ProblemOptions opts;
  opts.h = c.step();
  opts.estimate_initial_state = c.estimate_initial_state;
  opts.loss.reweight = c.reweight;
  opts.mode = c.mode;
  ex.full_problem =
      std::make_shared<const EstimationProblem>(system, std::move(data), ex.z_star, opts);
  ex.theta_star = ex.full_problem->restrict_to_free(ex.z_star);

  const std::string key = reference_key(c);
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = reference_cache().find(key);
    if (it != reference_cache().end()) {
      ex.theta_hat = it->second.first;
      ex.reference_objective = it->second.second;
      return ex;
    }
  }
  RunLimits limits;
  limits.max_iter = c.gn_max_iter;
  limits.record_every = c.gn_max_iter + 1;
  const RunTrace trace = run_gauss_newton(*ex.full_problem, ex.theta_star,
                                          GaussNewtonOptions{c.lambda, c.gn_tol, true}, limits);
  if (trace.terminated_by == Termination::divergence)
    throw SolverError("reference minimization failed: " + trace.message, 0.0);
  ex.theta_hat = trace.final_record().theta;
  ex.reference_objective = ex.full_problem->objective(ex.theta_hat);
  if (!(ex.reference_objective > 0.0) || !std::isfinite(ex.reference_objective))
    throw SolverError("reference objective is not positive", 0.0);
  std::lock_guard<std::mutex> lock(cache_mutex);
  reference_cache()[key] = {ex.theta_hat, ex.reference_objective};
  return ex;
}

double relative_error(const std::function<double(const Vector&)>& objective_nomod,
                      const Vector& theta_mod, const Vector& theta_nomod) {
  const double base = objective_nomod(theta_nomod);
  if (!(base > 0.0)) throw UsageError("relative error needs a positive reference objective");
  return (objective_nomod(theta_mod) - base) / base;
}

const RelativeErrorEntry& RelativeErrorReport::at(ModificationKind scheme, double potp) const {
  for (const auto& e : entries)
    if (e.scheme == scheme && same_potp(e.potp, potp)) return e;
  throw std::out_of_range("no study entry for " + to_string(scheme) + " at " + fmt(potp));
}

RelativeErrorReport run_table1_study(const ExperimentConfig& config) {
  return run_table1_study(prepare_experiment(config));
}

RelativeErrorReport run_table1_study(const Experiment& ex) {
  const ExperimentConfig& c = ex.config;
  const EstimationProblem& full = *ex.full_problem;
  RelativeErrorReport report;
  report.reference_objective = ex.reference_objective;
  report.theta_hat = ex.theta_hat;
  report.entries.push_back({ModificationKind::none, 1.0, 0.0, false, "reference"});

  const auto G = [&](const Vector& th) { return full.objective(th); };
  for (ModificationKind kind : c.schemes) {
    if (kind == ModificationKind::none) continue;
    for (double potp : c.potps) {
      RelativeErrorEntry entry;
      entry.scheme = kind;
      entry.potp = potp;
      try {
        ModificationScheme scheme;
        scheme.kind = kind;
        scheme.potp = potp;
        scheme.seed = c.scheme_seed;
        EstimationProblem modified(full.system(), apply_modification(full.data(), scheme),
                                   ex.z_star, full.options());
        RunLimits limits;
        limits.max_iter = c.gn_max_iter;
        limits.record_every = c.gn_max_iter + 1;
        const RunTrace trace = run_gauss_newton(modified, ex.theta_star,
                                                GaussNewtonOptions{c.lambda, c.gn_tol, true}, limits);
        if (trace.terminated_by == Termination::divergence) {
          entry.failed = true;
          entry.relative_error = std::numeric_limits<double>::quiet_NaN();
          entry.note = trace.message;
        } else {
          entry.relative_error = (G(trace.final_record().theta) - ex.reference_objective) /
                                 ex.reference_objective;
          if (trace.terminated_by != Termination::converged) entry.note = "not converged";
        }
      } catch (const std::exception& e) {
        entry.failed = true;
        entry.relative_error = std::numeric_limits<double>::quiet_NaN();
        entry.note = e.what();
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

void write_report(const std::filesystem::path& path, const RelativeErrorReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "scheme,potp,relative_error\n" << std::setprecision(17);
  for (const auto& e : report.entries) {
    out << to_string(e.scheme) << ',' << e.potp << ',';
    if (e.failed)
      out << "nan";
    else
      out << e.relative_error;
    out << '\n';
  }
}

ErrorTrace replay_trace(const RunTrace& trace, const EstimationProblem& full_problem,
                        const Vector& theta_hat) {
  const double base = full_problem.objective(theta_hat);
  ErrorTrace errors;
  errors.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    double value = std::numeric_limits<double>::infinity();
    try {
      value = full_problem.objective(rec.theta);
    } catch (const DivergenceError&) {
    }
    if (!std::isfinite(value)) break;
    errors.emplace_back(rec.wall_clock, (value - base) / base);
  }
  return errors;
}

RunTrace thin_trace(const RunTrace& trace, std::size_t max_records) {
  const std::size_t n = trace.records.size();
  if (max_records == 0 || n <= max_records) return trace;
  RunTrace out = trace;
  out.records.clear();
  const std::size_t keep = std::max<std::size_t>(max_records, 2);
  for (std::size_t j = 0; j < keep; ++j) {
    // Evenly spaced indices from 0 to n - 1, computed exactly in integers.
    const std::size_t idx = j * (n - 1) / (keep - 1);
    out.records.push_back(trace.records[idx]);
  }
  return out;
}

Vector race_start(const Experiment& ex) {
  const ExperimentConfig& c = ex.config;
  const int dim = ex.full_problem->dim();
  switch (c.theta0) {
    case Theta0Policy::reference:
      return ex.theta_star;
    case Theta0Policy::explicit_vector: {
      const auto n = static_cast<int>(c.theta0_values.size());
      Vector v = Eigen::Map<const Vector>(c.theta0_values.data(), n);
      if (n == dim) return v;
      if (n == ex.full_problem->system().q()) return ex.full_problem->restrict_to_free(v);
      throw UsageError("race.theta0_values has " + std::to_string(n) + " entries, expected " +
                       std::to_string(dim));
    }
    case Theta0Policy::perturbed: {
      Rng rng(c.perturb_seed);
      Vector v = ex.theta_star;
      for (int i = 0; i < dim; ++i) {
        const double xi = rng.normal();
        v[i] = v[i] != 0.0 ? v[i] * (1.0 + c.perturb_scale * xi) : c.perturb_scale * xi;
      }
      return v;
    }
  }
  return ex.theta_star;
}

const RaceRun& RaceResult::at(const std::string& name) const {
  for (const auto& r : runs)
    if (r.name == name) return r;
  throw std::out_of_range("no race run named " + name);
}

RaceResult run_budget_race(const ExperimentConfig& config, const RaceOptions& options) {
  return run_budget_race(prepare_experiment(config), options);
}

std::string default_run_name(const SolverRequest& req) {
  const std::string solver = req.solver;
  if (solver == "gd" || solver == "gn") {
    const std::string prefix = solver == "gd" ? "GD_" : "GN_";
    return prefix + (req.scheme == ModificationKind::none ? "nomod" : to_string(req.scheme));
  }
  if (solver == "sgd") return "SGD";
  if (solver == "ksgd") return "kSGD";
  throw UsageError("unknown solver '" + solver + "' (gd, gn, sgd, ksgd)");
}

RaceRun run_solver(const Experiment& ex, const SolverRequest& req, const Vector& theta0,
                   const RunLimits& limits) {
  const ExperimentConfig& c = ex.config;
  const EstimationProblem& full = *ex.full_problem;
  const bool stochastic = req.solver == "sgd" || req.solver == "ksgd";
  if (stochastic && req.scheme != ModificationKind::none)
    throw UsageError("stochastic solvers sample the unmodified data; drop the modification");

  RaceRun run;
  run.name = req.name.empty() ? default_run_name(req) : req.name;
  run.scheme = req.scheme;
  run.group = req.solver == "gd" || req.solver == "sgd" ? "first_order" : "second_order";

  std::shared_ptr<const EstimationProblem> problem = ex.full_problem;
  if (req.scheme != ModificationKind::none) {
    ModificationScheme scheme;
    scheme.kind = req.scheme;
    scheme.potp = req.potp;
    scheme.seed = c.scheme_seed;
    problem = std::make_shared<const EstimationProblem>(
        full.system(), apply_modification(full.data(), scheme), ex.z_star, full.options());
    run.hyperparameters["potp"] = fmt(req.potp);
  }
  const std::size_t N = full.size();
  const std::size_t kappa = c.kappa();
  const auto sampler_for = [&](SamplerKind kind) {
    run.hyperparameters["sampler"] = to_string(kind);
    run.hyperparameters["kappa"] = std::to_string(kappa);
    return Sampler(kind, N, kappa, Rng(c.solver_seed).split(name_stream(run.name)));
  };

  if (req.solver == "gd") {
    run.solver = "GD";
    const double per_term = req.scheme == ModificationKind::none ? *c.eta0 : *c.gd_modified_eta0;
    const StepSchedule sched{c.schedule, per_term / static_cast<double>(problem->size()), c.k0,
                             c.alpha};
    run.hyperparameters["eta0"] = fmt(sched.eta0);
    run.hyperparameters["n_terms"] = std::to_string(problem->size());
    run.trace = run_gd(*problem, theta0, sched, limits);
  } else if (req.solver == "sgd") {
    run.solver = "SGD";
    const StepSchedule sched{*c.sgd_schedule, *c.sgd_eta0 / static_cast<double>(N), c.k0,
                             c.alpha};
    run.hyperparameters["eta0"] = fmt(sched.eta0);
    run.hyperparameters["schedule"] =
        sched.kind == ScheduleKind::constant ? "constant" : "polynomial";
    if (sched.kind == ScheduleKind::polynomial) {
      run.hyperparameters["k0"] = fmt(sched.k0);
      run.hyperparameters["alpha"] = fmt(sched.alpha);
    }
    Sampler sampler = sampler_for(req.sampler.value_or(c.sgd_sampler));
    run.trace = run_sgd(full, theta0, sched, sampler, limits);
  } else if (req.solver == "gn") {
    run.solver = "GN";
    run.hyperparameters["lambda"] = fmt(c.lambda);
    run.trace = run_gauss_newton(*problem, theta0, GaussNewtonOptions{c.lambda, c.gn_tol}, limits);
  } else {
    run.solver = "kSGD";
    run.hyperparameters["form"] = to_string(c.form);
    Sampler sampler = sampler_for(req.sampler.value_or(c.ksgd_sampler));
    run.trace = run_ksgd(full, theta0, sampler, c.form, limits);
  }

  run.trace = thin_trace(run.trace, c.max_records);
  run.errors = replay_trace(run.trace, full, ex.theta_hat);
  run.truncated = run.errors.size() < run.trace.records.size();
  return run;
}

std::vector<SolverRequest> race_requests(const ExperimentConfig& c) {
  std::vector<SolverRequest> out;
  for (const char* solver : {"gd", "gn"}) {
    for (ModificationKind kind : c.schemes) {
      if (kind == ModificationKind::none) continue;
      out.push_back({solver, kind, c.race_potp, std::nullopt, ""});
    }
    out.push_back({solver, ModificationKind::none, 1.0, std::nullopt, ""});
    if (std::string(solver) == "gd") {
      out.push_back({"sgd", ModificationKind::none, 1.0, std::nullopt, ""});
    } else {
      out.push_back({"ksgd", ModificationKind::none, 1.0, std::nullopt, ""});
      if (c.ksgd_simple_run && c.ksgd_sampler != SamplerKind::simple)
        out.push_back({"ksgd", ModificationKind::none, 1.0, SamplerKind::simple, "kSGD_simple"});
    }
  }
  return out;
}

RunLimits race_limits(const ExperimentConfig& c, const std::string& solver) {
  RunLimits limits;
  const bool stochastic = solver == "sgd" || solver == "ksgd";
  limits.record_every = stochastic ? c.record_every_stochastic : c.record_every_deterministic;
  limits.budget = c.budget;
  limits.max_iter = c.max_iter;
  return limits;
}

RaceResult run_budget_race(const Experiment& ex, const RaceOptions& options) {
  const ExperimentConfig& c = ex.config;
  RaceResult result;
  result.theta0 = race_start(ex);
  const std::vector<SolverRequest> requests = race_requests(c);

  const auto execute = [&](std::size_t i) {
    const SolverRequest& req = requests[i];
    RunLimits limits = race_limits(c, req.solver);
    const auto cap = options.iteration_caps.find(default_run_name(req));
    const auto named = req.name.empty() ? options.iteration_caps.end()
                                        : options.iteration_caps.find(req.name);
    for (auto it : {cap, named}) {
      if (it != options.iteration_caps.end() && it->second > 0) {
        limits.max_iter = it->second;
        limits.budget = 0.0;
      }
    }
    return run_solver(ex, req, result.theta0, limits);
  };

  result.runs.resize(requests.size());
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, requests.size());
  if (jobs == 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) result.runs[i] = execute(i);
  } else {
    // Runs share only read-only state; each owns its sampler stream.
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next++) < requests.size();) result.runs[i] = execute(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  if (options.write_files) {
    for (const auto& run : result.runs) {
      const auto dir = c.output_dir / c.model / run.group;
      write_error_trace(dir / (run.name + ".csv"), run.errors);
      write_run_metadata(dir / (run.name + ".meta"), c, run);
    }
  }
  return result;
}

void write_error_trace(const std::filesystem::path& path, const ErrorTrace& errors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "time,error\n" << std::setprecision(17);
  for (const auto& [t, e] : errors) out << t << ',' << e << '\n';
}

void write_run_metadata(const std::filesystem::path& path, const ExperimentConfig& c,
                        const RaceRun& run) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "name = " << run.name << '\n'
      << "solver = " << run.solver << '\n'
      << "scheme = " << to_string(run.scheme) << '\n'
      << "model = " << c.model << '\n'
      << "obs_seed = " << c.obs_seed << '\n'
      << "obs_period = " << fmt(c.period()) << '\n'
      << "obs_sigma = " << fmt(c.obs_sigma) << '\n'
      << "h = " << fmt(c.step()) << '\n'
      << "scheme_seed = " << c.scheme_seed << '\n'
      << "solver_seed = " << c.solver_seed << '\n'
      << "mode = " << (c.mode == DerivativeMode::forward ? "forward" : "adjoint") << '\n'
      << "budget = " << fmt(run.trace.budget) << '\n';
  for (const auto& [k, v] : run.hyperparameters) out << k << " = " << v << '\n';
  out << "terminated_by = " << to_string(run.trace.terminated_by) << '\n'
      << "iterations = " << run.trace.iterations << '\n'
      << "records = " << run.trace.records.size() << '\n'
      << "theta_initial = " << join(run.trace.records.front().theta) << '\n'
      << "theta_final = " << join(run.trace.final_record().theta) << '\n';
  if (!run.errors.empty()) out << "final_error = " << fmt(run.final_error()) << '\n';
  if (run.truncated) out << "truncated = true\n";
  if (!run.trace.message.empty()) out << "message = " << run.trace.message << '\n';
}

}  // namespace hfda
