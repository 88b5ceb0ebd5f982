#include "hfda/optimize.hpp"

#include "hfda/errors.hpp"
#include "hfda/modify.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace hfda {

// ---------------------------------------------------------------------------
// EstimationProblem

EstimationProblem::EstimationProblem(AugmentedSystem system, ObservationSet data,
                                     Vector reference_z0, ProblemOptions opts)
    : system_(std::move(system)),
      data_(std::move(data)),
      base_(std::move(reference_z0)),
      opts_(opts) {
  data_.validate();
  if (data_.size() == 0) throw UsageError("estimation problem without observations");
  if (base_.size() != system_.q()) throw UsageError("reference initial condition has wrong size");
  if (data_.model.d() != system_.d()) throw UsageError("observation operator does not match model");
  const int first = opts_.estimate_initial_state ? 0 : system_.d();
  for (int i = first; i < system_.q(); ++i) free_.push_back(i);
  grid_ = grid_for(system_, data_, opts_.h);
  terms_ = full_terms(data_, grid_, opts_.loss);
}

Vector EstimationProblem::expand(const Vector& theta) const {
  if (theta.size() != dim()) throw UsageError("parameter vector has wrong size");
  Vector z = base_;
  for (std::size_t j = 0; j < free_.size(); ++j) z[free_[j]] = theta[static_cast<Eigen::Index>(j)];
  return z;
}

Vector EstimationProblem::restrict_to_free(const Vector& z0) const {
  if (z0.size() != system_.q()) throw UsageError("initial condition has wrong size");
  Vector theta(dim());
  for (std::size_t j = 0; j < free_.size(); ++j) theta[static_cast<Eigen::Index>(j)] = z0[free_[j]];
  return theta;
}

GradientEvaluation EstimationProblem::restrict(GradientEvaluation g) const {
  if (dim() != system_.q()) g.grad = restrict_to_free(g.grad);
  return g;
}

double EstimationProblem::objective(const Vector& theta) const {
  return hfda::objective(system_, expand(theta), data_, grid_, opts_.loss);
}

GradientEvaluation EstimationProblem::gradient(const Vector& theta) const {
  return restrict(assemble_gradient(system_, expand(theta), data_, grid_, terms_, opts_.mode));
}

GradientEvaluation EstimationProblem::stochastic_gradient(const Vector& theta,
                                                          const SampleSet& sample) const {
  const TimeGrid grid = sample_grid(system_, data_, sample, opts_.h);
  return restrict(
      hfda::stochastic_gradient(system_, expand(theta), data_, sample, grid, opts_.mode, opts_.loss));
}

ResidualSystem EstimationProblem::residuals(const Vector& theta, const SampleSet& sample) const {
  const TimeGrid grid = sample_grid(system_, data_, sample, opts_.h);
  auto rs = residual_system(system_, expand(theta), data_, sample, grid, opts_.loss);
  return dim() == system_.q() ? rs : rs.select_columns(free_);
}

ResidualSystem EstimationProblem::full_residuals(const Vector& theta) const {
  auto rs = residual_system(system_, expand(theta), data_, full_sample(data_.size()), grid_,
                            opts_.loss);
  return dim() == system_.q() ? rs : rs.select_columns(free_);
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

const std::map<SamplerKind, std::string>& sampler_names() {
  static const std::map<SamplerKind, std::string> t{
      {SamplerKind::systematic, "systematic"}, {SamplerKind::simple, "simple"},
      {SamplerKind::stratified, "stratified"}, {SamplerKind::full, "full"},
      {SamplerKind::sweep, "sweep"}};
  return t;
}

}  // namespace

std::string to_string(SamplerKind kind) { return sampler_names().at(kind); }

SamplerKind parse_sampler(const std::string& name) {
  for (const auto& [k, v] : sampler_names()) {
    if (v == name) return k;
  }
  throw UsageError("unknown sampler '" + name + "'");
}

Sampler::Sampler(SamplerKind kind, std::size_t N, std::size_t kappa, Rng rng)
    : kind_(kind), N_(N), kappa_(kappa), rng_(std::move(rng)) {
  if (N_ == 0) throw UsageError("sampler over an empty data set");
  if (kappa_ < 1 || kappa_ > N_) throw UsageError("sampler needs 1 <= kappa <= N");
}

SampleSet Sampler::next() {
  switch (kind_) {
    case SamplerKind::systematic:
      return draw_systematic(N_, kappa_, rng_);
    case SamplerKind::simple:
      return draw_simple(N_, std::max<std::size_t>(1, round_count(static_cast<double>(N_) /
                                                                       static_cast<double>(kappa_))),
                         rng_);
    case SamplerKind::stratified:
      return draw_stratified(N_, kappa_, rng_);
    case SamplerKind::full:
      return full_sample(N_);
    case SamplerKind::sweep: {
      SampleSet s = systematic_sample(N_, kappa_, sweep_offset_);
      s.pi.assign(s.size(), 1.0);
      sweep_offset_ = (sweep_offset_ + 1) % kappa_;
      return s;
    }
  }
  throw UsageError("unhandled sampler");
}

// ---------------------------------------------------------------------------
// Schedules, limits, stopwatch

double StepSchedule::eta(std::size_t k) const {
  if (kind == ScheduleKind::constant) return eta0;
  return eta0 / std::pow(1.0 + static_cast<double>(k) / k0, alpha);
}

void StepSchedule::validate() const {
  if (!(eta0 > 0.0)) throw UsageError("step size eta0 must be positive");
  if (kind == ScheduleKind::polynomial) {
    if (!(k0 > 0.0)) throw UsageError("schedule k0 must be positive");
    if (!(alpha > 0.5 && alpha <= 1.0)) throw UsageError("schedule alpha must lie in (0.5, 1]");
  }
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::budget: return "budget";
    case Termination::max_iter: return "max_iter";
    case Termination::divergence: return "divergence";
    case Termination::converged: return "converged";
  }
  return "unknown";
}

void RunLimits::validate() const {
  if (!(budget > 0.0) && max_iter == 0) throw UsageError("need a time budget or an iteration cap");
  if (budget < 0.0) throw UsageError("budget must be nonnegative");
  if (record_every == 0) throw UsageError("record cadence must be positive");
}

void Stopwatch::start() {
  if (running_) return;
  started_ = Clock::now();
  running_ = true;
}

void Stopwatch::stop() {
  if (!running_) return;
  total_ += Clock::now() - started_;
  running_ = false;
}

double Stopwatch::seconds() const {
  auto total = total_;
  if (running_) total += Clock::now() - started_;
  return std::chrono::duration<double>(total).count();
}

// ---------------------------------------------------------------------------
// Solver loop

namespace {

struct StepResult {
  Vector next;
  std::optional<double> value;  // objective proxy at the iterate the step started from
  bool converged = false;
};

template <class Step>
RunTrace run_loop(const Vector& theta0, const RunLimits& limits, Step&& step) {
  limits.validate();
  RunTrace trace;
  trace.budget = limits.budget;

  Vector theta = theta0;
  trace.records.push_back({0.0, 0, theta, std::nullopt});
  if (!theta.allFinite()) {
    trace.terminated_by = Termination::divergence;
    trace.message = "non-finite initial iterate";
    return trace;
  }

  Stopwatch clock;
  clock.start();
  std::size_t k = 0;
  for (;;) {
    if (limits.max_iter > 0 && k >= limits.max_iter) {
      trace.terminated_by = Termination::max_iter;
      break;
    }
    if (limits.budget > 0.0 && clock.seconds() >= limits.budget) {
      trace.terminated_by = Termination::budget;
      break;
    }
    StepResult r;
    try {
      r = step(theta, k);
    } catch (const DivergenceError& e) {
      trace.terminated_by = Termination::divergence;
      trace.message = e.what();
      break;
    } catch (const SolverError& e) {
      trace.terminated_by = Termination::divergence;
      trace.message = e.what();
      break;
    }
    if (r.value && trace.records.back().k == k) trace.records.back().objective_proxy = r.value;
    if (!r.next.allFinite()) {
      trace.terminated_by = Termination::divergence;
      trace.message = "non-finite iterate at iteration " + std::to_string(k + 1);
      break;
    }
    theta = std::move(r.next);
    ++k;
    if (k % limits.record_every == 0 || r.converged) {
      clock.stop();
      trace.records.push_back({clock.seconds(), k, theta, std::nullopt});
      clock.start();
    }
    if (r.converged) {
      trace.terminated_by = Termination::converged;
      break;
    }
  }
  clock.stop();
  if (trace.records.back().k != k) trace.records.push_back({clock.seconds(), k, theta, std::nullopt});
  trace.iterations = k;
  return trace;
}

double residual_objective(const ResidualSystem& rs) {
  double value = 0.0;
  for (std::size_t s = 0; s < rs.blocks(); ++s) {
    const auto seg = rs.r.segment(static_cast<Eigen::Index>(s) * rs.n, rs.n);
    value += 0.5 * rs.block_scale[s] * seg.dot(rs.V_inv * seg);
  }
  return value;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

RunTrace run_gd(const Objective& problem, const Vector& theta0, const StepSchedule& schedule,
                const RunLimits& limits) {
  schedule.validate();
  return run_loop(theta0, limits, [&](const Vector& theta, std::size_t k) {
    const auto g = problem.gradient(theta);
    return StepResult{theta - schedule.eta(k) * g.grad, g.value, false};
  });
}

RunTrace run_sgd(const Objective& problem, const Vector& theta0, const StepSchedule& schedule,
                 Sampler& sampler, const RunLimits& limits) {
  schedule.validate();
  return run_loop(theta0, limits, [&](const Vector& theta, std::size_t k) {
    const auto g = problem.stochastic_gradient(theta, sampler.next());
    return StepResult{theta - schedule.eta(k) * g.grad, g.value, false};
  });
}

double effective_damping(const Matrix& normal_matrix, double requested) {
  if (requested >= 0.0) return requested;
  return 1e-8 * normal_matrix.trace() / static_cast<double>(normal_matrix.rows());
}

Vector gauss_newton_step(const ResidualSystem& rs, double damping) {
  const Matrix A = rs.normal_matrix();
  const Vector b = rs.normal_rhs();
  const double lambda = effective_damping(A, damping);
  const Matrix M = A + lambda * Matrix::Identity(A.rows(), A.cols());
  Eigen::LLT<Matrix> llt(M);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || rcond < 1e-15) {
    throw SolverError("Gauss-Newton normal matrix is singular; use damping > 0",
                      rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  return llt.solve(b);
}

namespace {

RunTrace run_levenberg_marquardt(const Objective& problem, const Vector& theta0,
                                 const GaussNewtonOptions& opts, const RunLimits& limits) {
  std::optional<ResidualSystem> current;
  double lambda = -1.0;
  return run_loop(theta0, limits, [&](const Vector& theta, std::size_t) {
    if (!current) current = problem.full_residuals(theta);
    const double value = residual_objective(*current);
    const Matrix A = current->normal_matrix();
    const double scale = std::max(A.trace() / static_cast<double>(A.rows()), 1e-300);
    if (lambda < 0.0) lambda = effective_damping(A, opts.damping);
    lambda = std::max(lambda, 1e-12 * scale);
    for (;;) {
      const Vector step = gauss_newton_step(*current, lambda);
      Vector next = theta + step;
      std::optional<ResidualSystem> trial;
      try {
        trial = problem.full_residuals(next);
      } catch (const DivergenceError&) {
      }
      if (trial && residual_objective(*trial) <= value) {
        current = std::move(trial);
        lambda /= 3.0;
        const bool converged = opts.tol > 0.0 && step.norm() <= opts.tol * (1.0 + next.norm());
        return StepResult{std::move(next), value, converged};
      }
      lambda *= 4.0;
      // No decrease even along a vanishing gradient step: stationary.
      if (lambda > 1e16 * scale) return StepResult{theta, value, true};
    }
  });
}

}  // namespace

RunTrace run_gauss_newton(const Objective& problem, const Vector& theta0,
                          const GaussNewtonOptions& opts, const RunLimits& limits) {
  if (opts.adaptive) return run_levenberg_marquardt(problem, theta0, opts, limits);
  return run_loop(theta0, limits, [&](const Vector& theta, std::size_t) {
    const auto rs = problem.full_residuals(theta);
    const Vector step = gauss_newton_step(rs, opts.damping);
    Vector next = theta + step;
    const bool converged = opts.tol > 0.0 && step.norm() <= opts.tol * (1.0 + next.norm());
    return StepResult{std::move(next), residual_objective(rs), converged};
  });
}

namespace {

const std::map<KsgdForm, std::string>& form_names() {
  static const std::map<KsgdForm, std::string> t{{KsgdForm::automatic, "auto"},
                                                 {KsgdForm::information, "information"},
                                                 {KsgdForm::covariance, "covariance"}};
  return t;
}

[[noreturn]] void solve_failed(const char* what, const Eigen::LLT<Matrix>& llt) {
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  throw SolverError(what, rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
}

}  // namespace

std::string to_string(KsgdForm f) { return form_names().at(f); }

KsgdForm parse_ksgd_form(const std::string& name) {
  for (const auto& [k, v] : form_names()) {
    if (v == name) return k;
  }
  throw UsageError("unknown kSGD form '" + name + "'");
}

KsgdState KsgdState::initial(const Vector& theta0) {
  const auto q = theta0.size();
  return {theta0, Matrix::Identity(q, q), Matrix::Identity(q, q), 0};
}

KsgdState ksgd_step(const KsgdState& state, const ResidualSystem& rs, KsgdForm form) {
  const auto q = state.theta.size();
  if (rs.D.cols() != q) throw UsageError("residual Jacobian does not match the iterate");
  if (form == KsgdForm::automatic) {
    form = q <= rs.r.size() ? KsgdForm::information : KsgdForm::covariance;
  }

  const Matrix A = rs.normal_matrix();
  KsgdState next;
  next.k = state.k + 1;
  next.C_inv = symmetrize(A + state.C_inv);

  if (form == KsgdForm::information) {
    Eigen::LLT<Matrix> llt(next.C_inv);
    if (llt.info() != Eigen::Success) solve_failed("kSGD precision matrix not positive definite", llt);
    next.theta = state.theta + llt.solve(rs.normal_rhs());
    next.C = symmetrize(llt.solve(Matrix::Identity(q, q)));
    return next;
  }

  const Matrix DC = rs.D * state.C;
  const Matrix S = symmetrize(rs.W_dense() + DC * rs.D.transpose());
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) solve_failed("kSGD innovation matrix not positive definite", llt);
  next.theta = state.theta + DC.transpose() * llt.solve(rs.r);
  next.C = symmetrize(state.C - DC.transpose() * llt.solve(DC));
  return next;
}

RunTrace run_ksgd(const Objective& problem, const Vector& theta0, Sampler& sampler, KsgdForm form,
                  const RunLimits& limits) {
  KsgdState state = KsgdState::initial(theta0);
  return run_loop(theta0, limits, [&](const Vector& theta, std::size_t) {
    state.theta = theta;
    const auto rs = problem.residuals(theta, sampler.next());
    state = ksgd_step(state, rs, form);
    return StepResult{state.theta, residual_objective(rs), false};
  });
}

}  // namespace hfda
