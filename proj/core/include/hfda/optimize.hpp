#pragma once

#include "hfda/observe.hpp"
#include "hfda/rng.hpp"
#include "hfda/stochastic.hpp"

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace hfda {

// ---------------------------------------------------------------------------
// Problems seen by the solvers

/// What the solvers need from an estimation problem. `theta` is the vector of
/// free unknowns (dimension dim()).
class Objective {
 public:
  virtual ~Objective() = default;

  virtual int dim() const = 0;
  /// Number of loss terms N.
  virtual std::size_t size() const = 0;
  virtual GradientEvaluation gradient(const Vector& theta) const = 0;
  virtual GradientEvaluation stochastic_gradient(const Vector& theta,
                                                 const SampleSet& sample) const = 0;
  virtual ResidualSystem residuals(const Vector& theta, const SampleSet& sample) const = 0;
  virtual ResidualSystem full_residuals(const Vector& theta) const = 0;
};

struct ProblemOptions {
  double h = 1.0;                      // preferred integration step
  bool estimate_initial_state = true;  // false: x0 stays at the reference value
  LossOptions loss;
  DerivativeMode mode = DerivativeMode::forward;
};

/// ODE-constrained least squares over the augmented initial condition.
class EstimationProblem : public Objective {
 public:
  EstimationProblem(AugmentedSystem system, ObservationSet data, Vector reference_z0,
                    ProblemOptions opts);

  int dim() const override { return static_cast<int>(free_.size()); }
  std::size_t size() const override { return data_.size(); }

  /// Free unknowns -> full augmented initial condition.
  Vector expand(const Vector& theta) const;
  /// Augmented initial condition -> free unknowns.
  Vector restrict_to_free(const Vector& z0) const;

  double objective(const Vector& theta) const;
  GradientEvaluation gradient(const Vector& theta) const override;
  GradientEvaluation stochastic_gradient(const Vector& theta,
                                         const SampleSet& sample) const override;
  ResidualSystem residuals(const Vector& theta, const SampleSet& sample) const override;
  ResidualSystem full_residuals(const Vector& theta) const override;

  const AugmentedSystem& system() const noexcept { return system_; }
  const ObservationSet& data() const noexcept { return data_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const ProblemOptions& options() const noexcept { return opts_; }

 private:
  GradientEvaluation restrict(GradientEvaluation g) const;

  AugmentedSystem system_;
  ObservationSet data_;
  Vector base_;
  ProblemOptions opts_;
  std::vector<int> free_;
  TimeGrid grid_;
  std::vector<LossTerm> terms_;
};

// ---------------------------------------------------------------------------
// Sampling for the stochastic solvers

enum class SamplerKind { systematic, simple, stratified, full, sweep };

std::string to_string(SamplerKind kind);
SamplerKind parse_sampler(const std::string& name);

/// Draws one subset per iteration. `simple` uses m = round(N / kappa);
/// `sweep` cycles deterministically through the kappa systematic offsets with
/// pi = 1 (disjoint batches covering the data once per cycle).
class Sampler {
 public:
  Sampler(SamplerKind kind, std::size_t N, std::size_t kappa, Rng rng);

  SampleSet next();
  SamplerKind kind() const noexcept { return kind_; }
  std::size_t kappa() const noexcept { return kappa_; }

 private:
  SamplerKind kind_;
  std::size_t N_;
  std::size_t kappa_;
  Rng rng_;
  std::size_t sweep_offset_ = 0;
};

// ---------------------------------------------------------------------------
// Step sizes, traces, limits

enum class ScheduleKind { constant, polynomial };

/// eta_k = eta0 (constant) or eta0 / (1 + k/k0)^alpha (polynomial, alpha in
/// (0.5, 1] so that sum eta = inf and sum eta^2 < inf).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double eta0 = 1e-3;
  double k0 = 1.0;
  double alpha = 1.0;

  double eta(std::size_t k) const;
  void validate() const;
};

enum class Termination { budget, max_iter, divergence, converged };
std::string to_string(Termination t);

struct TraceRecord {
  double wall_clock = 0.0;  // solver seconds since the run started
  std::size_t k = 0;
  Vector theta;
  std::optional<double> objective_proxy;  // objective of the (possibly modified) problem
};

struct RunTrace {
  std::vector<TraceRecord> records;
  double budget = 0.0;
  Termination terminated_by = Termination::max_iter;
  std::size_t iterations = 0;
  std::string message;  // divergence/solver diagnostics

  const TraceRecord& final_record() const { return records.back(); }
};

struct RunLimits {
  double budget = 0.0;        // seconds of solver work; 0 disables
  std::size_t max_iter = 0;   // 0 disables
  std::size_t record_every = 1;

  void validate() const;
};

/// Accumulates solver time only; stopped while traces are written.
class Stopwatch {
 public:
  void start();
  void stop();
  double seconds() const;

 private:
  using Clock = std::chrono::steady_clock;
  Clock::duration total_{};
  Clock::time_point started_{};
  bool running_ = false;
};

// ---------------------------------------------------------------------------
// Solvers

/// theta <- theta - eta_k grad G(theta).
RunTrace run_gd(const Objective& problem, const Vector& theta0, const StepSchedule& schedule,
                const RunLimits& limits);

/// theta <- theta - eta_k grad g_S(theta), with a fresh sample each iteration.
RunTrace run_sgd(const Objective& problem, const Vector& theta0, const StepSchedule& schedule,
                 Sampler& sampler, const RunLimits& limits);

struct GaussNewtonOptions {
  /// Levenberg-style damping lambda; negative selects 1e-8 trace(D'W^{-1}D)/q.
  double damping = -1.0;
  /// Stop once ||step|| <= tol (1 + ||theta||); 0 disables.
  double tol = 0.0;
  /// Levenberg-Marquardt control: steps that raise the objective are rejected
  /// and retried with larger damping; accepted steps shrink it again.
  bool adaptive = false;
};

/// Solves (D'W^{-1}D + lambda I) step = D'W^{-1} r. Throws SolverError when
/// the matrix is not numerically positive definite.
Vector gauss_newton_step(const ResidualSystem& rs, double damping);
/// The damping actually used for a requested value (see GaussNewtonOptions).
double effective_damping(const Matrix& normal_matrix, double requested);

RunTrace run_gauss_newton(const Objective& problem, const Vector& theta0,
                          const GaussNewtonOptions& opts, const RunLimits& limits);

enum class KsgdForm { automatic, information, covariance };
std::string to_string(KsgdForm f);
KsgdForm parse_ksgd_form(const std::string& name);

/// Iterate with both the precision C^{-1} and the covariance C.
struct KsgdState {
  Vector theta;
  Matrix C_inv;
  Matrix C;
  std::size_t k = 0;

  static KsgdState initial(const Vector& theta0);
};

/// One Kalman-based update from residuals built at state.theta:
///   information: theta += (D'W^{-1}D + C^{-1})^{-1} D'W^{-1} r
///   covariance:  theta += C D' (W + D C D')^{-1} r
/// followed by C^{-1} += D'W^{-1}D (and the Woodbury image for C).
/// `automatic` picks information when q <= rows(r).
KsgdState ksgd_step(const KsgdState& state, const ResidualSystem& rs, KsgdForm form);

RunTrace run_ksgd(const Objective& problem, const Vector& theta0, Sampler& sampler,
                  KsgdForm form, const RunLimits& limits);

}  // namespace hfda
