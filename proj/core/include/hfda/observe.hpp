#pragma once

#include "hfda/dynamics.hpp"
#include "hfda/integrate.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hfda {

/// Gaussian observation with affine mean: y ~ N(H x, V).
class ObservationModel {
 public:
  ObservationModel() = default;
  /// Throws UsageError if V is not symmetric positive definite, the shapes
  /// disagree, or H has an all-zero row.
  ObservationModel(Matrix H, Matrix V);

  /// H = I_d, V = sigma^2 I_d.
  static ObservationModel identity(int d, double sigma);

  int n() const noexcept { return static_cast<int>(H_.rows()); }
  int d() const noexcept { return static_cast<int>(H_.cols()); }
  const Matrix& H() const noexcept { return H_; }
  const Matrix& V() const noexcept { return V_; }
  const Matrix& V_inv() const noexcept { return V_inv_; }
  /// Lower Cholesky factor of V.
  const Matrix& V_chol() const noexcept { return V_chol_; }

 private:
  Matrix H_;
  Matrix V_;
  Matrix V_inv_;
  Matrix V_chol_;
};

/// 1/2 (y - Hx)' V^{-1} (y - Hx).
double loss(const ObservationModel& obs, ConstVectorRef y, ConstVectorRef x);
/// -H' V^{-1} (y - Hx), the derivative of `loss` in x.
Vector loss_grad(const ObservationModel& obs, ConstVectorRef y, ConstVectorRef x);

/// Timestamped observations y_i at t_i.
///
/// Times are nondecreasing; accumulation schemes produce repeated times, which
/// the loss simply sums over. `weights` holds per-observation counts (1 for raw
/// data, the group size for averaged superobservations).
struct ObservationSet {
  std::vector<double> times;
  Matrix values;  // n x N, column i is y_i
  std::vector<double> weights;
  ObservationModel model;

  std::size_t size() const noexcept { return times.size(); }
  auto y(std::size_t i) const { return values.col(static_cast<Eigen::Index>(i)); }
  /// Number of distinct observation times.
  std::size_t distinct_times() const;

  void validate() const;
};

struct SimulationOptions {
  double period = 0.01;     // observations at t0 + k * period, k = 1, 2, ...
  std::uint64_t seed = 0;
  bool noiseless = false;   // y_i = H x(t_i) exactly
};

/// Integrates the truth at observation resolution from z_star = (x0, theta*)
/// and draws y_i = H x(t_i) + eps_i, eps_i ~ N(0, V) from the seeded stream.
ObservationSet simulate_observations(const AugmentedSystem& system, const Vector& z_star,
                                     const ObservationModel& obs, const SimulationOptions& opts);

enum class DerivativeMode { forward, adjoint };

struct LossOptions {
  /// Multiply each loss term by its observation weight. Off by default:
  /// averaged superobservations then count as single ordinary observations.
  bool reweight = false;
};

struct GradientEvaluation {
  double value = 0.0;
  Vector grad;
  std::size_t n_terms = 0;
  std::size_t rk_steps = 0;
};

/// A loss term: observation index in the data set, multiplier, and the grid
/// node carrying its time.
struct LossTerm {
  std::size_t obs;
  double scale;
  std::size_t node;
};

/// sum_i scale_i * loss(y_i, x(t_i)) and its gradient in z0, with terms
/// sorted by node. Shared by full and stochastic gradients.
GradientEvaluation assemble_gradient(const AugmentedSystem& system, const Vector& z0,
                                     const ObservationSet& data, const TimeGrid& grid,
                                     std::span<const LossTerm> terms, DerivativeMode mode);

/// Terms for every observation (multiplier 1 or the weight when reweighting).
std::vector<LossTerm> full_terms(const ObservationSet& data, const TimeGrid& grid,
                                 const LossOptions& opts = {});

/// G(z0) = sum_i loss(y_i, x(t_i; z0)).
double objective(const AugmentedSystem& system, const Vector& z0, const ObservationSet& data,
                 const TimeGrid& grid, const LossOptions& opts = {});

GradientEvaluation gradient(const AugmentedSystem& system, const Vector& z0,
                            const ObservationSet& data, const TimeGrid& grid,
                            DerivativeMode mode = DerivativeMode::forward,
                            const LossOptions& opts = {});

/// Grid with the preferred step h over the model's interval, aligned to the data.
TimeGrid grid_for(const AugmentedSystem& system, const ObservationSet& data, double h);

struct ObservationMetadata {
  std::string model;
  std::uint64_t seed = 0;
  double period = 0.0;
};

/// CSV with header `t,y1,...,yn,weight`; H, V and the metadata go to
/// `<path>.meta` as `key = value` lines.
void write_observations(const std::filesystem::path& path, const ObservationSet& data,
                        const ObservationMetadata& meta);
ObservationSet read_observations(const std::filesystem::path& path,
                                 ObservationMetadata* meta = nullptr);

}  // namespace hfda
