#pragma once

#include "hfda/observe.hpp"
#include "hfda/rng.hpp"

#include <cstddef>
#include <vector>

namespace hfda {

/// Sorted, distinct observation indices (0-based) with inclusion probabilities.
struct SampleSet {
  std::vector<std::size_t> indices;
  std::vector<double> pi;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
  void validate(std::size_t N) const;
};

/// Every index, pi = 1.
SampleSet full_sample(std::size_t N);

/// Indices {offset, offset + kappa, ...} below N with pi = 1/kappa; offset in [0, kappa).
SampleSet systematic_sample(std::size_t N, std::size_t kappa, std::size_t offset);

/// Systematic draw: offset uniform on the first kappa observations, then every
/// kappa-th one. Throws UsageError unless 1 <= kappa <= N.
SampleSet draw_systematic(std::size_t N, std::size_t kappa, Rng& rng);

/// Uniform sample of m indices without replacement, sorted; pi = m/N.
SampleSet draw_simple(std::size_t N, std::size_t m, Rng& rng);

/// One index uniformly from each consecutive window of kappa observations;
/// pi = 1/|window| (the trailing window may be shorter).
SampleSet draw_stratified(std::size_t N, std::size_t kappa, Rng& rng);

/// Grid aligned to the sampled times only; obs_node[k] is the node of
/// observation sample.indices[k].
TimeGrid sample_grid(const AugmentedSystem& system, const ObservationSet& data,
                     const SampleSet& sample, double h);

/// Loss terms of the sampled observations with multipliers 1/pi (times the
/// weight when reweighting). `grid` is either sample_grid(...) for this sample
/// or a grid aligned with the whole data set.
std::vector<LossTerm> sample_terms(const ObservationSet& data, const SampleSet& sample,
                                   const TimeGrid& grid, const LossOptions& opts = {});

/// Inverse-probability weighted gradient
///   sum_{s in S} (1/pi_s) x_theta(t_s)' loss_x(y_s, x(t_s)),
/// an unbiased estimate of the full gradient on the same grid. `grid` as in
/// sample_terms; the coarse sample_grid is what makes the estimate cheap.
GradientEvaluation stochastic_gradient(const AugmentedSystem& system, const Vector& z0,
                                       const ObservationSet& data, const SampleSet& sample,
                                       const TimeGrid& grid,
                                       DerivativeMode mode = DerivativeMode::forward,
                                       const LossOptions& opts = {});

/// Stacked residuals r = (y_s - H x(t_s)), Jacobian D = (H x_theta(t_s)) and
/// block-diagonal weights W^{-1} = diag(scale_s V^{-1}) over the sampled
/// observations in increasing index order.
struct ResidualSystem {
  int n = 0;              // observation dimension (rows per block)
  Vector r;               // n |S|
  Matrix D;               // n |S| x q
  std::vector<double> block_scale;  // scale_s = weight_s / pi_s
  Matrix V;               // n x n
  Matrix V_inv;           // n x n

  std::size_t blocks() const noexcept { return block_scale.size(); }
  /// D' W^{-1} D
  Matrix normal_matrix() const;
  /// D' W^{-1} r
  Vector normal_rhs() const;
  Matrix W_inv_dense() const;
  Matrix W_dense() const;
  /// Restricts the columns of D to `columns`.
  ResidualSystem select_columns(const std::vector<int>& columns) const;
};

ResidualSystem residual_system(const AugmentedSystem& system, const Vector& z0,
                               const ObservationSet& data, const SampleSet& sample,
                               const TimeGrid& grid, const LossOptions& opts = {});

}  // namespace hfda
