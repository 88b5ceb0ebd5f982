#pragma once

#include "hfda/dynamics.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

namespace hfda {

/// Ralston's minimum-truncation-error fourth-order explicit Runge-Kutta tableau.
struct RalstonTableau {
  static constexpr std::array<double, 4> c = {0.0, 0.4, 0.45573725421878943, 1.0};
  static constexpr double a21 = 0.4;
  static constexpr double a31 = 0.29697760924775360;
  static constexpr double a32 = 0.15875964497103583;
  static constexpr double a41 = 0.21810038822592047;
  static constexpr double a42 = -3.0509651486929308;
  static constexpr double a43 = 3.8328647604670103;
  static constexpr std::array<double, 4> b = {0.17476028226269037, -0.55148066287873294,
                                              1.2055355993965235, 0.17118478121951903};
};

/// Integration nodes covering [t0, t_end] with every observation time on a node.
struct TimeGrid {
  double t0 = 0.0;
  double t_end = 0.0;
  double h = 0.0;                     // preferred (maximum) step
  std::vector<double> nodes;          // strictly increasing, nodes.front() == t0, back() == t_end
  std::vector<std::size_t> obs_node;  // observation index -> node index

  std::size_t steps() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
};

/// Builds the grid by filling every gap between consecutive required times
/// (t0, the observation times, t_end) with the fewest equal sub-steps not
/// longer than h. Observation times within 1e-9 * (t_end - t0) of an existing
/// node snap onto it, so repeated times share one node.
///
/// Observation times must be nondecreasing and inside [t0, t_end].
TimeGrid build_grid(double t0, double t_end, double h, const std::vector<double>& obs_times);

/// Index of the grid node at time t (within the snapping tolerance); throws
/// UsageError if t is not a node.
std::size_t find_node(const TimeGrid& grid, double t);

struct Trajectory {
  TimeGrid grid;
  Matrix states;  // q x nodes, column j is z(nodes[j])

  std::size_t rk_steps() const noexcept { return grid.steps(); }
};

struct SensitivityTrajectory {
  Trajectory base;
  std::vector<std::size_t> nodes;  // requested node indices, in request order
  std::vector<Matrix> sens;        // dz(t)/dz(t0) at each requested node
};

/// One Ralston RK4 step per consecutive node pair. Throws DivergenceError on a
/// non-finite state.
Trajectory integrate(const AugmentedSystem& system, const Vector& z0, const TimeGrid& grid);

/// Called at every node (node 0 included) with the state and the sensitivity
/// matrix Phi(t) = dz(t)/dz(t0).
using SensitivityVisitor = std::function<void(std::size_t node, ConstVectorRef z, ConstMatrixRef phi)>;

/// Jointly integrates z and Phi' = J(t, z) Phi, Phi(t0) = I with the same RK
/// scheme, so Phi is the exact derivative of the discrete flow. Returns the
/// number of RK steps taken.
std::size_t integrate_with_sensitivity(const AugmentedSystem& system, const Vector& z0,
                                       const TimeGrid& grid, const SensitivityVisitor& visit);

SensitivityTrajectory integrate_with_sensitivity(const AugmentedSystem& system, const Vector& z0,
                                                 const TimeGrid& grid,
                                                 const std::vector<std::size_t>& request_nodes);

/// Impulse vectors (length q) keyed by grid node index.
using AdjointImpulses = std::map<std::size_t, Vector>;

/// Integrates the adjoint chi' = -J' chi backwards from chi(t_end) = 0 and
/// returns chi(t0). The impulse at node i is added when the sweep reaches
/// t_i, before it leaves towards t_{i-1}. Each backward step is the exact
/// transpose of the forward RK step; stage states are recomputed from the
/// stored node states.
Vector integrate_adjoint(const AugmentedSystem& system, const Trajectory& traj,
                         const AdjointImpulses& impulses);

/// Same sweep with impulses supplied as a callback `impulse(node, chi)` that
/// adds into chi; used by the gradient code to avoid building a map.
Vector integrate_adjoint(const AugmentedSystem& system, const Trajectory& traj,
                         const std::function<void(std::size_t node, VectorRef chi)>& impulse);

}  // namespace hfda
