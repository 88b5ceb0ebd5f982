#include "hfda/integrate.hpp"

#include "hfda/errors.hpp"

#include <algorithm>
#include <cmath>

namespace hfda {

namespace {

using T = RalstonTableau;

void fill_gap(std::vector<double>& nodes, double to, double h) {
  const double from = nodes.back();
  const double gap = to - from;
  const auto count = std::max<long>(1, static_cast<long>(std::ceil(gap / h - 1e-9)));
  for (long k = 1; k < count; ++k) nodes.push_back(from + gap * static_cast<double>(k) / count);
  nodes.push_back(to);
}

void require_finite(ConstVectorRef z, std::size_t node, double t) {
  if (!z.allFinite()) throw DivergenceError(node, t);
}

// Stage buffers for one explicit RK step of the augmented system.
struct Stages {
  explicit Stages(int q) : y(q), k(q, 4) {}
  Vector y;
  Matrix k;  // column i holds K_{i+1}
};

void rk_step(const AugmentedSystem& sys, double t, double h, ConstVectorRef z, Stages& s,
             VectorRef out) {
  const auto& c = T::c;
  sys.rhs(t, z, s.k.col(0));
  s.y = z + h * T::a21 * s.k.col(0);
  sys.rhs(t + c[1] * h, s.y, s.k.col(1));
  s.y = z + h * (T::a31 * s.k.col(0) + T::a32 * s.k.col(1));
  sys.rhs(t + c[2] * h, s.y, s.k.col(2));
  s.y = z + h * (T::a41 * s.k.col(0) + T::a42 * s.k.col(1) + T::a43 * s.k.col(2));
  sys.rhs(t + c[3] * h, s.y, s.k.col(3));
  out = z + h * (T::b[0] * s.k.col(0) + T::b[1] * s.k.col(1) + T::b[2] * s.k.col(2) +
                 T::b[3] * s.k.col(3));
}

}  // namespace

TimeGrid build_grid(double t0, double t_end, double h, const std::vector<double>& obs_times) {
  if (!(h > 0.0) || !std::isfinite(h)) throw UsageError("integration step must be positive");
  if (!(t_end > t0)) throw UsageError("empty integration interval");
  const double tol = 1e-9 * (t_end - t0);

  TimeGrid grid;
  grid.t0 = t0;
  grid.t_end = t_end;
  grid.h = h;
  grid.nodes.reserve(static_cast<std::size_t>((t_end - t0) / h) + obs_times.size() + 2);
  grid.nodes.push_back(t0);
  grid.obs_node.reserve(obs_times.size());

  for (double t : obs_times) {
    if (!(t >= t0 - tol && t <= t_end + tol)) {
      throw UsageError("observation time " + std::to_string(t) + " outside [" +
                       std::to_string(t0) + ", " + std::to_string(t_end) + "]");
    }
    const double last = grid.nodes.back();
    if (std::abs(t - last) <= tol) {
      grid.obs_node.push_back(grid.nodes.size() - 1);
      continue;
    }
    if (t < last) throw UsageError("observation times must be nondecreasing");
    fill_gap(grid.nodes, std::min(t, t_end), h);
    grid.obs_node.push_back(grid.nodes.size() - 1);
  }
  if (t_end - grid.nodes.back() > tol) {
    fill_gap(grid.nodes, t_end, h);
  } else if (grid.nodes.size() > 1) {
    grid.nodes.back() = t_end;
  }
  return grid;
}

std::size_t find_node(const TimeGrid& grid, double t) {
  const double tol = 1e-9 * (grid.t_end - grid.t0);
  auto it = std::lower_bound(grid.nodes.begin(), grid.nodes.end(), t - tol);
  if (it == grid.nodes.end() || std::abs(*it - t) > tol) {
    throw UsageError("time " + std::to_string(t) + " is not a grid node");
  }
  return static_cast<std::size_t>(it - grid.nodes.begin());
}

Trajectory integrate(const AugmentedSystem& system, const Vector& z0, const TimeGrid& grid) {
  const int q = system.q();
  if (z0.size() != q) throw UsageError("initial condition has wrong size");
  require_finite(z0, 0, grid.t0);

  Trajectory traj{grid, Matrix(q, static_cast<Eigen::Index>(grid.nodes.size()))};
  traj.states.col(0) = z0;
  Stages stages(q);
  for (std::size_t n = 0; n + 1 < grid.nodes.size(); ++n) {
    const double t = grid.nodes[n];
    const double h = grid.nodes[n + 1] - t;
    const auto j = static_cast<Eigen::Index>(n);
    rk_step(system, t, h, traj.states.col(j), stages, traj.states.col(j + 1));
    require_finite(traj.states.col(j + 1), n + 1, grid.nodes[n + 1]);
  }
  return traj;
}

std::size_t integrate_with_sensitivity(const AugmentedSystem& system, const Vector& z0,
                                       const TimeGrid& grid, const SensitivityVisitor& visit) {
  const int q = system.q();
  const int d = system.d();
  if (z0.size() != q) throw UsageError("initial condition has wrong size");
  require_finite(z0, 0, grid.t0);

  Vector z = z0;
  Matrix phi = Matrix::Identity(q, q);
  visit(0, z, phi);

  // Stage states and slopes; the lower p rows of every Phi slope vanish.
  Vector yz(q);
  Matrix kz(q, 4);
  Matrix yphi(q, q);
  std::array<Matrix, 4> kphi;
  for (auto& m : kphi) m = Matrix::Zero(q, q);
  Matrix jac(q, q);

  const auto stage = [&](double t, int i) {
    system.rhs(t, yz, kz.col(i));
    system.jacobian(t, yz, jac);
    kphi[i].topRows(d).noalias() = jac.topRows(d) * yphi;
  };

  for (std::size_t n = 0; n + 1 < grid.nodes.size(); ++n) {
    const double t = grid.nodes[n];
    const double h = grid.nodes[n + 1] - t;
    const auto& c = T::c;

    yz = z;
    yphi = phi;
    stage(t, 0);

    yz = z + h * T::a21 * kz.col(0);
    yphi = phi + (h * T::a21) * kphi[0];
    stage(t + c[1] * h, 1);

    yz = z + h * (T::a31 * kz.col(0) + T::a32 * kz.col(1));
    yphi = phi + h * (T::a31 * kphi[0] + T::a32 * kphi[1]);
    stage(t + c[2] * h, 2);

    yz = z + h * (T::a41 * kz.col(0) + T::a42 * kz.col(1) + T::a43 * kz.col(2));
    yphi = phi + h * (T::a41 * kphi[0] + T::a42 * kphi[1] + T::a43 * kphi[2]);
    stage(t + c[3] * h, 3);

    z += h * (T::b[0] * kz.col(0) + T::b[1] * kz.col(1) + T::b[2] * kz.col(2) +
              T::b[3] * kz.col(3));
    phi += h * (T::b[0] * kphi[0] + T::b[1] * kphi[1] + T::b[2] * kphi[2] + T::b[3] * kphi[3]);

    require_finite(z, n + 1, grid.nodes[n + 1]);
    if (!phi.allFinite()) throw DivergenceError(n + 1, grid.nodes[n + 1]);
    visit(n + 1, z, phi);
  }
  return grid.steps();
}

SensitivityTrajectory integrate_with_sensitivity(const AugmentedSystem& system, const Vector& z0,
                                                 const TimeGrid& grid,
                                                 const std::vector<std::size_t>& request_nodes) {
  for (auto node : request_nodes) {
    if (node >= grid.nodes.size()) throw UsageError("requested node outside the grid");
  }
  const int q = system.q();
  SensitivityTrajectory out;
  out.base = Trajectory{grid, Matrix(q, static_cast<Eigen::Index>(grid.nodes.size()))};
  out.nodes = request_nodes;
  out.sens.assign(request_nodes.size(), Matrix());

  // Requests may repeat or come unordered; bucket them by node.
  std::vector<std::vector<std::size_t>> wanted(grid.nodes.size());
  for (std::size_t i = 0; i < request_nodes.size(); ++i) wanted[request_nodes[i]].push_back(i);

  integrate_with_sensitivity(system, z0, grid,
                             [&](std::size_t node, ConstVectorRef z, ConstMatrixRef phi) {
                               out.base.states.col(static_cast<Eigen::Index>(node)) = z;
                               for (auto slot : wanted[node]) out.sens[slot] = phi;
                             });
  return out;
}

Vector integrate_adjoint(const AugmentedSystem& system, const Trajectory& traj,
                         const std::function<void(std::size_t node, VectorRef chi)>& impulse) {
  const int q = system.q();
  const auto& nodes = traj.grid.nodes;
  if (traj.states.rows() != q || traj.states.cols() != static_cast<Eigen::Index>(nodes.size())) {
    throw UsageError("trajectory does not match the system/grid");
  }

  Vector chi = Vector::Zero(q);
  const std::size_t last = nodes.size() - 1;
  impulse(last, chi);

  Stages s(q);
  Matrix ystate(q, 4);  // stage states Y_1..Y_4
  std::array<Matrix, 4> jac;
  for (auto& m : jac) m.resize(q, q);
  Matrix kbar(q, 4);
  Vector ybar(q);

  for (std::size_t n = last; n-- > 0;) {
    const double t = nodes[n];
    const double h = nodes[n + 1] - t;
    const auto& c = T::c;
    const auto z = traj.states.col(static_cast<Eigen::Index>(n));

    // Re-run the forward stages of this step.
    ystate.col(0) = z;
    system.rhs(t, ystate.col(0), s.k.col(0));
    ystate.col(1) = z + h * T::a21 * s.k.col(0);
    system.rhs(t + c[1] * h, ystate.col(1), s.k.col(1));
    ystate.col(2) = z + h * (T::a31 * s.k.col(0) + T::a32 * s.k.col(1));
    system.rhs(t + c[2] * h, ystate.col(2), s.k.col(2));
    ystate.col(3) = z + h * (T::a41 * s.k.col(0) + T::a42 * s.k.col(1) + T::a43 * s.k.col(2));
    for (int i = 0; i < 4; ++i) system.jacobian(t + c[i] * h, ystate.col(i), jac[i]);

    // Reverse sweep through the stages: transpose of the step's linearization.
    for (int i = 0; i < 4; ++i) kbar.col(i) = (h * T::b[i]) * chi;
    Vector zbar = chi;

    ybar.noalias() = jac[3].transpose() * kbar.col(3);
    zbar += ybar;
    kbar.col(0) += (h * T::a41) * ybar;
    kbar.col(1) += (h * T::a42) * ybar;
    kbar.col(2) += (h * T::a43) * ybar;

    ybar.noalias() = jac[2].transpose() * kbar.col(2);
    zbar += ybar;
    kbar.col(0) += (h * T::a31) * ybar;
    kbar.col(1) += (h * T::a32) * ybar;

    ybar.noalias() = jac[1].transpose() * kbar.col(1);
    zbar += ybar;
    kbar.col(0) += (h * T::a21) * ybar;

    ybar.noalias() = jac[0].transpose() * kbar.col(0);
    zbar += ybar;

    chi = zbar;
    if (!chi.allFinite()) throw DivergenceError(n, t);
    impulse(n, chi);
  }
  return chi;
}

Vector integrate_adjoint(const AugmentedSystem& system, const Trajectory& traj,
                         const AdjointImpulses& impulses) {
  for (const auto& [node, vec] : impulses) {
    if (node >= traj.grid.nodes.size()) throw UsageError("impulse at a non-node index");
    if (vec.size() != system.q()) throw UsageError("impulse has wrong size");
  }
  return integrate_adjoint(system, traj, [&](std::size_t node, VectorRef chi) {
    auto it = impulses.find(node);
    if (it != impulses.end()) chi += it->second;
  });
}

}  // namespace hfda
