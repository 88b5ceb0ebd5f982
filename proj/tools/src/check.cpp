#include "hfda/cli.hpp"

#include "hfda/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace hfda::cli {

namespace {

Vector random_point(const Vector& center, double spread, Rng& rng) {
  Vector v = center;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] += spread * std::max(1.0, std::abs(v[i])) * rng.normal();
  return v;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

Matrix random_spd(int n, Rng& rng) {
  const Matrix g = random_matrix(n, n, rng);
  return g * g.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

ModelSpec checked_model(const ExperimentConfig& config, bool corrupt) {
  ModelSpec model = make_model(config.model);
  if (corrupt) {
    JacobianFn exact = model.jac_x;
    model.jac_x = [exact](double t, ConstVectorRef x, ConstVectorRef th, MatrixRef out) {
      exact(t, x, th, out);
      out(0, 0) += 0.05;
    };
  }
  return model;
}

double rel(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

CheckResult verdict(std::string name, double discrepancy, double tolerance) {
  return {std::move(name), discrepancy, tolerance, std::isfinite(discrepancy) && discrepancy <= tolerance};
}

// Affine dynamics with a strictly upper triangular state matrix: the flow is
// polynomial of degree <= 4, so every RK grid reproduces it exactly.
CheckResult ksgd_against_rls(Rng& rng) {
  const int d = 3;
  const int p = 3;
  Matrix A = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) A(i, j) = rng.normal();
  const Matrix B = random_matrix(d, p, rng);
  const Vector x0 = random_matrix(d, 1, rng);
  const Vector theta = random_matrix(p, 1, rng);
  AugmentedSystem system(affine_model(A, B, x0, theta, 1.0));
  SimulationOptions sim;
  sim.period = 0.05;
  sim.seed = rng.next_u64();
  const Vector z_star = system.reference_initial_condition();
  ObservationSet data =
      simulate_observations(system, z_star, ObservationModel::identity(d, 0.1), sim);
  ProblemOptions opts;
  opts.h = 0.2;
  EstimationProblem problem(system, data, z_star, opts);

  const Vector theta0 = random_point(z_star, 0.5, rng);
  const std::size_t kappa = 4;
  Sampler sweep(SamplerKind::sweep, problem.size(), kappa, Rng(1));
  RunLimits limits;
  limits.max_iter = kappa;
  const RunTrace trace = run_ksgd(problem, theta0, sweep, KsgdForm::automatic, limits);

  const ResidualSystem rs = problem.full_residuals(theta0);
  const Matrix M = rs.normal_matrix() + Matrix::Identity(problem.dim(), problem.dim());
  const Vector expected = theta0 + M.llt().solve(rs.normal_rhs());
  return verdict("ksgd_vs_rls", rel(trace.final_record().theta, expected), 1e-8);
}

std::vector<CheckResult> update_forms(Rng& rng) {
  double worst = 0.0;
  double inverse = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const int q = 1 + static_cast<int>(rng.uniform_int(0, 5));
    const int blocks = 1 + static_cast<int>(rng.uniform_int(0, 9));
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 1));
    ResidualSystem rs;
    rs.n = n;
    rs.V = random_spd(n, rng);
    rs.V_inv = rs.V.inverse();
    rs.r = random_matrix(n * blocks, 1, rng);
    rs.D = random_matrix(n * blocks, q, rng);
    for (int b = 0; b < blocks; ++b) rs.block_scale.push_back(1.0 + 9.0 * rng.uniform01());

    KsgdState state;
    state.theta = random_matrix(q, 1, rng);
    state.C_inv = random_spd(q, rng);
    state.C = state.C_inv.inverse();
    const KsgdState info = ksgd_step(state, rs, KsgdForm::information);
    const KsgdState cov = ksgd_step(state, rs, KsgdForm::covariance);
    worst = std::max(worst, rel(info.theta, cov.theta));
    const Matrix eye = Matrix::Identity(q, q);
    inverse = std::max(inverse, (cov.C * info.C_inv - eye).norm());
  }
  return {verdict("update_forms", worst, 1e-10), verdict("covariance_precision", inverse, 1e-8)};
}

}  // namespace

std::vector<CheckResult> run_checks(const ExperimentConfig& config_in, const CheckOptions& options) {
  ExperimentConfig config = config_in;
  config.resolve();
  Rng rng(options.seed);
  AugmentedSystem system(checked_model(config, options.corrupt_jacobian));
  AugmentedSystem truth(make_model(config.model));
  const Vector z_star = truth.reference_initial_condition();
  SimulationOptions sim;
  sim.period = config.period();
  sim.seed = config.obs_seed;
  ObservationSet data = simulate_observations(
      truth, z_star, ObservationModel::identity(truth.d(), config.obs_sigma), sim);

  ProblemOptions fwd_opts;
  fwd_opts.h = config.step();
  fwd_opts.estimate_initial_state = config.estimate_initial_state;
  fwd_opts.loss.reweight = config.reweight;
  ProblemOptions adj_opts = fwd_opts;
  adj_opts.mode = DerivativeMode::adjoint;
  const EstimationProblem forward(system, data, z_star, fwd_opts);
  const EstimationProblem adjoint(system, data, z_star, adj_opts);

  double fwd_adj = 0.0;
  double fd = 0.0;
  const Vector center = forward.restrict_to_free(z_star);
  for (std::size_t k = 0; k < options.points; ++k) {
    const Vector theta = random_point(center, options.spread, rng);
    const Vector gf = forward.gradient(theta).grad;
    fwd_adj = std::max(fwd_adj, rel(adjoint.gradient(theta).grad, gf));
    Vector g_fd(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double eps = 1e-6 * std::max(1.0, std::abs(theta[j]));
      Vector up = theta, down = theta;
      up[j] += eps;
      down[j] -= eps;
      g_fd[j] = (forward.objective(up) - forward.objective(down)) / (2.0 * eps);
    }
    fd = std::max(fd, rel(gf, g_fd));
  }

  double unbiased = 0.0;
  const Vector z0 = forward.expand(random_point(center, options.spread, rng));
  const auto& grid = forward.grid();
  const Vector full = hfda::gradient(system, z0, data, grid, DerivativeMode::forward, fwd_opts.loss).grad;
  for (std::size_t kappa : {2, 5, 10}) {
    Vector sum = Vector::Zero(full.size());
    for (std::size_t offset = 0; offset < kappa; ++offset) {
      const SampleSet s = systematic_sample(data.size(), kappa, offset);
      const auto terms = sample_terms(data, s, grid, fwd_opts.loss);
      sum += assemble_gradient(system, z0, data, grid, terms, DerivativeMode::forward).grad;
    }
    unbiased = std::max(unbiased, rel(sum / static_cast<double>(kappa), full));
  }

  std::vector<CheckResult> out;
  out.push_back(verdict("forward_vs_adjoint", fwd_adj, 1e-8));
  out.push_back(verdict("finite_difference", fd, 1e-4));
  out.push_back(verdict("offset_unbiasedness", unbiased, 1e-12));
  out.push_back(ksgd_against_rls(rng));
  for (auto& r : update_forms(rng)) out.push_back(std::move(r));
  return out;
}

std::string format_check(const CheckResult& r) {
  std::ostringstream os;
  os << r.name << " discrepancy=" << std::setprecision(3) << std::scientific << r.discrepancy
     << " tolerance=" << r.tolerance << ' ' << (r.pass ? "PASS" : "FAIL");
  return os.str();
}

}  // namespace hfda::cli
