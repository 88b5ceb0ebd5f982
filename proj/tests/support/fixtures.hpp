#pragma once

// Affine estimation problems whose answers are known in closed form.

#include "hfda/optimize.hpp"

#include "oracles.hpp"

#include <memory>
#include <vector>

namespace fixture {

struct AffineCase {
  oracle::AffineFlow flow;
  std::shared_ptr<hfda::EstimationProblem> problem;
  std::vector<int> free;  // augmented coordinates being estimated
  hfda::Vector z_star;
};

// Nilpotent affine dynamics with d <= 3: the augmented flow is at most cubic
// in t, so every RK grid reproduces it exactly. N observations on (0, 1].
inline AffineCase affine_case(int d, int p, bool estimate_x0, std::size_t N, double sigma,
                              hfda::Rng& rng) {
  AffineCase c;
  c.flow = {oracle::random_strictly_upper(d, rng), oracle::random_matrix(d, p, rng)};
  hfda::AugmentedSystem sys(hfda::affine_model(c.flow.A, c.flow.B, oracle::random_vector(d, rng),
                                               oracle::random_vector(p, rng), 1.0));
  c.z_star = sys.reference_initial_condition();
  hfda::SimulationOptions sim;
  sim.period = 1.0 / static_cast<double>(N);
  sim.seed = rng.next_u64();
  auto data = hfda::simulate_observations(sys, c.z_star,
                                          hfda::ObservationModel::identity(d, sigma), sim);
  hfda::ProblemOptions opts;
  opts.h = 0.2;
  opts.estimate_initial_state = estimate_x0;
  c.problem = std::make_shared<hfda::EstimationProblem>(sys, std::move(data), c.z_star, opts);
  for (int j = estimate_x0 ? 0 : d; j < d + p; ++j) c.free.push_back(j);
  return c;
}

// (d, p, estimate x0) giving 1..6 unknowns.
inline const std::vector<std::array<int, 3>>& unknown_count_shapes() {
  static const std::vector<std::array<int, 3>> shapes = {
      {1, 1, 0}, {1, 1, 1}, {2, 1, 1}, {2, 2, 1}, {3, 2, 1}, {3, 3, 1}};
  return shapes;
}

// Worst relative gap between one kSGD disjoint-batch sweep and the batch
// identity-prior least-squares update over batch sizes 1..10.
inline double sweep_gap(const std::array<int, 3>& shape, hfda::Rng& rng) {
  const auto [d, p, estimate] = shape;
  double worst = 0.0;
  for (std::size_t batch = 1; batch <= 10; ++batch) {
    const auto kappa = static_cast<std::size_t>(oracle::random_int(1, 5, rng));
    auto c = affine_case(d, p, estimate != 0, batch * kappa, 0.1, rng);
    // fixed coordinates stay at their reference values
    const hfda::Vector start =
        c.problem->expand(c.problem->restrict_to_free(oracle::jitter(c.z_star, 0.5, rng)));
    hfda::Sampler sweep(hfda::SamplerKind::sweep, c.problem->size(), kappa, hfda::Rng(1));
    hfda::RunLimits limits;
    limits.max_iter = kappa;
    const auto trace = hfda::run_ksgd(*c.problem, c.problem->restrict_to_free(start), sweep,
                                      hfda::KsgdForm::automatic, limits);
    const hfda::Vector expected = oracle::identity_prior_gls(
        c.flow, c.problem->data().times, c.problem->data().values, 0.1, start, c.free);
    worst = std::max(worst, oracle::rel_diff(trace.final_record().theta, expected));
  }
  return worst;
}

// Worst disagreement between the information and covariance kSGD updates
// over random residual systems and priors.
inline double update_form_gap(int instances, hfda::Rng& rng) {
  double worst = 0.0;
  for (int instance = 0; instance < instances; ++instance) {
    const int q = oracle::random_int(1, 6, rng);
    const int blocks = oracle::random_int(1, 10, rng);
    const int n = oracle::random_int(1, 2, rng);
    hfda::ResidualSystem rs;
    rs.n = n;
    rs.V = oracle::random_spd(n, rng);
    rs.V_inv = rs.V.inverse();
    rs.r = oracle::random_vector(n * blocks, rng);
    rs.D = oracle::random_matrix(n * blocks, q, rng);
    for (int b = 0; b < blocks; ++b) rs.block_scale.push_back(1.0 + 9.0 * rng.uniform01());
    hfda::KsgdState state;
    state.theta = oracle::random_vector(q, rng);
    state.C_inv = oracle::random_spd(q, rng);
    state.C = state.C_inv.inverse();
    const auto info = hfda::ksgd_step(state, rs, hfda::KsgdForm::information);
    const auto cov = hfda::ksgd_step(state, rs, hfda::KsgdForm::covariance);
    worst = std::max(worst, oracle::rel_diff(info.theta, cov.theta));
  }
  return worst;
}

}  // namespace fixture
