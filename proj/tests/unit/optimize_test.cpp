#include "hfda/errors.hpp"
#include "hfda/optimize.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

namespace {

using hfda::Matrix;
using hfda::Vector;

// G(theta) = 1/2 theta' A theta; only the full gradient is available.
class Quadratic : public hfda::Objective {
 public:
  explicit Quadratic(Matrix A) : A_(std::move(A)) {}
  int dim() const override { return static_cast<int>(A_.rows()); }
  std::size_t size() const override { return 1; }
  hfda::GradientEvaluation gradient(const Vector& theta) const override {
    return {0.5 * theta.dot(A_ * theta), A_ * theta, 1, 0};
  }
  hfda::GradientEvaluation stochastic_gradient(const Vector& theta,
                                               const hfda::SampleSet&) const override {
    return gradient(theta);
  }
  hfda::ResidualSystem residuals(const Vector&, const hfda::SampleSet&) const override {
    throw std::logic_error("not a least-squares problem");
  }
  hfda::ResidualSystem full_residuals(const Vector& theta) const override {
    return residuals(theta, {});
  }

 private:
  Matrix A_;
};

using fixture::affine_case;

hfda::RunLimits iterations(std::size_t n) {
  hfda::RunLimits l;
  l.max_iter = n;
  return l;
}

TEST(Schedule, ConstantAndPolynomial) {
  hfda::StepSchedule s{hfda::ScheduleKind::constant, 0.1, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(s.eta(1000), 0.1);
  s = {hfda::ScheduleKind::polynomial, 0.1, 10.0, 1.0};
  EXPECT_DOUBLE_EQ(s.eta(0), 0.1);
  EXPECT_DOUBLE_EQ(s.eta(10), 0.05);
}

TEST(Schedule, IllegalExponentsAreRejected) {
  for (double alpha : {0.5, 0.3, 1.2}) {
    hfda::StepSchedule s{hfda::ScheduleKind::polynomial, 0.1, 10.0, alpha};
    EXPECT_THROW(s.validate(), hfda::UsageError) << alpha;
  }
  EXPECT_THROW((hfda::StepSchedule{hfda::ScheduleKind::constant, -1.0, 1.0, 1.0}.validate()),
               hfda::UsageError);
}

// sum eta_k diverges and sum eta_k^2 stays below eta0^2 (1 + k0 / (2 alpha - 1)).
TEST(ScheduleProperty, RobbinsMonroPartialSums) {
  hfda::Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const double alpha = 0.51 + 0.49 * rng.uniform01();
    const double k0 = 1.0 + 100.0 * rng.uniform01();
    const hfda::StepSchedule s{hfda::ScheduleKind::polynomial, 1.0, k0, alpha};
    double sum = 0.0, squares = 0.0;
    const std::size_t K = 200000;
    for (std::size_t k = 0; k < K; ++k) {
      sum += s.eta(k);
      squares += s.eta(k) * s.eta(k);
    }
    const double bound = 1.0 + k0 / (2.0 * alpha - 1.0);
    ASSERT_LE(squares, bound);
    // integral lower bound of the partial sum, unbounded in K
    const double lower = k0 / (1.0 - alpha + 1e-300) *
                         (std::pow(1.0 + K / k0, 1.0 - alpha) - 1.0);
    ASSERT_GE(sum, std::min(lower, static_cast<double>(K) * s.eta(K)));
  }
}

TEST(GradientDescent, QuadraticMatchesClosedFormAndContracts) {
  const Matrix A{{2.0, 0.5}, {0.5, 1.0}};
  const Quadratic problem(A);
  const Vector theta0{{1.0, -2.0}};
  const double eta = 0.3;
  const auto trace = hfda::run_gd(problem, theta0,
                                  {hfda::ScheduleKind::constant, eta, 1.0, 1.0}, iterations(25));
  ASSERT_EQ(trace.records.size(), 26u);
  const Matrix step = Matrix::Identity(2, 2) - eta * A;
  Vector expected = theta0;
  for (std::size_t k = 1; k < trace.records.size(); ++k) {
    expected = step * expected;
    EXPECT_LE((trace.records[k].theta - expected).norm(), 1e-14);
    EXPECT_LT(trace.records[k].theta.norm(), trace.records[k - 1].theta.norm());
  }
}

TEST(GradientDescent, StationaryStartStaysPut) {
  const Quadratic problem(Matrix::Identity(3, 3));
  const auto trace = hfda::run_gd(problem, Vector::Zero(3),
                                  {hfda::ScheduleKind::constant, 0.5, 1.0, 1.0}, iterations(5));
  EXPECT_EQ(trace.final_record().theta, Vector::Zero(3));
}

TEST(GradientDescent, IterationCapIsExact) {
  const Quadratic problem(Matrix::Identity(1, 1));
  hfda::RunLimits l;
  l.max_iter = 5;
  l.budget = 0.0;
  const auto trace =
      hfda::run_gd(problem, Vector::Ones(1), {hfda::ScheduleKind::constant, 0.1, 1.0, 1.0}, l);
  EXPECT_EQ(trace.iterations, 5u);
  EXPECT_EQ(trace.terminated_by, hfda::Termination::max_iter);
}

TEST(GradientDescent, DivergenceStopsTheRun) {
  const Quadratic problem(Matrix::Identity(1, 1) * 1e200);
  const auto trace = hfda::run_gd(problem, Vector::Constant(1, 1e200),
                                  {hfda::ScheduleKind::constant, 1.0, 1.0, 1.0}, iterations(50));
  EXPECT_EQ(trace.terminated_by, hfda::Termination::divergence);
}

TEST(GradientDescent, BudgetStopsTheRun) {
  const Quadratic problem(Matrix::Identity(2, 2));
  hfda::RunLimits l;
  l.budget = 0.02;
  const auto trace = hfda::run_gd(problem, Vector::Ones(2),
                                  {hfda::ScheduleKind::constant, 1e-9, 1.0, 1.0}, l);
  EXPECT_EQ(trace.terminated_by, hfda::Termination::budget);
  EXPECT_GT(trace.iterations, 0u);
  EXPECT_LE(trace.final_record().wall_clock, 1.0);
}

TEST(Limits, NeedBudgetOrIterationCap) {
  EXPECT_THROW(hfda::RunLimits{}.validate(), hfda::UsageError);
}

TEST(TraceProperty, RecordsAreOrderedAndCadenced) {
  hfda::Rng rng(50);
  auto c = affine_case(2, 2, true, 40, 0.1, rng);
  for (std::size_t every : {1u, 3u, 7u}) {
    hfda::RunLimits l = iterations(20);
    l.record_every = every;
    const auto trace = hfda::run_gd(*c.problem, c.problem->restrict_to_free(c.z_star),
                                    {hfda::ScheduleKind::constant, 1e-4, 1.0, 1.0}, l);
    ASSERT_EQ(trace.records.front().k, 0u);
    ASSERT_EQ(trace.records.back().k, 20u);
    for (std::size_t i = 1; i < trace.records.size(); ++i) {
      ASSERT_GE(trace.records[i].wall_clock, trace.records[i - 1].wall_clock);
      ASSERT_GT(trace.records[i].k, trace.records[i - 1].k);
      if (trace.records[i].k != 20u) ASSERT_EQ(trace.records[i].k % every, 0u);
    }
  }
}

TEST(StochasticGradientDescent, FullSamplerReproducesGradientDescent) {
  hfda::Rng rng(51);
  auto c = affine_case(2, 1, true, 30, 0.1, rng);
  const Vector theta0 = oracle::jitter(c.problem->restrict_to_free(c.z_star), 0.3, rng);
  const hfda::StepSchedule s{hfda::ScheduleKind::constant, 1e-3, 1.0, 1.0};
  hfda::Sampler full(hfda::SamplerKind::full, c.problem->size(), 1, hfda::Rng(1));
  const auto sgd = hfda::run_sgd(*c.problem, theta0, s, full, iterations(15));
  const auto gd = hfda::run_gd(*c.problem, theta0, s, iterations(15));
  EXPECT_EQ(sgd.final_record().theta, gd.final_record().theta);
}

TEST(StochasticGradientDescent, SameSeedSameIterates) {
  hfda::Rng rng(52);
  auto c = affine_case(2, 2, true, 100, 0.1, rng);
  const Vector theta0 = c.problem->restrict_to_free(c.z_star);
  const hfda::StepSchedule s{hfda::ScheduleKind::polynomial, 1e-3, 10.0, 1.0};
  hfda::Sampler a(hfda::SamplerKind::systematic, 100, 10, hfda::Rng(9));
  hfda::Sampler b(hfda::SamplerKind::systematic, 100, 10, hfda::Rng(9));
  const auto ta = hfda::run_sgd(*c.problem, theta0, s, a, iterations(30));
  const auto tb = hfda::run_sgd(*c.problem, theta0, s, b, iterations(30));
  for (std::size_t i = 0; i < ta.records.size(); ++i)
    ASSERT_EQ(ta.records[i].theta, tb.records[i].theta);
}

// x' = theta, x(0) = 0 known: the batch minimizer is sum t y / sum t^2.
TEST(StochasticGradientDescent, ScalarLinearGaussianContracts) {
  const hfda::AugmentedSystem sys(hfda::affine_model(Matrix::Zero(1, 1), Matrix::Ones(1, 1),
                                                     Vector::Zero(1), Vector{{1.5}}, 1.0));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    hfda::SimulationOptions sim;
    sim.period = 0.01;
    sim.seed = seed;
    auto data = hfda::simulate_observations(sys, sys.reference_initial_condition(),
                                            hfda::ObservationModel::identity(1, 0.1), sim);
    double sty = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      sty += data.times[i] * data.values(0, static_cast<Eigen::Index>(i));
      stt += data.times[i] * data.times[i];
    }
    const double theta_hat = sty / stt;
    hfda::ProblemOptions opts;
    opts.h = 0.1;
    opts.estimate_initial_state = false;
    const hfda::EstimationProblem problem(sys, data, sys.reference_initial_condition(), opts);
    const double curvature = stt / 0.01;
    hfda::Sampler sampler(hfda::SamplerKind::systematic, data.size(), 10, hfda::Rng(seed));
    const Vector theta0{{0.0}};
    const auto trace = hfda::run_sgd(problem, theta0,
                                     {hfda::ScheduleKind::polynomial, 0.5 / curvature, 10.0, 1.0},
                                     sampler, iterations(500));
    EXPECT_LT(std::abs(trace.final_record().theta[0] - theta_hat), 0.1 * std::abs(theta_hat))
        << seed;
  }
}

TEST(GaussNewton, OneUndampedStepSolvesAffineLeastSquares) {
  hfda::Rng rng(60);
  for (int trial = 0; trial < 10; ++trial) {
    // p <= d keeps the affine problem identifiable
    const int d = oracle::random_int(1, 3, rng), p = oracle::random_int(1, d, rng);
    auto c = affine_case(d, p, true, 50, 0.1, rng);
    const Vector theta0 = oracle::jitter(c.z_star, 1.0, rng);
    const auto trace =
        hfda::run_gauss_newton(*c.problem, theta0, {0.0, 0.0, false}, iterations(1));
    const Vector expected =
        oracle::affine_least_squares(c.flow, c.problem->data().times, c.problem->data().values);
    EXPECT_LE(oracle::rel_diff(trace.final_record().theta, expected), 1e-8);
  }
}

TEST(GaussNewton, ZeroResidualGivesZeroStep) {
  hfda::ResidualSystem rs;
  rs.n = 1;
  rs.r = Vector::Zero(3);
  rs.D = Matrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  rs.block_scale = {1.0, 1.0, 1.0};
  rs.V = rs.V_inv = Matrix::Ones(1, 1);
  EXPECT_EQ(hfda::gauss_newton_step(rs, 0.0), Vector::Zero(2));
}

TEST(GaussNewton, LargeDampingShrinksStep) {
  hfda::Rng rng(61);
  hfda::ResidualSystem rs;
  rs.n = 1;
  rs.r = oracle::random_vector(5, rng);
  rs.D = oracle::random_matrix(5, 2, rng);
  rs.block_scale.assign(5, 1.0);
  rs.V = rs.V_inv = Matrix::Ones(1, 1);
  const double base = hfda::gauss_newton_step(rs, 0.0).norm();
  double previous = base;
  for (double lambda : {1.0, 1e3, 1e6, 1e12}) {
    const double n = hfda::gauss_newton_step(rs, lambda).norm();
    EXPECT_LT(n, previous);
    previous = n;
  }
  EXPECT_LT(previous, 1e-9 * base);
}

TEST(GaussNewton, SingularSystemWithoutDampingFails) {
  hfda::ResidualSystem rs;
  rs.n = 1;
  rs.r = Vector::Ones(2);
  rs.D = Matrix{{1.0, 0.0}, {2.0, 0.0}};
  rs.block_scale = {1.0, 1.0};
  rs.V = rs.V_inv = Matrix::Ones(1, 1);
  EXPECT_THROW(hfda::gauss_newton_step(rs, 0.0), hfda::SolverError);
  EXPECT_NO_THROW(hfda::gauss_newton_step(rs, 1e-3));
}

TEST(GaussNewton, DefaultDampingFollowsTraceRule) {
  const Matrix A{{4.0, 0.0}, {0.0, 2.0}};
  EXPECT_DOUBLE_EQ(hfda::effective_damping(A, -1.0), 1e-8 * 3.0);
  EXPECT_DOUBLE_EQ(hfda::effective_damping(A, 0.5), 0.5);
}

TEST(GaussNewton, AdaptiveModeNeverIncreasesObjective) {
  hfda::Rng rng(62);
  const hfda::AugmentedSystem sys(hfda::fitzhugh_nagumo());
  hfda::SimulationOptions sim;
  sim.period = 0.1;
  sim.seed = 4;
  auto data = hfda::simulate_observations(sys, sys.reference_initial_condition(),
                                          hfda::ObservationModel::identity(2, 0.1), sim);
  hfda::ProblemOptions opts;
  opts.h = 0.5;
  const hfda::EstimationProblem problem(sys, data, sys.reference_initial_condition(), opts);
  const Vector theta0 = oracle::jitter(sys.reference_initial_condition(), 0.2, rng);
  const auto trace = hfda::run_gauss_newton(problem, theta0, {-1.0, 1e-10, true}, iterations(40));
  double previous = problem.objective(trace.records.front().theta);
  for (const auto& rec : trace.records) {
    const double g = problem.objective(rec.theta);
    ASSERT_LE(g, previous * (1.0 + 1e-12));
    previous = g;
  }
}

TEST(Ksgd, ScalarUpdateByHand) {
  const double y = 3.0;
  hfda::ResidualSystem rs;
  rs.n = 1;
  rs.r = Vector{{y}};
  rs.D = Matrix::Ones(1, 1);
  rs.block_scale = {1.0};
  rs.V = rs.V_inv = Matrix::Ones(1, 1);
  for (auto form : {hfda::KsgdForm::information, hfda::KsgdForm::covariance}) {
    const auto next = hfda::ksgd_step(hfda::KsgdState::initial(Vector::Zero(1)), rs, form);
    EXPECT_DOUBLE_EQ(next.theta[0], y / 2.0);
    EXPECT_DOUBLE_EQ(next.C_inv(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(next.C(0, 0), 0.5);
    EXPECT_EQ(next.k, 1u);
  }
}

TEST(Ksgd, ZeroResidualKeepsIterateButGainsPrecision) {
  hfda::Rng rng(70);
  hfda::ResidualSystem rs;
  rs.n = 2;
  rs.r = Vector::Zero(4);
  rs.D = oracle::random_matrix(4, 3, rng);
  rs.block_scale = {1.0, 2.0};
  rs.V = oracle::random_spd(2, rng);
  rs.V_inv = rs.V.inverse();
  const Vector theta = oracle::random_vector(3, rng);
  const auto next = hfda::ksgd_step(hfda::KsgdState::initial(theta), rs, hfda::KsgdForm::automatic);
  EXPECT_EQ(next.theta, theta);
  EXPECT_LE((next.C_inv - Matrix::Identity(3, 3) - rs.normal_matrix()).norm(), 1e-12);
}

TEST(KsgdProperty, UpdateFormsAgreeAndPrecisionGrows) {
  hfda::Rng rng(71);
  for (int instance = 0; instance < 100; ++instance) {
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
    ASSERT_LE(oracle::rel_diff(info.theta, cov.theta), 1e-10);
    ASSERT_LE((cov.C * cov.C_inv - Matrix::Identity(q, q)).norm(), 1e-8);
    // C_inv grows in the Loewner order
    const Eigen::SelfAdjointEigenSolver<Matrix> es(info.C_inv - state.C_inv);
    ASSERT_GE(es.eigenvalues().minCoeff(), -1e-10 * state.C_inv.norm());
  }
}

// One disjoint-batch sweep over affine data equals the batch identity-prior
// least-squares update, for every unknown count 1..6 and batch size 1..10.
TEST(KsgdProperty, SweepEqualsIdentityPriorLeastSquares) {
  hfda::Rng rng(72);
  for (const auto& shape : fixture::unknown_count_shapes())
    EXPECT_LE(fixture::sweep_gap(shape, rng), 1e-8) << "d " << shape[0] << " p " << shape[1];
}

TEST(Ksgd, NoiselessTruthIsAFixedPoint) {
  const hfda::AugmentedSystem sys(hfda::lotka_volterra());
  hfda::SimulationOptions sim;
  sim.period = 0.05;
  sim.noiseless = true;
  auto data = hfda::simulate_observations(sys, sys.reference_initial_condition(),
                                          hfda::ObservationModel::identity(2, 0.1), sim);
  hfda::ProblemOptions opts;
  opts.h = 0.05;
  const hfda::EstimationProblem problem(sys, data, sys.reference_initial_condition(), opts);
  hfda::Sampler s(hfda::SamplerKind::systematic, data.size(), 10, hfda::Rng(3));
  const Vector theta0 = problem.restrict_to_free(sys.reference_initial_condition());
  const auto trace = hfda::run_ksgd(problem, theta0, s, hfda::KsgdForm::automatic, iterations(10));
  EXPECT_LE(oracle::rel_diff(trace.final_record().theta, theta0), 1e-10);
}

TEST(Ksgd, SameSeedSameIterates) {
  hfda::Rng rng(73);
  auto c = affine_case(2, 2, true, 60, 0.1, rng);
  const Vector theta0 = oracle::jitter(c.problem->restrict_to_free(c.z_star), 0.3, rng);
  hfda::Sampler a(hfda::SamplerKind::simple, 60, 6, hfda::Rng(5));
  hfda::Sampler b(hfda::SamplerKind::simple, 60, 6, hfda::Rng(5));
  const auto ta = hfda::run_ksgd(*c.problem, theta0, a, hfda::KsgdForm::automatic, iterations(12));
  const auto tb = hfda::run_ksgd(*c.problem, theta0, b, hfda::KsgdForm::automatic, iterations(12));
  EXPECT_EQ(ta.final_record().theta, tb.final_record().theta);
}

TEST(Sampler, SweepCoversDataOncePerCycle) {
  hfda::Sampler s(hfda::SamplerKind::sweep, 23, 4, hfda::Rng(1));
  std::vector<int> hits(23, 0);
  for (int i = 0; i < 4; ++i) {
    const auto draw = s.next();
    for (double pi : draw.pi) ASSERT_EQ(pi, 1.0);
    for (auto idx : draw.indices) ++hits[idx];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Sampler, NamesRoundTrip) {
  for (auto k : {hfda::SamplerKind::systematic, hfda::SamplerKind::simple,
                 hfda::SamplerKind::stratified, hfda::SamplerKind::full, hfda::SamplerKind::sweep})
    EXPECT_EQ(hfda::parse_sampler(hfda::to_string(k)), k);
  EXPECT_THROW(hfda::parse_sampler("bootstrap"), hfda::UsageError);
}

}  // namespace
