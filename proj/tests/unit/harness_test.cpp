#include "hfda/errors.hpp"
#include "hfda/harness.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace {

using hfda::ModificationKind;
using hfda::Vector;

// Small FN study: 500 observations, 10% schemes only.
hfda::ExperimentConfig small_config() {
  hfda::ExperimentConfig c;
  c.model = "fitzhugh_nagumo";
  c.obs_period = 0.1;
  c.potps = {0.1};
  c.budget = 0.0;
  c.max_iter = 20;
  c.max_records = 0;
  c.resolve();
  return c;
}

TEST(RelativeError, Examples) {
  const auto g = [](const Vector& v) { return 1.0 + v.squaredNorm(); };
  const Vector a{{1.0}}, zero{{0.0}};
  EXPECT_EQ(hfda::relative_error(g, zero, zero), 0.0);
  EXPECT_DOUBLE_EQ(hfda::relative_error(g, a, zero), 1.0);
  EXPECT_THROW(hfda::relative_error([](const Vector&) { return 0.0; }, a, zero), hfda::UsageError);
}

TEST(Config, ModelDefaultsAreFilled) {
  hfda::ExperimentConfig c;
  c.model = "lotka_volterra";
  c.resolve();
  EXPECT_DOUBLE_EQ(c.period(), 0.005);
  EXPECT_DOUBLE_EQ(c.step(), 0.5);
  EXPECT_EQ(c.kappa(), 100u);
  c.batch_kappa = 7;
  EXPECT_EQ(c.kappa(), 7u);
}

TEST(Config, InconsistentSettingsAreRejected) {
  hfda::ExperimentConfig c;
  c.budget = 0.0;
  c.max_iter = 0;
  EXPECT_THROW(c.resolve(), hfda::UsageError);
  c = {};
  c.potps = {1.5};
  EXPECT_THROW(c.resolve(), hfda::UsageError);
  c = {};
  c.model = "lorenz";
  EXPECT_THROW(c.resolve(), hfda::UsageError);
}

TEST(Experiment, ReferenceMinimizerIsStationaryAndCached) {
  const auto ex = hfda::prepare_experiment(small_config());
  EXPECT_EQ(ex.data().size(), 500u);
  EXPECT_GT(ex.reference_objective, 0.0);
  const auto g = ex.full_problem->gradient(ex.theta_hat);
  EXPECT_LE(g.grad.norm(), 1e-6 * std::max(1.0, ex.full_problem->gradient(ex.theta_star).grad.norm()));
  EXPECT_LE(ex.reference_objective, ex.full_problem->objective(ex.theta_star));
  const auto again = hfda::prepare_experiment(small_config());
  EXPECT_EQ(again.theta_hat, ex.theta_hat);
  hfda::clear_reference_cache();
  EXPECT_EQ(hfda::prepare_experiment(small_config()).theta_hat, ex.theta_hat);
}

TEST(Experiment, ReferenceKeyTracksDataSettings) {
  auto a = small_config(), b = small_config();
  b.obs_seed += 1;
  EXPECT_NE(hfda::reference_key(a), hfda::reference_key(b));
  b = a;
  b.budget = 5.0;
  EXPECT_EQ(hfda::reference_key(a), hfda::reference_key(b));
}

TEST(Study, UnmodifiedRowIsExactlyZeroAndSchemesAreScored) {
  const auto report = hfda::run_table1_study(small_config());
  EXPECT_EQ(report.at(ModificationKind::none, 1.0).relative_error, 0.0);
  EXPECT_EQ(report.entries.size(), 7u);
  for (auto kind : hfda::all_modifications()) {
    const auto& e = report.at(kind, 0.1);
    if (!e.failed) EXPECT_GE(e.relative_error, -1e-12) << hfda::to_string(kind);
  }
  EXPECT_THROW(report.at(ModificationKind::simple_random, 0.5), std::out_of_range);
}

TEST(Study, ReportCsvHasHeaderAndOneRowPerEntry) {
  const auto report = hfda::run_table1_study(small_config());
  const auto path = std::filesystem::temp_directory_path() / "hfda_harness_test" / "table1.csv";
  std::filesystem::create_directories(path.parent_path());
  hfda::write_report(path, report);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scheme,potp,relative_error");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, report.entries.size());
  std::filesystem::remove_all(path.parent_path());
}

TEST(Replay, MinimizerReplaysToZeroAndMatchesDirectEvaluation) {
  const auto ex = hfda::prepare_experiment(small_config());
  hfda::RunTrace trace;
  trace.records.push_back({0.0, 0, ex.theta_hat, std::nullopt});
  trace.records.push_back({0.5, 1, ex.theta_star, std::nullopt});
  const auto errors = hfda::replay_trace(trace, *ex.full_problem, ex.theta_hat);
  ASSERT_EQ(errors.size(), 2u);
  EXPECT_EQ(errors[0].second, 0.0);
  const double direct = (ex.full_problem->objective(ex.theta_star) - ex.reference_objective) /
                        ex.reference_objective;
  EXPECT_DOUBLE_EQ(errors[1].second, direct);
  EXPECT_EQ(errors[1].first, 0.5);
}

TEST(Replay, ThinningKeepsEndpointsAndOrder) {
  hfda::RunTrace trace;
  for (std::size_t k = 0; k <= 100; ++k)
    trace.records.push_back({0.01 * static_cast<double>(k), k, Vector::Zero(1), std::nullopt});
  const auto thin = hfda::thin_trace(trace, 10);
  ASSERT_EQ(thin.records.size(), 10u);
  EXPECT_EQ(thin.records.front().k, 0u);
  EXPECT_EQ(thin.records.back().k, 100u);
  for (std::size_t i = 1; i < thin.records.size(); ++i)
    EXPECT_GT(thin.records[i].k, thin.records[i - 1].k);
  EXPECT_EQ(hfda::thin_trace(trace, 0).records.size(), 101u);
  EXPECT_EQ(hfda::thin_trace(trace, 500).records.size(), 101u);
}

TEST(Race, StartPolicies) {
  auto c = small_config();
  c.theta0 = hfda::Theta0Policy::reference;
  const auto ex = hfda::prepare_experiment(c);
  EXPECT_EQ(hfda::race_start(ex), ex.theta_star);
  c.theta0 = hfda::Theta0Policy::perturbed;
  auto ex2 = hfda::prepare_experiment(c);
  const Vector a = hfda::race_start(ex2);
  EXPECT_EQ(a, hfda::race_start(ex2));
  EXPECT_NE(a, ex2.theta_star);
  c.theta0 = hfda::Theta0Policy::explicit_vector;
  c.theta0_values = {-1.0, 1.0, 0.1, 0.2, 0.3, 0.4};
  const Vector e = hfda::race_start(hfda::prepare_experiment(c));
  EXPECT_EQ(e, (Vector{{-1.0, 1.0, 0.1, 0.2, 0.3, 0.4}}));
  c.theta0_values = {0.1, 0.2};
  EXPECT_THROW(hfda::race_start(hfda::prepare_experiment(c)), hfda::UsageError);
}

TEST(Race, LineUpHasEightRunsPerGroup) {
  const auto requests = hfda::race_requests(small_config());
  std::size_t first = 0, second = 0;
  std::set<std::string> names;
  for (const auto& r : requests) {
    (r.solver == "gd" || r.solver == "sgd" ? first : second) += 1;
    names.insert(hfda::default_run_name(r));
  }
  EXPECT_EQ(first, 8u);
  EXPECT_EQ(second, 8u);
  EXPECT_EQ(names.size(), 16u);
  EXPECT_TRUE(names.count("GD_nomod") && names.count("SGD") && names.count("GN_nomod") &&
              names.count("kSGD"));
}

TEST(Race, StochasticSolverOnModifiedDataIsRejected) {
  const auto ex = hfda::prepare_experiment(small_config());
  hfda::SolverRequest req{"sgd", ModificationKind::average_upper, 0.1, std::nullopt, ""};
  EXPECT_THROW(hfda::run_solver(ex, req, ex.theta_star, hfda::race_limits(ex.config, "sgd")),
               hfda::UsageError);
}

TEST(Race, CappedRaceWritesTracesAndIsDeterministic) {
  auto c = small_config();
  const auto dir = std::filesystem::temp_directory_path() / "hfda_race_test";
  std::filesystem::remove_all(dir);
  c.output_dir = dir;
  const auto a = hfda::run_budget_race(c);
  hfda::RaceOptions no_files;
  no_files.write_files = false;
  no_files.jobs = 2;
  const auto b = hfda::run_budget_race(c, no_files);
  ASSERT_EQ(a.runs.size(), 16u);
  for (const auto& run : a.runs) {
    const auto& other = b.at(run.name);
    ASSERT_EQ(run.errors.size(), other.errors.size()) << run.name;
    for (std::size_t i = 0; i < run.errors.size(); ++i)
      ASSERT_EQ(run.errors[i].second, other.errors[i].second) << run.name;
    const auto csv = dir / "fitzhugh_nagumo" / run.group / (run.name + ".csv");
    ASSERT_TRUE(std::filesystem::exists(csv)) << csv;
    ASSERT_TRUE(std::filesystem::exists(dir / "fitzhugh_nagumo" / run.group / (run.name + ".meta")));
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    ASSERT_EQ(line, "time,error");
    double last = -1.0;
    while (std::getline(in, line)) {
      const double t = std::stod(line.substr(0, line.find(',')));
      ASSERT_GE(t, last);
      last = t;
    }
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
