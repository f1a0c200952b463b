#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "bhealth/errors.hpp"
#include "bhealth/monitoring.hpp"
#include "fixtures.hpp"

using namespace bhealth;
using bhealth::testing::seed7_fleet;

namespace {

const CellHistory& cell(int i) { return seed7_fleet()[static_cast<std::size_t>(i)]; }

RulEstimator true_rul(const CellHistory& c) {
  return [&c](const Measurement& m) { return RulEstimate{c.rul_by_diag[m.diag_index], 0.0}; };
}
SohEstimator true_soh(const CellHistory& c) {
  return [&c](const Measurement& m) { return c.soh_by_diag[m.diag_index]; };
}
SohEstimator healthy() {
  return [](const Measurement&) { return 1.0; };
}

StrategyConfig cfg_k(double k) {
  StrategyConfig c;
  c.k = k;
  return c;
}

}  // namespace

TEST(Loop, OracleStopsNearEol) {
  for (int i = 0; i < 8; ++i) {
    const auto& c = cell(i);
    const auto t = simulate(c, true_rul(c), true_soh(c), cfg_k(0.0));
    EXPECT_NEAR(t.stop_cycle, c.n_eol, 100.0) << c.cell_id;
    EXPECT_LE(t.events.size(), 4u);
    EXPECT_EQ(t.events.back().decision, Decision::stop);
  }
}

TEST(Loop, NonPositiveConservativeRulStopsImmediately) {
  const auto& c = cell(0);
  const auto t = simulate(c, [](const Measurement&) { return RulEstimate{10.0, 20.0}; }, healthy(), cfg_k(1.0));
  ASSERT_EQ(t.events.size(), 1u);
  EXPECT_EQ(t.reason, StopReason::rul_threshold);
  EXPECT_EQ(t.stop_cycle, 0.0);
  EXPECT_EQ(compute_kpis(t, c).steps, 1);
  EXPECT_DOUBLE_EQ(t.events[0].rul_cons, -10.0);
}

TEST(Loop, SohThresholdStops) {
  const auto& c = cell(0);
  const auto t = simulate(c, [](const Measurement&) { return RulEstimate{1000.0, 0.0}; },
                          [](const Measurement& m) { return m.cycle >= 2000 ? 0.79 : 0.95; }, cfg_k(0.0));
  EXPECT_EQ(t.reason, StopReason::soh_threshold);
  EXPECT_EQ(t.stop_cycle, 2000.0);
  EXPECT_EQ(t.events.size(), 3u);
}

TEST(Loop, RequestPastLastDiagnosticExhaustsData) {
  const auto& c = cell(0);
  const auto t = simulate(c, [](const Measurement&) { return RulEstimate{1e6, 0.0}; }, healthy(), cfg_k(0.0));
  EXPECT_EQ(t.reason, StopReason::data_exhausted);
  EXPECT_EQ(t.stop_cycle, c.diagnostics.back().cycle_number);
  EXPECT_EQ(t.events.size(), 1u);
}

TEST(Loop, IterationCap) {
  const auto& c = cell(0);
  StrategyConfig cfg = cfg_k(0.0);
  cfg.max_iterations = 3;
  const auto t = simulate(c, [](const Measurement&) { return RulEstimate{50.0, 0.0}; }, healthy(), cfg);
  EXPECT_EQ(t.reason, StopReason::iteration_cap);
  EXPECT_EQ(t.events.size(), 3u);
  EXPECT_EQ(t.stop_cycle, 150.0);
}

TEST(Loop, SnapTiesGoToEarlierDiagnostic) {
  const auto& c = cell(0);
  StrategyConfig cfg = cfg_k(0.0);
  cfg.n_min = 10.0;
  int calls = 0;
  const auto t = simulate(
      c, [&](const Measurement&) { return RulEstimate{calls++ == 0 ? 150.0 : 0.0, 0.0}; }, healthy(), cfg);
  ASSERT_EQ(t.events.size(), 2u);
  EXPECT_EQ(t.events[1].requested_cycle, 150.0);
  EXPECT_EQ(t.events[1].measured_cycle, 100);
}

TEST(Loop, InvalidConfigRejected) {
  StrategyConfig cfg;
  cfg.k = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_iterations = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Kpi, StopAtEolIsFullUtilization) {
  const auto& c = cell(2);
  MonitoringTrace t;
  t.events.resize(2);
  t.stop_cycle = c.n_eol;
  const auto k = compute_kpis(t, c);
  EXPECT_DOUBLE_EQ(k.utilization, 1.0);
  EXPECT_FALSE(k.overcycled);
  EXPECT_EQ(k.delta_n_eol, 0.0);
  EXPECT_NEAR(k.delta_soh_eol, 0.0, 1e-9);
  EXPECT_EQ(k.steps, 2);
}

TEST(Kpi, OvercycledCell) {
  const auto& c = cell(2);
  MonitoringTrace t;
  t.events.resize(1);
  t.stop_cycle = c.n_eol + 200.0;
  const auto k = compute_kpis(t, c);
  EXPECT_TRUE(k.overcycled);
  EXPECT_GT(k.utilization, 1.0);
  EXPECT_DOUBLE_EQ(k.delta_n_eol, -200.0);
  EXPECT_LT(k.delta_soh_eol, 0.0);
  t.events.clear();
  EXPECT_THROW(compute_kpis(t, c), ValidationError);
}

class TrainedModels : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::vector<CellHistory> train(seed7_fleet().begin(), seed7_fleet().begin() + 6);
    const auto rul = make_training_set(build_regression_dataset(train, Target::rul), Target::rul);
    const auto soh = make_training_set(build_regression_dataset(train, Target::soh), Target::soh);
    gprn_ = new GPRnModel(train_gprn(group_by_cell(rul), 10));
    svr_ = fit_svr(soh).release();
  }
  static void TearDownTestSuite() {
    delete gprn_;
    delete svr_;
  }
  static GPRnModel* gprn_;
  static SvrRegressor* svr_;
};
GPRnModel* TrainedModels::gprn_ = nullptr;
SvrRegressor* TrainedModels::svr_ = nullptr;

TEST_F(TrainedModels, ConservativeRulNonIncreasingInK) {
  for (int i : {6, 7}) {
    double prev = INFINITY;
    for (double k : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      const auto t = simulate(cell(i), *gprn_, *svr_, cfg_k(k));
      ASSERT_FALSE(t.events.empty());
      EXPECT_LE(t.events[0].rul_cons, prev);
      EXPECT_DOUBLE_EQ(t.events[0].rul_cons, t.events[0].rul_mean - k * t.events[0].rul_sigma);
      prev = t.events[0].rul_cons;
    }
  }
}

TEST_F(TrainedModels, HeldOutCellStopsWithinRecord) {
  const auto t = simulate(cell(6), *gprn_, *svr_, cfg_k(2.0));
  EXPECT_TRUE(t.reason == StopReason::rul_threshold || t.reason == StopReason::soh_threshold);
  EXPECT_LE(t.stop_cycle, cell(6).diagnostics.back().cycle_number);
  EXPECT_GT(t.stop_cycle, 0.0);
  for (const auto& e : t.events) EXPECT_GT(e.rul_sigma, 0.0);
}

TEST(Sweep, KpiTripleIsConsistent) {
  set_warnings_enabled(false);
  auto plans = enumerate_splits(fleet_cell_ids(seed7_fleet()));
  plans.resize(3);
  const auto r = sweep(seed7_fleet(), {0.0, 2.0}, {10}, StrategyConfig{},
                       RegressorSpec::defaults(RegressorKind::svr, 7), {}, plans);
  ASSERT_EQ(r.runs.size(), 3u * 2u * 2u);
  for (const auto& run : r.runs) {
    const auto& c = *std::find_if(seed7_fleet().begin(), seed7_fleet().end(),
                                  [&](const CellHistory& h) { return h.cell_id == run.trace.cell_id; });
    EXPECT_NEAR(run.kpi.utilization * c.n_eol, run.trace.stop_cycle, 1e-9);
    EXPECT_NEAR(run.kpi.delta_n_eol, c.n_eol - run.trace.stop_cycle, 1e-9);
    EXPECT_EQ(run.kpi.overcycled, run.kpi.utilization > 1.0);
    EXPECT_EQ(run.kpi.overcycled, run.kpi.delta_n_eol < 0.0);
  }
  ASSERT_EQ(r.entries.size(), 2u);
  for (const auto& e : r.entries) {
    double u = 0;
    for (const auto& pc : e.per_cell) u += pc.utilization;
    EXPECT_NEAR(e.fleet.utilization, u / e.per_cell.size(), 1e-12);
  }

  const auto dir = bhealth::testing::scratch_dir("sweep_csv");
  write_sweep_csv(r, dir / "sweep.csv", true);
  std::ifstream in(dir / "sweep.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epochs,k,U,M,P_over,dN_eol,dSoH_eol");
}
