#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "bhealth/errors.hpp"
#include "bhealth/eval.hpp"
#include "fixtures.hpp"

using namespace bhealth;

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("Cell" + std::to_string(i + 1));
  return v;
}

// Rows whose F1 carries the SoH so an oracle can read it back.
std::vector<LabeledSample> rows_for(int cells, int per_cell) {
  std::vector<LabeledSample> rows;
  for (int c = 0; c < cells; ++c)
    for (int k = 0; k < per_cell; ++k) {
      LabeledSample r;
      r.cell_id = "Cell" + std::to_string(c + 1);
      r.cycle_number = 100 * k;
      r.soh = 1.0 - 0.01 * k - 0.003 * c;
      r.rul = 1000.0 - 100 * k;
      r.features.f1_ic_peak = r.soh;
      r.features.f2_v_at_peak = c;
      rows.push_back(r);
    }
  return rows;
}

class Oracle final : public FittedRegressor {
 public:
  Oracle() : FittedRegressor(RegressorSpec{}) {}
  double predict(const Eigen::VectorXd& x) const override { return 100.0 * x[0]; }
};

class Constant final : public FittedRegressor {
 public:
  explicit Constant(double v) : FittedRegressor(RegressorSpec{}), v_(v) {}
  double predict(const Eigen::VectorXd&) const override { return v_; }

 private:
  double v_;
};

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Nmae, WorkedExample) {
  EXPECT_DOUBLE_EQ(nmae(Eigen::Vector2d(1, 9), Eigen::Vector2d(0, 10)), 0.1);
}

TEST(Nmae, UndefinedCases) {
  EXPECT_THROW(nmae(Eigen::Vector2d(1, 2), Eigen::Vector2d(5, 5)), ValidationError);
  EXPECT_THROW(nmae(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), ValidationError);
  EXPECT_THROW(nmae(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)), ValidationError);
}

TEST(Splits, EightCellsGiveTwentyEight) {
  const auto plans = enumerate_splits(ids(8));
  ASSERT_EQ(plans.size(), 28u);
  std::map<std::string, int> test_count;
  for (const auto& p : plans) {
    EXPECT_EQ(p.test_cells.size(), 2u);
    EXPECT_EQ(p.train_cells.size(), 6u);
    for (const auto& c : p.test_cells) ++test_count[c];
    for (const auto& c : p.test_cells)
      EXPECT_EQ(std::find(p.train_cells.begin(), p.train_cells.end(), c), p.train_cells.end());
  }
  for (const auto& [cell, n] : test_count) EXPECT_EQ(n, 7) << cell;
  EXPECT_EQ(plans.front().test_cells, (std::vector<std::string>{"Cell1", "Cell2"}));
  EXPECT_EQ(plans.back().test_cells, (std::vector<std::string>{"Cell7", "Cell8"}));
}

TEST(Splits, ThreeCellsAndTooFew) {
  EXPECT_EQ(enumerate_splits(ids(3)).size(), 3u);
  EXPECT_THROW(enumerate_splits(ids(2)), ValidationError);
  EXPECT_THROW(enumerate_splits({"a", "a", "b"}), ValidationError);
}

TEST(Harness, PerfectOracleScoresZero) {
  const auto rows = rows_for(4, 10);
  const auto r = evaluate_with("oracle", [](const TrainingSet&) { return std::make_unique<Oracle>(); }, rows,
                               Target::soh, enumerate_splits(ids(4)));
  EXPECT_EQ(r.failed_splits, 0);
  EXPECT_NEAR(r.mae_train, 0.0, 1e-12);
  EXPECT_NEAR(r.mae_test, 0.0, 1e-12);
  EXPECT_NEAR(r.max_error_test, 0.0, 1e-12);
  EXPECT_NEAR(r.nmae_test, 0.0, 1e-12);
}

TEST(Harness, ConstantMeanGivesMeanAbsoluteDeviation) {
  const auto rows = rows_for(3, 8);
  const auto plans = enumerate_splits(ids(3));
  const auto fit = [](const TrainingSet& t) { return std::make_unique<Constant>(t.y.mean()); };
  const auto r = evaluate_with("mean", fit, rows, Target::soh, plans);
  ASSERT_EQ(r.splits.size(), 3u);
  for (const auto& s : r.splits) {
    const auto train = make_training_set(
        [&] {
          std::vector<LabeledSample> v;
          for (const auto& row : rows)
            if (row.cell_id == s.train_cells[0]) v.push_back(row);
          return v;
        }(),
        Target::soh);
    EXPECT_NEAR(s.mae_train, (train.y.array() - train.y.mean()).abs().mean(), 1e-12);
  }
}

TEST(Harness, FailedSplitsLeftOutOfAggregates) {
  const auto rows = rows_for(3, 6);
  const auto plans = enumerate_splits(ids(3));
  set_warnings_enabled(false);
  const auto fit = [](const TrainingSet& t) -> std::unique_ptr<FittedRegressor> {
    if (t.cell_ids.front() == "Cell1") throw TrainingError("boom");
    return std::make_unique<Constant>(95.0);
  };
  const auto r = evaluate_with("flaky", fit, rows, Target::soh, plans);
  // only the split testing on Cell2 and Cell3 trains on Cell1
  EXPECT_EQ(r.failed_splits, 1);
  EXPECT_EQ(r.succeeded_splits(), 2);
  EXPECT_FALSE(r.splits[2].ok);
  EXPECT_NE(r.splits[2].error.find("boom"), std::string::npos);
  EXPECT_DOUBLE_EQ(r.mae_test, 0.5 * (r.splits[0].mae_test + r.splits[1].mae_test));
}

TEST(Harness, AllSplitsFailingGivesNan) {
  set_warnings_enabled(false);
  const auto r = evaluate_with(
      "never", [](const TrainingSet&) -> std::unique_ptr<FittedRegressor> { throw TrainingError("no"); },
      rows_for(3, 5), Target::rul, enumerate_splits(ids(3)));
  EXPECT_TRUE(std::isnan(r.mae_test));
  EXPECT_EQ(r.failed_splits, 3);
}

TEST(Harness, BitwiseDeterministic) {
  const auto& fleet = bhealth::testing::seed7_fleet();
  const auto rows = build_regression_dataset(fleet, Target::soh);
  const auto plans = enumerate_splits(fleet_cell_ids(fleet));
  const auto spec = RegressorSpec::defaults(RegressorKind::svr, 7);
  const auto a = evaluate(spec, rows, Target::soh, plans);
  const auto b = evaluate(spec, rows, Target::soh, plans);
  ASSERT_EQ(a.splits.size(), 28u);
  for (std::size_t i = 0; i < a.splits.size(); ++i) {
    EXPECT_EQ(a.splits[i].mae_test, b.splits[i].mae_test);
    EXPECT_EQ(a.splits[i].mae_train, b.splits[i].mae_train);
  }
  EXPECT_EQ(a.mae_test, b.mae_test);
  EXPECT_LT(a.mae_test, 2.0);  // percent
}

TEST(Reports, CsvSchemas) {
  const auto rows = rows_for(3, 6);
  const auto r = evaluate_with("oracle", [](const TrainingSet&) { return std::make_unique<Oracle>(); }, rows,
                               Target::soh, enumerate_splits(ids(3)));
  const auto dir = bhealth::testing::scratch_dir("eval_csv");
  write_results_csv({r}, dir / "results.csv");
  write_summary_csv({r}, dir / "summary.csv");
  write_predictions_csv({r}, dir / "pred.csv");
  const auto results = read_lines(dir / "results.csv");
  ASSERT_EQ(results.size(), 4u);
  EXPECT_EQ(results[0],
            "model,target,split_id,train_cells,test_cells,status,n_train,n_test,mae_train,mae_test,max_error_test,"
            "nmae_test");
  EXPECT_EQ(results[1].substr(0, 35), "oracle,soh,0,Cell3,Cell1;Cell2,ok,6");
  const auto summary = read_lines(dir / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0], "model,target,units,mae_train,mae_test,max_error_test,nmae_test,splits_ok,splits_failed");
  EXPECT_EQ(summary[1].substr(0, 13), "oracle,soh,%,");
  EXPECT_EQ(read_lines(dir / "pred.csv").size(), 1u + 3u * 12u);
}
