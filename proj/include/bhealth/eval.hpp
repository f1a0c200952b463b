#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bhealth/baselines.hpp"
#include "bhealth/data_model.hpp"

namespace bhealth {

struct SplitPlan {
  int id = 0;
  std::vector<std::string> train_cells;
  std::vector<std::string> test_cells;
};

/// Every unordered `test_size` subset as a test set, in lexicographic order of
/// positions in `cell_ids`. Needs at least test_size + 1 distinct ids.
std::vector<SplitPlan> enumerate_splits(const std::vector<std::string>& cell_ids, int test_size = 2);

/// Mean |error| divided by the range of the truths.
double nmae(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths);

struct PredictionRow {
  std::string cell_id;
  int cycle_number = 0;
  double truth = 0.0;
  double prediction = 0.0;
};

struct SplitMetrics {
  int split_id = 0;
  std::vector<std::string> train_cells;
  std::vector<std::string> test_cells;
  bool ok = false;
  std::string error;
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
  double mae_train = 0.0;
  double mae_test = 0.0;
  double max_error_test = 0.0;
  double nmae_test = 0.0;
  std::vector<PredictionRow> test_predictions;
};

struct MetricsReport {
  std::string model;
  Target target = Target::soh;
  std::vector<SplitMetrics> splits;  // sorted by split id
  // Aggregates over succeeded splits: means, except max_error_test which is
  // the largest per-split value.
  double mae_train = 0.0;
  double mae_test = 0.0;
  double max_error_test = 0.0;
  double nmae_test = 0.0;
  int failed_splits = 0;

  int succeeded_splits() const { return static_cast<int>(splits.size()) - failed_splits; }
};

/// Units of target_value(): "%" for SoH, "cycles" for RUL.
std::string target_units(Target target);

using Fitter = std::function<std::unique_ptr<FittedRegressor>(const TrainingSet&)>;

/// Core harness. `rows` is the target-specific dataset. A split whose fit
/// throws is marked failed and left out of the aggregates.
MetricsReport evaluate_with(const std::string& model_name, const Fitter& fit, const std::vector<LabeledSample>& rows,
                            Target target, const std::vector<SplitPlan>& plans);

MetricsReport evaluate(const RegressorSpec& spec, const std::vector<LabeledSample>& rows, Target target,
                       const std::vector<SplitPlan>& plans);

/// Builds the target dataset and the splits from the fleet, then evaluates.
MetricsReport evaluate(const RegressorSpec& spec, const std::vector<CellHistory>& fleet, Target target,
                       const IcaConfig& config = {});

/// Fleet cell ids in dataset order.
std::vector<std::string> fleet_cell_ids(const std::vector<CellHistory>& fleet);

/// One row per (model, split).
void write_results_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file);
/// Held-out predictions of every split, for predicted-vs-true plots.
void write_predictions_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file);
/// One row per model.
void write_summary_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file);

}  // namespace bhealth
