#include "bhealth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "bhealth/errors.hpp"
#include "bhealth/report.hpp"

namespace bhealth {

std::vector<SplitPlan> enumerate_splits(const std::vector<std::string>& cell_ids, int test_size) {
  const int n = static_cast<int>(cell_ids.size());
  if (std::set<std::string>(cell_ids.begin(), cell_ids.end()).size() != cell_ids.size())
    throw ValidationError("enumerate_splits: duplicate cell ids");
  if (test_size < 1 || n < test_size + 1)
    throw ValidationError("enumerate_splits: need at least " + std::to_string(test_size + 1) + " cells, got " +
                          std::to_string(n));

  std::vector<SplitPlan> plans;
  std::vector<int> pick(static_cast<std::size_t>(test_size));
  for (int i = 0; i < test_size; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    SplitPlan plan;
    plan.id = static_cast<int>(plans.size());
    for (int c = 0; c < n; ++c) {
      const bool test = std::find(pick.begin(), pick.end(), c) != pick.end();
      (test ? plan.test_cells : plan.train_cells).push_back(cell_ids[static_cast<std::size_t>(c)]);
    }
    plans.push_back(std::move(plan));
    // next combination
    int i = test_size - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - test_size + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < test_size; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return plans;
}

double nmae(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths) {
  if (predictions.size() != truths.size()) throw ValidationError("nmae: length mismatch");
  if (truths.size() < 2) throw ValidationError("nmae: needs at least 2 truths");
  const double range = truths.maxCoeff() - truths.minCoeff();
  if (!(range > 0.0)) throw ValidationError("nmae: truths have zero range, metric undefined");
  return (predictions - truths).cwiseAbs().mean() / range;
}

std::string target_units(Target target) { return target == Target::soh ? "%" : "cycles"; }

std::vector<std::string> fleet_cell_ids(const std::vector<CellHistory>& fleet) {
  std::vector<std::string> ids;
  for (const auto& c : fleet) ids.push_back(c.cell_id);
  return ids;
}

namespace {

std::vector<LabeledSample> rows_of(const std::vector<LabeledSample>& rows, const std::vector<std::string>& cells) {
  std::vector<LabeledSample> out;
  for (const auto& r : rows)
    if (std::find(cells.begin(), cells.end(), r.cell_id) != cells.end()) out.push_back(r);
  return out;
}

}  // namespace

MetricsReport evaluate_with(const std::string& model_name, const Fitter& fit, const std::vector<LabeledSample>& rows,
                            Target target, const std::vector<SplitPlan>& plans) {
  MetricsReport report;
  report.model = model_name;
  report.target = target;
  for (const auto& plan : plans) {
    SplitMetrics m;
    m.split_id = plan.id;
    m.train_cells = plan.train_cells;
    m.test_cells = plan.test_cells;
    const TrainingSet train = make_training_set(rows_of(rows, plan.train_cells), target);
    const auto test_rows = rows_of(rows, plan.test_cells);
    const TrainingSet test = make_training_set(test_rows, target);
    m.n_train = train.size();
    m.n_test = test.size();
    try {
      if (test.size() == 0) throw ValidationError("split has no test rows");
      const auto model = fit(train);
      const Eigen::VectorXd pred_train = model->predict_all(train.x);
      const Eigen::VectorXd pred_test = model->predict_all(test.x);
      if (!pred_train.allFinite() || !pred_test.allFinite()) throw NumericalError("non-finite prediction");
      m.mae_train = (pred_train - train.y).cwiseAbs().mean();
      m.mae_test = (pred_test - test.y).cwiseAbs().mean();
      m.max_error_test = (pred_test - test.y).cwiseAbs().maxCoeff();
      m.nmae_test = nmae(pred_test, test.y);
      for (std::size_t i = 0; i < test_rows.size(); ++i)
        m.test_predictions.push_back({test_rows[i].cell_id, test_rows[i].cycle_number,
                                      test.y[static_cast<Eigen::Index>(i)],
                                      pred_test[static_cast<Eigen::Index>(i)]});
      m.ok = true;
    } catch (const std::exception& e) {
      m.ok = false;
      m.error = e.what();
      log_warning(model_name + " split " + std::to_string(plan.id) + " failed: " + e.what());
    }
    report.splits.push_back(std::move(m));
  }
  std::sort(report.splits.begin(), report.splits.end(),
            [](const SplitMetrics& a, const SplitMetrics& b) { return a.split_id < b.split_id; });

  int ok = 0;
  for (const auto& s : report.splits) {
    if (!s.ok) {
      ++report.failed_splits;
      continue;
    }
    ++ok;
    report.mae_train += s.mae_train;
    report.mae_test += s.mae_test;
    report.nmae_test += s.nmae_test;
    report.max_error_test = std::max(report.max_error_test, s.max_error_test);
  }
  if (ok > 0) {
    report.mae_train /= ok;
    report.mae_test /= ok;
    report.nmae_test /= ok;
  } else {
    report.mae_train = report.mae_test = report.nmae_test = report.max_error_test =
        std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

MetricsReport evaluate(const RegressorSpec& spec, const std::vector<LabeledSample>& rows, Target target,
                       const std::vector<SplitPlan>& plans) {
  spec.validate();
  return evaluate_with(spec.name(), [&spec](const TrainingSet& t) { return fit_regressor(spec, t); }, rows, target,
                       plans);
}

MetricsReport evaluate(const RegressorSpec& spec, const std::vector<CellHistory>& fleet, Target target,
                       const IcaConfig& config) {
  const auto rows = build_regression_dataset(fleet, target, config);
  return evaluate(spec, rows, target, enumerate_splits(fleet_cell_ids(fleet)));
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ";") + id;
  return s;
}

}  // namespace

void write_results_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file) {
  CsvWriter csv(file, {"model", "target", "split_id", "train_cells", "test_cells", "status", "n_train", "n_test",
                       "mae_train", "mae_test", "max_error_test", "nmae_test"});
  for (const auto& r : reports) {
    for (const auto& s : r.splits) {
      csv.cell(r.model).cell(to_string(r.target)).cell(s.split_id).cell(join_ids(s.train_cells))
          .cell(join_ids(s.test_cells)).cell(s.ok ? std::string("ok") : "failed")
          .cell(static_cast<long long>(s.n_train)).cell(static_cast<long long>(s.n_test));
      if (s.ok)
        csv.cell(s.mae_train).cell(s.mae_test).cell(s.max_error_test).cell(s.nmae_test);
      else
        csv.cell("").cell("").cell("").cell("");
      csv.end_row();
    }
  }
  csv.close();
}

void write_predictions_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file) {
  CsvWriter csv(file, {"model", "target", "split_id", "cell_id", "cycle_number", "truth", "prediction"});
  for (const auto& r : reports)
    for (const auto& s : r.splits)
      for (const auto& p : s.test_predictions) {
        csv.cell(r.model).cell(to_string(r.target)).cell(s.split_id).cell(p.cell_id).cell(p.cycle_number)
            .cell(p.truth).cell(p.prediction);
        csv.end_row();
      }
  csv.close();
}

void write_summary_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& file) {
  CsvWriter csv(file, {"model", "target", "units", "mae_train", "mae_test", "max_error_test", "nmae_test",
                       "splits_ok", "splits_failed"});
  for (const auto& r : reports) {
    csv.cell(r.model).cell(to_string(r.target)).cell(target_units(r.target)).cell(r.mae_train).cell(r.mae_test)
        .cell(r.max_error_test).cell(r.nmae_test).cell(r.succeeded_splits()).cell(r.failed_splits);
    csv.end_row();
  }
  csv.close();
}

}  // namespace bhealth
