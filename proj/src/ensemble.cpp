#include "bhealth/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "bhealth/errors.hpp"

namespace bhealth {

double MixturePrediction::stddev() const { return std::sqrt(std::max(variance, 0.0)); }

MixturePrediction mixture_moments(const Eigen::VectorXd& weights, const Eigen::VectorXd& means,
                                  const Eigen::VectorXd& variances) {
  if (weights.size() == 0 || weights.size() != means.size() || weights.size() != variances.size())
    throw ValidationError("mixture: weights, means and variances must have equal non-zero length");
  MixturePrediction p;
  p.expert_means = means;
  p.expert_vars = variances;
  p.mean = weights.dot(means);
  p.epistemic = weights.dot(variances);
  p.aleatoric = weights.dot((means.array() - p.mean).square().matrix());
  p.variance = p.epistemic + p.aleatoric;
  return p;
}

GPRnModel train_gprn(const std::vector<CellDataset>& per_cell_data, int epochs, const AdamSettings& adam) {
  if (per_cell_data.empty()) throw ValidationError("GPRn needs at least one training cell");
  if (epochs < 0) throw ValidationError("GPRn epoch budget must be non-negative");
  GPRnModel model;
  model.epochs_used = epochs;
  for (const auto& cell : per_cell_data) {
    if (cell.x.rows() < 2)
      throw ValidationError("GPRn: cell " + cell.cell_id + " has fewer than 2 samples");
    try {
      const auto init = GPHyper::initial(cell.x.cols());
      const auto tuned = optimize_hyperparams(cell.x, cell.y, init, epochs, adam);
      model.experts.push_back({cell.cell_id, fit_gp(cell.x, cell.y, tuned.hyper)});
    } catch (const std::exception& e) {
      throw TrainingError("GPRn expert for cell " + cell.cell_id + " failed: " + e.what());
    }
  }
  const auto t = static_cast<Eigen::Index>(model.experts.size());
  model.weights = Eigen::VectorXd::Constant(t, 1.0 / static_cast<double>(t));
  return model;
}

MixturePrediction predict_mixture(const GPRnModel& model, const Eigen::VectorXd& x_star) {
  const auto t = static_cast<Eigen::Index>(model.experts.size());
  Eigen::VectorXd means(t), vars(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto p = predict(model.experts[static_cast<std::size_t>(i)].model, x_star);
    means[i] = p.mean;
    vars[i] = p.variance;
  }
  return mixture_moments(model.weights, means, vars);
}

EpochTuning tune_epochs(const std::vector<CellDataset>& per_cell_data,
                        const std::vector<int>& candidate_epochs,
                        const std::vector<std::vector<std::string>>& train_cell_sets,
                        const AdamSettings& adam) {
  if (candidate_epochs.empty()) throw ValidationError("tune_epochs: no candidates");
  if (train_cell_sets.empty()) throw ValidationError("tune_epochs: no training subsets");
  std::map<std::string, const CellDataset*> by_id;
  for (const auto& cell : per_cell_data) by_id[cell.cell_id] = &cell;

  EpochTuning out;
  out.candidates = candidate_epochs;
  for (int epochs : candidate_epochs) {
    double mae_sum = 0.0;
    for (const auto& subset : train_cell_sets) {
      std::vector<CellDataset> train;
      for (const auto& id : subset) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("tune_epochs: unknown cell " + id);
        train.push_back(*it->second);
      }
      const GPRnModel model = train_gprn(train, epochs, adam);
      double abs_err = 0.0;
      Eigen::Index rows = 0;
      for (const auto& cell : train) {
        for (Eigen::Index r = 0; r < cell.x.rows(); ++r) {
          abs_err += std::abs(predict_mixture(model, cell.x.row(r).transpose()).mean - cell.y[r]);
          ++rows;
        }
      }
      mae_sum += abs_err / static_cast<double>(rows);
    }
    out.train_mae.push_back(mae_sum / static_cast<double>(train_cell_sets.size()));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < candidate_epochs.size(); ++i) {
    const bool lower = out.train_mae[i] < out.train_mae[best];
    const bool tie_smaller = out.train_mae[i] == out.train_mae[best] && candidate_epochs[i] < candidate_epochs[best];
    if (lower || tie_smaller) best = i;
  }
  out.selected = candidate_epochs[best];
  return out;
}

// ---------------------------------------------------------------------------
// export / import

namespace {

using nlohmann::json;

json to_json_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_json_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vector(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd from_json_matrix(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = from_json_vector(j[r]);
    if (row.size() != cols) throw ValidationError("GPRn import: ragged training matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace

std::string export_gprn(const GPRnModel& model) {
  json doc;
  doc["schema"] = kGprnSchema;
  doc["epochs_used"] = model.epochs_used;
  doc["weights"] = to_json_vector(model.weights);
  doc["expert_variance_includes_noise"] = true;
  json experts = json::array();
  for (const auto& e : model.experts) {
    const GPModel& m = e.model;
    experts.push_back({
        {"cell_id", e.cell_id},
        {"feature_mean", to_json_vector(m.feature_scaler.mean)},
        {"feature_std", to_json_vector(m.feature_scaler.stddev)},
        {"target_mean", m.target_mean},
        {"target_std", m.target_std},
        {"log_signal_var", m.hyper.log_signal_var},
        {"log_lengthscales", to_json_vector(m.hyper.log_lengthscales)},
        {"log_noise_var", m.hyper.log_noise_var},
        {"jitter", m.jitter},
        {"train_inputs", to_json_matrix(m.train_inputs)},
        {"train_targets", to_json_vector(m.train_targets)},
    });
  }
  doc["experts"] = std::move(experts);
  return doc.dump(2);
}

GPRnModel import_gprn(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("GPRn import: ") + e.what());
  }
  if (!doc.contains("schema") || doc["schema"] != kGprnSchema)
    throw ValidationError("GPRn import: missing or unsupported schema tag");
  try {
    GPRnModel model;
    model.epochs_used = doc.at("epochs_used").get<int>();
    model.weights = from_json_vector(doc.at("weights"));
    for (const auto& je : doc.at("experts")) {
      GPModel base;
      base.feature_scaler.mean = from_json_vector(je.at("feature_mean"));
      base.feature_scaler.stddev = from_json_vector(je.at("feature_std"));
      base.target_mean = je.at("target_mean").get<double>();
      base.target_std = je.at("target_std").get<double>();
      const Eigen::Index d = base.feature_scaler.mean.size();
      base.train_inputs = from_json_matrix(je.at("train_inputs"), d);
      base.train_targets = from_json_vector(je.at("train_targets"));
      GPHyper hyper{je.at("log_signal_var").get<double>(), from_json_vector(je.at("log_lengthscales")),
                    je.at("log_noise_var").get<double>()};
      if (hyper.dims() != d || base.train_targets.size() != base.train_inputs.rows())
        throw ValidationError("GPRn import: inconsistent expert dimensions");
      model.experts.push_back({je.at("cell_id").get<std::string>(),
                               refit(base, hyper, je.at("jitter").get<double>())});
    }
    if (model.experts.empty() || model.weights.size() != static_cast<Eigen::Index>(model.experts.size()))
      throw ValidationError("GPRn import: weights do not match experts");
    if (std::abs(model.weights.sum() - 1.0) > 1e-12 || model.weights.minCoeff() < 0.0)
      throw ValidationError("GPRn import: weights must be non-negative and sum to one");
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("GPRn import: ") + e.what());
  }
}

}  // namespace bhealth
