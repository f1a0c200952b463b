#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bhealth/data_model.hpp"
#include "bhealth/gp.hpp"

namespace bhealth {

/// One GP expert per training cell, combined as a uniformly weighted
/// Gaussian mixture.
struct GPRnModel {
  struct Expert {
    std::string cell_id;
    GPModel model;
  };
  std::vector<Expert> experts;
  Eigen::VectorXd weights;
  int epochs_used = 0;
};

struct MixturePrediction {
  double mean = 0.0;
  double variance = 0.0;
  double epistemic = 0.0;  // weighted mean of expert variances
  double aleatoric = 0.0;  // weighted variance of expert means
  Eigen::VectorXd expert_means;
  Eigen::VectorXd expert_vars;

  double stddev() const;
};

/// Moments of sum_i w_i N(m_i, s2_i).
MixturePrediction mixture_moments(const Eigen::VectorXd& weights, const Eigen::VectorXd& means,
                                  const Eigen::VectorXd& variances);

/// Per-cell Adam budget of `epochs` steps on the LML, then a final fit.
/// Weights are 1/T.
GPRnModel train_gprn(const std::vector<CellDataset>& per_cell_data, int epochs,
                     const AdamSettings& adam = {});

MixturePrediction predict_mixture(const GPRnModel& model, const Eigen::VectorXd& x_star);

struct EpochTuning {
  int selected = 0;
  std::vector<int> candidates;
  std::vector<double> train_mae;  // per candidate, mean over splits
};

/// Picks the Adam budget with the smallest training-data MAE, averaged over
/// the given training-cell subsets. Ties go to the smaller budget.
EpochTuning tune_epochs(const std::vector<CellDataset>& per_cell_data,
                        const std::vector<int>& candidate_epochs,
                        const std::vector<std::vector<std::string>>& train_cell_sets,
                        const AdamSettings& adam = {});

inline constexpr const char* kGprnSchema = "bhealth.gprn/1";

/// Structured text export: schema tag, weights, scalers, log-hyperparameters
/// and standardized training arrays for every expert.
std::string export_gprn(const GPRnModel& model);
GPRnModel import_gprn(const std::string& text);

}  // namespace bhealth
