#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "bhealth/data_model.hpp"
#include "bhealth/ensemble.hpp"
#include "bhealth/gp.hpp"

namespace bhealth {

enum class RegressorKind { poly1d, polymulti, ffnn, svr, gpr, gpr_loco, gprn };

std::string to_string(RegressorKind kind);
RegressorKind parse_regressor_kind(const std::string& text);
/// Order used in reports.
const std::vector<RegressorKind>& all_regressor_kinds();

struct Poly1dParams {
  int degree = 3;
};

struct PolyMultiParams {
  int degree = 3;
  int interaction_degree = 2;  // 0 or 1 disables the x_i * x_j terms
  double ridge = 1e-8;
};

struct FfnnParams {
  std::vector<int> hidden{64, 64};
  int epochs = 1000;
  double learn_rate = 1e-3;
};

/// C and epsilon act on standardized targets; lengthscales on standardized
/// features (empty means all ones).
struct SvrParams {
  double c = 10.0;
  double epsilon = 0.01;
  std::vector<double> lengthscales;
  double tolerance = 1e-3;
  long max_iterations = 100000;
};

struct GprParams {
  int epochs = 200;
  double learn_rate = 0.05;
};

/// Candidate grid in standardized units; one lengthscale shared by all
/// feature dimensions.
struct GprLocoParams {
  std::vector<double> signal_vars{0.5, 1.0, 2.0};
  std::vector<double> lengthscales{0.3, 1.0, 3.0};
  std::vector<double> noise_vars{1e-4, 1e-2, 1e-1};
};

struct GprnParams {
  int epochs = 20;
  double learn_rate = 0.05;
};

using RegressorParams = std::variant<Poly1dParams, PolyMultiParams, FfnnParams, SvrParams, GprParams,
                                     GprLocoParams, GprnParams>;

struct RegressorSpec {
  RegressorKind kind = RegressorKind::svr;
  RegressorParams params = SvrParams{};
  std::uint64_t seed = 0;

  static RegressorSpec defaults(RegressorKind kind, std::uint64_t seed = 0);
  /// Throws ValidationError when params do not match kind or are out of range.
  void validate() const;
  std::string name() const { return to_string(kind); }
};

class FittedRegressor {
 public:
  virtual ~FittedRegressor() = default;
  virtual double predict(const Eigen::VectorXd& x) const = 0;
  Eigen::VectorXd predict_all(const Eigen::MatrixXd& x) const;
  const RegressorSpec& spec() const { return spec_; }

 protected:
  explicit FittedRegressor(RegressorSpec spec) : spec_(std::move(spec)) {}

 private:
  RegressorSpec spec_;
};

// --- polynomial -------------------------------------------------------------

class Poly1dRegressor final : public FittedRegressor {
 public:
  Poly1dRegressor(RegressorSpec spec, double mean, double stddev, Eigen::VectorXd coefficients);
  double predict(const Eigen::VectorXd& x) const override;
  /// Coefficients on the standardized F1, constant term first.
  const Eigen::VectorXd& coefficients() const { return coef_; }
  /// Same polynomial expanded in raw F1 units.
  Eigen::VectorXd raw_coefficients() const;

 private:
  double mean_, stddev_;
  Eigen::VectorXd coef_;
};

/// Cubic (by default) least squares on F1, the first feature column.
std::unique_ptr<Poly1dRegressor> fit_poly1d(const TrainingSet& data, const Poly1dParams& params = {},
                                            std::uint64_t seed = 0);

class PolyMultiRegressor final : public FittedRegressor {
 public:
  PolyMultiRegressor(RegressorSpec spec, Scaler scaler, Eigen::VectorXd coefficients);
  double predict(const Eigen::VectorXd& x) const override;
  const Eigen::VectorXd& coefficients() const { return coef_; }
  /// Basis term names matching coefficients(), e.g. "1", "x0^2", "x1*x3".
  std::vector<std::string> basis_names() const;

 private:
  Scaler scaler_;
  Eigen::VectorXd coef_;
};

/// Per-feature powers up to `degree` plus pairwise products of distinct
/// standardized features, ridge least squares.
std::unique_ptr<PolyMultiRegressor> fit_polymulti(const TrainingSet& data, const PolyMultiParams& params = {},
                                                  std::uint64_t seed = 0);

/// Polynomial basis for standardized inputs, intercept first.
Eigen::MatrixXd polymulti_basis(const Eigen::MatrixXd& z, int degree, int interaction_degree);

// --- feed-forward network ---------------------------------------------------

class FfnnRegressor final : public FittedRegressor {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };
  FfnnRegressor(RegressorSpec spec, Scaler scaler, double y_mean, double y_std, std::vector<Layer> layers,
                std::vector<double> loss_trace);
  double predict(const Eigen::VectorXd& x) const override;
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<double>& loss_trace() const { return loss_trace_; }

 private:
  Scaler scaler_;
  double y_mean_, y_std_;
  std::vector<Layer> layers_;
  std::vector<double> loss_trace_;
};

/// ReLU MLP trained full batch with Adam on the mean-squared error.
std::unique_ptr<FfnnRegressor> fit_ffnn(const TrainingSet& data, const FfnnParams& params = {},
                                        std::uint64_t seed = 0);

// --- support vector regression ----------------------------------------------

class SvrRegressor final : public FittedRegressor {
 public:
  struct Solution {
    Eigen::VectorXd coef;  // alpha - alpha* per training row
    double bias = 0.0;
    double dual_objective = 0.0;    // maximized dual value
    double primal_objective = 0.0;  // 0.5 |w|^2 + C sum(eps-insensitive loss)
    long iterations = 0;
    int support_vectors = 0;
  };
  SvrRegressor(RegressorSpec spec, Scaler scaler, double y_mean, double y_std, Eigen::MatrixXd train_z,
               Eigen::VectorXd lengthscales, Solution solution);
  double predict(const Eigen::VectorXd& x) const override;
  const Solution& solution() const { return sol_; }
  double duality_gap() const { return sol_.primal_objective - sol_.dual_objective; }

 private:
  Scaler scaler_;
  double y_mean_, y_std_;
  Eigen::MatrixXd train_z_;
  Eigen::VectorXd lengthscales_;
  Solution sol_;
};

/// Epsilon-insensitive SVR with an ARD-RBF kernel, dual solved by SMO with
/// second-order working-set selection.
std::unique_ptr<SvrRegressor> fit_svr(const TrainingSet& data, const SvrParams& params = {},
                                      std::uint64_t seed = 0);

// --- Gaussian-process regressors --------------------------------------------

class GprRegressor final : public FittedRegressor {
 public:
  GprRegressor(RegressorSpec spec, GPModel model) : FittedRegressor(std::move(spec)), model_(std::move(model)) {}
  double predict(const Eigen::VectorXd& x) const override { return bhealth::predict(model_, x).mean; }
  const GPModel& model() const { return model_; }

 private:
  GPModel model_;
};

/// One GP on all training rows; hyperparameters from `epochs` Adam steps.
std::unique_ptr<GprRegressor> fit_pooled_gpr(const TrainingSet& data, const GprParams& params = {},
                                             std::uint64_t seed = 0);

class GprLocoRegressor final : public FittedRegressor {
 public:
  struct Candidate {
    GPHyper hyper;
    double loco_mae = 0.0;
  };
  GprLocoRegressor(RegressorSpec spec, GPModel model, std::vector<Candidate> candidates, std::size_t winner)
      : FittedRegressor(std::move(spec)), model_(std::move(model)), candidates_(std::move(candidates)), winner_(winner) {}
  double predict(const Eigen::VectorXd& x) const override { return bhealth::predict(model_, x).mean; }
  const GPModel& model() const { return model_; }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  std::size_t winner() const { return winner_; }

 private:
  GPModel model_;
  std::vector<Candidate> candidates_;
  std::size_t winner_;
};

/// Grid search on leave-one-cell-out MAE, then a refit on every training cell.
std::unique_ptr<GprLocoRegressor> fit_gpr_loco(const TrainingSet& data, const GprLocoParams& params = {},
                                               std::uint64_t seed = 0);

class GprnRegressor final : public FittedRegressor {
 public:
  GprnRegressor(RegressorSpec spec, GPRnModel model) : FittedRegressor(std::move(spec)), model_(std::move(model)) {}
  double predict(const Eigen::VectorXd& x) const override { return predict_mixture(model_, x).mean; }
  MixturePrediction predict_distribution(const Eigen::VectorXd& x) const { return predict_mixture(model_, x); }
  const GPRnModel& model() const { return model_; }

 private:
  GPRnModel model_;
};

std::unique_ptr<GprnRegressor> fit_gprn_regressor(const TrainingSet& data, const GprnParams& params = {},
                                                  std::uint64_t seed = 0);

/// Dispatches on spec.kind after validating the spec.
std::unique_ptr<FittedRegressor> fit_regressor(const RegressorSpec& spec, const TrainingSet& data);

}  // namespace bhealth
