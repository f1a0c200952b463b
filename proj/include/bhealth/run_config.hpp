#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bhealth/baselines.hpp"
#include "bhealth/data_model.hpp"
#include "bhealth/monitoring.hpp"

namespace bhealth {

/// Environment variable that overrides `dataset_dir`.
inline constexpr const char* kDatasetEnvVar = "BHEALTH_DATASET_DIR";

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir = "out";
  Target target = Target::soh;
  std::uint64_t seed = 7;
  std::vector<RegressorSpec> regressors;  // seeds follow `seed`
  StrategyConfig strategy;
  std::vector<double> k_values{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0};
  std::vector<int> epoch_values{5, 10, 20, 40, 80};
  IcaConfig ica;

  static RunConfig defaults();
  /// Throws ValidationError on out-of-range values.
  void validate() const;
  /// The SVR spec used as the SoH estimator while monitoring.
  RegressorSpec soh_estimator_spec() const;
};

/// Strict reader: unknown keys at any level are rejected. Missing keys keep
/// their defaults.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& file);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const RegressorSpec& spec);
/// `seed` is used when the object carries none.
RegressorSpec regressor_from_json(const nlohmann::json& j, std::uint64_t seed);

/// Applies the dataset override from the environment, if set and non-empty.
void apply_environment(RunConfig& config);

}  // namespace bhealth
