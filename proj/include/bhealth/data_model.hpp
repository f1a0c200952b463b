#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bhealth/features.hpp"

namespace bhealth {

inline constexpr double kDefaultRatedCapacityMah = 740.0;
inline constexpr double kSohEol = 0.8;
/// RUL datasets extend this many cycles past the EOL crossing.
inline constexpr double kRulHorizonPastEol = 400.0;

struct Sample {
  double time_s = 0.0;
  double voltage_v = 0.0;
  double current_a = 0.0;  // positive while charging
  double charge_mah = 0.0;
  double temperature_c = 0.0;

  bool operator==(const Sample&) const = default;
};

struct DiagnosticCycle {
  std::string cell_id;
  int cycle_number = 0;
  std::vector<Sample> samples;
  double end_of_charge_capacity_mah = 0.0;
};

struct CellHistory {
  std::string cell_id;
  double rated_capacity_mah = kDefaultRatedCapacityMah;
  std::vector<DiagnosticCycle> diagnostics;
  std::vector<double> soh_by_diag;
  double n_eol = 0.0;
  std::vector<double> rul_by_diag;
};

enum class Target { soh, rul };

std::string to_string(Target target);
Target parse_target(const std::string& text);

struct LabeledSample {
  std::string cell_id;
  int cycle_number = 0;
  FeatureVector features;
  double soh = 0.0;  // fraction
  double rul = 0.0;  // cycles, negative past EOL
};

/// Value a regressor is trained on: SoH in percent, RUL in cycles.
double target_value(const LabeledSample& row, Target target);

// --- canonical CSV dataset -------------------------------------------------

std::vector<CellHistory> load_fleet(const std::filesystem::path& dataset_dir);

/// Writes `cells.csv` and one `diagnostics_<cell_id>.csv` per cell. Numbers
/// use 9 significant digits.
void write_fleet(const std::vector<CellHistory>& fleet,
                 const std::filesystem::path& dataset_dir);

// --- labels ------------------------------------------------------------------

CellHistory compute_soh_labels(CellHistory history);

/// n_eol is the first downward crossing of `soh_eol`, linearly interpolated
/// between the bracketing diagnostics. Throws EolUndetermined without one.
CellHistory compute_eol_and_rul(CellHistory history, double soh_eol = kSohEol);

/// Both label passes in order.
CellHistory label_cell(CellHistory history, double soh_eol = kSohEol);

/// SoH at an arbitrary cycle, linear between diagnostics, clamped at the ends.
double interpolate_soh(const CellHistory& history, double cycle);

// --- regression datasets ---------------------------------------------------

/// Features and labels for every diagnostic whose IC features could be
/// extracted. Diagnostics that fail extraction are skipped with a warning.
std::vector<LabeledSample> featurize_cell(const CellHistory& history,
                                          const IcaConfig& config);

std::vector<LabeledSample> featurize_fleet(const std::vector<CellHistory>& fleet,
                                           const IcaConfig& config);

/// SoH: rows with soh >= 0.8. RUL: rows with cycle_number <= n_eol + 400.
std::vector<LabeledSample> select_rows(const std::vector<LabeledSample>& rows,
                                       const std::vector<CellHistory>& fleet,
                                       Target target);

std::vector<LabeledSample> build_regression_dataset(
    const std::vector<CellHistory>& fleet, Target target,
    const IcaConfig& config = {});

/// Design matrix of features, regression targets, and the owning cell of
/// every row.
struct TrainingSet {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> cell_ids;

  Eigen::Index size() const { return x.rows(); }
};

struct CellDataset {
  std::string cell_id;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

TrainingSet make_training_set(const std::vector<LabeledSample>& rows, Target target);

/// Splits rows per cell, cells ordered by first appearance.
std::vector<CellDataset> group_by_cell(const TrainingSet& data);

// --- synthetic fleet -------------------------------------------------------

/// Ground-truth parameters behind one synthetic cell.
struct SyntheticCellParams {
  std::string cell_id;
  double initial_soh = 1.0;
  double fade_scale_cycles = 0.0;  // stretched-exponential time constant
  double fade_shape = 1.0;         // stretched-exponential exponent
  double peak_shift_v = 0.0;       // cell-specific offset of the main IC peak
  int last_cycle = 0;

  /// Programmed SoH fraction at a cycle count.
  double soh_at(double cycle) const;
};

std::vector<SyntheticCellParams> synthetic_fleet_params(int n_cells,
                                                        std::uint64_t seed);

/// Deterministic fleet of CC-CV diagnostic charges sampled at 1 Hz with
/// 1 mV Gaussian voltage noise. Labels are already computed.
std::vector<CellHistory> generate_synthetic_fleet(int n_cells, std::uint64_t seed);

}  // namespace bhealth
