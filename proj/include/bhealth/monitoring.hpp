#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bhealth/baselines.hpp"
#include "bhealth/data_model.hpp"
#include "bhealth/ensemble.hpp"
#include "bhealth/eval.hpp"

namespace bhealth {

struct StrategyConfig {
  double k = 2.0;         // margin multiplier on the mixture stddev
  double n_min = 40.0;    // cycles
  double soh_eol = kSohEol;
  int epochs = 20;        // GPRn Adam budget
  int max_iterations = 50;

  void validate() const;
};

enum class Decision { operate, stop };
std::string to_string(Decision d);

enum class StopReason { rul_threshold, soh_threshold, data_exhausted, iteration_cap };
std::string to_string(StopReason r);

struct MonitoringEvent {
  int step = 0;
  double requested_cycle = 0.0;  // cycles actually operated so far
  int measured_cycle = 0;        // diagnostic the measurement snapped to
  double rul_mean = 0.0;
  double rul_sigma = 0.0;
  double rul_cons = 0.0;         // rul_mean - k * rul_sigma
  double soh_est = 0.0;          // fraction
  Decision decision = Decision::operate;
};

struct MonitoringTrace {
  std::string cell_id;
  double k = 0.0;
  std::vector<MonitoringEvent> events;
  StopReason reason = StopReason::rul_threshold;
  double stop_cycle = 0.0;
};

struct KPIReport {
  double utilization = 0.0;  // U = stop / n_eol
  int steps = 0;             // M
  bool overcycled = false;
  double delta_n_eol = 0.0;    // n_eol - stop, cycles
  double delta_soh_eol = 0.0;  // SoH(stop) - soh_eol
};

/// What the loop sees at one measurement: the snapped diagnostic and its
/// features.
struct Measurement {
  std::size_t diag_index = 0;
  int cycle = 0;
  FeatureVector features;
};

/// RUL estimate (mean, stddev) in cycles and SoH estimate as a fraction.
struct RulEstimate {
  double mean = 0.0;
  double sigma = 0.0;
};
using RulEstimator = std::function<RulEstimate(const Measurement&)>;
using SohEstimator = std::function<double(const Measurement&)>;

/// Replays the measure / operate loop on a recorded cell. Measurements snap
/// to the nearest diagnostic whose features could be extracted (ties go to
/// the earlier one). A request past the last diagnostic ends the run there.
MonitoringTrace simulate(const CellHistory& cell, const RulEstimator& rul, const SohEstimator& soh,
                         const StrategyConfig& cfg, const IcaConfig& ica = {});

/// GPRn on RUL for the margin, a SoH regressor trained on percent.
MonitoringTrace simulate(const CellHistory& cell, const GPRnModel& gprn, const FittedRegressor& soh_model,
                         const StrategyConfig& cfg, const IcaConfig& ica = {});

KPIReport compute_kpis(const MonitoringTrace& trace, const CellHistory& cell, double soh_eol = kSohEol);

/// Mean KPIs for one cell or over the fleet. p_over is the overcycled
/// fraction.
struct KpiSummary {
  std::string cell_id;  // empty for fleet means
  double utilization = 0.0;
  double steps = 0.0;
  double p_over = 0.0;
  double delta_n_eol = 0.0;
  double delta_soh_eol = 0.0;
  int runs = 0;
};

struct SweepRun {
  int split_id = 0;
  int epochs = 0;
  double k = 0.0;
  MonitoringTrace trace;
  KPIReport kpi;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  /// Per (epochs, k): per-cell means over the splits holding the cell out,
  /// and the fleet mean of those.
  struct Entry {
    int epochs = 0;
    double k = 0.0;
    std::vector<KpiSummary> per_cell;
    KpiSummary fleet;
  };
  std::vector<Entry> entries;
};

/// For every split, trains GPRn (RUL) and the SoH regressor on the train
/// cells once per epoch budget and replays every test cell for each k.
SweepResult sweep(const std::vector<CellHistory>& fleet, const std::vector<double>& k_values,
                  const std::vector<int>& epoch_values, const StrategyConfig& base,
                  const RegressorSpec& soh_spec, const IcaConfig& ica = {},
                  const std::vector<SplitPlan>& plans = {});

SweepResult sweep_k(const std::vector<CellHistory>& fleet, const std::vector<double>& k_values,
                    const StrategyConfig& base, const RegressorSpec& soh_spec, const IcaConfig& ica = {});

void write_trace_csv(const MonitoringTrace& trace, const std::filesystem::path& file);
/// Per-cell rows of one entry plus a "fleet" row.
void write_kpi_csv(const SweepResult::Entry& entry, const std::filesystem::path& file);
/// k,U,M,P_over,dN_eol,dSoH_eol, optionally keyed by epochs as well.
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& file, bool with_epochs = false);

}  // namespace bhealth
