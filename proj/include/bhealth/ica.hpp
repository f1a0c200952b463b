#pragma once

#include <span>
#include <vector>

#include "bhealth/data_model.hpp"
#include "bhealth/features.hpp"

namespace bhealth {

/// Discrete IIR filter in transfer-function form, b/a with a[0] == 1.
struct FilterSpec {
  int order = 4;
  double cutoff_hz = 0.01;
  double sample_rate_hz = 1.0;
  std::vector<double> numerator;
  std::vector<double> denominator;
};

struct ICCurve {
  std::vector<double> voltage_v;     // strictly increasing
  std::vector<double> ic_mah_per_v;
};

/// Butterworth low-pass through the bilinear transform with pre-warping.
FilterSpec design_lowpass(int order, double cutoff_hz, double sample_rate_hz);

/// |H(e^{jw})| at a frequency in Hz.
double magnitude_response(const FilterSpec& spec, double frequency_hz);

/// Direct form II transposed filtering with explicit initial state.
std::vector<double> lfilter(const FilterSpec& spec, std::span<const double> x,
                            std::span<const double> initial_state);

/// Steady-state filter state for a unit step input.
std::vector<double> lfilter_steady_state(const FilterSpec& spec);

/// Forward-backward filtering with odd reflection padding of 3*order samples
/// on both ends and steady-state initial conditions.
std::vector<double> zero_phase_filter(const FilterSpec& spec,
                                      std::span<const double> signal);

/// Centered moving average on sample index; the window shrinks near the ends.
std::vector<double> moving_average(std::span<const double> x, int window);

/// Constant-current part of a charge: current within 2% of the median
/// current and voltage below the CV level minus 5 mV.
std::vector<Sample> extract_cc_segment(const DiagnosticCycle& cycle,
                                       double cv_voltage_v = 4.2);

ICCurve compute_ic_curve(const DiagnosticCycle& cycle, const FilterSpec& spec,
                         int smooth_window);

/// Total CC charge throughput (mAh) according to the charge column.
double cc_charge_throughput(const DiagnosticCycle& cycle, double cv_voltage_v = 4.2);

/// Trapezoidal integral of IC over voltage, in mAh.
double integrate_ic(const ICCurve& curve);

FeatureVector extract_features(const ICCurve& curve, double window_low_v = 3.5,
                               double window_high_v = 3.65);

FeatureVector featurize_cycle(const DiagnosticCycle& cycle, const IcaConfig& config);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// Ranks starting at 1, ties get the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace bhealth
