#pragma once

#include <Eigen/Core>

namespace bhealth {

inline constexpr int kNumFeatures = 5;
using FeatureArray = Eigen::Matrix<double, kNumFeatures, 1>;

/// The five incremental-capacity features of one diagnostic charge.
struct FeatureVector {
  double f1_ic_peak = 0.0;          // mAh/V
  double f2_v_at_peak = 0.0;        // V
  double f3_ic_max_window = 0.0;    // mAh/V
  double f4_slope_max_window = 0.0; // (mAh/V)/V
  double f5_v_at_slope_max = 0.0;   // V

  FeatureArray as_array() const {
    FeatureArray a;
    a << f1_ic_peak, f2_v_at_peak, f3_ic_max_window, f4_slope_max_window,
        f5_v_at_slope_max;
    return a;
  }

  static FeatureVector from_array(const FeatureArray& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }

  bool operator==(const FeatureVector&) const = default;
};

/// Knobs of the IC pipeline. Defaults reproduce the reference setup.
struct IcaConfig {
  int filter_order = 4;
  double cutoff_hz = 0.01;
  double sample_rate_hz = 1.0;
  int smooth_window = 25;
  double window_low_v = 3.5;
  double window_high_v = 3.65;
  double cv_voltage_v = 4.2;
};

}  // namespace bhealth
