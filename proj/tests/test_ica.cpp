#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bhealth/errors.hpp"
#include "bhealth/ica.hpp"
#include "fixtures.hpp"

using namespace bhealth;

// Reference coefficients below come from scipy.signal.butter / lfilter.

TEST(Butterworth, FourthOrderMatchesReference) {
  const auto f = design_lowpass(4, 0.01, 1.0);
  const std::vector<double> b{8.984861463970648e-07, 3.593944585588259e-06, 5.390916878382389e-06,
                              3.593944585588259e-06, 8.984861463970648e-07};
  const std::vector<double> a{1.0, -3.835825540647348, 5.520819136622229, -3.5335352194630145, 0.848555999266477};
  ASSERT_EQ(f.numerator.size(), 5u);
  ASSERT_EQ(f.denominator.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(f.numerator[i], b[i], 1e-10 * std::abs(b[i]));
    EXPECT_NEAR(f.denominator[i], a[i], 1e-10);
  }
}

TEST(Butterworth, ThirdOrderAtOtherRate) {
  const auto f = design_lowpass(3, 2.0, 50.0);
  const std::vector<double> b{0.0015670103505882685, 0.004701031051764806, 0.004701031051764806,
                              0.0015670103505882685};
  const std::vector<double> a{1.0, -2.4986083446911773, 2.1152541270031584, -0.6041096995072747};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(f.numerator[i], b[i], 1e-12);
    EXPECT_NEAR(f.denominator[i], a[i], 1e-12);
  }
}

TEST(Butterworth, DcGainOneAndHalfPowerAtCutoff) {
  for (int order : {1, 2, 4, 6}) {
    const auto f = design_lowpass(order, 0.01, 1.0);
    EXPECT_NEAR(magnitude_response(f, 0.0), 1.0, 1e-12);
    EXPECT_NEAR(magnitude_response(f, 0.01), 1.0 / std::sqrt(2.0), 1e-6);
  }
  EXPECT_NEAR(magnitude_response(design_lowpass(2, 0.1, 1.0), 0.05), 0.9729115, 1e-6);
}

TEST(Butterworth, InvalidDesignRejected) {
  EXPECT_THROW(design_lowpass(0, 0.01, 1.0), ValidationError);
  EXPECT_THROW(design_lowpass(4, 0.5, 1.0), ValidationError);
  EXPECT_THROW(design_lowpass(4, -0.1, 1.0), ValidationError);
}

namespace {

std::vector<double> ramp_sine(double offset) {
  std::vector<double> x(50);
  for (int i = 0; i < 50; ++i) x[i] = offset + std::sin(0.3 * i) + 0.01 * i;
  return x;
}

}  // namespace

TEST(Lfilter, ZeroStateMatchesReference) {
  const auto f = design_lowpass(2, 0.1, 1.0);
  const auto x = ramp_sine(0.0);
  const auto y = lfilter(f, x, std::vector<double>(2, 0.0));
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 0.020608949218986507, 1e-12);
  EXPECT_NEAR(y[10], 0.8046217751685992, 1e-12);
  EXPECT_NEAR(y[49], 1.4366639568848463, 1e-12);
}

TEST(Lfilter, SteadyStateMatchesReference) {
  const auto f = design_lowpass(2, 0.1, 1.0);
  const auto zi = lfilter_steady_state(f);
  ASSERT_EQ(zi.size(), 2u);
  EXPECT_NEAR(zi[0], 0.9325447261109279, 1e-12);
  EXPECT_NEAR(zi[1], -0.34534632420711675, 1e-12);

  const auto x = ramp_sine(1.0);
  std::vector<double> z0{zi[0] * x[0], zi[1] * x[0]};
  const auto y = lfilter(f, x, z0);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0206089492189865, 1e-12);
  EXPECT_NEAR(y[10], 1.8046217751685996, 1e-12);
  EXPECT_NEAR(y[49], 2.436663956884846, 1e-12);
}

TEST(ZeroPhase, ConstantPassesUnchanged) {
  const auto f = design_lowpass(4, 0.01, 1.0);
  const std::vector<double> x(500, 3.7);
  for (double y : zero_phase_filter(f, x)) EXPECT_NEAR(y, 3.7, 1e-9);
}

TEST(ZeroPhase, ReversalCommutes) {
  const auto f = design_lowpass(4, 0.01, 1.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> x(2000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.4 + 1e-4 * static_cast<double>(i) + noise(rng);
  std::vector<double> xr(x.rbegin(), x.rend());
  const auto y = zero_phase_filter(f, x);
  const auto yr = zero_phase_filter(f, xr);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], yr[x.size() - 1 - i], 1e-9);
}

TEST(ZeroPhase, NoLagOnSlowSine) {
  const auto f = design_lowpass(4, 0.01, 1.0);
  const int n = 6000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * 0.001 * i);
  const auto y = zero_phase_filter(f, x);
  int best_lag = 999;
  double best = -1e300;
  for (int lag = -50; lag <= 50; ++lag) {
    double acc = 0.0;
    for (int i = 500; i < n - 500; ++i) acc += x[i] * y[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 0);
}

TEST(ZeroPhase, TooShortSignalRejected) {
  const auto f = design_lowpass(4, 0.01, 1.0);
  EXPECT_THROW(zero_phase_filter(f, std::vector<double>(12, 1.0)), ValidationError);
}

TEST(MovingAverage, ShrinksAtEdges) {
  const std::vector<double> x{1, 2, 3, 4, 10};
  const auto y = moving_average(x, 3);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
  EXPECT_DOUBLE_EQ(y[2], 3.0);
  EXPECT_DOUBLE_EQ(y[3], 17.0 / 3.0);
  EXPECT_DOUBLE_EQ(y[4], 10.0);
  EXPECT_THROW(moving_average(x, 4), ValidationError);
}

namespace {

// CC charge at 0.74 A with a linear voltage ramp, then a CV tail.
DiagnosticCycle linear_charge(double volts_per_s) {
  DiagnosticCycle d;
  d.cell_id = "lin";
  double v = 3.4, q = 0.0;
  int t = 0;
  for (; v < 4.19; ++t) {
    d.samples.push_back({static_cast<double>(t), v, 0.74, q, 25.0});
    v += volts_per_s;
    q += 0.74 / 3.6;
  }
  for (int k = 0; k < 200; ++k, ++t) {
    const double i = 0.74 * std::exp(-k / 60.0);
    d.samples.push_back({static_cast<double>(t), 4.2, i, q, 25.0});
    q += i / 3.6;
  }
  d.end_of_charge_capacity_mah = q;
  return d;
}

}  // namespace

TEST(IcCurve, ConstantSlopeGivesFlatCurve) {
  const auto d = linear_charge(1e-4);
  const auto curve = compute_ic_curve(d, design_lowpass(4, 0.01, 1.0), 25);
  const double expected = 0.74 / (3.6 * 1e-4);
  const std::size_t n = curve.voltage_v.size();
  ASSERT_GT(n, 1000u);
  for (std::size_t i = 1; i < n; ++i) EXPECT_GT(curve.voltage_v[i], curve.voltage_v[i - 1]);
  for (std::size_t i = n / 5; i < 4 * n / 5; ++i) EXPECT_NEAR(curve.ic_mah_per_v[i], expected, 1e-3 * expected);
}

TEST(IcCurve, CcSegmentExcludesCvTail) {
  const auto d = linear_charge(1e-4);
  const auto cc = extract_cc_segment(d);
  ASSERT_FALSE(cc.empty());
  for (const auto& s : cc) {
    EXPECT_LT(s.voltage_v, 4.195);
    EXPECT_NEAR(s.current_a, 0.74, 1e-12);
  }
  EXPECT_NEAR(cc_charge_throughput(d), cc.back().charge_mah - cc.front().charge_mah, 0.0);
}

TEST(IcCurve, TooShortCcSegmentIsFeatureError) {
  DiagnosticCycle d;
  for (int t = 0; t < 5; ++t) d.samples.push_back({double(t), 3.5 + 0.01 * t, 0.74, 0.2 * t, 25});
  EXPECT_THROW(compute_ic_curve(d, design_lowpass(4, 0.01, 1.0), 25), FeatureError);
}

TEST(IcCurve, ChargeConservedOnSyntheticFleet) {
  const auto& fleet = bhealth::testing::seed7_fleet();
  const auto spec = design_lowpass(4, 0.01, 1.0);
  for (std::size_t c = 0; c < fleet.size(); ++c)
    for (std::size_t d = 0; d < fleet[c].diagnostics.size(); d += 7) {
      const auto& diag = fleet[c].diagnostics[d];
      const auto curve = compute_ic_curve(diag, spec, 25);
      const double q = cc_charge_throughput(diag);
      EXPECT_LE(std::abs(integrate_ic(curve) - q) / q, 0.02) << diag.cell_id << " cycle " << diag.cycle_number;
    }
}

namespace {

ICCurve gaussian_curve() {
  ICCurve c;
  for (int i = 0; i <= 400; ++i) {
    const double v = 3.4 + 0.001 * i;
    c.voltage_v.push_back(v);
    c.ic_mah_per_v.push_back(100.0 + 2000.0 * std::exp(-0.5 * std::pow((v - 3.62) / 0.02, 2)));
  }
  return c;
}

}  // namespace

TEST(Features, GaussianPeak) {
  const auto f = extract_features(gaussian_curve());
  EXPECT_NEAR(f.f1_ic_peak, 2100.0, 1e-9);
  EXPECT_NEAR(f.f2_v_at_peak, 3.62, 1e-12);
  EXPECT_NEAR(f.f3_ic_max_window, 2100.0, 1e-9);
  // steepest rise of a Gaussian is one sigma below the mean
  EXPECT_NEAR(f.f5_v_at_slope_max, 3.60, 1.5e-3);
  EXPECT_NEAR(f.f4_slope_max_window, 2000.0 / 0.02 * std::exp(-0.5), 1e3);
}

TEST(Features, PeakOutsideWindow) {
  const auto f = extract_features(gaussian_curve(), 3.5, 3.58);
  EXPECT_NEAR(f.f1_ic_peak, 2100.0, 1e-9);
  EXPECT_LT(f.f3_ic_max_window, f.f1_ic_peak);
}

TEST(Features, UncoveredWindowIsFeatureError) {
  ICCurve c;
  for (int i = 0; i < 10; ++i) {
    c.voltage_v.push_back(3.8 + 0.01 * i);
    c.ic_mah_per_v.push_back(1.0 + i);
  }
  EXPECT_THROW(extract_features(c), FeatureError);
}

TEST(Spearman, TiesUseAverageRanks) {
  const std::vector<double> x{1, 2, 2, 3, 5}, y{2, 1, 4, 4, 9};
  EXPECT_NEAR(spearman(x, y), 0.7631578947368421, 1e-12);
  EXPECT_EQ(average_ranks(x), (std::vector<double>{1, 2.5, 2.5, 4, 5}));
}

TEST(Spearman, MonotoneTransformsGiveOne) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i * 0.3);
    y.push_back(std::exp(i * 0.3));
  }
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-15);
  for (double& v : y) v = -v;
  EXPECT_NEAR(spearman(x, y), -1.0, 1e-15);
}
