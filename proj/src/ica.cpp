#include "bhealth/ica.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "bhealth/errors.hpp"

namespace bhealth {

namespace {

using Complex = std::complex<double>;

// Coefficients of prod_k (z - r_k), highest power first.
std::vector<Complex> poly_from_roots(const std::vector<Complex>& roots) {
  std::vector<Complex> c{1.0};
  for (const Complex& r : roots) {
    std::vector<Complex> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] * r;
    }
    c = std::move(next);
  }
  return c;
}

std::vector<double> real_part(const std::vector<Complex>& c) {
  std::vector<double> out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](Complex v) { return v.real(); });
  return out;
}

// Minimum spacing between anchor voltages of consecutive IC steps.
constexpr double kMinVoltageStep = 1e-5;

}  // namespace

FilterSpec design_lowpass(int order, double cutoff_hz, double sample_rate_hz) {
  if (order < 1) throw ValidationError("filter order must be >= 1");
  if (!(sample_rate_hz > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0))
    throw ValidationError("cutoff must satisfy 0 < fc < fs/2");

  const double pi = std::numbers::pi;
  const double two_fs = 2.0 * sample_rate_hz;
  const double warped = two_fs * std::tan(pi * cutoff_hz / sample_rate_hz);

  std::vector<Complex> z_poles;
  Complex gain_den = 1.0;
  for (int k = 1; k <= order; ++k) {
    const double theta = pi * (2.0 * k + order - 1) / (2.0 * order);
    const Complex s_pole = warped * Complex(std::cos(theta), std::sin(theta));
    z_poles.push_back((two_fs + s_pole) / (two_fs - s_pole));
    gain_den *= (two_fs - s_pole);
  }
  const double gain = (std::pow(warped, order) / gain_den).real();

  FilterSpec spec;
  spec.order = order;
  spec.cutoff_hz = cutoff_hz;
  spec.sample_rate_hz = sample_rate_hz;
  spec.denominator = real_part(poly_from_roots(z_poles));
  spec.numerator = real_part(poly_from_roots(std::vector<Complex>(order, Complex(-1.0, 0.0))));
  for (double& b : spec.numerator) b *= gain;

  // Pin the DC gain to one against rounding in the pole products.
  const double dc = std::accumulate(spec.numerator.begin(), spec.numerator.end(), 0.0) /
                    std::accumulate(spec.denominator.begin(), spec.denominator.end(), 0.0);
  for (double& b : spec.numerator) b /= dc;
  return spec;
}

double magnitude_response(const FilterSpec& spec, double frequency_hz) {
  const double w = 2.0 * std::numbers::pi * frequency_hz / spec.sample_rate_hz;
  auto eval = [w](const std::vector<double>& c) {
    Complex acc = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
      acc += c[i] * std::polar(1.0, -w * static_cast<double>(i));
    return acc;
  };
  return std::abs(eval(spec.numerator) / eval(spec.denominator));
}

std::vector<double> lfilter(const FilterSpec& spec, std::span<const double> x,
                            std::span<const double> initial_state) {
  const auto& b = spec.numerator;
  const auto& a = spec.denominator;
  const std::size_t m = a.size() - 1;
  std::vector<double> z(initial_state.begin(), initial_state.end());
  z.resize(m, 0.0);
  std::vector<double> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double yn = b[0] * x[n] + (m > 0 ? z[0] : 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i) z[i] = b[i + 1] * x[n] + z[i + 1] - a[i + 1] * yn;
    if (m > 0) z[m - 1] = b[m] * x[n] - a[m] * yn;
    y[n] = yn;
  }
  return y;
}

std::vector<double> lfilter_steady_state(const FilterSpec& spec) {
  const auto& b = spec.numerator;
  const auto& a = spec.denominator;
  const Eigen::Index m = static_cast<Eigen::Index>(a.size()) - 1;
  if (m == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) companion(0, j) = -a[j + 1];
  for (Eigen::Index i = 1; i < m; ++i) companion(i, i - 1) = 1.0;
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m) - companion.transpose();
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) rhs[i] = b[i + 1] - a[i + 1] * b[0];
  const Eigen::VectorXd zi = lhs.partialPivLu().solve(rhs);
  return {zi.data(), zi.data() + m};
}

std::vector<double> zero_phase_filter(const FilterSpec& spec, std::span<const double> signal) {
  const std::size_t pad = 3 * static_cast<std::size_t>(spec.order);
  const std::size_t n = signal.size();
  if (n <= pad)
    throw ValidationError("signal too short for zero-phase filtering: " + std::to_string(n) +
                          " samples, need > " + std::to_string(pad));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const std::vector<double> zi = lfilter_steady_state(spec);
  auto causal = [&](std::vector<double> v) {
    std::vector<double> init(zi);
    for (double& s : init) s *= v.front();
    return lfilter(spec, v, init);
  };
  auto reversed = [](std::vector<double> v) {
    std::reverse(v.begin(), v.end());
    return v;
  };

  // Average of forward-backward and backward-forward passes; the two orders
  // differ only in edge transients and the average is exactly
  // reversal-symmetric.
  const std::vector<double> fb = reversed(causal(reversed(causal(ext))));
  const std::vector<double> bf = causal(reversed(causal(reversed(ext))));

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
  return out;
}

std::vector<double> moving_average(std::span<const double> x, int window) {
  if (window < 1 || window % 2 == 0)
    throw ValidationError("moving-average window must be a positive odd integer");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t h = std::min({half, i, n - 1 - i});
    out[i] = (prefix[i + h + 1] - prefix[i - h]) / static_cast<double>(2 * h + 1);
  }
  return out;
}

std::vector<Sample> extract_cc_segment(const DiagnosticCycle& cycle, double cv_voltage_v) {
  const auto& s = cycle.samples;
  if (s.empty()) return {};
  std::vector<double> currents(s.size());
  std::transform(s.begin(), s.end(), currents.begin(), [](const Sample& v) { return v.current_a; });
  auto mid = currents.begin() + static_cast<std::ptrdiff_t>(currents.size() / 2);
  std::nth_element(currents.begin(), mid, currents.end());
  const double median = *mid;
  const double band = 0.02 * std::abs(median);
  const double v_limit = cv_voltage_v - 0.005;

  auto keep = [&](const Sample& v) {
    return std::abs(v.current_a - median) <= band && v.voltage_v < v_limit;
  };

  // Longest contiguous run of retained samples.
  std::size_t best_begin = 0, best_len = 0;
  for (std::size_t i = 0; i < s.size();) {
    if (!keep(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && keep(s[j])) ++j;
    if (j - i > best_len) {
      best_begin = i;
      best_len = j - i;
    }
    i = j;
  }
  return {s.begin() + static_cast<std::ptrdiff_t>(best_begin),
          s.begin() + static_cast<std::ptrdiff_t>(best_begin + best_len)};
}

double cc_charge_throughput(const DiagnosticCycle& cycle, double cv_voltage_v) {
  const auto cc = extract_cc_segment(cycle, cv_voltage_v);
  if (cc.size() < 2) return 0.0;
  return cc.back().charge_mah - cc.front().charge_mah;
}

ICCurve compute_ic_curve(const DiagnosticCycle& cycle, const FilterSpec& spec, int smooth_window) {
  const auto cc = extract_cc_segment(cycle);
  if (cc.size() <= 3 * static_cast<std::size_t>(spec.order))
    throw FeatureError("cycle " + std::to_string(cycle.cycle_number) + " of cell " +
                       cycle.cell_id + ": CC segment too short");

  std::vector<double> voltage(cc.size());
  std::transform(cc.begin(), cc.end(), voltage.begin(), [](const Sample& v) { return v.voltage_v; });
  const std::vector<double> vf = zero_phase_filter(spec, voltage);

  double current = 0.0;
  for (const Sample& v : cc) current += v.current_a;
  current /= static_cast<double>(cc.size());

  ICCurve curve;
  std::size_t anchor = 0;
  for (std::size_t k = 1; k < cc.size(); ++k) {
    const double dv = vf[k] - vf[anchor];
    if (dv < kMinVoltageStep) continue;
    const double dt = cc[k].time_s - cc[anchor].time_s;
    // A*s/V -> mAh/V
    curve.ic_mah_per_v.push_back(current * dt / (3.6 * dv));
    curve.voltage_v.push_back(0.5 * (vf[k] + vf[anchor]));
    anchor = k;
  }
  if (curve.voltage_v.size() < 2)
    throw FeatureError("cycle " + std::to_string(cycle.cycle_number) + " of cell " +
                       cycle.cell_id + ": degenerate IC curve");

  curve.ic_mah_per_v = moving_average(curve.ic_mah_per_v, smooth_window);
  for (double& ic : curve.ic_mah_per_v) ic = std::max(ic, 0.0);
  return curve;
}

double integrate_ic(const ICCurve& curve) {
  double total = 0.0;
  for (std::size_t i = 1; i < curve.voltage_v.size(); ++i)
    total += 0.5 * (curve.ic_mah_per_v[i] + curve.ic_mah_per_v[i - 1]) *
             (curve.voltage_v[i] - curve.voltage_v[i - 1]);
  return total;
}

FeatureVector extract_features(const ICCurve& curve, double window_low_v, double window_high_v) {
  const auto& v = curve.voltage_v;
  const auto& ic = curve.ic_mah_per_v;
  const std::size_t n = v.size();
  if (n < 5 || ic.size() != n) throw FeatureError("IC curve needs at least 5 points");

  FeatureVector f;
  std::size_t peak = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (ic[i] > ic[peak]) peak = i;
  f.f1_ic_peak = ic[peak];
  f.f2_v_at_peak = v[peak];

  bool covered = false;
  bool has_slope = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(v[i] > window_low_v && v[i] < window_high_v)) continue;
    if (!covered || ic[i] > f.f3_ic_max_window) f.f3_ic_max_window = ic[i];
    covered = true;
    if (i == 0 || i + 1 == n) continue;
    const double slope = (ic[i + 1] - ic[i - 1]) / (v[i + 1] - v[i - 1]);
    if (slope > 0.0 && (!has_slope || slope > f.f4_slope_max_window)) {
      f.f4_slope_max_window = slope;
      f.f5_v_at_slope_max = v[i];
      has_slope = true;
    }
  }
  if (!covered) throw FeatureError("IC curve does not cover the feature window");
  if (!has_slope) throw FeatureError("no positive IC slope inside the feature window");
  return f;
}

FeatureVector featurize_cycle(const DiagnosticCycle& cycle, const IcaConfig& config) {
  const FilterSpec spec = design_lowpass(config.filter_order, config.cutoff_hz, config.sample_rate_hz);
  const ICCurve curve = compute_ic_curve(cycle, spec, config.smooth_window);
  return extract_features(curve, config.window_low_v, config.window_high_v);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman: need at least 3 observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double na = da.norm(), nb = db.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("spearman: undefined for constant input");
  return std::clamp(da.dot(db) / (na * nb), -1.0, 1.0);
}

}  // namespace bhealth
