#include "bhealth/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/LU>

#include "bhealth/ensemble.hpp"
#include "bhealth/errors.hpp"
#include "bhealth/gp.hpp"
#include "bhealth/ica.hpp"

namespace bhealth {

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << v;
  return ss.str();
}

CheckResult finish(std::string name, double worst, double threshold, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.threshold = threshold;
  r.passed = std::isfinite(worst) && worst <= threshold;
  r.detail = detail.empty() ? "worst " + fmt(worst) + " (limit " + fmt(threshold) + ")" : std::move(detail);
  return r;
}

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  GPHyper hyper;
};

Problem random_problem(std::mt19937_64& rng, int n, int d) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> log_l(std::log(0.5), std::log(2.0));
  std::uniform_real_distribution<double> log_sf(std::log(0.5), std::log(2.0));
  std::uniform_real_distribution<double> log_sn(std::log(1e-2), std::log(2e-1));
  Problem p{Eigen::MatrixXd(n, d), Eigen::VectorXd(n), GPHyper::initial(d)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) p.x(i, j) = u(rng);
    p.y[i] = std::sin(p.x(i, 0)) + 0.3 * u(rng);
  }
  p.hyper.log_signal_var = log_sf(rng);
  for (int j = 0; j < d; ++j) p.hyper.log_lengthscales[j] = log_l(rng);
  p.hyper.log_noise_var = log_sn(rng);
  return p;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

CheckResult check_gp_oracle(std::uint64_t seed, int problems) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_dist(2, 10), d_dist(1, 3);
  double worst_post = 0.0, worst_lml = 0.0;
  for (int t = 0; t < problems; ++t) {
    const int n = n_dist(rng), d = d_dist(rng);
    const Problem p = random_problem(rng, n, d);
    const GPModel model = fit_gp(p.x, p.y, p.hyper);

    // Oracle: standardize, build K by loops, invert densely.
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d), sd = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < n; ++i) mu[j] += p.x(i, j) / n;
      for (int i = 0; i < n; ++i) sd[j] += (p.x(i, j) - mu[j]) * (p.x(i, j) - mu[j]) / n;
      sd[j] = sd[j] > 0 ? std::sqrt(sd[j]) : 1.0;
    }
    double ym = 0, ys = 0;
    for (int i = 0; i < n; ++i) ym += p.y[i] / n;
    for (int i = 0; i < n; ++i) ys += (p.y[i] - ym) * (p.y[i] - ym) / n;
    ys = ys > 0 ? std::sqrt(ys) : 1.0;
    const double sf2 = std::exp(p.hyper.log_signal_var), sn2 = std::exp(p.hyper.log_noise_var);
    auto kern = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      double s = 0;
      for (int j = 0; j < d; ++j) {
        const double l = std::exp(p.hyper.log_lengthscales[j]);
        s += (a[j] - b[j]) * (a[j] - b[j]) / (l * l);
      }
      return sf2 * std::exp(-0.5 * s);
    };
    std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(n));
    Eigen::VectorXd yz(n);
    for (int i = 0; i < n; ++i) {
      z[static_cast<std::size_t>(i)] = (p.x.row(i).transpose() - mu).cwiseQuotient(sd);
      yz[i] = (p.y[i] - ym) / ys;
    }
    Eigen::MatrixXd ky(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        ky(a, b) = kern(z[static_cast<std::size_t>(a)], z[static_cast<std::size_t>(b)]) + (a == b ? sn2 + model.jitter : 0.0);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(ky);
    const Eigen::MatrixXd inv = lu.inverse();

    std::uniform_real_distribution<double> u(-2.5, 2.5);
    for (int q = 0; q < 5; ++q) {
      Eigen::VectorXd xs(d);
      for (int j = 0; j < d; ++j) xs[j] = u(rng);
      const Eigen::VectorXd zs = (xs - mu).cwiseQuotient(sd);
      Eigen::VectorXd k(n);
      for (int i = 0; i < n; ++i) k[i] = kern(z[static_cast<std::size_t>(i)], zs);
      const double mean = (k.dot(inv * yz)) * ys + ym;
      const double var = (sf2 - k.dot(inv * k) + sn2) * ys * ys;
      const auto got = predict(model, xs);
      worst_post = std::max({worst_post, rel_err(got.mean, mean), rel_err(got.variance, var)});
    }
    const double lml = -0.5 * yz.dot(inv * yz) - 0.5 * std::log(lu.determinant()) -
                       0.5 * n * std::log(2.0 * std::numbers::pi);
    worst_lml = std::max(worst_lml, rel_err(log_marginal_likelihood(model), lml));
  }
  CheckResult r = finish("gp_oracle_equivalence", std::max(worst_post / 1e-10, worst_lml / 1e-9), 1.0);
  r.detail = "posterior worst " + fmt(worst_post) + " (limit 1e-10), LML worst " + fmt(worst_lml) +
             " (limit 1e-9) over " + std::to_string(problems) + " problems";
  return r;
}

CheckResult check_lml_gradient(std::uint64_t seed, int problems_per_dim) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  int count = 0;
  for (int d : {1, 2, 5}) {
    for (int t = 0; t < problems_per_dim; ++t, ++count) {
      const Problem p = random_problem(rng, 12, d);
      const GPModel base = fit_gp(p.x, p.y, p.hyper);
      const Eigen::VectorXd g = lml_gradient(base);
      const Eigen::VectorXd theta = p.hyper.pack();
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        const double fd = (log_marginal_likelihood(refit(base, GPHyper::unpack(tp), base.jitter)) -
                           log_marginal_likelihood(refit(base, GPHyper::unpack(tm), base.jitter))) /
                          (2 * h);
        // relative to the gradient scale; tiny components compare absolutely
        const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-2});
        worst = std::max(worst, std::abs(fd - g[i]) / scale);
      }
    }
  }
  return finish("lml_gradient_check", worst, 1e-4,
                "worst relative error " + fmt(worst) + " (limit 1e-4) over " + std::to_string(count) + " problems");
}

CheckResult check_mixture_moments(std::uint64_t seed, int mixtures, long draws) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01;
  double worst = 0.0, worst_identity = 0.0;
  for (int t = 0; t < mixtures; ++t) {
    Eigen::VectorXd w(5), m(5), v(5);
    for (int i = 0; i < 5; ++i) {
      w[i] = 0.2 + u(rng);
      m[i] = 5.0 + 10.0 * u(rng);
      v[i] = 0.1 + 4.0 * u(rng);
    }
    w /= w.sum();
    const MixturePrediction mp = mixture_moments(w, m, v);
    worst_identity = std::max(worst_identity, std::abs(mp.variance - (mp.epistemic + mp.aleatoric)));

    std::discrete_distribution<int> pick(w.data(), w.data() + w.size());
    double s1 = 0, s2 = 0;
    for (long k = 0; k < draws; ++k) {
      const int e = pick(rng);
      const double xk = m[e] + std::sqrt(v[e]) * n01(rng);
      s1 += xk;
      s2 += xk * xk;
    }
    const double mc_mean = s1 / draws;
    const double mc_var = s2 / draws - mc_mean * mc_mean;
    worst = std::max({worst, std::abs(mc_mean - mp.mean) / std::abs(mp.mean),
                      std::abs(mc_var - mp.variance) / mp.variance});
  }
  CheckResult r = finish("mixture_moments", std::max(worst / 5e-3, worst_identity / 1e-9), 1.0);
  r.detail = "Monte-Carlo worst relative " + fmt(worst) + " (limit 5e-3), identity worst " + fmt(worst_identity) +
             " (limit 1e-9)";
  return r;
}

CheckResult check_filter_properties() {
  const FilterSpec spec = design_lowpass(4, 0.01, 1.0);
  const int n = 6000;

  std::vector<double> c(n, 3.7);
  double worst_const = 0.0;
  for (double v : zero_phase_filter(spec, c)) worst_const = std::max(worst_const, std::abs(v - 3.7));

  std::vector<double> s(n);
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = std::sin(2 * std::numbers::pi * 0.001 * i);
  const auto fs = zero_phase_filter(spec, s);
  int best_lag = 0;
  double best = -1e300;
  for (int lag = -50; lag <= 50; ++lag) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const int j = i + lag;
      if (j >= 0 && j < n) acc += s[static_cast<std::size_t>(i)] * fs[static_cast<std::size_t>(j)];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = 3.6 + 1e-4 * i + 0.01 * n01(rng);
  std::vector<double> xr(x.rbegin(), x.rend());
  const auto fx = zero_phase_filter(spec, x);
  const auto fxr = zero_phase_filter(spec, xr);
  double worst_rev = 0.0;
  for (int i = 0; i < n; ++i)
    worst_rev = std::max(worst_rev, std::abs(fxr[static_cast<std::size_t>(i)] - fx[static_cast<std::size_t>(n - 1 - i)]));

  const double gain_err = std::abs(magnitude_response(spec, 0.01) - 1.0 / std::sqrt(2.0));
  CheckResult r;
  r.name = "filter_properties";
  r.passed = worst_const <= 1e-9 && best_lag == 0 && worst_rev <= 1e-9 && gain_err <= 1e-6;
  r.worst = std::max({worst_const, worst_rev});
  r.threshold = 1e-9;
  r.detail = "constant " + fmt(worst_const) + ", xcorr peak lag " + std::to_string(best_lag) + ", reversal " +
             fmt(worst_rev) + ", |H(fc)|-1/sqrt2 " + fmt(gain_err);
  return r;
}

CheckResult check_charge_conservation(const std::vector<CellHistory>& fleet, const IcaConfig& ica) {
  const FilterSpec spec = design_lowpass(ica.filter_order, ica.cutoff_hz, ica.sample_rate_hz);
  double worst = 0.0;
  int curves = 0, skipped = 0;
  for (const auto& cell : fleet) {
    for (const auto& diag : cell.diagnostics) {
      try {
        const ICCurve curve = compute_ic_curve(diag, spec, ica.smooth_window);
        const double q = cc_charge_throughput(diag, ica.cv_voltage_v);
        worst = std::max(worst, std::abs(integrate_ic(curve) - q) / q);
        ++curves;
      } catch (const FeatureError&) {
        ++skipped;
      }
    }
  }
  if (curves == 0) worst = std::numeric_limits<double>::infinity();
  return finish("ic_charge_conservation", worst, 0.02,
                "worst relative " + fmt(worst) + " (limit 0.02) over " + std::to_string(curves) + " curves" +
                    (skipped ? ", " + std::to_string(skipped) + " skipped" : ""));
}

CheckResult check_spearman_per_cell(const std::vector<CellHistory>& fleet, const IcaConfig& ica, double min_rho) {
  double lowest = 1.0;
  std::string lowest_cell;
  for (const auto& cell : fleet) {
    const auto rows = featurize_cell(cell, ica);
    std::vector<double> f1, soh;
    for (const auto& r : rows) {
      f1.push_back(r.features.f1_ic_peak);
      soh.push_back(r.soh);
    }
    const double rho = spearman(f1, soh);
    if (rho < lowest) {
      lowest = rho;
      lowest_cell = cell.cell_id;
    }
  }
  CheckResult r;
  r.name = "spearman_f1_soh_per_cell";
  r.passed = !fleet.empty() && lowest >= min_rho;
  r.worst = lowest;
  r.threshold = min_rho;
  r.detail = "lowest rho " + fmt(lowest) + " (cell " + lowest_cell + ", limit >= " + fmt(min_rho) + ")";
  return r;
}

CheckResult check_decomposition_on_fleet(const std::vector<CellHistory>& fleet, const IcaConfig& ica) {
  if (fleet.size() < 3) throw ValidationError("decomposition check needs at least 3 cells");
  const TrainingSet all = make_training_set(build_regression_dataset(fleet, Target::rul, ica), Target::rul);
  std::vector<CellDataset> train;
  for (auto& c : group_by_cell(all))
    if (c.cell_id != fleet[0].cell_id && c.cell_id != fleet[1].cell_id) train.push_back(std::move(c));
  const GPRnModel model = train_gprn(train, 20);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < all.size(); ++i) {
    const auto p = predict_mixture(model, Eigen::VectorXd(all.x.row(i).transpose()));
    worst = std::max(worst, std::abs(p.variance - (p.epistemic + p.aleatoric)) / std::max(1.0, p.variance));
  }
  return finish("variance_decomposition_identity", worst, 1e-9,
                "worst " + fmt(worst) + " (limit 1e-9) over " + std::to_string(all.size()) + " GPRn predictions");
}

std::vector<CheckResult> run_selftest(const SelftestOptions& o) {
  std::vector<CheckResult> out;
  out.push_back(check_gp_oracle(o.seed));
  out.push_back(check_lml_gradient(o.seed));
  out.push_back(check_mixture_moments(o.seed, 10, o.mc_draws));
  out.push_back(check_filter_properties());
  const auto fleet = generate_synthetic_fleet(o.cells, o.seed);
  out.push_back(check_charge_conservation(fleet, o.ica));
  out.push_back(check_spearman_per_cell(fleet, o.ica));
  out.push_back(check_decomposition_on_fleet(fleet, o.ica));
  return out;
}

}  // namespace bhealth
