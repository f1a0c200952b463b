#pragma once

// Exact Gaussian-process regression with an ARD squared-exponential kernel.
//
// Models work on standardized data: every feature column and the target are
// shifted and scaled with statistics of the training set, the prior mean is
// zero in that space, and predictions are mapped back to raw units.
// Hyperparameters live in log space and are packed as
//   [log sf2, log l_1 ... log l_d, log sn2].

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bhealth/errors.hpp"

namespace bhealth {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct BasicGPHyper {
  Scalar log_signal_var = 0;
  VectorX<Scalar> log_lengthscales;
  Scalar log_noise_var = -2;

  /// Neutral start for unit-scale data: sf2 = 1, l_j = 1, sn2 = e^-2.
  static BasicGPHyper initial(Eigen::Index dims) {
    return {Scalar(0), VectorX<Scalar>::Zero(dims), Scalar(-2)};
  }

  Eigen::Index dims() const { return log_lengthscales.size(); }
  Scalar signal_var() const { return std::exp(log_signal_var); }
  Scalar noise_var() const { return std::exp(log_noise_var); }
  VectorX<Scalar> lengthscales() const { return log_lengthscales.array().exp(); }

  VectorX<Scalar> pack() const {
    VectorX<Scalar> p(dims() + 2);
    p << log_signal_var, log_lengthscales, log_noise_var;
    return p;
  }

  static BasicGPHyper unpack(const VectorX<Scalar>& p) {
    const Eigen::Index d = p.size() - 2;
    return {p[0], p.segment(1, d), p[d + 1]};
  }

  bool finite() const {
    return std::isfinite(log_signal_var) && std::isfinite(log_noise_var) &&
           log_lengthscales.allFinite();
  }
};

/// Per-dimension affine map to zero mean and unit standard deviation.
template <typename Scalar>
struct BasicScaler {
  VectorX<Scalar> mean;
  VectorX<Scalar> stddev;

  /// Zero-variance columns keep stddev = 1; their indices land in `flat`.
  static BasicScaler fit(const MatrixX<Scalar>& x, std::vector<Eigen::Index>* flat = nullptr) {
    BasicScaler s;
    const Scalar n = static_cast<Scalar>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.stddev.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Scalar var = (x.col(j).array() - s.mean[j]).square().sum() / n;
      if (var > Scalar(0) && std::isfinite(var)) {
        s.stddev[j] = std::sqrt(var);
      } else {
        s.stddev[j] = Scalar(1);
        if (flat) flat->push_back(j);
      }
    }
    return s;
  }

  MatrixX<Scalar> transform(const MatrixX<Scalar>& x) const {
    return ((x.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array()).matrix();
  }
  VectorX<Scalar> transform_point(const VectorX<Scalar>& x) const {
    return ((x - mean).array() / stddev.array()).matrix();
  }
};

template <typename Scalar>
struct BasicGPModel {
  MatrixX<Scalar> train_inputs;   // standardized, n x d
  VectorX<Scalar> train_targets;  // standardized
  BasicScaler<Scalar> feature_scaler;
  Scalar target_mean = 0;
  Scalar target_std = 1;
  BasicGPHyper<Scalar> hyper;
  MatrixX<Scalar> chol_factor;    // lower triangle of K + sn2 I + jitter I
  VectorX<Scalar> alpha;
  Scalar jitter = 0;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return train_inputs.rows(); }
  Eigen::Index dims() const { return train_inputs.cols(); }
};

template <typename Scalar>
struct BasicPredictiveDistribution {
  Scalar mean = 0;
  Scalar variance = 0;
};

using GPHyper = BasicGPHyper<double>;
using GPModel = BasicGPModel<double>;
using PredictiveDistribution = BasicPredictiveDistribution<double>;
using Scaler = BasicScaler<double>;

inline constexpr double kDefaultJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-2;

template <typename Scalar>
Scalar kernel_rbf_ard(const VectorX<Scalar>& a, const VectorX<Scalar>& b,
                      const BasicGPHyper<Scalar>& hyper) {
  if (a.size() != hyper.dims() || b.size() != hyper.dims())
    throw ValidationError("kernel: input dimension does not match hyperparameters");
  const VectorX<Scalar> scaled = (a - b).cwiseQuotient(hyper.lengthscales());
  return hyper.signal_var() * std::exp(Scalar(-0.5) * scaled.squaredNorm());
}

/// Noise-free Gram matrix K(X, Z).
template <typename Scalar>
MatrixX<Scalar> cross_kernel(const MatrixX<Scalar>& x, const MatrixX<Scalar>& z,
                             const BasicGPHyper<Scalar>& hyper) {
  if (x.cols() != hyper.dims() || z.cols() != hyper.dims())
    throw ValidationError("kernel: input dimension does not match hyperparameters");
  const VectorX<Scalar> inv_l = hyper.lengthscales().cwiseInverse();
  const MatrixX<Scalar> xs = x * inv_l.asDiagonal();
  const MatrixX<Scalar> zs = z * inv_l.asDiagonal();
  MatrixX<Scalar> sq = (-2 * xs * zs.transpose()).colwise() + xs.rowwise().squaredNorm();
  sq.rowwise() += zs.rowwise().squaredNorm().transpose();
  return hyper.signal_var() * (Scalar(-0.5) * sq.array().max(Scalar(0))).exp().matrix();
}

namespace detail {

// Factorizes K + (sn2 + jitter) I on already standardized data, escalating
// jitter x10 up to kMaxJitter.
template <typename Scalar>
void factorize(BasicGPModel<Scalar>& m, Scalar jitter) {
  if (!(jitter > Scalar(0))) throw ValidationError("jitter must be positive");
  const Eigen::Index n = m.size();
  MatrixX<Scalar> k = cross_kernel(m.train_inputs, m.train_inputs, m.hyper);
  k = Scalar(0.5) * (k + k.transpose());
  const Scalar sn2 = m.hyper.noise_var();
  for (Scalar j = jitter;; j *= Scalar(10)) {
    MatrixX<Scalar> ky = k;
    ky.diagonal().array() += sn2 + j;
    Eigen::LLT<MatrixX<Scalar>> llt(ky);
    if (llt.info() == Eigen::Success) {
      m.chol_factor = llt.matrixL();
      m.alpha = llt.solve(m.train_targets);
      m.jitter = j;
      if (j > jitter) m.warnings.push_back("jitter escalated to " + std::to_string(j));
      return;
    }
    if (j * Scalar(10) > Scalar(kMaxJitter) * Scalar(1.0000001))
      throw NumericalError("Cholesky factorization failed at maximum jitter (n=" +
                           std::to_string(n) + ")");
  }
}

}  // namespace detail

/// Standardizes (X, y), then factorizes the regularized Gram matrix.
template <typename Scalar>
BasicGPModel<Scalar> fit_gp(const MatrixX<Scalar>& x, const VectorX<Scalar>& y,
                            const BasicGPHyper<Scalar>& hyper, Scalar jitter = Scalar(kDefaultJitter)) {
  if (x.rows() < 1) throw ValidationError("fit_gp: need at least one training row");
  if (x.rows() != y.size()) throw ValidationError("fit_gp: X and y row counts differ");
  if (x.cols() != hyper.dims()) throw ValidationError("fit_gp: feature dimension does not match hyperparameters");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("fit_gp: non-finite training data");
  if (!hyper.finite()) throw ValidationError("fit_gp: non-finite hyperparameters");

  BasicGPModel<Scalar> m;
  std::vector<Eigen::Index> flat;
  m.feature_scaler = BasicScaler<Scalar>::fit(x, &flat);
  for (Eigen::Index j : flat) {
    const std::string msg = "feature " + std::to_string(j) + " has zero variance; scaler std set to 1";
    log_warning(msg);
    m.warnings.push_back(msg);
  }
  m.train_inputs = m.feature_scaler.transform(x);
  m.target_mean = y.mean();
  const Scalar var = (y.array() - m.target_mean).square().mean();
  m.target_std = var > Scalar(0) ? std::sqrt(var) : Scalar(1);
  m.train_targets = (y.array() - m.target_mean) / m.target_std;
  m.hyper = hyper;
  detail::factorize(m, jitter);
  return m;
}

/// Same data and scalers, new hyperparameters.
template <typename Scalar>
BasicGPModel<Scalar> refit(const BasicGPModel<Scalar>& base, const BasicGPHyper<Scalar>& hyper,
                           Scalar jitter = Scalar(kDefaultJitter)) {
  BasicGPModel<Scalar> m;
  m.train_inputs = base.train_inputs;
  m.train_targets = base.train_targets;
  m.feature_scaler = base.feature_scaler;
  m.target_mean = base.target_mean;
  m.target_std = base.target_std;
  m.hyper = hyper;
  detail::factorize(m, jitter);
  return m;
}

/// Predictive distribution for a new observation y* (latent variance plus
/// noise variance), in raw target units.
template <typename Scalar>
BasicPredictiveDistribution<Scalar> predict(const BasicGPModel<Scalar>& m, const VectorX<Scalar>& x_star) {
  if (x_star.size() != m.dims()) throw ValidationError("predict: input dimension mismatch");
  if (!x_star.allFinite()) throw ValidationError("predict: non-finite input");
  const VectorX<Scalar> xs = m.feature_scaler.transform_point(x_star);
  const MatrixX<Scalar> ks = cross_kernel(m.train_inputs, MatrixX<Scalar>(xs.transpose()), m.hyper);
  const Scalar mean_std = ks.col(0).dot(m.alpha);
  const VectorX<Scalar> v = m.chol_factor.template triangularView<Eigen::Lower>().solve(ks.col(0));
  const Scalar latent = std::max(m.hyper.signal_var() - v.squaredNorm(), Scalar(0));
  return {mean_std * m.target_std + m.target_mean,
          (latent + m.hyper.noise_var()) * m.target_std * m.target_std};
}

/// Log marginal likelihood of the standardized targets.
template <typename Scalar>
Scalar log_marginal_likelihood(const BasicGPModel<Scalar>& m) {
  const Scalar n = static_cast<Scalar>(m.size());
  return Scalar(-0.5) * m.train_targets.dot(m.alpha) - m.chol_factor.diagonal().array().log().sum() -
         Scalar(0.5) * n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// d LML / d log-theta, packed like BasicGPHyper::pack().
template <typename Scalar>
VectorX<Scalar> lml_gradient(const BasicGPModel<Scalar>& m) {
  const Eigen::Index n = m.size(), d = m.dims();
  const auto& x = m.train_inputs;
  const MatrixX<Scalar> kf = cross_kernel(x, x, m.hyper);

  MatrixX<Scalar> ky_inv = MatrixX<Scalar>::Identity(n, n);
  m.chol_factor.template triangularView<Eigen::Lower>().solveInPlace(ky_inv);
  m.chol_factor.template triangularView<Eigen::Lower>().transpose().solveInPlace(ky_inv);
  const MatrixX<Scalar> w = m.alpha * m.alpha.transpose() - ky_inv;
  const MatrixX<Scalar> wk = w.cwiseProduct(kf);

  VectorX<Scalar> g(d + 2);
  g[0] = Scalar(0.5) * wk.sum();
  const VectorX<Scalar> l2 = m.hyper.lengthscales().array().square();
  for (Eigen::Index j = 0; j < d; ++j) {
    // d K / d log l_j = K .* (x_aj - x_bj)^2 / l_j^2
    const VectorX<Scalar> col = x.col(j);
    Scalar acc = 0;
    for (Eigen::Index b = 0; b < n; ++b)
      acc += (wk.col(b).array() * (col.array() - col[b]).square()).sum();
    g[j + 1] = Scalar(0.5) * acc / l2[j];
  }
  g[d + 1] = Scalar(0.5) * m.hyper.noise_var() * w.trace();
  return g;
}

template <typename Scalar>
struct BasicOptimizationResult {
  BasicGPHyper<Scalar> hyper;
  std::vector<Scalar> lml_trace;  // LML before each step, then at the final point
};
using OptimizationResult = BasicOptimizationResult<double>;

struct AdamSettings {
  double learn_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam ascent on the LML for a fixed number of steps. The step budget is the
/// only stopping rule.
template <typename Scalar>
BasicOptimizationResult<Scalar> optimize_hyperparams(const MatrixX<Scalar>& x, const VectorX<Scalar>& y,
                                                     const BasicGPHyper<Scalar>& init, int steps,
                                                     const AdamSettings& adam = {}) {
  if (steps < 0) throw ValidationError("optimize_hyperparams: negative step count");
  BasicOptimizationResult<Scalar> result{init, {}};
  BasicGPModel<Scalar> model = fit_gp(x, y, init);
  if (steps == 0) {
    result.lml_trace.push_back(log_marginal_likelihood(model));
    return result;
  }

  VectorX<Scalar> theta = init.pack();
  VectorX<Scalar> m1 = VectorX<Scalar>::Zero(theta.size());
  VectorX<Scalar> m2 = VectorX<Scalar>::Zero(theta.size());
  const Scalar b1 = Scalar(adam.beta1), b2 = Scalar(adam.beta2);
  Scalar b1t = 1, b2t = 1;
  for (int step = 0; step < steps; ++step) {
    const Scalar lml = log_marginal_likelihood(model);
    const VectorX<Scalar> g = lml_gradient(model);
    if (!std::isfinite(lml) || !g.allFinite())
      throw NumericalError("non-finite LML or gradient at Adam step " + std::to_string(step) +
                           " (log sf2=" + std::to_string(model.hyper.log_signal_var) +
                           ", log sn2=" + std::to_string(model.hyper.log_noise_var) + ")");
    result.lml_trace.push_back(lml);
    m1 = b1 * m1 + (1 - b1) * g;
    m2 = b2 * m2 + (1 - b2) * g.cwiseProduct(g);
    b1t *= b1;
    b2t *= b2;
    const VectorX<Scalar> m1_hat = m1 / (1 - b1t);
    const VectorX<Scalar> m2_hat = m2 / (1 - b2t);
    theta += Scalar(adam.learn_rate) * m1_hat.cwiseQuotient((m2_hat.array().sqrt() + Scalar(adam.epsilon)).matrix());
    model = refit(model, BasicGPHyper<Scalar>::unpack(theta));
  }
  const Scalar final_lml = log_marginal_likelihood(model);
  if (!std::isfinite(final_lml)) throw NumericalError("non-finite LML after Adam ascent");
  result.lml_trace.push_back(final_lml);
  result.hyper = model.hyper;
  return result;
}

}  // namespace bhealth
