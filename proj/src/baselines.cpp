#include "bhealth/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include "bhealth/errors.hpp"

namespace bhealth {

namespace {

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_rows(const TrainingSet& data, Eigen::Index min_rows, const char* who) {
  if (data.x.rows() != data.y.size()) throw ValidationError(std::string(who) + ": X and y row counts differ");
  if (data.size() < min_rows)
    throw ValidationError(std::string(who) + ": need at least " + std::to_string(min_rows) + " samples, got " +
                          std::to_string(data.size()));
  if (!data.x.allFinite() || !data.y.allFinite()) throw ValidationError(std::string(who) + ": non-finite data");
}

struct TargetScale {
  double mean = 0.0;
  double stddev = 1.0;
};

TargetScale fit_target_scale(const Eigen::VectorXd& y) {
  TargetScale s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

// Least squares on column-normalized basis via the normal equations.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double ridge,
                                       const char* who) {
  Eigen::VectorXd scale(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    scale[j] = a.col(j).norm();
    if (scale[j] == 0.0) {
      if (ridge <= 0.0) throw TrainingError(std::string(who) + ": rank-deficient design (zero column)");
      scale[j] = 1.0;
    }
  }
  const Eigen::MatrixXd as = a * scale.cwiseInverse().asDiagonal();
  // ridge acts on the unscaled system, i.e. A'A + ridge*I
  Eigen::MatrixXd gram = as.transpose() * as;
  gram.diagonal().array() += ridge * scale.array().square().inverse();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-13 * d.maxCoeff())
    throw TrainingError(std::string(who) + ": rank-deficient normal equations");
  return ldlt.solve(as.transpose() * y).cwiseQuotient(scale);
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

std::string to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::poly1d: return "poly1d";
    case RegressorKind::polymulti: return "polymulti";
    case RegressorKind::ffnn: return "ffnn";
    case RegressorKind::svr: return "svr";
    case RegressorKind::gpr: return "gpr";
    case RegressorKind::gpr_loco: return "gpr_loco";
    case RegressorKind::gprn: return "gprn";
  }
  return "unknown";
}

RegressorKind parse_regressor_kind(const std::string& text) {
  for (RegressorKind k : all_regressor_kinds())
    if (to_string(k) == text) return k;
  throw ValidationError("unknown regressor kind '" + text + "'");
}

const std::vector<RegressorKind>& all_regressor_kinds() {
  static const std::vector<RegressorKind> kinds{RegressorKind::poly1d, RegressorKind::polymulti,
                                                RegressorKind::ffnn,   RegressorKind::svr,
                                                RegressorKind::gpr,    RegressorKind::gpr_loco,
                                                RegressorKind::gprn};
  return kinds;
}

RegressorSpec RegressorSpec::defaults(RegressorKind kind, std::uint64_t seed) {
  RegressorSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  switch (kind) {
    case RegressorKind::poly1d: spec.params = Poly1dParams{}; break;
    case RegressorKind::polymulti: spec.params = PolyMultiParams{}; break;
    case RegressorKind::ffnn: spec.params = FfnnParams{}; break;
    case RegressorKind::svr: spec.params = SvrParams{}; break;
    case RegressorKind::gpr: spec.params = GprParams{}; break;
    case RegressorKind::gpr_loco: spec.params = GprLocoParams{}; break;
    case RegressorKind::gprn: spec.params = GprnParams{}; break;
  }
  return spec;
}

void RegressorSpec::validate() const {
  const std::string who = "regressor " + to_string(kind) + ": ";
  const auto expected = static_cast<std::size_t>(kind);
  if (params.index() != expected) throw ValidationError(who + "hyperparameters belong to a different kind");
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(who + name + " must be positive");
  };
  std::visit(Overloaded{
                 [&](const Poly1dParams& p) {
                   if (p.degree < 1) throw ValidationError(who + "degree must be >= 1");
                 },
                 [&](const PolyMultiParams& p) {
                   if (p.degree < 1) throw ValidationError(who + "degree must be >= 1");
                   if (p.interaction_degree < 0 || p.interaction_degree > 2)
                     throw ValidationError(who + "interaction_degree must be 0, 1 or 2");
                   if (!(p.ridge >= 0.0)) throw ValidationError(who + "ridge must be non-negative");
                 },
                 [&](const FfnnParams& p) {
                   if (p.hidden.empty()) throw ValidationError(who + "needs at least one hidden layer");
                   for (int h : p.hidden)
                     if (h < 1) throw ValidationError(who + "hidden layer widths must be >= 1");
                   if (p.epochs < 0) throw ValidationError(who + "epochs must be >= 0");
                   positive(p.learn_rate, "learn_rate");
                 },
                 [&](const SvrParams& p) {
                   positive(p.c, "C");
                   positive(p.epsilon, "epsilon");
                   positive(p.tolerance, "tolerance");
                   for (double l : p.lengthscales) positive(l, "lengthscale");
                   if (p.max_iterations < 1) throw ValidationError(who + "max_iterations must be >= 1");
                 },
                 [&](const GprParams& p) {
                   if (p.epochs < 0) throw ValidationError(who + "epochs must be >= 0");
                   positive(p.learn_rate, "learn_rate");
                 },
                 [&](const GprLocoParams& p) {
                   if (p.signal_vars.empty() || p.lengthscales.empty() || p.noise_vars.empty())
                     throw ValidationError(who + "hyperparameter grid is empty");
                   for (double v : p.signal_vars) positive(v, "grid signal variance");
                   for (double v : p.lengthscales) positive(v, "grid lengthscale");
                   for (double v : p.noise_vars) positive(v, "grid noise variance");
                 },
                 [&](const GprnParams& p) {
                   if (p.epochs < 0) throw ValidationError(who + "epochs must be >= 0");
                   positive(p.learn_rate, "learn_rate");
                 },
             },
             params);
}

Eigen::VectorXd FittedRegressor::predict_all(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i).transpose());
  return out;
}

// ---------------------------------------------------------------------------
// Poly1D

Poly1dRegressor::Poly1dRegressor(RegressorSpec spec, double mean, double stddev, Eigen::VectorXd coefficients)
    : FittedRegressor(std::move(spec)), mean_(mean), stddev_(stddev), coef_(std::move(coefficients)) {}

double Poly1dRegressor::predict(const Eigen::VectorXd& x) const {
  const double z = (x[0] - mean_) / stddev_;
  double acc = 0.0;
  for (Eigen::Index k = coef_.size() - 1; k >= 0; --k) acc = acc * z + coef_[k];
  return acc;
}

Eigen::VectorXd Poly1dRegressor::raw_coefficients() const {
  const int degree = static_cast<int>(coef_.size()) - 1;
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(coef_.size());
  for (int k = 0; k <= degree; ++k)
    for (int i = 0; i <= k; ++i)
      raw[i] += coef_[k] * binomial(k, i) * std::pow(-mean_, k - i) / std::pow(stddev_, k);
  return raw;
}

std::unique_ptr<Poly1dRegressor> fit_poly1d(const TrainingSet& data, const Poly1dParams& params, std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::poly1d, params, seed};
  spec.validate();
  require_rows(data, params.degree + 1, "poly1d");
  const Eigen::VectorXd f1 = data.x.col(0);
  const double mean = f1.mean();
  const double var = (f1.array() - mean).square().mean();
  const double stddev = var > 0.0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd z = (f1.array() - mean) / stddev;
  Eigen::MatrixXd a(data.size(), params.degree + 1);
  a.col(0).setOnes();
  for (int k = 1; k <= params.degree; ++k) a.col(k) = a.col(k - 1).cwiseProduct(z);
  return std::make_unique<Poly1dRegressor>(std::move(spec), mean, stddev,
                                           solve_normal_equations(a, data.y, 0.0, "poly1d"));
}

// ---------------------------------------------------------------------------
// PolyMulti

Eigen::MatrixXd polymulti_basis(const Eigen::MatrixXd& z, int degree, int interaction_degree) {
  const Eigen::Index n = z.rows(), d = z.cols();
  const bool interactions = interaction_degree >= 2;
  const Eigen::Index cols = 1 + d * degree + (interactions ? d * (d - 1) / 2 : 0);
  Eigen::MatrixXd a(n, cols);
  Eigen::Index c = 0;
  a.col(c++).setOnes();
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd power = z.col(j);
    for (int p = 1; p <= degree; ++p) {
      a.col(c++) = power;
      power = power.cwiseProduct(z.col(j));
    }
  }
  if (interactions)
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) a.col(c++) = z.col(i).cwiseProduct(z.col(j));
  return a;
}

PolyMultiRegressor::PolyMultiRegressor(RegressorSpec spec, Scaler scaler, Eigen::VectorXd coefficients)
    : FittedRegressor(std::move(spec)), scaler_(std::move(scaler)), coef_(std::move(coefficients)) {}

double PolyMultiRegressor::predict(const Eigen::VectorXd& x) const {
  const auto& p = std::get<PolyMultiParams>(spec().params);
  const Eigen::MatrixXd z = scaler_.transform_point(x).transpose();
  return (polymulti_basis(z, p.degree, p.interaction_degree) * coef_)[0];
}

std::vector<std::string> PolyMultiRegressor::basis_names() const {
  const auto& p = std::get<PolyMultiParams>(spec().params);
  const Eigen::Index d = scaler_.mean.size();
  std::vector<std::string> names{"1"};
  for (Eigen::Index j = 0; j < d; ++j)
    for (int k = 1; k <= p.degree; ++k)
      names.push_back("x" + std::to_string(j) + (k == 1 ? "" : "^" + std::to_string(k)));
  if (p.interaction_degree >= 2)
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) names.push_back("x" + std::to_string(i) + "*x" + std::to_string(j));
  return names;
}

std::unique_ptr<PolyMultiRegressor> fit_polymulti(const TrainingSet& data, const PolyMultiParams& params,
                                                  std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::polymulti, params, seed};
  spec.validate();
  require_rows(data, 1, "polymulti");
  Scaler scaler = Scaler::fit(data.x);
  const Eigen::MatrixXd a = polymulti_basis(scaler.transform(data.x), params.degree, params.interaction_degree);
  if (a.cols() >= data.size())
    throw TrainingError("polymulti: basis of " + std::to_string(a.cols()) + " terms needs more than " +
                        std::to_string(data.size()) + " samples");
  Eigen::VectorXd coef = solve_normal_equations(a, data.y, params.ridge, "polymulti");
  return std::make_unique<PolyMultiRegressor>(std::move(spec), std::move(scaler), std::move(coef));
}

// ---------------------------------------------------------------------------
// FFNN

FfnnRegressor::FfnnRegressor(RegressorSpec spec, Scaler scaler, double y_mean, double y_std,
                             std::vector<Layer> layers, std::vector<double> loss_trace)
    : FittedRegressor(std::move(spec)),
      scaler_(std::move(scaler)),
      y_mean_(y_mean),
      y_std_(y_std),
      layers_(std::move(layers)),
      loss_trace_(std::move(loss_trace)) {}

double FfnnRegressor::predict(const Eigen::VectorXd& x) const {
  Eigen::VectorXd a = scaler_.transform_point(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    a = layers_[l].weight * a + layers_[l].bias;
    if (l + 1 < layers_.size()) a = a.cwiseMax(0.0);
  }
  return a[0] * y_std_ + y_mean_;
}

std::unique_ptr<FfnnRegressor> fit_ffnn(const TrainingSet& data, const FfnnParams& params, std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::ffnn, params, seed};
  spec.validate();
  require_rows(data, 2, "ffnn");

  Scaler scaler = Scaler::fit(data.x);
  const TargetScale ys = fit_target_scale(data.y);
  const Eigen::MatrixXd x0 = scaler.transform(data.x).transpose();  // d x n
  const Eigen::RowVectorXd target = ((data.y.array() - ys.mean) / ys.stddev).matrix().transpose();
  const double n = static_cast<double>(data.size());

  std::vector<int> widths{static_cast<int>(data.x.cols())};
  widths.insert(widths.end(), params.hidden.begin(), params.hidden.end());
  widths.push_back(1);

  std::mt19937_64 rng(seed);
  std::vector<FfnnRegressor::Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double limit = std::sqrt(6.0 / widths[l]);  // He-uniform
    std::uniform_real_distribution<double> init(-limit, limit);
    FfnnRegressor::Layer layer{Eigen::MatrixXd(widths[l + 1], widths[l]), Eigen::VectorXd::Zero(widths[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = init(rng);
    layers.push_back(std::move(layer));
  }

  struct Moments {
    Eigen::MatrixXd mw, vw;
    Eigen::VectorXd mb, vb;
  };
  std::vector<Moments> moments;
  for (const auto& layer : layers)
    moments.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                       Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                       Eigen::VectorXd::Zero(layer.bias.size()), Eigen::VectorXd::Zero(layer.bias.size())});

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(params.epochs));
  const std::size_t depth = layers.size();
  std::vector<Eigen::MatrixXd> pre(depth), act(depth + 1);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    act[0] = x0;
    for (std::size_t l = 0; l < depth; ++l) {
      pre[l] = (layers[l].weight * act[l]).colwise() + layers[l].bias;
      act[l + 1] = l + 1 < depth ? pre[l].cwiseMax(0.0) : pre[l];
    }
    const Eigen::RowVectorXd residual = act[depth].row(0) - target;
    const double loss = residual.squaredNorm() / n;
    if (!std::isfinite(loss)) throw TrainingError("ffnn: non-finite loss at epoch " + std::to_string(epoch));
    trace.push_back(loss);

    b1t *= b1;
    b2t *= b2;
    Eigen::MatrixXd delta = (2.0 / n) * residual;  // dLoss/dpre for the output layer
    for (std::size_t l = depth; l-- > 0;) {
      const Eigen::MatrixXd gw = delta * act[l].transpose();
      const Eigen::VectorXd gb = delta.rowwise().sum();
      if (l > 0) delta = (layers[l].weight.transpose() * delta).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
      auto& mo = moments[l];
      mo.mw = b1 * mo.mw + (1 - b1) * gw;
      mo.vw = b2 * mo.vw + (1 - b2) * gw.cwiseProduct(gw);
      mo.mb = b1 * mo.mb + (1 - b1) * gb;
      mo.vb = b2 * mo.vb + (1 - b2) * gb.cwiseProduct(gb);
      layers[l].weight.array() -= params.learn_rate * (mo.mw.array() / (1 - b1t)) / ((mo.vw.array() / (1 - b2t)).sqrt() + eps);
      layers[l].bias.array() -= params.learn_rate * (mo.mb.array() / (1 - b1t)) / ((mo.vb.array() / (1 - b2t)).sqrt() + eps);
    }
  }
  return std::make_unique<FfnnRegressor>(std::move(spec), std::move(scaler), ys.mean, ys.stddev, std::move(layers),
                                         std::move(trace));
}

// ---------------------------------------------------------------------------
// SVR

namespace {

Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& lengthscales) {
  GPHyper h{0.0, lengthscales.array().log().matrix(), 0.0};
  return cross_kernel(a, b, h);
}

// Dual of epsilon-SVR over 2l variables beta = [alpha; alpha*]:
//   min 0.5 beta' Q beta + p' beta,  y' beta = 0,  0 <= beta <= C
// with y = [+1; -1], p = [eps - z; eps + z], Q_st = y_s y_t K(s mod l, t mod l).
SvrRegressor::Solution solve_svr_dual(const Eigen::MatrixXd& k, const Eigen::VectorXd& z, double c, double eps,
                                      double tol, long max_iterations) {
  const Eigen::Index l = z.size(), m = 2 * l;
  constexpr double tau = 1e-12;
  auto sign = [l](Eigen::Index t) { return t < l ? 1.0 : -1.0; };
  auto q = [&](Eigen::Index s, Eigen::Index t) { return sign(s) * sign(t) * k(s % l, t % l); };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd p(m), grad(m);
  p << (eps - z.array()).matrix(), (eps + z.array()).matrix();
  grad = p;
  auto at_upper = [&](Eigen::Index t) { return beta[t] >= c; };
  auto at_lower = [&](Eigen::Index t) { return beta[t] <= 0.0; };

  long iter = 0;
  for (;; ++iter) {
    // Second-order working-set selection.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < m; ++t) {
      if (sign(t) > 0) {
        if (!at_upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
      } else {
        if (!at_lower(t) && grad[t] >= gmax) { gmax = grad[t]; i = t; }
      }
    }
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < m && i >= 0; ++t) {
      if (sign(t) > 0) {
        if (at_lower(t)) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0) {
          const double a = k(i % l, i % l) + k(t % l, t % l) - 2.0 * sign(i) * q(i, t);
          const double obj = -diff * diff / (a > 0 ? a : tau);
          if (obj <= best) { best = obj; j = t; }
        }
      } else {
        if (at_upper(t)) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0) {
          const double a = k(i % l, i % l) + k(t % l, t % l) + 2.0 * sign(i) * q(i, t);
          const double obj = -diff * diff / (a > 0 ? a : tau);
          if (obj <= best) { best = obj; j = t; }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < tol) break;
    if (iter >= max_iterations)
      throw TrainingError("svr: no convergence within " + std::to_string(max_iterations) + " iterations");

    const double old_i = beta[i], old_j = beta[j];
    const double qii = k(i % l, i % l), qjj = k(j % l, j % l), qij = q(i, j);
    if (sign(i) != sign(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = beta[i] - beta[j];
      beta[i] += delta;
      beta[j] += delta;
      if (diff > 0) {
        if (beta[j] < 0) { beta[j] = 0; beta[i] = diff; }
      } else {
        if (beta[i] < 0) { beta[i] = 0; beta[j] = -diff; }
      }
      if (diff > 0) {
        if (beta[i] > c) { beta[i] = c; beta[j] = c - diff; }
      } else {
        if (beta[j] > c) { beta[j] = c; beta[i] = c + diff; }
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = beta[i] + beta[j];
      beta[i] -= delta;
      beta[j] += delta;
      if (sum > c) {
        if (beta[i] > c) { beta[i] = c; beta[j] = sum - c; }
      } else {
        if (beta[j] < 0) { beta[j] = 0; beta[i] = sum; }
      }
      if (sum > c) {
        if (beta[j] > c) { beta[j] = c; beta[i] = sum - c; }
      } else {
        if (beta[i] < 0) { beta[i] = 0; beta[j] = sum; }
      }
    }
    const double di = beta[i] - old_i, dj = beta[j] - old_j;
    for (Eigen::Index t = 0; t < m; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }

  // Offset from free variables, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    const double yg = sign(t) * grad[t];
    if (at_upper(t)) {
      if (sign(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (sign(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  SvrRegressor::Solution sol;
  sol.coef = beta.head(l) - beta.tail(l);
  sol.bias = -rho;
  sol.iterations = iter;
  sol.support_vectors = static_cast<int>((sol.coef.array().abs() > 0.0).count());
  sol.dual_objective = -(0.5 * beta.dot(grad + p));

  // The loss is piecewise linear in the bias, so its minimum sits on a
  // breakpoint r_i +- eps. Keep the SMO offset unless a breakpoint beats it.
  const Eigen::VectorXd kc = k * sol.coef;
  const Eigen::VectorXd r = z - kc;
  auto loss = [&](double b) { return ((r.array() - b).abs() - eps).max(0.0).sum(); };
  double best_loss = loss(sol.bias);
  for (Eigen::Index t = 0; t < l; ++t) {
    for (double b : {r[t] - eps, r[t] + eps}) {
      const double v = loss(b);
      if (v < best_loss - 1e-12 * (1.0 + best_loss)) {
        best_loss = v;
        sol.bias = b;
      }
    }
  }
  sol.primal_objective = 0.5 * sol.coef.dot(kc) + c * best_loss;
  return sol;
}

}  // namespace

SvrRegressor::SvrRegressor(RegressorSpec spec, Scaler scaler, double y_mean, double y_std, Eigen::MatrixXd train_z,
                           Eigen::VectorXd lengthscales, Solution solution)
    : FittedRegressor(std::move(spec)),
      scaler_(std::move(scaler)),
      y_mean_(y_mean),
      y_std_(y_std),
      train_z_(std::move(train_z)),
      lengthscales_(std::move(lengthscales)),
      sol_(std::move(solution)) {}

double SvrRegressor::predict(const Eigen::VectorXd& x) const {
  const Eigen::MatrixXd z = scaler_.transform_point(x).transpose();
  const double f = (rbf_gram(train_z_, z, lengthscales_).col(0)).dot(sol_.coef) + sol_.bias;
  return f * y_std_ + y_mean_;
}

std::unique_ptr<SvrRegressor> fit_svr(const TrainingSet& data, const SvrParams& params, std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::svr, params, seed};
  spec.validate();
  require_rows(data, 2, "svr");
  Eigen::VectorXd lengthscales = Eigen::VectorXd::Ones(data.x.cols());
  if (!params.lengthscales.empty()) {
    if (static_cast<Eigen::Index>(params.lengthscales.size()) != data.x.cols())
      throw ValidationError("svr: lengthscales must match the feature dimension");
    lengthscales = Eigen::Map<const Eigen::VectorXd>(params.lengthscales.data(), data.x.cols());
  }
  Scaler scaler = Scaler::fit(data.x);
  const TargetScale ys = fit_target_scale(data.y);
  Eigen::MatrixXd z = scaler.transform(data.x);
  const Eigen::VectorXd target = (data.y.array() - ys.mean) / ys.stddev;
  const Eigen::MatrixXd k = rbf_gram(z, z, lengthscales);
  auto sol = solve_svr_dual(k, target, params.c, params.epsilon, params.tolerance, params.max_iterations);
  return std::make_unique<SvrRegressor>(std::move(spec), std::move(scaler), ys.mean, ys.stddev, std::move(z),
                                        std::move(lengthscales), std::move(sol));
}

// ---------------------------------------------------------------------------
// GP family

std::unique_ptr<GprRegressor> fit_pooled_gpr(const TrainingSet& data, const GprParams& params, std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::gpr, params, seed};
  spec.validate();
  require_rows(data, 2, "gpr");
  AdamSettings adam;
  adam.learn_rate = params.learn_rate;
  const auto tuned = optimize_hyperparams(data.x, data.y, GPHyper::initial(data.x.cols()), params.epochs, adam);
  return std::make_unique<GprRegressor>(std::move(spec), fit_gp(data.x, data.y, tuned.hyper));
}

std::unique_ptr<GprLocoRegressor> fit_gpr_loco(const TrainingSet& data, const GprLocoParams& params,
                                               std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::gpr_loco, params, seed};
  spec.validate();
  require_rows(data, 2, "gpr_loco");
  const auto cells = group_by_cell(data);
  if (cells.size() < 2) throw ValidationError("gpr_loco: need at least 2 training cells");
  const Eigen::Index d = data.x.cols();

  // Concatenated training data for every holdout.
  struct Fold {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    const CellDataset* held_out;
  };
  std::vector<Fold> folds;
  for (std::size_t h = 0; h < cells.size(); ++h) {
    Eigen::Index rows = 0;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (c != h) rows += cells[c].x.rows();
    Fold fold{Eigen::MatrixXd(rows, d), Eigen::VectorXd(rows), &cells[h]};
    Eigen::Index r = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == h) continue;
      fold.x.middleRows(r, cells[c].x.rows()) = cells[c].x;
      fold.y.segment(r, cells[c].x.rows()) = cells[c].y;
      r += cells[c].x.rows();
    }
    folds.push_back(std::move(fold));
  }

  std::vector<GprLocoRegressor::Candidate> candidates;
  std::size_t winner = 0;
  for (double sf2 : params.signal_vars) {
    for (double ell : params.lengthscales) {
      for (double sn2 : params.noise_vars) {
        GPHyper hyper{std::log(sf2), Eigen::VectorXd::Constant(d, std::log(ell)), std::log(sn2)};
        double mae_sum = 0.0;
        for (const auto& fold : folds) {
          const GPModel model = fit_gp(fold.x, fold.y, hyper);
          double err = 0.0;
          for (Eigen::Index i = 0; i < fold.held_out->x.rows(); ++i)
            err += std::abs(predict(model, Eigen::VectorXd(fold.held_out->x.row(i).transpose())).mean - fold.held_out->y[i]);
          mae_sum += err / static_cast<double>(fold.held_out->x.rows());
        }
        candidates.push_back({hyper, mae_sum / static_cast<double>(folds.size())});
        if (candidates.back().loco_mae < candidates[winner].loco_mae) winner = candidates.size() - 1;
      }
    }
  }
  GPModel model = fit_gp(data.x, data.y, candidates[winner].hyper);
  return std::make_unique<GprLocoRegressor>(std::move(spec), std::move(model), std::move(candidates), winner);
}

std::unique_ptr<GprnRegressor> fit_gprn_regressor(const TrainingSet& data, const GprnParams& params,
                                                  std::uint64_t seed) {
  RegressorSpec spec{RegressorKind::gprn, params, seed};
  spec.validate();
  require_rows(data, 2, "gprn");
  AdamSettings adam;
  adam.learn_rate = params.learn_rate;
  return std::make_unique<GprnRegressor>(std::move(spec), train_gprn(group_by_cell(data), params.epochs, adam));
}

std::unique_ptr<FittedRegressor> fit_regressor(const RegressorSpec& spec, const TrainingSet& data) {
  spec.validate();
  switch (spec.kind) {
    case RegressorKind::poly1d: return fit_poly1d(data, std::get<Poly1dParams>(spec.params), spec.seed);
    case RegressorKind::polymulti: return fit_polymulti(data, std::get<PolyMultiParams>(spec.params), spec.seed);
    case RegressorKind::ffnn: return fit_ffnn(data, std::get<FfnnParams>(spec.params), spec.seed);
    case RegressorKind::svr: return fit_svr(data, std::get<SvrParams>(spec.params), spec.seed);
    case RegressorKind::gpr: return fit_pooled_gpr(data, std::get<GprParams>(spec.params), spec.seed);
    case RegressorKind::gpr_loco: return fit_gpr_loco(data, std::get<GprLocoParams>(spec.params), spec.seed);
    case RegressorKind::gprn: return fit_gprn_regressor(data, std::get<GprnParams>(spec.params), spec.seed);
  }
  throw ValidationError("unknown regressor kind");
}

}  // namespace bhealth
