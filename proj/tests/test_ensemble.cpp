#include <gtest/gtest.h>

#include <random>

#include "bhealth/ensemble.hpp"
#include "bhealth/errors.hpp"

using namespace bhealth;

namespace {

CellDataset cell(const std::string& id, int n, double shift, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CellDataset c;
  c.cell_id = id;
  c.x.resize(n, 2);
  c.y.resize(n);
  for (int i = 0; i < n; ++i) {
    c.x(i, 0) = 10.0 * i / n + 0.1 * u(rng);
    c.x(i, 1) = u(rng);
    c.y[i] = 100.0 - 3.0 * c.x(i, 0) + shift + 0.2 * u(rng);
  }
  return c;
}

}  // namespace

TEST(Mixture, TwoEqualExperts) {
  const auto m = mixture_moments(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0, 2), Eigen::Vector2d(1, 1));
  EXPECT_DOUBLE_EQ(m.mean, 1.0);
  EXPECT_DOUBLE_EQ(m.epistemic, 1.0);
  EXPECT_DOUBLE_EQ(m.aleatoric, 1.0);
  EXPECT_DOUBLE_EQ(m.variance, 2.0);
  EXPECT_DOUBLE_EQ(m.stddev(), std::sqrt(2.0));
}

TEST(Mixture, LawOfTotalVarianceAndMonteCarlo) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    const int k = 2 + t;
    Eigen::VectorXd w(k), mu(k), s2(k);
    for (int i = 0; i < k; ++i) {
      w[i] = 0.2 + u(rng);
      mu[i] = 5 + 10 * u(rng);
      s2[i] = 0.1 + 4 * u(rng);
    }
    w /= w.sum();
    const auto m = mixture_moments(w, mu, s2);
    EXPECT_NEAR(m.variance, m.epistemic + m.aleatoric, 1e-9 * m.variance);
    EXPECT_NEAR(m.mean, w.dot(mu), 1e-12);

    // draw from the mixture
    std::discrete_distribution<int> pick(w.data(), w.data() + k);
    std::normal_distribution<double> z(0.0, 1.0);
    double s = 0, ss = 0;
    const int draws = 400000;
    for (int i = 0; i < draws; ++i) {
      const int c = pick(rng);
      const double v = mu[c] + std::sqrt(s2[c]) * z(rng);
      s += v;
      ss += v * v;
    }
    const double mc_mean = s / draws, mc_var = ss / draws - mc_mean * mc_mean;
    EXPECT_NEAR(mc_mean, m.mean, 1e-2 * m.mean);
    EXPECT_NEAR(mc_var, m.variance, 2e-2 * m.variance);
  }
}

TEST(Mixture, MismatchedLengthsRejected) {
  EXPECT_THROW(mixture_moments(Eigen::Vector2d(0.5, 0.5), Eigen::Vector3d(0, 1, 2), Eigen::Vector2d(1, 1)),
               ValidationError);
  EXPECT_THROW(mixture_moments(Eigen::VectorXd(), Eigen::VectorXd(), Eigen::VectorXd()), ValidationError);
}

TEST(Gprn, UniformWeightsOnePerCell) {
  std::mt19937_64 rng(1);
  const auto model = train_gprn({cell("a", 15, 0, rng), cell("b", 15, 2, rng), cell("c", 15, -1, rng)}, 5);
  ASSERT_EQ(model.experts.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(model.weights[i], 1.0 / 3.0);
  EXPECT_EQ(model.experts[1].cell_id, "b");
  EXPECT_EQ(model.epochs_used, 5);
}

TEST(Gprn, SingleExpertEqualsPlainGp) {
  std::mt19937_64 rng(2);
  const auto c = cell("a", 20, 0, rng);
  const auto model = train_gprn({c}, 15);
  const auto opt = optimize_hyperparams(c.x, c.y, GPHyper::initial(2), 15);
  const auto gp = fit_gp(c.x, c.y, opt.hyper);
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd xs(2);
    xs << 1.3 * i, 0.4;
    const auto a = predict_mixture(model, xs);
    const auto b = predict(gp, xs);
    EXPECT_NEAR(a.mean, b.mean, 1e-10);
    EXPECT_NEAR(a.variance, b.variance, 1e-10);
    EXPECT_EQ(a.aleatoric, 0.0);
  }
}

TEST(Gprn, ExportImportPreservesPredictions) {
  std::mt19937_64 rng(3);
  const auto model = train_gprn({cell("a", 12, 0, rng), cell("b", 10, 3, rng)}, 8);
  const auto text = export_gprn(model);
  EXPECT_NE(text.find(kGprnSchema), std::string::npos);
  const auto back = import_gprn(text);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd xs(2);
    xs << 2.0 * i, 0.5;
    const auto a = predict_mixture(model, xs);
    const auto b = predict_mixture(back, xs);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.variance, b.variance);
  }
  EXPECT_EQ(export_gprn(back), text);
}

TEST(Gprn, ImportRejectsBadDocuments) {
  EXPECT_THROW(import_gprn("not json"), ValidationError);
  EXPECT_THROW(import_gprn(R"({"schema":"other/1"})"), ValidationError);
}

TEST(Gprn, InvalidTrainingInputs) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(train_gprn({}, 5), ValidationError);
  EXPECT_THROW(train_gprn({cell("a", 10, 0, rng)}, -1), ValidationError);
  EXPECT_THROW(train_gprn({cell("a", 1, 0, rng)}, 5), ValidationError);
}

TEST(Gprn, EpochTuningPicksArgminAndBreaksTiesLow) {
  std::mt19937_64 rng(5);
  std::vector<CellDataset> cells{cell("a", 12, 0, rng), cell("b", 12, 1, rng), cell("c", 12, -1, rng)};
  const auto t = tune_epochs(cells, {0, 10, 10}, {{"a", "b"}, {"b", "c"}});
  ASSERT_EQ(t.train_mae.size(), 3u);
  EXPECT_EQ(t.train_mae[1], t.train_mae[2]);
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (t.train_mae[i] < t.train_mae[best]) best = i;
  EXPECT_EQ(t.selected, t.candidates[best]);
  EXPECT_THROW(tune_epochs(cells, {5}, {{"zz"}}), ValidationError);
}
