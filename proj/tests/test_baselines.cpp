#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bhealth/baselines.hpp"
#include "bhealth/errors.hpp"
#include "bhealth/report.hpp"

using namespace bhealth;

namespace {

// n rows, 5 features, cells of 10 rows each named c0, c1, ...
TrainingSet make_set(int n, std::uint64_t seed, double (*f)(const Eigen::VectorXd&)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  TrainingSet t;
  t.x.resize(n, 5);
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 5; ++j) t.x(i, j) = u(rng);
    t.y[i] = f(t.x.row(i).transpose());
    t.cell_ids.push_back("c" + std::to_string(i / 10));
  }
  return t;
}

double cubic(const Eigen::VectorXd& x) { return 2.0 - 1.5 * x[0] + 0.5 * x[0] * x[0] + 0.25 * std::pow(x[0], 3); }
double interaction(const Eigen::VectorXd& x) { return 1.0 + x[0] + 3.0 * x[0] * x[1] - 0.5 * x[2]; }
double smooth(const Eigen::VectorXd& x) { return 80.0 + 5.0 * std::sin(x[0]) + 2.0 * x[1]; }

RegressorSpec fast_spec(RegressorKind kind) {
  auto s = RegressorSpec::defaults(kind, 3);
  if (kind == RegressorKind::ffnn) s.params = FfnnParams{{16}, 200, 1e-2};
  if (kind == RegressorKind::gpr) s.params = GprParams{20, 0.05};
  if (kind == RegressorKind::gprn) s.params = GprnParams{5, 0.05};
  return s;
}

}  // namespace

TEST(Poly1d, RecoversCubicExactly) {
  const auto t = make_set(40, 1, cubic);
  const auto m = fit_poly1d(t);
  const Eigen::VectorXd c = m->raw_coefficients();
  ASSERT_EQ(c.size(), 4);
  EXPECT_NEAR(c[0], 2.0, 1e-9);
  EXPECT_NEAR(c[1], -1.5, 1e-9);
  EXPECT_NEAR(c[2], 0.5, 1e-9);
  EXPECT_NEAR(c[3], 0.25, 1e-9);
  EXPECT_NEAR(m->predict(Eigen::VectorXd::Constant(5, 1.7)), cubic(Eigen::VectorXd::Constant(5, 1.7)), 1e-9);
}

TEST(Poly1d, TooFewRowsRejected) {
  const auto t = make_set(3, 1, cubic);
  EXPECT_THROW(fit_poly1d(t), ValidationError);
}

TEST(PolyMulti, RecoversInteraction) {
  const auto t = make_set(80, 2, interaction);
  PolyMultiParams p;
  p.degree = 2;
  p.ridge = 0.0;
  const auto m = fit_polymulti(t, p);
  Eigen::VectorXd x(5);
  x << 0.3, -1.2, 0.8, 1.9, -0.4;
  EXPECT_NEAR(m->predict(x), interaction(x), 1e-9);
  const auto names = m->basis_names();
  EXPECT_EQ(names.front(), "1");
  EXPECT_NE(std::find(names.begin(), names.end(), "x0*x1"), names.end());
}

TEST(PolyMulti, EqualsPoly1dWithoutInteractions) {
  auto t = make_set(50, 3, cubic);
  t.x.rightCols(4).setZero();  // only F1 varies
  const auto p1 = fit_poly1d(t);
  TrainingSet t1 = t;
  t1.x = t.x.leftCols(1);
  const auto pm = fit_polymulti(t1, {3, 0, 0.0});
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    x[0] = -2.0 + 0.4 * i;
    EXPECT_NEAR(pm->predict(x.head(1)), p1->predict(x), 1e-9);
  }
}

TEST(PolyMulti, BasisLargerThanDataRejected) {
  const auto t = make_set(12, 4, interaction);
  EXPECT_THROW(fit_polymulti(t), TrainingError);
}

TEST(Ffnn, LearnsLine) {
  auto t = make_set(60, 5, [](const Eigen::VectorXd& x) { return 2.0 * x[0] + 1.0; });
  t.x.rightCols(4).setZero();
  const auto m = fit_ffnn(t, {{32}, 800, 1e-2}, 9);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  for (double v : {-1.5, 0.0, 1.5}) {
    x[0] = v;
    EXPECT_NEAR(m->predict(x), 2.0 * v + 1.0, 0.1);
  }
  EXPECT_LT(m->loss_trace().back(), m->loss_trace().front());
}

TEST(Ffnn, SameSeedSameNetwork) {
  const auto t = make_set(30, 6, smooth);
  const auto a = fit_ffnn(t, {{8, 8}, 50, 1e-2}, 4);
  const auto b = fit_ffnn(t, {{8, 8}, 50, 1e-2}, 4);
  const auto c = fit_ffnn(t, {{8, 8}, 50, 1e-2}, 5);
  EXPECT_EQ(a->loss_trace(), b->loss_trace());
  EXPECT_EQ(a->predict_all(t.x), b->predict_all(t.x));
  EXPECT_NE(a->predict_all(t.x), c->predict_all(t.x));
}

TEST(Svr, FlatDataInsideTubeHasNoSupportVectors) {
  auto t = make_set(20, 7, [](const Eigen::VectorXd& x) { return 5.0 + 1e-4 * x[0]; });
  SvrParams p;
  p.epsilon = 2.0;  // standardized targets lie within about 1.8 of zero
  const auto m = fit_svr(t, p);
  EXPECT_EQ(m->solution().support_vectors, 0);
  EXPECT_NEAR(m->predict(t.x.row(0).transpose()), t.y.mean(), 1e-3);
}

TEST(Svr, DualityGapSmallAtTightTolerance) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto t = make_set(30, 10 + s, smooth);
    SvrParams p;
    p.tolerance = 1e-5;
    const auto m = fit_svr(t, p);
    EXPECT_GE(m->duality_gap(), -1e-9);
    EXPECT_LE(m->duality_gap(), 1e-3) << "seed " << s;
  }
}

TEST(Svr, IterationCapIsTrainingError) {
  const auto t = make_set(30, 20, smooth);
  SvrParams p;
  p.max_iterations = 2;
  EXPECT_THROW(fit_svr(t, p), TrainingError);
}

TEST(GprLoco, SingletonGridEqualsPooledWithThatHyper) {
  const auto t = make_set(40, 21, smooth);
  GprLocoParams p{{1.5}, {0.7}, {0.01}};
  const auto m = fit_gpr_loco(t, p);
  GPHyper h = GPHyper::initial(5);
  h.log_signal_var = std::log(1.5);
  h.log_lengthscales.setConstant(std::log(0.7));
  h.log_noise_var = std::log(0.01);
  const auto ref = fit_gp(t.x, t.y, h);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = t.x.row(i).transpose() * 0.9;
    EXPECT_NEAR(m->predict(x), predict(ref, x).mean, 1e-10);
  }
}

TEST(GprLoco, WinnerIsFirstArgmin) {
  const auto t = make_set(40, 22, smooth);
  const auto m = fit_gpr_loco(t);
  const auto& c = m->candidates();
  ASSERT_EQ(c.size(), 27u);
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i].loco_mae < c[best].loco_mae) best = i;
  EXPECT_EQ(m->winner(), best);
  EXPECT_EQ(m->model().hyper.pack(), c[best].hyper.pack());
}

TEST(GprLoco, NeedsTwoCells) {
  const auto t = make_set(8, 23, smooth);  // one cell
  EXPECT_THROW(fit_gpr_loco(t), ValidationError);
}

TEST(PooledGpr, SingleCellEqualsOneExpertGprn) {
  const auto t = make_set(10, 24, smooth);
  const auto pooled = fit_pooled_gpr(t, {15, 0.05});
  const auto gprn = fit_gprn_regressor(t, {15, 0.05});
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = t.x.row(i).transpose() * 1.1;
    EXPECT_NEAR(pooled->predict(x), gprn->predict(x), 1e-10);
  }
}

class AllKinds : public ::testing::TestWithParam<RegressorKind> {};

TEST_P(AllKinds, TargetAffineRescaleIsEquivariant) {
  set_warnings_enabled(false);
  const auto t = make_set(40, 30, smooth);
  TrainingSet s = t;
  s.y = 3.0 * t.y.array() + 7.0;
  const auto spec = fast_spec(GetParam());
  const auto a = fit_regressor(spec, t);
  const auto b = fit_regressor(spec, s);
  const Eigen::VectorXd pa = a->predict_all(t.x * 0.95);
  const Eigen::VectorXd pb = b->predict_all(t.x * 0.95);
  for (Eigen::Index i = 0; i < pa.size(); ++i) EXPECT_NEAR(pb[i], 3.0 * pa[i] + 7.0, 1e-6 * std::abs(pb[i]));
}

TEST_P(AllKinds, DeterministicRefit) {
  set_warnings_enabled(false);
  const auto t = make_set(40, 31, smooth);
  const auto spec = fast_spec(GetParam());
  EXPECT_EQ(fit_regressor(spec, t)->predict_all(t.x), fit_regressor(spec, t)->predict_all(t.x));
}

TEST_P(AllKinds, SpecRoundTripsThroughName) {
  EXPECT_EQ(parse_regressor_kind(to_string(GetParam())), GetParam());
  EXPECT_NO_THROW(RegressorSpec::defaults(GetParam()).validate());
}

INSTANTIATE_TEST_SUITE_P(Regressors, AllKinds, ::testing::ValuesIn(all_regressor_kinds()),
                         [](const auto& info) { return to_string(info.param); });

TEST(RegressorSpec, InvalidParamsRejected) {
  auto s = RegressorSpec::defaults(RegressorKind::svr);
  std::get<SvrParams>(s.params).c = -1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = RegressorSpec::defaults(RegressorKind::poly1d);
  s.params = SvrParams{};
  EXPECT_THROW(s.validate(), ValidationError);
  s = RegressorSpec::defaults(RegressorKind::gpr_loco);
  std::get<GprLocoParams>(s.params).signal_vars.clear();
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW(parse_regressor_kind("random_forest"), ValidationError);
}
