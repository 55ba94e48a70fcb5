#include <gtest/gtest.h>

#include <complex>

#include "psid/subspace.hpp"
#include "test_util.hpp"

namespace psid {
namespace {

using testing::max_abs;
using testing::random_model;
using testing::scalar_model;

Matrix cross_cov(const Series& a, const Series& b) {
  return a.transpose() * b / static_cast<double>(a.rows());
}

TEST(CellRngTest, StreamsAreDistinctAndRepeatable) {
  Rng a = cell_rng(1, 2, 3, 4);
  Rng b = cell_rng(1, 2, 3, 4);
  Rng c = cell_rng(1, 2, 3, 5);
  Rng d = cell_rng(1, 3, 3, 4);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
}

TEST(GenerateRandomModelTest, OutputsSatisfyInvariants) {
  GenConfig cfg;
  cfg.correlated_S = true;
  cfg.allow_Sxz = true;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng = cell_rng(seed, 0, 0, 0);
    const StochasticModel m = generate_random_model(cfg, rng);
    EXPECT_NO_THROW(m.validate());
    EXPECT_LT(spectral_radius(m.A), cfg.eig_max + 1e-9);
    EXPECT_GE(m.n_x(), cfg.n_x.lo);
    EXPECT_LE(m.n_x(), cfg.n_x.hi);
    EXPECT_LE(m.n_y(), cfg.n_y.hi);
    EXPECT_LE(m.n_z(), cfg.n_z.hi);
    Eigen::EigenSolver<Matrix> es(m.A);
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
      EXPECT_GE(std::abs(es.eigenvalues()(j)), cfg.eig_min - 1e-9);
    }
    const CovarianceSet cov = covariances_from_stochastic(m);
    const DareSolution dare = solve_dare(m.A, m.C_y, m.Q, m.R, m.S);
    EXPECT_TRUE(is_psd(cov.Sigma_x - dare.P_pred));
  }
}

TEST(GenerateRandomModelTest, CorrelatedSGivesNonzeroKv) {
  const StochasticModel m = random_model(4, 3, 2, 2, true);
  EXPECT_GT(m.S.norm(), 0.0);
  const DareSolution dare = solve_dare(m.A, m.C_y, m.Q, m.R, m.S);
  EXPECT_GT(dare.K_v.norm(), 1e-6);
  const Matrix expected = m.S * dare.Sigma_e.inverse();
  EXPECT_LT(max_abs(dare.K_v - expected), 1e-10);
}

TEST(GenerateRandomModelTest, DeterministicAndRandomPolicy) {
  GenConfig cfg;
  cfg.n1_policy = N1Policy::kRandom;
  Rng a = cell_rng(9, 1, 0, 0);
  Rng b = cell_rng(9, 1, 0, 0);
  const StochasticModel ma = generate_random_model(cfg, a);
  const StochasticModel mb = generate_random_model(cfg, b);
  EXPECT_EQ(ma.A, mb.A);
  EXPECT_EQ(ma.C_y, mb.C_y);
  EXPECT_EQ(ma.Q, mb.Q);
  EXPECT_EQ(ma.R_z, mb.R_z);
  bool saw_unobservable = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = cell_rng(seed, 0, 0, 0);
    const StochasticModel m = generate_random_model(cfg, rng);
    if (observable_dimension(m.A, m.C_z) < m.n_x()) saw_unobservable = true;
  }
  EXPECT_TRUE(saw_unobservable);
}

TEST(GenConfigTest, RejectsBadRanges) {
  GenConfig cfg;
  cfg.eig_max = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = GenConfig{};
  cfg.n_x = {3, 2};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(SimulateTest, ZeroNoiseFromZeroIsZero) {
  StochasticModel m = random_model(2, 2, 2, 2);
  m.Q.setZero();
  m.R.setZero();
  m.S.setZero();
  m.R_z.setZero();
  m.S_xz.setZero();
  Rng rng = cell_rng(1, 0, 0, 0);
  const SimData d = simulate_from_zero(m, 100, rng);
  EXPECT_EQ(max_abs(d.y), 0.0);
  EXPECT_EQ(max_abs(d.z), 0.0);
}

TEST(SimulateTest, MonteCarloCovariances) {
  GenConfig cfg;
  cfg.n_x = {3, 3};
  cfg.n_y = {2, 2};
  cfg.n_z = {2, 2};
  cfg.correlated_S = true;
  cfg.allow_Sxz = true;
  Rng mrng = cell_rng(6, 0, 0, 0);
  const StochasticModel m = generate_random_model(cfg, mrng);
  Rng rng = cell_rng(6, 0, 0, 1);
  const Eigen::Index n = 1000000;
  const SimData d = simulate(m, n, rng);
  const CovarianceSet cov = covariances_from_stochastic(m);
  EXPECT_LT(rel_error(cross_cov(d.y, d.y), cov.Sigma_y), 0.05);
  const Series x_next = d.x.bottomRows(n - 1);
  EXPECT_LT(rel_error(cross_cov(x_next, d.y.topRows(n - 1)), cov.G_y), 0.05);
  EXPECT_LT(rel_error(cross_cov(x_next, d.z.topRows(n - 1)), cov.G_z), 0.05);
  EXPECT_LT(rel_error(cross_cov(d.x, d.x), cov.Sigma_x), 0.05);
}

TEST(AlignModelsTest, RecoversSyntheticTransform) {
  const StochasticModel m = random_model(3, 3, 2, 2);
  const PredictorModel truth = to_predictor_form(m);
  Matrix T0(3, 3);
  T0 << 1.0, 0.5, 0.0, -0.3, 2.0, 0.1, 0.2, 0.0, 0.7;
  const PredictorModel learned = apply_similarity(truth, T0);
  Rng rng = cell_rng(3, 0, 0, 2);
  const SimData d = simulate(m, 20000, rng);
  const Alignment al = align_models(m, learned, d.y);
  EXPECT_LT(max_abs(al.T - T0.inverse()), 1e-8);
  EXPECT_LT(max_abs(al.aligned.A - truth.A), 1e-8);
  EXPECT_LT(max_abs(al.aligned.C_y - truth.C_y), 1e-8);
  EXPECT_LT(max_abs(al.aligned.C_z - truth.C_z), 1e-8);
  EXPECT_LT(max_abs(al.aligned.K - truth.K), 1e-8);

  const Series before = kalman_predict(learned, d.y).z_pred;
  const Series after = kalman_predict(al.aligned, d.y).z_pred;
  EXPECT_LT(max_abs(before - after), 1e-8);

  const Alignment self = align_models(m, truth, d.y);
  EXPECT_LT(max_abs(self.T - Matrix::Identity(3, 3)), 1e-8);
}

TEST(AlignModelsTest, DegenerateTrajectories) {
  const StochasticModel m = random_model(3, 2, 2, 2);
  PredictorModel learned = to_predictor_form(m);
  learned.K.setZero();
  Rng rng = cell_rng(3, 0, 0, 2);
  const SimData d = simulate(m, 1000, rng);
  try {
    align_models(m, learned, d.y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateAlignment);
  }
}

TEST(CompareParametersTest, IdenticalAndScaled) {
  const StochasticModel m = random_model(5, 2, 2, 2);
  const ParameterSet truth = true_parameters(m);
  const ParameterErrors same = compare_parameters(truth, truth);
  EXPECT_EQ(same.A, 0.0);
  EXPECT_EQ(same.K, 0.0);
  EXPECT_EQ(same.CzKf, 0.0);
  EXPECT_EQ(same.eigA, 0.0);
  ASSERT_TRUE(same.Kf.has_value());
  EXPECT_EQ(*same.Kf, 0.0);

  const ParameterSet s = true_parameters(scalar_model(0.5, 1.0, 1.0, 1.0));
  ParameterSet scaled = s;
  scaled.A *= 1.1;
  scaled.Kf.reset();
  const ParameterErrors e = compare_parameters(s, scaled);
  EXPECT_NEAR(e.A, 0.1, 1e-15);
  EXPECT_NEAR(e.eigA, 0.1, 1e-15);
  EXPECT_FALSE(e.Kf.has_value());
}

TEST(EigenvalueErrorTest, MatchesAcrossOrdering) {
  Matrix a(2, 2);
  a << 0.9, 0.0, 0.0, 0.2;
  Matrix b(2, 2);
  b << 0.2, 0.0, 0.0, 0.9;
  EXPECT_NEAR(eigenvalue_error(a, b), 0.0, 1e-15);
  Matrix rot(2, 2);
  rot << 0.5, -0.5, 0.5, 0.5;  // 0.5 +- 0.5i
  Matrix rot2 = rot;
  rot2(0, 0) = rot2(1, 1) = 0.6;  // 0.6 +- 0.5i
  EXPECT_NEAR(eigenvalue_error(rot, rot2), std::sqrt(0.02) / 1.0, 1e-12);
}

TEST(R2ScoreTest, HandExamples) {
  Series z(4, 1);
  z << 0, 1, 2, 3;
  EXPECT_NEAR(r2_score(z, Series::Zero(4, 1)), -1.8, 1e-15);
  EXPECT_EQ(r2_score(z, z), 1.0);
  EXPECT_NEAR(r2_score(z, Series::Constant(4, 1, 1.5)), 0.0, 1e-15);
  Series two(4, 2);
  two << 0, 5, 1, 5, 2, 5, 3, 5;  // constant column is skipped
  Series hat = Series::Zero(4, 2);
  EXPECT_NEAR(r2_score(two, hat), -1.8, 1e-15);
  try {
    r2_score(Series::Constant(4, 1, 2.0), Series::Zero(4, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateTarget);
  }
}

TEST(ShiftedBaselineTest, MatchesIdealFilteringWithoutS) {
  const StochasticModel m = random_model(8, 2, 2, 2);
  Rng rng = cell_rng(8, 0, 0, 1);
  const SimData train = simulate(m, 300000, rng);
  const SimData test = simulate(m, 100000, rng);
  Dims d;
  d.n_x = 2;
  d.n_y = 2;
  d.n_z = 2;
  d.n_1 = 2;
  d.horizon_i = default_horizon(2, 2, 2, 2);
  const PredictorModel base = shifted_psid_baseline(train.y, train.z, d);
  const double shifted = r2_score(test.z, shifted_decode(base, test.y));
  const R2Triple ideal = ideal_decode(m, test.y, test.z);
  EXPECT_NEAR(shifted, ideal.filt, 0.01);
  EXPECT_GE(shifted, ideal.pred - 0.005);
}

}  // namespace
}  // namespace psid
