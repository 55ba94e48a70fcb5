#include <gtest/gtest.h>

#include "psid/kalman.hpp"
#include "psid/subspace.hpp"
#include "test_util.hpp"

namespace psid {
namespace {

using testing::random_model;
using testing::scalar_model;

SimData sim(const StochasticModel& m, Eigen::Index n, std::uint64_t seed) {
  Rng rng = cell_rng(seed, 0, 0, 11);
  return simulate(m, n, rng);
}

Dims dims_for(const StochasticModel& m, int n_x, int n_1) {
  Dims d;
  d.n_x = n_x;
  d.n_y = m.n_y();
  d.n_z = m.n_z();
  d.n_1 = n_1;
  d.horizon_i = default_horizon(n_x, d.n_y, d.n_z, n_1);
  return d;
}

TEST(HankelTest, ScalarEnumeration) {
  Series s(4, 1);
  s << 1, 2, 3, 4;
  const HankelBlock h = build_hankel(s, 2, 0);
  ASSERT_EQ(h.data.rows(), 2);
  ASSERT_EQ(h.columns(), 3);
  Matrix expected(2, 3);
  expected << 1, 2, 3, 2, 3, 4;
  EXPECT_EQ(h.data, expected);
  EXPECT_EQ(build_hankel(s, 2, 0, 1).data, expected.leftCols(1));
}

TEST(HankelTest, InterleavesWithinSample) {
  Series s(3, 2);
  s << 1, 10, 2, 20, 3, 30;
  const HankelBlock h = build_hankel(s, 2, 0);
  Matrix expected(4, 2);
  expected << 1, 2, 10, 20, 2, 3, 20, 30;
  EXPECT_EQ(h.data, expected);
  EXPECT_EQ(h.dim, 2);
  EXPECT_EQ(h.i, 2);
}

TEST(HankelTest, ShiftDropsFirstColumn) {
  Series s = Series::Random(12, 2);
  const HankelBlock a = build_hankel(s, 3, 0);
  const HankelBlock b = build_hankel(s, 3, 1);
  EXPECT_EQ(b.data, a.data.rightCols(a.columns() - 1));
}

TEST(HankelTest, TooFewSamples) {
  Series s = Series::Ones(2, 1);
  try {
    build_hankel(s, 3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewSamples);
  }
}

TEST(DefaultHorizonTest, NeverBelowFour) {
  EXPECT_GE(default_horizon(1, 1, 1, 1), 4);
  EXPECT_GE(default_horizon(6, 1, 1, 1) * 1, 6);
}

TEST(PsidIdentifyTest, ScalarModelConverges) {
  const StochasticModel m = scalar_model(0.8, 1.0, 1.0, 1.0);
  const SimData d = sim(m, 1000000, 1);
  const PredictorModel p = psid_identify(d.y, d.z, dims_for(m, 1, 1));
  EXPECT_LT(std::abs(p.A(0, 0) - 0.8) / 0.8, 0.01);
}

TEST(PsidIdentifyTest, PredictorIsStable) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const StochasticModel m = random_model(seed, 3, 3, 2);
    const SimData d = sim(m, 20000, seed);
    const PredictorModel p = psid_identify(d.y, d.z, dims_for(m, 3, 3));
    EXPECT_LT(spectral_radius(p.A - p.K * p.C_y), 1.0) << seed;
    EXPECT_EQ(p.Sigma_y, p.Sigma_y.transpose());
    EXPECT_TRUE(is_psd(p.Sigma_y));
  }
}

// Two independent states: a loud one seen only in y and a quieter one that
// drives z. With a one-state budget only the prioritized fit finds z.
TEST(PsidIdentifyTest, StagePriorityBeatsPlainSid) {
  StochasticModel m;
  m.A = Matrix::Zero(2, 2);
  m.A.diagonal() << 0.95, 0.6;
  m.C_y = Matrix(2, 2);
  m.C_y << 3.0, 0.0, 0.0, 1.0;
  m.C_z = Matrix(1, 2);
  m.C_z << 0.0, 1.0;
  m.Q = Matrix::Identity(2, 2);
  m.R = 0.1 * Matrix::Identity(2, 2);
  m.S = Matrix::Zero(2, 2);
  m.R_z = Matrix::Constant(1, 1, 0.1);
  m.S_xz = Matrix::Zero(2, 1);
  const SimData train = sim(m, 100000, 3);
  const SimData test = sim(m, 50000, 4);
  const PredictorModel psid = psid_identify(train.y, train.z, dims_for(m, 1, 1));
  const PredictorModel sid = psid_identify(train.y, train.z, dims_for(m, 1, 0));
  const double r2_psid = r2_score(test.z, kalman_predict(psid, test.y).z_pred);
  const double r2_sid = r2_score(test.z, kalman_predict(sid, test.y).z_pred);
  EXPECT_GT(r2_psid, r2_sid + 0.05);
}

TEST(PsidIdentifyTest, WhiteNoiseHasNoPredictableStructure) {
  Rng rng = cell_rng(5, 0, 0, 1);
  std::normal_distribution<double> normal;
  const Eigen::Index n = 100000;
  Series y(n, 1), z(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    y(k, 0) = normal(rng);
    z(k, 0) = normal(rng);
  }
  Dims d;
  d.n_x = 1;
  d.n_y = 1;
  d.n_z = 1;
  d.n_1 = 1;
  d.horizon_i = default_horizon(1, 1, 1, 1);
  const PredictorModel p = psid_identify(y, z, d);
  const EstimateTrace t = kalman_predict(p, y);
  const double var_pred = t.y_pred.squaredNorm() / static_cast<double>(n);
  EXPECT_LT(var_pred, 0.01);
  EXPECT_LT(std::abs(r2_score(z, t.z_pred)), 0.01);
}

TEST(PsidIdentifyTest, RejectsBadDims) {
  const StochasticModel m = random_model(2, 2, 2, 2);
  const SimData d = sim(m, 2000, 2);
  Dims bad = dims_for(m, 2, 3);
  try {
    psid_identify(d.y, d.z, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  try {
    psid_identify(d.y.topRows(20), d.z.topRows(20), dims_for(m, 2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewSamples);
  }
  try {
    psid_identify(d.y, d.z.topRows(100), dims_for(m, 2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

}  // namespace
}  // namespace psid
