#include <gtest/gtest.h>

#include "psid/kalman.hpp"
#include "test_util.hpp"

namespace psid {
namespace {

using testing::max_abs;
using testing::random_model;
using testing::scalar_model;

SimData sim(const StochasticModel& m, Eigen::Index n, std::uint64_t seed) {
  Rng rng = cell_rng(seed, 0, 0, 7);
  return simulate(m, n, rng);
}

double mse(const Series& a, const Series& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

TEST(KalmanPredictTest, ZeroGainGivesZeroEstimates) {
  PredictorModel p = to_predictor_form(random_model(1, 2, 2, 1));
  p.K.setZero();
  const SimData d = sim(random_model(1, 2, 2, 1), 50, 1);
  const EstimateTrace t = kalman_predict(p, d.y);
  EXPECT_EQ(max_abs(t.x_pred), 0.0);
  EXPECT_EQ(max_abs(t.y_pred), 0.0);
}

TEST(KalmanPredictTest, ScalarHandRecursion) {
  PredictorModel p = to_predictor_form(scalar_model(0.5, 1.0, 1.0, 1.0));
  p.K(0, 0) = 0.26556;
  Series y(2, 1);
  y << 1.0, 0.0;
  const EstimateTrace t = kalman_predict(p, y);
  EXPECT_EQ(t.x_pred(0, 0), 0.0);
  EXPECT_NEAR(t.x_pred(1, 0), 0.26556, 1e-12);
  EXPECT_NEAR(t.y_pred(1, 0), 0.26556, 1e-12);
}

TEST(KalmanPredictTest, InnovationCovarianceMatches) {
  const StochasticModel m = random_model(2, 3, 2, 1);
  const PredictorModel p = to_predictor_form(m);
  const SimData d = sim(m, 100000, 2);
  const EstimateTrace t = kalman_predict(p, d.y);
  const Series e = (d.y - t.y_pred).bottomRows(99000);
  const Matrix cov = e.transpose() * e / static_cast<double>(e.rows());
  EXPECT_LT(rel_error(cov, p.Sigma_e), 0.05);
}

TEST(KalmanPredictTest, DimensionMismatchThrows) {
  const PredictorModel p = to_predictor_form(random_model(3, 2, 2, 1));
  try {
    kalman_predict(p, Series::Zero(10, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(KalmanFilterTest, MissingGainThrows) {
  FilteringModel fm;
  fm.predictor = to_predictor_form(random_model(4, 2, 2, 1));
  try {
    kalman_filter(fm, Series::Zero(10, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingGain);
  }
}

TEST(KalmanFilterTest, ZeroUpdateKeepsPrediction) {
  const StochasticModel m = random_model(5, 2, 2, 2);
  FilteringModel fm;
  fm.predictor = to_predictor_form(m);
  fm.CzKf = Matrix::Zero(2, 2);
  const EstimateTrace t = kalman_filter(fm, sim(m, 200, 5).y);
  EXPECT_EQ(max_abs(t.z_filt - t.z_pred), 0.0);
}

TEST(KalmanFilterTest, StateAndReadoutPathsAgree) {
  StochasticModel m = random_model(6, 2, 3, 2);
  m.C_z = Matrix::Identity(2, 2);
  m.R_z = Matrix::Identity(2, 2);
  const DareSolution dare = solve_dare(m.A, m.C_y, m.Q, m.R, m.S);
  FilteringModel by_state, by_readout;
  by_state.predictor = by_readout.predictor = to_predictor_form(m);
  by_state.Kf = dare.K_f;
  by_readout.CzKf = m.C_z * dare.K_f;
  const Series y = sim(m, 500, 6).y;
  EXPECT_LT(max_abs(kalman_filter(by_state, y).z_filt -
                    kalman_filter(by_readout, y).z_filt),
            1e-12);
}

TEST(KalmanFilterTest, FilteringBeatsPrediction) {
  const StochasticModel m = scalar_model(0.9, 1.0, 1.0, 1.0);
  const SimData d = sim(m, 50000, 7);
  FilteringModel fm;
  fm.predictor = to_predictor_form(m);
  fm.Kf = solve_dare(m.A, m.C_y, m.Q, m.R, m.S).K_f;
  const EstimateTrace t = kalman_filter(fm, d.y);
  EXPECT_LT(mse(t.x_filt, d.x), mse(t.x_pred, d.x));
}

TEST(RtsTest, TerminalSampleEqualsFiltered) {
  const StochasticModel m = random_model(8, 3, 2, 1, true);
  const EstimateTrace t = rts_smooth(m, sim(m, 300, 8).y);
  EXPECT_LT(max_abs(t.x_smooth.bottomRows(1) - t.x_filt.bottomRows(1)), 1e-14);
}

TEST(RtsTest, SingleSampleSmoothedIsFiltered) {
  const StochasticModel m = random_model(9, 2, 2, 1);
  const EstimateTrace t = rts_smooth(m, sim(m, 1, 9).y);
  EXPECT_LT(max_abs(t.x_smooth - t.x_filt), 1e-14);
}

TEST(RtsTest, NoiselessStateErrorVanishes) {
  StochasticModel m = random_model(10, 2, 2, 1);
  m.Q.setZero();
  Rng rng = cell_rng(10, 0, 0, 0);
  const SimData d = simulate_from_zero(m, 2000, rng);
  EXPECT_EQ(max_abs(d.x), 0.0);
  // Deterministic dynamics: the error covariance keeps shrinking.
  EXPECT_LT(predicted_covariances(m, 2000).back().norm(), 1e-2);
  const EstimateTrace t = rts_smooth(m, d.y);
  EXPECT_LT(max_abs(t.x_smooth.bottomRows(100)), 0.1);
}

TEST(RtsTest, MseOrdering) {
  for (int seed = 0; seed < 3; ++seed) {
    const StochasticModel m = random_model(20 + seed, 2, 2, 1, seed == 1);
    const SimData d = sim(m, 2000, 20 + seed);
    const EstimateTrace t = rts_smooth(m, d.y);
    EXPECT_LE(mse(t.x_smooth, d.x), mse(t.x_filt, d.x));
    EXPECT_LE(mse(t.x_filt, d.x), mse(t.x_pred, d.x));
  }
}

TEST(RtsTest, CorrelatedNoiseSmootherIsUnbiasedAgainstBruteForce) {
  // Batch least-squares smoother over the joint Gaussian of x and y on a
  // short record; RTS must reproduce E[x | y].
  const StochasticModel m = random_model(30, 2, 1, 1, true);
  const int n = 6;
  const int nx = 2;
  const SimData d = sim(m, n, 30);
  // Covariance of [x0..x(n-1); y0..y(n-1)] with x0 ~ N(0, I) to match the
  // smoother's P[0|-1] = I initialization.
  const int dim = n * nx + n;
  Matrix T = Matrix::Zero(dim, nx + n * (nx + 1));
  // x_k = A^k x0 + sum_j A^(k-1-j) w_j ; y_k = C x_k + v_k
  // noise vector u = [x0; (w0, v0); (w1, v1); ...]
  Matrix L = Matrix::Zero(nx + n * (nx + 1), nx + n * (nx + 1));
  L.topLeftCorner(nx, nx) = Matrix::Identity(nx, nx);
  Matrix joint(nx + 1, nx + 1);
  joint << m.Q, m.S, m.S.transpose(), m.R;
  for (int k = 0; k < n; ++k) {
    L.block(nx + k * (nx + 1), nx + k * (nx + 1), nx + 1, nx + 1) = joint;
  }
  Matrix Ak = Matrix::Identity(nx, nx);
  for (int k = 0; k < n; ++k) {
    T.block(k * nx, 0, nx, nx) = Ak;
    Matrix Aj = Matrix::Identity(nx, nx);
    for (int j = k - 1; j >= 0; --j) {
      T.block(k * nx, nx + j * (nx + 1), nx, nx) = Aj;
      Aj = Aj * m.A;
    }
    T.block(n * nx + k, 0, 1, T.cols()) = m.C_y * T.block(k * nx, 0, nx, T.cols());
    T(n * nx + k, nx + k * (nx + 1) + nx) += 1.0;
    Ak = m.A * Ak;
  }
  const Matrix cov = T * L * T.transpose();
  const Matrix cxy = cov.block(0, n * nx, n * nx, n);
  const Matrix cyy = cov.block(n * nx, n * nx, n, n);
  const Eigen::VectorXd yv = d.y.col(0);
  const Eigen::VectorXd xs = cxy * cyy.ldlt().solve(yv);
  const EstimateTrace t = rts_smooth(m, d.y);
  for (int k = 0; k < n; ++k) {
    EXPECT_NEAR(t.x_smooth(k, 0), xs(k * nx), 1e-9);
    EXPECT_NEAR(t.x_smooth(k, 1), xs(k * nx + 1), 1e-9);
  }
}

TEST(TwoFilterTest, MatchesRtsOnRandomModels) {
  for (int seed = 0; seed < 10; ++seed) {
    const StochasticModel m = random_model(40 + seed, 1 + seed % 4, 1 + seed % 3, 1);
    const Series y = sim(m, 500, 40 + seed).y;
    const EstimateTrace a = rts_smooth(m, y);
    const EstimateTrace b = two_filter_smooth(m, y);
    EXPECT_LT(max_abs(a.x_smooth - b.x_smooth), 1e-8) << "seed " << seed;
  }
}

TEST(TwoFilterTest, RequiresZeroS) {
  const StochasticModel m = random_model(50, 2, 2, 1, true);
  try {
    two_filter_smooth(m, Series::Zero(10, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRequiresZeroS);
  }
}

TEST(TwoFilterTest, SingularNoiseThrows) {
  StochasticModel m = random_model(51, 2, 2, 1);
  m.Q.setZero();
  try {
    two_filter_smooth(m, Series::Zero(10, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularNoise);
  }
}

TEST(PredictedCovarianceTest, ConvergesToDare) {
  const StochasticModel m = random_model(52, 3, 2, 1, true);
  const auto ps = predicted_covariances(m, 400);
  const DareSolution d = solve_dare(m.A, m.C_y, m.Q, m.R, m.S);
  EXPECT_LT(rel_error(ps.back(), d.P_pred), 1e-9);
}

TEST(IdealDecodeTest, IrrelevantTargetScoresNearZero) {
  StochasticModel m = random_model(53, 2, 2, 1);
  m.C_z.setZero();
  const SimData d = sim(m, 20000, 53);
  const R2Triple r = ideal_decode(m, d.y, d.z);
  EXPECT_NEAR(r.pred, 0.0, 1e-3);
  EXPECT_NEAR(r.filt, 0.0, 1e-3);
  EXPECT_NEAR(r.smooth, 0.0, 1e-3);
}

TEST(IdealDecodeTest, EstimatorOrdering) {
  for (int seed = 0; seed < 3; ++seed) {
    const StochasticModel m = random_model(60 + seed, 3, 2, 2, seed == 2);
    const SimData d = sim(m, 100000, 60 + seed);
    const R2Triple r = ideal_decode(m, d.y, d.z);
    EXPECT_GE(r.smooth, r.filt - 0.005);
    EXPECT_GE(r.filt, r.pred - 0.005);
  }
}

}  // namespace
}  // namespace psid
