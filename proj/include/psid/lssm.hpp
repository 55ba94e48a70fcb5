#pragma once

#include "psid/types.hpp"

namespace psid {

/// Forward stochastic form.
///   x[k+1] = A x[k] + w[k]
///   y[k]   = C_y x[k] + v[k]
///   z[k]   = C_z x[k] + eps[k]
/// with E[[w;v][w;v]'] = [[Q, S], [S', R]], cov(eps) = R_z and
/// E[w eps'] = S_xz. eps is independent of v.
struct StochasticModel {
  Matrix A, C_y, C_z, Q, R, S, R_z, S_xz;

  int n_x() const { return static_cast<int>(A.rows()); }
  int n_y() const { return static_cast<int>(C_y.rows()); }
  int n_z() const { return static_cast<int>(C_z.rows()); }

  /// Checks shapes, stability and the joint noise PSD constraint.
  void validate() const;
};

struct CovarianceSet {
  Matrix Sigma_x;  // E[x x']
  Matrix Sigma_y;  // E[y y']
  Matrix G_y;      // E[x[k+1] y[k]']
  Matrix G_z;      // E[x[k+1] z[k]']
};

/// Steady-state Kalman predictor form {A, C_y, C_z, K, Sigma_y} plus the
/// derived quantities that are known when it comes from a stochastic model.
struct PredictorModel {
  Matrix A, C_y, C_z, K;
  Matrix Sigma_y;
  Matrix G_y;
  Matrix Sigma_e;
  Matrix P_pred;  // steady-state one-step error covariance (empty if unknown)
  Matrix P_filt;  // steady-state filtered error covariance (empty if unknown)

  int n_x() const { return static_cast<int>(A.rows()); }
  int n_y() const { return static_cast<int>(C_y.rows()); }
  int n_z() const { return static_cast<int>(C_z.rows()); }
};

struct DareSolution {
  Matrix P_pred, P_filt, K, K_f, K_v, Sigma_e;
  int iterations = 0;
};

/// Time-reversed stochastic description of a forward model; the backward
/// state is inv(Sigma_x) x[k+1].
struct BackwardStochasticParams {
  Matrix A_bw;        // A'
  Matrix Cy_bw;       // G_y'
  Matrix Cz_bw;       // G_z'
  Matrix Gy_bw;       // C_y'
  Matrix Sigma_y_bw;  // Sigma_y
  Matrix K_bw;        // backward predictor gain
  Matrix Kf_bw;       // backward filter gain
  Matrix CzKf_bw;     // optimal backward update gain for z
  Matrix Sigma_e_bw;
  Matrix Sigma_x_bw;  // inv(Sigma_x)
  Matrix P_pred_bw;

  /// Predictor form of the backward model (to be run on reversed data).
  PredictorModel predictor() const;
};

// ---- Matrix helpers shared by the other modules -------------------------

/// Minimum eigenvalue test with tolerance 1e-8 * (1 + max eigenvalue).
bool is_psd(const Matrix& m);
double spectral_radius(const Matrix& m);
/// Solves X * B = Bm for X via LU with partial pivoting; throws `code` when
/// B's condition estimate exceeds 1e12.
Matrix right_solve(const Matrix& lhs, const Matrix& b, ErrorCode code);
/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
double rel_error(const Matrix& a, const Matrix& b);

// ---- Solvers ------------------------------------------------------------

/// Sigma = A Sigma A' + Q by doubling iteration.
Matrix solve_lyapunov(const Matrix& A, const Matrix& Q);

/// Steady state of the prediction-error Riccati recursion, iterated from
/// P = I.
DareSolution solve_dare(const Matrix& A, const Matrix& C_y, const Matrix& Q,
                        const Matrix& R, const Matrix& S);

/// Predictor-state covariance P_x and gain K from output statistics
/// {A, C, G, Sigma_y}, iterating P_x from zero. Returns false when the
/// recursion leaves the positive-real region or fails to converge.
bool solve_covariance_riccati(const Matrix& A, const Matrix& C,
                              const Matrix& G, const Matrix& Sigma_y,
                              Matrix* P_x, Matrix* K, Matrix* Sigma_e);

// ---- Form conversions ---------------------------------------------------

CovarianceSet covariances_from_stochastic(const StochasticModel& model);

struct NoiseTriple {
  Matrix Q, R, S;
};

/// Inverse of the covariance map for a chosen Sigma_x. Throws
/// kInvalidCovariance when [[Q,S],[S',R]] is not PSD, i.e. Sigma_x lies
/// outside the set of valid state covariances.
NoiseTriple stochastic_from_covariances(const Matrix& A, const Matrix& C_y,
                                        const Matrix& Sigma_x,
                                        const Matrix& Sigma_y,
                                        const Matrix& G_y);

PredictorModel to_predictor_form(const StochasticModel& model);

/// Optimal filter readout gain C_z K_f of a stochastic model.
Matrix optimal_czkf(const StochasticModel& model);

BackwardStochasticParams backward_stochastic_form(const StochasticModel& model);

// ---- Similarity transforms ---------------------------------------------

StochasticModel apply_similarity(const StochasticModel& model, const Matrix& T);
PredictorModel apply_similarity(const PredictorModel& model, const Matrix& T);

/// Dimension of the observable subspace of (C, A), with singular values of
/// the observability matrix below `rel_tol * sigma_max` treated as zero.
int observable_dimension(const Matrix& A, const Matrix& C,
                         double rel_tol = 1e-9);

/// [C; C A; ...; C A^(blocks-1)]
Matrix extended_observability(const Matrix& A, const Matrix& C, int blocks);

}  // namespace psid
