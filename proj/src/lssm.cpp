#include "psid/lssm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace psid {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonConvergent: return "NonConvergent";
    case ErrorCode::kSingularInnovation: return "SingularInnovation";
    case ErrorCode::kInvalidCovariance: return "InvalidCovariance";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kSingularTransform: return "SingularTransform";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMissingGain: return "MissingGain";
    case ErrorCode::kRequiresZeroS: return "RequiresZeroS";
    case ErrorCode::kSingularNoise: return "SingularNoise";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kSingularGram: return "SingularGram";
    case ErrorCode::kDegenerateAlignment: return "DegenerateAlignment";
    case ErrorCode::kDegenerateTarget: return "DegenerateTarget";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kFormatVersionError: return "FormatVersionError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

void Dims::validate() const {
  if (n_x < 1 || n_y < 1 || n_z < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_x, n_y, n_z must be >= 1");
  }
  if (n_1 < 0 || n_1 > n_x) {
    throw Error(ErrorCode::kInvalidArgument, "n_1 must lie in [0, n_x]");
  }
  if (horizon_i < 2) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 2");
  }
  if (horizon_i * n_y < n_x) {
    throw Error(ErrorCode::kInvalidArgument,
                "horizon * n_y must be >= n_x for a rank-feasible projection");
  }
}

namespace {

constexpr double kSingularRcond = 1e-12;

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                   const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(name) + " has shape " + std::to_string(m.rows()) +
                    "x" + std::to_string(m.cols()) + ", expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix inverse_checked(const Matrix& m, ErrorCode code) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (m.size() > 0 && !(lu.rcond() > kSingularRcond)) {
    throw Error(code, "matrix is numerically singular");
  }
  return lu.inverse();
}

}  // namespace

bool is_psd(const Matrix& m) {
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(m), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
  return lo >= -1e-8 * (1.0 + hi);
}

double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix right_solve(const Matrix& lhs, const Matrix& b, ErrorCode code) {
  // X b = lhs  <=>  b' X' = lhs'
  Eigen::PartialPivLU<Matrix> lu(b.transpose());
  if (b.size() > 0 && !(lu.rcond() > kSingularRcond)) {
    throw Error(code, "matrix is numerically singular");
  }
  return lu.solve(lhs.transpose()).transpose();
}

double rel_error(const Matrix& a, const Matrix& b) {
  const double denom = b.norm();
  const double diff = (a - b).norm();
  if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / denom;
}

void StochasticModel::validate() const {
  const auto nx = A.rows();
  const auto ny = C_y.rows();
  const auto nz = C_z.rows();
  require_shape(A, nx, nx, "A");
  require_shape(C_y, ny, nx, "C_y");
  require_shape(C_z, nz, nx, "C_z");
  require_shape(Q, nx, nx, "Q");
  require_shape(R, ny, ny, "R");
  require_shape(S, nx, ny, "S");
  require_shape(R_z, nz, nz, "R_z");
  require_shape(S_xz, nx, nz, "S_xz");
  if (spectral_radius(A) >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "A is not stable");
  }
  Matrix joint(nx + ny, nx + ny);
  joint << Q, S, S.transpose(), R;
  if ((joint - joint.transpose()).norm() > 1e-10 * (1.0 + joint.norm()) ||
      !is_psd(joint)) {
    throw Error(ErrorCode::kInvalidCovariance,
                "[[Q,S],[S',R]] is not symmetric PSD");
  }
  if (!is_psd(R_z)) {
    throw Error(ErrorCode::kInvalidCovariance, "R_z is not PSD");
  }
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& Q) {
  if (A.rows() != A.cols() || Q.rows() != A.rows() || Q.cols() != A.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "solve_lyapunov shapes");
  }
  if (spectral_radius(A) >= 1.0) {
    throw Error(ErrorCode::kNonConvergent,
                "Lyapunov equation needs spectral radius < 1");
  }
  Matrix sigma = sym(Q);
  Matrix power = A;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const Matrix delta = power * sigma * power.transpose();
    sigma += delta;
    power = power * power;
    if (delta.norm() <= 1e-14 * sigma.norm()) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kNonConvergent, "Lyapunov doubling did not converge");
  }
  return sym(sigma);
}

DareSolution solve_dare(const Matrix& A, const Matrix& C_y, const Matrix& Q,
                        const Matrix& R, const Matrix& S) {
  const auto nx = A.rows();
  const auto ny = C_y.rows();
  require_shape(A, nx, nx, "A");
  require_shape(C_y, ny, nx, "C_y");
  require_shape(Q, nx, nx, "Q");
  require_shape(R, ny, ny, "R");
  require_shape(S, nx, ny, "S");

  DareSolution out;
  Matrix P = Matrix::Identity(nx, nx);
  constexpr int kMaxIterations = 100000;
  bool converged = false;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const Matrix sigma_e = C_y * P * C_y.transpose() + R;
    const Matrix K = right_solve(A * P * C_y.transpose() + S, sigma_e,
                                 ErrorCode::kSingularInnovation);
    const Matrix next =
        sym(A * P * A.transpose() + Q - K * sigma_e * K.transpose());
    const double change = (next - P).norm();
    P = next;
    if (!std::isfinite(change)) break;
    if (change <= 1e-12 * std::max(P.norm(), 1e-12)) {
      converged = true;
      out.iterations = it;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kNonConvergent,
                "Riccati recursion did not reach steady state");
  }
  out.P_pred = P;
  out.Sigma_e = sym(C_y * P * C_y.transpose() + R);
  out.K_f = right_solve(P * C_y.transpose(), out.Sigma_e,
                        ErrorCode::kSingularInnovation);
  out.K_v = right_solve(S, out.Sigma_e, ErrorCode::kSingularInnovation);
  out.K = A * out.K_f + out.K_v;
  out.P_filt = sym(P - out.K_f * C_y * P);
  return out;
}

bool solve_covariance_riccati(const Matrix& A, const Matrix& C,
                              const Matrix& G, const Matrix& Sigma_y,
                              Matrix* P_x, Matrix* K, Matrix* Sigma_e) {
  const auto nx = A.rows();
  Matrix P = Matrix::Zero(nx, nx);
  const double scale = std::max(1.0, Sigma_y.norm() + G.norm());
  constexpr int kMaxIterations = 100000;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Matrix se = sym(Sigma_y - C * P * C.transpose());
    Eigen::LLT<Matrix> llt(se);
    if (llt.info() != Eigen::Success) return false;
    const Matrix gain_num = G - A * P * C.transpose();
    const Matrix next =
        sym(A * P * A.transpose() +
            gain_num * llt.solve(gain_num.transpose()));
    const double change = (next - P).norm();
    P = next;
    if (!std::isfinite(change) || P.norm() > 1e12 * scale) return false;
    if (change <= 1e-12 * std::max(P.norm(), 1e-12)) {
      const Matrix se_final = sym(Sigma_y - C * P * C.transpose());
      Eigen::LLT<Matrix> llt_final(se_final);
      if (llt_final.info() != Eigen::Success) return false;
      Matrix gain = llt_final
                        .solve((G - A * P * C.transpose()).transpose())
                        .transpose();
      if (spectral_radius(A - gain * C) >= 1.0) return false;
      *P_x = P;
      *K = std::move(gain);
      *Sigma_e = se_final;
      return true;
    }
  }
  return false;
}

CovarianceSet covariances_from_stochastic(const StochasticModel& model) {
  model.validate();
  CovarianceSet c;
  c.Sigma_x = solve_lyapunov(model.A, model.Q);
  c.Sigma_y = sym(model.C_y * c.Sigma_x * model.C_y.transpose() + model.R);
  c.G_y = model.A * c.Sigma_x * model.C_y.transpose() + model.S;
  c.G_z = model.A * c.Sigma_x * model.C_z.transpose() + model.S_xz;
  return c;
}

NoiseTriple stochastic_from_covariances(const Matrix& A, const Matrix& C_y,
                                        const Matrix& Sigma_x,
                                        const Matrix& Sigma_y,
                                        const Matrix& G_y) {
  if (!is_psd(Sigma_x)) {
    throw Error(ErrorCode::kInvalidCovariance, "Sigma_x is not PSD");
  }
  NoiseTriple t;
  t.Q = sym(Sigma_x - A * Sigma_x * A.transpose());
  t.R = sym(Sigma_y - C_y * Sigma_x * C_y.transpose());
  t.S = G_y - A * Sigma_x * C_y.transpose();
  const auto nx = A.rows();
  const auto ny = C_y.rows();
  Matrix joint(nx + ny, nx + ny);
  joint << t.Q, t.S, t.S.transpose(), t.R;
  if (!is_psd(joint)) {
    throw Error(ErrorCode::kInvalidCovariance,
                "Sigma_x does not produce a PSD noise covariance");
  }
  return t;
}

PredictorModel to_predictor_form(const StochasticModel& model) {
  const CovarianceSet cov = covariances_from_stochastic(model);
  const DareSolution dare =
      solve_dare(model.A, model.C_y, model.Q, model.R, model.S);
  PredictorModel p;
  p.A = model.A;
  p.C_y = model.C_y;
  p.C_z = model.C_z;
  p.K = dare.K;
  p.Sigma_y = cov.Sigma_y;
  p.G_y = cov.G_y;
  p.Sigma_e = dare.Sigma_e;
  p.P_pred = dare.P_pred;
  p.P_filt = dare.P_filt;
  return p;
}

Matrix optimal_czkf(const StochasticModel& model) {
  const DareSolution dare =
      solve_dare(model.A, model.C_y, model.Q, model.R, model.S);
  return model.C_z * dare.K_f;
}

BackwardStochasticParams backward_stochastic_form(
    const StochasticModel& model) {
  const CovarianceSet cov = covariances_from_stochastic(model);
  Eigen::PartialPivLU<Matrix> lu(cov.Sigma_x);
  if (!(lu.rcond() > kSingularRcond)) {
    throw Error(ErrorCode::kSingularCovariance, "Sigma_x is not invertible");
  }
  const Matrix sigma_x_inv = sym(lu.inverse());

  BackwardStochasticParams b;
  b.A_bw = model.A.transpose();
  b.Cy_bw = cov.G_y.transpose();
  b.Cz_bw = cov.G_z.transpose();
  b.Gy_bw = model.C_y.transpose();
  b.Sigma_y_bw = cov.Sigma_y;
  b.Sigma_x_bw = sigma_x_inv;

  Matrix P_x;
  if (!solve_covariance_riccati(b.A_bw, b.Cy_bw, b.Gy_bw, b.Sigma_y_bw, &P_x,
                                &b.K_bw, &b.Sigma_e_bw)) {
    throw Error(ErrorCode::kNonConvergent,
                "backward Riccati equation has no stabilizing solution");
  }
  b.P_pred_bw = sym(sigma_x_inv - P_x);
  b.Kf_bw = right_solve(b.P_pred_bw * b.Cy_bw.transpose(), b.Sigma_e_bw,
                        ErrorCode::kSingularInnovation);
  // z[k] carries a same-sample correlation with the backward output noise,
  // so the update gain is E[z e'] inv(Sigma_e) rather than Cz_bw * Kf_bw.
  const Matrix z_e = model.C_z * cov.Sigma_x * model.C_y.transpose() -
                     b.Cz_bw * P_x * b.Cy_bw.transpose();
  b.CzKf_bw = right_solve(z_e, b.Sigma_e_bw, ErrorCode::kSingularInnovation);
  return b;
}

PredictorModel BackwardStochasticParams::predictor() const {
  PredictorModel p;
  p.A = A_bw;
  p.C_y = Cy_bw;
  p.C_z = Cz_bw;
  p.K = K_bw;
  p.Sigma_y = Sigma_y_bw;
  p.G_y = Gy_bw;
  p.Sigma_e = Sigma_e_bw;
  p.P_pred = P_pred_bw;
  p.P_filt = sym(P_pred_bw - Kf_bw * Cy_bw * P_pred_bw);
  return p;
}

StochasticModel apply_similarity(const StochasticModel& model,
                                 const Matrix& T) {
  require_shape(T, model.n_x(), model.n_x(), "T");
  const Matrix T_inv = inverse_checked(T, ErrorCode::kSingularTransform);
  StochasticModel m = model;
  m.A = T * model.A * T_inv;
  m.C_y = model.C_y * T_inv;
  m.C_z = model.C_z * T_inv;
  m.Q = sym(T * model.Q * T.transpose());
  m.S = T * model.S;
  m.S_xz = T * model.S_xz;
  return m;
}

PredictorModel apply_similarity(const PredictorModel& model, const Matrix& T) {
  require_shape(T, model.n_x(), model.n_x(), "T");
  const Matrix T_inv = inverse_checked(T, ErrorCode::kSingularTransform);
  PredictorModel m = model;
  m.A = T * model.A * T_inv;
  m.C_y = model.C_y * T_inv;
  m.C_z = model.C_z * T_inv;
  m.K = T * model.K;
  if (model.G_y.size() > 0) m.G_y = T * model.G_y;
  if (model.P_pred.size() > 0) m.P_pred = sym(T * model.P_pred * T.transpose());
  if (model.P_filt.size() > 0) m.P_filt = sym(T * model.P_filt * T.transpose());
  return m;
}

Matrix extended_observability(const Matrix& A, const Matrix& C, int blocks) {
  Matrix obs(C.rows() * blocks, A.cols());
  Matrix block = C;
  for (int l = 0; l < blocks; ++l) {
    obs.middleRows(l * C.rows(), C.rows()) = block;
    block = block * A;
  }
  return obs;
}

int observable_dimension(const Matrix& A, const Matrix& C, double rel_tol) {
  const int nx = static_cast<int>(A.rows());
  if (nx == 0) return 0;
  const Matrix obs = extended_observability(A, C, nx);
  Eigen::JacobiSVD<Matrix> svd(obs);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (s(j) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

}  // namespace psid
