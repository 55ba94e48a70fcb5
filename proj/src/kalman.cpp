#include "psid/kalman.hpp"

#include <algorithm>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "psid/sim_eval.hpp"

namespace psid {
namespace {

void check_series(const Series& y, Eigen::Index dim) {
  if (y.cols() != dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "series has " + std::to_string(y.cols()) +
                    " columns, model expects " + std::to_string(dim));
  }
}

// Covariances below this scale are treated as exactly zero; inverting them
// would overflow.
constexpr double kTinyCovariance = 1e-100;

Matrix pinv(const Matrix& m) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (lu.rcond() > 1e-10 && m.cwiseAbs().maxCoeff() > kTinyCovariance) {
    return lu.inverse();
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff =
      std::max(s.size() > 0 ? 1e-12 * s(0) : 0.0, kTinyCovariance);
  Vector s_inv = Vector::Zero(s.size());
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (s(j) > cutoff) s_inv(j) = 1.0 / s(j);
  }
  return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

Matrix inverse_or_throw(const Matrix& m, ErrorCode code, const char* what) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (!(lu.rcond() > 1e-12)) throw Error(code, what);
  return lu.inverse();
}

// Time-varying forward pass shared by both smoothers.
struct ForwardPass {
  Series x_pred, x_filt;
  std::vector<Matrix> P_filt;      // P[k|k]
  std::vector<Matrix> P_pred_next; // P[k+1|k]
  std::vector<Matrix> K_f;         // K_f[k]
};

ForwardPass run_forward(const StochasticModel& m, const Series& y,
                        bool keep_covariances) {
  const Eigen::Index n = y.rows();
  const int nx = m.n_x();
  ForwardPass f;
  f.x_pred = Series::Zero(n, nx);
  f.x_filt = Series::Zero(n, nx);
  if (keep_covariances) {
    f.P_filt.reserve(n);
    f.P_pred_next.reserve(n);
    f.K_f.reserve(n);
  }
  Vector x = Vector::Zero(nx);
  Matrix P = Matrix::Identity(nx, nx);
  for (Eigen::Index k = 0; k < n; ++k) {
    f.x_pred.row(k) = x.transpose();
    const Matrix sigma_e = m.C_y * P * m.C_y.transpose() + m.R;
    Eigen::PartialPivLU<Matrix> lu(sigma_e);
    const Matrix PCt = P * m.C_y.transpose();
    const Matrix Kf = lu.solve(PCt.transpose()).transpose();
    const Matrix K =
        lu.solve((m.A * PCt + m.S).transpose()).transpose();
    const Vector e = y.row(k).transpose() - m.C_y * x;
    f.x_filt.row(k) = (x + Kf * e).transpose();
    const Matrix Pf = P - Kf * PCt.transpose();
    x = m.A * x + K * e;
    Matrix next = m.A * P * m.A.transpose() + m.Q - K * sigma_e * K.transpose();
    next = 0.5 * (next + next.transpose());
    if (keep_covariances) {
      f.P_filt.push_back(0.5 * (Pf + Pf.transpose()));
      f.P_pred_next.push_back(next);
      f.K_f.push_back(Kf);
    }
    P = std::move(next);
  }
  return f;
}

Series readout(const Series& x, const Matrix& C) {
  return x * C.transpose();
}

}  // namespace

EstimateTrace kalman_predict(const PredictorModel& model, const Series& y) {
  check_series(y, model.n_y());
  const Eigen::Index n = y.rows();
  const int nx = model.n_x();
  EstimateTrace t;
  t.x_pred = Series::Zero(n, nx);
  const Matrix closed = model.A - model.K * model.C_y;
  Vector x = Vector::Zero(nx);
  for (Eigen::Index k = 0; k < n; ++k) {
    t.x_pred.row(k) = x.transpose();
    x = closed * x + model.K * y.row(k).transpose();
  }
  t.y_pred = readout(t.x_pred, model.C_y);
  t.z_pred = readout(t.x_pred, model.C_z);
  return t;
}

EstimateTrace kalman_filter(const FilteringModel& model, const Series& y) {
  if (!model.CzKf && !model.Kf) {
    throw Error(ErrorCode::kMissingGain,
                "filtering needs C_z K_f or K_f to be set");
  }
  EstimateTrace t = kalman_predict(model.predictor, y);
  const Series innovations = y - t.y_pred;
  if (model.Kf) {
    t.x_filt = t.x_pred + innovations * model.Kf->transpose();
  }
  if (model.CzKf) {
    t.z_filt = t.z_pred + innovations * model.CzKf->transpose();
  } else {
    t.z_filt = readout(t.x_filt, model.predictor.C_z);
  }
  return t;
}

EstimateTrace rts_smooth(const StochasticModel& model, const Series& y) {
  model.validate();
  check_series(y, model.n_y());
  const Eigen::Index n = y.rows();
  ForwardPass f = run_forward(model, y, true);

  EstimateTrace t;
  t.x_pred = f.x_pred;
  t.x_filt = f.x_filt;
  t.x_smooth = Series::Zero(n, model.n_x());
  if (n > 0) t.x_smooth.row(n - 1) = f.x_filt.row(n - 1);
  for (Eigen::Index k = n - 2; k >= 0; --k) {
    const Matrix cross = f.P_filt[k] * model.A.transpose() -
                         f.K_f[k] * model.S.transpose();
    const Matrix L = cross * pinv(f.P_pred_next[k]);
    const Vector diff = (t.x_smooth.row(k + 1) - f.x_pred.row(k + 1)).transpose();
    t.x_smooth.row(k) = f.x_filt.row(k) + (L * diff).transpose();
  }
  t.y_pred = readout(t.x_pred, model.C_y);
  t.z_pred = readout(t.x_pred, model.C_z);
  t.z_filt = readout(t.x_filt, model.C_z);
  t.z_smooth = readout(t.x_smooth, model.C_z);
  return t;
}

EstimateTrace two_filter_smooth(const StochasticModel& model, const Series& y) {
  model.validate();
  check_series(y, model.n_y());
  if (model.S.cwiseAbs().maxCoeff() != 0.0) {
    throw Error(ErrorCode::kRequiresZeroS,
                "two-filter smoother assumes uncorrelated state/output noise");
  }
  const Matrix R_inv =
      inverse_or_throw(model.R, ErrorCode::kSingularNoise, "R is singular");
  const Matrix Q_inv =
      inverse_or_throw(model.Q, ErrorCode::kSingularNoise, "Q is singular");
  const Eigen::Index n = y.rows();
  const int nx = model.n_x();
  ForwardPass f = run_forward(model, y, true);

  const Matrix CtRinv = model.C_y.transpose() * R_inv;
  const Matrix info_gain = CtRinv * model.C_y;
  const Matrix I = Matrix::Identity(nx, nx);

  EstimateTrace t;
  t.x_pred = f.x_pred;
  t.x_filt = f.x_filt;
  t.x_smooth = Series::Zero(n, nx);
  Vector xb = Vector::Zero(nx);       // backward information vector, k|k+1
  Matrix Pb = Matrix::Zero(nx, nx);   // backward information matrix, k|k+1
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const Matrix Pf_inv = pinv(f.P_filt[k]);
    const Matrix Ps = pinv(Pf_inv + Pb);
    t.x_smooth.row(k) =
        (Ps * (Pf_inv * f.x_filt.row(k).transpose() + xb)).transpose();
    const Vector xb_upd = xb + CtRinv * y.row(k).transpose();
    const Matrix Pb_upd = Pb + info_gain;
    const Matrix J = Pb_upd * (Pb_upd + Q_inv).inverse();
    xb = model.A.transpose() * (I - J) * xb_upd;
    Pb = model.A.transpose() * (I - J) * Pb_upd * model.A;
    Pb = 0.5 * (Pb + Pb.transpose());
  }
  t.y_pred = readout(t.x_pred, model.C_y);
  t.z_pred = readout(t.x_pred, model.C_z);
  t.z_filt = readout(t.x_filt, model.C_z);
  t.z_smooth = readout(t.x_smooth, model.C_z);
  return t;
}

std::vector<Matrix> predicted_covariances(const StochasticModel& model,
                                          int steps) {
  const Series y = Series::Zero(steps, model.n_y());
  return run_forward(model, y, true).P_pred_next;
}

R2Triple ideal_decode(const StochasticModel& true_model, const Series& y,
                      const Series& z) {
  check_series(z, true_model.n_z());
  const DareSolution dare = solve_dare(true_model.A, true_model.C_y,
                                       true_model.Q, true_model.R, true_model.S);
  FilteringModel fm;
  fm.predictor = to_predictor_form(true_model);
  fm.Kf = dare.K_f;
  fm.CzKf = true_model.C_z * dare.K_f;
  const EstimateTrace filt = kalman_filter(fm, y);
  const EstimateTrace smooth = rts_smooth(true_model, y);
  R2Triple r;
  r.pred = r2_score(z, filt.z_pred);
  r.filt = r2_score(z, filt.z_filt);
  r.smooth = r2_score(z, smooth.z_smooth);
  return r;
}

}  // namespace psid
