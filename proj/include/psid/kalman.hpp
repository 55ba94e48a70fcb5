#pragma once

#include <optional>
#include <vector>

#include "psid/lssm.hpp"

namespace psid {

/// Predictor model plus the learned update gain used for filtering the
/// secondary signal.
struct FilteringModel {
  PredictorModel predictor;
  std::optional<Matrix> CzKf;      // n_z x n_y
  std::optional<Matrix> GammaZKf;  // (i n_z) x n_y, horizon variant only
  std::optional<Matrix> Kf;        // n_x x n_y, when recovered or known
};

/// State and readout sequences produced by the estimators. Optional fields
/// are left empty (0 x 0) when the estimator does not compute them.
struct EstimateTrace {
  Series x_pred;  // x[k|k-1], x_pred.row(0) == 0
  Series x_filt;
  Series x_smooth;
  Series y_pred;
  Series z_pred;
  Series z_filt;
  Series z_smooth;
};

/// Steady-state predictor x[k+1|k] = (A - K C_y) x[k|k-1] + K y[k].
EstimateTrace kalman_predict(const PredictorModel& model, const Series& y);

/// Predictor plus the update step; with only C_z K_f the state trace stays
/// the predicted one and only the z readout is updated.
EstimateTrace kalman_filter(const FilteringModel& model, const Series& y);

/// Time-varying Kalman filter (P[0|-1] = I) followed by the
/// Rauch-Tung-Striebel backward pass. Handles S != 0 through the
/// filtered-state/next-state cross covariance P[k|k] A' - K_f[k] S'.
EstimateTrace rts_smooth(const StochasticModel& model, const Series& y);

/// Forward Kalman filter combined with a backward information filter.
/// Requires S == 0 and invertible Q and R. Oracle use only.
EstimateTrace two_filter_smooth(const StochasticModel& model, const Series& y);

/// Covariances P[k+1|k] of the time-varying filter started from
/// P[0|-1] = I, for convergence checks.
std::vector<Matrix> predicted_covariances(const StochasticModel& model,
                                          int steps);

struct R2Triple {
  double pred = 0.0;
  double filt = 0.0;
  double smooth = 0.0;
};

/// Decoding accuracy of the true model itself (the ideal reference).
R2Triple ideal_decode(const StochasticModel& true_model, const Series& y,
                      const Series& z);

}  // namespace psid
