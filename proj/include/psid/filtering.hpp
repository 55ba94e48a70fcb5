#pragma once

#include <utility>

#include "psid/kalman.hpp"

namespace psid {

struct Residuals {
  Series y_tilde;  // y[k] - y[k|k-1]
  Series z_tilde;  // z[k] - z[k|k-1]
};

Residuals innovation_residuals(const PredictorModel& model, const Series& y,
                               const Series& z);

/// argmin over rank(M) <= rank of ||Z - M Y||_F for wide data matrices
/// Z (n_z x M) and Y (n_y x M).
Matrix reduced_rank_regression(const Matrix& Z, const Matrix& Y, int rank);

/// Same problem stated through the second moments E[z y'] and E[y y'].
Matrix reduced_rank_regression_moments(const Matrix& Szy, const Matrix& Syy,
                                       int rank);

enum class GainVariant { kDirect, kHorizon };

/// Learns the update gain from one-step-ahead residuals. The horizon
/// variant regresses the stacked multi-step residuals
/// z[k+l] - C_z A^l x[k|k-1], l < lookahead, on y_tilde[k], learning
/// Gamma_z K_f; the first n_z rows give C_z K_f.
FilteringModel learn_filter_gain(const PredictorModel& model, const Series& y,
                                 const Series& z,
                                 GainVariant variant = GainVariant::kDirect,
                                 int lookahead = 0);

enum class KfSource { kCz, kGammaZ };

/// Result of solving C_z K_f (or Gamma_z K_f) for K_f. When the readout has
/// full column rank n_x the solution is exact; otherwise `observable` is
/// false and `Kf` holds the minimum-norm solution restricted to the
/// numerically observable subspace.
struct KfRecovery {
  bool observable = false;
  int rank = 0;
  Matrix Kf;
};

KfRecovery recover_kf(const FilteringModel& fm, KfSource source,
                      double rel_tol = 1e-2);

/// Stores K_f when recovery succeeds and replaces C_z K_f by C_z * K_f (its
/// projection onto the range of C_z). Returns false and leaves the model
/// untouched otherwise.
bool attach_kf(FilteringModel& fm, KfSource source = KfSource::kCz,
               double rel_tol = 1e-2);

FilteringModel psid_with_filtering(const Series& y, const Series& z,
                                   const Dims& dims,
                                   GainVariant variant = GainVariant::kDirect);

}  // namespace psid
