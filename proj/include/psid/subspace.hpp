#pragma once

#include "psid/lssm.hpp"

namespace psid {

/// Stacked windows of a signal: block row l of column j holds sample
/// start + j + l.
struct HankelBlock {
  Matrix data;  // (i * dim) x M
  int i = 0;
  int dim = 0;
  Eigen::Index start = 0;

  Eigen::Index columns() const { return data.cols(); }
};

/// Builds the block Hankel matrix with `columns` columns, or the maximal
/// N - start - i + 1 columns when `columns` < 0.
HankelBlock build_hankel(const Series& signal, int i, Eigen::Index start,
                         Eigen::Index columns = -1);

/// Smallest horizon that keeps both projection stages and their one-step
/// shifted versions rank-feasible; never below 4.
int default_horizon(int n_x, int n_y, int n_z, int n_1);

/// Two-stage preferential subspace identification of the predictor form.
/// Stage 1 extracts n_1 states from the projection of future z onto past y;
/// stage 2 extracts n_x - n_1 states from the projection of the residual
/// future y. n_1 = 0 is standard stochastic subspace identification.
PredictorModel psid_identify(const Series& y, const Series& z,
                             const Dims& dims);

}  // namespace psid
