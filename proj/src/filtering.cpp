#include "psid/filtering.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "psid/subspace.hpp"

namespace psid {

Residuals innovation_residuals(const PredictorModel& model, const Series& y,
                               const Series& z) {
  if (z.cols() != model.n_z() || z.rows() != y.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "z does not match model/y");
  }
  const EstimateTrace t = kalman_predict(model, y);
  return Residuals{y - t.y_pred, z - t.z_pred};
}

Matrix reduced_rank_regression_moments(const Matrix& Szy, const Matrix& Syy,
                                       int rank) {
  if (Syy.rows() != Syy.cols() || Szy.cols() != Syy.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "RRR moment shapes");
  }
  if (rank < 0) throw Error(ErrorCode::kInvalidArgument, "negative rank");
  const Matrix syy = 0.5 * (Syy + Syy.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(syy);
  const Vector& ev = es.eigenvalues();
  if (ev.size() == 0 || !(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 0.0)) ||
      !(ev.maxCoeff() > 0.0)) {
    throw Error(ErrorCode::kSingularGram, "E[y y'] is singular");
  }
  const Matrix& V = es.eigenvectors();
  const Matrix root_inv = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  // OLS map in whitened coordinates: Szy inv(Syy) root = Szy root_inv
  const Matrix whitened = Szy * root_inv;
  const int full = static_cast<int>(std::min(whitened.rows(), whitened.cols()));
  if (rank >= full) return whitened * root_inv;
  Eigen::JacobiSVD<Matrix> svd(whitened, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix truncated = svd.matrixU().leftCols(rank) *
                           svd.singularValues().head(rank).asDiagonal() *
                           svd.matrixV().leftCols(rank).transpose();
  return truncated * root_inv;
}

Matrix reduced_rank_regression(const Matrix& Z, const Matrix& Y, int rank) {
  if (Z.cols() != Y.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "Z and Y need equal column counts");
  }
  if (Y.cols() < Y.rows()) {
    throw Error(ErrorCode::kSingularGram, "fewer samples than regressors");
  }
  const double m = static_cast<double>(Y.cols());
  return reduced_rank_regression_moments(Z * Y.transpose() / m,
                                         Y * Y.transpose() / m, rank);
}

FilteringModel learn_filter_gain(const PredictorModel& model, const Series& y,
                                 const Series& z, GainVariant variant,
                                 int lookahead) {
  const Residuals res = innovation_residuals(model, y, z);
  const int nx = model.n_x();
  const int ny = model.n_y();
  const int nz = model.n_z();
  FilteringModel fm;
  fm.predictor = model;
  const Eigen::Index n = y.rows();

  if (variant == GainVariant::kDirect) {
    const double m = static_cast<double>(n);
    const Matrix szy = res.z_tilde.transpose() * res.y_tilde / m;
    const Matrix syy = res.y_tilde.transpose() * res.y_tilde / m;
    fm.CzKf = reduced_rank_regression_moments(szy, syy, std::min({nx, ny, nz}));
    return fm;
  }

  if (lookahead < 1) {
    throw Error(ErrorCode::kInvalidArgument, "horizon variant needs lookahead >= 1");
  }
  // The last lookahead - 1 samples have incomplete future stacks.
  const Eigen::Index cols = n - lookahead + 1;
  if (cols < ny + 1) {
    throw Error(ErrorCode::kTooFewSamples, "series shorter than the lookahead");
  }
  const Series x_pred = kalman_predict(model, y).x_pred;
  const Matrix gamma = extended_observability(model.A, model.C_z, lookahead);
  Series stacked(cols, static_cast<Eigen::Index>(lookahead) * nz);
  const Series predicted = x_pred.topRows(cols) * gamma.transpose();
  for (int l = 0; l < lookahead; ++l) {
    stacked.middleCols(static_cast<Eigen::Index>(l) * nz, nz) =
        z.middleRows(l, cols) - predicted.middleCols(static_cast<Eigen::Index>(l) * nz, nz);
  }
  const auto y_tilde = res.y_tilde.topRows(cols);
  const double m = static_cast<double>(cols);
  const Matrix szy = stacked.transpose() * y_tilde / m;
  const Matrix syy = y_tilde.transpose() * y_tilde / m;
  const Matrix gkf = reduced_rank_regression_moments(szy, syy, std::min(nx, ny));
  fm.GammaZKf = gkf;
  fm.CzKf = gkf.topRows(nz);
  return fm;
}

KfRecovery recover_kf(const FilteringModel& fm, KfSource source,
                      double rel_tol) {
  const PredictorModel& p = fm.predictor;
  Matrix readout;
  Matrix target;
  if (source == KfSource::kCz) {
    if (!fm.CzKf) throw Error(ErrorCode::kMissingGain, "C_z K_f not learned");
    readout = p.C_z;
    target = *fm.CzKf;
  } else {
    if (!fm.GammaZKf) {
      throw Error(ErrorCode::kMissingGain, "Gamma_z K_f not learned");
    }
    const int blocks = static_cast<int>(fm.GammaZKf->rows() / p.n_z());
    readout = extended_observability(p.A, p.C_z, blocks);
    target = *fm.GammaZKf;
  }
  Eigen::JacobiSVD<Matrix> svd(readout, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  KfRecovery out;
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (s(0) > 0.0 && s(j) > rel_tol * s(0)) ++out.rank;
  }
  out.observable = out.rank == p.n_x();
  const int r = out.rank;
  out.Kf = svd.matrixV().leftCols(r) *
           s.head(r).cwiseInverse().asDiagonal() *
           svd.matrixU().leftCols(r).transpose() * target;
  return out;
}

bool attach_kf(FilteringModel& fm, KfSource source, double rel_tol) {
  KfRecovery rec = recover_kf(fm, source, rel_tol);
  if (!rec.observable) return false;
  fm.CzKf = fm.predictor.C_z * rec.Kf;
  fm.Kf = std::move(rec.Kf);
  return true;
}

FilteringModel psid_with_filtering(const Series& y, const Series& z,
                                   const Dims& dims, GainVariant variant) {
  const PredictorModel model = psid_identify(y, z, dims);
  return learn_filter_gain(model, y, z, variant, dims.horizon_i);
}

}  // namespace psid
