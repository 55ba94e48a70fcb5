#include "psid/subspace.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace psid {

HankelBlock build_hankel(const Series& signal, int i, Eigen::Index start,
                         Eigen::Index columns) {
  if (i < 1 || start < 0) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  }
  const Eigen::Index n = signal.rows();
  const Eigen::Index available = n - start - i + 1;
  if (columns < 0) columns = available;
  if (available < 1 || columns > available) {
    throw Error(ErrorCode::kTooFewSamples,
                "signal too short for the requested Hankel block");
  }
  HankelBlock h;
  h.i = i;
  h.dim = static_cast<int>(signal.cols());
  h.start = start;
  h.data.resize(static_cast<Eigen::Index>(i) * h.dim, columns);
  for (Eigen::Index j = 0; j < columns; ++j) {
    for (int l = 0; l < i; ++l) {
      h.data.block(static_cast<Eigen::Index>(l) * h.dim, j, h.dim, 1) =
          signal.row(start + j + l).transpose();
    }
  }
  return h;
}

int default_horizon(int n_x, int n_y, int n_z, int n_1) {
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  int i = 4;
  i = std::max(i, ceil_div(n_x, n_y) + 2);
  if (n_1 > 0) i = std::max(i, ceil_div(n_1, n_z) + 2);
  return i;
}

namespace {

// Every derived signal in the identification is a fixed linear combination
// W * h of the stacked data vector h = [y_past; y_future; z_future]. All
// statistics then follow from the single Gram matrix Phi = E[h h'].
class StackedMoments {
 public:
  StackedMoments(const Series& y, const Series& z, int i)
      : i_(i), ny_(static_cast<int>(y.cols())), nz_(static_cast<int>(z.cols())) {
    const Eigen::Index m = y.rows() - 2 * i + 1;
    using Strided = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
    // Consecutive columns of a row-major series overlap by all but one
    // sample, so both Hankel blocks are views into the raw buffers.
    const Strided hy(y.data(), 2 * i * ny_, m, Eigen::OuterStride<>(ny_));
    const Strided hz(z.data() + static_cast<Eigen::Index>(i) * nz_, i * nz_, m,
                     Eigen::OuterStride<>(nz_));
    const int ry = 2 * i * ny_;
    const int rz = i * nz_;
    phi_.resize(ry + rz, ry + rz);
    phi_.topLeftCorner(ry, ry).noalias() = hy * hy.transpose();
    phi_.bottomLeftCorner(rz, ry).noalias() = hz * hy.transpose();
    phi_.bottomRightCorner(rz, rz).noalias() = hz * hz.transpose();
    phi_.topRightCorner(ry, rz) = phi_.bottomLeftCorner(rz, ry).transpose();
    phi_ /= static_cast<double>(m);
  }

  int rows() const { return static_cast<int>(phi_.rows()); }

  // Row ranges of the stacked vector.
  int y_row(int block) const { return block * ny_; }
  int z_row(int block) const { return 2 * i_ * ny_ + block * nz_; }

  Matrix select(int first_row, int count) const {
    Matrix w = Matrix::Zero(count, rows());
    w.middleCols(first_row, count).setIdentity();
    return w;
  }

  Matrix cov(const Matrix& wa, const Matrix& wb) const {
    return wa * phi_ * wb.transpose();
  }

  // Orthogonal projection of the signals W h onto the first `past_rows`
  // entries of h (a past window of y), returned as weights on h together
  // with the "whitened" factor whose SVD carries the projection's singular
  // structure.
  struct Projection {
    Matrix weights;
    Matrix whitened;
  };

  Projection project_onto_past(const Matrix& w, int past_rows) const {
    Matrix gram = phi_.topLeftCorner(past_rows, past_rows);
    add_ridge(gram);
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kRankDeficient, "past Gram is not positive definite");
    }
    const Matrix cross = w * phi_.leftCols(past_rows);  // E[s h_p']
    Projection p;
    p.weights = Matrix::Zero(w.rows(), rows());
    p.weights.leftCols(past_rows) = llt.solve(cross.transpose()).transpose();
    // cross * inv(L') so that whitened * whitened' = cov(projection)
    p.whitened = llt.matrixL().solve(cross.transpose()).transpose();
    return p;
  }

  static void add_ridge(Matrix& gram) {
    if (gram.rows() == 0) return;
    const double eps = 1e-8 * gram.trace() / static_cast<double>(gram.rows());
    gram.diagonal().array() += eps;
  }

 private:
  int i_, ny_, nz_;
  Matrix phi_;
};

Matrix regress(const Matrix& cross, Matrix gram) {
  // cross * inv(gram) with ridge
  StackedMoments::add_ridge(gram);
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::kRankDeficient, "state Gram is singular");
  }
  return ldlt.solve(cross.transpose()).transpose();
}

struct StageResult {
  Matrix gamma;   // extended observability estimate, (i * dim) x n
  Matrix w_now;   // state weights at time k
};

// Top-n SVD triplets of a projection, with each left singular vector signed
// so that its first nonzero entry is positive.
StageResult extract_states(const StackedMoments::Projection& p, int n) {
  Eigen::JacobiSVD<Matrix> svd(p.whitened, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  if (n > s.size() || s.size() == 0 || !(s(0) > 0.0) ||
      !(s(n - 1) > 1e-12 * s(0))) {
    throw Error(ErrorCode::kRankDeficient,
                "projection has fewer than " + std::to_string(n) +
                    " significant singular values");
  }
  Matrix U = svd.matrixU().leftCols(n);
  for (int c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      if (std::abs(U(r, c)) > 1e-12) {
        if (U(r, c) < 0) U.col(c) *= -1.0;
        break;
      }
    }
  }
  const Vector sqrt_s = s.head(n).cwiseSqrt();
  StageResult out;
  out.gamma = U * sqrt_s.asDiagonal();
  out.w_now = sqrt_s.cwiseInverse().asDiagonal() * U.transpose() * p.weights;
  return out;
}

Matrix left_pinv_apply(const Matrix& gamma, const Matrix& rhs) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gamma);
  if (cod.rank() < gamma.cols()) {
    throw Error(ErrorCode::kRankDeficient,
                "shifted observability matrix lost column rank; increase the horizon");
  }
  return cod.solve(rhs);
}

// Mirrors eigenvalues outside the unit circle to 1 / conj(lambda); short
// records can otherwise produce explosive dynamics.
Matrix stabilize(const Matrix& A) {
  if (A.size() == 0 || spectral_radius(A) < 1.0) return A;
  Eigen::EigenSolver<Matrix> es(A);
  Eigen::VectorXcd lambda = es.eigenvalues();
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    const double r = std::abs(lambda(k));
    if (r >= 1.0) lambda(k) = std::min(1.0 / r, 0.999) * lambda(k) / r;
  }
  const Eigen::MatrixXcd V = es.eigenvectors();
  return (V * lambda.asDiagonal() * V.inverse()).real();
}

}  // namespace

PredictorModel psid_identify(const Series& y, const Series& z,
                             const Dims& dims) {
  dims.validate();
  if (y.cols() != dims.n_y || z.cols() != dims.n_z || y.rows() != z.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "y/z do not match dims");
  }
  const int i = dims.horizon_i;
  const Eigen::Index n = y.rows();
  const int ny = dims.n_y;
  const int nz = dims.n_z;
  const int n1 = dims.n_1;
  const int n2 = dims.n_x - n1;
  const Eigen::Index min_samples =
      10LL * i * std::max(ny, nz);
  const int stacked_rows = 2 * i * ny + i * nz;
  if (n < min_samples || n - 2 * i + 1 < stacked_rows) {
    throw Error(ErrorCode::kTooFewSamples,
                "need at least " + std::to_string(std::max<Eigen::Index>(
                                       min_samples, stacked_rows + 2 * i)) +
                    " samples");
  }
  if (n1 > 0 && (i - 1) * nz < n1) {
    throw Error(ErrorCode::kInvalidArgument, "horizon too short for n_1");
  }
  if (n2 > 0 && (i - 1) * ny < n2) {
    throw Error(ErrorCode::kInvalidArgument, "horizon too short for n_x - n_1");
  }

  const StackedMoments mom(y, z, i);
  const int past = i * ny;
  const int past_plus = (i + 1) * ny;

  Matrix w_now(0, mom.rows());
  Matrix w_next(0, mom.rows());

  if (n1 > 0) {
    const auto proj = mom.project_onto_past(mom.select(mom.z_row(0), i * nz), past);
    const StageResult s1 = extract_states(proj, n1);
    const auto proj_next =
        mom.project_onto_past(mom.select(mom.z_row(1), (i - 1) * nz), past_plus);
    const Matrix w1_next =
        left_pinv_apply(s1.gamma.topRows((i - 1) * nz), proj_next.weights);
    w_now = s1.w_now;
    w_next = w1_next;
  }

  if (n2 > 0) {
    const Matrix w_yf = mom.select(mom.y_row(i), i * ny);
    const Matrix w_yf_next = mom.select(mom.y_row(i + 1), (i - 1) * ny);
    Matrix target = w_yf;
    Matrix target_next = w_yf_next;
    if (n1 > 0) {
      const Matrix gamma_y1 = regress(mom.cov(w_yf, w_now), mom.cov(w_now, w_now));
      target -= gamma_y1 * w_now;
      target_next -= gamma_y1.topRows((i - 1) * ny) * w_next;
    }
    const StageResult s2 = extract_states(mom.project_onto_past(target, past), n2);
    const auto proj_next = mom.project_onto_past(target_next, past_plus);
    const Matrix w2_next =
        left_pinv_apply(s2.gamma.topRows((i - 1) * ny), proj_next.weights);
    Matrix stacked(w_now.rows() + n2, mom.rows());
    stacked << w_now, s2.w_now;
    w_now = std::move(stacked);
    Matrix stacked_next(w_next.rows() + n2, mom.rows());
    stacked_next << w_next, w2_next;
    w_next = std::move(stacked_next);
  }

  const Matrix w_y = mom.select(mom.y_row(i), ny);
  const Matrix w_z = mom.select(mom.z_row(0), nz);
  const Matrix sxx = mom.cov(w_now, w_now);

  PredictorModel model;
  model.A = stabilize(regress(mom.cov(w_next, w_now), sxx));
  model.C_y = regress(mom.cov(w_y, w_now), sxx);
  model.C_z = regress(mom.cov(w_z, w_now), sxx);
  model.G_y = mom.cov(w_next, w_y);
  Matrix sigma_y = y.transpose() * y / static_cast<double>(n);
  model.Sigma_y = 0.5 * (sigma_y + sigma_y.transpose());

  Matrix P_x;
  if (!solve_covariance_riccati(model.A, model.C_y, model.G_y, model.Sigma_y,
                                &P_x, &model.K, &model.Sigma_e)) {
    // Output statistics not positive real (short data): fall back to the
    // gain regressed from the state and innovation residuals.
    const Matrix w_e = w_y - model.C_y * w_now;
    const Matrix w_w = w_next - model.A * w_now;
    model.Sigma_e = mom.cov(w_e, w_e);
    model.Sigma_e = 0.5 * (model.Sigma_e + model.Sigma_e.transpose());
    model.K = regress(mom.cov(w_w, w_e), model.Sigma_e);
    model.G_y = model.A * sxx * model.C_y.transpose() + model.K * model.Sigma_e;
    if (!(spectral_radius(model.A - model.K * model.C_y) < 1.0)) {
      // Same innovation model, stabilizing gain: x[k+1] = A x + K e,
      // y = C x + e solved as a stochastic model.
      const Matrix ke = model.K * model.Sigma_e;
      const DareSolution dare = solve_dare(
          model.A, model.C_y, ke * model.K.transpose(), model.Sigma_e, ke);
      model.K = dare.K;
      model.Sigma_e = dare.Sigma_e;
    }
  }
  return model;
}

}  // namespace psid
