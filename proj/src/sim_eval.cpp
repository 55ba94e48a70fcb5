#include "psid/sim_eval.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "psid/subspace.hpp"

namespace psid {

namespace {

constexpr int kMaxBasisTries = 200;
constexpr double kMaxBasisCond = 100.0;

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill in row-major order so the draw sequence is layout independent.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  }
  return m;
}

int uniform_int(IntRange range, Rng& rng) {
  return std::uniform_int_distribution<int>(range.lo, range.hi)(rng);
}

Matrix random_basis(int n, Rng& rng) {
  for (int t = 0; t < kMaxBasisTries; ++t) {
    const Matrix T = standard_normal(n, n, rng);
    Eigen::JacobiSVD<Matrix> svd(T);
    const Vector& s = svd.singularValues();
    if (s(n - 1) > 0.0 && s(0) / s(n - 1) < kMaxBasisCond) return T;
  }
  // Orthogonal fallback, condition number one.
  return Eigen::HouseholderQR<Matrix>(standard_normal(n, n, rng)).householderQ();
}

// Real block-diagonal matrix with the requested eigenvalue magnitudes,
// conjugated by a well-conditioned random basis.
Matrix random_dynamics(int n, const GenConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> mag(cfg.eig_min, cfg.eig_max);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::bernoulli_distribution coin(0.5);
  Matrix J = Matrix::Zero(n, n);
  int k = 0;
  while (k < n) {
    const double r = mag(rng);
    if (n - k >= 2 && coin(rng)) {
      const double th = angle(rng);
      J(k, k) = r * std::cos(th);
      J(k, k + 1) = -r * std::sin(th);
      J(k + 1, k) = r * std::sin(th);
      J(k + 1, k + 1) = r * std::cos(th);
      k += 2;
    } else {
      J(k, k) = coin(rng) ? r : -r;
      k += 1;
    }
  }
  const Matrix T = random_basis(n, rng);
  return T * J * T.inverse();
}

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Factor L with L L' = cov for a PSD matrix.
Matrix psd_factor(const Matrix& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(cov));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

SimData run_simulation(const StochasticModel& m, Eigen::Index n, Rng& rng,
                       bool stationary) {
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "negative length");
  if (!(spectral_radius(m.A) < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "simulate needs a stable A");
  }
  const int nx = m.n_x(), ny = m.n_y(), nz = m.n_z();
  const int d = nx + ny + nz;
  Matrix joint = Matrix::Zero(d, d);
  joint.block(0, 0, nx, nx) = m.Q;
  joint.block(0, nx, nx, ny) = m.S;
  joint.block(nx, 0, ny, nx) = m.S.transpose();
  joint.block(nx, nx, ny, ny) = m.R;
  joint.block(0, nx + ny, nx, nz) = m.S_xz;
  joint.block(nx + ny, 0, nz, nx) = m.S_xz.transpose();
  joint.block(nx + ny, nx + ny, nz, nz) = m.R_z;
  const Matrix L = psd_factor(joint);

  std::normal_distribution<double> nd(0.0, 1.0);
  Vector x = Vector::Zero(nx);
  if (stationary) {
    const Matrix Lx = psd_factor(solve_lyapunov(m.A, m.Q));
    Vector xi(nx);
    for (int j = 0; j < nx; ++j) xi(j) = nd(rng);
    x = Lx * xi;
  }
  SimData out;
  out.y.resize(n, ny);
  out.z.resize(n, nz);
  out.x.resize(n, nx);
  Vector xi(d), noise(d);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int j = 0; j < d; ++j) xi(j) = nd(rng);
    noise.noalias() = L * xi;
    out.x.row(k) = x.transpose();
    out.y.row(k) = (m.C_y * x + noise.segment(nx, ny)).transpose();
    out.z.row(k) = (m.C_z * x + noise.segment(nx + ny, nz)).transpose();
    x = m.A * x + noise.head(nx);
  }
  return out;
}

std::optional<double> optional_error(const std::optional<Matrix>& truth,
                                     const std::optional<Matrix>& learned) {
  if (!truth || !learned) return std::nullopt;
  return rel_error(*learned, *truth);
}

}  // namespace

Rng cell_rng(std::uint64_t seed, std::uint64_t model_id, std::uint64_t n,
             std::uint64_t stream) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(model_id), hi(model_id),
                    lo(n),    hi(n),    lo(stream),   hi(stream)};
  return Rng(seq);
}

void GenConfig::validate() const {
  auto check = [](IntRange r, const char* name) {
    if (r.lo < 1 || r.hi < r.lo) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("empty or invalid range for ") + name);
    }
  };
  check(n_x, "n_x");
  check(n_y, "n_y");
  check(n_z, "n_z");
  if (!(eig_min > 0.0 && eig_min <= eig_max && eig_max < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "eigenvalue magnitudes must lie in (0, 1)");
  }
  if (!(noise_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise scale must be positive");
  }
}

namespace {

StochasticModel draw_model(const GenConfig& cfg, Rng& rng) {
  const int nx = uniform_int(cfg.n_x, rng);
  const int ny = uniform_int(cfg.n_y, rng);
  const int nz = uniform_int(cfg.n_z, rng);
  int n1 = nx;
  if (cfg.n1_policy == N1Policy::kRandom) {
    n1 = uniform_int({1, nx}, rng);
  }
  const int n2 = nx - n1;

  StochasticModel m;
  m.A = Matrix::Zero(nx, nx);
  m.A.topLeftCorner(n1, n1) = random_dynamics(n1, cfg, rng);
  if (n2 > 0) {
    m.A.bottomRightCorner(n2, n2) = random_dynamics(n2, cfg, rng);
    m.A.bottomLeftCorner(n2, n1) = 0.5 * standard_normal(n2, n1, rng);
  }
  m.C_y = standard_normal(ny, nx, rng);
  m.C_z = standard_normal(nz, nx, rng);
  if (n2 > 0) m.C_z.rightCols(n2).setZero();

  const Matrix W = standard_normal(nx + ny, nx + ny, rng);
  const Matrix joint = cfg.noise_scale * W * W.transpose() / (nx + ny);
  m.Q = sym(joint.topLeftCorner(nx, nx));
  m.R = sym(joint.bottomRightCorner(ny, ny));
  m.S = cfg.correlated_S ? Matrix(joint.topRightCorner(nx, ny))
                         : Matrix::Zero(nx, ny);
  const Matrix V = standard_normal(nz, nz, rng);
  m.R_z = sym(cfg.noise_scale * V * V.transpose() / nz);
  m.S_xz = Matrix::Zero(nx, nz);
  if (cfg.allow_Sxz) {
    // eps = M u + eta with u the part of w uncorrelated with v, so that eps
    // stays independent of v.
    const Matrix u_cov =
        sym(m.Q - m.S * m.R.ldlt().solve(m.S.transpose()));
    const Matrix M = standard_normal(nz, nx, rng) / std::sqrt(double(nx));
    m.S_xz = u_cov * M.transpose();
    m.R_z = sym(m.R_z + M * u_cov * M.transpose());
  }
  return m;
}

// sigma_min / sigma_max of the future-output by past-y covariance Hankel
// after whitening the past, i.e. the spectrum the identification SVD sees
// in the large-sample limit, restricted to the rank the readout supports.
double hankel_ratio(const StochasticModel& m, const Matrix& C, int rank,
                    int blocks) {
  if (rank == 0) return 1.0;
  const CovarianceSet cov = covariances_from_stochastic(m);
  const int ny = m.n_y();
  // Past ordered y[k-1], y[k-2], ...; lag l cross covariance C_y A^(l-1) G_y.
  std::vector<Matrix> lag(static_cast<std::size_t>(blocks));
  lag[0] = cov.Sigma_y;
  Matrix ctrl(m.n_x(), static_cast<Eigen::Index>(blocks) * ny);
  Matrix g = cov.G_y;
  for (int l = 0; l < blocks; ++l) {
    ctrl.middleCols(static_cast<Eigen::Index>(l) * ny, ny) = g;
    if (l + 1 < blocks) lag[static_cast<std::size_t>(l + 1)] = m.C_y * g;
    g = m.A * g;
  }
  Matrix past(ctrl.cols(), ctrl.cols());
  for (int a = 0; a < blocks; ++a) {
    for (int b = 0; b < blocks; ++b) {
      const Matrix& blk = lag[static_cast<std::size_t>(std::abs(a - b))];
      past.block(a * ny, b * ny, ny, ny) = b >= a ? blk : Matrix(blk.transpose());
    }
  }
  Eigen::LLT<Matrix> llt(0.5 * (past + past.transpose()));
  if (llt.info() != Eigen::Success) return 0.0;
  const Matrix h = extended_observability(m.A, C, blocks) * ctrl;
  // h * inv(L)'
  const Matrix whitened =
      llt.matrixL().solve(h.transpose()).transpose();
  Eigen::JacobiSVD<Matrix> svd(whitened);
  const Vector& s = svd.singularValues();
  if (s.size() < rank || !(s(0) > 0.0)) return 0.0;
  return s(rank - 1) / s(0);
}

}  // namespace

StochasticModel generate_random_model(const GenConfig& cfg, Rng& rng) {
  cfg.validate();
  StochasticModel m;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    m = draw_model(cfg, rng);
    if (!(cfg.min_hankel_ratio > 0.0)) break;
    const int n1 = observable_dimension(m.A, m.C_z);
    const int blocks = default_horizon(m.n_x(), m.n_y(), m.n_z(), n1);
    try {
      if (hankel_ratio(m, m.C_y, m.n_x(), blocks) >= cfg.min_hankel_ratio &&
          hankel_ratio(m, m.C_z, n1, blocks) >= cfg.min_hankel_ratio) {
        break;
      }
    } catch (const Error&) {
      // Treat a failed covariance solve as a conditioning failure.
    }
  }
  return m;
}

SimData simulate(const StochasticModel& model, Eigen::Index n, Rng& rng) {
  return run_simulation(model, n, rng, true);
}

SimData simulate_from_zero(const StochasticModel& model, Eigen::Index n,
                           Rng& rng) {
  return run_simulation(model, n, rng, false);
}

Alignment align_models(const PredictorModel& reference,
                       const PredictorModel& learned, const Series& y_align) {
  if (reference.n_x() != learned.n_x()) {
    throw Error(ErrorCode::kDimensionMismatch, "state dimensions differ");
  }
  const Series x_ref = kalman_predict(reference, y_align).x_pred;
  const Series x_lrn = kalman_predict(learned, y_align).x_pred;
  const Matrix gram = x_lrn.transpose() * x_lrn;
  const Matrix cross = x_lrn.transpose() * x_ref;
  Eigen::PartialPivLU<Matrix> lu(gram);
  if (gram.size() == 0 || !(lu.rcond() > 1e-12)) {
    throw Error(ErrorCode::kDegenerateAlignment,
                "learned state trajectory is rank deficient");
  }
  Alignment out;
  out.T = lu.solve(cross).transpose();
  Eigen::PartialPivLU<Matrix> tlu(out.T);
  if (!(tlu.rcond() > 1e-12)) {
    throw Error(ErrorCode::kDegenerateAlignment, "alignment map is singular");
  }
  out.aligned = apply_similarity(learned, out.T);
  return out;
}

Alignment align_models(const StochasticModel& true_model,
                       const PredictorModel& learned, const Series& y_align) {
  return align_models(to_predictor_form(true_model), learned, y_align);
}

ParameterSet true_parameters(const StochasticModel& model) {
  const PredictorModel p = to_predictor_form(model);
  const DareSolution dare =
      solve_dare(model.A, model.C_y, model.Q, model.R, model.S);
  ParameterSet out;
  out.A = p.A;
  out.C_y = p.C_y;
  out.C_z = p.C_z;
  out.G_y = p.G_y;
  out.K = p.K;
  out.Sigma_y = p.Sigma_y;
  out.Kf = dare.K_f;
  out.CzKf = model.C_z * dare.K_f;
  return out;
}

ParameterSet backward_parameters(const BackwardStochasticParams& bw) {
  ParameterSet out;
  out.A = bw.A_bw;
  out.C_y = bw.Cy_bw;
  out.C_z = bw.Cz_bw;
  out.G_y = bw.Gy_bw;
  out.K = bw.K_bw;
  out.Sigma_y = bw.Sigma_y_bw;
  out.Kf = bw.Kf_bw;
  out.CzKf = bw.CzKf_bw;
  return out;
}

ParameterSet learned_parameters(const FilteringModel& fm, const Matrix& T,
                                KfRecovery* recovery) {
  FilteringModel aligned = fm;
  aligned.predictor = apply_similarity(fm.predictor, T);
  const PredictorModel& p = aligned.predictor;
  ParameterSet out;
  out.A = p.A;
  out.C_y = p.C_y;
  out.C_z = p.C_z;
  out.G_y = p.G_y;
  out.K = p.K;
  out.Sigma_y = p.Sigma_y;
  if (!fm.CzKf) throw Error(ErrorCode::kMissingGain, "C_z K_f not learned");
  out.CzKf = *fm.CzKf;
  const KfRecovery rec = recover_kf(aligned, KfSource::kCz);
  if (rec.observable) out.Kf = rec.Kf;
  if (recovery) *recovery = rec;
  return out;
}

ParameterErrors compare_parameters(const ParameterSet& truth,
                                   const ParameterSet& learned) {
  ParameterErrors e;
  e.A = rel_error(learned.A, truth.A);
  e.C_y = rel_error(learned.C_y, truth.C_y);
  e.C_z = rel_error(learned.C_z, truth.C_z);
  e.G_y = rel_error(learned.G_y, truth.G_y);
  e.K = rel_error(learned.K, truth.K);
  e.Sigma_y = rel_error(learned.Sigma_y, truth.Sigma_y);
  e.CzKf = rel_error(learned.CzKf, truth.CzKf);
  e.eigA = eigenvalue_error(truth.A, learned.A);
  e.Kf = optional_error(truth.Kf, learned.Kf);
  return e;
}

double eigenvalue_error(const Matrix& A_truth, const Matrix& A_learned) {
  using C = std::complex<double>;
  if (A_truth.rows() != A_learned.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "eigenvalue counts differ");
  }
  const Eigen::Index n = A_truth.rows();
  if (n == 0) return 0.0;
  Eigen::EigenSolver<Matrix> et(A_truth, false), el(A_learned, false);
  std::vector<C> truth(et.eigenvalues().data(), et.eigenvalues().data() + n);
  std::vector<C> learned(el.eigenvalues().data(),
                         el.eigenvalues().data() + n);
  std::sort(truth.begin(), truth.end(), [](const C& a, const C& b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    return std::arg(a) < std::arg(b);
  });
  std::vector<bool> used(n, false);
  double diff = 0.0, norm = 0.0;
  for (const C& t : truth) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[j]) continue;
      if (best < 0 || std::abs(learned[j] - t) < std::abs(learned[best] - t)) {
        best = j;
      }
    }
    used[best] = true;
    diff += std::norm(learned[best] - t);
    norm += std::norm(t);
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
}

double r2_score(const Series& z_true, const Series& z_hat) {
  if (z_true.rows() != z_hat.rows() || z_true.cols() != z_hat.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "r2 inputs differ in shape");
  }
  if (z_true.rows() < 2) {
    throw Error(ErrorCode::kDegenerateTarget, "need at least two samples");
  }
  double total = 0.0;
  int used = 0;
  for (Eigen::Index d = 0; d < z_true.cols(); ++d) {
    const auto col = z_true.col(d);
    const double mean = col.mean();
    const double sst = (col.array() - mean).square().sum();
    if (!(sst > 0.0)) continue;
    const double sse = (col - z_hat.col(d)).squaredNorm();
    total += 1.0 - sse / sst;
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::kDegenerateTarget, "every target dimension is constant");
  }
  return total / used;
}

PredictorModel shifted_psid_baseline(const Series& y, const Series& z,
                                     const Dims& dims) {
  if (y.rows() != z.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "y and z lengths differ");
  }
  const Eigen::Index n = y.rows();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "series too short");
  // Pair y[k+1] with z[k]: one-step-ahead prediction of the second signal
  // then uses y up to and including the sample of the target.
  return psid_identify(y.bottomRows(n - 1), z.topRows(n - 1), dims);
}

Series shifted_decode(const PredictorModel& model, const Series& y) {
  const Matrix closed = model.A - model.K * model.C_y;
  Series out(y.rows(), model.n_z());
  Vector x = Vector::Zero(model.n_x());
  for (Eigen::Index k = 0; k < y.rows(); ++k) {
    x = closed * x + model.K * y.row(k).transpose();
    out.row(k) = (model.C_z * x).transpose();
  }
  return out;
}

}  // namespace psid
