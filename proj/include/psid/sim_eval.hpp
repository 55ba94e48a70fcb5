#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "psid/filtering.hpp"
#include "psid/kalman.hpp"
#include "psid/lssm.hpp"

namespace psid {

using Rng = std::mt19937_64;

/// Deterministic stream for one experiment cell; parallel evaluation order
/// never changes what a cell draws.
Rng cell_rng(std::uint64_t seed, std::uint64_t model_id, std::uint64_t n,
             std::uint64_t stream);

enum class N1Policy { kFull, kRandom };

struct IntRange {
  int lo = 1;
  int hi = 1;
};

struct GenConfig {
  IntRange n_x{1, 6};
  IntRange n_y{1, 10};
  IntRange n_z{1, 10};
  double eig_min = 0.3;
  double eig_max = 0.95;
  double noise_scale = 1.0;
  bool allow_Sxz = false;
  bool correlated_S = false;
  N1Policy n1_policy = N1Policy::kFull;
  /// Models whose past-whitened y (all states) or z (observable states)
  /// covariance Hankel has sigma_min / sigma_max below this are redrawn;
  /// 0 disables.
  double min_hankel_ratio = 1e-2;
  int max_retries = 1000;

  void validate() const;
};

/// Random stable model. Under N1Policy::kRandom the state splits into a
/// z-relevant block of random size that is not driven by the remaining
/// states, and C_z ignores the remaining states, so (C_z, A) is
/// unobservable whenever that block is smaller than n_x. Draws failing the
/// Hankel conditioning check are replaced, up to max_retries.
StochasticModel generate_random_model(const GenConfig& cfg, Rng& rng);

struct SimData {
  Series y, z, x;
};

/// Stationary simulation: x[0] ~ N(0, Sigma_x), jointly Gaussian noises.
SimData simulate(const StochasticModel& model, Eigen::Index n, Rng& rng);

/// Same recursion started from x[0] = 0 (deterministic start).
SimData simulate_from_zero(const StochasticModel& model, Eigen::Index n,
                           Rng& rng);

struct Alignment {
  Matrix T;
  PredictorModel aligned;
};

/// Least-squares map from the learned predictor's states to the reference
/// predictor's states on shared data, applied to the learned model.
Alignment align_models(const PredictorModel& reference,
                       const PredictorModel& learned, const Series& y_align);
Alignment align_models(const StochasticModel& true_model,
                       const PredictorModel& learned, const Series& y_align);

/// Parameters compared against ground truth. All share one state basis.
struct ParameterSet {
  Matrix A, C_y, C_z, G_y, K, Sigma_y, CzKf;
  std::optional<Matrix> Kf;
};

ParameterSet true_parameters(const StochasticModel& model);
ParameterSet backward_parameters(const BackwardStochasticParams& bw);
/// Learned parameters in the basis given by T (use the alignment's T);
/// Kf is set only when recover_kf succeeds.
ParameterSet learned_parameters(const FilteringModel& fm, const Matrix& T,
                                KfRecovery* recovery = nullptr);

struct ParameterErrors {
  double A = 0, C_y = 0, C_z = 0, G_y = 0, K = 0, Sigma_y = 0, CzKf = 0;
  double eigA = 0;
  std::optional<double> Kf;
};

ParameterErrors compare_parameters(const ParameterSet& truth,
                                   const ParameterSet& learned);

/// ||matched(eig(learned)) - eig(truth)|| / ||eig(truth)|| with greedy
/// nearest-neighbour matching, truth visited by descending magnitude then
/// angle.
double eigenvalue_error(const Matrix& A_truth, const Matrix& A_learned);

struct MetricsRecord {
  int model_id = 0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  ParameterErrors errors;
  std::optional<double> kf_min_norm_error;
  R2Triple learned;
  R2Triple ideal;
};

/// Mean over dimensions of 1 - SSE / SST; zero-variance dimensions are
/// skipped.
double r2_score(const Series& z_true, const Series& z_hat);

/// PSID trained with z delayed by one sample relative to y, so that its
/// one-step-ahead prediction targets the current z.
PredictorModel shifted_psid_baseline(const Series& y, const Series& z,
                                     const Dims& dims);

/// Estimate of z[k] from y[0..k] under a model from shifted_psid_baseline.
Series shifted_decode(const PredictorModel& model, const Series& y);

}  // namespace psid
