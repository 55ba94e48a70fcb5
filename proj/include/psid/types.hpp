#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace psid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Time series with one sample per row (N x dim). Row-major so that a single
/// sample is contiguous, which also matches numpy's default layout.
using Series =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorCode {
  kNonConvergent,
  kSingularInnovation,
  kInvalidCovariance,
  kSingularCovariance,
  kSingularTransform,
  kDimensionMismatch,
  kMissingGain,
  kRequiresZeroS,
  kSingularNoise,
  kRankDeficient,
  kTooFewSamples,
  kSingularGram,
  kDegenerateAlignment,
  kDegenerateTarget,
  kParseError,
  kFormatVersionError,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

/// Single exception type for every library failure; `code()` tells callers
/// which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Model and identification dimensions.
struct Dims {
  int n_x = 1;
  int n_y = 1;
  int n_z = 1;
  int n_1 = 1;        // states extracted in the secondary-relevant stage
  int horizon_i = 5;  // past/future horizon of the subspace projections

  /// Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

}  // namespace psid
