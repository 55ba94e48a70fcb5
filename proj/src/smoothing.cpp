#include "psid/smoothing.hpp"

namespace psid {

Series reverse_time(const Series& s) { return s.colwise().reverse(); }

SmoothingModel psid_with_smoothing(const Series& y, const Series& z,
                                   const Dims& dims_fwd, const Dims& dims_bwd) {
  SmoothingModel sm;
  sm.forward = psid_with_filtering(y, z, dims_fwd);
  const Series residual = z - kalman_filter(sm.forward, y).z_filt;
  sm.backward =
      psid_with_filtering(reverse_time(y), reverse_time(residual), dims_bwd);
  sm.combine = Combine::kResidualSum;
  return sm;
}

SmoothingModel psid_smoothing_alt(const Series& y, const Series& z,
                                  const Dims& dims) {
  SmoothingModel sm;
  sm.forward = psid_with_filtering(y, z, dims);
  sm.backward = psid_with_filtering(reverse_time(y), reverse_time(z), dims);
  sm.combine = Combine::kPlainMean;
  return sm;
}

Series smooth_decode(const SmoothingModel& sm, const Series& y) {
  if (sm.forward.predictor.n_y() != sm.backward.predictor.n_y() ||
      sm.forward.predictor.n_z() != sm.backward.predictor.n_z()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "forward and backward models disagree on n_y/n_z");
  }
  const Series forward = kalman_filter(sm.forward, y).z_filt;
  const Series backward =
      reverse_time(kalman_filter(sm.backward, reverse_time(y)).z_filt);
  if (sm.combine == Combine::kResidualSum) return forward + backward;
  return 0.5 * (forward + backward);
}

}  // namespace psid
