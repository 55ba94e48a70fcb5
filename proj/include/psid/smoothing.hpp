#pragma once

#include "psid/filtering.hpp"

namespace psid {

enum class Combine { kResidualSum, kPlainMean };

/// Forward filtering model plus a backward one trained on time-reversed
/// data. ResidualSum: the backward model estimates the forward filter's
/// residual and the two estimates add. PlainMean: the backward model
/// estimates z itself and the two estimates are averaged.
struct SmoothingModel {
  FilteringModel forward;
  FilteringModel backward;
  Combine combine = Combine::kResidualSum;
};

Series reverse_time(const Series& s);

SmoothingModel psid_with_smoothing(const Series& y, const Series& z,
                                   const Dims& dims_fwd, const Dims& dims_bwd);

SmoothingModel psid_smoothing_alt(const Series& y, const Series& z,
                                  const Dims& dims);

Series smooth_decode(const SmoothingModel& sm, const Series& y);

}  // namespace psid
