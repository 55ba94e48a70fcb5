#pragma once

#include <iosfwd>
#include <string>

#include "psid/filtering.hpp"
#include "psid/lssm.hpp"
#include "psid/smoothing.hpp"

namespace psid {

// Text model files: header `psid-model v1`, `dims n_x n_y n_z`, then
// `matrix NAME rows cols` sections with 17 significant digits per value.
// Smoothing files start with `combine = sum|mean` followed by the forward
// and backward filtering blocks.

void save_model(std::ostream& out, const StochasticModel& model);
void save_model(std::ostream& out, const FilteringModel& model);
void save_model(std::ostream& out, const SmoothingModel& model);

StochasticModel load_stochastic_model(std::istream& in);
FilteringModel load_filtering_model(std::istream& in);
SmoothingModel load_smoothing_model(std::istream& in);

enum class ModelKind { kStochastic, kFiltering, kSmoothing };

/// Peeks at the file contents to tell the three layouts apart.
ModelKind detect_model_kind(const std::string& path);

template <class Model>
void save_model_file(const std::string& path, const Model& model);
StochasticModel load_stochastic_model_file(const std::string& path);
FilteringModel load_filtering_model_file(const std::string& path);
SmoothingModel load_smoothing_model_file(const std::string& path);

/// Time-series CSV with header `t,<prefix>1..<prefix>n`, one sample per row.
Series read_series_csv(std::istream& in);
Series read_series_csv_file(const std::string& path);
void write_series_csv(std::ostream& out, const Series& s,
                      const std::string& prefix);

/// Value printed with 17 significant digits, enough to round-trip.
std::string format_double(double v);

}  // namespace psid
