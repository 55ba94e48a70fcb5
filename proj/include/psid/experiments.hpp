#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psid/sim_eval.hpp"

namespace psid {

enum class Experiment { kConvergence, kDecoding, kShiftBaseline, kBackwardCompare };

Experiment parse_experiment(const std::string& name);
const char* experiment_name(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::kConvergence;
  int n_models = 20;
  std::vector<Eigen::Index> sample_sizes{1000, 10000, 100000, 1000000};
  std::uint64_t seed = 1;
  GenConfig gen;
  Eigen::Index test_samples = 100000;
  Eigen::Index align_samples = 100000;
  int horizon = 0;  // 0 picks default_horizon per model
  int threads = 1;
  std::string out_dir = ".";
  bool progress = false;  // per-cell lines on stderr

  void validate() const;
};

/// Defaults for one experiment; the generator settings differ between them.
ExperimentConfig default_config(Experiment e);

/// `key = value` lines, `#` starts a comment. Starts from
/// default_config(base); an `experiment` key switches to that experiment's
/// defaults and must come first. Unknown keys and malformed values throw
/// kParseError.
ExperimentConfig parse_config(std::istream& in,
                              Experiment base = Experiment::kConvergence);
ExperimentConfig parse_config_file(const std::string& path,
                                   Experiment base = Experiment::kConvergence);

/// Ground-truth model for one id; identical across experiments that share
/// generator settings and seed.
StochasticModel experiment_model(const ExperimentConfig& cfg, int model_id);
Dims identification_dims(const ExperimentConfig& cfg, const StochasticModel& m);

struct ConvergenceRow {
  int model_id = 0;
  Eigen::Index n = 0;
  Dims dims;
  ParameterErrors errors;
  std::optional<double> kf_min_norm;  // K_f error of the minimum-norm solve
  bool z_observable = false;          // (C_z, A) observable
};

struct DecodingRow {
  int model_id = 0;
  Dims dims;
  R2Triple ideal;
  R2Triple learned;
};

struct ShiftRow {
  int model_id = 0;
  double ideal_pred = 0, shifted = 0, psid_filt = 0, ideal_filt = 0;
};

struct BackwardRow {
  int model_id = 0;
  Eigen::Index n = 0;
  ParameterErrors z_trained;
  ParameterErrors residual_trained;
};

std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& cfg);
std::vector<DecodingRow> run_decoding(const ExperimentConfig& cfg);
std::vector<ShiftRow> run_shift_baseline(const ExperimentConfig& cfg);
std::vector<BackwardRow> run_backward_compare(const ExperimentConfig& cfg);

void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows);
void write_convergence_summary(std::ostream& out,
                               const std::vector<ConvergenceRow>& rows);
void write_decoding_csv(std::ostream& out, const std::vector<DecodingRow>& rows);
void write_shift_csv(std::ostream& out, const std::vector<ShiftRow>& rows);
void write_shift_summary(std::ostream& out, const std::vector<ShiftRow>& rows);
/// z_trained picks the z-trained errors, otherwise the residual-trained ones.
void write_backward_csv(std::ostream& out, const std::vector<BackwardRow>& rows,
                        bool z_trained);
void write_backward_summary(std::ostream& out,
                            const std::vector<BackwardRow>& rows, bool z_trained);

/// Runs cfg.experiment and writes its CSV files into cfg.out_dir. Returns
/// the paths written.
std::vector<std::string> run_experiment(const ExperimentConfig& cfg);

/// Calls task(i) for i < count on up to `threads` workers. Results go into
/// caller-owned slots, so completion order is irrelevant; the first failure
/// by index is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& task);

}  // namespace psid
