// Command-line front end: experiment runners plus identify/decode on CSV data.
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psid/experiments.hpp"
#include "psid/model_io.hpp"
#include "psid/smoothing.hpp"
#include "psid/subspace.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

int run_experiment_command(psid::Experiment which, const RunOptions& opt) {
  psid::ExperimentConfig cfg = psid::default_config(which);
  if (!opt.config.empty()) {
    cfg = psid::parse_config_file(opt.config, which);
    if (cfg.experiment != which) {
      throw psid::Error(psid::ErrorCode::kInvalidArgument,
                        std::string("config is for '") +
                            psid::experiment_name(cfg.experiment) + "'");
    }
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.out) cfg.out_dir = *opt.out;
  if (opt.threads) cfg.threads = *opt.threads;
  cfg.progress = true;
  for (const auto& path : psid::run_experiment(cfg)) std::cout << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preferential subspace identification with filtering and smoothing"};
  app.require_subcommand(1);

  RunOptions run_opt;
  struct Named {
    const char* command;
    psid::Experiment experiment;
  };
  const Named experiments[] = {
      {"convergence", psid::Experiment::kConvergence},
      {"decoding", psid::Experiment::kDecoding},
      {"shift-baseline", psid::Experiment::kShiftBaseline},
      {"backward-compare", psid::Experiment::kBackwardCompare},
  };
  std::optional<psid::Experiment> chosen;
  for (const auto& e : experiments) {
    CLI::App* sub = app.add_subcommand(e.command, std::string("run the ") + e.command +
                                                      " experiment");
    sub->add_option("--config", run_opt.config, "key = value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", run_opt.seed, "master seed");
    sub->add_option("--out", run_opt.out, "output directory");
    sub->add_option("--threads", run_opt.threads, "worker threads")
        ->check(CLI::PositiveNumber);
    const psid::Experiment which = e.experiment;
    sub->callback([&chosen, which] { chosen = which; });
  }

  std::string y_path, z_path, model_path, out_path;
  int n_x = 0, n_1 = -1, horizon = 0;
  std::string kind = "smoothing";
  CLI::App* identify = app.add_subcommand("identify", "fit a model to CSV time series");
  identify->add_option("--y", y_path, "primary signal CSV")->required()->check(CLI::ExistingFile);
  identify->add_option("--z", z_path, "secondary signal CSV")->required()->check(CLI::ExistingFile);
  identify->add_option("--nx", n_x, "latent state dimension")->required()->check(CLI::PositiveNumber);
  identify->add_option("--n1", n_1, "stage-1 state count (default n_x)");
  identify->add_option("--horizon", horizon, "subspace horizon (default automatic)");
  identify->add_option("--kind", kind, "filtering or smoothing")
      ->check(CLI::IsMember({"filtering", "smoothing"}));
  identify->add_option("--out", out_path, "model file to write")->required();

  CLI::App* decode = app.add_subcommand("decode", "apply a saved model to a CSV of y");
  decode->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  decode->add_option("--y", y_path, "primary signal CSV")->required()->check(CLI::ExistingFile);
  decode->add_option("--out", out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (chosen) return run_experiment_command(*chosen, run_opt);

    if (identify->parsed()) {
      const psid::Series y = psid::read_series_csv_file(y_path);
      const psid::Series z = psid::read_series_csv_file(z_path);
      psid::Dims dims;
      dims.n_x = n_x;
      dims.n_y = static_cast<int>(y.cols());
      dims.n_z = static_cast<int>(z.cols());
      dims.n_1 = n_1 < 0 ? n_x : n_1;
      dims.horizon_i = horizon > 0 ? horizon
                                   : psid::default_horizon(dims.n_x, dims.n_y,
                                                           dims.n_z, dims.n_1);
      if (kind == "filtering") {
        psid::save_model_file(out_path, psid::psid_with_filtering(y, z, dims));
      } else {
        psid::save_model_file(out_path, psid::psid_with_smoothing(y, z, dims, dims));
      }
      std::cout << out_path << '\n';
      return 0;
    }

    if (decode->parsed()) {
      const psid::Series y = psid::read_series_csv_file(y_path);
      psid::FilteringModel forward;
      std::optional<psid::SmoothingModel> sm;
      if (psid::detect_model_kind(model_path) == psid::ModelKind::kSmoothing) {
        sm = psid::load_smoothing_model_file(model_path);
        forward = sm->forward;
      } else {
        forward = psid::load_filtering_model_file(model_path);
      }
      const psid::EstimateTrace t = psid::kalman_filter(forward, y);
      const int nz = forward.predictor.n_z();
      const int blocks = sm ? 3 : 2;
      psid::Series out(y.rows(), blocks * nz);
      out.leftCols(nz) = t.z_pred;
      out.middleCols(nz, nz) = t.z_filt;
      if (sm) out.rightCols(nz) = psid::smooth_decode(*sm, y);

      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw psid::Error(psid::ErrorCode::kInvalidArgument, "cannot write " + out_path);
      }
      std::ostream& os = out_path.empty() ? std::cout : file;
      os << 't';
      const char* names[] = {"pred", "filt", "smooth"};
      for (int b = 0; b < blocks; ++b) {
        for (int j = 0; j < nz; ++j) os << ',' << names[b] << j + 1;
      }
      os << '\n';
      for (Eigen::Index k = 0; k < out.rows(); ++k) {
        os << k;
        for (Eigen::Index j = 0; j < out.cols(); ++j) os << ',' << psid::format_double(out(k, j));
        os << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
