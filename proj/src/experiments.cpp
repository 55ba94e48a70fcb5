#include "psid/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "psid/model_io.hpp"
#include "psid/smoothing.hpp"
#include "psid/subspace.hpp"

namespace psid {

namespace {

// Stream ids for cell_rng.
constexpr std::uint64_t kModelStream = 0;
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kAlignStream = 2;
constexpr std::uint64_t kTestStream = 3;

const char* const kParamNames[] = {"A",       "C_y",    "C_z",  "G_y", "K",
                                   "K_f",     "Sigma_y", "C_zK_f", "eigA"};

std::mutex g_progress_mutex;

void progress(const ExperimentConfig& cfg, const std::string& msg) {
  if (!cfg.progress) return;
  std::lock_guard<std::mutex> lock(g_progress_mutex);
  std::cerr << experiment_name(cfg.experiment) << ": " << msg << '\n';
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void config_fail(int line, const std::string& what) {
  throw Error(ErrorCode::kParseError,
              "config line " + std::to_string(line) + ": " + what);
}

double to_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_fail(line, "not a number: '" + v + "'");
  }
}

long long to_integer(const std::string& v, int line) {
  const double d = to_double(v, line);
  if (d != std::floor(d) || std::abs(d) > 9e15) {
    config_fail(line, "not an integer: '" + v + "'");
  }
  return static_cast<long long>(d);
}

bool to_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  config_fail(line, "expected true|false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  return out;
}

IntRange to_range(const std::string& v, int line) {
  const auto parts = split_list(v);
  if (parts.size() == 1) {
    const int x = static_cast<int>(to_integer(parts[0], line));
    return {x, x};
  }
  if (parts.size() != 2) config_fail(line, "expected 'lo, hi'");
  return {static_cast<int>(to_integer(parts[0], line)),
          static_cast<int>(to_integer(parts[1], line))};
}

std::string fmt(double v) { return format_double(v); }

std::string fmt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

std::vector<std::optional<double>> error_columns(const ParameterErrors& e) {
  return {e.A, e.C_y, e.C_z, e.G_y, e.K, e.Kf, e.Sigma_y, e.CzKf, e.eigA};
}

void write_error_header(std::ostream& out) {
  out << "model_id,N";
  for (const char* name : kParamNames) out << ',' << name;
  out << '\n';
}

void write_error_row(std::ostream& out, int id, Eigen::Index n,
                     const ParameterErrors& e) {
  out << id << ',' << n;
  for (const auto& v : error_columns(e)) out << ',' << fmt(v);
  out << '\n';
}

struct Moments {
  double mean = 0.0;
  std::optional<double> sem;
  int count = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.count = static_cast<int>(xs.size());
  if (xs.empty()) return m;
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / m.count;
  if (m.count > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.sem = std::sqrt(ss / (m.count - 1) / m.count);
  }
  return m;
}

// Mean/s.e.m. per (N, parameter) over the rows' error columns.
template <class Row, class Get>
void write_error_summary(std::ostream& out, const std::vector<Row>& rows,
                         Get get) {
  std::vector<Eigen::Index> ns;
  for (const Row& r : rows) {
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
  }
  std::sort(ns.begin(), ns.end());
  out << "N,parameter,mean,sem,count\n";
  for (Eigen::Index n : ns) {
    for (std::size_t p = 0; p < std::size(kParamNames); ++p) {
      std::vector<double> xs;
      for (const Row& r : rows) {
        if (r.n != n) continue;
        const auto v = error_columns(get(r))[p];
        if (v) xs.push_back(*v);
      }
      const Moments m = moments(xs);
      out << n << ',' << kParamNames[p] << ','
          << (m.count ? fmt(m.mean) : std::string("NA")) << ',' << fmt(m.sem)
          << ',' << m.count << '\n';
    }
  }
}

struct Cell {
  int model_id;
  Eigen::Index n;
};

std::vector<Cell> grid(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (int id = 0; id < cfg.n_models; ++id) {
    for (Eigen::Index n : cfg.sample_sizes) cells.push_back({id, n});
  }
  return cells;
}

Eigen::Index largest_n(const ExperimentConfig& cfg) {
  return cfg.sample_sizes.back();
}

SimData draw(const ExperimentConfig& cfg, const StochasticModel& m, int id,
             Eigen::Index n_cell, Eigen::Index length, std::uint64_t stream) {
  Rng rng = cell_rng(cfg.seed, static_cast<std::uint64_t>(id),
                     static_cast<std::uint64_t>(n_cell), stream);
  return simulate(m, length, rng);
}

}  // namespace

Experiment parse_experiment(const std::string& name) {
  if (name == "convergence") return Experiment::kConvergence;
  if (name == "decoding") return Experiment::kDecoding;
  if (name == "shift_baseline" || name == "shift-baseline") {
    return Experiment::kShiftBaseline;
  }
  if (name == "backward_compare" || name == "backward-compare") {
    return Experiment::kBackwardCompare;
  }
  throw Error(ErrorCode::kParseError, "unknown experiment '" + name + "'");
}

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kConvergence: return "convergence";
    case Experiment::kDecoding: return "decoding";
    case Experiment::kShiftBaseline: return "shift_baseline";
    case Experiment::kBackwardCompare: return "backward_compare";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  gen.validate();
  if (n_models < 1) throw Error(ErrorCode::kInvalidArgument, "n_models must be >= 1");
  if (sample_sizes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sample_sizes is empty");
  }
  for (std::size_t k = 0; k < sample_sizes.size(); ++k) {
    if (sample_sizes[k] < 1 || (k > 0 && sample_sizes[k] <= sample_sizes[k - 1])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample_sizes must be positive and strictly increasing");
    }
  }
  if (test_samples < 2 || align_samples < 2) {
    throw Error(ErrorCode::kInvalidArgument, "test/align lengths must be >= 2");
  }
  if (horizon < 0 || horizon == 1) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be 0 (auto) or >= 2");
  }
  if (threads < 1) throw Error(ErrorCode::kInvalidArgument, "threads must be >= 1");
  if (experiment == Experiment::kShiftBaseline && !gen.correlated_S) {
    throw Error(ErrorCode::kInvalidArgument,
                "shift_baseline requires correlated_s = true");
  }
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  switch (e) {
    case Experiment::kConvergence:
      // Random z-relevant block so that some (C_z, A) pairs are unobservable.
      cfg.gen.n1_policy = N1Policy::kRandom;
      break;
    case Experiment::kDecoding:
      break;
    case Experiment::kShiftBaseline:
      cfg.gen.correlated_S = true;
      break;
    case Experiment::kBackwardCompare:
      break;
  }
  return cfg;
}

ExperimentConfig parse_config(std::istream& in, Experiment base) {
  ExperimentConfig cfg = default_config(base);
  std::string line;
  int line_no = 0;
  bool seen_other = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (val.empty()) config_fail(line_no, "empty value for '" + key + "'");

    if (key == "experiment") {
      if (seen_other) config_fail(line_no, "'experiment' must be the first key");
      try {
        cfg = default_config(parse_experiment(val));
      } catch (const Error&) {
        config_fail(line_no, "unknown experiment '" + val + "'");
      }
      continue;
    }
    seen_other = true;
    if (key == "n_models") {
      cfg.n_models = static_cast<int>(to_integer(val, line_no));
    } else if (key == "sample_sizes") {
      cfg.sample_sizes.clear();
      for (const auto& item : split_list(val)) {
        cfg.sample_sizes.push_back(to_integer(item, line_no));
      }
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_integer(val, line_no));
    } else if (key == "test_samples") {
      cfg.test_samples = to_integer(val, line_no);
    } else if (key == "align_samples") {
      cfg.align_samples = to_integer(val, line_no);
    } else if (key == "horizon") {
      cfg.horizon = static_cast<int>(to_integer(val, line_no));
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(to_integer(val, line_no));
    } else if (key == "out") {
      cfg.out_dir = val;
    } else if (key == "n_x") {
      cfg.gen.n_x = to_range(val, line_no);
    } else if (key == "n_y") {
      cfg.gen.n_y = to_range(val, line_no);
    } else if (key == "n_z") {
      cfg.gen.n_z = to_range(val, line_no);
    } else if (key == "eig_min") {
      cfg.gen.eig_min = to_double(val, line_no);
    } else if (key == "eig_max") {
      cfg.gen.eig_max = to_double(val, line_no);
    } else if (key == "noise_scale") {
      cfg.gen.noise_scale = to_double(val, line_no);
    } else if (key == "allow_sxz") {
      cfg.gen.allow_Sxz = to_bool(val, line_no);
    } else if (key == "correlated_s") {
      cfg.gen.correlated_S = to_bool(val, line_no);
    } else if (key == "n1_policy") {
      if (val == "full") {
        cfg.gen.n1_policy = N1Policy::kFull;
      } else if (val == "random") {
        cfg.gen.n1_policy = N1Policy::kRandom;
      } else {
        config_fail(line_no, "n1_policy must be full|random");
      }
    } else if (key == "min_hankel_ratio") {
      cfg.gen.min_hankel_ratio = to_double(val, line_no);
    } else if (key == "max_retries") {
      cfg.gen.max_retries = static_cast<int>(to_integer(val, line_no));
    } else {
      config_fail(line_no, "unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path, Experiment base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open config " + path);
  return parse_config(in, base);
}

StochasticModel experiment_model(const ExperimentConfig& cfg, int model_id) {
  Rng rng = cell_rng(cfg.seed, static_cast<std::uint64_t>(model_id), 0,
                     kModelStream);
  return generate_random_model(cfg.gen, rng);
}

Dims identification_dims(const ExperimentConfig& cfg, const StochasticModel& m) {
  Dims d;
  d.n_x = m.n_x();
  d.n_y = m.n_y();
  d.n_z = m.n_z();
  d.n_1 = observable_dimension(m.A, m.C_z);
  d.horizon_i = cfg.horizon > 0 ? cfg.horizon
                                : default_horizon(d.n_x, d.n_y, d.n_z, d.n_1);
  return d;
}

void parallel_for(int count, int threads, const std::function<void(int)>& task) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(count, 0)));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min(threads, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<ConvergenceRow> run_convergence(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = grid(cfg);
  std::vector<ConvergenceRow> rows(cells.size());
  parallel_for(static_cast<int>(cells.size()), cfg.threads, [&](int c) {
    const Cell cell = cells[static_cast<std::size_t>(c)];
    const StochasticModel m = experiment_model(cfg, cell.model_id);
    const Dims dims = identification_dims(cfg, m);
    const SimData train = draw(cfg, m, cell.model_id, cell.n, cell.n, kTrainStream);
    const SimData align =
        draw(cfg, m, cell.model_id, cell.n, cfg.align_samples, kAlignStream);
    const FilteringModel fm = psid_with_filtering(train.y, train.z, dims);
    const Alignment al = align_models(m, fm.predictor, align.y);
    KfRecovery rec;
    const ParameterSet truth = true_parameters(m);
    ConvergenceRow& row = rows[static_cast<std::size_t>(c)];
    row.model_id = cell.model_id;
    row.n = cell.n;
    row.dims = dims;
    row.errors = compare_parameters(truth, learned_parameters(fm, al.T, &rec));
    row.kf_min_norm = rel_error(rec.Kf, *truth.Kf);
    row.z_observable = dims.n_1 == dims.n_x;
    progress(cfg, "model " + std::to_string(cell.model_id) + " N=" +
                      std::to_string(cell.n) + " done");
  });
  return rows;
}

std::vector<DecodingRow> run_decoding(const ExperimentConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = largest_n(cfg);
  std::vector<DecodingRow> rows(static_cast<std::size_t>(cfg.n_models));
  parallel_for(cfg.n_models, cfg.threads, [&](int id) {
    const StochasticModel m = experiment_model(cfg, id);
    const Dims dims = identification_dims(cfg, m);
    const SimData train = draw(cfg, m, id, n, n, kTrainStream);
    const SimData test = draw(cfg, m, id, n, cfg.test_samples, kTestStream);
    const SmoothingModel sm = psid_with_smoothing(train.y, train.z, dims, dims);
    DecodingRow& row = rows[static_cast<std::size_t>(id)];
    row.model_id = id;
    row.dims = dims;
    row.ideal = ideal_decode(m, test.y, test.z);
    row.learned.pred =
        r2_score(test.z, kalman_predict(sm.forward.predictor, test.y).z_pred);
    row.learned.filt = r2_score(test.z, kalman_filter(sm.forward, test.y).z_filt);
    row.learned.smooth = r2_score(test.z, smooth_decode(sm, test.y));
    progress(cfg, "model " + std::to_string(id) + " done");
  });
  return rows;
}

std::vector<ShiftRow> run_shift_baseline(const ExperimentConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = largest_n(cfg);
  std::vector<ShiftRow> rows(static_cast<std::size_t>(cfg.n_models));
  parallel_for(cfg.n_models, cfg.threads, [&](int id) {
    const StochasticModel m = experiment_model(cfg, id);
    const Dims dims = identification_dims(cfg, m);
    const SimData train = draw(cfg, m, id, n, n, kTrainStream);
    const SimData test = draw(cfg, m, id, n, cfg.test_samples, kTestStream);
    const R2Triple ideal = ideal_decode(m, test.y, test.z);
    const PredictorModel shifted = shifted_psid_baseline(train.y, train.z, dims);
    const FilteringModel fm = psid_with_filtering(train.y, train.z, dims);
    ShiftRow& row = rows[static_cast<std::size_t>(id)];
    row.model_id = id;
    row.ideal_pred = ideal.pred;
    row.ideal_filt = ideal.filt;
    row.shifted = r2_score(test.z, shifted_decode(shifted, test.y));
    row.psid_filt = r2_score(test.z, kalman_filter(fm, test.y).z_filt);
    progress(cfg, "model " + std::to_string(id) + " done");
  });
  return rows;
}

std::vector<BackwardRow> run_backward_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = grid(cfg);
  std::vector<BackwardRow> rows(cells.size());
  parallel_for(static_cast<int>(cells.size()), cfg.threads, [&](int c) {
    const Cell cell = cells[static_cast<std::size_t>(c)];
    const StochasticModel m = experiment_model(cfg, cell.model_id);
    const Dims dims = identification_dims(cfg, m);
    const SimData train = draw(cfg, m, cell.model_id, cell.n, cell.n, kTrainStream);
    const SimData align =
        draw(cfg, m, cell.model_id, cell.n, cfg.align_samples, kAlignStream);
    const BackwardStochasticParams bw = backward_stochastic_form(m);
    const ParameterSet truth = backward_parameters(bw);
    const PredictorModel reference = bw.predictor();
    const Series y_align_rev = reverse_time(align.y);

    auto evaluate = [&](const FilteringModel& learned) {
      const Alignment al = align_models(reference, learned.predictor, y_align_rev);
      ParameterErrors e = compare_parameters(truth, learned_parameters(learned, al.T));
      // Backward z and y noises are correlated at equal times, so the
      // backward z update gain is not C_z K_f and K_f cannot be solved from it.
      e.Kf.reset();
      return e;
    };
    const FilteringModel z_trained = psid_with_filtering(
        reverse_time(train.y), reverse_time(train.z), dims);
    const SmoothingModel residual = psid_with_smoothing(train.y, train.z, dims, dims);
    BackwardRow& row = rows[static_cast<std::size_t>(c)];
    row.model_id = cell.model_id;
    row.n = cell.n;
    row.z_trained = evaluate(z_trained);
    row.residual_trained = evaluate(residual.backward);
    progress(cfg, "model " + std::to_string(cell.model_id) + " N=" +
                      std::to_string(cell.n) + " done");
  });
  return rows;
}

void write_convergence_csv(std::ostream& out,
                           const std::vector<ConvergenceRow>& rows) {
  write_error_header(out);
  for (const auto& r : rows) write_error_row(out, r.model_id, r.n, r.errors);
}

void write_convergence_summary(std::ostream& out,
                               const std::vector<ConvergenceRow>& rows) {
  write_error_summary(out, rows, [](const ConvergenceRow& r) { return r.errors; });
}

void write_decoding_csv(std::ostream& out, const std::vector<DecodingRow>& rows) {
  out << "model_id,r2_pred_ideal,r2_pred_learned,r2_filt_ideal,r2_filt_learned,"
         "r2_smooth_ideal,r2_smooth_learned\n";
  for (const auto& r : rows) {
    out << r.model_id << ',' << fmt(r.ideal.pred) << ',' << fmt(r.learned.pred)
        << ',' << fmt(r.ideal.filt) << ',' << fmt(r.learned.filt) << ','
        << fmt(r.ideal.smooth) << ',' << fmt(r.learned.smooth) << '\n';
  }
}

void write_shift_csv(std::ostream& out, const std::vector<ShiftRow>& rows) {
  out << "model_id,r2_ideal_pred,r2_shifted,r2_psid_filtering,r2_ideal_filt\n";
  for (const auto& r : rows) {
    out << r.model_id << ',' << fmt(r.ideal_pred) << ',' << fmt(r.shifted) << ','
        << fmt(r.psid_filt) << ',' << fmt(r.ideal_filt) << '\n';
  }
}

void write_shift_summary(std::ostream& out, const std::vector<ShiftRow>& rows) {
  out << "column,mean,sem,count\n";
  auto column = [&](const char* name, double ShiftRow::*field) {
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r.*field);
    const Moments m = moments(xs);
    out << name << ',' << fmt(m.mean) << ',' << fmt(m.sem) << ',' << m.count << '\n';
  };
  column("r2_ideal_pred", &ShiftRow::ideal_pred);
  column("r2_shifted", &ShiftRow::shifted);
  column("r2_psid_filtering", &ShiftRow::psid_filt);
  column("r2_ideal_filt", &ShiftRow::ideal_filt);
}

void write_backward_csv(std::ostream& out, const std::vector<BackwardRow>& rows,
                        bool z_trained) {
  write_error_header(out);
  for (const auto& r : rows) {
    write_error_row(out, r.model_id, r.n,
                    z_trained ? r.z_trained : r.residual_trained);
  }
}

void write_backward_summary(std::ostream& out,
                            const std::vector<BackwardRow>& rows, bool z_trained) {
  write_error_summary(out, rows, [z_trained](const BackwardRow& r) {
    return z_trained ? r.z_trained : r.residual_trained;
  });
}

std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const auto& writer) {
    const std::string path = (std::filesystem::path(cfg.out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
    writer(out);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "write failed: " + path);
    written.push_back(path);
  };
  switch (cfg.experiment) {
    case Experiment::kConvergence: {
      const auto rows = run_convergence(cfg);
      emit("convergence.csv", [&](std::ostream& o) { write_convergence_csv(o, rows); });
      emit("convergence_summary.csv",
           [&](std::ostream& o) { write_convergence_summary(o, rows); });
      break;
    }
    case Experiment::kDecoding: {
      const auto rows = run_decoding(cfg);
      emit("decoding.csv", [&](std::ostream& o) { write_decoding_csv(o, rows); });
      break;
    }
    case Experiment::kShiftBaseline: {
      const auto rows = run_shift_baseline(cfg);
      emit("shift_baseline.csv", [&](std::ostream& o) { write_shift_csv(o, rows); });
      emit("shift_baseline_summary.csv",
           [&](std::ostream& o) { write_shift_summary(o, rows); });
      break;
    }
    case Experiment::kBackwardCompare: {
      const auto rows = run_backward_compare(cfg);
      emit("backward_z_trained.csv",
           [&](std::ostream& o) { write_backward_csv(o, rows, true); });
      emit("backward_residual_trained.csv",
           [&](std::ostream& o) { write_backward_csv(o, rows, false); });
      emit("backward_z_trained_summary.csv",
           [&](std::ostream& o) { write_backward_summary(o, rows, true); });
      emit("backward_residual_trained_summary.csv",
           [&](std::ostream& o) { write_backward_summary(o, rows, false); });
      break;
    }
  }
  return written;
}

}  // namespace psid
