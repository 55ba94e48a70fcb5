#include "psid/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace psid {

namespace {

constexpr const char* kHeader = "psid-model v1";

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& tok, double* v) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, *v);
  return ec == std::errc() && ptr == end;
}

bool parse_int(const std::string& tok, long* v) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, *v);
  return ec == std::errc() && ptr == end;
}

// Line source that skips blank lines and remembers where it is.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  bool next(std::string* line) {
    while (std::getline(in_, *line)) {
      ++line_no_;
      if (!line->empty() && line->back() == '\r') line->pop_back();
      if (line->find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::string expect(const std::string& what) {
    std::string line;
    if (!next(&line)) parse_fail(line_no_ + 1, "unexpected end of file, missing " + what);
    return line;
  }

  int line() const { return line_no_; }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

struct Dims3 {
  long n_x = 0, n_y = 0, n_z = 0;
};

Dims3 read_header(Reader& r) {
  const std::string head = r.expect("header");
  const auto tok = split_ws(head);
  if (tok.size() == 2 && tok[0] == "psid-model") {
    if (tok[1] != "v1") {
      throw Error(ErrorCode::kFormatVersionError,
                  "line " + std::to_string(r.line()) + ": unsupported version " + tok[1]);
    }
  } else {
    parse_fail(r.line(), "expected '" + std::string(kHeader) + "'");
  }
  const auto d = split_ws(r.expect("dims"));
  Dims3 out;
  if (d.size() != 4 || d[0] != "dims" || !parse_int(d[1], &out.n_x) ||
      !parse_int(d[2], &out.n_y) || !parse_int(d[3], &out.n_z) ||
      out.n_x < 1 || out.n_y < 1 || out.n_z < 1) {
    parse_fail(r.line(), "expected 'dims n_x n_y n_z'");
  }
  return out;
}

Matrix read_matrix(Reader& r, const std::string& name, long rows, long cols) {
  const auto head = split_ws(r.expect("section " + name));
  long hr = 0, hc = 0;
  if (head.size() != 4 || head[0] != "matrix" || !parse_int(head[2], &hr) ||
      !parse_int(head[3], &hc)) {
    parse_fail(r.line(), "expected 'matrix " + name + " rows cols'");
  }
  if (head[1] != name) {
    parse_fail(r.line(), "expected section " + name + ", found " + head[1]);
  }
  if (hr != rows || hc != cols) {
    parse_fail(r.line(), "section " + name + " has shape " +
                             std::to_string(hr) + "x" + std::to_string(hc) +
                             ", expected " + std::to_string(rows) + "x" +
                             std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    const auto vals = split_ws(r.expect("rows of section " + name));
    if (static_cast<long>(vals.size()) != cols) {
      parse_fail(r.line(), "section " + name + " row has " +
                               std::to_string(vals.size()) + " values");
    }
    for (long j = 0; j < cols; ++j) {
      if (!parse_double(vals[j], &m(i, j))) {
        parse_fail(r.line(), "bad number '" + vals[j] + "'");
      }
    }
  }
  return m;
}

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_header(std::ostream& out, int nx, int ny, int nz) {
  out << kHeader << '\n' << "dims " << nx << ' ' << ny << ' ' << nz << '\n';
}

FilteringModel read_filtering_block(Reader& r) {
  const Dims3 d = read_header(r);
  FilteringModel fm;
  PredictorModel& p = fm.predictor;
  p.A = read_matrix(r, "A", d.n_x, d.n_x);
  p.C_y = read_matrix(r, "CY", d.n_y, d.n_x);
  p.C_z = read_matrix(r, "CZ", d.n_z, d.n_x);
  p.K = read_matrix(r, "K", d.n_x, d.n_y);
  p.Sigma_y = read_matrix(r, "SIGY", d.n_y, d.n_y);
  fm.CzKf = read_matrix(r, "CZKF", d.n_z, d.n_y);
  return fm;
}

void write_filtering_block(std::ostream& out, const FilteringModel& fm) {
  const PredictorModel& p = fm.predictor;
  if (!fm.CzKf) throw Error(ErrorCode::kMissingGain, "C_z K_f not learned");
  write_header(out, p.n_x(), p.n_y(), p.n_z());
  write_matrix(out, "A", p.A);
  write_matrix(out, "CY", p.C_y);
  write_matrix(out, "CZ", p.C_z);
  write_matrix(out, "K", p.K);
  write_matrix(out, "SIGY", p.Sigma_y);
  write_matrix(out, "CZKF", *fm.CzKf);
}

void expect_end(Reader& r) {
  std::string extra;
  if (r.next(&extra)) parse_fail(r.line(), "trailing content");
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

void save_model(std::ostream& out, const StochasticModel& m) {
  write_header(out, m.n_x(), m.n_y(), m.n_z());
  write_matrix(out, "A", m.A);
  write_matrix(out, "CY", m.C_y);
  write_matrix(out, "CZ", m.C_z);
  write_matrix(out, "Q", m.Q);
  write_matrix(out, "R", m.R);
  write_matrix(out, "S", m.S);
  write_matrix(out, "RZ", m.R_z);
  write_matrix(out, "SXZ", m.S_xz);
}

void save_model(std::ostream& out, const FilteringModel& model) {
  write_filtering_block(out, model);
}

void save_model(std::ostream& out, const SmoothingModel& model) {
  out << "combine = "
      << (model.combine == Combine::kResidualSum ? "sum" : "mean") << '\n';
  write_filtering_block(out, model.forward);
  write_filtering_block(out, model.backward);
}

StochasticModel load_stochastic_model(std::istream& in) {
  Reader r(in);
  const Dims3 d = read_header(r);
  StochasticModel m;
  m.A = read_matrix(r, "A", d.n_x, d.n_x);
  m.C_y = read_matrix(r, "CY", d.n_y, d.n_x);
  m.C_z = read_matrix(r, "CZ", d.n_z, d.n_x);
  m.Q = read_matrix(r, "Q", d.n_x, d.n_x);
  m.R = read_matrix(r, "R", d.n_y, d.n_y);
  m.S = read_matrix(r, "S", d.n_x, d.n_y);
  m.R_z = read_matrix(r, "RZ", d.n_z, d.n_z);
  m.S_xz = read_matrix(r, "SXZ", d.n_x, d.n_z);
  expect_end(r);
  return m;
}

FilteringModel load_filtering_model(std::istream& in) {
  Reader r(in);
  FilteringModel fm = read_filtering_block(r);
  expect_end(r);
  return fm;
}

SmoothingModel load_smoothing_model(std::istream& in) {
  Reader r(in);
  const auto tok = split_ws(r.expect("combine line"));
  SmoothingModel sm;
  if (tok.size() != 3 || tok[0] != "combine" || tok[1] != "=" ||
      (tok[2] != "sum" && tok[2] != "mean")) {
    parse_fail(r.line(), "expected 'combine = sum|mean'");
  }
  sm.combine = tok[2] == "sum" ? Combine::kResidualSum : Combine::kPlainMean;
  sm.forward = read_filtering_block(r);
  sm.backward = read_filtering_block(r);
  expect_end(r);
  return sm;
}

ModelKind detect_model_kind(const std::string& path) {
  std::ifstream in = open_in(path);
  Reader r(in);
  std::string line;
  bool smoothing = false;
  while (r.next(&line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "combine") smoothing = true;
    if (tok[0] == "matrix" && tok.size() > 1) {
      if (tok[1] == "Q") return ModelKind::kStochastic;
      if (tok[1] == "K") {
        return smoothing ? ModelKind::kSmoothing : ModelKind::kFiltering;
      }
    }
  }
  parse_fail(r.line(), "cannot determine model kind");
}

template <class Model>
void save_model_file(const std::string& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  save_model(out, model);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "write failed: " + path);
}

template void save_model_file(const std::string&, const StochasticModel&);
template void save_model_file(const std::string&, const FilteringModel&);
template void save_model_file(const std::string&, const SmoothingModel&);

StochasticModel load_stochastic_model_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return load_stochastic_model(in);
}

FilteringModel load_filtering_model_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return load_filtering_model(in);
}

SmoothingModel load_smoothing_model_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return load_smoothing_model(in);
}

Series read_series_csv(std::istream& in) {
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) parse_fail(1, "empty CSV");
  ++line_no;
  auto split_comma = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(s);
    while (std::getline(is, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return out;
  };
  const auto header = split_comma(line);
  if (header.size() < 2 || header[0] != "t") {
    parse_fail(line_no, "header must be 't,<name>1,...'");
  }
  const std::size_t dim = header.size() - 1;
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_comma(line);
    if (cells.size() != header.size()) {
      parse_fail(line_no, "expected " + std::to_string(header.size()) + " fields");
    }
    for (std::size_t j = 1; j < cells.size(); ++j) {
      double v = 0.0;
      if (!parse_double(cells[j], &v)) {
        parse_fail(line_no, "bad number '" + cells[j] + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  Series s(rows, static_cast<Eigen::Index>(dim));
  std::copy(values.begin(), values.end(), s.data());
  return s;
}

Series read_series_csv_file(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_series_csv(in);
}

void write_series_csv(std::ostream& out, const Series& s,
                      const std::string& prefix) {
  out << 't';
  for (Eigen::Index j = 0; j < s.cols(); ++j) out << ',' << prefix << j + 1;
  out << '\n';
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    out << k;
    for (Eigen::Index j = 0; j < s.cols(); ++j) out << ',' << format_double(s(k, j));
    out << '\n';
  }
}

}  // namespace psid
