#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "psid/experiments.hpp"
#include "psid/model_io.hpp"
#include "psid/smoothing.hpp"
#include "psid/subspace.hpp"

namespace py = pybind11;
using namespace psid;

namespace {

py::dict trace_dict(const EstimateTrace& t) {
  py::dict d;
  auto put = [&](const char* key, const Series& s) {
    if (s.size() > 0) d[key] = s;
  };
  put("x_pred", t.x_pred);
  put("x_filt", t.x_filt);
  put("x_smooth", t.x_smooth);
  put("y_pred", t.y_pred);
  put("z_pred", t.z_pred);
  put("z_filt", t.z_filt);
  put("z_smooth", t.z_smooth);
  return d;
}

Dims make_dims(int n_x, int n_y, int n_z, int n_1, int horizon) {
  Dims d;
  d.n_x = n_x;
  d.n_y = n_y;
  d.n_z = n_z;
  d.n_1 = n_1 < 0 ? n_x : n_1;
  d.horizon_i = horizon > 0 ? horizon : default_horizon(n_x, n_y, n_z, d.n_1);
  d.validate();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Preferential subspace identification with filtering and smoothing";

  static py::exception<Error> psid_error(m, "PsidError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = psid_error;
      py::object inst = err(e.what());
      inst.attr("code") = to_string(e.code());
      PyErr_SetObject(psid_error.ptr(), inst.ptr());
    }
  });

  py::class_<Dims>(m, "Dims")
      .def(py::init(&make_dims), py::arg("n_x"), py::arg("n_y"), py::arg("n_z"),
           py::arg("n_1") = -1, py::arg("horizon") = 0)
      .def_readwrite("n_x", &Dims::n_x)
      .def_readwrite("n_y", &Dims::n_y)
      .def_readwrite("n_z", &Dims::n_z)
      .def_readwrite("n_1", &Dims::n_1)
      .def_readwrite("horizon", &Dims::horizon_i);

  py::class_<StochasticModel>(m, "StochasticModel")
      .def(py::init<>())
      .def_readwrite("A", &StochasticModel::A)
      .def_readwrite("C_y", &StochasticModel::C_y)
      .def_readwrite("C_z", &StochasticModel::C_z)
      .def_readwrite("Q", &StochasticModel::Q)
      .def_readwrite("R", &StochasticModel::R)
      .def_readwrite("S", &StochasticModel::S)
      .def_readwrite("R_z", &StochasticModel::R_z)
      .def_readwrite("S_xz", &StochasticModel::S_xz)
      .def_property_readonly("n_x", &StochasticModel::n_x)
      .def_property_readonly("n_y", &StochasticModel::n_y)
      .def_property_readonly("n_z", &StochasticModel::n_z)
      .def("validate", &StochasticModel::validate);

  py::class_<PredictorModel>(m, "PredictorModel")
      .def(py::init<>())
      .def_readwrite("A", &PredictorModel::A)
      .def_readwrite("C_y", &PredictorModel::C_y)
      .def_readwrite("C_z", &PredictorModel::C_z)
      .def_readwrite("K", &PredictorModel::K)
      .def_readwrite("Sigma_y", &PredictorModel::Sigma_y)
      .def_readwrite("G_y", &PredictorModel::G_y)
      .def_readwrite("Sigma_e", &PredictorModel::Sigma_e);

  py::class_<FilteringModel>(m, "FilteringModel")
      .def(py::init<>())
      .def_readwrite("predictor", &FilteringModel::predictor)
      .def_readwrite("CzKf", &FilteringModel::CzKf)
      .def_readwrite("GammaZKf", &FilteringModel::GammaZKf)
      .def_readwrite("Kf", &FilteringModel::Kf);

  py::enum_<Combine>(m, "Combine")
      .value("RESIDUAL_SUM", Combine::kResidualSum)
      .value("PLAIN_MEAN", Combine::kPlainMean);

  py::class_<SmoothingModel>(m, "SmoothingModel")
      .def(py::init<>())
      .def_readwrite("forward", &SmoothingModel::forward)
      .def_readwrite("backward", &SmoothingModel::backward)
      .def_readwrite("combine", &SmoothingModel::combine);

  py::class_<DareSolution>(m, "DareSolution")
      .def_readonly("P_pred", &DareSolution::P_pred)
      .def_readonly("P_filt", &DareSolution::P_filt)
      .def_readonly("K", &DareSolution::K)
      .def_readonly("K_f", &DareSolution::K_f)
      .def_readonly("K_v", &DareSolution::K_v)
      .def_readonly("Sigma_e", &DareSolution::Sigma_e);

  py::class_<R2Triple>(m, "R2Triple")
      .def_readonly("pred", &R2Triple::pred)
      .def_readonly("filt", &R2Triple::filt)
      .def_readonly("smooth", &R2Triple::smooth);

  m.def(
      "generate_random_model",
      [](std::uint64_t seed, std::pair<int, int> n_x, std::pair<int, int> n_y,
         std::pair<int, int> n_z, bool correlated_S, bool random_n1) {
        GenConfig cfg;
        cfg.n_x = {n_x.first, n_x.second};
        cfg.n_y = {n_y.first, n_y.second};
        cfg.n_z = {n_z.first, n_z.second};
        cfg.correlated_S = correlated_S;
        cfg.n1_policy = random_n1 ? N1Policy::kRandom : N1Policy::kFull;
        Rng rng = cell_rng(seed, 0, 0, 0);
        return generate_random_model(cfg, rng);
      },
      py::arg("seed"), py::arg("n_x") = std::pair{1, 6}, py::arg("n_y") = std::pair{1, 10},
      py::arg("n_z") = std::pair{1, 10}, py::arg("correlated_S") = false,
      py::arg("random_n1") = false);

  m.def(
      "simulate",
      [](const StochasticModel& model, Eigen::Index n, std::uint64_t seed) {
        Rng rng = cell_rng(seed, 0, 0, 1);
        SimData d = simulate(model, n, rng);
        return py::make_tuple(d.y, d.z, d.x);
      },
      py::arg("model"), py::arg("n"), py::arg("seed"),
      "Stationary simulation; returns (y, z, x) with one sample per row.");

  m.def("default_horizon", &default_horizon);
  m.def("solve_dare", &solve_dare);
  m.def("to_predictor_form", &to_predictor_form);
  m.def("optimal_czkf", &optimal_czkf);
  m.def("observable_dimension", &observable_dimension, py::arg("A"), py::arg("C"),
        py::arg("rel_tol") = 1e-9);

  m.def("psid_identify", &psid_identify, py::arg("y"), py::arg("z"), py::arg("dims"));
  m.def(
      "psid_with_filtering",
      [](const Series& y, const Series& z, const Dims& dims) {
        return psid_with_filtering(y, z, dims);
      },
      py::arg("y"), py::arg("z"), py::arg("dims"));
  m.def("psid_with_smoothing", &psid_with_smoothing, py::arg("y"), py::arg("z"),
        py::arg("dims_fwd"), py::arg("dims_bwd"));
  m.def("psid_smoothing_alt", &psid_smoothing_alt, py::arg("y"), py::arg("z"),
        py::arg("dims"));

  m.def(
      "kalman_predict",
      [](const PredictorModel& p, const Series& y) { return trace_dict(kalman_predict(p, y)); },
      py::arg("model"), py::arg("y"));
  m.def(
      "kalman_filter",
      [](const FilteringModel& f, const Series& y) { return trace_dict(kalman_filter(f, y)); },
      py::arg("model"), py::arg("y"));
  m.def(
      "rts_smooth",
      [](const StochasticModel& s, const Series& y) { return trace_dict(rts_smooth(s, y)); },
      py::arg("model"), py::arg("y"));
  m.def("smooth_decode", &smooth_decode, py::arg("model"), py::arg("y"));
  m.def("ideal_decode", &ideal_decode, py::arg("model"), py::arg("y"), py::arg("z"));
  m.def("r2_score", &r2_score, py::arg("z_true"), py::arg("z_hat"));

  m.def("save_stochastic_model", &save_model_file<StochasticModel>);
  m.def("save_filtering_model", &save_model_file<FilteringModel>);
  m.def("save_smoothing_model", &save_model_file<SmoothingModel>);
  m.def("load_stochastic_model", &load_stochastic_model_file);
  m.def("load_filtering_model", &load_filtering_model_file);
  m.def("load_smoothing_model", &load_smoothing_model_file);
}
