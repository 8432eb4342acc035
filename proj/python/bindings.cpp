// Python bindings for the SGLD fluctuation toolkit.  The module mirrors the
// C++ surface that a notebook-level user needs: problem construction, chain
// simulation, Stein fields, the self-normalized statistic and its
// diagnostics, and the file-driven experiment runner.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgld/dynamics.hpp"
#include "sgld/errors.hpp"
#include "sgld/harness.hpp"
#include "sgld/problems.hpp"
#include "sgld/rng.hpp"
#include "sgld/stats.hpp"
#include "sgld/stein.hpp"

namespace py = pybind11;
using namespace sgld;

namespace {

std::span<const double> as_span(const std::vector<double>& v) { return {v.data(), v.size()}; }

py::array_t<double> matrix_to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::memcpy(out.mutable_data(), m.data().data(), m.data().size() * sizeof(double));
    return out;
}

Matrix numpy_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ConfigError("expected a 2-d array");
    Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(m.data().data(), a.data(), m.data().size() * sizeof(double));
    return m;
}

py::array_t<double> states_to_numpy(const Trajectory& t) {
    py::array_t<double> out({static_cast<py::ssize_t>(t.m), static_cast<py::ssize_t>(t.dim)});
    std::memcpy(out.mutable_data(), t.states.data(), t.states.size() * sizeof(double));
    return out;
}

}  // namespace

PYBIND11_MODULE(pysgld, mod) {
    mod.doc() =
        "Stochastic-gradient Langevin chains, their diffusion limit, Stein-equation "
        "fields, and the self-normalized fluctuation statistic.";

    py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(mod, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DiagnosticError>(mod, "DiagnosticError", PyExc_RuntimeError);
    py::register_exception<IoError>(mod, "IoError", PyExc_OSError);

    py::class_<AssumptionConstants>(mod, "AssumptionConstants")
        .def_readonly("L", &AssumptionConstants::L)
        .def_readonly("K1", &AssumptionConstants::K1)
        .def_readonly("K2", &AssumptionConstants::K2);

    py::class_<Problem, std::shared_ptr<Problem>>(mod, "Problem")
        .def_property_readonly("name", &Problem::name)
        .def_property_readonly("dim", &Problem::dim)
        .def_property_readonly("zeta_dim", &Problem::zeta_dim)
        .def_property_readonly("constants", &Problem::constants)
        .def("grad_p",
             [](const Problem& p, const std::vector<double>& x) {
                 std::vector<double> out(static_cast<std::size_t>(p.dim()));
                 p.grad_p(as_span(x), out);
                 return out;
             },
             py::arg("x"), "Population gradient at x.")
        .def("grad_psi",
             [](const Problem& p, const std::vector<double>& x, const std::vector<double>& zeta) {
                 std::vector<double> out(static_cast<std::size_t>(p.dim()));
                 p.grad_psi(as_span(x), as_span(zeta), out);
                 return out;
             },
             py::arg("x"), py::arg("zeta"), "Per-sample gradient at (x, zeta).")
        .def("chain_stationary_variance",
             [](const Problem& p, double eta, double delta) -> py::object {
                 auto v = p.chain_stationary_variance(eta, delta);
                 if (!v) return py::none();
                 return py::float_(*v);
             },
             py::arg("eta"), py::arg("delta"))
        .def("sde_stationary_variance",
             [](const Problem& p, double eta, double delta) -> py::object {
                 auto v = p.sde_stationary_variance(eta, delta);
                 if (!v) return py::none();
                 return py::float_(*v);
             },
             py::arg("eta"), py::arg("delta"))
        .def("ou_coefficient",
             [](const Problem& p, double eta, double delta) -> py::object {
                 auto v = p.ou_coefficient(eta, delta);
                 if (!v) return py::none();
                 return py::float_(*v);
             },
             py::arg("eta"), py::arg("delta"));

    mod.def(
        "make_problem",
        [](const std::string& name, const py::dict& params) {
            std::map<std::string, double> m;
            for (auto item : params)
                m[py::cast<std::string>(item.first)] = py::cast<double>(item.second);
            return make_problem(name, m);
        },
        py::arg("name"), py::arg("params") = py::dict(),
        "Build a registered problem (\"gaussian_mean\", \"perturbed_quadratic\").");

    py::class_<TestFunction>(mod, "TestFunction")
        .def_static("linear", &TestFunction::linear, py::arg("direction"),
                    py::arg("offset") = 0.0)
        .def_static("quadratic_radial", &TestFunction::quadratic_radial, py::arg("center"))
        .def("__call__",
             [](const TestFunction& h, const std::vector<double>& x) { return h(as_span(x)); },
             py::arg("x"))
        .def("scaled", &TestFunction::scaled, py::arg("c"))
        .def_property_readonly("dim", &TestFunction::dim)
        .def_property_readonly("amplitude", &TestFunction::amplitude);

    py::class_<ChainConfig>(mod, "ChainConfig")
        .def(py::init<>())
        .def_readwrite("eta", &ChainConfig::eta)
        .def_readwrite("delta", &ChainConfig::delta)
        .def_readwrite("m", &ChainConfig::m)
        .def_readwrite("burn_in", &ChainConfig::burn_in)
        .def_readwrite("seed", &ChainConfig::seed)
        .def_readwrite("initial_state", &ChainConfig::initial_state)
        .def_readwrite("keep_noise_log", &ChainConfig::keep_noise_log);

    py::class_<Trajectory>(mod, "Trajectory")
        .def_property_readonly("m", [](const Trajectory& t) { return t.m; })
        .def_property_readonly("dim", [](const Trajectory& t) { return t.dim; })
        .def_property_readonly("states", &states_to_numpy,
                               "Recorded window as an (m, dim) array (copy).")
        .def_property_readonly("final_state",
                               [](const Trajectory& t) { return t.final_state; });

    mod.def(
        "run_chain",
        [](const std::shared_ptr<Problem>& p, const ChainConfig& c) { return run_chain(*p, c); },
        py::arg("problem"), py::arg("config"),
        "Run the SGLD recursion; the stream is derived from config.seed.");

    mod.def(
        "psd_sqrt",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
            return matrix_to_numpy(psd_sqrt(numpy_to_matrix(a)));
        },
        py::arg("matrix"), "Symmetric PSD square root via eigendecomposition.");

    py::class_<SteinField>(mod, "SteinField")
        .def("f", [](const SteinField& s, const std::vector<double>& x) { return s.f(as_span(x)); },
             py::arg("x"))
        .def("grad",
             [](const SteinField& s, const std::vector<double>& x) {
                 return s.grad(as_span(x));
             },
             py::arg("x"))
        .def_property_readonly("pi_h", &SteinField::pi_h)
        .def_property_readonly("dim", &SteinField::dim);

    mod.def("analytic_stein_ou", &analytic_stein_ou, py::arg("h"), py::arg("a"),
            "Closed-form Stein field for the OU generator with diffusion coefficient a.");

    mod.def("pi_hat", &pi_hat, py::arg("trajectory"), py::arg("h"));
    mod.def("y_eta", &y_eta, py::arg("trajectory"), py::arg("field"));
    mod.def("w_eta", &w_eta, py::arg("trajectory"), py::arg("h"), py::arg("field"),
            py::arg("pi_h"), py::arg("eta"), py::arg("delta"));
    mod.def("h_eta", &h_eta, py::arg("trajectory"), py::arg("field"));

    mod.def("normal_cdf", &normal_cdf, py::arg("x"));
    mod.def("normal_tail", &normal_tail, py::arg("x"));
    mod.def(
        "ks_distance",
        [](const std::vector<double>& samples) { return ks_distance(as_span(samples)); },
        py::arg("samples"));
    mod.def(
        "w1_sorted",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return w1_sorted(as_span(a), as_span(b));
        },
        py::arg("samples_a"), py::arg("samples_b"));

    py::class_<TailRow>(mod, "TailRow")
        .def_readonly("x", &TailRow::x)
        .def_readonly("p_hat", &TailRow::p_hat)
        .def_readonly("normal_tail", &TailRow::normal_tail)
        .def_readonly("ratio", &TailRow::ratio)
        .def_readonly("std_error", &TailRow::std_error)
        .def_readonly("direction", &TailRow::direction);

    py::class_<TailTable>(mod, "TailTable")
        .def_readonly("rows", &TailTable::rows)
        .def_readonly("n_samples", &TailTable::n_samples);

    mod.def(
        "tail_ratio_table",
        [](const std::vector<double>& w, const std::vector<double>& grid) {
            return tail_ratio_table(as_span(w), as_span(grid));
        },
        py::arg("w_samples"), py::arg("x_grid"));

    py::class_<RegimeInfo>(mod, "RegimeInfo")
        .def_readonly("tag", &RegimeInfo::tag)
        .def_readonly("boundary_m", &RegimeInfo::boundary_m)
        .def_readonly("validity_scale", &RegimeInfo::validity_scale)
        .def_readonly("validity_note", &RegimeInfo::validity_note);

    mod.def("theorem_regime", &theorem_regime, py::arg("m"), py::arg("eta"), py::arg("delta"));

    mod.def(
        "run_experiment_file",
        [](const std::string& path, const std::string& out_dir, int workers) {
            ExperimentConfig config = load_config(path);
            if (!out_dir.empty()) config.out_dir = out_dir;
            if (workers > 0) config.workers = workers;
            RunResult result = run_experiment(config);
            py::dict d;
            d["checks_passed"] = result.checks_passed;
            d["csv_path"] = result.csv_path;
            d["manifest_path"] = result.manifest_path;
            d["failures"] = result.failures;
            return d;
        },
        py::arg("path"), py::arg("out_dir") = std::string(), py::arg("workers") = 0,
        "Load a JSON experiment config, run it, and return the verdict and artifact paths.");

    mod.attr("__version__") = "0.1.0";
}
