#include "mixrom/error.hpp"
#include "mixrom/feature_analysis.hpp"
#include "mixrom/pipeline.hpp"
#include "mixrom/qoi.hpp"
#include "mixrom/rom_ml.hpp"
#include "mixrom/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace mixrom;

namespace {

nlohmann::json to_nlohmann(const py::handle& obj) {
    const py::module_ json = py::module_::import("json");
    return nlohmann::json::parse(json.attr("dumps")(obj).cast<std::string>());
}

py::object to_python(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::dict series_dict(const qoi::QoISeries& s) {
    py::dict d;
    d["species"] = physics::species_name(s.species);
    d["t"] = s.times;
    d["avg_conc"] = s.avg_conc;
    d["avg_sq_conc"] = s.avg_sq_conc;
    d["degree_of_mixing"] = s.degree_of_mixing;
    d["zero_variance"] = s.zero_variance;
    return d;
}

py::dict importance_dict(const features::ImportanceReport& r) {
    py::dict d;
    d["method"] = features::method_name(r.method);
    d["features"] = r.features;
    d["scores"] = r.scores;
    d["ranking"] = r.ranking;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the mixrom simulation, reduced-order model and feature analysis library";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "simulate",
        [](const py::dict& config) {
            const physics::SimulationConfig cfg = physics::config_from_json(to_nlohmann(config));
            fem::SimulationResult result;
            {
                py::gil_scoped_release release;
                result = fem::run_simulation(cfg);
            }
            const auto series = qoi::compute_qois("py", result);
            const auto diag = qoi::check_diagnostics(result);
            py::dict out;
            py::list qois;
            for (const auto& s : series) {
                qois.append(series_dict(s));
            }
            out["qois"] = qois;
            out["config"] = to_python(physics::to_json(cfg));
            out["mass_drift"] = diag.mass_drift;
            out["m_norm_monotone"] = diag.m_norm_monotone;
            out["c_f"] = result.c_f.back();
            out["c_g"] = result.c_g.back();
            return out;
        },
        py::arg("config") = py::dict(),
        "Runs one simulation from a flat config dict and returns its normalized QoIs");

    m.def(
        "fit_exponent",
        [](const std::vector<double>& series, const std::vector<double>& t, double t_lo, double t_hi) {
            const qoi::ScalingFit f = qoi::fit_exponent(series, t, {t_lo, t_hi});
            return py::make_tuple(f.exponent, f.prefactor, f.r2);
        },
        py::arg("series"), py::arg("t"), py::arg("t_lo") = 0.2, py::arg("t_hi") = 1.0);

    py::class_<ml::SvrModel>(m, "SvrModel")
        .def_readonly("penalty", &ml::SvrModel::penalty)
        .def_readonly("epsilon", &ml::SvrModel::epsilon)
        .def_readonly("bias", &ml::SvrModel::bias)
        .def_property_readonly("gamma", [](const ml::SvrModel& s) { return s.kernel.gamma; })
        .def_property_readonly("n_support", &ml::SvrModel::num_support)
        .def("decision", [](const ml::SvrModel& s, const ml::Matrix& x) { return ml::svr_decision(s, x); })
        .def("predict", [](const ml::SvrModel& s, const ml::Matrix& x) { return ml::svr_predict(s, x); })
        .def("save", [](const ml::SvrModel& s, const std::filesystem::path& p) { ml::save_model(p, s); })
        .def_static("load", &ml::load_svr);

    m.def(
        "svr_train",
        [](const ml::Matrix& x, const ml::Vector& y, double penalty, double gamma, double epsilon) {
            py::gil_scoped_release release;
            return ml::svr_train(x, y, penalty, epsilon, ml::RbfKernel{gamma});
        },
        py::arg("x"), py::arg("y"), py::arg("penalty") = 1.0, py::arg("gamma") = 0.1, py::arg("epsilon") = 0.1,
        "Epsilon-SVR with an RBF kernel on features already scaled to [0,1]");

    m.def("r2_score", &ml::r2_score, py::arg("y_true"), py::arg("y_pred"));

    m.def(
        "feature_importance",
        [](const ml::Matrix& x, const ml::Vector& y, const std::vector<std::string>& names, const std::string& method,
           std::uint64_t seed) {
            switch (features::parse_method(method)) {
                case features::ImportanceMethod::kFTest:
                    return importance_dict(features::f_test_importance(x, y, names));
                case features::ImportanceMethod::kMutualInfo:
                    return importance_dict(features::mutual_info_importance(x, y, names, 3, seed));
                case features::ImportanceMethod::kRandomForest: {
                    features::ForestOptions o;
                    o.seed = seed;
                    return importance_dict(features::random_forest_importance(x, y, names, o));
                }
            }
            throw InvalidArgument("unknown method");
        },
        py::arg("x"), py::arg("y"), py::arg("names"), py::arg("method") = "f_test", py::arg("seed") = 0);

    m.def(
        "kmeans",
        [](const ml::Matrix& points, int k, std::uint64_t seed) {
            const features::ClusterResult r = features::fit_kmeans(points, k, seed);
            return py::make_tuple(r.assignments, r.centroids, r.explained_variance_fraction);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0);

    m.def(
        "run_sweep",
        [](const py::dict& spec, const std::filesystem::path& out, int workers) {
            const pipeline::SweepSpec s = pipeline::sweep_spec_from_json(to_nlohmann(spec));
            pipeline::SweepSummary summary;
            {
                py::gil_scoped_release release;
                summary = pipeline::run_sweep(s, out, workers);
            }
            return py::make_tuple(summary.runs, summary.succeeded);
        },
        py::arg("spec"), py::arg("out"), py::arg("workers") = 1);

    m.def(
        "load_dataset",
        [](const std::filesystem::path& dir, const std::string& target, const std::string& species) {
            const pipeline::Dataset d = pipeline::build_dataset(dir, target, physics::parse_species(species));
            return py::make_tuple(d.scaled.scaled, d.values, d.sim_ids, d.row_sim);
        },
        py::arg("dir"), py::arg("target") = "degree_of_mixing", py::arg("species") = "A",
        "Scaled feature matrix, targets, run ids and per-row run index of a sweep directory");

    m.attr("feature_names") = features::kFeatureNames;
}
