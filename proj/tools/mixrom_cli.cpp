// Command-line front end: simulate, sweep, dataset, train, predict,
// features, cluster, report.

#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/pipeline.hpp"
#include "mixrom/qoi.hpp"
#include "mixrom/simulation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <sstream>

namespace {

using namespace mixrom;
namespace fs = std::filesystem;

constexpr int kUsage = 1;
constexpr int kNumerical = 2;

nlohmann::json parse_json_arg(const std::string& arg) {
    const std::string text = !arg.empty() && arg.front() == '{' ? arg : io::read_text(arg);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("cannot parse JSON from '" + arg + "': " + e.what());
    }
}

physics::Species qoi_species(const std::string& s) {
    const physics::Species sp = physics::parse_species(s);
    if (sp != physics::Species::kA && sp != physics::Species::kB && sp != physics::Species::kC) {
        throw InvalidArgument("species must be A, B or C");
    }
    return sp;
}

int cmd_simulate(const std::string& config_path, const fs::path& out, std::string sim_id, bool fields) {
    const physics::SimulationConfig cfg =
        config_path.empty() ? physics::SimulationConfig{} : physics::config_from_json(parse_json_arg(config_path));
    cfg.validate();
    if (sim_id.empty()) {
        sim_id = "sim";
    }
    const fem::SimulationResult result = fem::run_simulation(cfg);
    qoi::write_qoi_csv(out / (sim_id + ".qoi.csv"), qoi::compute_qois(sim_id, result));
    io::write_text_atomic(out / (sim_id + ".config.json"), physics::to_json(cfg).dump(2) + "\n");
    std::string diag = "step,t,mass_F,mass_G,mnorm_F,mnorm_G,qp_iterations,active_bounds,reassembled\n";
    for (const auto& d : result.diagnostics) {
        diag += io::csv_line({std::to_string(d.step), io::format_double(d.time), io::format_double(d.mass_f),
                              io::format_double(d.mass_g), io::format_double(d.mnorm_f), io::format_double(d.mnorm_g),
                              std::to_string(d.qp_iterations), std::to_string(d.active_bounds),
                              d.reassembled ? "1" : "0"});
    }
    io::write_text_atomic(out / (sim_id + ".diagnostics.csv"), diag);
    if (fields) {
        using physics::Species;
        fem::write_long_format_csv(out / (sim_id + ".fields.csv"), sim_id, result,
                                   {Species::kF, Species::kG, Species::kA, Species::kB, Species::kC});
    }
    const qoi::BoundDiagnostics b = qoi::check_diagnostics(result);
    std::cout << "wrote " << (out / (sim_id + ".qoi.csv")).string() << '\n'
              << "mass drift " << b.mass_drift << ", M-norm increase " << b.m_norm_increase << ", reassemblies "
              << result.reassemblies << '\n';
    return 0;
}

int cmd_sweep(const std::string& spec_path, const fs::path& out, int workers, std::optional<std::uint64_t> seed,
              bool quiet) {
    pipeline::SweepSpec spec =
        spec_path.empty() ? pipeline::desk_sweep_spec() : pipeline::sweep_spec_from_json(parse_json_arg(spec_path));
    if (seed) {
        spec.seed = *seed;
    }
    const pipeline::SweepSummary s = pipeline::run_sweep(spec, out, workers, quiet ? nullptr : &std::cerr);
    std::cout << s.succeeded << "/" << s.runs << " runs succeeded; manifest at " << (out / "manifest.csv").string()
              << '\n';
    return s.succeeded == s.runs ? 0 : kNumerical;
}

int cmd_dataset(const fs::path& in, const std::string& target, const std::string& species, fs::path out) {
    const pipeline::Dataset d = pipeline::build_dataset(in, target, qoi_species(species));
    for (const auto& w : d.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    if (out.empty()) {
        out = in / ("dataset_" + target + "_" + species + ".csv");
    }
    pipeline::write_dataset_csv(out, d);
    std::cout << d.rows() << " rows x " << d.scaled.scaled.cols() << " features from " << d.sim_ids.size()
              << " runs -> " << out.string() << '\n';
    return 0;
}

int cmd_train(const std::string& protocol_path, bool quiet) {
    const nlohmann::json j = parse_json_arg(protocol_path);
    const fs::path base = protocol_path.front() == '{' ? fs::path{} : fs::path(protocol_path).parent_path();
    const pipeline::ExperimentProtocol p = pipeline::protocol_from_json(j, base);
    const pipeline::TrainReport r = pipeline::train_protocol(p, quiet ? nullptr : &std::cerr);
    for (const auto& f : r.fractions) {
        std::cout << "train " << f.train_fraction * 100 << "% (" << f.train_sims.size() << " runs): ensemble R2 "
                  << f.svr_ensemble_r2 << ", median R2 " << f.svr_median_r2 << ", ensemble F1 " << f.svm_ensemble_f1
                  << '\n';
    }
    std::cout << "report at " << (p.out / "report.json").string() << '\n';
    return 0;
}

int cmd_predict(const std::string& models_glob, const std::string& point, double t0, double t1, int steps,
                const fs::path& out) {
    const std::vector<fs::path> paths = pipeline::expand_glob(models_glob);
    if (paths.empty()) {
        throw InvalidArgument("no model files match '" + models_glob + "'");
    }
    std::vector<ml::SvrModel> models;
    for (const auto& p : paths) {
        models.push_back(ml::load_svr(p));
    }
    const pipeline::PredictionTable t =
        pipeline::predict_series(models, pipeline::parameters_from_json(parse_json_arg(point)), t0, t1, steps);
    if (t.out_of_range > 0) {
        std::cerr << "warning: " << t.out_of_range << " feature values lie outside the training range\n";
    }
    if (out.empty()) {
        std::cout << "t,mean,lo,hi\n";
        for (std::size_t i = 0; i < t.times.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            std::cout << io::csv_line({io::format_double(t.times[i]), io::format_double(t.band.mean[r]),
                                       io::format_double(t.band.lo[r]), io::format_double(t.band.hi[r])});
        }
    } else {
        pipeline::write_prediction_csv(out, t);
    }
    std::cerr << models.size() << " models, " << t.seconds_per_1000 << " s per 1000 model evaluations\n";
    return 0;
}

int cmd_features(const fs::path& in, const std::string& method, const std::string& target,
                 const std::string& species, std::uint64_t seed, int trees, const fs::path& out) {
    const features::ImportanceMethod m = features::parse_method(method);
    const pipeline::Dataset d = pipeline::build_dataset(in, target, qoi_species(species));
    const features::ImportanceReport r = pipeline::feature_importance(d, m, seed, trees);
    const fs::path dir = out.empty() ? in : out;
    const std::string stem = std::string("importance_") + features::method_name(m);
    features::write_importance_csv(dir / (stem + ".csv"), r);
    io::write_text_atomic(dir / (stem + ".json"), features::to_json(r).dump(2) + "\n");
    for (std::size_t i = 0; i < r.ranking.size(); ++i) {
        const auto f = static_cast<std::size_t>(r.ranking[i]);
        std::cout << i + 1 << ". " << r.features[f] << " " << io::format_double(r.scores[f]) << '\n';
    }
    if (r.degenerate) {
        std::cerr << "warning: degenerate importance (no split possible)\n";
    }
    return 0;
}

int cmd_cluster(const fs::path& in, const std::string& k_arg, const std::string& species, std::uint64_t seed,
                int k_max, const fs::path& out) {
    int k = 0;
    if (k_arg != "auto") {
        try {
            k = std::stoi(k_arg);
        } catch (const std::exception&) {
            throw InvalidArgument("--k must be 'auto' or a positive integer");
        }
        if (k < 1) {
            throw InvalidArgument("--k must be 'auto' or a positive integer");
        }
    }
    const auto sims = pipeline::load_sweep(in);
    const auto rows = pipeline::exponent_table(sims);
    const pipeline::ExponentClusters c = pipeline::cluster_exponents(rows, qoi_species(species), k, seed, k_max);
    const fs::path dir = out.empty() ? in : out;
    pipeline::write_exponent_clusters_csv(dir / "exponent_clusters.csv", c);
    features::write_cluster_csv(dir / "clusters.csv", c.clusters);
    io::write_text_atomic(dir / "clusters.json", features::to_json(c.clusters).dump(2) + "\n");
    std::cout << "k = " << c.clusters.k << ", explained variance fraction "
              << c.clusters.explained_variance_fraction << '\n';
    for (std::size_t i = 0; i < c.explained_by_k.size(); ++i) {
        std::cout << "  k=" << i + 1 << " " << c.explained_by_k[i] << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-negative reaction-diffusion simulator and support-vector ROM toolkit"};
    app.require_subcommand(1);

    std::string config;
    std::string sim_id;
    fs::path out;
    bool fields = false;
    auto* sim = app.add_subcommand("simulate", "Run one simulation from a config JSON");
    sim->add_option("--config", config, "Config JSON file or inline object (defaults if omitted)");
    sim->add_option("--out", out, "Output directory")->required();
    sim->add_option("--sim-id", sim_id, "Run identifier used in file names");
    sim->add_flag("--fields", fields, "Also write nodal fields in long format");

    std::string spec;
    int workers = 1;
    std::optional<std::uint64_t> seed_opt;
    bool quiet = false;
    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    sweep->add_option("--spec", spec, "Sweep spec JSON (desk grid if omitted)");
    sweep->add_option("--out", out, "Output directory")->required();
    sweep->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--seed", seed_opt, "Seed recorded with the sweep");
    sweep->add_flag("--quiet", quiet, "No per-run progress");

    fs::path in;
    std::string target = "degree_of_mixing";
    std::string species = "A";
    auto* dataset = app.add_subcommand("dataset", "Build the scaled feature matrix from a sweep");
    dataset->add_option("--in", in, "Sweep directory")->required();
    dataset->add_option("--target", target, "avg_conc | avg_sq_conc | degree_of_mixing");
    dataset->add_option("--species", species, "A | B | C");
    dataset->add_option("--out", out, "Dataset CSV path");

    std::string protocol;
    auto* train = app.add_subcommand("train", "Train and evaluate the SVR/SVM ensembles");
    train->add_option("--protocol", protocol, "Protocol JSON file or inline object")->required();
    train->add_flag("--quiet", quiet, "No progress output");

    std::string models;
    std::string point;
    double t0 = 0.0;
    double t1 = 1.0;
    int steps = 101;
    auto* predict = app.add_subcommand("predict", "Ensemble prediction along a time range");
    predict->add_option("--models", models, "Glob of SVR model files")->required();
    predict->add_option("--point", point, "Parameter point JSON file or inline object")->required();
    predict->add_option("--t0", t0, "First time");
    predict->add_option("--t1", t1, "Last time");
    predict->add_option("--steps", steps, "Number of time points")->check(CLI::PositiveNumber);
    predict->add_option("--out", out, "CSV path (stdout if omitted)");

    std::string method;
    std::uint64_t seed = 0;
    int trees = 100;
    auto* feat = app.add_subcommand("features", "Feature importance on a sweep");
    feat->add_option("--in", in, "Sweep directory")->required();
    feat->add_option("--method", method, "ftest | mi | rf")->required();
    feat->add_option("--target", target, "QoI column");
    feat->add_option("--species", species, "A | B | C");
    feat->add_option("--seed", seed, "Seed");
    feat->add_option("--trees", trees, "Forest size")->check(CLI::PositiveNumber);
    feat->add_option("--out", out, "Output directory (sweep directory if omitted)");

    std::string k_arg = "auto";
    int k_max = 8;
    auto* cluster = app.add_subcommand("cluster", "k-means on late-time mixing exponents");
    cluster->add_option("--in", in, "Sweep directory")->required();
    cluster->add_option("--k", k_arg, "auto | K");
    cluster->add_option("--k-max", k_max, "Largest k tried by the elbow rule")->check(CLI::PositiveNumber);
    cluster->add_option("--species", species, "A | B | C");
    cluster->add_option("--seed", seed, "Seed");
    cluster->add_option("--out", out, "Output directory (sweep directory if omitted)");

    bool svg = false;
    auto* report = app.add_subcommand("report", "Plot-ready CSVs (and SVGs) for a sweep");
    report->add_option("--in", in, "Sweep directory")->required();
    report->add_option("--out", out, "Output directory")->required();
    report->add_option("--seed", seed, "Seed");
    report->add_option("--k", k_arg, "auto | K");
    report->add_flag("--svg", svg, "Also render SVG plots");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*sim) {
            return cmd_simulate(config, out, sim_id, fields);
        }
        if (*sweep) {
            return cmd_sweep(spec, out, workers, seed_opt, quiet);
        }
        if (*dataset) {
            return cmd_dataset(in, target, species, out);
        }
        if (*train) {
            return cmd_train(protocol, quiet);
        }
        if (*predict) {
            return cmd_predict(models, point, t0, t1, steps, out);
        }
        if (*feat) {
            return cmd_features(in, method, target, species, seed, trees, out);
        }
        if (*cluster) {
            return cmd_cluster(in, k_arg, species, seed, k_max, out);
        }
        if (*report) {
            int k = 0;
            if (k_arg != "auto") {
                k = std::stoi(k_arg);
            }
            pipeline::ReportOptions o{in, out, seed, k, svg};
            for (const auto& p : pipeline::write_report(o, &std::cerr)) {
                std::cout << p.string() << '\n';
            }
            return 0;
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
