#pragma once

#include "mixrom/feature_analysis.hpp"
#include "mixrom/physics.hpp"
#include "mixrom/qoi.hpp"
#include "mixrom/rom_ml.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mixrom::pipeline {

using ml::Matrix;
using ml::Vector;
namespace fs = std::filesystem;

/// The five varied inputs of one run, in raw units.
struct SweepParameters {
    double v0 = 0.1;
    double aniso_ratio = 100.0;  // alpha_L / alpha_T with alpha_L fixed
    double d_m = 1e-3;
    double kappa_fl = 2.0;
    double period_t = 1e-4;
};

/// Applies the parameters to a base config (alpha_T = alpha_L / ratio).
[[nodiscard]] physics::SimulationConfig apply(const physics::SimulationConfig& base, const SweepParameters& p);

/// Model inputs in kParameterNames order: period_T, log10 ratio, kappa_fL, log10 v0, D_m.
[[nodiscard]] std::vector<double> parameter_features(const SweepParameters& p);

struct SweepSpec {
    std::vector<double> v0;
    std::vector<double> aniso_ratio;
    std::vector<double> d_m;
    std::vector<double> kappa_fl;
    std::vector<double> period_t;
    physics::SimulationConfig base;  // mesh and time settings
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept;
    void validate() const;
};

/// 3x3x2x2x2 grid on a 21-node mesh, 100 steps.
[[nodiscard]] SweepSpec desk_sweep_spec();

/// Keys v0, aniso_ratio, D_m, kappa_fL, period_T (lists), optional "base"
/// (config keys) and "seed". Missing lists fall back to the desk grid.
[[nodiscard]] SweepSpec sweep_spec_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const SweepSpec& spec);

struct SweepPoint {
    std::string sim_id;
    SweepParameters params;
};

/// Cartesian product, v0 varying slowest and period_T fastest. Ids are
/// "sim_<index>_<hash of the parameters>".
[[nodiscard]] std::vector<SweepPoint> enumerate_sweep(const SweepSpec& spec);

struct SweepFailure {
    std::string sim_id;
    std::string message;
};

struct SweepSummary {
    std::size_t runs = 0;
    std::size_t succeeded = 0;
    std::vector<SweepFailure> failures;
};

/// Runs every point on `workers` threads. Writes sweep.json, manifest.csv,
/// failures.csv and sims/<id>.qoi.csv + sims/<id>.config.json. A failing run
/// is recorded and skipped; an unwritable directory throws IoError.
SweepSummary run_sweep(const SweepSpec& spec, const fs::path& out_dir, int workers, std::ostream* log = nullptr);

/// One run's parameters and QoIs as read back from a sweep directory.
struct SimRecord {
    std::string sim_id;
    SweepParameters params;
    std::vector<qoi::QoISeries> series;  // A, B, C
};

/// Successful runs in manifest order. Runs whose QoI file is missing are
/// skipped and reported through `warnings`.
[[nodiscard]] std::vector<SimRecord> load_sweep(const fs::path& dir, std::vector<std::string>* warnings = nullptr);

/// Series values by QoI column name (avg_conc, avg_sq_conc, degree_of_mixing).
[[nodiscard]] const std::vector<double>& qoi_column(const qoi::QoISeries& s, const std::string& name);
void validate_qoi_name(const std::string& name);

/// One row per (run, stored step); the t = 0 row is left out.
struct Dataset {
    std::string target;
    physics::Species species = physics::Species::kA;
    std::vector<std::string> sim_ids;
    std::vector<int> row_sim;  // index into sim_ids
    Matrix raw;                // kFeatureNames columns, log10 applied
    features::ScaledFeatures scaled;
    Vector values;  // target column
    Vector sigma2;  // degree of mixing of the same species, for class labels
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(values.size()); }
};

[[nodiscard]] Dataset build_dataset(const std::vector<SimRecord>& sims, const std::string& target,
                                    physics::Species species);
[[nodiscard]] Dataset build_dataset(const fs::path& dir, const std::string& target, physics::Species species);

/// `sim_id,<scaled features>,<target>` plus a scaling sidecar.
void write_dataset_csv(const fs::path& path, const Dataset& data);

struct ExperimentProtocol {
    fs::path dataset;  // sweep directory
    fs::path out;      // report directory
    std::string target = "degree_of_mixing";
    physics::Species species = physics::Species::kA;
    std::vector<double> train_fractions{0.01, 0.05, 0.30};
    std::vector<ml::HyperParams> grid = ml::default_grid();
    std::uint64_t seed = 0;
    std::string features = "all";  // all | top3
    bool sanity = false;           // evaluate on the training runs
    bool train_svm = true;
    bool save_models = true;
    int workers = 1;
};

[[nodiscard]] ExperimentProtocol protocol_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
[[nodiscard]] nlohmann::json to_json(const ExperimentProtocol& p);

/// Disjoint split of run indices: round(fraction * n) runs for training
/// (at least 1), the rest for testing. Throws InvalidArgument when a side is empty.
struct Split {
    std::vector<int> train;
    std::vector<int> test;
};
[[nodiscard]] Split split_simulations(std::size_t n_sims, double train_fraction, std::uint64_t seed);

struct MemberScore {
    ml::HyperParams params;
    double score = 0.0;  // R^2 or macro F1 on the test rows; NaN if undefined
    std::size_t n_support = 0;
    double pct_support = 0.0;
    double train_seconds = 0.0;
};

struct FractionReport {
    double train_fraction = 0.0;
    std::vector<std::string> train_sims;
    std::vector<std::string> test_sims;
    std::vector<std::string> feature_names;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::vector<MemberScore> svr;
    double svr_ensemble_r2 = 0.0;  // R^2 of the ensemble-mean prediction
    double svr_median_r2 = 0.0;
    std::vector<MemberScore> svm;
    double svm_ensemble_f1 = 0.0;  // macro F1 of the members' plurality vote
    double svm_median_f1 = 0.0;
};

struct TrainReport {
    ExperimentProtocol protocol;
    std::size_t n_sims = 0;
    std::vector<FractionReport> fractions;
};

/// Trains the SVR grid (and the SVM P x gamma grid) per train fraction and
/// scores them on held-out runs. Writes report.json, table.csv and
/// timings.json (wall-clock kept apart so report.json is reproducible), and
/// the models under models/ when requested.
TrainReport train_protocol(const ExperimentProtocol& protocol, std::ostream* log = nullptr);
[[nodiscard]] nlohmann::json to_json(const TrainReport& report);

struct PredictionTable {
    std::vector<double> times;
    ml::EnsembleBand band;
    double seconds_per_1000 = 0.0;
    std::size_t out_of_range = 0;  // scaled inputs outside [0,1]
};

/// Evaluates every model along t0..t1 (steps points) at one parameter point.
/// Throws InvalidArgument when models disagree on features.
[[nodiscard]] PredictionTable predict_series(const std::vector<ml::SvrModel>& models, const SweepParameters& point,
                                             double t0, double t1, int steps);
[[nodiscard]] SweepParameters parameters_from_json(const nlohmann::json& j);
void write_prediction_csv(const fs::path& path, const PredictionTable& table);

/// Expands a path whose file name may contain shell wildcards.
[[nodiscard]] std::vector<fs::path> expand_glob(const std::string& pattern);

/// Importance of the five parameters for one target on every (run, step) row.
[[nodiscard]] features::ImportanceReport feature_importance(const Dataset& data, features::ImportanceMethod method,
                                                            std::uint64_t seed, int n_trees = 100);

/// Late-time exponents per (run, species) for each QoI; NaN where the fit fails.
struct ExponentRow {
    std::string sim_id;
    physics::Species species = physics::Species::kA;
    SweepParameters params;
    double avg_conc = 0.0;
    double avg_sq_conc = 0.0;
    double degree_of_mixing = 0.0;
};
[[nodiscard]] std::vector<ExponentRow> exponent_table(const std::vector<SimRecord>& sims,
                                                      qoi::FitWindow window = {});
void write_exponent_csv(const fs::path& path, const std::vector<ExponentRow>& rows);

/// k-means on (log10 ratio, degree-of-mixing exponent) of one species, both
/// min-max scaled. k <= 0 selects k with the elbow rule up to k_max.
struct ExponentClusters {
    std::vector<std::string> sim_ids;
    Matrix points;  // raw (log10 ratio, exponent)
    features::ClusterResult clusters;
    std::vector<double> explained_by_k;  // elbow curve, empty for fixed k
};
[[nodiscard]] ExponentClusters cluster_exponents(const std::vector<ExponentRow>& rows, physics::Species species,
                                                 int k, std::uint64_t seed, int k_max = 8);
void write_exponent_clusters_csv(const fs::path& path, const ExponentClusters& c);

struct ReportOptions {
    fs::path dataset;
    fs::path out;
    std::uint64_t seed = 0;
    int k = 0;  // 0: elbow
    bool svg = false;
};

/// Plot-ready CSVs (QoI ensemble + mean, exponents with cluster labels,
/// importance tables per method) and optional SVG renderings. Returns the
/// written files.
std::vector<fs::path> write_report(const ReportOptions& options, std::ostream* log = nullptr);

}  // namespace mixrom::pipeline
