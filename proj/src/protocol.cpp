#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/pipeline.hpp"
#include "mixrom/random.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace mixrom::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Runs body(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, int workers, F body) {
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            body(i);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min<int>(workers, static_cast<int>(n)); ++t) {
        pool.emplace_back(work);
    }
    work();
    for (auto& th : pool) {
        th.join();
    }
}

double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) {
        return kNaN;
    }
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double safe_r2(const Vector& y, const Vector& pred) {
    try {
        return ml::r2_score(y, pred);
    } catch (const InvalidArgument&) {
        return kNaN;
    }
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::vector<int> rows_of(const Dataset& d, const std::vector<int>& sims) {
    std::vector<char> keep(d.sim_ids.size(), 0);
    for (int s : sims) {
        keep[static_cast<std::size_t>(s)] = 1;
    }
    std::vector<int> rows;
    for (std::size_t r = 0; r < d.row_sim.size(); ++r) {
        if (keep[static_cast<std::size_t>(d.row_sim[r])]) {
            rows.push_back(static_cast<int>(r));
        }
    }
    return rows;
}

Matrix take(const Matrix& x, const std::vector<int>& rows, const std::vector<int>& cols) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(rows[i], cols[j]);
        }
    }
    return out;
}

Vector take(const Vector& v, const std::vector<int>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = v[rows[i]];
    }
    return out;
}

int mixing_class(double sigma2) { return features::label_mixing_class(std::clamp(sigma2, 0.0, 1.0)); }

std::string fraction_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "train_%05.2fpct", 100.0 * f);
    return buf;
}

std::size_t unique_support(const ml::SvmModel& m) {
    std::set<std::vector<double>> rows;
    for (const auto& b : m.classifiers) {
        for (Eigen::Index i = 0; i < b.support_vectors.rows(); ++i) {
            const auto row = b.support_vectors.row(i);
            rows.insert(std::vector<double>(row.begin(), row.end()));
        }
    }
    return rows.size();
}

nlohmann::json member_json(const MemberScore& m, bool with_epsilon) {
    nlohmann::json j = {{"penalty", m.params.penalty}, {"gamma", m.params.gamma}};
    if (with_epsilon) {
        j["epsilon"] = m.params.epsilon;
    }
    j["score"] = number(m.score);
    j["n_support"] = m.n_support;
    j["pct_support"] = m.pct_support;
    return j;
}

std::size_t train_count(std::size_t n_sims, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw InvalidArgument("split: train fraction must lie in (0,1]");
    }
    if (n_sims == 0) {
        throw InvalidArgument("split: no runs");
    }
    return std::min<std::size_t>(
        n_sims, static_cast<std::size_t>(std::max<long long>(1, std::llround(fraction * static_cast<double>(n_sims)))));
}

std::vector<int> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order.begin(), order.end());
    return order;
}

}  // namespace

ExperimentProtocol protocol_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    ExperimentProtocol p;
    const auto resolve = [&](const std::string& s) {
        const fs::path path(s);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    try {
        p.dataset = resolve(j.at("dataset").get<std::string>());
        p.out = resolve(j.at("out").get<std::string>());
        p.target = j.value("target", p.target);
        validate_qoi_name(p.target);
        p.species = physics::parse_species(j.value("species", std::string("A")));
        if (j.contains("train_fractions")) {
            p.train_fractions = j.at("train_fractions").get<std::vector<double>>();
        }
        if (j.contains("grid")) {
            p.grid.clear();
            for (const auto& g : j.at("grid")) {
                p.grid.push_back({g.at("penalty").get<double>(), g.at("gamma").get<double>(),
                                  g.value("epsilon", 0.1)});
            }
        }
        p.seed = j.value("seed", std::uint64_t{0});
        p.features = j.value("features", p.features);
        p.sanity = j.value("sanity", false);
        p.train_svm = j.value("svm", true);
        p.save_models = j.value("save_models", true);
        p.workers = j.value("workers", 1);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("protocol: ") + e.what());
    }
    if (p.features != "all" && p.features != "top3") {
        throw InvalidArgument("protocol: features must be 'all' or 'top3'");
    }
    if (p.train_fractions.empty() || p.grid.empty() || p.workers < 1) {
        throw InvalidArgument("protocol: need train fractions, a grid and workers >= 1");
    }
    for (double f : p.train_fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            throw InvalidArgument("protocol: train fractions must lie in (0,1]");
        }
    }
    return p;
}

nlohmann::json to_json(const ExperimentProtocol& p) {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& g : p.grid) {
        grid.push_back({{"penalty", g.penalty}, {"gamma", g.gamma}, {"epsilon", g.epsilon}});
    }
    return {{"target", p.target},   {"species", physics::species_name(p.species)},
            {"train_fractions", p.train_fractions},
            {"grid", std::move(grid)}, {"seed", p.seed},
            {"features", p.features}, {"sanity", p.sanity},
            {"svm", p.train_svm}};
}

Split split_simulations(std::size_t n_sims, double train_fraction, std::uint64_t seed) {
    const std::size_t n_train = train_count(n_sims, train_fraction);
    if (n_train >= n_sims) {
        throw InvalidArgument("split: " + std::to_string(n_sims) + " runs leave no test runs at fraction " +
                              io::format_double(train_fraction));
    }
    std::vector<int> order = shuffled(n_sims, seed);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

TrainReport train_protocol(const ExperimentProtocol& protocol, std::ostream* log) {
    const Dataset data = build_dataset(protocol.dataset, protocol.target, protocol.species);
    if (log != nullptr) {
        for (const auto& w : data.warnings) {
            *log << "warning: " << w << '\n';
        }
    }
    TrainReport report;
    report.protocol = protocol;
    report.n_sims = data.sim_ids.size();
    nlohmann::json timings = nlohmann::json::array();

    std::vector<std::pair<double, double>> svm_grid;  // distinct (P, gamma) in grid order
    for (const auto& g : protocol.grid) {
        if (std::find(svm_grid.begin(), svm_grid.end(), std::make_pair(g.penalty, g.gamma)) == svm_grid.end()) {
            svm_grid.emplace_back(g.penalty, g.gamma);
        }
    }

    for (double fraction : protocol.train_fractions) {
        FractionReport fr;
        fr.train_fraction = fraction;
        Split split;
        if (protocol.sanity) {
            const std::vector<int> order = shuffled(data.sim_ids.size(), protocol.seed);
            split.train.assign(order.begin(),
                               order.begin() + static_cast<std::ptrdiff_t>(train_count(order.size(), fraction)));
            std::sort(split.train.begin(), split.train.end());
            split.test = split.train;
        } else {
            split = split_simulations(data.sim_ids.size(), fraction, protocol.seed);
        }
        for (int s : split.train) {
            fr.train_sims.push_back(data.sim_ids[static_cast<std::size_t>(s)]);
        }
        for (int s : split.test) {
            fr.test_sims.push_back(data.sim_ids[static_cast<std::size_t>(s)]);
        }
        const std::vector<int> train_rows = rows_of(data, split.train);
        const std::vector<int> test_rows = rows_of(data, split.test);
        fr.train_rows = train_rows.size();
        fr.test_rows = test_rows.size();

        std::vector<int> cols(features::kFeatureNames.size());
        std::iota(cols.begin(), cols.end(), 0);
        if (protocol.features == "top3") {
            const std::vector<int> param_cols{0, 1, 2, 3, 4};
            features::ForestOptions fo;
            fo.seed = derive_seed(protocol.seed, "forest");
            const auto imp = features::random_forest_importance(take(data.scaled.scaled, train_rows, param_cols),
                                                                take(data.values, train_rows),
                                                                features::kParameterNames, fo);
            cols.assign(imp.ranking.begin(), imp.ranking.begin() + 3);
            std::sort(cols.begin(), cols.end());
            cols.push_back(5);
        }
        ml::MinMaxScaler scaling;
        for (int c : cols) {
            fr.feature_names.push_back(features::kFeatureNames[static_cast<std::size_t>(c)]);
            scaling.mins.push_back(data.scaled.scaling.mins[static_cast<std::size_t>(c)]);
            scaling.maxs.push_back(data.scaled.scaling.maxs[static_cast<std::size_t>(c)]);
        }
        const Matrix x_train = take(data.scaled.scaled, train_rows, cols);
        const Matrix x_test = take(data.scaled.scaled, test_rows, cols);
        const Vector y_train = take(data.values, train_rows);
        const Vector y_test = take(data.values, test_rows);
        const fs::path model_dir = protocol.out / "models" / fraction_tag(fraction);

        std::vector<ml::SvrModel> svr_models(protocol.grid.size());
        std::vector<char> svr_ok(protocol.grid.size(), 0);
        std::vector<Vector> svr_pred(protocol.grid.size());
        fr.svr.resize(protocol.grid.size());
        std::mutex log_mutex;
        parallel_for(protocol.grid.size(), protocol.workers, [&](std::size_t i) {
            const auto& g = protocol.grid[i];
            MemberScore& m = fr.svr[i];
            m.params = g;
            const auto start = Clock::now();
            try {
                ml::SvrModel model = ml::svr_train(x_train, y_train, g.penalty, g.epsilon, ml::RbfKernel{g.gamma});
                model.scaling = scaling;
                model.feature_names = fr.feature_names;
                m.train_seconds = seconds_since(start);
                m.n_support = static_cast<std::size_t>(model.num_support());
                m.pct_support = 100.0 * static_cast<double>(m.n_support) / static_cast<double>(fr.train_rows);
                svr_pred[i] = ml::svr_predict(model, x_test);
                m.score = safe_r2(y_test, svr_pred[i]);
                svr_models[i] = std::move(model);
                svr_ok[i] = 1;
            } catch (const NumericalError& e) {
                m.train_seconds = seconds_since(start);
                m.score = kNaN;
                if (log != nullptr) {
                    const std::lock_guard<std::mutex> lock(log_mutex);
                    *log << "svr P=" << g.penalty << " gamma=" << g.gamma << " eps=" << g.epsilon
                         << " failed: " << e.what() << '\n';
                }
            }
        });
        Vector mean = Vector::Zero(y_test.size());
        int members = 0;
        std::vector<double> scores;
        for (std::size_t i = 0; i < svr_ok.size(); ++i) {
            scores.push_back(fr.svr[i].score);
            if (svr_ok[i]) {
                mean += svr_pred[i];
                ++members;
                if (protocol.save_models) {
                    char name[32];
                    std::snprintf(name, sizeof(name), "svr_%03zu.json", i);
                    ml::save_model(model_dir / name, svr_models[i]);
                }
            }
        }
        fr.svr_ensemble_r2 = members > 0 ? safe_r2(y_test, mean / members) : kNaN;
        fr.svr_median_r2 = median(scores);

        if (protocol.train_svm) {
            std::vector<int> labels_train;
            std::vector<int> labels_test;
            for (int r : train_rows) {
                labels_train.push_back(mixing_class(data.sigma2[r]));
            }
            for (int r : test_rows) {
                labels_test.push_back(mixing_class(data.sigma2[r]));
            }
            const std::set<int> distinct(labels_train.begin(), labels_train.end());
            if (distinct.size() < 2) {
                if (log != nullptr) {
                    *log << "svm skipped at fraction " << fraction << ": one class in the training runs\n";
                }
                fr.svm_ensemble_f1 = kNaN;
                fr.svm_median_f1 = kNaN;
            } else {
                fr.svm.resize(svm_grid.size());
                std::vector<std::vector<int>> svm_pred(svm_grid.size());
                std::vector<ml::SvmModel> svm_models(svm_grid.size());
                std::vector<char> svm_ok(svm_grid.size(), 0);
                parallel_for(svm_grid.size(), protocol.workers, [&](std::size_t i) {
                    MemberScore& m = fr.svm[i];
                    m.params = {svm_grid[i].first, svm_grid[i].second, 0.0};
                    const auto start = Clock::now();
                    try {
                        ml::SvmModel model =
                            ml::svm_train(x_train, labels_train, svm_grid[i].first, ml::RbfKernel{svm_grid[i].second});
                        model.scaling = scaling;
                        model.feature_names = fr.feature_names;
                        m.train_seconds = seconds_since(start);
                        m.n_support = unique_support(model);
                        m.pct_support = 100.0 * static_cast<double>(m.n_support) / static_cast<double>(fr.train_rows);
                        svm_pred[i] = ml::svm_predict(model, x_test);
                        m.score = ml::f1_macro(labels_test, svm_pred[i]);
                        svm_models[i] = std::move(model);
                        svm_ok[i] = 1;
                    } catch (const NumericalError& e) {
                        m.train_seconds = seconds_since(start);
                        m.score = kNaN;
                        if (log != nullptr) {
                            const std::lock_guard<std::mutex> lock(log_mutex);
                            *log << "svm P=" << svm_grid[i].first << " gamma=" << svm_grid[i].second
                                 << " failed: " << e.what() << '\n';
                        }
                    }
                });
                std::vector<int> classes(distinct.begin(), distinct.end());
                std::vector<int> vote(labels_test.size());
                for (std::size_t r = 0; r < labels_test.size(); ++r) {
                    std::vector<int> counts(classes.size(), 0);
                    for (std::size_t i = 0; i < svm_ok.size(); ++i) {
                        if (svm_ok[i]) {
                            const auto it = std::find(classes.begin(), classes.end(), svm_pred[i][r]);
                            ++counts[static_cast<std::size_t>(it - classes.begin())];
                        }
                    }
                    vote[r] = ml::vote_winner(counts, classes);
                }
                std::vector<double> f1s;
                bool any = false;
                for (std::size_t i = 0; i < svm_ok.size(); ++i) {
                    f1s.push_back(fr.svm[i].score);
                    any = any || svm_ok[i];
                    if (svm_ok[i] && protocol.save_models) {
                        char name[32];
                        std::snprintf(name, sizeof(name), "svm_%03zu.json", i);
                        ml::save_model(model_dir / name, svm_models[i]);
                    }
                }
                fr.svm_ensemble_f1 = any ? ml::f1_macro(labels_test, vote) : kNaN;
                fr.svm_median_f1 = median(f1s);
            }
        }

        nlohmann::json t = {{"train_fraction", fraction}};
        for (const auto& m : fr.svr) {
            t["svr_seconds"].push_back(m.train_seconds);
        }
        for (const auto& m : fr.svm) {
            t["svm_seconds"].push_back(m.train_seconds);
        }
        timings.push_back(std::move(t));
        if (log != nullptr) {
            *log << "fraction " << fraction << ": " << fr.train_sims.size() << " train runs, ensemble R2 "
                 << fr.svr_ensemble_r2 << ", median R2 " << fr.svr_median_r2 << ", ensemble F1 "
                 << fr.svm_ensemble_f1 << '\n';
        }
        report.fractions.push_back(std::move(fr));
    }

    io::write_text_atomic(protocol.out / "report.json", to_json(report).dump(2) + "\n");
    io::write_text_atomic(protocol.out / "timings.json", timings.dump(2) + "\n");
    std::string table = "train_fraction,model,penalty,gamma,epsilon,n_support,pct_support,score\n";
    for (const auto& fr : report.fractions) {
        for (const auto& m : fr.svr) {
            table += io::csv_line({io::format_double(fr.train_fraction), "svr", io::format_double(m.params.penalty),
                                   io::format_double(m.params.gamma), io::format_double(m.params.epsilon),
                                   std::to_string(m.n_support), io::format_double(m.pct_support),
                                   io::format_double(m.score)});
        }
        for (const auto& m : fr.svm) {
            table += io::csv_line({io::format_double(fr.train_fraction), "svm", io::format_double(m.params.penalty),
                                   io::format_double(m.params.gamma), "", std::to_string(m.n_support),
                                   io::format_double(m.pct_support), io::format_double(m.score)});
        }
    }
    io::write_text_atomic(protocol.out / "table.csv", table);
    return report;
}

nlohmann::json to_json(const TrainReport& report) {
    nlohmann::json fractions = nlohmann::json::array();
    for (const auto& fr : report.fractions) {
        nlohmann::json svr = nlohmann::json::array();
        for (const auto& m : fr.svr) {
            svr.push_back(member_json(m, true));
        }
        nlohmann::json svm = nlohmann::json::array();
        for (const auto& m : fr.svm) {
            svm.push_back(member_json(m, false));
        }
        fractions.push_back({{"train_fraction", fr.train_fraction},
                             {"train_sims", fr.train_sims},
                             {"test_sims", fr.test_sims},
                             {"features", fr.feature_names},
                             {"train_rows", fr.train_rows},
                             {"test_rows", fr.test_rows},
                             {"svr", std::move(svr)},
                             {"svr_ensemble_r2", number(fr.svr_ensemble_r2)},
                             {"svr_median_r2", number(fr.svr_median_r2)},
                             {"svm", std::move(svm)},
                             {"svm_ensemble_f1", number(fr.svm_ensemble_f1)},
                             {"svm_median_f1", number(fr.svm_median_f1)}});
    }
    return {{"protocol", to_json(report.protocol)},
            {"simulations", report.n_sims},
            {"fractions", std::move(fractions)}};
}

SweepParameters parameters_from_json(const nlohmann::json& j) {
    SweepParameters p;
    try {
        p.v0 = j.at("v0").get<double>();
        p.aniso_ratio = j.at("aniso_ratio").get<double>();
        p.d_m = j.at("D_m").get<double>();
        p.kappa_fl = j.at("kappa_fL").get<double>();
        p.period_t = j.at("period_T").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("parameter point: ") + e.what());
    }
    if (!(p.v0 > 0.0 && p.aniso_ratio > 0.0)) {
        throw InvalidArgument("parameter point: v0 and aniso_ratio must be positive");
    }
    return p;
}

PredictionTable predict_series(const std::vector<ml::SvrModel>& models, const SweepParameters& point, double t0,
                               double t1, int steps) {
    if (models.empty()) {
        throw InvalidArgument("predict: no models");
    }
    if (steps < 1 || !(t1 >= t0)) {
        throw InvalidArgument("predict: need steps >= 1 and t1 >= t0");
    }
    const auto& names = models.front().feature_names;
    for (const auto& m : models) {
        if (m.feature_names != names || m.scaling.size() != names.size()) {
            throw InvalidArgument("predict: models were trained on different features");
        }
    }
    std::vector<double> raw_params = parameter_features(point);
    std::vector<int> cols;
    for (const auto& n : names) {
        const auto it = std::find(features::kFeatureNames.begin(), features::kFeatureNames.end(), n);
        if (it == features::kFeatureNames.end()) {
            throw InvalidArgument("predict: unknown model feature '" + n + "'");
        }
        cols.push_back(static_cast<int>(it - features::kFeatureNames.begin()));
    }
    PredictionTable table;
    Matrix raw(steps, static_cast<Eigen::Index>(cols.size()));
    for (int s = 0; s < steps; ++s) {
        const double t = steps == 1 ? t0 : t0 + (t1 - t0) * s / (steps - 1);
        table.times.push_back(t);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            raw(s, static_cast<Eigen::Index>(j)) = cols[j] == 5 ? t : raw_params[static_cast<std::size_t>(cols[j])];
        }
    }
    const Matrix x = models.front().scaling.transform(raw);
    table.out_of_range = ml::count_out_of_range(x);
    const auto start = Clock::now();
    table.band = ml::ensemble_predict(models, x);
    table.seconds_per_1000 =
        seconds_since(start) * 1000.0 / (static_cast<double>(steps) * static_cast<double>(models.size()));
    return table;
}

void write_prediction_csv(const fs::path& path, const PredictionTable& table) {
    std::string out = "t,mean,lo,hi\n";
    for (std::size_t i = 0; i < table.times.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += io::csv_line({io::format_double(table.times[i]), io::format_double(table.band.mean[r]),
                             io::format_double(table.band.lo[r]), io::format_double(table.band.hi[r])});
    }
    io::write_text_atomic(path, out);
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<fs::path> out;
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) {
            out.emplace_back(g.gl_pathv[i]);
        }
    }
    globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) {
        throw IoError("glob failed for '" + pattern + "'");
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mixrom::pipeline
