#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/pipeline.hpp"
#include "mixrom/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

namespace mixrom::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double try_fit(const std::vector<double>& series, const std::vector<double>& times, bool zero,
               qoi::FitWindow window) {
    if (zero) {
        return kNaN;
    }
    try {
        return qoi::fit_exponent(series, times, window).exponent;
    } catch (const NumericalError&) {
        return kNaN;
    }
}

/// Minimal SVG canvas with data-space axes.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string x_label, std::string y_label, double x0, double x1, double y0, double y1)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)),
          x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1.0), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1.0) {}

    void polyline(const std::vector<double>& x, const std::vector<double>& y, const char* colour, double width) {
        std::string pts;
        for (std::size_t i = 0; i < x.size(); ++i) {
            pts += fmt(px(x[i])) + "," + fmt(py(y[i])) + " ";
        }
        body_ += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"" + fmt(width) +
                 "\" points=\"" + pts + "\"/>\n";
    }

    void dot(double x, double y, const char* colour) {
        body_ += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"4\" fill=\"" + colour + "\"/>\n";
    }

    void bar(double x, double width, double height, const char* colour, const std::string& label) {
        const double top = py(height);
        body_ += "<rect x=\"" + fmt(px(x - width / 2)) + "\" y=\"" + fmt(top) + "\" width=\"" +
                 fmt(px(x + width / 2) - px(x - width / 2)) + "\" height=\"" + fmt(py(y0_) - top) + "\" fill=\"" +
                 colour + "\"/>\n";
        body_ += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(kHeight - kMargin + 14) +
                 "\" font-size=\"10\" text-anchor=\"middle\">" + label + "</text>\n";
    }

    void legend(int slot, const char* colour, const std::string& text) {
        const double y = kMargin + 14.0 * slot;
        body_ += "<rect x=\"" + fmt(kWidth - kMargin - 90) + "\" y=\"" + fmt(y - 8) +
                 "\" width=\"10\" height=\"10\" fill=\"" + colour + "\"/>\n";
        body_ += "<text x=\"" + fmt(kWidth - kMargin - 75) + "\" y=\"" + fmt(y) + "\" font-size=\"11\">" + text +
                 "</text>\n";
    }

    [[nodiscard]] std::string str() const {
        std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
                        fmt(kHeight) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">" + title_ +
             "</text>\n";
        s += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kHeight - kMargin) + "\" x2=\"" + fmt(kWidth - kMargin) +
             "\" y2=\"" + fmt(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
        s += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kMargin) + "\" x2=\"" + fmt(kMargin) + "\" y2=\"" +
             fmt(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
        s += tick(kMargin, kHeight - kMargin + 28, x0_, "middle") + tick(kWidth - kMargin, kHeight - kMargin + 28, x1_, "middle");
        s += tick(kMargin - 6, kHeight - kMargin, y0_, "end") + tick(kMargin - 6, kMargin + 4, y1_, "end");
        s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"" + fmt(kHeight - 8) +
             "\" font-size=\"12\" text-anchor=\"middle\">" + x_label_ + "</text>\n";
        s += "<text x=\"14\" y=\"" + fmt(kHeight / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
             fmt(kHeight / 2) + ")\">" + y_label_ + "</text>\n";
        return s + body_ + "</svg>\n";
    }

private:
    static constexpr double kWidth = 640;
    static constexpr double kHeight = 420;
    static constexpr double kMargin = 60;

    static std::string fmt(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return buf;
    }
    static std::string tick(double x, double y, double v, const char* anchor) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3g", v);
        return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"10\" text-anchor=\"" + anchor + "\">" +
               buf + "</text>\n";
    }
    [[nodiscard]] double px(double x) const { return kMargin + (x - x0_) / (x1_ - x0_) * (kWidth - 2 * kMargin); }
    [[nodiscard]] double py(double y) const { return kHeight - kMargin - (y - y0_) / (y1_ - y0_) * (kHeight - 2 * kMargin); }

    std::string title_;
    std::string x_label_;
    std::string y_label_;
    double x0_;
    double x1_;
    double y0_;
    double y1_;
    std::string body_;
};

constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

const char* colour(std::size_t i) { return kColours[i % (sizeof(kColours) / sizeof(kColours[0]))]; }

}  // namespace

features::ImportanceReport feature_importance(const Dataset& data, features::ImportanceMethod method,
                                              std::uint64_t seed, int n_trees) {
    const Matrix x = data.scaled.scaled.leftCols(static_cast<Eigen::Index>(features::kParameterNames.size()));
    switch (method) {
        case features::ImportanceMethod::kFTest:
            return features::f_test_importance(x, data.values, features::kParameterNames);
        case features::ImportanceMethod::kMutualInfo:
            return features::mutual_info_importance(x, data.values, features::kParameterNames, 3,
                                                    derive_seed(seed, "mutual_info"));
        case features::ImportanceMethod::kRandomForest: {
            features::ForestOptions fo;
            fo.n_trees = n_trees;
            fo.seed = derive_seed(seed, "forest");
            return features::random_forest_importance(x, data.values, features::kParameterNames, fo);
        }
    }
    throw InvalidArgument("feature_importance: unknown method");
}

std::vector<ExponentRow> exponent_table(const std::vector<SimRecord>& sims, qoi::FitWindow window) {
    std::vector<ExponentRow> rows;
    for (const auto& s : sims) {
        for (const auto& q : s.series) {
            ExponentRow r;
            r.sim_id = s.sim_id;
            r.species = q.species;
            r.params = s.params;
            r.avg_conc = try_fit(q.avg_conc, q.times, q.zero_avg_conc, window);
            r.avg_sq_conc = try_fit(q.avg_sq_conc, q.times, q.zero_avg_sq_conc, window);
            r.degree_of_mixing = try_fit(q.degree_of_mixing, q.times, q.zero_variance, window);
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

void write_exponent_csv(const fs::path& path, const std::vector<ExponentRow>& rows) {
    std::vector<std::string> header{"sim_id", "species"};
    header.insert(header.end(), features::kParameterNames.begin(), features::kParameterNames.end());
    header.insert(header.end(), {"exp_avg_conc", "exp_avg_sq_conc", "exp_degree_of_mixing"});
    std::string out = io::csv_line(header);
    for (const auto& r : rows) {
        std::vector<std::string> fields{r.sim_id, physics::species_name(r.species)};
        for (double v : parameter_features(r.params)) {
            fields.push_back(io::format_double(v));
        }
        fields.push_back(io::format_double(r.avg_conc));
        fields.push_back(io::format_double(r.avg_sq_conc));
        fields.push_back(io::format_double(r.degree_of_mixing));
        out += io::csv_line(fields);
    }
    io::write_text_atomic(path, out);
}

ExponentClusters cluster_exponents(const std::vector<ExponentRow>& rows, physics::Species species, int k,
                                   std::uint64_t seed, int k_max) {
    ExponentClusters out;
    std::vector<std::array<double, 2>> pts;
    for (const auto& r : rows) {
        if (r.species == species && std::isfinite(r.degree_of_mixing)) {
            out.sim_ids.push_back(r.sim_id);
            pts.push_back({std::log10(r.params.aniso_ratio), r.degree_of_mixing});
        }
    }
    if (pts.empty()) {
        throw InvalidArgument("cluster_exponents: no finite exponents for species " +
                              std::string(physics::species_name(species)));
    }
    out.points.resize(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.points(static_cast<Eigen::Index>(i), 0) = pts[i][0];
        out.points(static_cast<Eigen::Index>(i), 1) = pts[i][1];
    }
    const Matrix scaled = features::minmax_scale(out.points).scaled;
    const std::uint64_t s = derive_seed(seed, "kmeans");
    if (k <= 0) {
        const features::ElbowResult elbow = features::elbow_select(scaled, k_max, s);
        for (const auto& f : elbow.fits) {
            out.explained_by_k.push_back(f.explained_variance_fraction);
        }
        out.clusters = elbow.fits[static_cast<std::size_t>(elbow.k - 1)];
    } else {
        out.clusters = features::fit_kmeans(scaled, k, s);
    }
    return out;
}

void write_exponent_clusters_csv(const fs::path& path, const ExponentClusters& c) {
    std::string out = "sim_id,log10_aniso_ratio,exp_degree_of_mixing,cluster\n";
    for (std::size_t i = 0; i < c.sim_ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += io::csv_line({c.sim_ids[i], io::format_double(c.points(r, 0)), io::format_double(c.points(r, 1)),
                             std::to_string(c.clusters.assignments[i])});
    }
    io::write_text_atomic(path, out);
}

std::vector<fs::path> write_report(const ReportOptions& options, std::ostream* log) {
    std::vector<std::string> warnings;
    const std::vector<SimRecord> sims = load_sweep(options.dataset, &warnings);
    const auto note = [&](const std::string& msg) {
        if (log != nullptr) {
            *log << msg << '\n';
        }
    };
    for (const auto& w : warnings) {
        note("warning: " + w);
    }
    if (sims.empty()) {
        throw InvalidArgument("report: no successful runs in " + options.dataset.string());
    }
    std::vector<fs::path> written;
    const auto emit = [&](const std::string& name, const std::string& content) {
        const fs::path p = options.out / name;
        io::write_text_atomic(p, content);
        written.push_back(p);
    };

    // QoI ensembles and their mean over runs at each time level.
    std::string ensemble = "sim_id,species,t,avg_conc,avg_sq_conc,degree_of_mixing\n";
    const std::size_t n_times = sims.front().series.front().times.size();
    bool aligned = true;
    for (const auto& s : sims) {
        for (const auto& q : s.series) {
            aligned = aligned && q.times.size() == n_times;
            for (std::size_t t = 0; t < q.times.size(); ++t) {
                ensemble += io::csv_line({s.sim_id, physics::species_name(q.species), io::format_double(q.times[t]),
                                          io::format_double(q.avg_conc[t]), io::format_double(q.avg_sq_conc[t]),
                                          io::format_double(q.degree_of_mixing[t])});
            }
        }
    }
    emit("qoi_ensemble.csv", ensemble);
    std::array<std::vector<double>, 3> mean_sigma2;
    if (aligned) {
        std::string mean = "species,t,avg_conc,avg_sq_conc,degree_of_mixing\n";
        for (std::size_t sp = 0; sp < 3; ++sp) {
            for (std::size_t t = 0; t < n_times; ++t) {
                double a = 0.0;
                double b = 0.0;
                double c = 0.0;
                for (const auto& s : sims) {
                    a += s.series[sp].avg_conc[t];
                    b += s.series[sp].avg_sq_conc[t];
                    c += s.series[sp].degree_of_mixing[t];
                }
                const auto n = static_cast<double>(sims.size());
                mean_sigma2[sp].push_back(c / n);
                mean += io::csv_line({physics::species_name(static_cast<physics::Species>(sp)),
                                      io::format_double(sims.front().series[sp].times[t]), io::format_double(a / n),
                                      io::format_double(b / n), io::format_double(c / n)});
            }
        }
        emit("qoi_mean.csv", mean);
    } else {
        note("notice: runs have different time grids, qoi_mean.csv skipped");
    }

    const std::vector<ExponentRow> exponents = exponent_table(sims);
    {
        const fs::path p = options.out / "exponents.csv";
        write_exponent_csv(p, exponents);
        written.push_back(p);
    }

    ExponentClusters clusters;
    bool have_clusters = false;
    try {
        clusters = cluster_exponents(exponents, physics::Species::kA, options.k, options.seed);
        have_clusters = true;
        const fs::path p = options.out / "exponent_clusters.csv";
        write_exponent_clusters_csv(p, clusters);
        written.push_back(p);
        if (!clusters.explained_by_k.empty()) {
            std::string elbow = "k,explained_variance_fraction\n";
            for (std::size_t i = 0; i < clusters.explained_by_k.size(); ++i) {
                elbow += io::csv_line({std::to_string(i + 1), io::format_double(clusters.explained_by_k[i])});
            }
            emit("elbow.csv", elbow);
        }
    } catch (const Error& e) {
        note(std::string("notice: clustering skipped: ") + e.what());
    }

    std::vector<features::ImportanceReport> importances;
    try {
        const Dataset data = build_dataset(sims, "degree_of_mixing", physics::Species::kA);
        for (auto m : {features::ImportanceMethod::kFTest, features::ImportanceMethod::kMutualInfo,
                       features::ImportanceMethod::kRandomForest}) {
            importances.push_back(feature_importance(data, m, options.seed));
            const fs::path p = options.out / (std::string("importance_") + features::method_name(m) + ".csv");
            features::write_importance_csv(p, importances.back());
            written.push_back(p);
        }
    } catch (const Error& e) {
        note(std::string("notice: importance skipped: ") + e.what());
    }

    if (options.svg) {
        if (aligned) {
            const auto& times = sims.front().series.front().times;
            SvgPlot plot("Mean degree of mixing over runs", "t", "sigma^2", times.front(), times.back(), 0.0, 1.0);
            for (const auto& s : sims) {
                plot.polyline(times, s.series[0].degree_of_mixing, "#c8c8c8", 0.6);
            }
            for (std::size_t sp = 0; sp < 3; ++sp) {
                plot.polyline(times, mean_sigma2[sp], colour(sp), 2.0);
                plot.legend(static_cast<int>(sp), colour(sp), std::string("mean ") + physics::species_name(static_cast<physics::Species>(sp)));
            }
            emit("qoi_mean.svg", plot.str());
        }
        if (have_clusters) {
            const Eigen::VectorXd x = clusters.points.col(0);
            const Eigen::VectorXd y = clusters.points.col(1);
            SvgPlot plot("Degree-of-mixing exponent (species A)", "log10 aniso ratio", "exponent", x.minCoeff(),
                         x.maxCoeff(), y.minCoeff(), y.maxCoeff());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                plot.dot(x[i], y[i], colour(static_cast<std::size_t>(clusters.clusters.assignments[static_cast<std::size_t>(i)])));
            }
            emit("exponent_clusters.svg", plot.str());
        }
        for (const auto& imp : importances) {
            double top = 0.0;
            for (double v : imp.scores) {
                if (std::isfinite(v)) {
                    top = std::max(top, v);
                }
            }
            SvgPlot plot(std::string("Importance (") + features::method_name(imp.method) + ")", "feature", "score",
                         -0.5, static_cast<double>(imp.scores.size()) - 0.5, 0.0, top > 0.0 ? top : 1.0);
            for (std::size_t f = 0; f < imp.scores.size(); ++f) {
                const double v = std::isfinite(imp.scores[f]) ? imp.scores[f] : top;
                plot.bar(static_cast<double>(f), 0.6, v, colour(f), imp.features[f]);
            }
            emit(std::string("importance_") + features::method_name(imp.method) + ".svg", plot.str());
        }
    }
    return written;
}

}  // namespace mixrom::pipeline
