#include "mixrom/feature_analysis.hpp"

#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/random.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace mixrom::features {

namespace {

double digamma(double v) { return boost::math::digamma(v); }

void check_xy(const Matrix& x, const Vector& y, const std::vector<std::string>& names, const char* who) {
    if (x.rows() != y.size()) {
        throw InvalidArgument(std::string(who) + ": samples and targets differ in count");
    }
    if (static_cast<Eigen::Index>(names.size()) != x.cols()) {
        throw InvalidArgument(std::string(who) + ": feature names do not match columns");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw InvalidArgument(std::string(who) + ": non-finite input");
    }
}

ImportanceReport make_report(ImportanceMethod method, const std::vector<std::string>& names,
                             std::vector<double> scores) {
    ImportanceReport r;
    r.method = method;
    r.features = names;
    r.ranking = rank_descending(scores);
    r.scores = std::move(scores);
    return r;
}

nlohmann::json number_or_text(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return io::format_double(v);
}

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

}  // namespace

ScaledFeatures minmax_scale(const Matrix& raw) {
    ScaledFeatures out;
    out.scaling = ml::MinMaxScaler::fit(raw);
    out.scaled = out.scaling.transform(raw);
    out.constant.resize(out.scaling.size());
    for (std::size_t c = 0; c < out.constant.size(); ++c) {
        out.constant[c] = out.scaling.is_constant(c);
    }
    return out;
}

const char* method_name(ImportanceMethod m) noexcept {
    switch (m) {
        case ImportanceMethod::kFTest: return "f_test";
        case ImportanceMethod::kMutualInfo: return "mutual_info";
        case ImportanceMethod::kRandomForest: return "random_forest";
    }
    return "?";
}

ImportanceMethod parse_method(const std::string& s) {
    if (s == "ftest" || s == "f_test") {
        return ImportanceMethod::kFTest;
    }
    if (s == "mi" || s == "mutual_info") {
        return ImportanceMethod::kMutualInfo;
    }
    if (s == "rf" || s == "random_forest") {
        return ImportanceMethod::kRandomForest;
    }
    throw InvalidArgument("unknown importance method '" + s + "' (expected ftest, mi or rf)");
}

int ImportanceReport::rank_of(const std::string& feature) const {
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        if (features[static_cast<std::size_t>(ranking[r])] == feature) {
            return static_cast<int>(r) + 1;
        }
    }
    throw InvalidArgument("feature '" + feature + "' not in report");
}

std::vector<int> rank_descending(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    return order;
}

ImportanceReport f_test_importance(const Matrix& x, const Vector& y, const std::vector<std::string>& names) {
    check_xy(x, y, names, "f_test_importance");
    const Eigen::Index n = x.rows();
    if (n < 3) {
        throw InvalidArgument("f_test_importance: need at least three samples");
    }
    const Vector yc = y.array() - y.mean();
    const double syy = yc.squaredNorm();
    if (!(syy > 0.0)) {
        throw InvalidArgument("f_test_importance: target has zero variance");
    }
    std::vector<double> scores;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const Vector xc = x.col(c).array() - x.col(c).mean();
        const double sxx = xc.squaredNorm();
        if (!(sxx > 0.0)) {
            scores.push_back(0.0);
            continue;
        }
        const double r = xc.dot(yc) / std::sqrt(sxx * syy);
        const double r2 = std::min(r * r, 1.0);
        const double denom = 1.0 - r2;
        scores.push_back(denom > 0.0 ? r2 / denom * static_cast<double>(n - 2)
                                     : std::numeric_limits<double>::infinity());
    }
    return make_report(ImportanceMethod::kFTest, names, std::move(scores));
}

double mutual_info(const Vector& x_in, const Vector& y_in, int k, std::uint64_t seed) {
    const Eigen::Index n = x_in.size();
    if (y_in.size() != n) {
        throw InvalidArgument("mutual_info: sizes differ");
    }
    if (k < 1 || n <= k + 1) {
        throw InvalidArgument("mutual_info: need more than k+1 samples");
    }
    Rng rng(seed);
    const auto prepare = [&](const Vector& v) {
        const double mean = v.mean();
        const double sd = std::sqrt((v.array() - mean).square().mean());
        Vector out = sd > 0.0 ? Vector((v.array() - mean) / sd) : Vector(v.array() - mean);
        const double amp = 1e-10 * std::max(1.0, out.cwiseAbs().mean());
        for (Eigen::Index i = 0; i < n; ++i) {
            out[i] += amp * rng.normal();
        }
        return out;
    };
    const Vector x = prepare(x_in);
    const Vector y = prepare(y_in);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
    std::vector<double> xs(order.size());
    std::vector<double> ys(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        xs[i] = x[order[i]];
        ys[i] = y[order[i]];
    }
    std::vector<double> y_sorted = ys;
    std::sort(y_sorted.begin(), y_sorted.end());

    const auto count_within = [](const std::vector<double>& sorted, double centre, double radius) {
        const auto lo = std::upper_bound(sorted.begin(), sorted.end(), centre - radius);
        const auto hi = std::lower_bound(sorted.begin(), sorted.end(), centre + radius);
        return hi > lo ? static_cast<double>(hi - lo) : 0.0;  // includes the point itself
    };

    double acc = 0.0;
    std::priority_queue<double> heap;  // k smallest joint distances
    for (std::size_t i = 0; i < xs.size(); ++i) {
        while (!heap.empty()) {
            heap.pop();
        }
        const auto consider = [&](std::size_t j) {
            const double d = std::max(std::abs(xs[j] - xs[i]), std::abs(ys[j] - ys[i]));
            if (heap.size() < static_cast<std::size_t>(k)) {
                heap.push(d);
            } else if (d < heap.top()) {
                heap.pop();
                heap.push(d);
            }
        };
        const auto full_and_beyond = [&](double dx) { return heap.size() == static_cast<std::size_t>(k) && dx >= heap.top(); };
        std::size_t lo = i;
        std::size_t hi = i + 1;
        bool left_open = lo > 0;
        bool right_open = hi < xs.size();
        while (left_open || right_open) {
            if (left_open) {
                const std::size_t j = lo - 1;
                if (full_and_beyond(xs[i] - xs[j])) {
                    left_open = false;
                } else {
                    consider(j);
                    lo = j;
                    left_open = lo > 0;
                }
            }
            if (right_open) {
                const std::size_t j = hi;
                if (full_and_beyond(xs[j] - xs[i])) {
                    right_open = false;
                } else {
                    consider(j);
                    hi = j + 1;
                    right_open = hi < xs.size();
                }
            }
        }
        const double eps = heap.top();
        const double nx = count_within(xs, xs[i], eps);
        const double ny = count_within(y_sorted, ys[i], eps);
        acc += digamma(std::max(nx, 1.0)) + digamma(std::max(ny, 1.0));
    }
    const double mi = digamma(static_cast<double>(n)) + digamma(static_cast<double>(k)) - acc / static_cast<double>(n);
    return std::max(mi, 0.0);
}

ImportanceReport mutual_info_importance(const Matrix& x, const Vector& y, const std::vector<std::string>& names,
                                        int k_neighbors, std::uint64_t seed) {
    check_xy(x, y, names, "mutual_info_importance");
    std::vector<double> scores;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        scores.push_back(mutual_info(x.col(c), y, k_neighbors, derive_seed(seed, names[static_cast<std::size_t>(c)])));
    }
    return make_report(ImportanceMethod::kMutualInfo, names, std::move(scores));
}

void RandomForest::fit(const Matrix& x, const Vector& y, const ForestOptions& options) {
    if (x.rows() != y.size()) {
        throw InvalidArgument("RandomForest::fit: samples and targets differ in count");
    }
    if (options.n_trees < 1 || options.max_features < 1 || options.min_samples_split < 2 ||
        options.min_samples_leaf < 1) {
        throw InvalidArgument("RandomForest::fit: invalid options");
    }
    const Eigen::Index n = x.rows();
    const auto d = static_cast<int>(x.cols());
    trees_.clear();
    importances_.assign(static_cast<std::size_t>(d), 0.0);
    std::vector<double> gain(static_cast<std::size_t>(d), 0.0);

    struct Task {
        int node;
        std::vector<Eigen::Index> rows;
    };
    std::vector<Eigen::Index> sorted;
    for (int t = 0; t < options.n_trees; ++t) {
        Rng rng(derive_seed(options.seed, "tree" + std::to_string(t)));
        Tree tree;
        std::vector<Task> stack;
        std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        tree.push_back(Node{});
        stack.push_back({0, std::move(all)});
        while (!stack.empty()) {
            Task task = std::move(stack.back());
            stack.pop_back();
            const auto& rows = task.rows;
            const double m = static_cast<double>(rows.size());
            double mean = 0.0;
            for (auto r : rows) {
                mean += y[r];
            }
            mean /= m;
            double sse = 0.0;
            for (auto r : rows) {
                sse += (y[r] - mean) * (y[r] - mean);
            }
            tree[static_cast<std::size_t>(task.node)].value = mean;
            if (static_cast<int>(rows.size()) < options.min_samples_split || !(sse > 0.0)) {
                continue;
            }

            std::vector<int> features(static_cast<std::size_t>(d));
            std::iota(features.begin(), features.end(), 0);
            rng.shuffle(features.begin(), features.end());
            const std::size_t first_batch = static_cast<std::size_t>(std::min(options.max_features, d));

            int best_feature = -1;
            double best_gain = 0.0;
            double best_threshold = 0.0;
            for (std::size_t fi = 0; fi < features.size(); ++fi) {
                if (fi == first_batch && best_feature >= 0) {
                    break;  // only look past the subset when it held no valid split
                }
                const int f = features[fi];
                sorted = rows;
                std::stable_sort(sorted.begin(), sorted.end(),
                                 [&](Eigen::Index a, Eigen::Index b) { return x(a, f) < x(b, f); });
                double sum_l = 0.0;
                double sq_l = 0.0;
                double sum_all = 0.0;
                double sq_all = 0.0;
                for (auto r : sorted) {
                    const double v = y[r] - mean;
                    sum_all += v;
                    sq_all += v * v;
                }
                for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                    const double v = y[sorted[i]] - mean;
                    sum_l += v;
                    sq_l += v * v;
                    const double xi = x(sorted[i], f);
                    const double xn = x(sorted[i + 1], f);
                    const auto n_l = static_cast<double>(i + 1);
                    const double n_r = m - n_l;
                    if (!(xi < xn) || n_l < options.min_samples_leaf || n_r < options.min_samples_leaf) {
                        continue;
                    }
                    const double sum_r = sum_all - sum_l;
                    const double sq_r = sq_all - sq_l;
                    const double sse_l = sq_l - sum_l * sum_l / n_l;
                    const double sse_r = sq_r - sum_r * sum_r / n_r;
                    const double g = sse - sse_l - sse_r;
                    if (g > best_gain) {
                        best_gain = g;
                        best_feature = f;
                        const double mid = 0.5 * (xi + xn);
                        best_threshold = mid < xn ? mid : xi;
                    }
                }
            }
            if (best_feature < 0) {
                continue;
            }
            std::vector<Eigen::Index> left;
            std::vector<Eigen::Index> right;
            for (auto r : rows) {
                (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
            }
            gain[static_cast<std::size_t>(best_feature)] += best_gain;
            const int li = static_cast<int>(tree.size());
            tree.push_back(Node{});
            tree.push_back(Node{});
            Node& node = tree[static_cast<std::size_t>(task.node)];
            node.feature = best_feature;
            node.threshold = best_threshold;
            node.left = li;
            node.right = li + 1;
            stack.push_back({li + 1, std::move(right)});
            stack.push_back({li, std::move(left)});
        }
        trees_.push_back(std::move(tree));
    }
    const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
    degenerate_ = !(total > 0.0);
    if (!degenerate_) {
        for (std::size_t f = 0; f < gain.size(); ++f) {
            importances_[f] = gain[f] / total;
        }
    }
}

Vector RandomForest::predict(const Matrix& x) const {
    if (trees_.empty()) {
        throw InvalidArgument("RandomForest::predict: forest is not fitted");
    }
    Vector out = Vector::Zero(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (const auto& tree : trees_) {
            int k = 0;
            while (tree[static_cast<std::size_t>(k)].feature >= 0) {
                const Node& node = tree[static_cast<std::size_t>(k)];
                k = x(i, node.feature) <= node.threshold ? node.left : node.right;
            }
            acc += tree[static_cast<std::size_t>(k)].value;
        }
        out[i] = acc / static_cast<double>(trees_.size());
    }
    return out;
}

ImportanceReport random_forest_importance(const Matrix& x, const Vector& y, const std::vector<std::string>& names,
                                          const ForestOptions& options) {
    check_xy(x, y, names, "random_forest_importance");
    RandomForest forest;
    ImportanceReport report;
    if (x.rows() < options.min_samples_split) {
        report = make_report(ImportanceMethod::kRandomForest, names, std::vector<double>(names.size(), 0.0));
        report.degenerate = true;
        return report;
    }
    forest.fit(x, y, options);
    report = make_report(ImportanceMethod::kRandomForest, names, forest.importances());
    report.degenerate = forest.degenerate();
    return report;
}

namespace {

// Lloyd iterations from the given centroids; returns the fitted result.
ClusterResult lloyd(const Matrix& points, Matrix centroids, int max_iterations, double total_ss) {
    const Eigen::Index n = points.rows();
    const auto k = static_cast<int>(centroids.rows());
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(points, i, centroids, 0);
            for (int c = 1; c < k; ++c) {
                const double dd = squared_distance(points, i, centroids, c);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int a : assign) {
            ++counts[static_cast<std::size_t>(a)];
        }
        // Reseed empty clusters with the point farthest from its centroid.
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                continue;
            }
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int a = assign[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(a)] <= 1) {
                    continue;
                }
                const double dd = squared_distance(points, i, centroids, a);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
            assign[static_cast<std::size_t>(far)] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }
        centroids.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            centroids.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
        }
        for (int c = 0; c < k; ++c) {
            centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
        if (!changed) {
            break;
        }
    }
    ClusterResult r;
    r.k = k;
    r.assignments = std::move(assign);
    r.centroids = std::move(centroids);
    for (Eigen::Index i = 0; i < n; ++i) {
        r.within_ss += squared_distance(points, i, r.centroids, r.assignments[static_cast<std::size_t>(i)]);
    }
    r.total_ss = total_ss;
    r.explained_variance_fraction = total_ss > 0.0 ? std::clamp(1.0 - r.within_ss / total_ss, 0.0, 1.0) : 1.0;
    return r;
}

Matrix kmeans_plus_plus(const Matrix& points, int k, Rng& rng) {
    const Eigen::Index n = points.rows();
    Matrix centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Vector d2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d2[i] = squared_distance(points, i, centroids, 0);
    }
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centroids.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points, i, centroids, c));
        }
    }
    return centroids;
}

double total_sum_of_squares(const Matrix& points) {
    const Eigen::RowVectorXd mean = points.colwise().mean();
    return (points.rowwise() - mean).squaredNorm();
}

}  // namespace

ClusterResult fit_kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options) {
    if (k < 1 || k > points.rows()) {
        throw InvalidArgument("fit_kmeans: need 1 <= k <= number of points");
    }
    if (!points.allFinite()) {
        throw InvalidArgument("fit_kmeans: non-finite points");
    }
    const double total = total_sum_of_squares(points);
    ClusterResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, options.restarts); ++r) {
        Rng rng(derive_seed(seed, "kmeans" + std::to_string(r)));
        ClusterResult fit = lloyd(points, kmeans_plus_plus(points, k, rng), options.max_iterations, total);
        if (!have || fit.within_ss < best.within_ss) {
            best = std::move(fit);
            have = true;
        }
    }
    return best;
}

ElbowResult elbow_select(const Matrix& points, int k_max, std::uint64_t seed, double threshold,
                         const KMeansOptions& options) {
    if (k_max < 1) {
        throw InvalidArgument("elbow_select: k_max must be >= 1");
    }
    k_max = static_cast<int>(std::min<Eigen::Index>(k_max, points.rows()));
    const double total = total_sum_of_squares(points);
    ElbowResult out;
    for (int k = 1; k <= k_max; ++k) {
        ClusterResult fit = fit_kmeans(points, k, derive_seed(seed, "k" + std::to_string(k)), options);
        if (k > 1) {
            const ClusterResult& prev = out.fits.back();
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < points.rows(); ++i) {
                const double dd = squared_distance(points, i, prev.centroids, prev.assignments[static_cast<std::size_t>(i)]);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            Matrix init(k, points.cols());
            init.topRows(k - 1) = prev.centroids;
            init.row(k - 1) = points.row(far);
            ClusterResult warm = lloyd(points, std::move(init), options.max_iterations, total);
            if (warm.within_ss < fit.within_ss) {
                fit = std::move(warm);
            }
        }
        out.fits.push_back(std::move(fit));
    }
    out.k = k_max;
    for (int k = 1; k < k_max; ++k) {
        const double gain = out.fits[static_cast<std::size_t>(k)].explained_variance_fraction -
                            out.fits[static_cast<std::size_t>(k - 1)].explained_variance_fraction;
        if (gain < threshold) {
            out.k = k;
            break;
        }
    }
    return out;
}

int label_mixing_class(double sigma2) {
    if (!(sigma2 >= 0.0 && sigma2 <= 1.0)) {
        throw InvalidArgument("label_mixing_class: sigma^2 must lie in [0,1], got " + io::format_double(sigma2));
    }
    if (sigma2 < 0.25) {
        return 1;
    }
    if (sigma2 < 0.5) {
        return 2;
    }
    if (sigma2 < 0.75) {
        return 3;
    }
    return 4;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& report) {
    std::string out = "feature,score,rank\n";
    std::vector<int> rank(report.features.size());
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
        rank[static_cast<std::size_t>(report.ranking[r])] = static_cast<int>(r) + 1;
    }
    for (std::size_t f = 0; f < report.features.size(); ++f) {
        out += io::csv_line({report.features[f], io::format_double(report.scores[f]), std::to_string(rank[f])});
    }
    io::write_text_atomic(path, out);
}

nlohmann::json to_json(const ImportanceReport& report) {
    nlohmann::json scores = nlohmann::json::array();
    for (double s : report.scores) {
        scores.push_back(number_or_text(s));
    }
    nlohmann::json ranked = nlohmann::json::array();
    for (int i : report.ranking) {
        ranked.push_back(report.features[static_cast<std::size_t>(i)]);
    }
    return {{"method", method_name(report.method)},
            {"features", report.features},
            {"scores", std::move(scores)},
            {"ranking", std::move(ranked)},
            {"degenerate", report.degenerate}};
}

void write_cluster_csv(const std::filesystem::path& path, const ClusterResult& result) {
    std::string out = "point_id,cluster\n";
    for (std::size_t i = 0; i < result.assignments.size(); ++i) {
        out += io::csv_line({std::to_string(i), std::to_string(result.assignments[i])});
    }
    io::write_text_atomic(path, out);
}

nlohmann::json to_json(const ClusterResult& result) {
    nlohmann::json centroids = nlohmann::json::array();
    for (Eigen::Index c = 0; c < result.centroids.rows(); ++c) {
        std::vector<double> row;
        for (Eigen::Index j = 0; j < result.centroids.cols(); ++j) {
            row.push_back(result.centroids(c, j));
        }
        centroids.push_back(row);
    }
    return {{"k", result.k},
            {"centroids", std::move(centroids)},
            {"within_ss", result.within_ss},
            {"total_ss", result.total_ss},
            {"explained_variance_fraction", result.explained_variance_fraction},
            {"assignments", result.assignments}};
}

}  // namespace mixrom::features
