#pragma once

#include "mixrom/rom_ml.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mixrom::features {

using ml::Matrix;
using ml::Vector;

/// Model inputs in their fixed column order. The first five describe the
/// simulation; time is appended for ROM training.
inline const std::vector<std::string> kParameterNames{"period_T", "log10_aniso_ratio", "kappa_fL", "log10_v0", "D_m"};
inline const std::vector<std::string> kFeatureNames{"period_T", "log10_aniso_ratio", "kappa_fL",
                                                    "log10_v0", "D_m",               "time"};

struct ScaledFeatures {
    Matrix scaled;
    ml::MinMaxScaler scaling;
    std::vector<bool> constant;  // columns with max == min, mapped to 0
};

/// Per-column (x - min)/(max - min).
[[nodiscard]] ScaledFeatures minmax_scale(const Matrix& raw);

enum class ImportanceMethod { kFTest, kMutualInfo, kRandomForest };

[[nodiscard]] const char* method_name(ImportanceMethod m) noexcept;
/// Accepts ftest|f_test, mi|mutual_info, rf|random_forest.
[[nodiscard]] ImportanceMethod parse_method(const std::string& s);

struct ImportanceReport {
    ImportanceMethod method = ImportanceMethod::kFTest;
    std::vector<std::string> features;
    std::vector<double> scores;
    std::vector<int> ranking;  // feature indices, best first, stable on ties
    bool degenerate = false;   // e.g. a forest that could not split

    /// 1-based rank of a feature; throws InvalidArgument for unknown names.
    [[nodiscard]] int rank_of(const std::string& feature) const;
};

/// Ranks scores descending; equal scores keep column order.
[[nodiscard]] std::vector<int> rank_descending(const std::vector<double>& scores);

/// Univariate regression F statistic r^2/(1-r^2)(n-2) per column. A column
/// with zero variance scores 0; a perfectly correlated column scores +inf.
/// Throws InvalidArgument for n < 3 or zero-variance y.
[[nodiscard]] ImportanceReport f_test_importance(const Matrix& x, const Vector& y,
                                                 const std::vector<std::string>& names);

/// Kraskov-Stoegbauer-Grassberger estimate (first variant) of I(x_j; y) in
/// nats for each column, on standardized data with 1e-10 jitter. Negative
/// estimates are clamped to 0.
[[nodiscard]] double mutual_info(const Vector& x, const Vector& y, int k, std::uint64_t seed);
[[nodiscard]] ImportanceReport mutual_info_importance(const Matrix& x, const Vector& y,
                                                      const std::vector<std::string>& names, int k_neighbors = 3,
                                                      std::uint64_t seed = 0);

struct ForestOptions {
    int n_trees = 100;
    int max_features = 4;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    std::uint64_t seed = 0;
};

/// Regression forest with variance impurity. Every tree sees all samples
/// (no bootstrap); randomness only enters through per-node feature subsets.
class RandomForest {
public:
    void fit(const Matrix& x, const Vector& y, const ForestOptions& options);
    [[nodiscard]] Vector predict(const Matrix& x) const;
    /// Total impurity decrease per feature, normalized to sum 1 (all zeros
    /// when no tree could split).
    [[nodiscard]] const std::vector<double>& importances() const noexcept { return importances_; }
    [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }
    [[nodiscard]] std::size_t num_trees() const noexcept { return trees_.size(); }

private:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    using Tree = std::vector<Node>;

    std::vector<Tree> trees_;
    std::vector<double> importances_;
    bool degenerate_ = false;
};

[[nodiscard]] ImportanceReport random_forest_importance(const Matrix& x, const Vector& y,
                                                        const std::vector<std::string>& names,
                                                        const ForestOptions& options = {});

struct ClusterResult {
    int k = 0;
    std::vector<int> assignments;
    Matrix centroids;
    double within_ss = 0.0;
    double total_ss = 0.0;
    double explained_variance_fraction = 0.0;  // between-cluster SS / total SS
};

struct KMeansOptions {
    int restarts = 10;
    int max_iterations = 300;
};

/// Lloyd iterations from k-means++ seeds; the best of `restarts` runs by
/// within-cluster SS is kept. An emptied cluster is reseeded with the point
/// farthest from its centroid. Throws InvalidArgument unless 1 <= k <= n.
[[nodiscard]] ClusterResult fit_kmeans(const Matrix& points, int k, std::uint64_t seed,
                                       const KMeansOptions& options = {});

struct ElbowResult {
    int k = 0;
    std::vector<ClusterResult> fits;  // fits[i] has k = i + 1
};

/// Fits k = 1..k_max (each k also tries the previous fit's centroids plus the
/// farthest point, so the explained fraction never decreases) and returns the
/// smallest k whose marginal gain is below `threshold`.
[[nodiscard]] ElbowResult elbow_select(const Matrix& points, int k_max, std::uint64_t seed, double threshold = 0.05,
                                       const KMeansOptions& options = {});

/// 1: [0,0.25), 2: [0.25,0.5), 3: [0.5,0.75), 4: [0.75,1]. Throws
/// InvalidArgument outside [0,1].
[[nodiscard]] int label_mixing_class(double sigma2);

void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& report);
[[nodiscard]] nlohmann::json to_json(const ImportanceReport& report);
void write_cluster_csv(const std::filesystem::path& path, const ClusterResult& result);
[[nodiscard]] nlohmann::json to_json(const ClusterResult& result);

}  // namespace mixrom::features
