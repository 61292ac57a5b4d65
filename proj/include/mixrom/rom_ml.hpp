#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <list>
#include <string>
#include <utility>
#include <vector>

namespace mixrom::ml {

/// Samples are rows.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RbfKernel {
    double gamma = 0.1;
    void validate() const;
};

/// exp(-gamma |x - z|^2). Throws InvalidArgument on a size mismatch.
[[nodiscard]] double rbf_kernel(const Vector& x, const Vector& z, const RbfKernel& kernel);

/// Per-column min/max used to map raw features to [0,1]. A column with
/// max == min is constant and maps to 0.
struct MinMaxScaler {
    std::vector<double> mins;
    std::vector<double> maxs;

    [[nodiscard]] std::size_t size() const noexcept { return mins.size(); }
    [[nodiscard]] bool empty() const noexcept { return mins.empty(); }
    [[nodiscard]] bool is_constant(std::size_t col) const { return !(maxs.at(col) > mins.at(col)); }
    [[nodiscard]] Matrix transform(const Matrix& raw) const;
    [[nodiscard]] Matrix inverse(const Matrix& scaled) const;

    static MinMaxScaler fit(const Matrix& raw);
};

/// Rows of an n x n RBF Gram matrix, computed on demand and kept in an LRU
/// cache bounded by a byte budget (at least two rows are always kept).
class KernelCache {
public:
    KernelCache(const Matrix& x, RbfKernel kernel, std::size_t budget_bytes);

    [[nodiscard]] const double* row(Eigen::Index i);
    [[nodiscard]] Eigen::Index size() const noexcept { return x_.rows(); }
    [[nodiscard]] std::size_t hits() const noexcept { return hits_; }
    [[nodiscard]] std::size_t misses() const noexcept { return misses_; }

private:
    struct Entry {
        Eigen::Index index;
        std::vector<double> values;
    };

    const Matrix& x_;
    RbfKernel kernel_;
    Vector sq_norms_;
    std::size_t capacity_;
    std::list<Entry> lru_;
    std::vector<std::list<Entry>::iterator> slot_;
    std::vector<bool> cached_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

struct SmoOptions {
    double tol = 1e-3;                 // stop when the maximal violating pair gap is below tol
    long long max_updates = 10'000'000;
    std::size_t cache_bytes = std::size_t{256} << 20;
};

/// Result of  min 1/2 a'Qa + p'a  s.t.  y'a = 0, 0 <= a <= C  with y in {+1,-1}.
struct SmoResult {
    Vector alpha;
    double rho = 0.0;       // decision function is sum_i y_i a_i K(x_i, x) - rho
    double objective = 0.0;
    double gap = 0.0;       // final maximal violating pair gap
    long long updates = 0;
};

/// Q-matrix access for the solver: row(i) returns Q_i. (with y_i y_j folded in).
struct QMatrix {
    Eigen::Index size = 0;
    std::function<const double*(Eigen::Index)> row;
    std::function<double(Eigen::Index)> diagonal;
};

/// SMO with maximal-violating-pair working-set selection and the analytic
/// two-variable update. Throws NonConvergence when the update cap is hit.
[[nodiscard]] SmoResult solve_smo(const QMatrix& q, const Vector& p, const std::vector<signed char>& y, double c,
                                  const SmoOptions& options = {});

struct SvrModel {
    RbfKernel kernel;
    double penalty = 1.0;   // P
    double epsilon = 0.1;   // tube half-width
    MinMaxScaler scaling;
    std::vector<std::string> feature_names;
    Matrix support_vectors;  // scaled units
    Vector dual_coefs;       // alpha_j - alpha*_j
    double bias = 0.0;

    [[nodiscard]] Eigen::Index num_support() const noexcept { return support_vectors.rows(); }
};

struct SvrTrainInfo {
    double objective = 0.0;
    double gap = 0.0;
    long long updates = 0;
    Vector alpha;       // length n
    Vector alpha_star;  // length n
};

/// Epsilon-insensitive SVR on pre-scaled features. All-identical targets give
/// a bias-only model with bias = mean(y).
[[nodiscard]] SvrModel svr_train(const Matrix& x, const Vector& y, double penalty, double epsilon, RbfKernel kernel,
                                 const SmoOptions& options = {}, SvrTrainInfo* info = nullptr);

struct PredictOptions {
    bool clip_nonneg = true;
    bool cap_one = true;  // QoI predictions never exceed 1
};

/// Kernel expansion over the support vectors, evaluated in blocks.
[[nodiscard]] Vector svr_decision(const SvrModel& model, const Matrix& x);
[[nodiscard]] Vector svr_predict(const SvrModel& model, const Matrix& x, PredictOptions options = {});

/// Number of entries of x outside [0,1] (beyond 1e-9); callers warn on it.
[[nodiscard]] std::size_t count_out_of_range(const Matrix& x);

struct SvmBinary {
    int positive = 0;  // label voted for when the decision value is > 0
    int negative = 0;
    Matrix support_vectors;
    Vector dual_coefs;  // y_j alpha_j
    double bias = 0.0;
};

struct SvmModel {
    RbfKernel kernel;
    double penalty = 1.0;
    MinMaxScaler scaling;
    std::vector<std::string> feature_names;
    std::vector<int> classes;  // ascending
    std::vector<SvmBinary> classifiers;
};

/// One-vs-one soft-margin SVM; one binary classifier per pair of classes
/// present in `labels`. Throws InvalidArgument with fewer than two classes.
[[nodiscard]] SvmModel svm_train(const Matrix& x, const std::vector<int>& labels, double penalty, RbfKernel kernel,
                                 const SmoOptions& options = {});

/// Plurality vote; ties go to the lowest label.
[[nodiscard]] std::vector<int> svm_predict(const SvmModel& model, const Matrix& x);

/// Plurality over a vote vector indexed like `classes`; ties go to the first.
[[nodiscard]] int vote_winner(const std::vector<int>& votes, const std::vector<int>& classes);

/// 1 - SS_res/SS_tot. Throws InvalidArgument for n < 2, size mismatch or
/// zero-variance y_true.
[[nodiscard]] double r2_score(const Vector& y_true, const Vector& y_pred);

/// Macro-averaged F1 over the labels that occur in either input.
[[nodiscard]] double f1_macro(const std::vector<int>& y_true, const std::vector<int>& y_pred);

struct EnsembleBand {
    Vector mean;
    Vector lo;
    Vector hi;
};

/// Per-sample mean and min/max over member predictions.
[[nodiscard]] EnsembleBand ensemble_predict(const std::vector<SvrModel>& models, const Matrix& x,
                                            PredictOptions options = {});

struct HyperParams {
    double penalty = 1.0;
    double gamma = 0.1;
    double epsilon = 0.1;
};

/// P in {1,10,1e2,1e3,1e4} x gamma in {0.1,1e-2,1e-3,1e-4} x eps in {0.1,1e-2,1e-3,1e-4}.
[[nodiscard]] std::vector<HyperParams> default_grid();

[[nodiscard]] nlohmann::json to_json(const SvrModel& model);
[[nodiscard]] nlohmann::json to_json(const SvmModel& model);
[[nodiscard]] SvrModel svr_from_json(const nlohmann::json& j);
[[nodiscard]] SvmModel svm_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const SvrModel& model);
void save_model(const std::filesystem::path& path, const SvmModel& model);
[[nodiscard]] SvrModel load_svr(const std::filesystem::path& path);
[[nodiscard]] SvmModel load_svm(const std::filesystem::path& path);

}  // namespace mixrom::ml
