#include "mixrom/rom_ml.hpp"

#include "mixrom/error.hpp"
#include "mixrom/io.hpp"
#include "mixrom/vec_math.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace mixrom::ml {

namespace {

constexpr double kTau = 1e-12;
constexpr double kSupportThreshold = 1e-12;

void check_finite(const Matrix& x, const char* what) {
    if (!x.allFinite()) {
        throw InvalidArgument(std::string(what) + ": non-finite entries");
    }
}

// Sum_j coef_j exp(-gamma |x - sv_j|^2) + bias for every row of x.
// Uses -gamma |x - s|^2 = (-gamma |s|^2) + (-gamma |x|^2) + sum_c (2 gamma s_c) x_c
// with the support vectors padded to a multiple of eight; padding rows get a
// hugely negative offset so their kernel value is exactly 0.
Vector kernel_expansion(const Matrix& sv, const Vector& coef, double bias, double gamma, const Matrix& x) {
    using detail::v8d;
    const Eigen::Index n = x.rows();
    Vector out = Vector::Constant(n, bias);
    if (sv.rows() == 0 || n == 0) {
        return out;
    }
    if (sv.cols() != x.cols()) {
        throw InvalidArgument("prediction: feature count " + std::to_string(x.cols()) + " does not match model's " +
                              std::to_string(sv.cols()));
    }
    const Eigen::Index m = sv.rows();
    const Eigen::Index f = sv.cols();
    const Eigen::Index padded = (m + 7) / 8 * 8;
    Matrix scaled = Matrix::Zero(padded, f);
    scaled.topRows(m) = (2.0 * gamma) * sv;
    Vector offset = Vector::Constant(padded, -1e300);
    offset.head(m) = -gamma * sv.rowwise().squaredNorm();
    Vector weights = Vector::Zero(padded);
    weights.head(m) = coef;
    const Vector x_offset = -gamma * x.rowwise().squaredNorm();

    constexpr Eigen::Index kChunk = 1024;
    constexpr Eigen::Index kQueries = 16;
    for (Eigen::Index q0 = 0; q0 < n; q0 += kQueries) {
        const Eigen::Index qb = std::min(kQueries, n - q0);
        for (Eigen::Index s0 = 0; s0 < padded; s0 += kChunk) {
            const Eigen::Index sb = std::min(kChunk, padded - s0);
            for (Eigen::Index q = q0; q < q0 + qb; ++q) {
                const v8d xo = detail::splat(x_offset[q]);
                v8d acc = detail::splat(0.0);
                for (Eigen::Index k = s0; k < s0 + sb; k += 8) {
                    v8d arg = detail::load(offset.data() + k) + xo;
                    for (Eigen::Index c = 0; c < f; ++c) {
                        arg += detail::load(scaled.col(c).data() + k) * x(q, c);
                    }
                    acc += detail::exp_nonpositive(arg) * detail::load(weights.data() + k);
                }
                out[q] += detail::horizontal_sum(acc);
            }
        }
    }
    return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            r.push_back(m(i, j));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

// cols < 0 takes the width of the first row.
Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
    if (cols < 0) {
        cols = j.empty() ? 0 : static_cast<Eigen::Index>(j.front().size());
    }
    Matrix m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) {
            throw IoError("model file: support vector row has the wrong length");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json scaling_to_json(const MinMaxScaler& s) { return {{"mins", s.mins}, {"maxs", s.maxs}}; }

MinMaxScaler scaling_from_json(const nlohmann::json& j) {
    MinMaxScaler s;
    s.mins = j.at("mins").get<std::vector<double>>();
    s.maxs = j.at("maxs").get<std::vector<double>>();
    if (s.mins.size() != s.maxs.size()) {
        throw IoError("model file: scaling mins/maxs differ in length");
    }
    return s;
}

}  // namespace

void RbfKernel::validate() const {
    if (!(std::isfinite(gamma) && gamma > 0.0)) {
        throw InvalidArgument("RBF gamma must be positive");
    }
}

double rbf_kernel(const Vector& x, const Vector& z, const RbfKernel& kernel) {
    kernel.validate();
    if (x.size() != z.size()) {
        throw InvalidArgument("rbf_kernel: dimension mismatch");
    }
    return std::exp(-kernel.gamma * (x - z).squaredNorm());
}

MinMaxScaler MinMaxScaler::fit(const Matrix& raw) {
    check_finite(raw, "MinMaxScaler::fit");
    MinMaxScaler s;
    s.mins.resize(static_cast<std::size_t>(raw.cols()));
    s.maxs.resize(static_cast<std::size_t>(raw.cols()));
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        s.mins[static_cast<std::size_t>(c)] = raw.rows() > 0 ? raw.col(c).minCoeff() : 0.0;
        s.maxs[static_cast<std::size_t>(c)] = raw.rows() > 0 ? raw.col(c).maxCoeff() : 0.0;
    }
    return s;
}

Matrix MinMaxScaler::transform(const Matrix& raw) const {
    if (static_cast<std::size_t>(raw.cols()) != size()) {
        throw InvalidArgument("scaling: expected " + std::to_string(size()) + " columns, got " +
                              std::to_string(raw.cols()));
    }
    Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        if (is_constant(k)) {
            out.col(c).setZero();
        } else {
            out.col(c) = (raw.col(c).array() - mins[k]) / (maxs[k] - mins[k]);
        }
    }
    return out;
}

Matrix MinMaxScaler::inverse(const Matrix& scaled) const {
    if (static_cast<std::size_t>(scaled.cols()) != size()) {
        throw InvalidArgument("scaling: column count mismatch");
    }
    Matrix out(scaled.rows(), scaled.cols());
    for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        out.col(c) = scaled.col(c).array() * (maxs[k] - mins[k]) + mins[k];
    }
    return out;
}

KernelCache::KernelCache(const Matrix& x, RbfKernel kernel, std::size_t budget_bytes)
    : x_(x),
      kernel_(kernel),
      sq_norms_(x.rowwise().squaredNorm()),
      slot_(static_cast<std::size_t>(x.rows())),
      cached_(static_cast<std::size_t>(x.rows()), false) {
    kernel_.validate();
    const std::size_t row_bytes = std::max<std::size_t>(1, static_cast<std::size_t>(x.rows()) * sizeof(double));
    capacity_ = std::max<std::size_t>(2, budget_bytes / row_bytes);
}

const double* KernelCache::row(Eigen::Index i) {
    const auto k = static_cast<std::size_t>(i);
    if (cached_[k]) {
        ++hits_;
        lru_.splice(lru_.begin(), lru_, slot_[k]);
        return lru_.front().values.data();
    }
    ++misses_;
    std::vector<double> values;
    if (lru_.size() >= capacity_) {
        Entry& victim = lru_.back();
        cached_[static_cast<std::size_t>(victim.index)] = false;
        values = std::move(victim.values);
        lru_.pop_back();
    }
    const Eigen::Index n = x_.rows();
    values.resize(static_cast<std::size_t>(n));
    Eigen::Map<Vector> out(values.data(), n);
    out.noalias() = x_ * x_.row(i).transpose();
    out = ((-2.0 * out + sq_norms_).array() + sq_norms_[i]).max(0.0) * -kernel_.gamma;
    detail::exp_nonpositive_inplace(out.data(), static_cast<std::size_t>(n));
    out[i] = 1.0;
    lru_.push_front(Entry{i, std::move(values)});
    slot_[k] = lru_.begin();
    cached_[k] = true;
    return lru_.front().values.data();
}

namespace {

// Analytic two-variable step on (a_i, a_j) keeping y_i a_i + y_j a_j fixed and
// both inside [0, c].
void pair_update(double& ai, double& aj, bool same_sign, double gi, double gj, double qii, double qjj, double qij,
                 double c) {
    if (!same_sign) {
        double quad = qii + qjj + 2.0 * qij;
        if (quad <= 0.0) {
            quad = kTau;
        }
        const double delta = (-gi - gj) / quad;
        const double diff = ai - aj;
        ai += delta;
        aj += delta;
        if (diff > 0.0) {
            if (aj < 0.0) {
                aj = 0.0;
                ai = diff;
            }
        } else if (ai < 0.0) {
            ai = 0.0;
            aj = -diff;
        }
        if (diff > 0.0) {
            if (ai > c) {
                ai = c;
                aj = c - diff;
            }
        } else if (aj > c) {
            aj = c;
            ai = c + diff;
        }
    } else {
        double quad = qii + qjj - 2.0 * qij;
        if (quad <= 0.0) {
            quad = kTau;
        }
        const double delta = (gi - gj) / quad;
        const double sum = ai + aj;
        ai -= delta;
        aj += delta;
        if (sum > c) {
            if (ai > c) {
                ai = c;
                aj = sum - c;
            }
        } else if (aj < 0.0) {
            aj = 0.0;
            ai = sum;
        }
        if (sum > c) {
            if (aj > c) {
                aj = c;
                ai = sum - c;
            }
        } else if (ai < 0.0) {
            ai = 0.0;
            aj = sum;
        }
    }
}

// rho from the free variables (or the midpoint of the feasible interval) and
// the objective 1/2 a'Qa + p'a = 1/2 a'(g + p).
void finish_smo(SmoResult& r, const Vector& g, const Vector& p, const std::vector<signed char>& y, double c) {
    const Vector& a = r.alpha;
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < a.size(); ++t) {
        const double yg = static_cast<double>(y[static_cast<std::size_t>(t)]) * g[t];
        const bool pos = y[static_cast<std::size_t>(t)] > 0;
        if (a[t] >= c) {
            if (pos) {
                lb = std::max(lb, yg);
            } else {
                ub = std::min(ub, yg);
            }
        } else if (a[t] <= 0.0) {
            if (pos) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    if (n_free > 0) {
        r.rho = sum_free / n_free;
    } else if (std::isfinite(ub) && std::isfinite(lb)) {
        r.rho = 0.5 * (ub + lb);
    } else {
        r.rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
    }
    r.objective = 0.5 * a.dot(g + p);
}

using detail::v8d;

// Running arg-max over lanes; ties keep the smaller index so the result is the
// first maximum in index order.
struct LaneArgMax {
    v8d value = detail::splat(-std::numeric_limits<double>::infinity());
    v8d index = detail::splat(std::numeric_limits<double>::infinity());

    void offer(v8d v, v8d idx) {
        const auto take = (v > value) | ((v == value) & (idx < index));
        value = take ? v : value;
        index = take ? idx : index;
    }
    void merge(const LaneArgMax& other) { offer(other.value, other.index); }
    // (value, index) of the overall winner; index < 0 when nothing was offered.
    [[nodiscard]] std::pair<double, Eigen::Index> reduce() const {
        double best = -std::numeric_limits<double>::infinity();
        double at = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 8; ++k) {
            if (value[k] > best || (value[k] == best && index[k] < at)) {
                best = value[k];
                at = index[k];
            }
        }
        return {best, std::isfinite(at) && best > -std::numeric_limits<double>::infinity()
                          ? static_cast<Eigen::Index>(at)
                          : Eigen::Index{-1}};
    }
};

// The epsilon-SVR dual in stacked form (variables 0..n-1 are alpha with
// y = +1, n..2n-1 are alpha* with y = -1), solved by the same maximal
// violating pair SMO as solve_smo. Instead of the 2n-long gradient it keeps
// h = K (alpha - alpha*), from which g_t = h_t + eps - y_t and
// g_{n+t} = -h_t + eps + y_t, so each update touches two kernel rows of
// length n.
SmoResult solve_svr_smo(KernelCache& cache, const Vector& target, double eps, double c, const SmoOptions& options) {
    const Eigen::Index n = target.size();
    const Eigen::Index padded = (n + 31) / 32 * 32;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> y(static_cast<std::size_t>(padded), nan);  // NaN lanes never win a comparison
    std::vector<double> h(static_cast<std::size_t>(padded), 0.0);
    std::vector<double> a(static_cast<std::size_t>(padded), 0.0);
    std::vector<double> as(static_cast<std::size_t>(padded), 0.0);
    for (Eigen::Index t = 0; t < n; ++t) {
        y[static_cast<std::size_t>(t)] = target[t];
    }
    const v8d v_eps = detail::splat(eps);
    const v8d v_c = detail::splat(c);
    const v8d v_zero = detail::splat(0.0);
    const v8d v_n = detail::splat(static_cast<double>(n));
    const v8d v_ninf = detail::splat(-std::numeric_limits<double>::infinity());
    const v8d lane = {0, 1, 2, 3, 4, 5, 6, 7};
    const auto grad = [&](Eigen::Index t) {
        const auto s = static_cast<std::size_t>(t < n ? t : t - n);
        return t < n ? h[s] + eps - y[s] : -h[s] + eps + y[s];
    };
    const auto value_of = [&](Eigen::Index t) -> double& {
        return t < n ? a[static_cast<std::size_t>(t)] : as[static_cast<std::size_t>(t - n)];
    };

    SmoResult r;
    for (;;) {
        // Candidates -y_t g_t: alpha_s gives (y_s - h_s) - eps, alpha*_s gives (y_s - h_s) + eps.
        // Four independent accumulators per side hide the compare/blend latency.
        LaneArgMax up[4];
        LaneArgMax low[4];  // maximizes -(-y_t g_t)
        const auto block = [&](LaneArgMax& u, LaneArgMax& lo, Eigen::Index b) {
            const auto k = static_cast<std::size_t>(b);
            const v8d rv = detail::load(&y[k]) - detail::load(&h[k]);
            const v8d av = detail::load(&a[k]);
            const v8d asv = detail::load(&as[k]);
            const v8d idx = lane + detail::splat(static_cast<double>(b));
            const v8d minus = rv - v_eps;
            const v8d plus = rv + v_eps;
            // Per sample only the better of its two candidates can win; on a
            // tie (eps = 0) alpha_s has the smaller index.
            const auto star_up = (asv > v_zero) & ((plus > minus) | (av >= v_c));
            u.offer(star_up ? plus : (av < v_c ? minus : v_ninf), star_up ? idx + v_n : idx);
            const auto alpha_low = av > v_zero;
            lo.offer(alpha_low ? -minus : (asv < v_c ? -plus : v_ninf), alpha_low ? idx : idx + v_n);
        };
        for (Eigen::Index b = 0; b < padded; b += 32) {
            block(up[0], low[0], b);
            block(up[1], low[1], b + 8);
            block(up[2], low[2], b + 16);
            block(up[3], low[3], b + 24);
        }
        for (int q = 1; q < 4; ++q) {
            up[0].merge(up[q]);
            low[0].merge(low[q]);
        }
        const auto [gmax, i] = up[0].reduce();
        const auto [neg_gmin, j] = low[0].reduce();
        const double gmin = -neg_gmin;
        r.gap = (i < 0 || j < 0) ? 0.0 : gmax - gmin;
        if (i < 0 || j < 0 || gmax - gmin < options.tol) {
            break;
        }
        if (r.updates >= options.max_updates) {
            throw NonConvergence("SMO hit the cap of " + std::to_string(options.max_updates) + " pair updates",
                                 gmax - gmin);
        }
        ++r.updates;

        const Eigen::Index bi = i < n ? i : i - n;
        const Eigen::Index bj = j < n ? j : j - n;
        const double si = i < n ? 1.0 : -1.0;
        const double sj = j < n ? 1.0 : -1.0;
        const double* ki = cache.row(bi);
        const double* kj = cache.row(bj);
        double& ai = value_of(i);
        double& aj = value_of(j);
        const double ai_old = ai;
        const double aj_old = aj;
        pair_update(ai, aj, si == sj, grad(i), grad(j), 1.0, 1.0, si * sj * ki[bj], c);
        const v8d ci = detail::splat(si * (ai - ai_old));
        const v8d cj = detail::splat(sj * (aj - aj_old));
        Eigen::Index t = 0;
        for (; t + 8 <= n; t += 8) {
            const auto k = static_cast<std::size_t>(t);
            detail::store(&h[k], detail::load(&h[k]) + detail::load(ki + t) * ci + detail::load(kj + t) * cj);
        }
        for (; t < n; ++t) {
            h[static_cast<std::size_t>(t)] += ki[t] * ci[0] + kj[t] * cj[0];
        }
    }

    r.alpha.resize(2 * n);
    Vector g(2 * n);
    Vector p(2 * n);
    std::vector<signed char> sign(static_cast<std::size_t>(2 * n));
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto k = static_cast<std::size_t>(t);
        r.alpha[t] = a[k];
        r.alpha[t + n] = as[k];
        g[t] = grad(t);
        g[t + n] = grad(t + n);
        p[t] = eps - y[k];
        p[t + n] = eps + y[k];
        sign[k] = 1;
        sign[k + static_cast<std::size_t>(n)] = -1;
    }
    finish_smo(r, g, p, sign, c);
    return r;
}

}  // namespace

SmoResult solve_smo(const QMatrix& q, const Vector& p, const std::vector<signed char>& y, double c,
                    const SmoOptions& options) {
    const Eigen::Index l = q.size;
    if (p.size() != l || static_cast<Eigen::Index>(y.size()) != l) {
        throw InvalidArgument("solve_smo: size mismatch");
    }
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw InvalidArgument("solve_smo: penalty must be positive and finite");
    }
    SmoResult r;
    r.alpha = Vector::Zero(l);
    Vector& a = r.alpha;
    Vector g = p;  // gradient Qa + p at a = 0

    for (;;) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        Eigen::Index j = -1;
        for (Eigen::Index t = 0; t < l; ++t) {
            const bool pos = y[static_cast<std::size_t>(t)] > 0;
            const double v = pos ? -g[t] : g[t];
            const bool can_rise = a[t] < c;
            const bool can_fall = a[t] > 0.0;
            if ((pos ? can_rise : can_fall) && v > gmax) {
                gmax = v;
                i = t;
            }
            if ((pos ? can_fall : can_rise) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        r.gap = (i < 0 || j < 0) ? 0.0 : gmax - gmin;
        if (i < 0 || j < 0 || gmax - gmin < options.tol) {
            break;
        }
        if (r.updates >= options.max_updates) {
            throw NonConvergence("SMO hit the cap of " + std::to_string(options.max_updates) + " pair updates",
                                 gmax - gmin);
        }
        ++r.updates;

        const double* qi = q.row(i);
        const double* qj = q.row(j);
        const double ai_old = a[i];
        const double aj_old = a[j];
        pair_update(a[i], a[j], y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)], g[i], g[j],
                    q.diagonal(i), q.diagonal(j), qi[j], c);
        const double di = a[i] - ai_old;
        const double dj = a[j] - aj_old;
        // qi may have been evicted by fetching qj only if the cache held a
        // single row, which KernelCache never allows.
        for (Eigen::Index t = 0; t < l; ++t) {
            g[t] += qi[t] * di + qj[t] * dj;
        }
    }
    finish_smo(r, g, p, y, c);
    return r;
}

SvrModel svr_train(const Matrix& x, const Vector& y, double penalty, double epsilon, RbfKernel kernel,
                   const SmoOptions& options, SvrTrainInfo* info) {
    kernel.validate();
    const Eigen::Index n = x.rows();
    if (n < 2) {
        throw InvalidArgument("svr_train: need at least two samples");
    }
    if (y.size() != n) {
        throw InvalidArgument("svr_train: targets do not match samples");
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw InvalidArgument("svr_train: epsilon must be non-negative");
    }
    check_finite(x, "svr_train");
    if (!y.allFinite()) {
        throw InvalidArgument("svr_train: non-finite targets");
    }
    SvrModel model;
    model.kernel = kernel;
    model.penalty = penalty;
    model.epsilon = epsilon;
    model.support_vectors.resize(0, x.cols());

    if (y.maxCoeff() == y.minCoeff()) {
        model.bias = y.mean();
        if (info != nullptr) {
            *info = SvrTrainInfo{0.0, 0.0, 0, Vector::Zero(n), Vector::Zero(n)};
        }
        return model;
    }

    if (!(penalty > 0.0) || !std::isfinite(penalty)) {
        throw InvalidArgument("svr_train: penalty must be positive and finite");
    }
    KernelCache cache(x, kernel, options.cache_bytes);
    const SmoResult r = solve_svr_smo(cache, y, epsilon, penalty, options);

    std::vector<Eigen::Index> support;
    Vector coef(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        coef[i] = r.alpha[i] - r.alpha[i + n];
        if (std::abs(coef[i]) > kSupportThreshold) {
            support.push_back(i);
        }
    }
    model.support_vectors.resize(static_cast<Eigen::Index>(support.size()), x.cols());
    model.dual_coefs.resize(static_cast<Eigen::Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) {
        model.support_vectors.row(static_cast<Eigen::Index>(k)) = x.row(support[k]);
        model.dual_coefs[static_cast<Eigen::Index>(k)] = coef[support[k]];
    }
    model.bias = -r.rho;
    if (info != nullptr) {
        info->objective = r.objective;
        info->gap = r.gap;
        info->updates = r.updates;
        info->alpha = r.alpha.head(n);
        info->alpha_star = r.alpha.tail(n);
    }
    return model;
}

Vector svr_decision(const SvrModel& model, const Matrix& x) {
    if (model.support_vectors.rows() == 0) {
        return Vector::Constant(x.rows(), model.bias);
    }
    return kernel_expansion(model.support_vectors, model.dual_coefs, model.bias, model.kernel.gamma, x);
}

Vector svr_predict(const SvrModel& model, const Matrix& x, PredictOptions options) {
    Vector out = svr_decision(model, x);
    if (options.clip_nonneg) {
        out = out.cwiseMax(0.0);
    }
    if (options.cap_one) {
        out = out.cwiseMin(1.0);
    }
    return out;
}

std::size_t count_out_of_range(const Matrix& x) {
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        n += (v < -1e-9 || v > 1.0 + 1e-9) ? 1 : 0;
    }
    return n;
}

SvmModel svm_train(const Matrix& x, const std::vector<int>& labels, double penalty, RbfKernel kernel,
                   const SmoOptions& options) {
    kernel.validate();
    if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
        throw InvalidArgument("svm_train: labels do not match samples");
    }
    check_finite(x, "svm_train");
    const std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) {
        throw InvalidArgument("svm_train: need at least two distinct labels");
    }
    SvmModel model;
    model.kernel = kernel;
    model.penalty = penalty;
    model.classes.assign(present.begin(), present.end());
    for (std::size_t a = 0; a < model.classes.size(); ++a) {
        for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
            const int pos = model.classes[a];
            const int neg = model.classes[b];
            std::vector<Eigen::Index> rows;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == pos || labels[i] == neg) {
                    rows.push_back(static_cast<Eigen::Index>(i));
                }
            }
            const auto m = static_cast<Eigen::Index>(rows.size());
            Matrix sub(m, x.cols());
            std::vector<signed char> sign(rows.size());
            for (Eigen::Index k = 0; k < m; ++k) {
                sub.row(k) = x.row(rows[static_cast<std::size_t>(k)]);
                sign[static_cast<std::size_t>(k)] = labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])] == pos ? 1 : -1;
            }
            KernelCache cache(sub, kernel, options.cache_bytes);
            std::array<std::vector<double>, 2> buffers{std::vector<double>(rows.size()), std::vector<double>(rows.size())};
            int next_buffer = 0;
            QMatrix q;
            q.size = m;
            q.diagonal = [](Eigen::Index) { return 1.0; };
            q.row = [&](Eigen::Index t) -> const double* {
                const double* k = cache.row(t);
                auto& buf = buffers[static_cast<std::size_t>(next_buffer)];
                next_buffer ^= 1;
                const double st = sign[static_cast<std::size_t>(t)];
                for (Eigen::Index s = 0; s < m; ++s) {
                    buf[static_cast<std::size_t>(s)] = st * sign[static_cast<std::size_t>(s)] * k[s];
                }
                return buf.data();
            };
            const SmoResult r = solve_smo(q, Vector::Constant(m, -1.0), sign, penalty, options);

            SvmBinary bin;
            bin.positive = pos;
            bin.negative = neg;
            std::vector<Eigen::Index> support;
            for (Eigen::Index k = 0; k < m; ++k) {
                if (r.alpha[k] > kSupportThreshold) {
                    support.push_back(k);
                }
            }
            bin.support_vectors.resize(static_cast<Eigen::Index>(support.size()), x.cols());
            bin.dual_coefs.resize(static_cast<Eigen::Index>(support.size()));
            for (std::size_t k = 0; k < support.size(); ++k) {
                bin.support_vectors.row(static_cast<Eigen::Index>(k)) = sub.row(support[k]);
                bin.dual_coefs[static_cast<Eigen::Index>(k)] =
                    sign[static_cast<std::size_t>(support[k])] * r.alpha[support[k]];
            }
            bin.bias = -r.rho;
            model.classifiers.push_back(std::move(bin));
        }
    }
    return model;
}

int vote_winner(const std::vector<int>& votes, const std::vector<int>& classes) {
    if (votes.empty() || votes.size() != classes.size()) {
        throw InvalidArgument("vote_winner: votes and classes differ");
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < votes.size(); ++k) {
        if (votes[k] > votes[best]) {
            best = k;
        }
    }
    return classes[best];
}

std::vector<int> svm_predict(const SvmModel& model, const Matrix& x) {
    if (model.classes.empty()) {
        throw InvalidArgument("svm_predict: model has no classes");
    }
    std::map<int, std::size_t> index;
    for (std::size_t k = 0; k < model.classes.size(); ++k) {
        index[model.classes[k]] = k;
    }
    std::vector<std::vector<int>> votes(static_cast<std::size_t>(x.rows()), std::vector<int>(model.classes.size(), 0));
    for (const auto& bin : model.classifiers) {
        const Vector f = bin.support_vectors.rows() == 0
                             ? Vector::Constant(x.rows(), bin.bias)
                             : kernel_expansion(bin.support_vectors, bin.dual_coefs, bin.bias, model.kernel.gamma, x);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int winner = f[i] > 0.0 ? bin.positive : bin.negative;
            ++votes[static_cast<std::size_t>(i)][index.at(winner)];
        }
    }
    std::vector<int> out;
    out.reserve(votes.size());
    for (const auto& v : votes) {
        out.push_back(vote_winner(v, model.classes));
    }
    return out;
}

double r2_score(const Vector& y_true, const Vector& y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw InvalidArgument("r2_score: size mismatch");
    }
    if (y_true.size() < 2) {
        throw InvalidArgument("r2_score: need at least two samples");
    }
    const double mean = y_true.mean();
    const double ss_tot = (y_true.array() - mean).square().sum();
    if (!(ss_tot > 0.0)) {
        throw InvalidArgument("r2_score: y_true has zero variance");
    }
    const double ss_res = (y_true - y_pred).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

double f1_macro(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw InvalidArgument("f1_macro: size mismatch");
    }
    if (y_true.size() < 2) {
        throw InvalidArgument("f1_macro: need at least two samples");
    }
    std::set<int> labels(y_true.begin(), y_true.end());
    labels.insert(y_pred.begin(), y_pred.end());
    double total = 0.0;
    for (int c : labels) {
        double tp = 0.0;
        double fp = 0.0;
        double fn = 0.0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool t = y_true[i] == c;
            const bool p = y_pred[i] == c;
            tp += (t && p) ? 1.0 : 0.0;
            fp += (!t && p) ? 1.0 : 0.0;
            fn += (t && !p) ? 1.0 : 0.0;
        }
        const double denom = 2.0 * tp + fp + fn;
        total += denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return total / static_cast<double>(labels.size());
}

EnsembleBand ensemble_predict(const std::vector<SvrModel>& models, const Matrix& x, PredictOptions options) {
    if (models.empty()) {
        throw InvalidArgument("ensemble_predict: no models");
    }
    EnsembleBand band;
    band.mean = Vector::Zero(x.rows());
    band.lo = Vector::Constant(x.rows(), std::numeric_limits<double>::infinity());
    band.hi = Vector::Constant(x.rows(), -std::numeric_limits<double>::infinity());
    for (const auto& m : models) {
        const Vector p = svr_predict(m, x, options);
        band.mean += p;
        band.lo = band.lo.cwiseMin(p);
        band.hi = band.hi.cwiseMax(p);
    }
    band.mean /= static_cast<double>(models.size());
    // Keep lo <= mean <= hi despite the rounding of the division.
    band.mean = band.mean.cwiseMax(band.lo).cwiseMin(band.hi);
    return band;
}

std::vector<HyperParams> default_grid() {
    std::vector<HyperParams> grid;
    for (double p : {1.0, 10.0, 1e2, 1e3, 1e4}) {
        for (double g : {0.1, 1e-2, 1e-3, 1e-4}) {
            for (double e : {0.1, 1e-2, 1e-3, 1e-4}) {
                grid.push_back({p, g, e});
            }
        }
    }
    return grid;
}

nlohmann::json to_json(const SvrModel& model) {
    return {
        {"type", "svr"},
        {"kernel", {{"gamma", model.kernel.gamma}}},
        {"hyperparams", {{"P", model.penalty}, {"eps", model.epsilon}}},
        {"scaling", scaling_to_json(model.scaling)},
        {"feature_names", model.feature_names},
        {"support_vectors", matrix_to_json(model.support_vectors)},
        {"dual_coefs", vector_to_json(model.dual_coefs)},
        {"bias", model.bias},
    };
}

nlohmann::json to_json(const SvmModel& model) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& bin : model.classifiers) {
        blocks.push_back({
            {"class_pair", {bin.positive, bin.negative}},
            {"support_vectors", matrix_to_json(bin.support_vectors)},
            {"dual_coefs", vector_to_json(bin.dual_coefs)},
            {"bias", bin.bias},
        });
    }
    return {
        {"type", "svm"},
        {"kernel", {{"gamma", model.kernel.gamma}}},
        {"hyperparams", {{"P", model.penalty}}},
        {"scaling", scaling_to_json(model.scaling)},
        {"feature_names", model.feature_names},
        {"classes", model.classes},
        {"classifiers", std::move(blocks)},
    };
}

SvrModel svr_from_json(const nlohmann::json& j) {
    try {
        if (j.at("type") != "svr") {
            throw IoError("model file: expected type svr");
        }
        SvrModel m;
        m.kernel.gamma = j.at("kernel").at("gamma").get<double>();
        m.penalty = j.at("hyperparams").at("P").get<double>();
        m.epsilon = j.at("hyperparams").at("eps").get<double>();
        m.scaling = scaling_from_json(j.at("scaling"));
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.dual_coefs = vector_from_json(j.at("dual_coefs"));
        const Eigen::Index cols = m.feature_names.empty() ? -1 : static_cast<Eigen::Index>(m.feature_names.size());
        m.support_vectors = matrix_from_json(j.at("support_vectors"), cols);
        m.bias = j.at("bias").get<double>();
        if (m.support_vectors.rows() != m.dual_coefs.size()) {
            throw IoError("model file: support vectors and dual coefficients differ in count");
        }
        m.kernel.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model file: ") + e.what());
    }
}

SvmModel svm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("type") != "svm") {
            throw IoError("model file: expected type svm");
        }
        SvmModel m;
        m.kernel.gamma = j.at("kernel").at("gamma").get<double>();
        m.penalty = j.at("hyperparams").at("P").get<double>();
        m.scaling = scaling_from_json(j.at("scaling"));
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.classes = j.at("classes").get<std::vector<int>>();
        const Eigen::Index cols = m.feature_names.empty() ? -1 : static_cast<Eigen::Index>(m.feature_names.size());
        for (const auto& b : j.at("classifiers")) {
            SvmBinary bin;
            const auto pair = b.at("class_pair").get<std::vector<int>>();
            if (pair.size() != 2) {
                throw IoError("model file: class_pair must have two entries");
            }
            bin.positive = pair[0];
            bin.negative = pair[1];
            bin.support_vectors = matrix_from_json(b.at("support_vectors"), cols);
            bin.dual_coefs = vector_from_json(b.at("dual_coefs"));
            bin.bias = b.at("bias").get<double>();
            if (bin.support_vectors.rows() != bin.dual_coefs.size()) {
                throw IoError("model file: support vectors and dual coefficients differ in count");
            }
            m.classifiers.push_back(std::move(bin));
        }
        m.kernel.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const SvrModel& model) {
    io::write_text_atomic(path, to_json(model).dump() + "\n");
}

void save_model(const std::filesystem::path& path, const SvmModel& model) {
    io::write_text_atomic(path, to_json(model).dump() + "\n");
}

SvrModel load_svr(const std::filesystem::path& path) {
    try {
        return svr_from_json(nlohmann::json::parse(io::read_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

SvmModel load_svm(const std::filesystem::path& path) {
    try {
        return svm_from_json(nlohmann::json::parse(io::read_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace mixrom::ml
