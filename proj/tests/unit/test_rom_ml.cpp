#include "mixrom/error.hpp"
#include "mixrom/rom_ml.hpp"
#include "mixrom/vec_math.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mixrom;
using ml::Matrix;
using ml::Vector;

namespace {

Matrix random_points(int n, int d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            x(i, j) = u(rng);
        }
    }
    return x;
}

Matrix gram(const Matrix& x, double gamma) {
    Matrix k(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            k(i, j) = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
        }
    }
    return k;
}

ml::SmoOptions tight() {
    ml::SmoOptions o;
    o.tol = 1e-10;
    return o;
}

}  // namespace

TEST(VecMath, ExpMatchesStdExp) {
    std::vector<double> xs;
    for (int i = 0; i <= 20000; ++i) {
        xs.push_back(-707.0 * i / 20000.0);
    }
    xs.push_back(-1e-300);
    std::vector<double> ys = xs;
    detail::exp_nonpositive_inplace(ys.data(), ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double ref = std::exp(xs[i]);
        EXPECT_LE(std::abs(ys[i] - ref), 8e-16 * ref) << xs[i];
    }
    std::vector<double> edge{-709.0, -1e4, 0.0, 3.0};
    detail::exp_nonpositive_inplace(edge.data(), edge.size());
    EXPECT_EQ(edge[0], 0.0);
    EXPECT_EQ(edge[1], 0.0);
    EXPECT_EQ(edge[2], 1.0);
    EXPECT_EQ(edge[3], 1.0);
}

TEST(Scaler, RoundTripAndConstantColumn) {
    Matrix raw(3, 2);
    raw << 1, 5, 2, 5, 4, 5;
    const auto s = ml::MinMaxScaler::fit(raw);
    const Matrix t = s.transform(raw);
    EXPECT_DOUBLE_EQ(t(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(t(1, 0), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(t(2, 0), 1.0);
    EXPECT_TRUE(s.is_constant(1));
    EXPECT_EQ(t.col(1).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((s.inverse(t).col(0) - raw.col(0)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(ml::count_out_of_range(s.transform(raw * 2.0)), 1u);
}

TEST(KernelCache, RowsMatchDirectKernelUnderEviction) {
    std::mt19937_64 rng(3);
    const Matrix x = random_points(40, 3, rng);
    const ml::RbfKernel k{0.7};
    ml::KernelCache cache(x, k, 3 * 40 * sizeof(double));
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double* row = cache.row(i);
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                EXPECT_NEAR(row[j], ml::rbf_kernel(x.row(i), x.row(j), k), 1e-15);
            }
        }
    }
    EXPECT_GE(cache.misses(), 80u);
}

TEST(Smo, MatchesEnumeratedClassificationDual) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 7;
        const Matrix x = random_points(n, 2, rng);
        const Matrix k = gram(x, 2.0);
        std::vector<signed char> y(n);
        Vector yv(n);
        for (int i = 0; i < n; ++i) {
            y[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 1 : -1;
            yv[i] = y[static_cast<std::size_t>(i)];
        }
        const Matrix q = yv.asDiagonal() * k * yv.asDiagonal();
        const Vector p = Vector::Constant(n, -1.0);
        const double cap = trial % 2 == 0 ? 1.0 : 50.0;
        ml::QMatrix qm;
        qm.size = n;
        qm.row = [&](Eigen::Index i) { return q.data() + i * n; };  // symmetric, column i == row i
        qm.diagonal = [&](Eigen::Index i) { return q(i, i); };
        const ml::SmoResult r = ml::solve_smo(qm, p, y, cap, tight());
        const oracle::DualSolution ref = oracle::dual_enumerate(q, p, yv, cap);
        ASSERT_TRUE(std::isfinite(ref.objective));
        EXPECT_NEAR(r.objective, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective)));
        EXPECT_NEAR(0.5 * r.alpha.dot(q * r.alpha) + p.dot(r.alpha), r.objective, 1e-9);
        EXPECT_LE(std::abs(yv.dot(r.alpha)), 1e-8);
        EXPECT_GE(r.alpha.minCoeff(), -1e-8);
        EXPECT_LE(r.alpha.maxCoeff(), cap + 1e-8);
    }
}

TEST(Svr, MatchesEnumeratedDual) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 5;
        const Matrix x = random_points(n, 1, rng);
        Vector y(n);
        for (int i = 0; i < n; ++i) {
            y[i] = std::sin(3.0 * x(i, 0)) + noise(rng);
        }
        const double eps = 0.05;
        const double cap = trial < 3 ? 1.0 : 100.0;
        ml::SvrTrainInfo info;
        const ml::SvrModel m = ml::svr_train(x, y, cap, eps, ml::RbfKernel{1.5}, tight(), &info);

        const Matrix k = gram(x, 1.5);
        Matrix q(2 * n, 2 * n);
        q << k, -k, -k, k;
        Vector p(2 * n);
        p << Vector::Constant(n, eps) - y, Vector::Constant(n, eps) + y;
        Vector ys(2 * n);
        ys << Vector::Ones(n), -Vector::Ones(n);
        const oracle::DualSolution ref = oracle::svr_dual_enumerate(q, p, ys, cap);
        ASSERT_TRUE(std::isfinite(ref.objective));
        Vector a(2 * n);
        a << info.alpha, info.alpha_star;
        EXPECT_NEAR(0.5 * a.dot(q * a) + p.dot(a), ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective)));
        EXPECT_LE(std::abs(info.alpha.sum() - info.alpha_star.sum()), 1e-8);
        EXPECT_GE(a.minCoeff(), -1e-8);
        EXPECT_LE(a.maxCoeff(), cap + 1e-8);
        EXPECT_LE(m.num_support(), n);
    }
}

TEST(Svr, TwoPointAnalyticSolution) {
    Matrix x(2, 1);
    x << 0.0, 1.0;
    Vector y(2);
    y << 0.0, 1.0;
    const double gamma = 1.0;
    const double eps = 0.1;
    const ml::SvrModel m = ml::svr_train(x, y, 10.0, eps, ml::RbfKernel{gamma}, tight());
    const double c = (0.5 - eps) / (1.0 - std::exp(-gamma));
    ASSERT_EQ(m.num_support(), 2);
    EXPECT_NEAR(m.bias, 0.5, 1e-8);
    for (Eigen::Index i = 0; i < 2; ++i) {
        const double expect = m.support_vectors(i, 0) == 0.0 ? -c : c;
        EXPECT_NEAR(m.dual_coefs[i], expect, 1e-8);
    }
    const Vector f = ml::svr_decision(m, x);
    EXPECT_NEAR(f[0], eps, 1e-8);
    EXPECT_NEAR(f[1], 1.0 - eps, 1e-8);
}

TEST(Svr, ConstantTargetsGiveBiasOnlyModel) {
    std::mt19937_64 rng(1);
    const Matrix x = random_points(10, 2, rng);
    const ml::SvrModel m = ml::svr_train(x, Vector::Constant(10, 0.4), 1.0, 0.1, ml::RbfKernel{0.1});
    EXPECT_EQ(m.num_support(), 0);
    EXPECT_DOUBLE_EQ(ml::svr_predict(m, x)[3], 0.4);
}

TEST(Svr, PredictClipsToUnitInterval) {
    Matrix x(2, 1);
    x << 0.0, 1.0;
    Vector y(2);
    y << -0.5, 1.5;
    const ml::SvrModel m = ml::svr_train(x, y, 100.0, 0.0, ml::RbfKernel{1.0}, tight());
    const Vector raw = ml::svr_decision(m, x);
    const Vector clipped = ml::svr_predict(m, x);
    EXPECT_LT(raw[0], -0.4);
    EXPECT_GT(raw[1], 1.4);
    EXPECT_EQ(clipped[0], 0.0);
    EXPECT_EQ(clipped[1], 1.0);
}

TEST(Svr, JsonRoundTripPredictsIdentically) {
    std::mt19937_64 rng(2);
    const Matrix x = random_points(30, 3, rng);
    Vector y(30);
    for (int i = 0; i < 30; ++i) {
        y[i] = 0.5 + 0.3 * std::sin(4.0 * x(i, 0)) * x(i, 1);
    }
    ml::SvrModel m = ml::svr_train(x, y, 10.0, 0.01, ml::RbfKernel{1.0});
    m.feature_names = {"a", "b", "c"};
    m.scaling = ml::MinMaxScaler::fit(x);
    const ml::SvrModel back = ml::svr_from_json(nlohmann::json::parse(ml::to_json(m).dump()));
    EXPECT_EQ(back.feature_names, m.feature_names);
    EXPECT_EQ(back.scaling.mins, m.scaling.mins);
    const Vector a = ml::svr_decision(m, x);
    const Vector b = ml::svr_decision(back, x);
    EXPECT_EQ(a, b);
}

TEST(Svm, SeparatesBlobsAndRoundTrips) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01(0.0, 0.04);
    const double centres[3][2] = {{0.2, 0.2}, {0.8, 0.3}, {0.5, 0.85}};
    Matrix x(60, 2);
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        const int c = i % 3;
        x(i, 0) = centres[c][0] + n01(rng);
        x(i, 1) = centres[c][1] + n01(rng);
        labels.push_back(c + 1);
    }
    const ml::SvmModel m = ml::svm_train(x, labels, 10.0, ml::RbfKernel{5.0});
    EXPECT_EQ(m.classes, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(m.classifiers.size(), 3u);
    EXPECT_EQ(ml::svm_predict(m, x), labels);
    EXPECT_DOUBLE_EQ(ml::f1_macro(labels, ml::svm_predict(m, x)), 1.0);
    const ml::SvmModel back = ml::svm_from_json(nlohmann::json::parse(ml::to_json(m).dump()));
    EXPECT_EQ(ml::svm_predict(back, x), labels);
    EXPECT_THROW((void)ml::svm_train(x, std::vector<int>(60, 2), 1.0, ml::RbfKernel{1.0}), InvalidArgument);
}

TEST(Metrics, R2AndF1AndVotes) {
    Vector t(4);
    t << 1, 2, 3, 4;
    EXPECT_DOUBLE_EQ(ml::r2_score(t, t), 1.0);
    EXPECT_DOUBLE_EQ(ml::r2_score(t, Vector::Constant(4, 2.5)), 0.0);
    EXPECT_THROW((void)ml::r2_score(Vector::Ones(4), t), InvalidArgument);
    EXPECT_NEAR(ml::f1_macro({1, 1, 2, 2}, {1, 2, 2, 2}), (2.0 / 3.0 + 0.8) / 2.0, 1e-15);
    EXPECT_EQ(ml::vote_winner({2, 2, 1}, {1, 2, 3}), 1);
    EXPECT_EQ(ml::vote_winner({0, 1, 2}, {1, 2, 3}), 3);
}

TEST(Ensemble, BandIsMeanMinMax) {
    std::mt19937_64 rng(4);
    const Matrix x = random_points(5, 2, rng);
    std::vector<ml::SvrModel> models;
    for (double level : {0.2, 0.6, 0.4}) {
        models.push_back(ml::svr_train(x, Vector::Constant(5, level), 1.0, 0.1, ml::RbfKernel{0.1}));
    }
    const ml::EnsembleBand b = ml::ensemble_predict(models, x);
    for (Eigen::Index i = 0; i < 5; ++i) {
        EXPECT_NEAR(b.mean[i], 0.4, 1e-15);
        EXPECT_DOUBLE_EQ(b.lo[i], 0.2);
        EXPECT_DOUBLE_EQ(b.hi[i], 0.6);
    }
}

TEST(Grid, DefaultGridHasEightyPoints) {
    const auto g = ml::default_grid();
    EXPECT_EQ(g.size(), 80u);
    EXPECT_DOUBLE_EQ(g.front().penalty, 1.0);
    EXPECT_DOUBLE_EQ(g.back().penalty, 1e4);
}
