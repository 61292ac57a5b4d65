#include "mixrom/error.hpp"
#include "mixrom/feature_analysis.hpp"
#include "mixrom/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mixrom;
using features::Matrix;
using features::Vector;

namespace {

Matrix uniform_matrix(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            x(i, j) = rng.uniform();
        }
    }
    return x;
}

const std::vector<std::string> kThree{"a", "b", "c"};

}  // namespace

TEST(Scaling, MinMaxScale) {
    Matrix raw(3, 2);
    raw << -1, 7, 0, 7, 3, 7;
    const auto s = features::minmax_scale(raw);
    EXPECT_DOUBLE_EQ(s.scaled(1, 0), 0.25);
    EXPECT_EQ(s.constant, (std::vector<bool>{false, true}));
    EXPECT_EQ(s.scaled.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ranking, DescendingAndStable) {
    EXPECT_EQ(features::rank_descending({0.1, 0.5, 0.5, 0.2}), (std::vector<int>{1, 2, 3, 0}));
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_EQ(features::rank_descending({1.0, inf, 0.0}), (std::vector<int>{1, 0, 2}));
    EXPECT_EQ(features::parse_method("rf"), features::ImportanceMethod::kRandomForest);
    EXPECT_EQ(features::parse_method("mutual_info"), features::ImportanceMethod::kMutualInfo);
    EXPECT_THROW((void)features::parse_method("gini"), InvalidArgument);
}

TEST(FTest, MatchesClosedFormAndRanksLinearFirst) {
    const Matrix x = uniform_matrix(200, 3, 1);
    Rng rng(2);
    Vector y(200);
    for (int i = 0; i < 200; ++i) {
        y[i] = 3.0 * x(i, 1) + 0.3 * x(i, 2) + 0.1 * rng.normal();
    }
    const auto r = features::f_test_importance(x, y, kThree);
    EXPECT_EQ(r.ranking.front(), 1);
    for (int j = 0; j < 3; ++j) {
        const Vector xc = x.col(j).array() - x.col(j).mean();
        const Vector yc = y.array() - y.mean();
        const double corr = xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
        EXPECT_NEAR(r.scores[static_cast<std::size_t>(j)], corr * corr / (1 - corr * corr) * 198.0,
                    1e-9 * (1.0 + r.scores[static_cast<std::size_t>(j)]));
    }
    EXPECT_EQ(r.rank_of("b"), 1);
}

TEST(FTest, PerfectFitIsInfiniteAndSymmetricIsNearZero) {
    Matrix x(101, 2);
    Vector y(101);
    for (int i = 0; i <= 100; ++i) {
        const double v = -1.0 + i / 50.0;
        x(i, 0) = v;
        x(i, 1) = v;
        y[i] = v * v;
    }
    x.col(0) = y;
    const auto r = features::f_test_importance(x, y, {"sq", "lin"});
    EXPECT_TRUE(std::isinf(r.scores[0]));
    EXPECT_LT(r.scores[1], 1e-20);
}

TEST(FTest, NullDistributionTail) {
    // Under independence F is F(1, n-2) distributed: P(F > 3.89) ~ 0.05 for n = 200.
    const Matrix x = uniform_matrix(200, 1, 7);
    Rng rng(8);
    int exceed = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Vector y(200);
        for (int i = 0; i < 200; ++i) {
            y[i] = rng.normal();
        }
        exceed += features::f_test_importance(x, y, {"x"}).scores[0] > 3.89 ? 1 : 0;
    }
    EXPECT_GT(exceed, 30);
    EXPECT_LT(exceed, 75);
}

TEST(MutualInfo, IndependentDependentAndNonlinear) {
    const Matrix x = uniform_matrix(1000, 2, 3);
    const Vector a = x.col(0);
    const Vector b = x.col(1);
    EXPECT_LE(features::mutual_info(a, b, 3, 1), 0.05);
    EXPECT_GT(features::mutual_info(a, a, 3, 1), 1.0);
    const Vector centred = a.array() - 0.5;
    const Vector sq = centred.array().square();
    EXPECT_GT(features::mutual_info(centred, sq, 3, 1), 0.5);
    EXPECT_EQ(features::mutual_info(a, b, 3, 1), features::mutual_info(a, b, 3, 1));
}

TEST(MutualInfo, GaussianMatchesAnalyticValue) {
    // I = -1/2 ln(1 - rho^2) for a bivariate normal.
    Rng rng(21);
    const double rho = 0.8;
    Vector x(3000);
    Vector y(3000);
    for (int i = 0; i < 3000; ++i) {
        x[i] = rng.normal();
        y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
    }
    EXPECT_NEAR(features::mutual_info(x, y, 3, 4), -0.5 * std::log(1 - rho * rho), 0.04);
}

TEST(RandomForest, StepFunctionDominates) {
    const Matrix x = uniform_matrix(300, 3, 5);
    Vector y(300);
    for (int i = 0; i < 300; ++i) {
        y[i] = x(i, 2) > 0.5 ? 1.0 : 0.0;
    }
    features::ForestOptions o;
    o.n_trees = 30;
    o.seed = 3;
    const auto r = features::random_forest_importance(x, y, kThree, o);
    EXPECT_GT(r.scores[2], 0.9);
    EXPECT_NEAR(r.scores[0] + r.scores[1] + r.scores[2], 1.0, 1e-12);
    EXPECT_EQ(r.ranking.front(), 2);

    features::RandomForest f;
    f.fit(x, y, o);
    EXPECT_EQ(f.num_trees(), 30u);
    const Vector p = f.predict(x);
    EXPECT_LE((p - y).cwiseAbs().maxCoeff(), 1e-12);

    const auto again = features::random_forest_importance(x, y, kThree, o);
    EXPECT_EQ(again.scores, r.scores);
}

TEST(RandomForest, ConstantTargetIsDegenerate) {
    const Matrix x = uniform_matrix(20, 3, 6);
    features::RandomForest f;
    f.fit(x, Vector::Constant(20, 2.0), {});
    EXPECT_TRUE(f.degenerate());
    EXPECT_EQ(f.importances(), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(KMeans, FindsSeparatedBlobs) {
    Rng rng(12);
    Matrix p(90, 2);
    const double centres[3][2] = {{0, 0}, {5, 0}, {0, 5}};
    for (int i = 0; i < 90; ++i) {
        p(i, 0) = centres[i / 30][0] + 0.2 * rng.normal();
        p(i, 1) = centres[i / 30][1] + 0.2 * rng.normal();
    }
    const auto c = features::fit_kmeans(p, 3, 4);
    for (int blob = 0; blob < 3; ++blob) {
        for (int i = 1; i < 30; ++i) {
            EXPECT_EQ(c.assignments[static_cast<std::size_t>(blob * 30 + i)],
                      c.assignments[static_cast<std::size_t>(blob * 30)]);
        }
    }
    EXPECT_NE(c.assignments[0], c.assignments[30]);
    EXPECT_NE(c.assignments[30], c.assignments[60]);
    EXPECT_GT(c.explained_variance_fraction, 0.99);
    EXPECT_NEAR(c.within_ss + (c.total_ss - c.within_ss), c.total_ss, 1e-12);

    const auto elbow = features::elbow_select(p, 6, 4);
    EXPECT_EQ(elbow.k, 3);
    for (std::size_t i = 1; i < elbow.fits.size(); ++i) {
        EXPECT_GE(elbow.fits[i].explained_variance_fraction, elbow.fits[i - 1].explained_variance_fraction - 1e-12);
    }
}

TEST(KMeans, EdgeCases) {
    const Matrix p = uniform_matrix(6, 2, 2);
    const auto all = features::fit_kmeans(p, 6, 1);
    EXPECT_NEAR(all.explained_variance_fraction, 1.0, 1e-12);
    EXPECT_NEAR(features::fit_kmeans(p, 1, 1).explained_variance_fraction, 0.0, 1e-12);
    EXPECT_THROW((void)features::fit_kmeans(p, 7, 1), InvalidArgument);
    EXPECT_THROW((void)features::fit_kmeans(p, 0, 1), InvalidArgument);
    const auto same = features::fit_kmeans(Matrix::Ones(5, 2), 2, 1);
    EXPECT_DOUBLE_EQ(same.explained_variance_fraction, 1.0);
    EXPECT_EQ(features::fit_kmeans(p, 3, 9).assignments, features::fit_kmeans(p, 3, 9).assignments);
}

TEST(Labels, MixingClasses) {
    EXPECT_EQ(features::label_mixing_class(0.0), 1);
    EXPECT_EQ(features::label_mixing_class(0.2499), 1);
    EXPECT_EQ(features::label_mixing_class(0.25), 2);
    EXPECT_EQ(features::label_mixing_class(0.5), 3);
    EXPECT_EQ(features::label_mixing_class(0.75), 4);
    EXPECT_EQ(features::label_mixing_class(1.0), 4);
    EXPECT_THROW((void)features::label_mixing_class(1.01), InvalidArgument);
    EXPECT_THROW((void)features::label_mixing_class(-0.01), InvalidArgument);
}
