#include "mixrom/box_qp.hpp"
#include "mixrom/error.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mixrom;
using namespace mixrom::fem;

namespace {

SparseMatrix sparse(const Eigen::MatrixXd& d) { return d.sparseView(); }

}  // namespace

TEST(BoxQp, MatchesEnumerationOnRandomProblems) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 6);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> width(0.1, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = dim(rng);
        const Eigen::MatrixXd h = oracle::random_spd(n, rng);
        Vector g(n);
        Vector lo(n);
        Vector hi(n);
        for (int i = 0; i < n; ++i) {
            g[i] = 5.0 * normal(rng);
            lo[i] = normal(rng);
            hi[i] = lo[i] + width(rng);
        }
        const Vector ref = oracle::box_qp_enumerate(h, g, lo, hi);
        const Vector x = solve_box_qp(sparse(h), g, BoxBounds{lo, hi});
        EXPECT_LT((x - ref).lpNorm<Eigen::Infinity>(), 1e-8) << "trial " << trial;
    }
}

TEST(BoxQp, FrozenTwoDimensionalCase) {
    // min 1/2 x'Hx - g'x on [0,1]^2 with H = [[2,1],[1,2]], g = (3,-1):
    // the unconstrained minimizer (7/3,-5/3) is infeasible; enumeration gives (1, 0).
    Eigen::MatrixXd h(2, 2);
    h << 2, 1, 1, 2;
    const Vector g = Vector{{3.0, -1.0}};
    const Vector x = solve_box_qp(sparse(h), g, BoxBounds::uniform(2, 0.0, 1.0));
    EXPECT_NEAR(x[0], 1.0, 1e-12);
    EXPECT_NEAR(x[1], 0.0, 1e-12);
}

TEST(BoxQp, UnboundedIsLinearSolve) {
    std::mt19937_64 rng(7);
    const Eigen::MatrixXd h = oracle::random_spd(5, rng);
    const Vector g = Vector::LinSpaced(5, -1.0, 1.0);
    const Vector x = solve_box_qp(sparse(h), g, BoxBounds::unbounded(5));
    EXPECT_LT((h * x - g).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(BoxQp, WarmStartGivesSameAnswer) {
    std::mt19937_64 rng(11);
    const Eigen::MatrixXd h = oracle::random_spd(6, rng);
    const Vector g = 4.0 * Vector::LinSpaced(6, -1.0, 1.0);
    BoxQpSolver solver(sparse(h));
    const BoxBounds b = BoxBounds::uniform(6, -0.2, 0.2);
    const BoxQpResult cold = solver.solve(g, b);
    const BoxQpResult warm = solver.solve(g, b, {}, &cold.active);
    EXPECT_LT((cold.x - warm.x).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LE(warm.iterations, cold.iterations);
    EXPECT_LE(solver.kkt_violation(warm.x, g, b), 1e-9);
}

TEST(BoxQp, ValidatesInput) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_THROW((void)solve_box_qp(sparse(h), Vector::Zero(2), BoxBounds{Vector::Ones(2), Vector::Zero(2)}),
                 InvalidArgument);
    EXPECT_THROW((void)solve_box_qp(sparse(h), Vector::Zero(3), BoxBounds::uniform(3, 0, 1)), InvalidArgument);
    h(1, 1) = -1.0;
    EXPECT_THROW((void)solve_box_qp(sparse(h), Vector::Ones(2), BoxBounds::unbounded(2)), NumericalError);
}
