#include "mixrom/assembly.hpp"
#include "mixrom/error.hpp"
#include "mixrom/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mixrom;
using namespace mixrom::fem;

namespace {

// Stiffness of one linear triangle, written out from the vertex coordinates.
Eigen::Matrix3d element_stiffness(const Point2& a, const Point2& b, const Point2& c, double dxx, double dyy) {
    const double area2 = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    const double gx[3] = {(b.y - c.y) / area2, (c.y - a.y) / area2, (a.y - b.y) / area2};
    const double gy[3] = {(c.x - b.x) / area2, (a.x - c.x) / area2, (b.x - a.x) / area2};
    Eigen::Matrix3d k;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            k(i, j) = 0.5 * area2 * (dxx * gx[i] * gx[j] + dyy * gy[i] * gy[j]);
        }
    }
    return k;
}

}  // namespace

TEST(Mesh, CountsAndOrientation) {
    const Mesh mesh = build_mesh(5, 2.0);
    EXPECT_EQ(mesh.num_nodes(), 25u);
    EXPECT_EQ(mesh.num_triangles(), 32u);
    double area = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        EXPECT_GT(mesh.signed_area(t), 0.0);
        area += mesh.signed_area(t);
    }
    EXPECT_NEAR(area, 4.0, 1e-14);
    EXPECT_DOUBLE_EQ(mesh.spacing(), 0.5);
    EXPECT_EQ(mesh.node_index(4, 4), 24);
}

TEST(Mesh, RejectsDegenerateInput) {
    EXPECT_THROW((void)build_mesh(1, 1.0), InvalidArgument);
    EXPECT_THROW((void)build_mesh(3, 0.0), InvalidArgument);
}

TEST(Assembly, HandAssembledDiagonalTensorOnThreeByThree) {
    const Mesh mesh = build_mesh(3, 1.0);
    const AssembledSystem sys = assemble(mesh, [](const Point2&, double) { return SymTensor2{2.0, 0.0, 1.0}; }, 0.0);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(9, 9);
    for (const auto& tri : mesh.triangles()) {
        const auto& n = mesh.nodes();
        const Eigen::Matrix3d k = element_stiffness(n[tri[0]], n[tri[1]], n[tri[2]], 2.0, 1.0);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                expected(tri[i], tri[j]) += k(i, j);
            }
        }
    }
    const Eigen::MatrixXd got = Eigen::MatrixXd(sys.diffusion);
    EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-13);

    // Five-point stencil at the centre node: 2(dxx + dyy), -dxx, -dyy, 0 on diagonals.
    const int c = mesh.node_index(1, 1);
    EXPECT_NEAR(got(c, c), 6.0, 1e-13);
    EXPECT_NEAR(got(c, mesh.node_index(0, 1)), -2.0, 1e-13);
    EXPECT_NEAR(got(c, mesh.node_index(1, 0)), -1.0, 1e-13);
    EXPECT_NEAR(got(c, mesh.node_index(2, 2)), 0.0, 1e-13);
    EXPECT_LT(got.rowwise().sum().cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((got - got.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Assembly, ConsistentMass) {
    const Mesh mesh = build_mesh(3, 1.0);
    const SparseMatrix m = assemble_mass(mesh);
    EXPECT_NEAR(Eigen::MatrixXd(m).sum(), 1.0, 1e-14);
    // Interior node of the diagonal pattern touches six triangles of area 1/8.
    const int c = mesh.node_index(1, 1);
    EXPECT_NEAR(m.coeff(c, c), 6.0 * 0.125 / 6.0, 1e-15);
    EXPECT_NEAR(lumped_mass(m).sum(), 1.0, 1e-14);
}

TEST(Assembly, RejectsIndefiniteTensor) {
    const Mesh mesh = build_mesh(3, 1.0);
    EXPECT_THROW((void)assemble(mesh, [](const Point2&, double) { return SymTensor2{1.0, 2.0, 1.0}; }, 0.0),
                 NumericalError);
}
