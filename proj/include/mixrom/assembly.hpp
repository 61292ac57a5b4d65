#pragma once

#include "mixrom/mesh.hpp"

#include <Eigen/SparseCore>

#include <functional>

namespace mixrom::fem {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = Eigen::VectorXd;

/// Symmetric 2x2 tensor stored by its upper triangle.
struct SymTensor2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    [[nodiscard]] double trace() const noexcept { return xx + yy; }
    [[nodiscard]] double det() const noexcept { return xx * yy - xy * xy; }
    [[nodiscard]] bool is_spd() const noexcept { return xx > 0.0 && det() > 0.0; }
};

/// Evaluates the dispersion tensor at a point and time.
using TensorField = std::function<SymTensor2(const Point2&, double)>;

/// Mass and diffusion matrices of the linear-triangle Galerkin discretization.
struct AssembledSystem {
    SparseMatrix mass;
    SparseMatrix diffusion;
    double evaluated_at = 0.0;
};

/// Assembles the consistent mass matrix and the diffusion matrix
/// K_ij = sum_e |e| grad(phi_i) . D(centroid_e, t) grad(phi_j).
///
/// Throws NumericalError naming the element if D is not SPD at its centroid.
AssembledSystem assemble(const Mesh& mesh, const TensorField& dispersion, double t);

/// Mass matrix alone (depends only on the mesh).
SparseMatrix assemble_mass(const Mesh& mesh);

/// Row sums of the mass matrix, i.e. the lumped nodal areas.
Vector lumped_mass(const SparseMatrix& mass);

}  // namespace mixrom::fem
