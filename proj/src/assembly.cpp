#include "mixrom/assembly.hpp"

#include "mixrom/error.hpp"

#include <array>
#include <string>
#include <vector>

namespace mixrom::fem {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

struct ElementGeometry {
    double area;
    std::array<double, 3> gx;
    std::array<double, 3> gy;
};

ElementGeometry element_geometry(const Mesh& mesh, std::size_t e) {
    const auto& tri = mesh.triangles()[e];
    const auto& p = mesh.nodes();
    const Point2& a = p[tri[0]];
    const Point2& b = p[tri[1]];
    const Point2& c = p[tri[2]];
    const double two_area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    ElementGeometry g{};
    g.area = 0.5 * two_area;
    g.gx = {(b.y - c.y) / two_area, (c.y - a.y) / two_area, (a.y - b.y) / two_area};
    g.gy = {(c.x - b.x) / two_area, (a.x - c.x) / two_area, (b.x - a.x) / two_area};
    return g;
}

SparseMatrix from_triplets(std::size_t n, const Triplets& triplets) {
    SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

}  // namespace

SparseMatrix assemble_mass(const Mesh& mesh) {
    Triplets triplets;
    triplets.reserve(9 * mesh.num_triangles());
    for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
        const auto& tri = mesh.triangles()[e];
        const double area = mesh.signed_area(e);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                triplets.emplace_back(tri[i], tri[j], area * (i == j ? 2.0 : 1.0) / 12.0);
            }
        }
    }
    return from_triplets(mesh.num_nodes(), triplets);
}

AssembledSystem assemble(const Mesh& mesh, const TensorField& dispersion, double t) {
    Triplets triplets;
    triplets.reserve(9 * mesh.num_triangles());
    for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
        const SymTensor2 d = dispersion(mesh.centroid(e), t);
        if (!d.is_spd()) {
            throw NumericalError("assembly: dispersion tensor is not SPD at element " + std::to_string(e) +
                                 " (Dxx=" + std::to_string(d.xx) + ", Dxy=" + std::to_string(d.xy) +
                                 ", Dyy=" + std::to_string(d.yy) + ")");
        }
        const auto g = element_geometry(mesh, e);
        const auto& tri = mesh.triangles()[e];
        for (int i = 0; i < 3; ++i) {
            const double dgx = d.xx * g.gx[i] + d.xy * g.gy[i];
            const double dgy = d.xy * g.gx[i] + d.yy * g.gy[i];
            for (int j = 0; j < 3; ++j) {
                triplets.emplace_back(tri[j], tri[i], g.area * (g.gx[j] * dgx + g.gy[j] * dgy));
            }
        }
    }
    AssembledSystem system;
    system.mass = assemble_mass(mesh);
    system.diffusion = from_triplets(mesh.num_nodes(), triplets);
    system.evaluated_at = t;
    return system;
}

Vector lumped_mass(const SparseMatrix& mass) {
    Vector ones = Vector::Ones(mass.cols());
    return mass * ones;
}

}  // namespace mixrom::fem
