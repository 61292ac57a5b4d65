#include "mixrom/mesh.hpp"

#include "mixrom/error.hpp"

#include <cmath>
#include <string>

namespace mixrom::fem {

Mesh::Mesh(int nodes_per_side, double domain_length)
    : nodes_per_side_(nodes_per_side), domain_length_(domain_length) {
    if (nodes_per_side < 2) {
        throw InvalidArgument("invalid mesh: nodes_per_side must be >= 2, got " +
                              std::to_string(nodes_per_side));
    }
    if (!(domain_length > 0.0) || !std::isfinite(domain_length)) {
        throw InvalidArgument("invalid mesh: domain_length must be positive and finite");
    }

    const int n = nodes_per_side;
    const double h = domain_length / (n - 1);
    nodes_.reserve(static_cast<std::size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
            // Pin the last row/column to L exactly so boundary tests do not see round-off.
            const double x = (ix == n - 1) ? domain_length : ix * h;
            const double y = (iy == n - 1) ? domain_length : iy * h;
            nodes_.push_back({x, y});
        }
    }

    triangles_.reserve(2 * static_cast<std::size_t>(n - 1) * (n - 1));
    for (int iy = 0; iy + 1 < n; ++iy) {
        for (int ix = 0; ix + 1 < n; ++ix) {
            const int ll = node_index(ix, iy);
            const int lr = node_index(ix + 1, iy);
            const int ul = node_index(ix, iy + 1);
            const int ur = node_index(ix + 1, iy + 1);
            triangles_.push_back({ll, lr, ur});
            triangles_.push_back({ll, ur, ul});
        }
    }
}

double Mesh::signed_area(std::size_t tri) const {
    const auto& t = triangles_.at(tri);
    const Point2& a = nodes_[t[0]];
    const Point2& b = nodes_[t[1]];
    const Point2& c = nodes_[t[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

Point2 Mesh::centroid(std::size_t tri) const {
    const auto& t = triangles_.at(tri);
    const Point2& a = nodes_[t[0]];
    const Point2& b = nodes_[t[1]];
    const Point2& c = nodes_[t[2]];
    return {(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
}

Mesh build_mesh(int nodes_per_side, double domain_length) { return Mesh(nodes_per_side, domain_length); }

}  // namespace mixrom::fem
