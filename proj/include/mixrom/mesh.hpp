#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace mixrom::fem {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using Triangle = std::array<int, 3>;

/// Structured triangulation of the square [0,L]^2.
///
/// Nodes are numbered row-major (x fastest). Each grid square is split along
/// the diagonal running from its lower-left to its upper-right corner, and
/// both triangles are stored counter-clockwise.
class Mesh {
public:
    Mesh(int nodes_per_side, double domain_length);

    [[nodiscard]] int nodes_per_side() const noexcept { return nodes_per_side_; }
    [[nodiscard]] double domain_length() const noexcept { return domain_length_; }
    [[nodiscard]] double spacing() const noexcept { return domain_length_ / (nodes_per_side_ - 1); }

    [[nodiscard]] std::size_t num_nodes() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t num_triangles() const noexcept { return triangles_.size(); }

    [[nodiscard]] const std::vector<Point2>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<Triangle>& triangles() const noexcept { return triangles_; }

    [[nodiscard]] int node_index(int ix, int iy) const noexcept { return iy * nodes_per_side_ + ix; }

    /// Signed area of a triangle (positive for counter-clockwise ordering).
    [[nodiscard]] double signed_area(std::size_t tri) const;
    [[nodiscard]] Point2 centroid(std::size_t tri) const;

private:
    int nodes_per_side_;
    double domain_length_;
    std::vector<Point2> nodes_;
    std::vector<Triangle> triangles_;
};

/// Throws InvalidArgument when nodes_per_side < 2 or domain_length <= 0.
Mesh build_mesh(int nodes_per_side, double domain_length);

}  // namespace mixrom::fem
