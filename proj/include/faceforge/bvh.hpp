#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "faceforge/model.hpp"

namespace faceforge {

struct NearestHit {
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
    std::uint32_t triangle = 0;
};

/// Axis-aligned bounding-box tree over a triangle mesh. Nodes split at the centroid median
/// along the longest box axis until at most `leaf_size` triangles remain.
class Bvh {
public:
    explicit Bvh(const Mesh& mesh, std::size_t leaf_size = 8);

    /// Exact closest point on the mesh; ties resolve to the lowest triangle index.
    NearestHit nearest(const Vec3& p) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t triangle_count() const { return triangles_.size(); }

private:
    struct Node {
        Eigen::AlignedBox3d box;
        std::uint32_t begin = 0; ///< into order_ for leaves, left child index otherwise
        std::uint32_t count = 0; ///< 0 for interior nodes
        std::uint32_t right = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids);

    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

} // namespace faceforge
