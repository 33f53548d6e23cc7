#include "faceforge/bvh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "faceforge/error.hpp"
#include "faceforge/geometry.hpp"

namespace faceforge {

Bvh::Bvh(const Mesh& mesh, std::size_t leaf_size)
    : vertices_(mesh.vertices), triangles_(*mesh.triangles), leaf_size_(std::max<std::size_t>(1, leaf_size))
{
    if (triangles_.empty()) {
        throw Error("bvh: mesh has no triangles");
    }
    std::vector<Vec3> centroids(triangles_.size());
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const auto& tri = triangles_[t];
        centroids[t] = (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
    }
    order_.resize(triangles_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * triangles_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(order_.size()), centroids);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids)
{
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    Eigen::AlignedBox3d box;
    for (std::uint32_t i = begin; i < end; ++i) {
        for (auto v : triangles_[order_[i]]) {
            box.extend(vertices_[v]);
        }
    }
    nodes_[index].box = box;
    if (end - begin <= leaf_size_) {
        nodes_[index].begin = begin;
        nodes_[index].count = end - begin;
        return index;
    }
    Eigen::Index axis = 0;
    box.sizes().maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = centroids[a][axis];
                         const double cb = centroids[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    const std::uint32_t left = build(begin, mid, centroids);
    const std::uint32_t right = build(mid, end, centroids);
    nodes_[index].begin = left;
    nodes_[index].right = right;
    return index;
}

NearestHit Bvh::nearest(const Vec3& p) const
{
    NearestHit best{std::numeric_limits<double>::infinity(), Vec3::Zero(), 0};
    double best_sq = std::numeric_limits<double>::infinity();
    std::uint32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squaredExteriorDistance(p) > best_sq) {
            continue;
        }
        if (node.count > 0) {
            for (std::uint32_t i = node.begin; i < node.begin + node.count; ++i) {
                const std::uint32_t t = order_[i];
                const auto& tri = triangles_[t];
                const ClosestPoint cp = point_triangle_distance(p, vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
                if (cp.distance < best.distance || (cp.distance == best.distance && t < best.triangle)) {
                    best = {cp.distance, cp.point, t};
                    best_sq = cp.distance * cp.distance;
                }
            }
            continue;
        }
        const double dl = nodes_[node.begin].box.squaredExteriorDistance(p);
        const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
        // Push the farther child first so the nearer one is searched first.
        if (dl <= dr) {
            stack[top++] = node.right;
            stack[top++] = node.begin;
        } else {
            stack[top++] = node.begin;
            stack[top++] = node.right;
        }
    }
    return best;
}

} // namespace faceforge
