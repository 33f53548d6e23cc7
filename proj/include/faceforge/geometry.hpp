#pragma once

#include <span>

#include <Eigen/Core>

#include "faceforge/model.hpp"

namespace faceforge {

struct SimilarityTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    static SimilarityTransform identity() { return {}; }
};

/// Least-squares similarity (or rigid, with_scale = false) transform taking `src` onto `dst`,
/// from the SVD of the cross-covariance with a determinant guard against reflections.
/// Throws Error when fewer than three points are given or the source points are collinear.
SimilarityTransform umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale);

/// Root-mean-square of |T(src_i) - dst_i|.
double alignment_rms(const SimilarityTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst);

struct ClosestPoint {
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
};

/// Exact distance to the closed triangle by Voronoi-region classification. Degenerate triangles
/// fall back to the nearest of their edges.
ClosestPoint point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

ClosestPoint point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

} // namespace faceforge
