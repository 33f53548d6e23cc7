#include "faceforge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "faceforge/error.hpp"

namespace faceforge {

SimilarityTransform umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale)
{
    if (src.size() != dst.size()) {
        throw DimensionError("umeyama_align: landmark counts differ");
    }
    if (src.size() < 3) {
        throw Error("umeyama_align: need at least three landmarks");
    }
    const double n = static_cast<double>(src.size());
    Vec3 mu_src = Vec3::Zero();
    Vec3 mu_dst = Vec3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        mu_src += src[i];
        mu_dst += dst[i];
    }
    mu_src /= n;
    mu_dst /= n;

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d src_scatter = Eigen::Matrix3d::Zero();
    double var_src = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 a = src[i] - mu_src;
        const Vec3 b = dst[i] - mu_dst;
        cov += b * a.transpose();
        src_scatter += a * a.transpose();
        var_src += a.squaredNorm();
    }
    cov /= n;
    var_src /= n;

    const Eigen::Vector3d spread = Eigen::JacobiSVD<Eigen::Matrix3d>(src_scatter).singularValues();
    if (!(spread(1) > 1e-12 * std::max(spread(0), 1e-300))) {
        throw Error("umeyama_align: landmarks are collinear or coincident");
    }

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        d(2, 2) = -1.0;
    }
    SimilarityTransform t;
    t.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    t.scale = with_scale ? (svd.singularValues().asDiagonal() * d).trace() / var_src : 1.0;
    t.translation = mu_dst - t.scale * (t.rotation * mu_src);
    return t;
}

double alignment_rms(const SimilarityTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst)
{
    double sq = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        sq += (t.apply(src[i]) - dst[i]).squaredNorm();
    }
    return src.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(src.size()));
}

ClosestPoint point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 q = a + t * ab;
    return {(p - q).norm(), q};
}

ClosestPoint point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    if (ab.cross(ac).squaredNorm() <= 4e-24) {
        ClosestPoint best = point_segment_distance(p, a, b);
        for (const auto& cand : {point_segment_distance(p, b, c), point_segment_distance(p, c, a)}) {
            if (cand.distance < best.distance) {
                best = cand;
            }
        }
        return best;
    }
    auto result = [&p](const Vec3& q) { return ClosestPoint{(p - q).norm(), q}; };

    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return result(a);
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return result(b);
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        return result(a + (d1 / (d1 - d3)) * ab);
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return result(c);
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        return result(a + (d2 / (d2 - d6)) * ac);
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        return result(b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b));
    }
    const double denom = 1.0 / (va + vb + vc);
    return result(a + ab * (vb * denom) + ac * (vc * denom));
}

} // namespace faceforge
