#pragma once

#include <span>
#include <vector>

#include "faceforge/bvh.hpp"
#include "faceforge/loss.hpp"
#include "faceforge/model.hpp"
#include "faceforge/render.hpp"

namespace faceforge::kernels {

// Each hot loop comes as a serial reference and an OpenMP variant. Every OpenMP variant writes
// results by index, and reductions happen afterwards in index order, so both variants give
// bit-identical output for any worker count.

std::vector<Mesh> decode_batch_serial(const MorphableModel& model, std::span<const Coefficients> coeffs);
std::vector<Mesh> decode_batch_omp(const MorphableModel& model, std::span<const Coefficients> coeffs, int workers);

struct RenderJob {
    const Mesh* mesh = nullptr;
    Camera camera;
};

std::vector<DepthBuffer> render_batch_serial(std::span<const RenderJob> jobs);
std::vector<DepthBuffer> render_batch_omp(std::span<const RenderJob> jobs, int workers);

std::vector<NearestHit> nearest_batch_serial(const Bvh& bvh, std::span<const Vec3> points);
std::vector<NearestHit> nearest_batch_omp(const Bvh& bvh, std::span<const Vec3> points, int workers);

/// Exhaustive scan over all triangles, lowest index winning ties like the BVH.
std::vector<NearestHit> nearest_brute_force(const Mesh& mesh, std::span<const Vec3> points);

struct LossBatch {
    std::vector<double> losses;                ///< per sample
    std::vector<std::vector<double>> grads;    ///< per sample, d loss / d beta
};

/// `predictions[k]` is scored against `targets[k]`.
LossBatch loss_grad_batch_serial(const MorphableModel& model, const RegionMask& mask,
                                 std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<Vec3>* const> targets);
LossBatch loss_grad_batch_omp(const MorphableModel& model, const RegionMask& mask,
                              std::span<const std::vector<double>> predictions,
                              std::span<const std::vector<Vec3>* const> targets, int workers);

/// Sum in index order.
double ordered_sum(std::span<const double> values);

/// 0 or negative means the OpenMP default.
int resolve_workers(int workers);

} // namespace faceforge::kernels
