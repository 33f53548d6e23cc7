#include "faceforge/kernels.hpp"

#include <limits>
#include <omp.h>

#include "faceforge/error.hpp"
#include "faceforge/geometry.hpp"

namespace faceforge::kernels {

namespace {

// Exceptions must not escape an OpenMP region; the first one (by index) is rethrown after.
class ErrorSlot {
public:
    explicit ErrorSlot(std::size_t n) : errors_(n) {}
    void capture(std::size_t i) { errors_[i] = std::current_exception(); }
    void rethrow() const
    {
        for (const auto& e : errors_) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }

private:
    std::vector<std::exception_ptr> errors_;
};

void check_targets(const MorphableModel& model, std::span<const std::vector<double>> predictions,
                   std::span<const std::vector<Vec3>* const> targets)
{
    if (predictions.size() != targets.size()) {
        throw DimensionError("loss batch: " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(targets.size()) + " targets");
    }
    for (const auto* t : targets) {
        if (t == nullptr || t->size() != model.n_vertices) {
            throw DimensionError("loss batch: target mesh does not match the model");
        }
    }
}

} // namespace

int resolve_workers(int workers)
{
    return workers > 0 ? workers : omp_get_max_threads();
}

double ordered_sum(std::span<const double> values)
{
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    return s;
}

std::vector<Mesh> decode_batch_serial(const MorphableModel& model, std::span<const Coefficients> coeffs)
{
    std::vector<Mesh> out;
    out.reserve(coeffs.size());
    for (const auto& c : coeffs) {
        out.push_back(decode(model, c));
    }
    return out;
}

std::vector<Mesh> decode_batch_omp(const MorphableModel& model, std::span<const Coefficients> coeffs, int workers)
{
    const auto n = static_cast<std::ptrdiff_t>(coeffs.size());
    std::vector<Mesh> out(coeffs.size());
    ErrorSlot errors(coeffs.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = decode(model, coeffs[static_cast<std::size_t>(i)]);
        } catch (...) {
            errors.capture(static_cast<std::size_t>(i));
        }
    }
    errors.rethrow();
    return out;
}

std::vector<DepthBuffer> render_batch_serial(std::span<const RenderJob> jobs)
{
    std::vector<DepthBuffer> out;
    out.reserve(jobs.size());
    for (const auto& j : jobs) {
        out.push_back(render_depth(*j.mesh, j.camera));
    }
    return out;
}

std::vector<DepthBuffer> render_batch_omp(std::span<const RenderJob> jobs, int workers)
{
    const auto n = static_cast<std::ptrdiff_t>(jobs.size());
    std::vector<DepthBuffer> out(jobs.size());
    ErrorSlot errors(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& j = jobs[static_cast<std::size_t>(i)];
        try {
            out[static_cast<std::size_t>(i)] = render_depth(*j.mesh, j.camera);
        } catch (...) {
            errors.capture(static_cast<std::size_t>(i));
        }
    }
    errors.rethrow();
    return out;
}

std::vector<NearestHit> nearest_batch_serial(const Bvh& bvh, std::span<const Vec3> points)
{
    std::vector<NearestHit> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        out[i] = bvh.nearest(points[i]);
    }
    return out;
}

std::vector<NearestHit> nearest_batch_omp(const Bvh& bvh, std::span<const Vec3> points, int workers)
{
    const auto n = static_cast<std::ptrdiff_t>(points.size());
    std::vector<NearestHit> out(points.size());
#pragma omp parallel for schedule(static) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = bvh.nearest(points[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<NearestHit> nearest_brute_force(const Mesh& mesh, std::span<const Vec3> points)
{
    const auto& tris = *mesh.triangles;
    std::vector<NearestHit> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        NearestHit best;
        best.distance = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const auto& tri = tris[t];
            const auto cp = point_triangle_distance(points[i], mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
            if (cp.distance < best.distance) {
                best = {cp.distance, cp.point, static_cast<std::uint32_t>(t)};
            }
        }
        out[i] = best;
    }
    return out;
}

LossBatch loss_grad_batch_serial(const MorphableModel& model, const RegionMask& mask,
                                 std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<Vec3>* const> targets)
{
    check_targets(model, predictions, targets);
    LossBatch out;
    out.losses.resize(predictions.size());
    out.grads.resize(predictions.size());
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        auto r = masked_mesh_loss(model, mask, predictions[k], *targets[k]);
        out.losses[k] = r.loss;
        out.grads[k] = std::move(r.grad_beta);
    }
    return out;
}

LossBatch loss_grad_batch_omp(const MorphableModel& model, const RegionMask& mask,
                              std::span<const std::vector<double>> predictions,
                              std::span<const std::vector<Vec3>* const> targets, int workers)
{
    check_targets(model, predictions, targets);
    const auto n = static_cast<std::ptrdiff_t>(predictions.size());
    LossBatch out;
    out.losses.resize(predictions.size());
    out.grads.resize(predictions.size());
#pragma omp parallel for schedule(static) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        auto r = masked_mesh_loss(model, mask, predictions[k], *targets[k]);
        out.losses[k] = r.loss;
        out.grads[k] = std::move(r.grad_beta);
    }
    return out;
}

} // namespace faceforge::kernels
