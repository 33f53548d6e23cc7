#include "faceforge/loss.hpp"

#include <cmath>
#include <string>

#include "faceforge/error.hpp"

namespace faceforge {

RegionMask RegionMask::from_model(const MorphableModel& model, const RegionWeights& w)
{
    RegionMask mask;
    mask.weights.resize(model.n_vertices);
    for (std::size_t v = 0; v < model.n_vertices; ++v) {
        switch (model.region_labels[v]) {
        case Region::Face: mask.weights[v] = w.face; break;
        case Region::BackOfHead: mask.weights[v] = w.back_of_head; break;
        case Region::Eyes: mask.weights[v] = w.eyes; break;
        case Region::Ears: mask.weights[v] = w.ears; break;
        }
    }
    return mask;
}

LossResult masked_mesh_loss(const MorphableModel& model, const RegionMask& mask, std::span<const double> beta_pred,
                            std::span<const Vec3> gt)
{
    if (gt.size() != model.n_vertices || mask.weights.size() != model.n_vertices) {
        throw DimensionError("masked_mesh_loss: mesh has " + std::to_string(gt.size()) + " vertices, mask " +
                             std::to_string(mask.weights.size()) + ", model " + std::to_string(model.n_vertices));
    }
    const std::vector<Vec3> pred = shaped_template(model, beta_pred);

    LossResult out;
    std::vector<double> weighted_sign(3 * model.n_vertices, 0.0);
    for (std::size_t v = 0; v < model.n_vertices; ++v) {
        const double w = mask.weights[v];
        for (int c = 0; c < 3; ++c) {
            const double r = pred[v][c] - gt[v][c];
            out.loss += w * std::abs(r);
            weighted_sign[3 * v + static_cast<std::size_t>(c)] = r > 0.0 ? w : (r < 0.0 ? -w : 0.0);
        }
    }
    out.grad_beta.assign(model.n_shape, 0.0);
    for (std::size_t i = 0; i < model.n_shape; ++i) {
        const auto s = model.shape_component(i);
        double g = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            g += static_cast<double>(s[k]) * weighted_sign[k];
        }
        out.grad_beta[i] = g;
    }
    return out;
}

} // namespace faceforge
