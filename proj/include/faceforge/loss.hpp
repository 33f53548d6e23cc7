#pragma once

#include <span>
#include <vector>

#include "faceforge/model.hpp"

namespace faceforge {

struct RegionWeights {
    double face = 150.0;
    double back_of_head = 1.0;
    double eyes = 0.1;
    double ears = 0.1;
};

/// Per-vertex weight of the masked mesh loss.
struct RegionMask {
    std::vector<double> weights;

    static RegionMask from_model(const MorphableModel& model, const RegionWeights& w = {});
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad_beta;
};

/// sum_v sum_xyz mask[v] * |decode(beta)[v] - gt[v]| at zero pose and expression, where decode
/// reduces to the shaped template. The gradient uses that linearity: S^T (mask * sign(residual)),
/// with sign(0) = 0.
LossResult masked_mesh_loss(const MorphableModel& model, const RegionMask& mask, std::span<const double> beta_pred,
                            std::span<const Vec3> gt_vertices);

inline LossResult masked_mesh_loss(const MorphableModel& model, const RegionMask& mask, std::span<const double> beta_pred,
                                   const Mesh& gt)
{
    return masked_mesh_loss(model, mask, beta_pred, gt.vertices);
}

} // namespace faceforge
