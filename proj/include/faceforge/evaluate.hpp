#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faceforge/geometry.hpp"
#include "faceforge/model.hpp"

namespace faceforge {

/// One predicted mesh against one scan. Landmark lists correspond by position.
struct EvalInput {
    std::string image_id;
    Mesh prediction;
    std::vector<Vec3> scan_points;
    std::vector<Vec3> pred_landmarks;
    std::vector<Vec3> scan_landmarks;
};

struct EvalOptions {
    bool with_scale = true;
    int workers = 1;
    std::size_t leaf_size = 8;
};

struct ImageEval {
    std::string image_id;
    bool ok = false;
    std::string error;
    SimilarityTransform transform;
    double landmark_rms = 0.0;
    std::vector<double> distances; ///< per scan point, scan order
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

struct EvalReport {
    std::vector<ImageEval> images;
    std::size_t n_failed = 0;
    std::vector<double> pooled; ///< all distances of successful images, ascending
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0;
    bool with_scale = true;

    /// `image_id,ok,n_points,median,mean,std,landmark_rms,error`
    std::string per_image_csv() const;
    std::string summary_json() const;
    /// `threshold_mm,fraction` on a 0.1 mm grid.
    std::string cumulative_error_csv(double step_mm = 0.1) const;
};

struct DistanceStats {
    double median = 0.0;
    double mean = 0.0;
    double std = 0.0; ///< population
};

/// Order-independent: computed from a sorted copy.
DistanceStats distance_stats(std::vector<double> values);

/// Align each prediction to its scan on the landmarks, then measure every scan point against the
/// aligned prediction surface. Images whose landmarks cannot be aligned are marked failed and left
/// out of the pooled statistics.
EvalReport evaluate(const std::vector<EvalInput>& inputs, const EvalOptions& options = {});

/// Farthest-point sample of `count` Face-region vertices on the template, seeded at the
/// front-most vertex. Names are `lm00`, `lm01`, ...
std::map<std::string, std::uint32_t> default_landmark_indices(const MorphableModel& model, std::size_t count = 7);

/// Names present in both maps, in name order.
void match_landmarks(const std::map<std::string, std::uint32_t>& model_indices, const Mesh& prediction,
                     const std::map<std::string, Vec3>& scan_landmarks, std::vector<Vec3>& pred_out,
                     std::vector<Vec3>& scan_out);

} // namespace faceforge
