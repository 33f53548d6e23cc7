#include "faceforge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

#include "faceforge/bvh.hpp"
#include "faceforge/error.hpp"
#include "faceforge/kernels.hpp"

namespace faceforge {

DistanceStats distance_stats(std::vector<double> values)
{
    DistanceStats s;
    if (values.empty()) {
        return s;
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    s.mean = kernels::ordered_sum(values) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(n));
    return s;
}

namespace {

ImageEval evaluate_one(const EvalInput& in, const EvalOptions& options)
{
    ImageEval out;
    out.image_id = in.image_id;
    try {
        if (in.pred_landmarks.size() != in.scan_landmarks.size()) {
            throw Error("landmark counts differ (" + std::to_string(in.pred_landmarks.size()) + " vs " +
                        std::to_string(in.scan_landmarks.size()) + ")");
        }
        out.transform = umeyama_align(in.pred_landmarks, in.scan_landmarks, options.with_scale);
        out.landmark_rms = alignment_rms(out.transform, in.pred_landmarks, in.scan_landmarks);
    } catch (const std::exception& e) {
        out.error = std::string("landmark alignment failed: ") + e.what();
        return out;
    }
    if (in.scan_points.empty()) {
        out.error = "scan has no points";
        return out;
    }
    Mesh aligned{in.prediction.vertices, in.prediction.triangles};
    for (auto& v : aligned.vertices) {
        v = out.transform.apply(v);
    }
    const Bvh bvh(aligned, options.leaf_size);
    const auto hits = kernels::nearest_batch_serial(bvh, in.scan_points);
    out.distances.resize(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out.distances[i] = hits[i].distance;
    }
    const auto s = distance_stats(out.distances);
    out.median = s.median;
    out.mean = s.mean;
    out.std = s.std;
    out.ok = true;
    return out;
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

EvalReport evaluate(const std::vector<EvalInput>& inputs, const EvalOptions& options)
{
    EvalReport report;
    report.with_scale = options.with_scale;
    report.images.resize(inputs.size());
    const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::resolve_workers(options.workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            report.images[k] = evaluate_one(inputs[k], options);
        } catch (const std::exception& e) {
            report.images[k].image_id = inputs[k].image_id;
            report.images[k].error = e.what();
        }
    }
    for (const auto& img : report.images) {
        if (!img.ok) {
            ++report.n_failed;
            continue;
        }
        report.pooled.insert(report.pooled.end(), img.distances.begin(), img.distances.end());
    }
    std::sort(report.pooled.begin(), report.pooled.end());
    const auto s = distance_stats(report.pooled);
    report.median = s.median;
    report.mean = s.mean;
    report.std = s.std;
    return report;
}

std::string EvalReport::per_image_csv() const
{
    std::string out = "image_id,ok,n_points,median,mean,std,landmark_rms,error\n";
    for (const auto& img : images) {
        std::string err = img.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += img.image_id + ',' + (img.ok ? "1" : "0") + ',' + std::to_string(img.distances.size()) + ',' +
               fmt(img.median) + ',' + fmt(img.mean) + ',' + fmt(img.std) + ',' + fmt(img.landmark_rms) + ',' + err + '\n';
    }
    return out;
}

std::string EvalReport::summary_json() const
{
    nlohmann::ordered_json j;
    j["n_images"] = images.size();
    j["n_evaluated"] = images.size() - n_failed;
    j["n_failed"] = n_failed;
    j["n_distances"] = pooled.size();
    j["with_scale"] = with_scale;
    j["median_mm"] = median;
    j["mean_mm"] = mean;
    j["std_mm"] = std;
    return j.dump(2) + "\n";
}

std::string EvalReport::cumulative_error_csv(double step_mm) const
{
    if (!(step_mm > 0.0)) {
        throw Error("cumulative error step must be positive");
    }
    std::string out = "threshold_mm,fraction\n";
    if (pooled.empty()) {
        return out;
    }
    const double top = std::max(10.0, std::ceil(pooled.back() / step_mm) * step_mm);
    const auto steps = static_cast<std::size_t>(std::llround(top / step_mm));
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * step_mm;
        const auto below = static_cast<std::size_t>(std::upper_bound(pooled.begin(), pooled.end(), t) - pooled.begin());
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.4f,%.9f\n", t, static_cast<double>(below) / static_cast<double>(pooled.size()));
        out += buf;
    }
    return out;
}

std::map<std::string, std::uint32_t> default_landmark_indices(const MorphableModel& model, std::size_t count)
{
    std::vector<std::uint32_t> face;
    for (std::size_t v = 0; v < model.n_vertices; ++v) {
        if (model.region_labels[v] == Region::Face) {
            face.push_back(static_cast<std::uint32_t>(v));
        }
    }
    if (face.size() < count || count < 3) {
        throw Error("default landmarks: need at least 3 and at most " + std::to_string(face.size()) + " face vertices");
    }
    std::vector<std::uint32_t> chosen;
    std::uint32_t first = face.front();
    for (auto v : face) {
        if (model.template_vertex(v).z() > model.template_vertex(first).z()) {
            first = v;
        }
    }
    chosen.push_back(first);
    std::vector<double> dist(face.size(), std::numeric_limits<double>::infinity());
    while (chosen.size() < count) {
        const Vec3 last = model.template_vertex(chosen.back());
        std::size_t best = 0;
        for (std::size_t k = 0; k < face.size(); ++k) {
            dist[k] = std::min(dist[k], (model.template_vertex(face[k]) - last).squaredNorm());
            if (dist[k] > dist[best]) {
                best = k;
            }
        }
        chosen.push_back(face[best]);
    }
    std::map<std::string, std::uint32_t> out;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "lm%02zu", k);
        out[name] = chosen[k];
    }
    return out;
}

void match_landmarks(const std::map<std::string, std::uint32_t>& model_indices, const Mesh& prediction,
                     const std::map<std::string, Vec3>& scan_landmarks, std::vector<Vec3>& pred_out,
                     std::vector<Vec3>& scan_out)
{
    pred_out.clear();
    scan_out.clear();
    for (const auto& [name, idx] : model_indices) {
        auto it = scan_landmarks.find(name);
        if (it == scan_landmarks.end()) {
            continue;
        }
        if (idx >= prediction.vertices.size()) {
            throw DimensionError("landmark '" + name + "' indexes vertex " + std::to_string(idx) + " of a " +
                                 std::to_string(prediction.vertices.size()) + "-vertex mesh");
        }
        pred_out.push_back(prediction.vertices[idx]);
        scan_out.push_back(it->second);
    }
}

} // namespace faceforge
