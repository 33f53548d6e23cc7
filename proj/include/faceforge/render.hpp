#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "faceforge/model.hpp"
#include "faceforge/rng.hpp"

namespace faceforge {

inline constexpr double kDefaultFovDegrees = 72.4;
inline constexpr int kDefaultResolution = 512;

/// Pinhole camera on the +z axis at `distance` from the subject origin, looking towards -z.
/// The field of view is vertical; images are square so it is also the horizontal FOV.
struct Camera {
    double fov_degrees = kDefaultFovDegrees;
    double distance = 275.0;
    int resolution = kDefaultResolution;
    double near = 1.0;
    double far = 1000.0;

    void validate() const;
    double focal() const;
    double center() const { return resolution / 2.0; }
};

Camera sample_camera(Rng& rng, double d_min, double d_max);

struct Projection {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0; ///< camera-space depth
};

/// Image x grows right, image y grows down; pixel centres sit at half-integer coordinates.
Projection project(const Camera& camera, const Vec3& point);

struct DepthBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> depth; ///< row-major, +inf for background
    Camera camera;

    float at(int x, int y) const { return depth[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    bool covered(int x, int y) const;
    double coverage_fraction() const;
};

/// Edge-function rasterizer with top-left fill rule, perspective-correct depth, z-buffer
/// keeping the nearest surface and no backface culling. Triangles with a vertex at or in front of
/// the near plane are dropped.
DepthBuffer render_depth(const Mesh& mesh, const Camera& camera);

struct DepthMetadata {
    double near = 0.0;
    double far = 0.0;
    double min_depth = 0.0;
    double max_depth = 0.0;
    double fov_degrees = 0.0;
    double distance = 0.0;
    int resolution = 0;

    bool operator==(const DepthMetadata&) const = default;
};

/// 8-bit conditioning image: nearest covered depth -> 255, farthest -> 1, background -> 0.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::optional<DepthMetadata> metadata;

    bool operator==(const DepthImage&) const = default;
};

struct NormalizeOptions {
    /// Replace the black background with uniform noise in [0, 64]. Off for dataset generation.
    bool noise_background = false;
    std::uint64_t noise_seed = 0;
};

DepthImage normalize_depth(const DepthBuffer& buffer, const NormalizeOptions& options = {});

/// Inverse of the affine map stored in the metadata; background pixels come back as +inf.
std::vector<double> denormalize_depth(const DepthImage& image);

/// Grayscale 8-bit PNG plus `<stem>.json` sidecar holding the metadata.
void export_png(const DepthImage& image, const std::filesystem::path& path);
DepthImage import_png(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& png_path);

void save_depth_buffer(const DepthBuffer& buffer, const std::filesystem::path& path);
DepthBuffer load_depth_buffer(const std::filesystem::path& path);

} // namespace faceforge
