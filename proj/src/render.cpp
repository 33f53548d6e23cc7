#include "faceforge/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"

namespace faceforge {

namespace {

constexpr std::string_view kDepthMagic = "DBUF";
constexpr float kBackground = std::numeric_limits<float>::infinity();

struct ScreenVertex {
    double x;
    double y;
    double z;
};

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py)
{
    return (px - a.x) * (b.y - a.y) - (py - a.y) * (b.x - a.x);
}

/// Interior lies where the edge function is positive; with y pointing down an edge is left
/// when dy > 0 and top when it is horizontal with dx < 0.
bool top_left(const ScreenVertex& a, const ScreenVertex& b)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    return dy > 0.0 || (dy == 0.0 && dx < 0.0);
}

} // namespace

void Camera::validate() const
{
    if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) {
        throw Error("camera fov must lie in (0, 180) degrees");
    }
    if (!(near > 0.0 && near < distance && distance < far)) {
        throw Error("camera requires 0 < near < distance < far");
    }
    if (resolution < 16) {
        throw Error("camera resolution must be at least 16");
    }
}

double Camera::focal() const
{
    return center() / std::tan(fov_degrees * std::numbers::pi / 360.0);
}

Camera sample_camera(Rng& rng, double d_min, double d_max)
{
    if (!(d_min > 0.0 && d_min <= d_max)) {
        throw Error("sample_camera requires 0 < d_min <= d_max");
    }
    Camera cam;
    cam.distance = d_min == d_max ? d_min : rng.uniform(d_min, d_max);
    return cam;
}

Projection project(const Camera& camera, const Vec3& point)
{
    const double z = camera.distance - point.z();
    if (!(z > 0.0)) {
        throw Error("point is behind the camera");
    }
    const double f = camera.focal();
    const double c = camera.center();
    return {c + f * point.x() / z, c - f * point.y() / z, z};
}

bool DepthBuffer::covered(int x, int y) const
{
    return std::isfinite(at(x, y));
}

double DepthBuffer::coverage_fraction() const
{
    if (depth.empty()) {
        return 0.0;
    }
    const auto n = std::count_if(depth.begin(), depth.end(), [](float d) { return std::isfinite(d); });
    return static_cast<double>(n) / static_cast<double>(depth.size());
}

DepthBuffer render_depth(const Mesh& mesh, const Camera& camera)
{
    camera.validate();
    const int res = camera.resolution;
    DepthBuffer buf{res, res, std::vector<float>(static_cast<std::size_t>(res) * static_cast<std::size_t>(res), kBackground), camera};
    std::vector<double> zbuf(buf.depth.size(), std::numeric_limits<double>::infinity());

    const double f = camera.focal();
    const double c = camera.center();
    std::vector<ScreenVertex> screen(mesh.vertices.size());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        const Vec3& p = mesh.vertices[v];
        const double z = camera.distance - p.z();
        screen[v] = z > 0.0 ? ScreenVertex{c + f * p.x() / z, c - f * p.y() / z, z} : ScreenVertex{0.0, 0.0, z};
    }

    for (const auto& tri : *mesh.triangles) {
        ScreenVertex a = screen[tri[0]];
        ScreenVertex b = screen[tri[1]];
        ScreenVertex d = screen[tri[2]];
        if (a.z <= camera.near || b.z <= camera.near || d.z <= camera.near) {
            continue;
        }
        double area = edge(a, b, d.x, d.y);
        if (area == 0.0 || !std::isfinite(area)) {
            continue;
        }
        if (area < 0.0) {
            std::swap(b, d);
            area = -area;
        }
        const double inv_za = 1.0 / a.z;
        const double inv_zb = 1.0 / b.z;
        const double inv_zd = 1.0 / d.z;
        const bool tl0 = top_left(b, d);
        const bool tl1 = top_left(d, a);
        const bool tl2 = top_left(a, b);

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, d.x}) - 0.5)));
        const int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, d.x}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, d.y}) - 0.5)));
        const int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, d.y}) - 0.5)));
        for (int py = y0; py <= y1; ++py) {
            const double cy = py + 0.5;
            for (int px = x0; px <= x1; ++px) {
                const double cx = px + 0.5;
                const double w0 = edge(b, d, cx, cy);
                const double w1 = edge(d, a, cx, cy);
                const double w2 = edge(a, b, cx, cy);
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) {
                    continue;
                }
                if ((w0 == 0.0 && !tl0) || (w1 == 0.0 && !tl1) || (w2 == 0.0 && !tl2)) {
                    continue;
                }
                const double inv_z = (w0 * inv_za + w1 * inv_zb + w2 * inv_zd) / area;
                const double z = 1.0 / inv_z;
                if (!(z > camera.near && z < camera.far)) {
                    continue;
                }
                const std::size_t idx = static_cast<std::size_t>(py) * static_cast<std::size_t>(res) + static_cast<std::size_t>(px);
                if (z < zbuf[idx]) {
                    zbuf[idx] = z;
                }
            }
        }
    }
    for (std::size_t i = 0; i < zbuf.size(); ++i) {
        if (std::isfinite(zbuf[i])) {
            buf.depth[i] = static_cast<float>(zbuf[i]);
        }
    }
    return buf;
}

DepthImage normalize_depth(const DepthBuffer& buffer, const NormalizeOptions& options)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (float d : buffer.depth) {
        if (std::isfinite(d)) {
            lo = std::min(lo, static_cast<double>(d));
            hi = std::max(hi, static_cast<double>(d));
        }
    }
    if (!std::isfinite(lo)) {
        throw Error("normalize_depth: buffer has no covered pixels");
    }
    DepthImage img;
    img.width = buffer.width;
    img.height = buffer.height;
    img.pixels.assign(buffer.depth.size(), 0);
    img.metadata = DepthMetadata{buffer.camera.near, buffer.camera.far, lo, hi,
                                 buffer.camera.fov_degrees, buffer.camera.distance, buffer.camera.resolution};
    Rng noise(options.noise_seed);
    for (std::size_t i = 0; i < buffer.depth.size(); ++i) {
        const double d = buffer.depth[i];
        if (std::isfinite(d)) {
            img.pixels[i] = hi == lo ? 255 : static_cast<std::uint8_t>(std::lround(1.0 + 254.0 * (hi - d) / (hi - lo)));
        } else if (options.noise_background) {
            img.pixels[i] = static_cast<std::uint8_t>(noise.below(65));
        }
    }
    return img;
}

std::vector<double> denormalize_depth(const DepthImage& image)
{
    if (!image.metadata) {
        throw Error("denormalize_depth: image has no depth metadata");
    }
    const double lo = image.metadata->min_depth;
    const double hi = image.metadata->max_depth;
    std::vector<double> out(image.pixels.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int p = image.pixels[i];
        if (p > 0) {
            out[i] = hi - (p - 1) / 254.0 * (hi - lo);
        }
    }
    return out;
}

void save_depth_buffer(const DepthBuffer& buffer, const std::filesystem::path& path)
{
    nlohmann::ordered_json header = {
        {"format_version", 1},
        {"width", buffer.width},
        {"height", buffer.height},
        {"near", buffer.camera.near},
        {"far", buffer.camera.far},
        {"fov_degrees", buffer.camera.fov_degrees},
        {"distance", buffer.camera.distance},
        {"resolution", buffer.camera.resolution},
    };
    binio::ContainerWriter w(kDepthMagic, header);
    w.append<float>(buffer.depth);
    w.save(path);
}

DepthBuffer load_depth_buffer(const std::filesystem::path& path)
{
    binio::ContainerReader r(binio::read_file(path), kDepthMagic);
    const auto& h = r.header();
    DepthBuffer buf;
    buf.width = binio::header_field<int>(h, "width");
    buf.height = binio::header_field<int>(h, "height");
    buf.camera.near = binio::header_field<double>(h, "near");
    buf.camera.far = binio::header_field<double>(h, "far");
    buf.camera.fov_degrees = binio::header_field<double>(h, "fov_degrees");
    buf.camera.distance = binio::header_field<double>(h, "distance");
    buf.camera.resolution = binio::header_field<int>(h, "resolution");
    if (buf.width <= 0 || buf.height <= 0) {
        throw FormatError(FormatError::Kind::MalformedHeader, "depth buffer has non-positive size");
    }
    buf.depth = r.read<float>(static_cast<std::size_t>(buf.width) * static_cast<std::size_t>(buf.height));
    r.expect_end();
    return buf;
}

} // namespace faceforge
