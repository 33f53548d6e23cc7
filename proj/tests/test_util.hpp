#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "faceforge/model.hpp"
#include "faceforge/rng.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("faceforge_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline const faceforge::MorphableModel& toy()
{
    static const auto model = faceforge::make_toy_model(11, 500, 20, 10);
    return model;
}

inline std::vector<double> gaussian_vector(faceforge::Rng& rng, std::size_t n, double sd = 1.0)
{
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.gaussian(0.0, sd);
    }
    return v;
}

inline faceforge::Vec3 random_point(faceforge::Rng& rng, double lo = -1.0, double hi = 1.0)
{
    return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

/// Latitude-longitude sphere with poles; every vertex lies exactly on the radius.
inline faceforge::Mesh uv_sphere(double radius, int rings = 24, int segments = 48, faceforge::Vec3 centre = faceforge::Vec3::Zero())
{
    const double pi = std::acos(-1.0);
    std::vector<faceforge::Vec3> v;
    std::vector<faceforge::Triangle> t;
    v.push_back(centre + faceforge::Vec3(0, 0, radius));
    for (int r = 1; r < rings; ++r) {
        const double th = pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double ph = 2 * pi * s / segments;
            v.push_back(centre + radius * faceforge::Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)));
        }
    }
    v.push_back(centre + faceforge::Vec3(0, 0, -radius));
    auto ring = [&](int r, int s) { return static_cast<std::uint32_t>(1 + (r - 1) * segments + (s % segments)); };
    const auto south = static_cast<std::uint32_t>(v.size() - 1);
    for (int s = 0; s < segments; ++s) {
        t.push_back({0, ring(1, s), ring(1, s + 1)});
        for (int r = 1; r + 1 < rings; ++r) {
            t.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
            t.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
        }
        t.push_back({ring(rings - 1, s), south, ring(rings - 1, s + 1)});
    }
    return {v, std::make_shared<const std::vector<faceforge::Triangle>>(std::move(t))};
}

inline faceforge::Mesh random_mesh(faceforge::Rng& rng, std::size_t n_triangles, double extent = 1.0)
{
    std::vector<faceforge::Vec3> v;
    std::vector<faceforge::Triangle> t;
    for (std::size_t i = 0; i < n_triangles; ++i) {
        const faceforge::Vec3 c = random_point(rng, -extent, extent);
        for (int k = 0; k < 3; ++k) {
            v.push_back(c + random_point(rng, -0.2 * extent, 0.2 * extent));
        }
        const auto b = static_cast<std::uint32_t>(3 * i);
        t.push_back({b, b + 1, b + 2});
    }
    return {v, std::make_shared<const std::vector<faceforge::Triangle>>(std::move(t))};
}

} // namespace testutil
