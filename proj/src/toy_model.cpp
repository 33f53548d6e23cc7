#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "faceforge/error.hpp"
#include "faceforge/model.hpp"

namespace faceforge {

namespace {

constexpr double kPi = std::numbers::pi;
const Vec3 kRadii(70.0, 90.0, 80.0);

struct Sphere {
    std::vector<Vec3> dirs; // unit directions
    std::vector<Triangle> triangles;
    std::vector<std::vector<std::uint32_t>> rings;
};

std::vector<std::size_t> ring_sizes(std::size_t ring_vertices, std::size_t rings)
{
    std::vector<double> ideal(rings);
    double wsum = 0.0;
    for (std::size_t i = 0; i < rings; ++i) {
        ideal[i] = std::sin(kPi * static_cast<double>(i + 1) / static_cast<double>(rings + 1));
        wsum += ideal[i];
    }
    std::vector<std::size_t> sizes(rings);
    std::size_t total = 0;
    for (std::size_t i = 0; i < rings; ++i) {
        ideal[i] *= static_cast<double>(ring_vertices) / wsum;
        sizes[i] = std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(ideal[i])));
        total += sizes[i];
    }
    while (total < ring_vertices) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rings; ++i) {
            if (ideal[i] - static_cast<double>(sizes[i]) > ideal[best] - static_cast<double>(sizes[best])) {
                best = i;
            }
        }
        ++sizes[best];
        ++total;
    }
    while (total > ring_vertices) {
        std::size_t best = rings;
        for (std::size_t i = 0; i < rings; ++i) {
            if (sizes[i] > 3 && (best == rings || static_cast<double>(sizes[i]) - ideal[i] >
                                                      static_cast<double>(sizes[best]) - ideal[best])) {
                best = i;
            }
        }
        --sizes[best];
        --total;
    }
    return sizes;
}

/// Latitude-ring sphere with exactly `n` vertices: two poles plus rings of varying size,
/// stitched by walking both rings in angle order.
Sphere ring_sphere(std::size_t n)
{
    const std::size_t ring_vertices = n - 2;
    auto rings = static_cast<std::size_t>(std::lround(std::sqrt(kPi * static_cast<double>(ring_vertices) / 4.0)));
    rings = std::clamp<std::size_t>(rings, 1, ring_vertices / 3);
    const auto sizes = ring_sizes(ring_vertices, rings);

    Sphere s;
    s.dirs.push_back(Vec3(0, 1, 0));
    std::vector<std::vector<double>> angles(rings);
    for (std::size_t r = 0; r < rings; ++r) {
        const double phi = kPi * static_cast<double>(r + 1) / static_cast<double>(rings + 1);
        const double offset = (r % 2 == 0) ? 0.0 : 0.5;
        std::vector<std::uint32_t> ring;
        for (std::size_t k = 0; k < sizes[r]; ++k) {
            const double a = 2.0 * kPi * (static_cast<double>(k) + offset) / static_cast<double>(sizes[r]);
            angles[r].push_back(a);
            ring.push_back(static_cast<std::uint32_t>(s.dirs.size()));
            s.dirs.push_back(Vec3(std::sin(phi) * std::cos(a), std::cos(phi), std::sin(phi) * std::sin(a)));
        }
        s.rings.push_back(std::move(ring));
    }
    const auto bottom = static_cast<std::uint32_t>(s.dirs.size());
    s.dirs.push_back(Vec3(0, -1, 0));

    const auto& first = s.rings.front();
    for (std::size_t k = 0; k < first.size(); ++k) {
        s.triangles.push_back({0u, first[k], first[(k + 1) % first.size()]});
    }
    for (std::size_t r = 0; r + 1 < rings; ++r) {
        const auto& a = s.rings[r];
        const auto& b = s.rings[r + 1];
        auto angle_a = [&](std::size_t i) { return i == a.size() ? angles[r][0] + 2 * kPi : angles[r][i]; };
        auto angle_b = [&](std::size_t j) { return j == b.size() ? angles[r + 1][0] + 2 * kPi : angles[r + 1][j]; };
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < a.size() || j < b.size()) {
            const bool advance_a = j == b.size() || (i < a.size() && angle_a(i + 1) <= angle_b(j + 1));
            if (advance_a) {
                s.triangles.push_back({a[i % a.size()], b[j % b.size()], a[(i + 1) % a.size()]});
                ++i;
            } else {
                s.triangles.push_back({a[i % a.size()], b[j % b.size()], b[(j + 1) % b.size()]});
                ++j;
            }
        }
    }
    const auto& last = s.rings.back();
    for (std::size_t k = 0; k < last.size(); ++k) {
        s.triangles.push_back({bottom, last[(k + 1) % last.size()], last[k]});
    }

    // Outward winding.
    for (auto& t : s.triangles) {
        const Vec3 nrm = (s.dirs[t[1]] - s.dirs[t[0]]).cross(s.dirs[t[2]] - s.dirs[t[0]]);
        if (nrm.dot(s.dirs[t[0]] + s.dirs[t[1]] + s.dirs[t[2]]) < 0.0) {
            std::swap(t[1], t[2]);
        }
    }
    return s;
}

/// Random smooth displacement field over unit directions: sums of low-frequency sinusoids.
Eigen::VectorXd smooth_field(Rng& rng, const std::vector<Vec3>& dirs)
{
    constexpr int kWaves = 4;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * dirs.size()));
    for (int axis = 0; axis < 3; ++axis) {
        for (int w = 0; w < kWaves; ++w) {
            Vec3 freq(rng.gaussian(), rng.gaussian(), rng.gaussian());
            freq *= rng.uniform(0.5, 3.0) / std::max(freq.norm(), 1e-12);
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            const double amp = rng.gaussian();
            for (std::size_t v = 0; v < dirs.size(); ++v) {
                out(static_cast<Eigen::Index>(3 * v) + axis) += amp * std::sin(freq.dot(dirs[v]) + phase);
            }
        }
    }
    return out;
}

/// Columns are orthonormalized (two passes of modified Gram-Schmidt), then scaled so that the
/// per-vertex standard deviation of a sigma-0.8 sample stays within `max_fraction` of the head
/// radius at three standard deviations.
std::vector<float> make_basis(Rng& rng, const std::vector<Vec3>& dirs, std::size_t count, double max_fraction)
{
    const auto rows = static_cast<Eigen::Index>(3 * dirs.size());
    Eigen::MatrixXd basis(rows, static_cast<Eigen::Index>(count));
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::VectorXd col = smooth_field(rng, dirs);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index p = 0; p < c; ++p) {
                col -= basis.col(p).dot(col) * basis.col(p);
            }
            col.normalize();
        }
        basis.col(c) = col;
    }
    if (count > 0) {
        double worst = 0.0;
        for (std::size_t v = 0; v < dirs.size(); ++v) {
            worst = std::max(worst, basis.middleRows(static_cast<Eigen::Index>(3 * v), 3).squaredNorm());
        }
        const double sd_per_unit = 0.8 * std::sqrt(worst);
        basis *= max_fraction * kRadii.minCoeff() / (3.0 * sd_per_unit);
    }
    std::vector<float> out(static_cast<std::size_t>(rows) * count);
    for (std::size_t c = 0; c < count; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            out[c * static_cast<std::size_t>(rows) + static_cast<std::size_t>(r)] =
                static_cast<float>(basis(r, static_cast<Eigen::Index>(c)));
        }
    }
    return out;
}

double bump(const Vec3& dir, const Vec3& center, double width)
{
    const double ang = std::acos(std::clamp(dir.dot(center.normalized()), -1.0, 1.0));
    return std::exp(-(ang * ang) / (2.0 * width * width));
}

std::vector<Region> label_regions(const std::vector<Vec3>& dirs)
{
    const Vec3 eyes[2] = {Vec3(0.35, 0.25, 0.9).normalized(), Vec3(-0.35, 0.25, 0.9).normalized()};
    const Vec3 ears[2] = {Vec3(1, 0, 0), Vec3(-1, 0, 0)};
    auto within = [](const Vec3& d, const Vec3& c, double radius) { return d.dot(c) > std::cos(radius); };

    std::vector<Region> labels(dirs.size());
    for (std::size_t v = 0; v < dirs.size(); ++v) {
        const Vec3& d = dirs[v];
        if (within(d, eyes[0], 0.22) || within(d, eyes[1], 0.22)) {
            labels[v] = Region::Eyes;
        } else if (within(d, ears[0], 0.3) || within(d, ears[1], 0.3)) {
            labels[v] = Region::Ears;
        } else if (d.z() > 1.0 / 3.0) {
            labels[v] = Region::Face;
        } else {
            labels[v] = Region::BackOfHead;
        }
    }

    // Coarse meshes can miss a patch entirely; give each region its closest unclaimed vertex.
    const std::pair<Region, Vec3> anchors[] = {
        {Region::Eyes, eyes[0]}, {Region::Ears, ears[0]}, {Region::Face, Vec3(0, 0, 1)}, {Region::BackOfHead, Vec3(0, 0, -1)}};
    std::vector<bool> claimed(dirs.size(), false);
    for (const auto& [region, center] : anchors) {
        if (std::find(labels.begin(), labels.end(), region) != labels.end()) {
            continue;
        }
        std::size_t best = dirs.size();
        for (std::size_t v = 0; v < dirs.size(); ++v) {
            if (!claimed[v] && (best == dirs.size() || dirs[v].dot(center) > dirs[best].dot(center))) {
                best = v;
            }
        }
        labels[best] = region;
        claimed[best] = true;
    }
    return labels;
}

std::size_t nearest_ring(const Sphere& s, double phi_fraction)
{
    const double idx = phi_fraction * static_cast<double>(s.rings.size() + 1) - 1.0;
    return static_cast<std::size_t>(std::clamp(std::lround(idx), 0L, static_cast<long>(s.rings.size()) - 1));
}

} // namespace

MorphableModel make_toy_model(std::uint64_t seed, std::size_t n_vertices, std::size_t n_shape, std::size_t n_expr)
{
    if (n_vertices < 12) {
        throw Error("make_toy_model: n_vertices must be at least 12");
    }
    if (n_shape + n_expr > 3 * n_vertices) {
        throw Error("make_toy_model: too many basis components for the vertex count");
    }
    Rng rng(seed);
    const Sphere sphere = ring_sphere(n_vertices);

    MorphableModel m;
    m.n_vertices = n_vertices;
    m.n_joints = 4;
    m.n_shape = n_shape;
    m.n_expr = n_expr;
    m.parents = {-1, 0, 0, 0}; // neck, jaw, left eye, right eye
    m.unit_to_mm = 1.0;

    m.template_vertices.resize(3 * n_vertices);
    for (std::size_t v = 0; v < n_vertices; ++v) {
        for (int c = 0; c < 3; ++c) {
            m.template_vertices[3 * v + static_cast<std::size_t>(c)] = static_cast<float>(sphere.dirs[v][c] * kRadii[c]);
        }
    }
    m.triangles = std::make_shared<const std::vector<Triangle>>(sphere.triangles);
    m.shape_basis = make_basis(rng, sphere.dirs, n_shape, 0.15);
    m.expression_basis = make_basis(rng, sphere.dirs, n_expr, 0.05);

    m.pose_basis.resize(m.n_pose_basis() * 3 * n_vertices);
    for (std::size_t p = 0; p < m.n_pose_basis(); ++p) {
        const Eigen::VectorXd field = smooth_field(rng, sphere.dirs);
        for (Eigen::Index r = 0; r < field.size(); ++r) {
            m.pose_basis[p * 3 * n_vertices + static_cast<std::size_t>(r)] = static_cast<float>(0.05 * field(r));
        }
    }

    // Regressor rows average one latitude ring each, which puts every joint on the vertical axis.
    m.joint_regressor.assign(m.n_joints * n_vertices, 0.0f);
    const std::size_t joint_rings[4] = {
        sphere.rings.size() - 1, nearest_ring(sphere, 0.7), nearest_ring(sphere, 0.4), nearest_ring(sphere, 0.42)};
    for (std::size_t j = 0; j < m.n_joints; ++j) {
        const auto& ring = sphere.rings[joint_rings[j]];
        for (auto v : ring) {
            m.joint_regressor[j * n_vertices + v] = 1.0f / static_cast<float>(ring.size());
        }
    }

    const Vec3 jaw_center(0.0, -0.6, 0.8);
    const Vec3 eye_centers[2] = {Vec3(0.35, 0.25, 0.9), Vec3(-0.35, 0.25, 0.9)};
    m.skin_weights.resize(n_vertices * m.n_joints);
    for (std::size_t v = 0; v < n_vertices; ++v) {
        const Vec3& d = sphere.dirs[v];
        double w[4] = {1.0, 2.0 * bump(d, jaw_center, 0.4), 4.0 * bump(d, eye_centers[0], 0.12),
                       4.0 * bump(d, eye_centers[1], 0.12)};
        const double total = w[0] + w[1] + w[2] + w[3];
        float rest = 1.0f;
        for (std::size_t k = 1; k < 4; ++k) {
            const auto wf = static_cast<float>(w[k] / total);
            m.skin_weights[v * 4 + k] = wf;
            rest -= wf;
        }
        m.skin_weights[v * 4] = rest;
    }

    m.region_labels = label_regions(sphere.dirs);
    validate(m);
    return m;
}

} // namespace faceforge
