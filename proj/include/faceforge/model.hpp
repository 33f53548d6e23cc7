#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "faceforge/rng.hpp"

namespace faceforge {

using Vec3 = Eigen::Vector3d;
using Triangle = std::array<std::uint32_t, 3>;
using TriangleList = std::shared_ptr<const std::vector<Triangle>>;

enum class Region : std::uint8_t {
    Face = 0,
    BackOfHead = 1,
    Eyes = 2,
    Ears = 3,
};

inline constexpr int kRegionCount = 4;
const char* region_name(Region r);

/// Linear head model: template, blendshape bases, joint regressor and skinning weights.
///
/// Storage is float32 so that models round-trip bit-exactly through the container format;
/// all evaluation happens in double.
///
/// Layouts (row-major):
///   template_vertices  N*3
///   shape_basis        n_shape * N*3     (component i, vertex v, axis c) at i*3N + 3v + c
///   expression_basis   n_expr  * N*3
///   pose_basis         9K      * N*3
///   joint_regressor    K * N
///   skin_weights       N * K
struct MorphableModel {
    std::size_t n_vertices = 0;
    std::size_t n_joints = 0;
    std::size_t n_shape = 0;
    std::size_t n_expr = 0;

    std::vector<float> template_vertices;
    TriangleList triangles = std::make_shared<const std::vector<Triangle>>();
    std::vector<float> shape_basis;
    std::vector<float> expression_basis;
    std::vector<float> pose_basis;
    std::vector<float> joint_regressor;
    std::vector<float> skin_weights;
    std::vector<Region> region_labels;
    /// Kinematic tree; parents[j] < j, -1 marks a root. Roots receive the global rotation.
    std::vector<int> parents;
    /// Millimetres per model unit.
    double unit_to_mm = 1.0;

    std::size_t n_triangles() const { return triangles->size(); }
    std::size_t n_pose() const { return 3 + 3 * n_joints; }
    std::size_t n_pose_basis() const { return 9 * n_joints; }

    Vec3 template_vertex(std::size_t v) const
    {
        return {template_vertices[3 * v], template_vertices[3 * v + 1], template_vertices[3 * v + 2]};
    }
    std::span<const float> shape_component(std::size_t i) const
    {
        return std::span<const float>(shape_basis).subspan(i * 3 * n_vertices, 3 * n_vertices);
    }
};

struct Coefficients {
    std::vector<double> beta;
    std::vector<double> theta;
    std::vector<double> psi;

    static Coefficients zeros(const MorphableModel& model);
};

struct Mesh {
    std::vector<Vec3> vertices;
    TriangleList triangles;
};

/// Throws FormatError (ShapeMismatch, NonFinite or Validation) on the first violated invariant.
void validate(const MorphableModel& model);

std::vector<std::uint8_t> serialize_model(const MorphableModel& model);
MorphableModel parse_model(std::vector<std::uint8_t> bytes);
MorphableModel load_model(const std::filesystem::path& path);
void save_model(const MorphableModel& model, const std::filesystem::path& path);

/// Deterministic ellipsoidal head with smooth orthogonal bases; stands in for licensed model data.
MorphableModel make_toy_model(std::uint64_t seed, std::size_t n_vertices, std::size_t n_shape, std::size_t n_expr);

/// T + B_S(beta): the shaped template, which also feeds the joint regressor.
std::vector<Vec3> shaped_template(const MorphableModel& model, std::span<const double> beta);

/// Full decode: blendshapes, joint regression from the shaped template, then linear blend
/// skinning with axis-angle rotations chained down the kinematic tree.
Mesh decode(const MorphableModel& model, const Coefficients& c);

/// Joint locations for a given shaped template.
std::vector<Vec3> regress_joints(const MorphableModel& model, std::span<const Vec3> shaped);

/// Shape coefficients i.i.d. N(0, sigma^2); pose and expression zero.
std::vector<Coefficients> sample_shape(Rng& rng, double sigma, std::size_t n, const MorphableModel& model);

Eigen::Matrix3d rodrigues(const Vec3& axis_angle);

} // namespace faceforge
