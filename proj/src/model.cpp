#include "faceforge/model.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"

namespace faceforge {

namespace {

constexpr std::string_view kModelMagic = "M3DM";
constexpr int kModelFormatVersion = 1;

void expect_size(std::size_t got, std::size_t want, const char* what)
{
    if (got != want) {
        throw FormatError(FormatError::Kind::ShapeMismatch,
                          std::string(what) + " has " + std::to_string(got) + " values, expected " + std::to_string(want));
    }
}

void expect_finite(std::span<const float> values, const char* what)
{
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw FormatError(FormatError::Kind::NonFinite, std::string(what) + " has a non-finite value at index " + std::to_string(i));
        }
    }
}

void check_dims(std::span<const double> values, std::size_t want, const char* what)
{
    if (values.size() != want) {
        throw DimensionError(std::string(what) + " has length " + std::to_string(values.size()) + ", model expects " +
                             std::to_string(want));
    }
}

} // namespace

const char* region_name(Region r)
{
    switch (r) {
    case Region::Face: return "face";
    case Region::BackOfHead: return "back_of_head";
    case Region::Eyes: return "eyes";
    case Region::Ears: return "ears";
    }
    return "unknown";
}

Coefficients Coefficients::zeros(const MorphableModel& model)
{
    return {std::vector<double>(model.n_shape, 0.0), std::vector<double>(model.n_pose(), 0.0),
            std::vector<double>(model.n_expr, 0.0)};
}

void validate(const MorphableModel& m)
{
    const std::size_t n3 = 3 * m.n_vertices;
    expect_size(m.template_vertices.size(), n3, "template_vertices");
    expect_size(m.shape_basis.size(), m.n_shape * n3, "shape_basis");
    expect_size(m.expression_basis.size(), m.n_expr * n3, "expression_basis");
    expect_size(m.pose_basis.size(), m.n_pose_basis() * n3, "pose_basis");
    expect_size(m.joint_regressor.size(), m.n_joints * m.n_vertices, "joint_regressor");
    expect_size(m.skin_weights.size(), m.n_vertices * m.n_joints, "skin_weights");
    expect_size(m.region_labels.size(), m.n_vertices, "region_labels");
    expect_size(m.parents.size(), m.n_joints, "parents");

    expect_finite(m.template_vertices, "template_vertices");
    expect_finite(m.shape_basis, "shape_basis");
    expect_finite(m.expression_basis, "expression_basis");
    expect_finite(m.pose_basis, "pose_basis");
    expect_finite(m.joint_regressor, "joint_regressor");
    expect_finite(m.skin_weights, "skin_weights");
    if (!std::isfinite(m.unit_to_mm) || m.unit_to_mm <= 0.0) {
        throw FormatError(FormatError::Kind::Validation, "unit_to_mm must be positive and finite");
    }

    for (std::size_t t = 0; t < m.triangles->size(); ++t) {
        for (auto idx : (*m.triangles)[t]) {
            if (idx >= m.n_vertices) {
                throw FormatError(FormatError::Kind::Validation,
                                  "triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                                      " >= " + std::to_string(m.n_vertices));
            }
        }
    }
    for (std::size_t v = 0; v < m.n_vertices; ++v) {
        double sum = 0.0;
        for (std::size_t k = 0; k < m.n_joints; ++k) {
            const float w = m.skin_weights[v * m.n_joints + k];
            if (w < 0.0f) {
                throw FormatError(FormatError::Kind::Validation, "skin weight of vertex " + std::to_string(v) + " is negative");
            }
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw FormatError(FormatError::Kind::Validation,
                              "skin weights of vertex " + std::to_string(v) + " sum to " + std::to_string(sum));
        }
        if (static_cast<int>(m.region_labels[v]) >= kRegionCount) {
            throw FormatError(FormatError::Kind::Validation, "vertex " + std::to_string(v) + " has an unknown region label");
        }
    }
    for (std::size_t j = 0; j < m.n_joints; ++j) {
        double sum = 0.0;
        for (std::size_t v = 0; v < m.n_vertices; ++v) {
            sum += m.joint_regressor[j * m.n_vertices + v];
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw FormatError(FormatError::Kind::Validation,
                              "joint regressor row " + std::to_string(j) + " sums to " + std::to_string(sum));
        }
        if (m.parents[j] >= static_cast<int>(j) || m.parents[j] < -1) {
            throw FormatError(FormatError::Kind::Validation,
                              "joint " + std::to_string(j) + " has parent " + std::to_string(m.parents[j]) +
                                  "; parents must precede children");
        }
    }
}

std::vector<std::uint8_t> serialize_model(const MorphableModel& m)
{
    validate(m);
    nlohmann::ordered_json header = {
        {"format_version", kModelFormatVersion},
        {"n_vertices", m.n_vertices},
        {"n_triangles", m.n_triangles()},
        {"n_joints", m.n_joints},
        {"n_shape", m.n_shape},
        {"n_expr", m.n_expr},
        {"parents", m.parents},
        {"unit_to_mm", m.unit_to_mm},
    };
    binio::ContainerWriter w(kModelMagic, header);
    w.append<float>(m.template_vertices);
    w.append<std::uint32_t>({reinterpret_cast<const std::uint32_t*>(m.triangles->data()), 3 * m.n_triangles()});
    w.append<float>(m.shape_basis);
    w.append<float>(m.expression_basis);
    w.append<float>(m.pose_basis);
    w.append<float>(m.joint_regressor);
    w.append<float>(m.skin_weights);
    w.append<std::uint8_t>({reinterpret_cast<const std::uint8_t*>(m.region_labels.data()), m.region_labels.size()});
    return w.bytes();
}

MorphableModel parse_model(std::vector<std::uint8_t> bytes)
{
    binio::ContainerReader r(std::move(bytes), kModelMagic);
    const auto& h = r.header();
    if (binio::header_field<int>(h, "format_version") != kModelFormatVersion) {
        throw FormatError(FormatError::Kind::MalformedHeader, "unsupported model format version");
    }
    MorphableModel m;
    m.n_vertices = binio::header_field<std::size_t>(h, "n_vertices");
    const auto n_tri = binio::header_field<std::size_t>(h, "n_triangles");
    m.n_joints = binio::header_field<std::size_t>(h, "n_joints");
    m.n_shape = binio::header_field<std::size_t>(h, "n_shape");
    m.n_expr = binio::header_field<std::size_t>(h, "n_expr");
    m.parents = binio::header_field<std::vector<int>>(h, "parents");
    m.unit_to_mm = binio::header_field<double>(h, "unit_to_mm");

    const std::size_t n3 = 3 * m.n_vertices;
    m.template_vertices = r.read<float>(n3);
    auto tri_flat = r.read<std::uint32_t>(3 * n_tri);
    std::vector<Triangle> tris(n_tri);
    std::memcpy(tris.data(), tri_flat.data(), tri_flat.size() * sizeof(std::uint32_t));
    m.triangles = std::make_shared<const std::vector<Triangle>>(std::move(tris));
    m.shape_basis = r.read<float>(m.n_shape * n3);
    m.expression_basis = r.read<float>(m.n_expr * n3);
    m.pose_basis = r.read<float>(m.n_pose_basis() * n3);
    m.joint_regressor = r.read<float>(m.n_joints * m.n_vertices);
    m.skin_weights = r.read<float>(m.n_vertices * m.n_joints);
    auto labels = r.read<std::uint8_t>(m.n_vertices);
    m.region_labels.resize(labels.size());
    for (std::size_t v = 0; v < labels.size(); ++v) {
        m.region_labels[v] = static_cast<Region>(labels[v]);
    }
    r.expect_end();
    validate(m);
    return m;
}

MorphableModel load_model(const std::filesystem::path& path)
{
    return parse_model(binio::read_file(path));
}

void save_model(const MorphableModel& model, const std::filesystem::path& path)
{
    binio::write_file_atomic(path, serialize_model(model));
}

Eigen::Matrix3d rodrigues(const Vec3& axis_angle)
{
    const double angle = axis_angle.norm();
    if (angle == 0.0) {
        return Eigen::Matrix3d::Identity();
    }
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

std::vector<Vec3> shaped_template(const MorphableModel& m, std::span<const double> beta)
{
    check_dims(beta, m.n_shape, "beta");
    std::vector<Vec3> out(m.n_vertices);
    for (std::size_t v = 0; v < m.n_vertices; ++v) {
        out[v] = m.template_vertex(v);
    }
    for (std::size_t i = 0; i < m.n_shape; ++i) {
        if (beta[i] == 0.0) {
            continue;
        }
        const float* s = m.shape_basis.data() + i * 3 * m.n_vertices;
        for (std::size_t v = 0; v < m.n_vertices; ++v) {
            out[v] += beta[i] * Vec3(s[3 * v], s[3 * v + 1], s[3 * v + 2]);
        }
    }
    return out;
}

std::vector<Vec3> regress_joints(const MorphableModel& m, std::span<const Vec3> shaped)
{
    std::vector<Vec3> joints(m.n_joints, Vec3::Zero());
    for (std::size_t j = 0; j < m.n_joints; ++j) {
        const float* row = m.joint_regressor.data() + j * m.n_vertices;
        for (std::size_t v = 0; v < m.n_vertices; ++v) {
            joints[j] += static_cast<double>(row[v]) * shaped[v];
        }
    }
    return joints;
}

Mesh decode(const MorphableModel& m, const Coefficients& c)
{
    check_dims(c.beta, m.n_shape, "beta");
    check_dims(c.theta, m.n_pose(), "theta");
    check_dims(c.psi, m.n_expr, "psi");

    const std::size_t n = m.n_vertices;
    std::vector<Vec3> shaped = shaped_template(m, c.beta);
    const std::vector<Vec3> joints = regress_joints(m, shaped);

    auto add_basis = [&](std::span<const float> basis, std::size_t component, double weight) {
        const float* s = basis.data() + component * 3 * n;
        for (std::size_t v = 0; v < n; ++v) {
            shaped[v] += weight * Vec3(s[3 * v], s[3 * v + 1], s[3 * v + 2]);
        }
    };
    for (std::size_t e = 0; e < m.n_expr; ++e) {
        if (c.psi[e] != 0.0) {
            add_basis(m.expression_basis, e, c.psi[e]);
        }
    }

    const Eigen::Matrix3d global = rodrigues(Vec3(c.theta[0], c.theta[1], c.theta[2]));
    std::vector<Eigen::Matrix3d> local(m.n_joints);
    for (std::size_t j = 0; j < m.n_joints; ++j) {
        local[j] = rodrigues(Vec3(c.theta[3 + 3 * j], c.theta[4 + 3 * j], c.theta[5 + 3 * j]));
        const Eigen::Matrix3d delta = local[j] - Eigen::Matrix3d::Identity();
        for (int a = 0; a < 9; ++a) {
            const double f = delta(a / 3, a % 3);
            if (f != 0.0) {
                add_basis(m.pose_basis, 9 * j + static_cast<std::size_t>(a), f);
            }
        }
    }

    // World transform of each joint as an affine map x -> R x + t, with the rest-pose
    // offset folded in so that identity rotations give exactly R = I, t = 0.
    std::vector<Eigen::Matrix3d> rot(m.n_joints);
    std::vector<Vec3> trans(m.n_joints);
    for (std::size_t j = 0; j < m.n_joints; ++j) {
        const Eigen::Matrix3d r_local = m.parents[j] < 0 ? Eigen::Matrix3d(global * local[j]) : local[j];
        const Vec3 t_local = joints[j] - r_local * joints[j];
        if (m.parents[j] < 0) {
            rot[j] = r_local;
            trans[j] = t_local;
        } else {
            const auto p = static_cast<std::size_t>(m.parents[j]);
            rot[j] = rot[p] * r_local;
            trans[j] = rot[p] * t_local + trans[p];
        }
    }

    Mesh mesh{std::move(shaped), m.triangles};
    for (std::size_t v = 0; v < n; ++v) {
        const float* w = m.skin_weights.data() + v * m.n_joints;
        double wsum = 0.0;
        for (std::size_t k = 0; k < m.n_joints; ++k) {
            wsum += w[k];
        }
        const Vec3 p = mesh.vertices[v];
        Vec3 delta = Vec3::Zero();
        for (std::size_t k = 0; k < m.n_joints; ++k) {
            if (w[k] != 0.0f) {
                delta += (static_cast<double>(w[k]) / wsum) * (rot[k] * p + trans[k] - p);
            }
        }
        mesh.vertices[v] = p + delta;
    }
    return mesh;
}

std::vector<Coefficients> sample_shape(Rng& rng, double sigma, std::size_t n, const MorphableModel& model)
{
    if (!(sigma > 0.0)) {
        throw Error("sample_shape: sigma must be positive");
    }
    std::vector<Coefficients> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Coefficients c = Coefficients::zeros(model);
        for (auto& b : c.beta) {
            b = rng.gaussian(0.0, sigma);
        }
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace faceforge
