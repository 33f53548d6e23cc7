#include "faceforge/mesh_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"

namespace faceforge {

namespace fs = std::filesystem;

namespace {

FormatError mesh_error(const fs::path& path, const std::string& what)
{
    return FormatError(FormatError::Kind::Validation, path.string() + ": " + what);
}

Mesh read_obj(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    }
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) {
                throw mesh_error(path, "bad vertex on line " + std::to_string(line_no));
            }
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ls >> tok) {
                long idx = 0;
                const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
                if (res.ec != std::errc()) {
                    throw mesh_error(path, "bad face index on line " + std::to_string(line_no));
                }
                idx = idx < 0 ? static_cast<long>(verts.size()) + idx : idx - 1;
                if (idx < 0) {
                    throw mesh_error(path, "face index out of range on line " + std::to_string(line_no));
                }
                poly.push_back(static_cast<std::uint32_t>(idx));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                tris.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
    }
    for (const auto& t : tris) {
        for (auto i : t) {
            if (i >= verts.size()) {
                throw mesh_error(path, "face references missing vertex " + std::to_string(i + 1));
            }
        }
    }
    return {std::move(verts), std::make_shared<const std::vector<Triangle>>(std::move(tris))};
}

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

std::size_t ply_size(const std::string& t)
{
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw Error("unknown ply type '" + t + "'");
}

double ply_binary_value(const std::uint8_t* p, const std::string& t)
{
    auto load = [p](auto v) {
        std::memcpy(&v, p, sizeof(v));
        return static_cast<double>(v);
    };
    if (t == "char" || t == "int8") return load(std::int8_t{});
    if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
    if (t == "short" || t == "int16") return load(std::int16_t{});
    if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
    if (t == "int" || t == "int32") return load(std::int32_t{});
    if (t == "uint" || t == "uint32") return load(std::uint32_t{});
    if (t == "float" || t == "float32") return load(float{});
    return load(double{});
}

Mesh read_ply(const fs::path& path)
{
    const auto bytes = binio::read_file(path);
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const auto end_header = text.find("end_header");
    if (text.substr(0, 3) != "ply" || end_header == std::string_view::npos) {
        throw mesh_error(path, "not a ply file");
    }
    std::size_t body = text.find('\n', end_header);
    if (body == std::string_view::npos) {
        throw mesh_error(path, "truncated ply header");
    }
    ++body;

    std::istringstream header{std::string(text.substr(0, end_header))};
    std::string line;
    std::string format;
    std::vector<PlyElement> elements;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            ls >> format;
        } else if (tag == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property" && !elements.empty()) {
            PlyProperty p;
            ls >> p.type;
            if (p.type == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type;
            }
            ls >> p.name;
            elements.back().props.push_back(p);
        }
    }
    if (format != "ascii" && format != "binary_little_endian") {
        throw mesh_error(path, "unsupported ply format '" + format + "'");
    }

    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    const bool ascii = format == "ascii";
    std::istringstream ascii_body;
    if (ascii) {
        ascii_body.str(std::string(text.substr(body)));
    }
    std::size_t offset = body;
    auto next_value = [&](const std::string& type) -> double {
        if (ascii) {
            double v = 0.0;
            if (!(ascii_body >> v)) {
                throw mesh_error(path, "unexpected end of ply data");
            }
            return v;
        }
        const std::size_t sz = ply_size(type);
        if (offset + sz > bytes.size()) {
            throw mesh_error(path, "unexpected end of ply data");
        }
        const double v = ply_binary_value(bytes.data() + offset, type);
        offset += sz;
        return v;
    };

    for (const auto& e : elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        int ix = -1, iy = -1, iz = -1;
        for (std::size_t k = 0; k < e.props.size(); ++k) {
            if (e.props[k].name == "x") ix = static_cast<int>(k);
            if (e.props[k].name == "y") iy = static_cast<int>(k);
            if (e.props[k].name == "z") iz = static_cast<int>(k);
        }
        if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) {
            throw mesh_error(path, "vertex element lacks x/y/z");
        }
        for (std::size_t r = 0; r < e.count; ++r) {
            Vec3 p = Vec3::Zero();
            for (std::size_t k = 0; k < e.props.size(); ++k) {
                const auto& prop = e.props[k];
                if (prop.is_list) {
                    const auto n = static_cast<std::size_t>(next_value(prop.count_type));
                    std::vector<std::uint32_t> poly(n);
                    for (auto& idx : poly) {
                        idx = static_cast<std::uint32_t>(next_value(prop.type));
                    }
                    if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                        for (std::size_t q = 1; q + 1 < poly.size(); ++q) {
                            tris.push_back({poly[0], poly[q], poly[q + 1]});
                        }
                    }
                    continue;
                }
                const double v = next_value(prop.type);
                if (static_cast<int>(k) == ix) p.x() = v;
                if (static_cast<int>(k) == iy) p.y() = v;
                if (static_cast<int>(k) == iz) p.z() = v;
            }
            if (is_vertex) {
                verts.push_back(p);
            }
        }
    }
    for (const auto& t : tris) {
        for (auto i : t) {
            if (i >= verts.size()) {
                throw mesh_error(path, "face references missing vertex " + std::to_string(i));
            }
        }
    }
    return {std::move(verts), std::make_shared<const std::vector<Triangle>>(std::move(tris))};
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

Mesh read_mesh(const fs::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".obj" || ext == ".OBJ") {
        return read_obj(path);
    }
    if (ext == ".ply" || ext == ".PLY") {
        return read_ply(path);
    }
    throw FormatError(FormatError::Kind::Validation, path.string() + ": unsupported mesh extension");
}

void write_obj(const Mesh& mesh, const fs::path& path)
{
    std::string out;
    for (const auto& v : mesh.vertices) {
        out += "v " + format_double(v.x()) + ' ' + format_double(v.y()) + ' ' + format_double(v.z()) + '\n';
    }
    if (mesh.triangles) {
        for (const auto& t : *mesh.triangles) {
            out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' + std::to_string(t[2] + 1) + '\n';
        }
    }
    binio::write_text_atomic(path, out);
}

void write_ply(const Mesh& mesh, const fs::path& path)
{
    const std::size_t n_tri = mesh.triangles ? mesh.triangles->size() : 0;
    std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(mesh.vertices.size()) +
                      "\nproperty double x\nproperty double y\nproperty double z\n";
    out += "element face " + std::to_string(n_tri) + "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const auto& v : mesh.vertices) {
        out += format_double(v.x()) + ' ' + format_double(v.y()) + ' ' + format_double(v.z()) + '\n';
    }
    for (std::size_t t = 0; t < n_tri; ++t) {
        const auto& tri = (*mesh.triangles)[t];
        out += "3 " + std::to_string(tri[0]) + ' ' + std::to_string(tri[1]) + ' ' + std::to_string(tri[2]) + '\n';
    }
    binio::write_text_atomic(path, out);
}

std::map<std::string, Vec3> read_landmark_points(const fs::path& path)
{
    const auto bytes = binio::read_file(path);
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        std::map<std::string, Vec3> out;
        for (const auto& [name, v] : j.items()) {
            const auto xyz = v.get<std::vector<double>>();
            if (xyz.size() != 3) {
                throw FormatError(FormatError::Kind::Validation, path.string() + ": landmark '" + name + "' is not a 3-vector");
            }
            out[name] = Vec3(xyz[0], xyz[1], xyz[2]);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::MalformedHeader, path.string() + ": " + e.what());
    }
}

void write_landmark_points(const std::map<std::string, Vec3>& points, const fs::path& path)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, p] : points) {
        j[name] = {p.x(), p.y(), p.z()};
    }
    binio::write_text_atomic(path, j.dump(2) + "\n");
}

std::map<std::string, std::uint32_t> read_landmark_indices(const fs::path& path)
{
    const auto bytes = binio::read_file(path);
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        std::map<std::string, std::uint32_t> out;
        for (const auto& [name, v] : j.items()) {
            out[name] = v.get<std::uint32_t>();
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::MalformedHeader, path.string() + ": " + e.what());
    }
}

void write_landmark_indices(const std::map<std::string, std::uint32_t>& indices, const fs::path& path)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, idx] : indices) {
        j[name] = idx;
    }
    binio::write_text_atomic(path, j.dump(2) + "\n");
}

} // namespace faceforge
