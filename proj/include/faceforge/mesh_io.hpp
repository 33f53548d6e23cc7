#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "faceforge/model.hpp"

namespace faceforge {

/// OBJ (`v` / `f` records, polygons fan-triangulated) or PLY (ascii or binary little-endian),
/// chosen by extension. Point clouds load with an empty triangle list.
Mesh read_mesh(const std::filesystem::path& path);

void write_obj(const Mesh& mesh, const std::filesystem::path& path);
void write_ply(const Mesh& mesh, const std::filesystem::path& path);

/// `{name: [x, y, z]}`
std::map<std::string, Vec3> read_landmark_points(const std::filesystem::path& path);
void write_landmark_points(const std::map<std::string, Vec3>& points, const std::filesystem::path& path);

/// `{name: vertex_index}`
std::map<std::string, std::uint32_t> read_landmark_indices(const std::filesystem::path& path);
void write_landmark_indices(const std::map<std::string, std::uint32_t>& indices, const std::filesystem::path& path);

} // namespace faceforge
