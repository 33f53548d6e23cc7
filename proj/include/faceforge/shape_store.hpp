#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace faceforge {

/// Directory of `<shape_id>.f32` files (raw little-endian float32 beta) plus `index.json`.
struct ShapeIndexEntry {
    std::string shape_id;
    std::string path; ///< relative to the store directory
};

struct ShapeIndex {
    std::size_t n_coeffs = 0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::vector<ShapeIndexEntry> shapes;
};

void write_beta(const std::filesystem::path& path, const std::vector<double>& beta);
std::vector<double> read_beta(const std::filesystem::path& path, std::size_t expected_len);

void save_shape_index(const ShapeIndex& index, const std::filesystem::path& dir);
ShapeIndex load_shape_index(const std::filesystem::path& dir);

} // namespace faceforge
