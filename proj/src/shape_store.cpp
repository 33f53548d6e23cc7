#include "faceforge/shape_store.hpp"

#include "json.hpp"

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"

namespace faceforge {

void write_beta(const std::filesystem::path& path, const std::vector<double>& beta)
{
    std::vector<float> f(beta.begin(), beta.end());
    binio::write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(f.data()), f.size() * sizeof(float)});
}

std::vector<double> read_beta(const std::filesystem::path& path, std::size_t expected_len)
{
    const auto bytes = binio::read_file(path);
    if (bytes.size() != expected_len * sizeof(float)) {
        throw FormatError(FormatError::Kind::ShapeMismatch, path.string() + ": expected " + std::to_string(expected_len) +
                                                                " float32 coefficients, file has " +
                                                                std::to_string(bytes.size()) + " bytes");
    }
    std::vector<float> f(expected_len);
    std::memcpy(f.data(), bytes.data(), bytes.size());
    return {f.begin(), f.end()};
}

void save_shape_index(const ShapeIndex& index, const std::filesystem::path& dir)
{
    nlohmann::ordered_json j;
    j["n_shapes"] = index.shapes.size();
    j["n_coeffs"] = index.n_coeffs;
    j["sigma"] = index.sigma;
    j["seed"] = index.seed;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : index.shapes) {
        arr.push_back({{"shape_id", e.shape_id}, {"path", e.path}});
    }
    j["shapes"] = arr;
    binio::write_text_atomic(dir / "index.json", j.dump(2) + "\n");
}

ShapeIndex load_shape_index(const std::filesystem::path& dir)
{
    const auto bytes = binio::read_file(dir / "index.json");
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        ShapeIndex idx;
        idx.n_coeffs = j.at("n_coeffs").get<std::size_t>();
        idx.sigma = j.at("sigma").get<double>();
        idx.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("shapes")) {
            idx.shapes.push_back({e.at("shape_id").get<std::string>(), e.at("path").get<std::string>()});
        }
        if (idx.shapes.size() != j.at("n_shapes").get<std::size_t>()) {
            throw FormatError(FormatError::Kind::Validation, "shape index count does not match its entries");
        }
        return idx;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::MalformedHeader, (dir / "index.json").string() + ": " + e.what());
    }
}

} // namespace faceforge
