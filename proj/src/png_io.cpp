#include <png.h>

#include <cstring>
#include <fstream>

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"
#include "faceforge/render.hpp"

namespace faceforge {

namespace fs = std::filesystem;

fs::path sidecar_path(const fs::path& png_path)
{
    fs::path p = png_path;
    p.replace_extension(".json");
    return p;
}

void export_png(const DepthImage& image, const fs::path& path)
{
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
        throw DimensionError("export_png: pixel count does not match image size");
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw FormatError(FormatError::Kind::Io, std::string("png encode failed: ") + png.message);
    }
    std::vector<std::uint8_t> encoded(size);
    if (!png_image_write_to_memory(&png, encoded.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw FormatError(FormatError::Kind::Io, std::string("png encode failed: ") + png.message);
    }
    encoded.resize(size);
    binio::write_file_atomic(path, encoded);

    const fs::path side = sidecar_path(path);
    if (image.metadata) {
        const auto& m = *image.metadata;
        nlohmann::json j = {
            {"near", m.near},
            {"far", m.far},
            {"min_depth", m.min_depth},
            {"max_depth", m.max_depth},
            {"fov_degrees", m.fov_degrees},
            {"distance", m.distance},
            {"resolution", m.resolution},
        };
        binio::write_text_atomic(side, j.dump(2) + "\n");
    } else if (fs::exists(side)) {
        fs::remove(side);
    }
}

DepthImage import_png(const fs::path& path)
{
    const auto bytes = binio::read_file(path);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw FormatError(FormatError::Kind::Validation, path.string() + ": malformed png: " + png.message);
    }
    if (png.format != PNG_FORMAT_GRAY) {
        png_image_free(&png);
        throw FormatError(FormatError::Kind::Validation, path.string() + ": expected 8-bit grayscale png");
    }
    DepthImage img;
    img.width = static_cast<int>(png.width);
    img.height = static_cast<int>(png.height);
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        throw FormatError(FormatError::Kind::Validation, path.string() + ": malformed png: " + png.message);
    }

    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        std::ifstream in(side);
        try {
            const auto j = nlohmann::json::parse(in);
            img.metadata = DepthMetadata{j.at("near").get<double>(),      j.at("far").get<double>(),
                                         j.at("min_depth").get<double>(), j.at("max_depth").get<double>(),
                                         j.at("fov_degrees").get<double>(), j.at("distance").get<double>(),
                                         j.at("resolution").get<int>()};
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatError::Kind::MalformedHeader, side.string() + ": malformed sidecar: " + e.what());
        }
    }
    return img;
}

} // namespace faceforge
