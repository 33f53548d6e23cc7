#include "faceforge/binio.hpp"

#include <fstream>
#include <iterator>

namespace faceforge::binio {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError(FormatError::Kind::Io, "cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw FormatError(FormatError::Kind::Io, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, std::string_view text)
{
    write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

ContainerWriter::ContainerWriter(std::string_view magic, const nlohmann::ordered_json& header)
{
    const std::string text = header.dump();
    const auto len = static_cast<std::uint32_t>(text.size());
    bytes_.insert(bytes_.end(), magic.begin(), magic.end());
    const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
    bytes_.insert(bytes_.end(), lp, lp + sizeof(len));
    bytes_.insert(bytes_.end(), text.begin(), text.end());
}

ContainerReader::ContainerReader(std::vector<std::uint8_t> bytes, std::string_view magic) : bytes_(std::move(bytes))
{
    if (bytes_.size() < magic.size() || std::memcmp(bytes_.data(), magic.data(), magic.size()) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, "bad magic, expected '" + std::string(magic) + "'");
    }
    offset_ = magic.size();
    auto len = read<std::uint32_t>(1)[0];
    if (len > remaining()) {
        throw FormatError(FormatError::Kind::UnexpectedEnd, "unexpected end of data");
    }
    try {
        header_ = nlohmann::ordered_json::parse(bytes_.begin() + static_cast<std::ptrdiff_t>(offset_),
                                        bytes_.begin() + static_cast<std::ptrdiff_t>(offset_ + len));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw FormatError(FormatError::Kind::MalformedHeader, std::string("malformed header: ") + e.what());
    }
    if (!header_.is_object()) {
        throw FormatError(FormatError::Kind::MalformedHeader, "malformed header: not a JSON object");
    }
    offset_ += len;
    data_start_ = offset_;
}

void ContainerReader::expect_end() const
{
    if (remaining() != 0) {
        throw FormatError(FormatError::Kind::TrailingData, std::to_string(remaining()) + " trailing bytes after data");
    }
}

} // namespace faceforge::binio
