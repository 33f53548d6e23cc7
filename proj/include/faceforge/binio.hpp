#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "faceforge/error.hpp"

static_assert(std::endian::native == std::endian::little, "containers are little-endian; big-endian hosts unsupported");

namespace faceforge::binio {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// Byte sink for the `MAGIC | u32 header length | JSON header | raw blocks` layout shared by
/// every binary container in the project.
class ContainerWriter {
public:
    ContainerWriter(std::string_view magic, const nlohmann::ordered_json& header);

    template <typename T>
    void append(std::span<const T> values)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    void save(const std::filesystem::path& path) const { write_file_atomic(path, bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ContainerReader {
public:
    ContainerReader(std::vector<std::uint8_t> bytes, std::string_view magic);

    const nlohmann::ordered_json& header() const { return header_; }
    std::size_t remaining() const { return bytes_.size() - offset_; }
    std::size_t data_offset() const { return data_start_; }

    template <typename T>
    std::vector<T> read(std::size_t count)
    {
        if (count > remaining() / sizeof(T)) {
            throw FormatError(FormatError::Kind::UnexpectedEnd, "unexpected end of data");
        }
        std::vector<T> out(count);
        std::memcpy(out.data(), bytes_.data() + offset_, count * sizeof(T));
        offset_ += count * sizeof(T);
        return out;
    }

    /// Random access into the data section; `byte_offset` is relative to the data start.
    template <typename T>
    std::vector<T> read_at(std::size_t byte_offset, std::size_t count) const
    {
        const std::size_t begin = data_start_ + byte_offset;
        if (begin > bytes_.size() || count > (bytes_.size() - begin) / sizeof(T)) {
            throw FormatError(FormatError::Kind::UnexpectedEnd, "unexpected end of data");
        }
        std::vector<T> out(count);
        std::memcpy(out.data(), bytes_.data() + begin, count * sizeof(T));
        return out;
    }

    void expect_end() const;

private:
    std::vector<std::uint8_t> bytes_;
    nlohmann::ordered_json header_;
    std::size_t offset_ = 0;
    std::size_t data_start_ = 0;
};

/// Convenience for header fields: throws MalformedHeader when absent or mistyped.
template <typename T>
T header_field(const nlohmann::ordered_json& header, const char* key)
{
    auto it = header.find(key);
    if (it == header.end()) {
        throw FormatError(FormatError::Kind::MalformedHeader, std::string("header missing field '") + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::ordered_json::exception&) {
        throw FormatError(FormatError::Kind::MalformedHeader, std::string("header field '") + key + "' has wrong type");
    }
}

} // namespace faceforge::binio
