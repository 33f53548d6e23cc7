#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "faceforge/manifest.hpp"

namespace faceforge {

inline constexpr std::size_t kEmbeddingDim = 512;

struct Embedding {
    std::string image_id;
    std::vector<float> vector;
};

/// Normalizes `raw` to unit length; throws on zero or non-finite input.
Embedding make_embedding(std::string image_id, std::span<const double> raw);

/// Stand-in for an identity network: a fixed linear image of beta plus per-image nuisance.
/// `projection` and `nuisance_basis` are the two blocks of one orthonormal 512 x (|beta| + q)
/// frame, so the nuisance never aliases shape.
struct SyntheticEmbedder {
    Eigen::MatrixXd projection;     ///< 512 x |beta|
    Eigen::MatrixXd nuisance_basis; ///< 512 x q
    double nuisance_scale = 0.0;
    std::uint64_t seed = 0;

    static SyntheticEmbedder make(std::uint64_t seed, std::size_t n_coeffs, std::size_t nuisance_dim, double nuisance_scale);

    double min_singular_value() const;
};

/// normalize(projection * beta + nuisance_scale * nuisance_basis * eta), eta ~ N(0, I) seeded by the image id.
Embedding synth_embed(const SyntheticEmbedder& embedder, std::span<const double> beta, const ImageRecord& record);

/// `EMB1 | header JSON {dim, count, index: {image_id: byte offset}} | float32 blocks`.
void write_embeddings(const std::vector<Embedding>& embeddings, const std::filesystem::path& path);
std::vector<Embedding> read_embeddings(const std::filesystem::path& path);

class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::vector<Embedding> embeddings);
    static EmbeddingStore load(const std::filesystem::path& path) { return EmbeddingStore(read_embeddings(path)); }

    /// Throws NotFoundError for unknown ids.
    const std::vector<float>& lookup(const std::string& image_id) const;
    bool contains(const std::string& image_id) const { return index_.count(image_id) != 0; }
    std::size_t size() const { return embeddings_.size(); }
    const std::vector<Embedding>& all() const { return embeddings_; }

private:
    std::vector<Embedding> embeddings_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace faceforge
