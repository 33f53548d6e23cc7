#include "faceforge/embeddings.hpp"

#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "faceforge/binio.hpp"
#include "faceforge/error.hpp"
#include "faceforge/rng.hpp"

namespace faceforge {

namespace {

constexpr std::string_view kEmbeddingMagic = "EMB1";

void check_unit(const Embedding& e)
{
    if (e.vector.size() != kEmbeddingDim) {
        throw DimensionError("embedding '" + e.image_id + "' has " + std::to_string(e.vector.size()) + " values, expected " +
                             std::to_string(kEmbeddingDim));
    }
    double sq = 0.0;
    for (float v : e.vector) {
        if (!std::isfinite(v)) {
            throw FormatError(FormatError::Kind::NonFinite, "embedding '" + e.image_id + "' is not finite");
        }
        sq += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
        throw FormatError(FormatError::Kind::Validation,
                          "embedding '" + e.image_id + "' has norm " + std::to_string(std::sqrt(sq)) + ", expected 1");
    }
}

} // namespace

Embedding make_embedding(std::string image_id, std::span<const double> raw)
{
    double sq = 0.0;
    for (double v : raw) {
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw Error("embedding '" + image_id + "' cannot be normalized");
    }
    Embedding e{std::move(image_id), std::vector<float>(raw.size())};
    for (std::size_t i = 0; i < raw.size(); ++i) {
        e.vector[i] = static_cast<float>(raw[i] / norm);
    }
    return e;
}

SyntheticEmbedder SyntheticEmbedder::make(std::uint64_t seed, std::size_t n_coeffs, std::size_t nuisance_dim, double nuisance_scale)
{
    if (n_coeffs + nuisance_dim > kEmbeddingDim) {
        throw Error("synthetic embedder: |beta| + nuisance dimension exceeds the embedding size");
    }
    Rng rng(substream_seed(seed, "embedder"));
    const auto cols = static_cast<Eigen::Index>(n_coeffs + nuisance_dim);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(kEmbeddingDim), cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            g(r, c) = rng.gaussian();
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), cols);

    SyntheticEmbedder e;
    e.projection = q.leftCols(static_cast<Eigen::Index>(n_coeffs));
    e.nuisance_basis = q.rightCols(static_cast<Eigen::Index>(nuisance_dim));
    e.nuisance_scale = nuisance_scale;
    e.seed = seed;
    return e;
}

double SyntheticEmbedder::min_singular_value() const
{
    if (projection.cols() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(projection);
    return svd.singularValues().minCoeff();
}

Embedding synth_embed(const SyntheticEmbedder& embedder, std::span<const double> beta, const ImageRecord& record)
{
    if (static_cast<Eigen::Index>(beta.size()) != embedder.projection.cols()) {
        throw DimensionError("synth_embed: beta has " + std::to_string(beta.size()) + " values, embedder expects " +
                             std::to_string(embedder.projection.cols()));
    }
    const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
    Eigen::VectorXd raw = embedder.projection * b;
    if (embedder.nuisance_scale != 0.0 && embedder.nuisance_basis.cols() > 0) {
        Rng rng(substream_seed(embedder.seed, "nuisance", record.image_id));
        Eigen::VectorXd eta(embedder.nuisance_basis.cols());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            eta(i) = rng.gaussian();
        }
        raw += embedder.nuisance_scale * (embedder.nuisance_basis * eta);
    }
    return make_embedding(record.image_id, std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())));
}

void write_embeddings(const std::vector<Embedding>& embeddings, const std::filesystem::path& path)
{
    nlohmann::ordered_json index = nlohmann::ordered_json::object();
    std::size_t offset = 0;
    for (const auto& e : embeddings) {
        check_unit(e);
        if (index.contains(e.image_id)) {
            throw FormatError(FormatError::Kind::Validation, "duplicate embedding id '" + e.image_id + "'");
        }
        index[e.image_id] = offset;
        offset += kEmbeddingDim * sizeof(float);
    }
    nlohmann::ordered_json header;
    header["format_version"] = 1;
    header["dim"] = kEmbeddingDim;
    header["count"] = embeddings.size();
    header["index"] = index;
    binio::ContainerWriter w(kEmbeddingMagic, header);
    for (const auto& e : embeddings) {
        w.append<float>(e.vector);
    }
    w.save(path);
}

std::vector<Embedding> read_embeddings(const std::filesystem::path& path)
{
    binio::ContainerReader r(binio::read_file(path), kEmbeddingMagic);
    const auto& h = r.header();
    const auto dim = binio::header_field<std::size_t>(h, "dim");
    const auto count = binio::header_field<std::size_t>(h, "count");
    if (dim != kEmbeddingDim) {
        throw FormatError(FormatError::Kind::ShapeMismatch, "embedding dimension " + std::to_string(dim) + " != 512");
    }
    auto it = h.find("index");
    if (it == h.end() || !it->is_object() || it->size() != count) {
        throw FormatError(FormatError::Kind::MalformedHeader, "corrupt embedding index");
    }
    if (r.remaining() != count * dim * sizeof(float)) {
        throw FormatError(FormatError::Kind::UnexpectedEnd, "embedding data size does not match the index");
    }
    std::vector<Embedding> out;
    out.reserve(count);
    for (const auto& [id, off] : it->items()) {
        if (!off.is_number_unsigned()) {
            throw FormatError(FormatError::Kind::MalformedHeader, "corrupt embedding index entry '" + id + "'");
        }
        const auto offset = off.get<std::size_t>();
        if (offset % (dim * sizeof(float)) != 0) {
            throw FormatError(FormatError::Kind::MalformedHeader, "corrupt embedding index entry '" + id + "'");
        }
        out.push_back({id, r.read_at<float>(offset, dim)});
    }
    return out;
}

EmbeddingStore::EmbeddingStore(std::vector<Embedding> embeddings) : embeddings_(std::move(embeddings))
{
    for (std::size_t i = 0; i < embeddings_.size(); ++i) {
        index_.emplace(embeddings_[i].image_id, i);
    }
}

const std::vector<float>& EmbeddingStore::lookup(const std::string& image_id) const
{
    auto it = index_.find(image_id);
    if (it == index_.end()) {
        throw NotFoundError("no embedding for image '" + image_id + "'");
    }
    return embeddings_[it->second].vector;
}

} // namespace faceforge
