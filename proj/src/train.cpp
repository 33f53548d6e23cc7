#include "faceforge/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "faceforge/error.hpp"
#include "faceforge/kernels.hpp"
#include "faceforge/rng.hpp"

namespace faceforge {

void TrainConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(std::string("train config: ") + name + " must be positive");
        }
    };
    positive(learning_rate, "learning_rate");
    positive(weight_decay, "weight_decay");
    positive(beta1, "beta1");
    positive(beta2, "beta2");
    positive(eps, "eps");
    positive(input_scale, "input_scale");
    if (beta1 >= 1.0 || beta2 >= 1.0) {
        throw Error("train config: beta1 and beta2 must be below 1");
    }
    if (max_epochs == 0 || patience == 0 || batch_size == 0) {
        throw Error("train config: max_epochs, patience and batch_size must be positive");
    }
    if (patience >= max_epochs) {
        throw Error("train config: patience must be smaller than max_epochs");
    }
    if (hidden.empty()) {
        throw Error("train config: at least one hidden layer is required");
    }
    for (auto h : hidden) {
        if (h == 0) {
            throw Error("train config: hidden widths must be positive");
        }
    }
}

bool EarlyStopping::update(std::size_t epoch, double val_loss)
{
    improved_ = !has_best_ || val_loss < best_;
    if (improved_) {
        best_ = val_loss;
        best_epoch_ = epoch;
        since_best_ = 0;
        has_best_ = true;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

double TrainHistory::best_val_loss() const
{
    for (const auto& e : epochs) {
        if (e.epoch == best_epoch) {
            return e.val_loss;
        }
    }
    throw Error("train history has no best epoch");
}

std::string TrainHistory::to_csv(bool include_wall) const
{
    std::string out = "epoch,train_loss,val_loss,wall_seconds\n";
    char buf[160];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.6f\n", e.epoch, e.train_loss, e.val_loss,
                      include_wall ? e.wall_seconds : 0.0);
        out += buf;
    }
    return out;
}

bool TrainHistory::same_losses(const TrainHistory& other) const
{
    if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch || stopped_early != other.stopped_early) {
        return false;
    }
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = other.epochs[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_loss != b.val_loss) {
            return false;
        }
    }
    return true;
}

namespace {

struct Dataset {
    Eigen::MatrixXf inputs;                        // 512 x n
    std::vector<const std::vector<Vec3>*> targets; // per column
};

class Targets {
public:
    Targets(const std::map<std::string, std::vector<double>>& betas, const MorphableModel& model)
        : betas_(betas), model_(model)
    {
    }

    const std::vector<Vec3>* get(const std::string& shape_id)
    {
        auto it = cache_.find(shape_id);
        if (it != cache_.end()) {
            return &it->second;
        }
        auto b = betas_.find(shape_id);
        if (b == betas_.end()) {
            throw NotFoundError("no stored beta for shape '" + shape_id + "'");
        }
        if (b->second.size() != model_.n_shape) {
            throw DimensionError("beta for shape '" + shape_id + "' has " + std::to_string(b->second.size()) +
                                 " coefficients, model has " + std::to_string(model_.n_shape));
        }
        return &cache_.emplace(shape_id, shaped_template(model_, b->second)).first->second;
    }

private:
    const std::map<std::string, std::vector<double>>& betas_;
    const MorphableModel& model_;
    std::map<std::string, std::vector<Vec3>> cache_;
};

Dataset gather(const Manifest& manifest, Split split, const EmbeddingStore* embeddings, Targets& targets)
{
    std::vector<const ImageRecord*> records;
    for (const auto& r : manifest) {
        if (r.split == split) {
            records.push_back(&r);
        }
    }
    if (records.empty()) {
        throw Error(std::string("training data: ") + std::string(to_string(split)) + " split is empty");
    }
    Dataset d;
    if (embeddings) {
        d.inputs.resize(static_cast<Eigen::Index>(kEmbeddingDim), static_cast<Eigen::Index>(records.size()));
    }
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& r = *records[k];
        if (embeddings) {
            if (!embeddings->contains(r.image_id)) {
                throw NotFoundError("missing embedding for image '" + r.image_id + "'");
            }
            const auto& e = embeddings->lookup(r.image_id);
            if (e.size() != kEmbeddingDim) {
                throw DimensionError("embedding for image '" + r.image_id + "' has wrong dimension");
            }
            d.inputs.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXf>(e.data(), static_cast<Eigen::Index>(e.size()));
        }
        d.targets.push_back(targets.get(r.shape_id));
    }
    return d;
}

std::vector<std::vector<double>> columns(const Eigen::MatrixXf& m)
{
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        auto& v = out[static_cast<std::size_t>(c)];
        v.resize(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            v[static_cast<std::size_t>(r)] = m(r, c);
        }
    }
    return out;
}

kernels::LossBatch score(const MorphableModel& model, const RegionMask& mask, const Eigen::MatrixXf& preds,
                         std::span<const std::vector<Vec3>* const> targets, int workers)
{
    const auto p = columns(preds);
    return workers == 1 ? kernels::loss_grad_batch_serial(model, mask, p, targets)
                        : kernels::loss_grad_batch_omp(model, mask, p, targets, workers);
}

double mean_loss(const MappingNetwork& net, const Dataset& d, const MorphableModel& model, const RegionMask& mask, int workers)
{
    constexpr Eigen::Index kChunk = 512;
    std::vector<double> losses;
    losses.reserve(d.targets.size());
    for (Eigen::Index begin = 0; begin < d.inputs.cols(); begin += kChunk) {
        const Eigen::Index n = std::min(kChunk, d.inputs.cols() - begin);
        const Eigen::MatrixXf preds = forward_batch(net, d.inputs.middleCols(begin, n));
        const auto b = score(model, mask, preds,
                             std::span(d.targets).subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(n)), workers);
        losses.insert(losses.end(), b.losses.begin(), b.losses.end());
    }
    return kernels::ordered_sum(losses) / static_cast<double>(losses.size());
}

} // namespace

double mean_split_loss(const MappingNetwork& net, const Manifest& manifest, Split split, const EmbeddingStore& embeddings,
                       const std::map<std::string, std::vector<double>>& betas, const MorphableModel& model,
                       const RegionMask& mask, int workers)
{
    check_compatible(net, model);
    Targets targets(betas, model);
    const Dataset d = gather(manifest, split, &embeddings, targets);
    return mean_loss(net, d, model, mask, workers);
}

double zero_prediction_loss(const Manifest& manifest, Split split, const std::map<std::string, std::vector<double>>& betas,
                            const MorphableModel& model, const RegionMask& mask)
{
    Targets targets(betas, model);
    const Dataset d = gather(manifest, split, nullptr, targets);
    const std::vector<double> zero(model.n_shape, 0.0);
    std::vector<double> losses;
    losses.reserve(d.targets.size());
    std::map<const std::vector<Vec3>*, double> per_shape;
    for (const auto* t : d.targets) {
        auto it = per_shape.find(t);
        if (it == per_shape.end()) {
            it = per_shape.emplace(t, masked_mesh_loss(model, mask, zero, *t).loss).first;
        }
        losses.push_back(it->second);
    }
    return kernels::ordered_sum(losses) / static_cast<double>(losses.size());
}

TrainResult train(const Manifest& manifest, const EmbeddingStore& embeddings,
                  const std::map<std::string, std::vector<double>>& betas, const MorphableModel& model,
                  const RegionMask& mask, const TrainConfig& config)
{
    config.validate();
    if (mask.weights.size() != model.n_vertices) {
        throw DimensionError("train: mask length does not match the model");
    }
    Targets targets(betas, model);
    const Dataset train_set = gather(manifest, Split::Train, &embeddings, targets);
    const Dataset val_set = gather(manifest, Split::Val, &embeddings, targets);

    MappingNetwork net =
        MappingNetwork::make(kEmbeddingDim, config.hidden, model.n_shape, config.activation, config.seed);
    net.input_scale = static_cast<float>(config.input_scale);
    MappingNetwork best = net;
    AdamWState state;
    const AdamWConfig opt = config.adamw();

    TrainResult result;
    result.history.batch_size = config.batch_size;
    EarlyStopping stopper(config.patience);

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    {
        EpochRecord e;
        e.epoch = 0;
        e.train_loss = mean_loss(net, train_set, model, mask, config.workers);
        e.val_loss = mean_loss(net, val_set, model, mask, config.workers);
        e.wall_seconds = elapsed();
        stopper.update(0, e.val_loss);
        result.history.epochs.push_back(e);
    }

    const auto n_train = static_cast<std::size_t>(train_set.inputs.cols());
    std::vector<std::size_t> order(n_train);
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(substream_seed(config.seed, "shuffle", {epoch}));
        shuffle(order.begin(), order.end(), rng);

        std::vector<double> sample_losses;
        sample_losses.reserve(n_train);
        for (std::size_t begin = 0; begin < n_train; begin += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, n_train - begin);
            Eigen::MatrixXf x(static_cast<Eigen::Index>(kEmbeddingDim), static_cast<Eigen::Index>(n));
            std::vector<const std::vector<Vec3>*> batch_targets(n);
            for (std::size_t k = 0; k < n; ++k) {
                const auto idx = order[begin + k];
                x.col(static_cast<Eigen::Index>(k)) = train_set.inputs.col(static_cast<Eigen::Index>(idx));
                batch_targets[k] = train_set.targets[idx];
            }
            const ForwardTrace trace = forward_trace(net, x);
            const auto scored = score(model, mask, trace.output, batch_targets, config.workers);
            sample_losses.insert(sample_losses.end(), scored.losses.begin(), scored.losses.end());

            // Batch objective is the mean sample loss.
            Eigen::MatrixXf grad_out(trace.output.rows(), trace.output.cols());
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t k = 0; k < n; ++k) {
                for (std::size_t i = 0; i < model.n_shape; ++i) {
                    grad_out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                        static_cast<float>(scored.grads[k][i] * inv_n);
                }
            }
            const auto grads = backward(net, trace, grad_out);

            std::vector<ParamBlock<float>> blocks;
            blocks.reserve(2 * net.layers.size());
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                auto& layer = net.layers[l];
                blocks.push_back({"layer" + std::to_string(l) + ".weight",
                                  std::span<float>(layer.weight.data(), static_cast<std::size_t>(layer.weight.size())),
                                  std::span<const float>(grads[l].weight.data(), static_cast<std::size_t>(grads[l].weight.size()))});
                blocks.push_back({"layer" + std::to_string(l) + ".bias",
                                  std::span<float>(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())),
                                  std::span<const float>(grads[l].bias.data(), static_cast<std::size_t>(grads[l].bias.size()))});
            }
            adamw_step<float>(blocks, state, opt);
        }

        EpochRecord e;
        e.epoch = epoch;
        e.train_loss = kernels::ordered_sum(sample_losses) / static_cast<double>(sample_losses.size());
        e.val_loss = mean_loss(net, val_set, model, mask, config.workers);
        e.wall_seconds = elapsed();
        result.history.epochs.push_back(e);

        const bool stop = stopper.update(epoch, e.val_loss);
        if (stopper.improved()) {
            best = net;
        }
        if (stop) {
            result.history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    result.history.best_epoch = stopper.best_epoch();
    result.network = std::move(best);
    return result;
}

} // namespace faceforge
