#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "faceforge/adamw.hpp"
#include "faceforge/embeddings.hpp"
#include "faceforge/loss.hpp"
#include "faceforge/manifest.hpp"
#include "faceforge/mapping_network.hpp"
#include "faceforge/model.hpp"

namespace faceforge {

struct TrainConfig {
    double learning_rate = 1e-5;
    double weight_decay = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden = {300, 300, 300};
    Activation activation = Activation::ReLU;
    /// Fixed multiplier on the unit-norm embeddings; see MappingNetwork::input_scale.
    double input_scale = 0.1;
    int workers = 1;

    void validate() const;
    AdamWConfig adamw() const { return {learning_rate, weight_decay, beta1, beta2, eps}; }
};

/// Tracks the best validation value; `update` returns true once `patience` consecutive epochs
/// have passed without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    bool update(std::size_t epoch, double val_loss);
    bool improved() const { return improved_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_value() const { return best_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0.0;
    bool has_best_ = false;
    bool improved_ = false;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_seconds = 0.0;
};

/// Epoch 0 scores the initial network; epochs 1.. are training epochs.
struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    std::size_t batch_size = 0;

    double best_val_loss() const;
    /// `epoch,train_loss,val_loss,wall_seconds`
    std::string to_csv(bool include_wall = true) const;
    /// True when epochs and losses agree bit for bit; wall time is ignored.
    bool same_losses(const TrainHistory& other) const;
};

struct TrainResult {
    MappingNetwork network;
    TrainHistory history;
};

/// Ground-truth meshes are the shaped templates of `betas[shape_id]`.
TrainResult train(const Manifest& manifest, const EmbeddingStore& embeddings,
                  const std::map<std::string, std::vector<double>>& betas, const MorphableModel& model,
                  const RegionMask& mask, const TrainConfig& config);

/// Mean masked mesh loss of `net` over the records of one split.
double mean_split_loss(const MappingNetwork& net, const Manifest& manifest, Split split, const EmbeddingStore& embeddings,
                       const std::map<std::string, std::vector<double>>& betas, const MorphableModel& model,
                       const RegionMask& mask, int workers = 1);

/// Mean loss of predicting beta = 0 for every record of the split.
double zero_prediction_loss(const Manifest& manifest, Split split, const std::map<std::string, std::vector<double>>& betas,
                            const MorphableModel& model, const RegionMask& mask);

} // namespace faceforge
