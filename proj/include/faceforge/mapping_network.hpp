#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "faceforge/model.hpp"

namespace faceforge {

enum class Activation { ReLU, LeakyReLU };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct DenseLayer {
    Eigen::MatrixXf weight; ///< out x in
    Eigen::VectorXf bias;   ///< out
};

/// Hidden affine layers each followed by the activation, then a linear output layer.
/// Inputs are multiplied by the fixed `input_scale` before the first layer.
struct MappingNetwork {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::ReLU;
    float input_scale = 1.0f;

    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    static MappingNetwork make(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                               Activation activation, std::uint64_t seed);

    std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols()); }
    std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
    std::vector<std::size_t> hidden_widths() const;
    std::size_t parameter_count() const;
};

std::vector<float> forward(const MappingNetwork& net, std::span<const float> input);

/// Columns of `inputs` are samples.
Eigen::MatrixXf forward_batch(const MappingNetwork& net, const Eigen::MatrixXf& inputs);

/// Activations kept for the backward pass: `inputs[l]` feeds layer l, `pre[l]` is its affine output.
struct ForwardTrace {
    std::vector<Eigen::MatrixXf> inputs;
    std::vector<Eigen::MatrixXf> pre;
    Eigen::MatrixXf output;
};

ForwardTrace forward_trace(const MappingNetwork& net, const Eigen::MatrixXf& inputs);

struct LayerGradient {
    Eigen::MatrixXf weight;
    Eigen::VectorXf bias;
};

/// Gradients of sum_samples <grad_output, output> with respect to every parameter.
std::vector<LayerGradient> backward(const MappingNetwork& net, const ForwardTrace& trace, const Eigen::MatrixXf& grad_output);

/// `MNET | header JSON {input_dim, hidden, output_dim, nonlinearity, input_scale} | float32 blocks`, each layer
/// as row-major weight followed by bias.
void save_network(const MappingNetwork& net, const std::filesystem::path& path);
MappingNetwork load_network(const std::filesystem::path& path);

/// Throws DimensionError when the network does not produce the model's shape coefficients.
void check_compatible(const MappingNetwork& net, const MorphableModel& model);

} // namespace faceforge
