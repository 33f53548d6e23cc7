#pragma once

#include <span>
#include <string>
#include <vector>

namespace faceforge {

struct AdamWConfig {
    double learning_rate = 1e-5;
    double weight_decay = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct ParamBlock {
    std::string name;
    std::span<T> params;
    std::span<const T> grads;
};

/// Moment estimates per block, in double regardless of the parameter type.
struct AdamWState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam step with decoupled weight decay:
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p
/// Gradients are checked for finiteness before anything is modified.
template <typename T>
void adamw_step(std::span<ParamBlock<T>> blocks, AdamWState& state, const AdamWConfig& config);

} // namespace faceforge
