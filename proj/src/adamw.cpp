#include "faceforge/adamw.hpp"

#include <cmath>

#include "faceforge/error.hpp"

namespace faceforge {

template <typename T>
void adamw_step(std::span<ParamBlock<T>> blocks, AdamWState& state, const AdamWConfig& config)
{
    if (state.m.empty()) {
        for (const auto& b : blocks) {
            state.m.emplace_back(b.params.size(), 0.0);
            state.v.emplace_back(b.params.size(), 0.0);
        }
    }
    if (state.m.size() != blocks.size()) {
        throw DimensionError("adamw: optimizer state has " + std::to_string(state.m.size()) + " blocks, got " +
                             std::to_string(blocks.size()));
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& block = blocks[b];
        if (block.params.size() != block.grads.size() || block.params.size() != state.m[b].size()) {
            throw DimensionError("adamw: size mismatch in parameter block '" + block.name + "'");
        }
        for (T g : block.grads) {
            if (!std::isfinite(g)) {
                throw Error("adamw: non-finite gradient in parameter block '" + block.name + "'");
            }
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        auto& m = state.m[b];
        auto& v = state.v[b];
        auto params = blocks[b].params;
        auto grads = blocks[b].grads;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            const double p = params[i];
            params[i] = static_cast<T>(p - config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.eps)) -
                                       config.learning_rate * config.weight_decay * p);
        }
    }
}

template void adamw_step<float>(std::span<ParamBlock<float>>, AdamWState&, const AdamWConfig&);
template void adamw_step<double>(std::span<ParamBlock<double>>, AdamWState&, const AdamWConfig&);

} // namespace faceforge
