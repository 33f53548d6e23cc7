#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace faceforge {

/// Caller-owned random stream. Wraps mt19937_64 with distribution code defined here, so that
/// draws are identical across standard libraries (std::normal_distribution is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    double gaussian();
    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Bijective on 32-bit integers.
std::uint32_t mix32(std::uint32_t x);

/// Seed for the named substream `(seed, stage, ids...)`. Stages rerun independently because the
/// substream depends only on these values.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stage, std::initializer_list<std::uint64_t> ids = {});
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stage, std::string_view id);

/// Fisher-Yates with Rng::below so the permutation is library independent.
template <typename It>
void shuffle(It first, It last, Rng& rng)
{
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = rng.below(i);
        std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1), first + static_cast<std::ptrdiff_t>(j));
    }
}

} // namespace faceforge
