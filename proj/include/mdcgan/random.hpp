#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mdcgan {

/// Seeded 64-bit Mersenne Twister with distribution code that is ours,
/// so streams are identical across standard library implementations and
/// the full state can be checkpointed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller; one normal per call, no cached second value.
    double normal(double mean = 0.0, double stddev = 1.0);

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <class Item>
    void shuffle(std::vector<Item>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::string state() const;
    void set_state(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mdcgan
