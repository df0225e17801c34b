#pragma once

// Binary checkpoint format, all integers little-endian:
//
//   "MDCG"  u16 version  u32 epoch  u64 step
//   u32 n, n x (str key, str value)                  config echo
//   4 x record group                                  G params, G buffers, D params, D buffers
//   2 x (u64 adam step, record group)                 G optimizer, D optimizer
//   str rng_state
//
// str    = u32 byte length + UTF-8 bytes
// group  = u32 count + count x record
// record = str name, u32 rank, rank x u32 extent, numel x f32

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdcgan/tensor.hpp"

namespace mdcgan {

inline constexpr char kCheckpointMagic[4] = {'M', 'D', 'C', 'G'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Raised for malformed checkpoint bytes; carries the byte offset at
/// which decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct OptimizerRecord {
    std::uint64_t step = 0;
    std::vector<NamedArray> moments;  // "<param>.m", "<param>.v"
};

struct Checkpoint {
    std::uint32_t epoch = 0;
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<NamedArray> generator_parameters;
    std::vector<NamedArray> generator_buffers;
    std::vector<NamedArray> discriminator_parameters;
    std::vector<NamedArray> discriminator_buffers;
    OptimizerRecord generator_optimizer;
    OptimizerRecord discriminator_optimizer;
    std::string rng_state;

    /// Value of a config echo entry, or `fallback` if absent.
    std::string config_value(const std::string& key, const std::string& fallback = "") const;
};

/// Compares every field; float payloads are compared by bit pattern.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

std::size_t value_count(const std::vector<NamedArray>& arrays);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mdcgan
