#include "mdcgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mdcgan {

namespace {

class Writer {
public:
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

    void record(const NamedArray& a) {
        str(a.name);
        u32(static_cast<std::uint32_t>(a.shape.size()));
        for (auto extent : a.shape) u32(static_cast<std::uint32_t>(extent));
        for (float v : a.values) f32(v);
    }
    void group(const std::vector<NamedArray>& arrays) {
        u32(static_cast<std::uint32_t>(arrays.size()));
        for (const auto& a : arrays) record(a);
    }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const std::size_t start = pos_;
        const std::uint32_t n = u32();
        need(n, start);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void expect_magic() {
        need(4, 0);
        if (std::memcmp(bytes_.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad magic bytes", 0);
        pos_ = 4;
    }

    NamedArray record() {
        NamedArray a;
        a.name = str();
        const std::size_t rank_at = pos_;
        const std::uint32_t rank = u32();
        if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), rank_at);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            a.shape.push_back(u32());
            count *= a.shape.back();
        }
        need(count * 4, pos_);
        a.values.resize(count);
        for (auto& v : a.values) v = f32();
        return a;
    }
    std::vector<NamedArray> group() {
        const std::size_t at = pos_;
        const std::uint32_t n = u32();
        // Each record needs at least 8 bytes (empty name + rank 0 still has a value).
        if (static_cast<std::size_t>(n) * 8 > bytes_.size() - pos_) {
            throw FormatError("record count " + std::to_string(n) + " exceeds remaining bytes", at);
        }
        std::vector<NamedArray> out;
        out.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) out.push_back(record());
        return out;
    }

private:
    void need(std::size_t n, std::size_t at) const {
        if (n > bytes_.size() - pos_) {
            throw FormatError("truncated checkpoint (needed " + std::to_string(n) + " more bytes)", at);
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n), pos_);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

bool arrays_equal(const std::vector<NamedArray>& a, const std::vector<NamedArray>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].values.size() != b[i].values.size()) return false;
        if (!a[i].values.empty() &&
            std::memcmp(a[i].values.data(), b[i].values.data(), a[i].values.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

std::string Checkpoint::config_value(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : config)
        if (k == key) return v;
    return fallback;
}

std::size_t value_count(const std::vector<NamedArray>& arrays) {
    std::size_t n = 0;
    for (const auto& a : arrays) n += a.values.size();
    return n;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
    return a.epoch == b.epoch && a.step == b.step && a.config == b.config &&
           arrays_equal(a.generator_parameters, b.generator_parameters) &&
           arrays_equal(a.generator_buffers, b.generator_buffers) &&
           arrays_equal(a.discriminator_parameters, b.discriminator_parameters) &&
           arrays_equal(a.discriminator_buffers, b.discriminator_buffers) &&
           a.generator_optimizer.step == b.generator_optimizer.step &&
           arrays_equal(a.generator_optimizer.moments, b.generator_optimizer.moments) &&
           a.discriminator_optimizer.step == b.discriminator_optimizer.step &&
           arrays_equal(a.discriminator_optimizer.moments, b.discriminator_optimizer.moments) &&
           a.rng_state == b.rng_state;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp) {
    Writer w;
    w.raw(kCheckpointMagic, 4);
    w.u16(kCheckpointVersion);
    w.u32(cp.epoch);
    w.u64(cp.step);
    w.u32(static_cast<std::uint32_t>(cp.config.size()));
    for (const auto& [key, value] : cp.config) {
        w.str(key);
        w.str(value);
    }
    w.group(cp.generator_parameters);
    w.group(cp.generator_buffers);
    w.group(cp.discriminator_parameters);
    w.group(cp.discriminator_buffers);
    w.u64(cp.generator_optimizer.step);
    w.group(cp.generator_optimizer.moments);
    w.u64(cp.discriminator_optimizer.step);
    w.group(cp.discriminator_optimizer.moments);
    w.str(cp.rng_state);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.expect_magic();
    const std::size_t version_at = r.offset();
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    Checkpoint cp;
    cp.epoch = r.u32();
    cp.step = r.u64();
    const std::size_t config_at = r.offset();
    const std::uint32_t entries = r.u32();
    if (static_cast<std::size_t>(entries) * 8 > bytes.size() - r.offset()) {
        throw FormatError("config entry count " + std::to_string(entries) + " exceeds remaining bytes", config_at);
    }
    for (std::uint32_t i = 0; i < entries; ++i) {
        auto key = r.str();
        auto value = r.str();
        cp.config.emplace_back(std::move(key), std::move(value));
    }
    cp.generator_parameters = r.group();
    cp.generator_buffers = r.group();
    cp.discriminator_parameters = r.group();
    cp.discriminator_buffers = r.group();
    cp.generator_optimizer.step = r.u64();
    cp.generator_optimizer.moments = r.group();
    cp.discriminator_optimizer.step = r.u64();
    cp.discriminator_optimizer.moments = r.group();
    cp.rng_state = r.str();
    if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.offset());
    return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(checkpoint);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace mdcgan
