#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace helia {

using Bytes = std::vector<std::uint8_t>;

inline void store_be16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v >> 8);
    p[1] = static_cast<std::uint8_t>(v);
}

inline void store_be64(std::uint8_t* p, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) {
        p[i] = static_cast<std::uint8_t>(v);
        v >>= 8;
    }
}

inline std::uint16_t load_be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint64_t load_be64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
    return v;
}

/// Append-only big-endian encoder.
class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        std::uint8_t b[2];
        store_be16(b, v);
        out_.insert(out_.end(), b, b + 2);
    }
    void u64(std::uint64_t v) {
        std::uint8_t b[8];
        store_be64(b, v);
        out_.insert(out_.end(), b, b + 8);
    }
    void raw(std::span<const std::uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }

private:
    Bytes& out_;
};

/// Bounds-checked big-endian decoder; every read fails (nullopt / false) past the end.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t position() const { return pos_; }

    std::optional<std::uint8_t> u8() {
        if (remaining() < 1) return std::nullopt;
        return in_[pos_++];
    }
    std::optional<std::uint16_t> u16() {
        if (remaining() < 2) return std::nullopt;
        const auto v = load_be16(in_.data() + pos_);
        pos_ += 2;
        return v;
    }
    std::optional<std::uint64_t> u64() {
        if (remaining() < 8) return std::nullopt;
        const auto v = load_be64(in_.data() + pos_);
        pos_ += 8;
        return v;
    }
    bool raw(std::span<std::uint8_t> out) {
        if (remaining() < out.size()) return false;
        std::memcpy(out.data(), in_.data() + pos_, out.size());
        pos_ += out.size();
        return true;
    }
    std::span<const std::uint8_t> rest() {
        auto r = in_.subspan(pos_);
        pos_ = in_.size();
        return r;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

/// Parses a hex string (whitespace not allowed); nullopt on odd length or bad digit.
std::optional<Bytes> from_hex(std::string_view hex);

}  // namespace helia
