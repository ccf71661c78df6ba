#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace helia {

using AsId = std::uint64_t;
using IfId = std::uint16_t;
/// Unsigned nanoseconds since the Unix epoch (wire representation).
using TimeNs = std::uint64_t;
/// Signed duration in nanoseconds.
using DurationNs = std::int64_t;
/// Bandwidth in bits per second.
using Bps = std::uint64_t;

/// Interface 0 is the AS-internal interface.
inline constexpr IfId kInternalInterface = 0;

inline constexpr DurationNs kNsPerMs = 1'000'000;
inline constexpr DurationNs kNsPerSec = 1'000'000'000;

enum class Direction : std::uint8_t { forward = 0, backward = 1 };

inline constexpr std::string_view to_string(Direction d) {
    return d == Direction::forward ? "fwd" : "bwd";
}

/// Signed difference a - b of two wire timestamps.
inline constexpr DurationNs time_diff(TimeNs a, TimeNs b) {
    return static_cast<DurationNs>(a - b);
}

inline constexpr TimeNs time_add(TimeNs t, DurationNs d) {
    return static_cast<TimeNs>(static_cast<DurationNs>(t) + d);
}

/// Directed interface pair (ingress -> egress) inside one AS.
struct IfPair {
    IfId in = 0;
    IfId out = 0;
    friend constexpr bool operator==(IfPair, IfPair) = default;
    friend constexpr auto operator<=>(IfPair, IfPair) = default;
};

std::string to_hex(const std::uint8_t* data, std::size_t n);

template <std::size_t N>
std::string to_hex(const std::array<std::uint8_t, N>& a) {
    return to_hex(a.data(), N);
}

}  // namespace helia
