#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "helia/types.hpp"

namespace helia::units {

/// "100kbps", "2.5 Gbps", "800" (plain bps). Decimal prefixes; result rounded
/// down to whole bps. Throws std::invalid_argument.
Bps parse_bandwidth(std::string_view text);

/// "500ms", "10s", "250us", "42ns", "1.5s", "0". Throws std::invalid_argument.
DurationNs parse_duration(std::string_view text);

/// Non-negative integer, also in exponent form ("1e6"). Throws std::invalid_argument.
std::uint64_t parse_count(std::string_view text);

/// Largest unit that divides the value exactly, e.g. "40Gbps", "1234567bps".
std::string format_bandwidth(Bps bps);
std::string format_duration(DurationNs ns);

}  // namespace helia::units
