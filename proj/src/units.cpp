#include "helia/units.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <utility>

namespace helia::units {

namespace {

std::string lower(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

// Splits "12.5mbps" into 12.5 and "mbps".
std::pair<double, std::string> split_number(std::string_view text, const char* what) {
    const std::string s = lower(text);
    if (s.empty()) throw std::invalid_argument(std::string("empty ") + what);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || !std::isfinite(v) || v < 0) {
        throw std::invalid_argument(std::string("bad ") + what + ": '" + std::string(text) + "'");
    }
    return {v, std::string(end)};
}

}  // namespace

Bps parse_bandwidth(std::string_view text) {
    auto [v, unit] = split_number(text, "bandwidth");
    static const std::array<std::pair<const char*, double>, 5> kUnits{{
        {"bps", 1.0}, {"kbps", 1e3}, {"mbps", 1e6}, {"gbps", 1e9}, {"tbps", 1e12}}};
    double scale = 0;
    if (unit.empty()) scale = 1.0;
    for (const auto& [name, s] : kUnits) {
        if (unit == name) scale = s;
    }
    if (scale == 0) throw std::invalid_argument("unknown bandwidth unit in '" + std::string(text) + "'");
    const double bps = v * scale;
    if (bps >= 1.8e19) throw std::invalid_argument("bandwidth out of range: '" + std::string(text) + "'");
    return static_cast<Bps>(std::floor(bps + 1e-6));
}

DurationNs parse_duration(std::string_view text) {
    auto [v, unit] = split_number(text, "duration");
    double scale = 0;
    if (unit == "ns") scale = 1;
    else if (unit == "us") scale = 1e3;
    else if (unit == "ms") scale = 1e6;
    else if (unit == "s") scale = 1e9;
    else if (unit.empty() && v == 0) scale = 1;
    if (scale == 0) throw std::invalid_argument("duration needs a unit (ns, us, ms, s): '" + std::string(text) + "'");
    const double ns = v * scale;
    if (ns >= 9.2e18) throw std::invalid_argument("duration out of range: '" + std::string(text) + "'");
    return static_cast<DurationNs>(std::llround(ns));
}

std::uint64_t parse_count(std::string_view text) {
    auto [v, unit] = split_number(text, "count");
    if (!unit.empty() || v != std::floor(v) || v >= 1.8e19) {
        throw std::invalid_argument("bad count: '" + std::string(text) + "'");
    }
    return static_cast<std::uint64_t>(v);
}

std::string format_bandwidth(Bps bps) {
    static const std::array<std::pair<const char*, Bps>, 4> kUnits{{
        {"Gbps", 1'000'000'000}, {"Mbps", 1'000'000}, {"kbps", 1'000}, {"bps", 1}}};
    for (const auto& [name, s] : kUnits) {
        if (bps >= s && bps % s == 0) return std::to_string(bps / s) + name;
    }
    return "0bps";
}

std::string format_duration(DurationNs ns) {
    const char* sign = ns < 0 ? "-" : "";
    const auto a = static_cast<std::uint64_t>(ns < 0 ? -ns : ns);
    if (a == 0) return "0s";
    if (a % 1'000'000'000 == 0) return sign + std::to_string(a / 1'000'000'000) + "s";
    if (a % 1'000'000 == 0) return sign + std::to_string(a / 1'000'000) + "ms";
    if (a % 1'000 == 0) return sign + std::to_string(a / 1'000) + "us";
    return sign + std::to_string(a) + "ns";
}

}  // namespace helia::units
