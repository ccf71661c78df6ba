#pragma once

#include <random>
#include <string>

#include "helia/crypto.hpp"

namespace helia::test {

template <class T>
T random_fixed(std::mt19937_64& rng) {
    T out;
    for (auto& b : out.bytes) b = static_cast<std::uint8_t>(rng());
    return out;
}

template <class T>
T fixed_from_hex(const std::string& hex) {
    T out;
    for (std::size_t i = 0; i < T::kSize; ++i) out.bytes[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
    return out;
}

inline std::string data_path(const std::string& rel) { return std::string(HELIA_TEST_DATA_DIR) + "/" + rel; }

}  // namespace helia::test
