#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "helia/types.hpp"

namespace helia::crypto {

/// Fixed-size opaque byte string; Tag makes each key/MAC kind a distinct type.
template <std::size_t N, class Tag>
struct FixedBytes {
    static constexpr std::size_t kSize = N;
    std::array<std::uint8_t, N> bytes{};

    std::span<const std::uint8_t, N> view() const { return bytes; }
    friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
};

/// AS-local secret K_i. Held by border routers only; there is no wire encoding for it.
using SecretKey = FixedBytes<16, struct SecretKeyTag>;
/// Key shared between a provider AS and a remote source AS, derived from the provider's secret.
using DrKey = FixedBytes<16, struct DrKeyTag>;
/// Per-(source, interface pair) authorization token.
using Authenticator = FixedBytes<16, struct AuthenticatorTag>;
/// Untruncated 16-byte MAC output.
using Mac = FixedBytes<16, struct MacTag>;
using Nonce = FixedBytes<12, struct NonceTag>;
using AeadTag = FixedBytes<16, struct AeadTagTag>;

/// Number of MAC bytes carried per hop in data packets.
inline constexpr std::size_t kValidationFieldLen = 3;
using ValidationField = FixedBytes<kValidationFieldLen, struct ValidationFieldTag>;

/// Optional demand fields of a demand-aware setup request.
struct SetupDemand {
    Bps bw_dem = 0;
    Bps bw_min = 0;
    friend bool operator==(const SetupDemand&, const SetupDemand&) = default;
};

struct SealedGrant {
    std::array<std::uint8_t, 16> ciphertext{};
    AeadTag tag{};
    friend bool operator==(const SealedGrant&, const SealedGrant&) = default;
};

/// AES-128 CBC-MAC (zero IV) over `msg` zero-padded to a whole number of blocks.
Mac cbc_mac(std::span<const std::uint8_t, 16> key, std::span<const std::uint8_t> msg);

/// K_{i->remote} = PRF_secret(remote).
DrKey derive_drkey(const SecretKey& secret, AsId remote_as);

/// alpha = MAC_secret(src || ingress || egress). The backward authenticator is
/// obtained by passing the interfaces swapped.
Authenticator compute_authenticator(const SecretKey& secret, AsId src, IfId ingress, IfId egress);

/// phi = MAC_auth(ts || len), untruncated.
Mac compute_validation_mac(const Authenticator& auth, TimeNs ts, std::uint16_t len);

/// First kValidationFieldLen bytes of compute_validation_mac.
ValidationField compute_validation_field(const Authenticator& auth, TimeNs ts, std::uint16_t len);

/// Auth_i = MAC_{K_{i->S}}(tsReq || R || B [|| bwDem || bwMin]).
Mac compute_setup_auth(const DrKey& key, TimeNs ts_req, bool flag_r, bool flag_b,
                       const std::optional<SetupDemand>& demand = std::nullopt);

/// ChaCha20-Poly1305 (IETF) encryption of `auth` with (bw, ts_exp) as associated data.
SealedGrant seal_grant(const DrKey& key, const Authenticator& auth, Bps bw, TimeNs ts_exp,
                       const Nonce& nonce);

/// Inverse of seal_grant. std::nullopt means tag verification failed (tampered or mis-keyed).
std::optional<Authenticator> unseal_grant(const DrKey& key, const SealedGrant& sealed, Bps bw,
                                          TimeNs ts_exp, const Nonce& nonce);

/// Nonce from the system CSPRNG.
Nonce random_nonce();

/// Constant-time comparison.
bool equal_ct(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Per-thread operation counters. Every CBC-MAC computation counts as one MAC
/// invocation, regardless of the number of blocks.
struct OpCounters {
    std::uint64_t mac = 0;
    std::uint64_t aead = 0;
};
OpCounters op_counters() noexcept;
void reset_op_counters() noexcept;

}  // namespace helia::crypto
