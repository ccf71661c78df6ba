#pragma once

// Byte-exact codec for setup requests, setup responses and data packets.
//
// Layout (big-endian throughout):
//   SetupReq   = 0x01 | src(8) | tsReq(8) | n(1) | n x [hop(1) | flags(1) | auth(16)]
//   SetupReqD  = 0x04 | src(8) | tsReq(8) | bwDem(8) | bwMin(8) | n(1) | entries as above
//   SetupResp  = 0x02 | src(8) | tsReq(8) | m(1) |
//                m x [hop(1) | dir(1) | nonce(12) | encAuth(16) | tag(16) | bw(8) | tsExp(8)]
//   DataPkt    = 0x03 | src(8) | flags(1) | tsPkt(8) | lenB(2) | nF(1) | nB(1) |
//                nF x [hop(1) | rvf(3)] | nB x [hop(1) | bvf(3)] | payload
//
// SetupReq flags: bit0 = R, bit1 = B. DataPkt flags: bit0 = D (backward),
// bit1 = payload is an encoded setup request (renewal over the reservation).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "helia/bytes.hpp"
#include "helia/crypto.hpp"
#include "helia/types.hpp"

namespace helia::wire {

enum class MsgType : std::uint8_t {
    setup_req = 0x01,
    setup_resp = 0x02,
    data = 0x03,
    setup_req_demand = 0x04,
};

inline constexpr std::size_t kDataHeaderFixed = 22;
inline constexpr std::size_t kHopFieldLen = 4;
inline constexpr std::size_t kSetupReqEntryLen = 18;
inline constexpr std::size_t kSetupRespEntryLen = 62;
inline constexpr std::size_t kMaxEntries = 255;
inline constexpr std::size_t kMaxPacketLen = 0xffff;

struct SetupReqEntry {
    std::uint8_t hop = 0;
    bool flag_r = false;
    bool flag_b = false;
    crypto::Mac auth{};
    friend bool operator==(const SetupReqEntry&, const SetupReqEntry&) = default;
};

struct SetupReq {
    AsId src = 0;
    TimeNs ts_req = 0;
    /// Present only in demand-aware requests (MsgType::setup_req_demand).
    std::optional<crypto::SetupDemand> demand;
    std::vector<SetupReqEntry> entries;

    const SetupReqEntry* entry_for(std::uint8_t hop) const;
    friend bool operator==(const SetupReq&, const SetupReq&) = default;
};

struct SetupRespEntry {
    std::uint8_t hop = 0;
    Direction direction = Direction::forward;
    crypto::Nonce nonce{};
    crypto::SealedGrant sealed{};
    Bps bw = 0;
    TimeNs ts_exp = 0;
    friend bool operator==(const SetupRespEntry&, const SetupRespEntry&) = default;
};

struct SetupResp {
    AsId src = 0;
    TimeNs ts_req = 0;
    std::vector<SetupRespEntry> entries;
    friend bool operator==(const SetupResp&, const SetupResp&) = default;
};

struct HopField {
    std::uint8_t hop = 0;
    crypto::ValidationField vf{};
    friend bool operator==(const HopField&, const HopField&) = default;
};

struct DataPkt {
    AsId src = 0;
    bool d_flag = false;
    bool carries_setup = false;
    TimeNs ts_pkt = 0;
    std::uint16_t len_b = 0;
    std::vector<HopField> rvfs;
    std::vector<HopField> bvfs;
    Bytes payload;

    static std::size_t header_len(std::size_t n_rvf, std::size_t n_bvf) {
        return kDataHeaderFixed + kHopFieldLen * (n_rvf + n_bvf);
    }
    std::size_t header_len() const { return header_len(rvfs.size(), bvfs.size()); }
    std::size_t encoded_len() const { return header_len() + payload.size(); }

    const HopField* rvf_for(std::uint8_t hop) const;
    const HopField* bvf_for(std::uint8_t hop) const;
    friend bool operator==(const DataPkt&, const DataPkt&) = default;
};

using Message = std::variant<SetupReq, SetupResp, DataPkt>;

class EncodeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class DecodeErrc {
    truncated,
    bad_magic,
    bad_counts,
    bad_field,
    trailing_bytes,
};

std::string_view to_string(DecodeErrc e);

struct DecodeError {
    DecodeErrc code = DecodeErrc::truncated;
    std::size_t offset = 0;
};

struct DecodeResult {
    std::optional<Message> message;
    DecodeError error{};

    explicit operator bool() const { return message.has_value(); }
};

/// Throws EncodeError when the message violates its invariants
/// (unsorted or duplicate hops, more than 255 entries, packet above 65535 bytes).
Bytes encode(const SetupReq& msg);
Bytes encode(const SetupResp& msg);
Bytes encode(const DataPkt& msg);
Bytes encode(const Message& msg);

DecodeResult decode(std::span<const std::uint8_t> bytes);

}  // namespace helia::wire
