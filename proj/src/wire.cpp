#include "helia/wire.hpp"

#include <algorithm>

namespace helia::wire {
namespace {

template <class T, class Key>
bool strictly_sorted(const std::vector<T>& v, Key key) {
    return std::adjacent_find(v.begin(), v.end(), [&](const T& a, const T& b) { return !(key(a) < key(b)); }) ==
           v.end();
}

template <class T>
const T* find_hop(const std::vector<T>& v, std::uint8_t hop) {
    auto it = std::lower_bound(v.begin(), v.end(), hop, [](const T& e, std::uint8_t h) { return e.hop < h; });
    return (it != v.end() && it->hop == hop) ? &*it : nullptr;
}

void check_hops(const std::vector<HopField>& v, const char* what) {
    if (v.size() > kMaxEntries) throw EncodeError(std::string(what) + ": more than 255 entries");
    if (!strictly_sorted(v, [](const HopField& h) { return h.hop; })) {
        throw EncodeError(std::string(what) + ": hop indices not strictly increasing");
    }
}

DecodeResult fail(DecodeErrc code, std::size_t offset) {
    return DecodeResult{std::nullopt, DecodeError{code, offset}};
}

DecodeResult decode_setup_req(ByteReader& r, bool with_demand) {
    SetupReq msg;
    auto src = r.u64();
    auto ts = r.u64();
    if (!src || !ts) return fail(DecodeErrc::truncated, r.position());
    msg.src = *src;
    msg.ts_req = *ts;
    if (with_demand) {
        auto dem = r.u64();
        auto mn = r.u64();
        if (!dem || !mn) return fail(DecodeErrc::truncated, r.position());
        msg.demand = crypto::SetupDemand{*dem, *mn};
    }
    auto n = r.u8();
    if (!n) return fail(DecodeErrc::truncated, r.position());
    if (r.remaining() < *n * kSetupReqEntryLen) return fail(DecodeErrc::truncated, r.position());
    msg.entries.resize(*n);
    for (auto& e : msg.entries) {
        e.hop = *r.u8();
        const auto flags = *r.u8();
        if (flags & ~0x03u) return fail(DecodeErrc::bad_field, r.position() - 1);
        e.flag_r = flags & 0x01;
        e.flag_b = flags & 0x02;
        r.raw(e.auth.bytes);
    }
    if (!strictly_sorted(msg.entries, [](const SetupReqEntry& e) { return e.hop; })) {
        return fail(DecodeErrc::bad_counts, r.position());
    }
    if (r.remaining() != 0) return fail(DecodeErrc::trailing_bytes, r.position());
    return DecodeResult{Message{std::move(msg)}, {}};
}

DecodeResult decode_setup_resp(ByteReader& r) {
    SetupResp msg;
    auto src = r.u64();
    auto ts = r.u64();
    auto m = r.u8();
    if (!src || !ts || !m) return fail(DecodeErrc::truncated, r.position());
    msg.src = *src;
    msg.ts_req = *ts;
    if (r.remaining() < *m * kSetupRespEntryLen) return fail(DecodeErrc::truncated, r.position());
    msg.entries.resize(*m);
    for (auto& e : msg.entries) {
        e.hop = *r.u8();
        const auto dir = *r.u8();
        if (dir > 1) return fail(DecodeErrc::bad_field, r.position() - 1);
        e.direction = static_cast<Direction>(dir);
        r.raw(e.nonce.bytes);
        r.raw(e.sealed.ciphertext);
        r.raw(e.sealed.tag.bytes);
        e.bw = *r.u64();
        e.ts_exp = *r.u64();
    }
    if (!strictly_sorted(msg.entries, [](const SetupRespEntry& e) { return std::pair(e.hop, e.direction); })) {
        return fail(DecodeErrc::bad_counts, r.position());
    }
    if (r.remaining() != 0) return fail(DecodeErrc::trailing_bytes, r.position());
    return DecodeResult{Message{std::move(msg)}, {}};
}

DecodeResult decode_data(ByteReader& r) {
    DataPkt msg;
    auto src = r.u64();
    auto flags = r.u8();
    auto ts = r.u64();
    auto len_b = r.u16();
    auto nf = r.u8();
    auto nb = r.u8();
    if (!src || !flags || !ts || !len_b || !nf || !nb) return fail(DecodeErrc::truncated, r.position());
    if (*flags & ~0x03u) return fail(DecodeErrc::bad_field, 9);
    msg.src = *src;
    msg.d_flag = *flags & 0x01;
    msg.carries_setup = *flags & 0x02;
    msg.ts_pkt = *ts;
    msg.len_b = *len_b;
    if (r.remaining() < (*nf + *nb) * kHopFieldLen) return fail(DecodeErrc::truncated, r.position());
    msg.rvfs.resize(*nf);
    msg.bvfs.resize(*nb);
    for (auto* list : {&msg.rvfs, &msg.bvfs}) {
        for (auto& h : *list) {
            h.hop = *r.u8();
            r.raw(h.vf.bytes);
        }
        if (!strictly_sorted(*list, [](const HopField& h) { return h.hop; })) {
            return fail(DecodeErrc::bad_counts, r.position());
        }
    }
    auto rest = r.rest();
    msg.payload.assign(rest.begin(), rest.end());
    return DecodeResult{Message{std::move(msg)}, {}};
}

}  // namespace

const SetupReqEntry* SetupReq::entry_for(std::uint8_t hop) const { return find_hop(entries, hop); }
const HopField* DataPkt::rvf_for(std::uint8_t hop) const { return find_hop(rvfs, hop); }
const HopField* DataPkt::bvf_for(std::uint8_t hop) const { return find_hop(bvfs, hop); }

std::string_view to_string(DecodeErrc e) {
    switch (e) {
        case DecodeErrc::truncated: return "truncated";
        case DecodeErrc::bad_magic: return "bad_magic";
        case DecodeErrc::bad_counts: return "bad_counts";
        case DecodeErrc::bad_field: return "bad_field";
        case DecodeErrc::trailing_bytes: return "trailing_bytes";
    }
    return "unknown";
}

Bytes encode(const SetupReq& msg) {
    if (msg.entries.size() > kMaxEntries) throw EncodeError("SetupReq: more than 255 entries");
    if (!strictly_sorted(msg.entries, [](const SetupReqEntry& e) { return e.hop; })) {
        throw EncodeError("SetupReq: hop indices not strictly increasing");
    }
    Bytes out;
    out.reserve(18 + (msg.demand ? 16 : 0) + msg.entries.size() * kSetupReqEntryLen);
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(msg.demand ? MsgType::setup_req_demand : MsgType::setup_req));
    w.u64(msg.src);
    w.u64(msg.ts_req);
    if (msg.demand) {
        w.u64(msg.demand->bw_dem);
        w.u64(msg.demand->bw_min);
    }
    w.u8(static_cast<std::uint8_t>(msg.entries.size()));
    for (const auto& e : msg.entries) {
        w.u8(e.hop);
        w.u8(static_cast<std::uint8_t>((e.flag_r ? 0x01 : 0) | (e.flag_b ? 0x02 : 0)));
        w.raw(e.auth.bytes);
    }
    return out;
}

Bytes encode(const SetupResp& msg) {
    if (msg.entries.size() > kMaxEntries) throw EncodeError("SetupResp: more than 255 entries");
    if (!strictly_sorted(msg.entries, [](const SetupRespEntry& e) { return std::pair(e.hop, e.direction); })) {
        throw EncodeError("SetupResp: (hop, direction) not strictly increasing");
    }
    Bytes out;
    out.reserve(18 + msg.entries.size() * kSetupRespEntryLen);
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(MsgType::setup_resp));
    w.u64(msg.src);
    w.u64(msg.ts_req);
    w.u8(static_cast<std::uint8_t>(msg.entries.size()));
    for (const auto& e : msg.entries) {
        w.u8(e.hop);
        w.u8(static_cast<std::uint8_t>(e.direction));
        w.raw(e.nonce.bytes);
        w.raw(e.sealed.ciphertext);
        w.raw(e.sealed.tag.bytes);
        w.u64(e.bw);
        w.u64(e.ts_exp);
    }
    return out;
}

Bytes encode(const DataPkt& msg) {
    check_hops(msg.rvfs, "DataPkt RVFs");
    check_hops(msg.bvfs, "DataPkt BVFs");
    if (msg.encoded_len() > kMaxPacketLen) throw EncodeError("DataPkt: packet longer than 65535 bytes");
    Bytes out;
    out.reserve(msg.encoded_len());
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(MsgType::data));
    w.u64(msg.src);
    w.u8(static_cast<std::uint8_t>((msg.d_flag ? 0x01 : 0) | (msg.carries_setup ? 0x02 : 0)));
    w.u64(msg.ts_pkt);
    w.u16(msg.len_b);
    w.u8(static_cast<std::uint8_t>(msg.rvfs.size()));
    w.u8(static_cast<std::uint8_t>(msg.bvfs.size()));
    for (const auto* list : {&msg.rvfs, &msg.bvfs}) {
        for (const auto& h : *list) {
            w.u8(h.hop);
            w.raw(h.vf.bytes);
        }
    }
    w.raw(msg.payload);
    return out;
}

Bytes encode(const Message& msg) {
    return std::visit([](const auto& m) { return encode(m); }, msg);
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto type = r.u8();
    if (!type) return fail(DecodeErrc::truncated, 0);
    switch (static_cast<MsgType>(*type)) {
        case MsgType::setup_req: return decode_setup_req(r, false);
        case MsgType::setup_req_demand: return decode_setup_req(r, true);
        case MsgType::setup_resp: return decode_setup_resp(r);
        case MsgType::data: return decode_data(r);
    }
    return fail(DecodeErrc::bad_magic, 0);
}

}  // namespace helia::wire
