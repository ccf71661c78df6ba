#include <random>

#include "doctest.h"
#include "helia/wire.hpp"
#include "test_util.hpp"

using namespace helia;
using namespace helia::wire;

namespace {

std::vector<std::uint8_t> random_hops(std::mt19937_64& rng, std::size_t max) {
    std::vector<std::uint8_t> all(256);
    for (std::size_t i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(rng() % (max + 1));
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<HopField> random_fields(std::mt19937_64& rng, std::size_t max) {
    std::vector<HopField> v;
    for (auto h : random_hops(rng, max)) v.push_back(HopField{h, test::random_fixed<crypto::ValidationField>(rng)});
    return v;
}

Message random_message(std::mt19937_64& rng) {
    switch (rng() % 3) {
        case 0: {
            SetupReq m{rng(), rng(), std::nullopt, {}};
            if (rng() & 1) m.demand = crypto::SetupDemand{rng(), rng()};
            for (auto h : random_hops(rng, 20)) {
                m.entries.push_back(SetupReqEntry{h, static_cast<bool>(rng() & 1), static_cast<bool>(rng() & 1),
                                                  test::random_fixed<crypto::Mac>(rng)});
            }
            return m;
        }
        case 1: {
            SetupResp m{rng(), rng(), {}};
            for (auto h : random_hops(rng, 12)) {
                for (auto dir : {Direction::forward, Direction::backward}) {
                    if (rng() % 3 == 0) continue;
                    SetupRespEntry e;
                    e.hop = h;
                    e.direction = dir;
                    e.nonce = test::random_fixed<crypto::Nonce>(rng);
                    for (auto& b : e.sealed.ciphertext) b = static_cast<std::uint8_t>(rng());
                    e.sealed.tag = test::random_fixed<crypto::AeadTag>(rng);
                    e.bw = rng();
                    e.ts_exp = rng();
                    m.entries.push_back(e);
                }
            }
            return m;
        }
        default: {
            DataPkt p;
            p.src = rng();
            p.d_flag = rng() & 1;
            p.carries_setup = rng() & 1;
            p.ts_pkt = rng();
            p.len_b = static_cast<std::uint16_t>(rng());
            p.rvfs = random_fields(rng, 16);
            p.bvfs = random_fields(rng, 16);
            p.payload.resize(rng() % 1500);
            for (auto& b : p.payload) b = static_cast<std::uint8_t>(rng());
            return p;
        }
    }
}

}  // namespace

TEST_CASE("data packet header length") {
    std::mt19937_64 rng(1);
    DataPkt p;
    p.src = 1;
    for (std::uint8_t h = 0; h < 5; ++h) p.rvfs.push_back(HopField{h, {}});
    p.payload.assign(1000, 0x5a);
    CHECK(p.header_len() == 42);
    const auto bytes = encode(p);
    CHECK(bytes.size() == 1042);
    CHECK(bytes[0] == 0x03);

    for (int i = 0; i < 100; ++i) {
        DataPkt q;
        q.rvfs = random_fields(rng, 30);
        q.bvfs = random_fields(rng, 30);
        CHECK(encode(q).size() == 22 + 4 * q.rvfs.size() + 4 * q.bvfs.size());
    }
}

TEST_CASE("empty data packet is valid") {
    DataPkt p;
    p.src = 9;
    const auto bytes = encode(p);
    CHECK(bytes.size() == kDataHeaderFixed);
    auto r = decode(bytes);
    REQUIRE(r);
    CHECK(std::get<DataPkt>(*r.message) == p);
}

TEST_CASE("entry sizes") {
    SetupReq req{1, 2, std::nullopt, {SetupReqEntry{0, true, false, {}}}};
    CHECK(encode(req).size() == 18 + kSetupReqEntryLen);
    req.demand = crypto::SetupDemand{3, 4};
    const auto with_demand = encode(req);
    CHECK(with_demand.size() == 34 + kSetupReqEntryLen);
    CHECK(with_demand[0] == 0x04);
    SetupResp resp{1, 2, {SetupRespEntry{}}};
    CHECK(encode(resp).size() == 18 + kSetupRespEntryLen);
}

TEST_CASE("roundtrip on random messages") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 10'000; ++i) {
        const auto m = random_message(rng);
        const auto bytes = encode(m);
        auto r = decode(bytes);
        REQUIRE(r);
        CHECK(*r.message == m);
    }
}

TEST_CASE("decode errors") {
    CHECK(decode({}).error.code == DecodeErrc::truncated);
    const std::uint8_t junk[] = {0x7f, 0, 0};
    CHECK(decode(junk).error.code == DecodeErrc::bad_magic);

    DataPkt p;
    for (std::uint8_t h = 0; h < 3; ++h) p.rvfs.push_back(HopField{h, {}});
    auto bytes = encode(p);
    bytes[20] = 10;  // nF claims 10 fields, bytes for 3
    CHECK(decode(bytes).error.code == DecodeErrc::truncated);

    auto trailing = encode(SetupReq{1, 2, std::nullopt, {}});
    trailing.push_back(0);
    CHECK(decode(trailing).error.code == DecodeErrc::trailing_bytes);

    auto flags = encode(DataPkt{});
    flags[9] = 0x80;
    CHECK(decode(flags).error.code == DecodeErrc::bad_field);
}

TEST_CASE("truncation never crashes") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        const auto msg = random_message(rng);
        const auto bytes = encode(msg);
        const auto cut = rng() % bytes.size();
        auto r = decode(std::span(bytes.data(), cut));
        // A data packet's payload runs to the end of the buffer, so only a cut
        // into its header is detectable.
        const auto* d = std::get_if<DataPkt>(&msg);
        if (d != nullptr && cut >= d->header_len()) {
            REQUIRE(r);
            CHECK(std::get<DataPkt>(*r.message).payload.size() == cut - d->header_len());
        } else {
            CHECK_FALSE(r);
        }
    }
}

TEST_CASE("random bytes decode or fail cleanly") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20'000; ++i) {
        Bytes b(rng() % 80);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        if (!b.empty()) b[0] = static_cast<std::uint8_t>(1 + rng() % 4);
        auto r = decode(b);
        if (r) CHECK(encode(*r.message) == b);
    }
}

TEST_CASE("encode rejects invalid messages") {
    DataPkt p;
    p.rvfs = {HopField{2, {}}, HopField{1, {}}};
    CHECK_THROWS_AS(encode(p), EncodeError);
    p.rvfs = {HopField{1, {}}, HopField{1, {}}};
    CHECK_THROWS_AS(encode(p), EncodeError);
    DataPkt big;
    big.payload.resize(kMaxPacketLen);
    CHECK_THROWS_AS(encode(big), EncodeError);
}

TEST_CASE("hop lookup") {
    DataPkt p;
    p.rvfs = {HopField{1, {}}, HopField{4, {}}};
    CHECK(p.rvf_for(4) != nullptr);
    CHECK(p.rvf_for(2) == nullptr);
    CHECK(p.bvf_for(1) == nullptr);
}
