#include <algorithm>

#include "doctest.h"
#include "line_fixture.hpp"

using namespace helia;
using namespace helia::router;
using test::kSrc;
using test::kT0;

namespace {

bool all_are(const std::vector<ForwardClass>& v, ForwardClass c) {
    return std::all_of(v.begin(), v.end(), [c](ForwardClass x) { return x == c; });
}

crypto::Authenticator unseal(const test::Line& line, const wire::SetupRespEntry& e) {
    const auto a = crypto::unseal_grant(line.keys.at(line.plan.hops[e.hop].as), e.sealed, e.bw, e.ts_exp, e.nonce);
    REQUIRE(a);
    return *a;
}

}  // namespace

TEST_CASE("setup for a subset of hops") {
    test::Line line(5);
    line.plan.forward = {1, 2, 3};
    const auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    auto out = line.routers[2]->handle_setup(req, line.fwd_ctx(2), kT0);
    REQUIRE(out.entries.size() == 1);
    CHECK(out.decision.cls == ForwardClass::best_effort);
    CHECK(out.decision.has(Note::granted_forward));
    CHECK(unseal(line, out.entries[0]) == crypto::compute_authenticator(line.secrets[2], kSrc, 1, 2));

    auto other = line.routers[0]->handle_setup(req, line.fwd_ctx(0), kT0);
    CHECK(other.entries.empty());
    CHECK(other.decision.has(Note::no_entry));
}

TEST_CASE("bad authenticator is forwarded without a grant") {
    test::Line line(3);
    line.request_all();
    auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    req.entries[1].auth.bytes[0] ^= 1;
    auto out = line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0);
    CHECK(out.entries.empty());
    CHECK(out.decision.cls == ForwardClass::best_effort);
    CHECK(out.decision.has(Note::auth_failure));
}

TEST_CASE("flag tampering breaks the authenticator") {
    test::Line line(3);
    line.request_all();
    auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    req.entries[1].flag_b = true;
    auto out = line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0);
    CHECK(out.entries.empty());
    CHECK(out.decision.has(Note::auth_failure));
}

TEST_CASE("replayed setup request is dropped") {
    test::Line line(3);
    line.request_all();
    const auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    CHECK(line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0).entries.size() == 1);
    auto again = line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0 + 5);
    CHECK(again.entries.empty());
    CHECK(again.decision.cls == ForwardClass::drop);
    CHECK(again.decision.has(Note::replay));
}

TEST_CASE("stale setup request") {
    test::Line line(3);
    line.request_all();
    const auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    const DurationNs limit = 1 * kNsPerSec + 500 * kNsPerMs;
    auto late = line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0 + limit + 1);
    CHECK(late.entries.empty());
    CHECK(late.decision.cls == ForwardClass::best_effort);
    CHECK(late.decision.has(Note::stale));
    CHECK(line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0 + limit).entries.size() == 1);
}

TEST_CASE("bidirectional request") {
    test::Line line(3);
    line.request_all(true, true);
    const auto req = source::build_setup(line.keys, line.plan, kSrc, kT0);
    auto out = line.routers[1]->handle_setup(req, line.fwd_ctx(1), kT0);
    REQUIRE(out.entries.size() == 2);
    CHECK(out.entries[0].direction == Direction::forward);
    CHECK(out.entries[1].direction == Direction::backward);
    CHECK(unseal(line, out.entries[0]) == crypto::compute_authenticator(line.secrets[1], kSrc, 1, 2));
    CHECK(unseal(line, out.entries[1]) == crypto::compute_authenticator(line.secrets[1], kSrc, 2, 1));
}

TEST_CASE("data packet validation") {
    test::Line line(5);
    line.request_all();
    REQUIRE(line.setup(kT0).accepted.size() == 5);
    const TimeNs t = kT0 + kNsPerMs;

    SUBCASE("well-formed packet within rate") {
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(1000, 1), 0, t);
        CHECK(wire::encode(pkt).size() == 1042);
        CHECK(all_are(line.send(pkt, t), ForwardClass::priority));
    }
    SUBCASE("flipped RVF byte") {
        auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(1000, 1), 0, t);
        pkt.rvfs[2].vf.bytes[1] ^= 0x40;
        auto d = line.routers[2]->handle_data(pkt, line.fwd_ctx(2), t).decision;
        CHECK(d.cls == ForwardClass::best_effort);
        CHECK(d.has(Note::mac_mismatch));
    }
    SUBCASE("stale packet costs no crypto") {
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(1000, 1), 0, t);
        crypto::reset_op_counters();
        auto d = line.routers[2]->handle_data(pkt, line.fwd_ctx(2), t + 2 * kNsPerSec).decision;
        CHECK(d.cls == ForwardClass::best_effort);
        CHECK(d.has(Note::stale));
        CHECK(crypto::op_counters().mac == 0);
    }
    SUBCASE("exactly two MACs per validated packet per hop") {
        for (int i = 0; i < 50; ++i) {
            const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(200, 1), 0, t + i);
            for (std::size_t h = 0; h < 5; ++h) {
                crypto::reset_op_counters();
                CHECK(line.routers[h]->validate_forward(pkt, line.fwd_ctx(h), t + i).cls == ForwardClass::priority);
                CHECK(crypto::op_counters().mac == 2);
            }
        }
    }
    SUBCASE("length is bound into the RVF") {
        auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(1000, 1), 0, t);
        pkt.payload.push_back(0);
        CHECK(line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), t).has(Note::mac_mismatch));
    }
    SUBCASE("replayed packet is dropped") {
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, t);
        CHECK(line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), t).cls == ForwardClass::priority);
        auto d = line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), t + 1);
        CHECK(d.cls == ForwardClass::drop);
        CHECK(d.has(Note::replay));
    }
    SUBCASE("wrong interfaces") {
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, t);
        CHECK(line.routers[1]->validate_forward(pkt, HopContext{1, 2, 1}, t).has(Note::mac_mismatch));
        CHECK(line.routers[1]->validate_forward(pkt, HopContext{1, 1, 9}, t).has(Note::bad_interface));
    }
    SUBCASE("expired reservation") {
        const auto exp = line.store.all().begin()->second.ts_exp;
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, exp + 1,
                                             source::EmitOptions{true});
        auto d = line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), exp + 1);
        CHECK(d.cls == ForwardClass::best_effort);
        CHECK(d.has(Note::expired));
    }
    SUBCASE("overuse is demoted") {
        int demoted = 0;
        for (int i = 0; i < 5000; ++i) {
            const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(1400, 1), 0, t + i);
            demoted += line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), t + i).cls == ForwardClass::best_effort;
        }
        CHECK(demoted > 0);
    }
}

TEST_CASE("backward replies") {
    test::Line line(4);
    line.request_all(true, true);
    REQUIRE(line.setup(kT0).accepted.size() == 8);
    const TimeNs t = kT0 + kNsPerMs;
    const auto fwd = source::emit_packet(line.store, line.plan, kSrc, Bytes(500, 1), 200, t);
    REQUIRE(all_are(line.send(fwd, t), ForwardClass::priority));

    SUBCASE("reply within lenB") {
        const auto reply = source::build_reply(fwd, Bytes(200 - wire::DataPkt::header_len(0, 4), 2));
        CHECK(reply.encoded_len() == 200);
        CHECK(all_are(line.send(reply, t + 10), ForwardClass::priority));
        SUBCASE("replayed reply") {
            auto d = line.routers[3]->handle_data(reply, line.bwd_ctx(3), t + 20).decision;
            CHECK(d.cls == ForwardClass::drop);
        }
    }
    SUBCASE("reply longer than lenB") {
        auto reply = source::build_reply(fwd, Bytes(10, 2));
        reply.payload.resize(500);
        auto d = line.routers[3]->handle_data(reply, line.bwd_ctx(3), t + 10).decision;
        CHECK(d.cls == ForwardClass::best_effort);
        CHECK(d.has(Note::too_long));
        reply.len_b = 2000;
        CHECK(line.routers[3]->handle_data(reply, line.bwd_ctx(3), t + 10).decision.has(Note::mac_mismatch));
    }
}

TEST_CASE("validation failures never drop") {
    test::Line line(3);
    line.request_all(true, true);
    REQUIRE(line.setup(kT0).accepted.size() == 6);
    std::mt19937_64 rng(21);
    std::size_t drops = 0;
    for (int i = 0; i < 20'000; ++i) {
        const TimeNs t = kT0 + kNsPerMs + static_cast<TimeNs>(i) * 1000;
        auto bytes = wire::encode(source::emit_packet(line.store, line.plan, kSrc, Bytes(64, 3), 300, t));
        const int flips = 1 + static_cast<int>(rng() % 3);
        for (int f = 0; f < flips; ++f) bytes[rng() % bytes.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        if (rng() % 5 == 0) bytes.resize(rng() % bytes.size());
        const std::size_t h = rng() % 3;
        const auto d = line.routers[h]->process(bytes, line.fwd_ctx(h), t).decision;
        if (d.cls == ForwardClass::drop) {
            ++drops;
            CHECK(d.has(Note::replay));
        }
    }
    CHECK(drops < 20'000);
}

TEST_CASE("decision does not depend on anything but the monitor entry") {
    test::Line a(2), b(2);
    b.secrets = a.secrets;
    b.keys = a.keys;
    // Rebuild b's routers with a's secrets but no setup history.
    for (std::size_t i = 0; i < 2; ++i) {
        auto m = a.routers[i]->matrix();
        b.routers[i] = std::make_unique<BorderRouter>(a.routers[i]->as_id(), a.secrets[i], m, RouterConfig{}, nullptr, kT0);
    }
    a.request_all();
    REQUIRE(a.setup(kT0).accepted.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto key = policing::MonitorKey{kSrc, {a.plan.hops[i].ingress, a.plan.hops[i].egress}, Direction::forward};
        const auto* e = a.routers[i]->monitor().find(key);
        REQUIRE(e);
        b.routers[i]->monitor().register_reservation(key, e->bw, e->ts_exp, kT0);
    }
    for (int i = 0; i < 3000; ++i) {
        const TimeNs t = kT0 + 1 + static_cast<TimeNs>(i) * 20'000;
        const auto pkt = source::emit_packet(a.store, a.plan, kSrc, Bytes(1200, 1), 0, t);
        CHECK(a.send(pkt, t) == b.send(pkt, t));
    }
}

TEST_CASE("repeated requests share one authenticator and one bucket") {
    test::Line line(2);
    line.request_all();
    std::vector<crypto::Authenticator> alphas;
    for (int i = 0; i < 10; ++i) {
        const TimeNs t = kT0 + static_cast<TimeNs>(i) * kNsPerMs;
        const auto req = source::build_setup(line.keys, line.plan, kSrc, t);
        auto out = line.routers[1]->handle_setup(req, line.fwd_ctx(1), t);
        REQUIRE(out.entries.size() == 1);
        alphas.push_back(unseal(line, out.entries[0]));
    }
    CHECK(std::all_of(alphas.begin(), alphas.end(), [&](const auto& a) { return a == alphas[0]; }));
    CHECK(line.routers[1]->monitor().size() == 1);
}

TEST_CASE("allocation matrix updates") {
    constexpr Bps kG = 1'000'000'000;
    const DurationNs eps = 10 * kNsPerSec;
    auto make = [] {
        auto m = admission::AllocationMatrix::from_rows({{0, 100 * kG, 100 * kG}, {100 * kG, 0, 100 * kG}, {100 * kG, 100 * kG, 0}});
        return std::make_unique<BorderRouter>(64'512, crypto::SecretKey{}, m, RouterConfig{}, nullptr, kT0);
    };
    std::vector<GrantEvent> seen;
    auto request = [&](BorderRouter& r, IfPair p, TimeNs t) {
        const auto key = crypto::derive_drkey(crypto::SecretKey{}, kSrc);
        wire::SetupReq req{kSrc, t, std::nullopt, {wire::SetupReqEntry{0, true, false, crypto::compute_setup_auth(key, t, true, false)}}};
        return r.handle_setup(req, HopContext{0, p.in, p.out}, t);
    };

    SUBCASE("decrease applies to admission now and to capacity one period later") {
        auto r = make();
        r->set_grant_observer([&](const GrantEvent& e) { seen.push_back(e); });
        const auto u = r->update_matrix({1, 2}, 50 * kG, kT0);
        CHECK(u.effective_at == kT0 + eps);
        request(*r, {1, 2}, kT0 + 1);
        REQUIRE(seen.size() == 1);
        CHECK(seen[0].m_entry == 50 * kG);
        CHECK(r->physical_capacity({1, 2}, kT0 + eps - 1) == 100 * kG);
        CHECK(r->physical_capacity({1, 2}, kT0 + eps) == 50 * kG);
    }
    SUBCASE("increase applies immediately") {
        auto r = make();
        r->update_matrix({1, 2}, 50 * kG, kT0);
        r->set_grant_observer([&](const GrantEvent& e) { seen.push_back(e); });
        const auto u = r->update_matrix({1, 2}, 100 * kG, kT0 + 2 * eps);
        CHECK(u.effective_at == kT0 + 2 * eps);
        request(*r, {1, 2}, kT0 + 2 * eps);
        REQUIRE(seen.size() == 1);
        CHECK(seen[0].m_entry == 100 * kG);
        CHECK(r->physical_capacity({1, 2}, kT0 + 2 * eps) == 100 * kG);
    }
    SUBCASE("other pairs are unaffected") {
        auto r1 = make(), r2 = make();
        r1->set_nonce_source([] { return crypto::Nonce{}; });
        r2->set_nonce_source([] { return crypto::Nonce{}; });
        r2->update_matrix({1, 2}, 10 * kG, kT0);
        const auto a = request(*r1, {2, 1}, kT0 + 2).entries;
        const auto b = request(*r2, {2, 1}, kT0 + 2).entries;
        REQUIRE(a.size() == 1);
        CHECK(a == b);
    }
}

TEST_CASE("self-renewing reservations") {
    RouterConfig cfg;
    cfg.self_renew = true;
    const DurationNs eps = cfg.estimator.epsilon;

    SUBCASE("continuous traffic keeps the reservation alive") {
        test::Line line(1, 10'000'000'000, cfg);
        line.request_all();
        REQUIRE(line.setup(kT0).accepted.size() == 1);
        int demoted = 0;
        for (TimeNs t = kT0 + 1; t < kT0 + 4 * eps; t += 100 * kNsPerMs) {
            const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, t,
                                                 source::EmitOptions{true});
            demoted += line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), t).cls != ForwardClass::priority;
        }
        CHECK(demoted == 0);
    }
    SUBCASE("silence lets the reservation expire") {
        cfg.estimator.theta = 0;
        test::Line line(1, 10'000'000'000, cfg);
        line.request_all();
        CHECK(line.setup(kT0).accepted.empty());
        REQUIRE(line.setup(kT0 + 2 * eps).accepted.size() == 1);
        const auto exp = line.store.all().begin()->second.ts_exp;
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, exp + 1,
                                             source::EmitOptions{true});
        auto d = line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), exp + 1);
        CHECK(d.cls == ForwardClass::best_effort);
        CHECK(d.has(Note::expired));
    }
    SUBCASE("disabled") {
        test::Line line(1);
        line.request_all();
        REQUIRE(line.setup(kT0).accepted.size() == 1);
        const auto& mon = line.routers[0]->monitor();
        const policing::MonitorKey key{kSrc, {line.plan.hops[0].ingress, line.plan.hops[0].egress}, Direction::forward};
        const auto before = mon.find(key)->ts_exp;
        const auto pkt = source::emit_packet(line.store, line.plan, kSrc, Bytes(100, 1), 0, kT0 + kNsPerSec);
        line.routers[0]->validate_forward(pkt, line.fwd_ctx(0), kT0 + kNsPerSec);
        CHECK(mon.find(key)->ts_exp == before);
    }
}

TEST_CASE("undecodable frames are forwarded best-effort") {
    test::Line line(1);
    const std::uint8_t junk[] = {0x03, 1, 2};
    auto out = line.routers[0]->process(junk, line.fwd_ctx(0), kT0);
    CHECK(out.decision.cls == ForwardClass::best_effort);
    CHECK(out.decision.has(Note::decode_error));
}

TEST_CASE("renewal carried over the reservation") {
    test::Line line(3);
    line.request_all();
    REQUIRE(line.setup(kT0).accepted.size() == 3);
    const TimeNs t = kT0 + kNsPerSec;
    const auto r = source::renew(line.store, line.keys, line.plan, kSrc, t);
    REQUIRE(r.carrier);
    for (std::size_t i = 0; i < 3; ++i) {
        auto out = line.routers[i]->handle_data(*r.carrier, line.fwd_ctx(i), t);
        CHECK(out.decision.cls == ForwardClass::priority);
        CHECK(out.entries.size() == 1);
    }
}
