#pragma once

// A line of border routers, one per AS, with the source at hop 0 and the
// destination at the last hop. Interfaces: 0 internal, 1 toward the source,
// 2 toward the destination. A single-AS line leaves through interface 2.

#include <memory>
#include <random>
#include <vector>

#include "helia/border_router.hpp"
#include "helia/source_service.hpp"
#include "test_util.hpp"

namespace helia::test {

inline constexpr TimeNs kT0 = 1'700'000'000'000'000'000ULL;
inline constexpr AsId kSrc = 64'500;

struct Line {
    std::vector<std::unique_ptr<router::BorderRouter>> routers;
    std::vector<crypto::SecretKey> secrets;
    source::KeyRing keys;
    source::PathPlan plan;
    source::GrantStore store;
    std::mt19937_64 rng{99};

    explicit Line(std::size_t n, Bps cap = 10'000'000'000, router::RouterConfig cfg = {}) {
        for (std::size_t i = 0; i < n; ++i) {
            secrets.push_back(random_fixed<crypto::SecretKey>(rng));
            const AsId as = 64'512 + i;
            auto m = admission::AllocationMatrix::from_rows({{0, cap, cap}, {cap, 0, cap}, {cap, cap, 0}});
            routers.push_back(std::make_unique<router::BorderRouter>(as, secrets.back(), m, cfg, nullptr, kT0));
            routers.back()->set_nonce_source([this] { return random_fixed<crypto::Nonce>(rng); });
            keys[as] = crypto::derive_drkey(secrets.back(), kSrc);
            const IfId in = i == 0 ? 0 : 1;
            const IfId out = i + 1 == n && i > 0 ? 0 : 2;
            plan.hops.push_back(source::PathHop{as, in, out});
        }
    }

    void request_all(bool forward = true, bool backward = false) {
        plan.forward.clear();
        plan.backward.clear();
        for (std::size_t i = 0; i < routers.size(); ++i) {
            if (forward) plan.forward.push_back(static_cast<std::uint8_t>(i));
            if (backward) plan.backward.push_back(static_cast<std::uint8_t>(i));
        }
    }

    router::HopContext fwd_ctx(std::size_t i) const {
        return router::HopContext{static_cast<std::uint8_t>(i), plan.hops[i].ingress, plan.hops[i].egress};
    }
    router::HopContext bwd_ctx(std::size_t i) const {
        return router::HopContext{static_cast<std::uint8_t>(i), plan.hops[i].egress, plan.hops[i].ingress};
    }

    // Sends a setup request along the path and ingests the aggregated response.
    source::IngestResult setup(TimeNs now) {
        const auto req = source::build_setup(keys, plan, kSrc, now);
        wire::SetupResp resp{kSrc, now, {}};
        for (std::size_t i = 0; i < routers.size(); ++i) {
            auto out = routers[i]->handle_setup(req, fwd_ctx(i), now);
            for (auto& e : out.entries) resp.entries.push_back(e);
        }
        return source::ingest_response(store, keys, resp, plan);
    }

    // Forwards a packet hop by hop; returns the per-hop classes.
    std::vector<router::ForwardClass> send(const wire::DataPkt& pkt, TimeNs now) {
        std::vector<router::ForwardClass> out;
        const auto bytes = wire::encode(pkt);
        for (std::size_t k = 0; k < routers.size(); ++k) {
            const std::size_t i = pkt.d_flag ? routers.size() - 1 - k : k;
            out.push_back(routers[i]->process(bytes, pkt.d_flag ? bwd_ctx(i) : fwd_ctx(i), now).decision.cls);
        }
        return out;
    }
};

}  // namespace helia::test
