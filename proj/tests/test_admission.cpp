#include <random>

#include "doctest.h"
#include "helia/admission.hpp"
#include "properties.hpp"

using namespace helia;
using namespace helia::admission;

namespace {

constexpr Bps kG = 1'000'000'000;
constexpr TimeNs kT0 = 1'700'000'000'000'000'000ULL;
constexpr DurationNs kEps = 10 * kNsPerSec;

EstimatorConfig exact_cfg(std::uint32_t theta = 8, std::uint64_t rho_min = 16) {
    EstimatorConfig c;
    c.filter = FilterKind::exact;
    c.theta = theta;
    c.rho_min = rho_min;
    return c;
}

}  // namespace

TEST_CASE("flyover bandwidth") {
    CHECK(flyover_bandwidth(100 * kG, 4, 1) == 25 * kG);
    CHECK(flyover_bandwidth(100 * kG, 2, 5) == 20 * kG);
    CHECK(flyover_bandwidth(0, 7, 1) == 0);
    CHECK(flyover_bandwidth(10, 3, 1) == 3);
}

TEST_CASE("allocation matrix") {
    auto m = AllocationMatrix::from_rows({{0, 5, 6}, {7, 0, 8}, {9, 10, 0}});
    CHECK(m.size() == 3);
    CHECK(m.at(1, 2) == 8);
    CHECK(m.row_sum(0) == 11);
    CHECK(m.col_sum(0) == 16);
    CHECK_THROWS_AS(AllocationMatrix::from_rows({{0, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(AllocationMatrix::from_rows({{1, 1}, {1, 0}}), std::invalid_argument);
}

TEST_CASE("first request gets a tentative slot") {
    RhoEstimator est(exact_cfg(), kT0);
    const auto g = est.request(7, 100 * kG, kT0 + 1);
    REQUIRE(g);
    CHECK(g->kind == GrantKind::tentative);
    // (1 - 0.8) * 100 Gbps / 8
    CHECK(g->bw == 2'500'000'000);
    CHECK(g->ts_exp == kT0 + 1 + kEps);
}

TEST_CASE("regular grant two rotations after the first request") {
    RhoEstimator est(exact_cfg(0), kT0);
    CHECK_FALSE(est.request(7, 100 * kG, kT0 + 5).has_value());
    CHECK_FALSE(est.request(7, 100 * kG, kT0 + 5 + kEps).has_value());
    const auto g = est.request(7, 100 * kG, kT0 + 5 + 2 * kEps);
    REQUIRE(g);
    CHECK(g->kind == GrantKind::regular);
    // 0.8 * 100 Gbps / max(1, 16)
    CHECK(g->bw == 5 * kG);
}

TEST_CASE("rho after rotation") {
    SUBCASE("idle estimator falls back to rho_min") {
        RhoEstimator est(exact_cfg(8, 16), kT0);
        est.advance(kT0 + 5 * kEps);
        CHECK(est.rho() == 16);
    }
    SUBCASE("union of the two recent intervals") {
        RhoEstimator est(exact_cfg(0, 1), kT0);
        est.request(2, kG, kT0 + 1);
        est.request(3, kG, kT0 + 2);
        est.rotate();
        est.request(1, kG, kT0 + kEps + 1);
        est.request(2, kG, kT0 + kEps + 2);
        est.rotate();
        CHECK(est.rho() == 3);
    }
    SUBCASE("membership moves b_c -> b_cc -> b_p") {
        RhoEstimator est(exact_cfg(0, 1), kT0);
        est.request(9, kG, kT0 + 1);
        CHECK(est.current().contains(9));
        est.rotate();
        CHECK(est.previous().contains(9));
        CHECK_FALSE(est.provisioned().contains(9));
        est.rotate();
        CHECK(est.provisioned().contains(9));
    }
    SUBCASE("rotation due at the request instant applies first") {
        RhoEstimator est(exact_cfg(0, 1), kT0);
        est.request(9, kG, kT0);
        CHECK(est.request(9, kG, kT0 + 2 * kEps).has_value());
    }
}

TEST_CASE("tentative slots") {
    RhoEstimator est(exact_cfg(2), kT0);
    const auto a = est.request(1, 100 * kG, kT0 + 1);
    const auto b = est.request(2, 100 * kG, kT0 + 2);
    REQUIRE(a);
    REQUIRE(b);
    CHECK_FALSE(est.request(3, 100 * kG, kT0 + 3).has_value());
    CHECK(est.slots_in_use(kT0 + 3) == 2);

    SUBCASE("holder gets its own slot back") {
        const auto again = est.request(1, 100 * kG, kT0 + 4);
        REQUIRE(again);
        CHECK(again->ts_exp == a->ts_exp);
        CHECK(est.slots_in_use(kT0 + 4) == 2);
    }
    SUBCASE("slot frees at expiry") {
        const auto c = est.request(3, 100 * kG, a->ts_exp + 1);
        REQUIRE(c);
        CHECK(c->kind == GrantKind::tentative);
    }
}

TEST_CASE("config validation") {
    EstimatorConfig c;
    CHECK_NOTHROW(c.validate());
    c.omega_ppm = 1'000'001;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = EstimatorConfig{};
    c.omega_ppm = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = EstimatorConfig{};
    c.epsilon = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = EstimatorConfig{};
    c.rho_min = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("bloom filter") {
    const auto bits = BloomFilter::optimal_bits(10'000, 0.01);
    CHECK(bits / 8 > 11'000);
    CHECK(bits / 8 < 13'000);
    BloomFilter a(bits, 7), b(bits, 7);
    std::mt19937_64 rng(1);
    std::vector<AsId> ids;
    for (int i = 0; i < 3000; ++i) ids.push_back(rng());
    for (int i = 0; i < 2000; ++i) a.insert(ids[i]);
    for (int i = 1000; i < 3000; ++i) b.insert(ids[i]);
    for (int i = 0; i < 2000; ++i) CHECK(a.contains(ids[i]));
    const auto est = union_cardinality(a, b);
    CHECK(est > 2900);
    CHECK(est < 3100);
    std::size_t fp = 0;
    for (int i = 0; i < 100'000; ++i) fp += a.contains(rng());
    CHECK(fp < 1000);
    a.clear();
    CHECK(a.set_bits() == 0);
}

TEST_CASE("exact and bloom modes agree without false positives") {
    std::mt19937_64 rng(17);
    std::size_t compared = 0;
    for (int c = 0; c < 300; ++c) {
        auto ec = exact_cfg(static_cast<std::uint32_t>(rng() % 4), 1 + rng() % 8);
        auto bc = ec;
        bc.filter = FilterKind::bloom;
        RhoEstimator ex(ec, kT0), bl(bc, kT0);
        for (const auto& r : test::random_schedule(rng, kEps, kT0, 6, 30)) {
            ex.advance(r.t);
            bl.advance(r.t);
            if (ex.provisioned().contains(r.src) != bl.provisioned().contains(r.src)) break;
            const auto a = ex.request(r.src, 100 * kG, r.t);
            const auto b = bl.request(r.src, 100 * kG, r.t);
            REQUIRE(a.has_value() == b.has_value());
            if (a) {
                CHECK(a->kind == b->kind);
                CHECK(a->ts_exp == b->ts_exp);
                if (a->kind == GrantKind::tentative) CHECK(a->bw == b->bw);
            }
            ++compared;
        }
    }
    CHECK(compared > 1000);
}

TEST_CASE("bounded time to reservation (randomized)") {
    const auto rep = test::check_bounded_time_to_reservation(1, 500);
    CHECK(rep.checks > 1000);
    CHECK_MESSAGE(rep.violations == 0, rep.first);
}

TEST_CASE("bounded time to reservation (exhaustive small traces)") {
    // Two ASes, request times on a grid of epsilon/2 over four intervals.
    const DurationNs step = kEps / 2;
    std::size_t traces = 0, checked = 0;
    for (unsigned mask_a = 1; mask_a < 256; ++mask_a) {
        for (unsigned mask_b = 0; mask_b < 256; mask_b += 17) {
            RhoEstimator est(exact_cfg(0, 1), kT0);
            std::map<AsId, std::vector<TimeNs>> history;
            for (int slot = 0; slot < 8; ++slot) {
                for (auto [src, mask] : {std::pair<AsId, unsigned>{1, mask_a}, {2, mask_b}}) {
                    if (!(mask >> slot & 1)) continue;
                    const TimeNs t = kT0 + slot * step + 1;
                    auto& h = history[src];
                    const auto g = est.request(src, kG, t);
                    if (test::bounded_time_applies(h, t, kEps)) {
                        ++checked;
                        REQUIRE(g.has_value());
                        CHECK(g->kind == GrantKind::regular);
                    }
                    h.push_back(t);
                }
            }
            ++traces;
        }
    }
    CHECK(traces > 3000);
    CHECK(checked > 1000);
}

TEST_CASE("no over-allocation (randomized)") {
    const auto rep = test::check_no_over_allocation(2, 500);
    CHECK(rep.checks > 1000);
    CHECK_MESSAGE(rep.violations == 0, rep.first);
}

TEST_CASE("estimator policy scope") {
    EstimatorPolicy pair_policy(exact_cfg(0, 1), EstimatorScope::per_pair, kT0);
    EstimatorPolicy ingress_policy(exact_cfg(0, 1), EstimatorScope::per_ingress, kT0);
    for (auto* p : {&pair_policy, &ingress_policy}) {
        p->get_bandwidth(PolicyRequest{1, {1, 2}, kG, kT0 + 1, std::nullopt});
        p->get_bandwidth(PolicyRequest{2, {1, 3}, kG, kT0 + 2, std::nullopt});
    }
    CHECK(pair_policy.estimator({1, 2}) != pair_policy.estimator({1, 3}));
    CHECK(ingress_policy.estimator({1, 2}) == ingress_policy.estimator({1, 3}));
    const auto g = pair_policy.get_bandwidth(PolicyRequest{1, {1, 2}, 100, kT0 + 2 * kEps, std::nullopt});
    REQUIRE(g);
    CHECK(g->bw == 80);
    const auto h = ingress_policy.get_bandwidth(PolicyRequest{1, {1, 2}, 100, kT0 + 2 * kEps, std::nullopt});
    REQUIRE(h);
    CHECK(h->bw == 40);
}
