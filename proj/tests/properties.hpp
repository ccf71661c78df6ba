#pragma once

// Randomized schedule checkers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "helia/admission.hpp"
#include "helia/policing.hpp"

namespace helia::test {

struct PropertyReport {
    std::uint64_t cases = 0;
    std::uint64_t checks = 0;
    std::uint64_t violations = 0;
    std::string first;
    // Bounded time only: first requests >= 2*eps after the initial one that fall
    // outside the guarantee's premise, and how many of those were denied.
    std::uint64_t unguarded = 0;
    std::uint64_t unguarded_denied = 0;
};

struct Request {
    TimeNs t;
    AsId src;
};

// Random request times for up to `max_ases` ASes over `intervals` rotation periods.
inline std::vector<Request> random_schedule(std::mt19937_64& rng, DurationNs eps, TimeNs start, int intervals,
                                            int max_ases) {
    std::vector<Request> out;
    const int ases = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_ases));
    const auto span = static_cast<std::uint64_t>(eps) * static_cast<std::uint64_t>(intervals);
    for (int a = 0; a < ases; ++a) {
        const int n = 1 + static_cast<int>(rng() % 12);
        // Some ASes cluster their requests, some spread them out.
        const bool bursty = rng() & 1;
        const auto base = rng() % span;
        for (int i = 0; i < n; ++i) {
            const auto off = bursty ? (base + rng() % static_cast<std::uint64_t>(3 * eps)) % span : rng() % span;
            out.push_back({start + off, static_cast<AsId>(1000 + a)});
        }
        // Exact boundary hits.
        if (rng() % 4 == 0) out.push_back({start + eps * (1 + rng() % static_cast<std::uint64_t>(intervals - 1)), static_cast<AsId>(1000 + a)});
    }
    std::sort(out.begin(), out.end(), [](const Request& a, const Request& b) { return a.t < b.t || (a.t == b.t && a.src < b.src); });
    return out;
}

// Whether the bounded-time guarantee covers a request at `s`, given the AS's
// earlier request times. It does when some earlier request lies exactly 2*eps
// before, or when the AS has kept requesting (no gap above eps) since a
// request at least 2*eps ago. An AS that falls silent for longer is forgotten
// by the filters and starts over.
inline bool bounded_time_applies(const std::vector<TimeNs>& earlier, TimeNs s, DurationNs eps) {
    TimeNs next = s;
    for (auto it = earlier.rbegin(); it != earlier.rend(); ++it) {
        if (time_diff(next, *it) > eps) break;
        if (time_diff(s, *it) >= 2 * eps) return true;
        next = *it;
    }
    for (TimeNs t : earlier) {
        if (time_diff(s, t) == 2 * eps) return true;
    }
    return false;
}

// Request traces for the bounded-time property: persistent requesters, ASes
// that ask once and again exactly 2*eps later, and sporadic ones.
inline std::vector<Request> persistent_schedule(std::mt19937_64& rng, DurationNs eps, TimeNs start, int intervals,
                                                int max_ases) {
    std::vector<Request> out;
    const int ases = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_ases));
    const auto span = static_cast<std::uint64_t>(eps) * static_cast<std::uint64_t>(intervals);
    const auto e = static_cast<std::uint64_t>(eps);
    for (int a = 0; a < ases; ++a) {
        const auto src = static_cast<AsId>(1000 + a);
        switch (rng() % 3) {
            case 0: {
                auto t = rng() % span;
                const auto stop = t + (1 + rng() % 5) * e;
                while (t < span && t <= stop) {
                    out.push_back({start + t, src});
                    t += 1 + rng() % e;
                }
                break;
            }
            case 1: {
                const auto t = rng() % (span - 2 * e);
                out.push_back({start + t, src});
                out.push_back({start + t + 2 * e, src});
                break;
            }
            default: {
                const int n = 1 + static_cast<int>(rng() % 8);
                for (int i = 0; i < n; ++i) out.push_back({start + rng() % span, src});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const Request& a, const Request& b) { return a.t < b.t || (a.t == b.t && a.src < b.src); });
    return out;
}

// Requests covered by bounded_time_applies receive a regular grant.
inline PropertyReport check_bounded_time_to_reservation(std::uint64_t seed, std::uint64_t cases) {
    PropertyReport rep;
    std::mt19937_64 rng(seed);
    for (std::uint64_t c = 0; c < cases; ++c) {
        admission::EstimatorConfig cfg;
        cfg.filter = admission::FilterKind::exact;
        cfg.theta = 0;
        cfg.epsilon = static_cast<DurationNs>(1 + rng() % 20) * kNsPerSec;
        cfg.rho_min = 1 + rng() % 32;
        cfg.omega_ppm = static_cast<std::uint32_t>(1 + rng() % 1'000'000);
        const TimeNs start = 1'700'000'000'000'000'000ULL + rng() % kNsPerSec;
        admission::RhoEstimator est(cfg, start);
        const Bps m = 1 + rng() % 400'000'000'000ULL;
        std::map<AsId, std::vector<TimeNs>> history;
        std::map<AsId, bool> reached;
        for (const auto& r : persistent_schedule(rng, cfg.epsilon, start, 8, 40)) {
            auto& h = history[r.src];
            const auto g = est.request(r.src, m, r.t);
            const bool regular = g && g->kind == admission::GrantKind::regular;
            const bool applies = bounded_time_applies(h, r.t, cfg.epsilon);
            if (!h.empty() && time_diff(r.t, h.front()) >= 2 * cfg.epsilon && !reached[r.src]) {
                reached[r.src] = true;
                if (!applies) {
                    ++rep.unguarded;
                    rep.unguarded_denied += !regular;
                }
            }
            if (applies) {
                ++rep.checks;
                if (!regular) {
                    if (rep.violations++ == 0) {
                        rep.first = "case " + std::to_string(c) + ": AS " + std::to_string(r.src) + " denied at " +
                                    std::to_string(time_diff(r.t, h.front())) + "ns after its first request";
                    }
                }
            }
            h.push_back(r.t);
        }
        ++rep.cases;
    }
    return rep;
}

// Valid regular grants per pair stay within omega*M and all valid grants within M.
inline PropertyReport check_no_over_allocation(std::uint64_t seed, std::uint64_t cases) {
    PropertyReport rep;
    std::mt19937_64 rng(seed);
    for (std::uint64_t c = 0; c < cases; ++c) {
        admission::EstimatorConfig cfg;
        cfg.filter = admission::FilterKind::exact;
        cfg.theta = static_cast<std::uint32_t>(rng() % 9);
        cfg.epsilon = static_cast<DurationNs>(1 + rng() % 20) * kNsPerSec;
        cfg.rho_min = 1 + rng() % 20;
        cfg.omega_ppm = static_cast<std::uint32_t>(1 + rng() % 1'000'000);
        const TimeNs start = 1'700'000'000'000'000'000ULL + rng() % kNsPerSec;
        admission::RhoEstimator est(cfg, start);
        const Bps m = 1 + rng() % 400'000'000'000ULL;

        struct Held {
            std::vector<admission::Grant> regular;
            std::vector<admission::Grant> tentative;
        };
        std::map<AsId, Held> held;
        for (const auto& r : random_schedule(rng, cfg.epsilon, start, 10, 30)) {
            if (auto g = est.request(r.src, m, r.t)) {
                auto& h = held[r.src];
                (g->kind == admission::GrantKind::regular ? h.regular : h.tentative).push_back(*g);
            }
            // Each source counts once per kind, with its largest valid grant.
            unsigned __int128 regular = 0, total = 0;
            for (const auto& [src, h] : held) {
                Bps best_r = 0, best_t = 0;
                for (const auto& g : h.regular) {
                    if (time_diff(r.t, g.ts_exp) <= 0) best_r = std::max(best_r, g.bw);
                }
                for (const auto& g : h.tentative) {
                    if (time_diff(r.t, g.ts_exp) <= 0) best_t = std::max(best_t, g.bw);
                }
                regular += best_r;
                total += best_r + best_t;
            }
            ++rep.checks;
            const bool ok = regular * 1'000'000 <= static_cast<unsigned __int128>(m) * cfg.omega_ppm && total <= m;
            if (!ok && rep.violations++ == 0) {
                rep.first = "case " + std::to_string(c) + " at t=" + std::to_string(r.t - start) + ": regular=" +
                            std::to_string(static_cast<std::uint64_t>(regular)) +
                            " total=" + std::to_string(static_cast<std::uint64_t>(total)) + " M=" + std::to_string(m);
            }
        }
        ++rep.cases;
    }
    return rep;
}

// Reference CIR/CBS bucket: a token counter in bit-nanoseconds, refilled at CIR
// and capped at CBS = CIR * window.
class CounterBucket {
public:
    CounterBucket(Bps cir, DurationNs window, TimeNs start)
        : cir_(cir), cbs_(static_cast<unsigned __int128>(cir) * static_cast<std::uint64_t>(window)), tokens_(cbs_), last_(start) {}

    bool allow(std::size_t len, TimeNs now) {
        if (now > last_) {
            tokens_ += static_cast<unsigned __int128>(cir_) * (now - last_);
            if (tokens_ > cbs_) tokens_ = cbs_;
            last_ = now;
        }
        // A packet costs its serialization time rounded up to whole nanoseconds.
        const unsigned __int128 bit_ns = static_cast<unsigned __int128>(len) * 8 * 1'000'000'000;
        const auto cost = (bit_ns + cir_ - 1) / cir_ * cir_;
        if (cost > tokens_) return false;
        tokens_ -= cost;
        return true;
    }

private:
    Bps cir_;
    unsigned __int128 cbs_;
    unsigned __int128 tokens_;
    TimeNs last_;
};

inline PropertyReport check_bucket_oracle(std::uint64_t seed, std::uint64_t traces) {
    PropertyReport rep;
    std::mt19937_64 rng(seed);
    for (std::uint64_t c = 0; c < traces; ++c) {
        const Bps cir = 1'000 + rng() % 10'000'000'000ULL;
        const DurationNs window = static_cast<DurationNs>(1 + rng() % 100) * kNsPerMs;
        const TimeNs start = 1'700'000'000'000'000'000ULL + rng() % kNsPerSec;
        policing::TokenBucket bucket{start};
        CounterBucket oracle(cir, window, start);
        TimeNs now = start;
        const int n = 1 + static_cast<int>(rng() % 60);
        // Mean gap near the serialization time keeps the bucket near its limit.
        const std::size_t mean_len = 64 + rng() % 1500;
        const auto mean_gap = static_cast<std::uint64_t>(policing::packet_time(mean_len, cir));
        for (int i = 0; i < n; ++i) {
            now += rng() % (2 * mean_gap + 1);
            if (rng() % 10 == 0) now += rng() % static_cast<std::uint64_t>(2 * window);
            const std::size_t len = 1 + rng() % (2 * mean_len);
            const bool a = policing::bucket_check(bucket, len, cir, window, now);
            const bool b = oracle.allow(len, now);
            ++rep.checks;
            if (a != b && rep.violations++ == 0) {
                rep.first = "trace " + std::to_string(c) + " packet " + std::to_string(i) + ": helia=" +
                            std::to_string(a) + " oracle=" + std::to_string(b);
            }
        }
        ++rep.cases;
    }
    return rep;
}

}  // namespace helia::test
