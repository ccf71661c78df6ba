#include "helia/source_service.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

namespace helia::source {
namespace {

const crypto::DrKey& key_for(const KeyRing& keys, AsId as) {
    auto it = keys.find(as);
    if (it == keys.end()) throw MissingKey("no DRKey for AS " + std::to_string(as));
    return it->second;
}

const FlyoverGrant& grant_for(const GrantStore& store, const PathHop& hop, Direction dir, TimeNs now,
                              bool allow_expired) {
    const auto key = grant_key(hop, dir);
    const auto* g = allow_expired ? store.find(key) : store.find_valid(key, now);
    if (g == nullptr) {
        throw MissingGrant("no usable " + std::string(to_string(dir)) + " grant for AS " + std::to_string(hop.as));
    }
    return *g;
}

void check_indices(const std::vector<std::uint8_t>& idx, std::size_t n, const char* what) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= n) throw std::invalid_argument(std::string(what) + ": hop index out of range");
        if (i > 0 && idx[i - 1] >= idx[i]) throw std::invalid_argument(std::string(what) + ": not strictly sorted");
    }
}

}  // namespace

std::vector<std::uint8_t> PathPlan::requested() const {
    std::vector<std::uint8_t> out;
    std::set_union(forward.begin(), forward.end(), backward.begin(), backward.end(), std::back_inserter(out));
    return out;
}

void PathPlan::validate() const {
    if (hops.empty() || hops.size() > wire::kMaxEntries) throw std::invalid_argument("path needs 1..255 hops");
    check_indices(forward, hops.size(), "A_F");
    check_indices(backward, hops.size(), "A_B");
}

GrantKey grant_key(const PathHop& hop, Direction dir) { return GrantKey{hop.as, hop.ingress, hop.egress, dir}; }

// --- GrantStore --------------------------------------------------------------

const FlyoverGrant* GrantStore::find(const GrantKey& key) const {
    auto it = grants_.find(key);
    return it == grants_.end() ? nullptr : &it->second;
}

const FlyoverGrant* GrantStore::find_valid(const GrantKey& key, TimeNs now) const {
    const auto* g = find(key);
    return (g != nullptr && time_diff(now, g->ts_exp) <= 0) ? g : nullptr;
}

bool GrantStore::expired(const GrantKey& key, TimeNs now) const {
    const auto* g = find(key);
    return g != nullptr && time_diff(now, g->ts_exp) > 0;
}

void GrantStore::dump(std::ostream& out) const {
    for (const auto& [k, g] : grants_) {
        out << k.provider << ' ' << k.ingress << ' ' << k.egress << ' ' << to_string(k.direction) << ' ' << g.bw
            << ' ' << g.ts_exp << ' ' << to_hex(g.auth.bytes) << '\n';
    }
}

GrantStore GrantStore::load(std::istream& in) {
    GrantStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        GrantKey k;
        FlyoverGrant g;
        std::string dir, auth;
        unsigned in_if = 0, out_if = 0;
        if (!(ss >> k.provider >> in_if >> out_if >> dir >> g.bw >> g.ts_exp >> auth) ||
            in_if > std::numeric_limits<IfId>::max() || out_if > std::numeric_limits<IfId>::max()) {
            throw SourceError("grant store line " + std::to_string(lineno) + ": malformed");
        }
        k.ingress = static_cast<IfId>(in_if);
        k.egress = static_cast<IfId>(out_if);
        if (dir == "fwd") {
            k.direction = Direction::forward;
        } else if (dir == "bwd") {
            k.direction = Direction::backward;
        } else {
            throw SourceError("grant store line " + std::to_string(lineno) + ": bad direction '" + dir + "'");
        }
        const auto bytes = from_hex(auth);
        if (!bytes || bytes->size() != g.auth.bytes.size()) {
            throw SourceError("grant store line " + std::to_string(lineno) + ": bad authenticator");
        }
        std::copy(bytes->begin(), bytes->end(), g.auth.bytes.begin());
        store.put(k, g);
    }
    return store;
}

// --- Setup -----------------------------------------------------------------

wire::SetupReq build_setup(const KeyRing& keys, const PathPlan& plan, AsId src, TimeNs ts_req,
                           const std::optional<crypto::SetupDemand>& demand) {
    plan.validate();
    wire::SetupReq req;
    req.src = src;
    req.ts_req = ts_req;
    req.demand = demand;
    for (std::uint8_t hop : plan.requested()) {
        const auto& key = key_for(keys, plan.hops[hop].as);
        wire::SetupReqEntry e;
        e.hop = hop;
        e.flag_r = std::binary_search(plan.forward.begin(), plan.forward.end(), hop);
        e.flag_b = std::binary_search(plan.backward.begin(), plan.backward.end(), hop);
        e.auth = crypto::compute_setup_auth(key, ts_req, e.flag_r, e.flag_b, demand);
        req.entries.push_back(e);
    }
    return req;
}

IngestResult ingest_response(GrantStore& store, const KeyRing& keys, const wire::SetupResp& resp,
                             const PathPlan& plan) {
    IngestResult result;
    for (const auto& e : resp.entries) {
        if (e.hop >= plan.hops.size()) {
            ++result.rejected;
            continue;
        }
        const auto& hop = plan.hops[e.hop];
        auto kit = keys.find(hop.as);
        if (kit == keys.end()) {
            ++result.rejected;
            continue;
        }
        const auto auth = crypto::unseal_grant(kit->second, e.sealed, e.bw, e.ts_exp, e.nonce);
        if (!auth) {
            ++result.rejected;
            continue;
        }
        const auto key = grant_key(hop, e.direction);
        store.put(key, FlyoverGrant{e.bw, e.ts_exp, *auth});
        result.accepted.push_back(key);
    }
    return result;
}

// --- Composition -----------------------------------------------------------

std::string_view to_string(Strategy s) { return s == Strategy::concurrent ? "concurrent" : "max"; }

bool CompositionPlan::active(std::size_t i, TimeNs t) const {
    if (strategy == Strategy::concurrent || slots <= 1) return true;
    return (t / static_cast<TimeNs>(quantum)) % slots == paths[i].slot;
}

CompositionPlan compose(const GrantStore& store, const std::vector<PathPlan>& paths, Strategy strategy,
                        TimeNs now, DurationNs quantum) {
    CompositionPlan plan;
    plan.strategy = strategy;
    plan.quantum = quantum;
    plan.paths.resize(paths.size());
    plan.shares.resize(paths.size());

    std::vector<std::set<GrantKey>> used(paths.size());
    std::map<GrantKey, std::size_t> users;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        for (std::uint8_t hop : paths[i].forward) used[i].insert(grant_key(paths[i].hops.at(hop), Direction::forward));
        for (const auto& k : used[i]) ++users[k];
    }

    for (std::size_t i = 0; i < paths.size(); ++i) {
        auto& pr = plan.paths[i];
        if (used[i].empty()) {
            pr.partial = true;
            continue;
        }
        Bps rate = std::numeric_limits<Bps>::max();
        for (const auto& k : used[i]) {
            const auto* g = store.find_valid(k, now);
            if (g == nullptr) {
                pr.partial = true;
                rate = 0;
                continue;
            }
            const Bps share = strategy == Strategy::concurrent ? g->bw / users[k] : g->bw;
            plan.shares[i][k] = share;
            rate = std::min(rate, share);
        }
        pr.rate = rate;
    }

    if (strategy == Strategy::maximum) {
        // Greedy coloring of the conflict graph; each color owns one time slice.
        std::size_t colors = 0;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            std::set<std::size_t> taken;
            for (std::size_t j = 0; j < i; ++j) {
                const bool conflict = std::any_of(used[i].begin(), used[i].end(),
                                                  [&](const GrantKey& k) { return used[j].contains(k); });
                if (conflict) taken.insert(plan.paths[j].slot);
            }
            std::size_t c = 0;
            while (taken.contains(c)) ++c;
            plan.paths[i].slot = c;
            colors = std::max(colors, c + 1);
        }
        plan.slots = std::max<std::size_t>(colors, 1);
    }
    return plan;
}

// --- Data packets ----------------------------------------------------------

wire::DataPkt emit_packet(const GrantStore& store, const PathPlan& plan, AsId src, Bytes payload,
                          std::uint16_t len_b, TimeNs now, EmitOptions opts) {
    plan.validate();
    wire::DataPkt pkt;
    pkt.src = src;
    pkt.ts_pkt = now;
    pkt.len_b = len_b;
    pkt.payload = std::move(payload);
    const std::size_t n_b = len_b > 0 ? plan.backward.size() : 0;
    const std::size_t total = wire::DataPkt::header_len(plan.forward.size(), n_b) + pkt.payload.size();
    if (total > wire::kMaxPacketLen) throw wire::EncodeError("DataPkt: packet longer than 65535 bytes");

    for (std::uint8_t hop : plan.forward) {
        const auto& g = grant_for(store, plan.hops[hop], Direction::forward, now, opts.allow_expired);
        pkt.rvfs.push_back({hop, crypto::compute_validation_field(g.auth, now, static_cast<std::uint16_t>(total))});
    }
    if (n_b > 0) {
        for (std::uint8_t hop : plan.backward) {
            const auto& g = grant_for(store, plan.hops[hop], Direction::backward, now, opts.allow_expired);
            pkt.bvfs.push_back({hop, crypto::compute_validation_field(g.auth, now, len_b)});
        }
    }
    return pkt;
}

wire::DataPkt build_reply(const wire::DataPkt& fwd, Bytes reply_payload) {
    if (fwd.bvfs.empty()) throw ReplyTooLong("forward packet carries no backward validation fields");
    wire::DataPkt reply;
    reply.src = fwd.src;
    reply.d_flag = true;
    reply.ts_pkt = fwd.ts_pkt;
    reply.len_b = fwd.len_b;
    reply.bvfs = fwd.bvfs;
    reply.payload = std::move(reply_payload);
    if (reply.encoded_len() > fwd.len_b) {
        throw ReplyTooLong("reply of " + std::to_string(reply.encoded_len()) + " bytes exceeds lenB " +
                           std::to_string(fwd.len_b));
    }
    return reply;
}

Renewal renew(const GrantStore& store, const KeyRing& keys, const PathPlan& plan, AsId src, TimeNs now,
              const std::optional<crypto::SetupDemand>& demand) {
    Renewal r{build_setup(keys, plan, src, now, demand), std::nullopt};
    const bool all_valid = !plan.forward.empty() &&
                           std::all_of(plan.forward.begin(), plan.forward.end(), [&](std::uint8_t hop) {
                               return store.find_valid(grant_key(plan.hops[hop], Direction::forward), now) != nullptr;
                           });
    if (all_valid) {
        auto carrier = emit_packet(store, plan, src, wire::encode(r.request), 0, now);
        carrier.carries_setup = true;
        r.carrier = std::move(carrier);
    }
    return r;
}

// --- PathShaper --------------------------------------------------------------

PathShaper::PathShaper(CompositionPlan plan, DurationNs window)
    : plan_(std::move(plan)), window_(window), buckets_(plan_.paths.size()) {}

bool PathShaper::admit(std::size_t path, std::size_t len, TimeNs now) {
    if (!plan_.active(path, now)) return false;
    auto& b = buckets_.at(path);
    if (b.ts == 0) b.ts = now;
    return policing::bucket_check(b, len, plan_.paths[path].rate, window_, now);
}

// --- ReservationService ------------------------------------------------------

TimeNs ReservationService::next_ts(TimeNs now) {
    if (any_ts_ && time_diff(now, last_ts_) <= 0) now = last_ts_ + 1;
    last_ts_ = now;
    any_ts_ = true;
    return now;
}

wire::SetupReq ReservationService::setup(const PathPlan& plan, TimeNs now,
                                         const std::optional<crypto::SetupDemand>& demand) {
    return build_setup(keys_, plan, src_, next_ts(now), demand);
}

IngestResult ReservationService::ingest(const wire::SetupResp& resp, const PathPlan& plan) {
    return ingest_response(store_, keys_, resp, plan);
}

wire::DataPkt ReservationService::emit(const PathPlan& plan, Bytes payload, std::uint16_t len_b, TimeNs now,
                                       EmitOptions opts) {
    return emit_packet(store_, plan, src_, std::move(payload), len_b, next_ts(now), opts);
}

Renewal ReservationService::renewal(const PathPlan& plan, TimeNs now) {
    return renew(store_, keys_, plan, src_, next_ts(now));
}

}  // namespace helia::source
