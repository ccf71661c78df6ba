#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "helia/crypto.hpp"
#include "helia/policing.hpp"
#include "helia/types.hpp"
#include "helia/wire.hpp"

namespace helia::source {

class SourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No DRKey for an AS whose hop is being requested.
class MissingKey : public SourceError {
public:
    using SourceError::SourceError;
};

/// No usable grant for a hop that needs a validation field.
class MissingGrant : public SourceError {
public:
    using SourceError::SourceError;
};

/// Backward reply that would exceed lenB, or a forward packet without BVFs.
class ReplyTooLong : public SourceError {
public:
    using SourceError::SourceError;
};

/// Keys K_{i->S} already fetched by the source, by provider AS.
using KeyRing = std::map<AsId, crypto::DrKey>;

struct PathHop {
    AsId as = 0;
    IfId ingress = kInternalInterface;
    IfId egress = kInternalInterface;
};

/// One path as the source sees it. Hop indices are positions in `hops`;
/// `forward` and `backward` are the requested sets A_F and A_B, sorted.
struct PathPlan {
    std::vector<PathHop> hops;
    std::vector<std::uint8_t> forward;
    std::vector<std::uint8_t> backward;

    /// A_F ∪ A_B, sorted.
    std::vector<std::uint8_t> requested() const;
    /// Throws std::invalid_argument for out-of-range, unsorted or duplicate indices.
    void validate() const;
};

/// Grants are keyed with interfaces in forward-path naming for both directions.
struct GrantKey {
    AsId provider = 0;
    IfId ingress = 0;
    IfId egress = 0;
    Direction direction = Direction::forward;
    friend auto operator<=>(const GrantKey&, const GrantKey&) = default;
};

struct FlyoverGrant {
    Bps bw = 0;
    TimeNs ts_exp = 0;
    crypto::Authenticator auth{};
    friend bool operator==(const FlyoverGrant&, const FlyoverGrant&) = default;
};

GrantKey grant_key(const PathHop& hop, Direction dir);

class GrantStore {
public:
    void put(const GrantKey& key, const FlyoverGrant& grant) { grants_[key] = grant; }
    const FlyoverGrant* find(const GrantKey& key) const;
    /// Like find, but nullptr once the grant has expired.
    const FlyoverGrant* find_valid(const GrantKey& key, TimeNs now) const;
    bool expired(const GrantKey& key, TimeNs now) const;
    std::size_t size() const { return grants_.size(); }
    const std::map<GrantKey, FlyoverGrant>& all() const { return grants_; }

    /// One line per grant: provider ingress egress fwd|bwd bw ts_exp auth-hex.
    void dump(std::ostream& out) const;
    /// Throws SourceError on malformed input.
    static GrantStore load(std::istream& in);

    friend bool operator==(const GrantStore&, const GrantStore&) = default;

private:
    std::map<GrantKey, FlyoverGrant> grants_;
};

/// Per-hop Auth over the request; entries only for hops in A_F ∪ A_B.
wire::SetupReq build_setup(const KeyRing& keys, const PathPlan& plan, AsId src, TimeNs ts_req,
                           const std::optional<crypto::SetupDemand>& demand = std::nullopt);

struct IngestResult {
    std::vector<GrantKey> accepted;
    std::size_t rejected = 0;
};

/// Unseals each entry independently; entries that fail to authenticate are skipped.
IngestResult ingest_response(GrantStore& store, const KeyRing& keys, const wire::SetupResp& resp,
                             const PathPlan& plan);

enum class Strategy { concurrent, maximum };

std::string_view to_string(Strategy s);

struct PathRate {
    Bps rate = 0;
    /// Set when a requested forward hop lacks an unexpired grant.
    bool partial = false;
    /// Maximum strategy: index of the time slice this path owns.
    std::size_t slot = 0;
};

struct CompositionPlan {
    Strategy strategy = Strategy::concurrent;
    std::vector<PathRate> paths;
    /// Bandwidth each path may use of each flyover, indexed like `paths`.
    std::vector<std::map<GrantKey, Bps>> shares;
    /// Maximum strategy: number of distinct slices and their length.
    std::size_t slots = 1;
    DurationNs quantum = 100 * kNsPerMs;

    /// Whether path `i` may send at time `t`. Always true for concurrent plans.
    bool active(std::size_t i, TimeNs t) const;
};

CompositionPlan compose(const GrantStore& store, const std::vector<PathPlan>& paths, Strategy strategy,
                        TimeNs now, DurationNs quantum = 100 * kNsPerMs);

struct EmitOptions {
    /// Use grants past their expiry (for exercising router-side expiry).
    bool allow_expired = false;
};

/// Builds a forward data packet stamped `now`. BVFs are added when len_b > 0.
wire::DataPkt emit_packet(const GrantStore& store, const PathPlan& plan, AsId src, Bytes payload,
                          std::uint16_t len_b, TimeNs now, EmitOptions opts = {});

/// Destination reply carrying the forward packet's tsPkt, lenB and BVFs.
wire::DataPkt build_reply(const wire::DataPkt& fwd, Bytes reply_payload);

struct Renewal {
    wire::SetupReq request;
    /// Present when every forward grant is still valid: the request wrapped as
    /// reservation traffic.
    std::optional<wire::DataPkt> carrier;
};

Renewal renew(const GrantStore& store, const KeyRing& keys, const PathPlan& plan, AsId src, TimeNs now,
              const std::optional<crypto::SetupDemand>& demand = std::nullopt);

/// Source-side rate limiting: one token bucket per path at the planned rate.
class PathShaper {
public:
    explicit PathShaper(CompositionPlan plan, DurationNs window = 50 * kNsPerMs);

    bool admit(std::size_t path, std::size_t len, TimeNs now);
    const CompositionPlan& plan() const { return plan_; }

private:
    CompositionPlan plan_;
    DurationNs window_;
    std::vector<policing::TokenBucket> buckets_;
};

/// Stateful wrapper for one source AS. Guarantees strictly increasing packet
/// and request timestamps so that no two of its messages share a dedup key.
class ReservationService {
public:
    ReservationService(AsId src, KeyRing keys) : src_(src), keys_(std::move(keys)) {}

    AsId src() const { return src_; }
    GrantStore& store() { return store_; }
    const GrantStore& store() const { return store_; }
    const KeyRing& keys() const { return keys_; }

    wire::SetupReq setup(const PathPlan& plan, TimeNs now,
                         const std::optional<crypto::SetupDemand>& demand = std::nullopt);
    IngestResult ingest(const wire::SetupResp& resp, const PathPlan& plan);
    wire::DataPkt emit(const PathPlan& plan, Bytes payload, std::uint16_t len_b, TimeNs now, EmitOptions opts = {});
    Renewal renewal(const PathPlan& plan, TimeNs now);

private:
    TimeNs next_ts(TimeNs now);

    AsId src_;
    KeyRing keys_;
    GrantStore store_;
    TimeNs last_ts_ = 0;
    bool any_ts_ = false;
};

}  // namespace helia::source
