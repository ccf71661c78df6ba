#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "helia/admission.hpp"
#include "helia/crypto.hpp"
#include "helia/policing.hpp"
#include "helia/types.hpp"
#include "helia/wire.hpp"

namespace helia::router {

struct RouterConfig {
    /// Clock-synchronization tolerance.
    DurationNs delta = 500 * kNsPerMs;
    /// Maximum packet and request lifetime.
    DurationNs lifetime = 1 * kNsPerSec;
    /// Extend reservations on validated data traffic instead of explicit renewals.
    bool self_renew = false;
    /// Token-bucket burst window T.
    DurationNs bucket_window = 50 * kNsPerMs;
    admission::EstimatorConfig estimator{};
    admission::EstimatorScope scope = admission::EstimatorScope::per_pair;
};

/// Where a frame sits on its path: this AS's hop index and the interfaces the
/// frame actually enters and leaves through.
struct HopContext {
    std::uint8_t hop = 0;
    IfId ingress = kInternalInterface;
    IfId egress = kInternalInterface;
};

enum class ForwardClass { priority, best_effort, drop };

std::string_view to_string(ForwardClass c);

/// Reasons recorded while a frame passes through the router.
enum class Note {
    no_entry,         // no setup entry or validation field for this hop
    bad_interface,    // interface outside the allocation matrix
    stale,            // timestamp outside [-delta, L + delta]
    auth_failure,     // setup authenticator did not verify
    mac_mismatch,     // RVF/BVF did not verify
    too_long,         // backward packet longer than lenB
    replay,
    denied,           // policy denied the request
    granted_forward,
    granted_backward,
    conform,
    overuse,
    expired,
    unknown_reservation,
    renewed,
    decode_error,
};

std::string_view to_string(Note n);

struct ForwardDecision {
    ForwardClass cls = ForwardClass::best_effort;
    IfId egress = kInternalInterface;
    std::vector<Note> notes;

    bool has(Note n) const;
};

/// Result of handling one frame: the forwarding decision plus any setup
/// response entries this AS appended.
struct RouterOutput {
    ForwardDecision decision;
    std::vector<wire::SetupRespEntry> entries;
};

/// A pending change of physical capacity for one interface pair.
struct ScheduledUpdate {
    IfPair pair;
    Bps value = 0;
    TimeNs effective_at = 0;
};

using NonceSource = std::function<crypto::Nonce()>;

/// One reservation handed out by the router, by setup or by self-renewal.
struct GrantEvent {
    AsId src = 0;
    IfPair pair;
    Direction direction = Direction::forward;
    admission::Grant grant;
    Bps m_entry = 0;
    TimeNs now = 0;
};

using GrantObserver = std::function<void(const GrantEvent&)>;

/// Per-AS packet pipeline: setup admission, data-packet validation, policing
/// and forwarding-class assignment. Ingress and egress roles of the AS are
/// handled by one instance; the caller supplies the interfaces per frame.
class BorderRouter {
public:
    /// `policy` defaults to an EstimatorPolicy built from `cfg`.
    BorderRouter(AsId as, const crypto::SecretKey& secret, admission::AllocationMatrix matrix, RouterConfig cfg,
                 std::unique_ptr<admission::BandwidthPolicy> policy = nullptr, TimeNs start = 0);

    /// Decodes and dispatches. Undecodable frames are forwarded best-effort.
    RouterOutput process(std::span<const std::uint8_t> frame, const HopContext& ctx, TimeNs now);

    /// Admission for this hop in both roles. The request is always forwarded,
    /// except replays, which are dropped.
    RouterOutput handle_setup(const wire::SetupReq& req, const HopContext& ctx, TimeNs now);

    /// Validates a data packet, dispatching on the D flag. A packet carrying a
    /// renewal request is validated first and then admitted like a setup request.
    RouterOutput handle_data(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now);

    ForwardDecision validate_forward(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now);
    ForwardDecision validate_backward(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now);

    /// Admission uses `value` immediately. Physical capacity rises immediately
    /// but shrinks only one reservation validity period later.
    ScheduledUpdate update_matrix(IfPair pair, Bps value, TimeNs now);

    /// Physical capacity of `pair` at time `t` under the applied updates.
    Bps physical_capacity(IfPair pair, TimeNs t) const;

    void sweep(TimeNs now) { monitor_.sweep(now); }

    void set_nonce_source(NonceSource src) { nonce_ = std::move(src); }
    void set_grant_observer(GrantObserver obs) { observer_ = std::move(obs); }

    AsId as_id() const { return as_; }
    const RouterConfig& config() const { return cfg_; }
    const admission::AllocationMatrix& matrix() const { return matrix_; }
    const policing::TrafficMonitor& monitor() const { return monitor_; }
    policing::TrafficMonitor& monitor() { return monitor_; }
    admission::BandwidthPolicy& policy() { return *policy_; }

private:
    bool fresh(TimeNs ts, TimeNs now) const;
    bool interfaces_valid(const HopContext& ctx) const;
    std::optional<wire::SetupRespEntry> admit(AsId src, IfPair pair, Direction dir, std::uint8_t hop,
                                              const crypto::DrKey& key,
                                              const std::optional<crypto::SetupDemand>& demand, TimeNs now);
    ForwardDecision finish(const policing::MonitorKey& key, std::size_t len, const HopContext& ctx, TimeNs now);
    void renew(const policing::MonitorKey& key, TimeNs now, ForwardDecision& d);

    AsId as_;
    crypto::SecretKey secret_;
    admission::AllocationMatrix matrix_;
    RouterConfig cfg_;
    std::unique_ptr<admission::BandwidthPolicy> policy_;
    policing::TrafficMonitor monitor_;
    policing::DedupWindow dedup_;
    NonceSource nonce_;
    GrantObserver observer_;
    std::vector<ScheduledUpdate> capacity_log_;
    admission::AllocationMatrix initial_;
};

}  // namespace helia::router
