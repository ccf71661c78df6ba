#pragma once

// Deterministic discrete-event simulation of a Helia deployment: one border
// router per AS, directed links with a strict-priority queue in front of a
// finite best-effort queue, reservation and best-effort flows, and adversaries.
//
// Scenario files are JSON:
//
//   {
//     "name": "flood", "seed": 7, "duration": "8s",
//     "topology": {"chain": 5, "capacity": "100Mbps", "delay": "2ms"},
//     "skew": "0ms", "be_buffer": 100,
//     "router": {"delta": "500ms", "lifetime": "1s", "bucket_window": "50ms"},
//     "estimator": {"epsilon": "10s", "rho_min": 16, "omega": 0.8, "theta": 8},
//     "flows": [{"name": "honest", "src": 0, "dst": 4, "kind": "reservation",
//                "packet_size": 1000, "load": 0.9, "start": "0s", "stop": "7s"}],
//     "adversaries": [{"kind": "best_effort_flood", "from": 2, "to": 3, "factor": 10}],
//     "requirements": {"R4": {}}
//   }
//
// The topology is either a chain, an explicit node/link list, or a file
// written by `topo gen`. Every AS's allocation matrix is derived from its
// interface capacities with topo::build_matrix.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "helia/border_router.hpp"
#include "helia/topo.hpp"
#include "helia/types.hpp"

namespace helia::simnet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using topo::NodeId;

struct LinkSpec {
    NodeId a = 0;
    NodeId b = 0;
    Bps capacity = 0;
    DurationNs delay = 0;
};

enum class FlowKind { reservation, best_effort };

struct FlowSpec {
    std::string name;
    NodeId src = 0;
    NodeId dst = 0;
    /// Explicit AS path; shortest path when empty.
    std::vector<NodeId> path;
    FlowKind kind = FlowKind::reservation;
    std::size_t packet_size = 1000;
    /// Reservation flows send at load * granted rate.
    double load = 0.9;
    /// Best-effort flows send at this fixed rate.
    Bps rate = 0;
    TimeNs start = 0;
    TimeNs stop = 0;
    /// Destination replies per forward packet; 0 disables backward reservations.
    std::size_t reply_size = 0;
    /// Explicit renewal period; 0 means epsilon/4.
    DurationNs renew_interval = 0;
    /// Retry period for setup requests not yet fully granted; 0 means epsilon/4.
    DurationNs retry_interval = 0;
    /// Set for flows driven by an adversary.
    bool adversarial = false;
};

enum class AdversaryKind { best_effort_flood, request_flood, replayer, spoofer, overuser, link_observer };

std::string_view to_string(AdversaryKind k);

struct AdversarySpec {
    AdversaryKind kind = AdversaryKind::best_effort_flood;
    /// Directed link (from -> to) for on-link adversaries.
    NodeId from = 0;
    NodeId to = 0;
    bool has_link = false;
    /// Target flow for replayer, spoofer, request flood and overuser.
    std::string flow;
    /// Flood: multiple of link capacity. Overuser: multiple of the granted rate.
    double factor = 10.0;
    std::size_t packet_size = 1500;
    /// Spoofer: forged packets. Request flood: number of sybil ASes (0 = 10 * theta).
    std::uint64_t count = 0;
    /// Request flood: forged-authenticator requests per second claiming the victim.
    double forged_rate = 100.0;
    /// Request flood: hop index on the victim path where requests enter.
    std::size_t hop = 1;
    /// Replayer: lag of each duplicate behind the original. Request flood: request period (0 = epsilon/4).
    DurationNs interval = 0;
    TimeNs start = 0;
    /// 0 means the end of the scenario.
    TimeNs stop = 0;
};

struct RequirementSpec {
    /// R4: added on top of the per-hop propagation + serialization bound.
    DurationNs delay_slack = 0;
    /// R3: tolerated forgeries.
    std::uint64_t max_forgeries = 2;
    /// R5: accepted band for the overuser's demoted byte fraction.
    double band_lo = 0.48;
    double band_hi = 0.52;
    /// Flows a requirement applies to; empty = every eligible flow.
    std::vector<std::string> flows;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    DurationNs duration = 10 * kNsPerSec;
    topo::TopologyGraph graph;
    /// Per-edge propagation delay, indexed like graph.edges().
    std::vector<DurationNs> delays;
    /// Allocation matrices given explicitly; other nodes use build_matrix.
    std::map<NodeId, admission::AllocationMatrix> matrices;
    std::size_t be_buffer = 100;
    std::size_t priority_limit = 100'000;
    /// Each AS clock is offset by a uniform draw from [-skew, skew].
    DurationNs skew = 0;
    router::RouterConfig router;
    std::vector<FlowSpec> flows;
    std::vector<AdversarySpec> adversaries;
    std::map<std::string, RequirementSpec> requirements;

    /// Throws ConfigError when references do not resolve.
    void validate() const;
};

/// Throws ConfigError. Relative topology file paths resolve against `base_dir`.
ScenarioConfig parse_scenario(std::istream& in, const std::string& base_dir = ".");
ScenarioConfig load_scenario(const std::string& path);

struct TopologyFile {
    topo::TopologyGraph graph;
    std::map<NodeId, admission::AllocationMatrix> matrices;
    std::uint64_t seed = 0;
};

/// Topology file as written by `topo gen`: {"seed", "nodes", "edges": [[u, v, bps], ...]}
/// plus an optional "matrices" object mapping node ids to row lists.
void write_topology_json(std::ostream& out, const topo::TopologyGraph& g, std::uint64_t seed,
                         bool with_matrices = false);
/// Throws ConfigError.
TopologyFile read_topology_json(std::istream& in);

struct FlowStats {
    std::string name;
    FlowKind kind = FlowKind::reservation;
    AsId src_as = 0;
    bool adversarial = false;
    std::uint64_t sent = 0;
    std::uint64_t sent_bytes = 0;
    std::uint64_t delivered = 0;
    std::uint64_t delivered_priority = 0;
    std::uint64_t demoted = 0;
    std::uint64_t lost = 0;
    std::uint64_t in_flight = 0;
    DurationNs max_delay = 0;
    DurationNs delay_bound = 0;
    std::uint64_t delay_breaches = 0;
    std::uint64_t replies_sent = 0;
    std::uint64_t replies_delivered = 0;
    std::uint64_t requests = 0;
    std::uint64_t renewals = 0;
    /// Send times (simulation clock) of the first request and of the request
    /// that completed the reservation; -1 if none.
    DurationNs first_request = -1;
    DurationNs granting_request = -1;
};

struct RequirementResult {
    std::string id;
    bool pass = false;
    std::string detail;
};

struct ScenarioResult {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<FlowStats> flows;
    std::vector<RequirementResult> requirements;
    /// FNV-1a over every event-log line.
    std::uint64_t log_digest = 0;
    std::uint64_t log_lines = 0;
    std::uint64_t events = 0;
    /// Adversary counters by name, e.g. "spoof.priority".
    std::map<std::string, std::uint64_t> counters;
    /// Per-router monitor reports, by AS id.
    std::map<AsId, std::string> monitor_reports;

    bool passed() const;
    const FlowStats* flow(const std::string& name) const;
};

/// Runs the scenario to completion. Every event-log line is hashed into the
/// digest; lines are also written to `log` when given.
ScenarioResult run_scenario(const ScenarioConfig& cfg, std::ostream* log = nullptr);

/// CSV: one row per flow.
void write_summary_csv(std::ostream& out, const ScenarioResult& res);

/// AS id used for a topology node.
inline AsId as_of(NodeId n) { return AsId{64'512} + n; }

}  // namespace helia::simnet
