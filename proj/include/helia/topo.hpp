#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <unordered_map>
#include <vector>

#include "helia/admission.hpp"
#include "helia/source_service.hpp"
#include "helia/types.hpp"

namespace helia::topo {

using NodeId = std::uint32_t;

struct Edge {
    NodeId u = 0;
    NodeId v = 0;
    Bps capacity = 0;
};

/// Undirected graph; each edge stands for two directed links of equal capacity.
/// Interface 0 of every node is internal; interface i >= 1 is the i-th entry
/// of the node's adjacency list.
class TopologyGraph {
public:
    explicit TopologyGraph(std::size_t n = 0) : adj_(n) {}

    std::size_t node_count() const { return adj_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }
    std::vector<Edge>& edges() { return edges_; }

    /// Returns the edge index. Self-loops and parallel edges are rejected.
    std::size_t add_edge(NodeId u, NodeId v, Bps capacity = 0);
    bool has_edge(NodeId u, NodeId v) const;

    std::size_t degree(NodeId u) const { return adj_[u].size(); }
    /// Neighbors in interface order.
    std::vector<NodeId> neighbors(NodeId u) const;
    /// Interface of `u` facing neighbor `v`.
    IfId interface_to(NodeId u, NodeId v) const;
    /// Capacities per interface of `u`; entry 0 is the maximum external capacity.
    std::vector<Bps> interface_capacities(NodeId u) const;

    bool connected() const;

    struct Port {
        NodeId peer;
        std::uint32_t edge;
        /// Position of this edge in the peer's adjacency list.
        std::uint32_t rev;
    };
    const std::vector<Port>& ports(NodeId u) const { return adj_[u]; }

private:
    std::vector<Edge> edges_;
    std::vector<std::vector<Port>> adj_;
};

/// Barabási–Albert preferential attachment: a star on m+1 nodes, then every
/// new node attaches to m distinct existing nodes chosen proportionally to
/// degree. Yields m*(n-m) edges. Capacities are left at zero.
TopologyGraph barabasi_albert(std::size_t n, std::size_t m, std::mt19937_64& rng);

inline constexpr Bps kCapacityStep = 40'000'000'000ULL;
inline constexpr std::size_t kCapacityBuckets = 10;

/// Degree-gravity capacities: the edge's rank among all edges by
/// deg(u)*deg(v) (number of edges with a strictly smaller product) selects
/// one of ten buckets 40, 80, ..., 400 Gbps.
void assign_capacities(TopologyGraph& g);

struct TopologyConfig {
    std::size_t n_nodes = 500;
    std::size_t ba_m = 2;
    std::uint64_t seed = 1;
};

TopologyGraph generate_topology(const TopologyConfig& cfg);

/// Allocation matrix from interface capacities: entry (a,b) starts at C_b,
/// columns are scaled to sum to C_b, then rows exceeding C_a are scaled down.
/// Integer arithmetic, rounding down.
admission::AllocationMatrix build_matrix(const std::vector<Bps>& caps);

std::vector<admission::AllocationMatrix> build_matrices(const TopologyGraph& g);

/// Number of destinations for sampling rate r: round(r*N), clamped to [1, N-1].
std::size_t destination_count(std::size_t n, double r);

/// All nodes except `src`, in weighted random order (Efraimidis–Spirakis keys
/// with weight deg). Any prefix is a weighted sample without replacement, so
/// prefixes for increasing r are nested.
std::vector<NodeId> destination_order(const TopologyGraph& g, NodeId src, std::mt19937_64& rng);

std::vector<NodeId> sample_destinations(const TopologyGraph& g, NodeId src, double r, std::mt19937_64& rng);

/// Destination orders for every source, drawn from one stream seeded by `seed`.
std::vector<std::vector<NodeId>> destination_orders(const TopologyGraph& g, std::uint64_t seed);

/// BFS shortest-path tree from `src`; each node's parent is its lowest-id
/// neighbor one step closer. parent[src] == src; unreachable nodes get npos.
inline constexpr NodeId kNoParent = ~NodeId{0};
std::vector<NodeId> shortest_path_tree(const TopologyGraph& g, NodeId src);

/// Node sequence src..dst along the tree.
std::vector<NodeId> tree_path(const std::vector<NodeId>& parent, NodeId src, NodeId dst);

/// Interface pair used at each node of `path`.
std::vector<IfPair> path_pairs(const TopologyGraph& g, const std::vector<NodeId>& path);

struct ReservationResult {
    /// a[src][k]: end-to-end reservation to the k-th destination of src.
    std::vector<std::vector<Bps>> a;
    /// Destinations per source, aligned with `a`.
    std::vector<std::vector<NodeId>> dests;
};

/// Per-pair requester counts: rho[node][pair_key(pair)] = number of distinct sources
/// whose paths cross that interface pair.
using RhoTable = std::vector<std::unordered_map<std::uint32_t, std::uint64_t>>;

inline std::uint32_t pair_key(IfPair p) { return (std::uint32_t{p.in} << 16) | p.out; }

RhoTable count_requesters(const TopologyGraph& g, const std::vector<std::vector<NodeId>>& dests);

ReservationResult compute_reservations(const TopologyGraph& g, const std::vector<admission::AllocationMatrix>& m,
                                       const std::vector<std::vector<NodeId>>& dests, source::Strategy strategy,
                                       std::uint64_t rho_min);

struct CoverResult {
    std::vector<double> per_node;
    double median = 0.0;
    Bps gamma = 0;
};

/// cover_i = |{j in S_i : a_ij > gamma}| / |S_i|; nodes with empty S_i are skipped.
CoverResult gamma_cover(const ReservationResult& res, Bps gamma);

double median(std::vector<double> v);

/// Default ρ_min for topology experiments. Desk-scale graphs have few
/// requesters per pair, so the divisor floor is set high enough that 100 kbps
/// reservations start to fail at full sampling.
inline constexpr std::uint64_t kExperimentRhoMin = 1280;

struct ExperimentConfig {
    std::size_t n_nodes = 500;
    std::size_t ba_m = 2;
    double r = 0.1;
    source::Strategy strategy = source::Strategy::concurrent;
    std::uint64_t rho_min = kExperimentRhoMin;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument unless r in (0,1] and n_nodes >= 2.
    void validate() const;
};

/// Full pipeline for one configuration.
struct Experiment {
    TopologyGraph graph;
    std::vector<admission::AllocationMatrix> matrices;
    std::vector<std::vector<NodeId>> orders;

    static Experiment create(std::size_t n_nodes, std::size_t ba_m, std::uint64_t seed);
    std::vector<std::vector<NodeId>> destinations(double r) const;
    ReservationResult run(double r, source::Strategy strategy, std::uint64_t rho_min) const;
};

/// Rows (seed, n, r, strategy, src, dst, a_ij).
void write_reservations_csv(std::ostream& out, const ExperimentConfig& cfg, const ReservationResult& res,
                            bool header = true);

}  // namespace helia::topo
