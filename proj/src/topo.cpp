#include "helia/topo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

namespace helia::topo {

// --- Graph -------------------------------------------------------------------

std::size_t TopologyGraph::add_edge(NodeId u, NodeId v, Bps capacity) {
    if (u == v) throw std::invalid_argument("self-loop");
    if (u >= adj_.size() || v >= adj_.size()) throw std::out_of_range("node id out of range");
    if (has_edge(u, v)) throw std::invalid_argument("parallel edge");
    const std::size_t idx = edges_.size();
    edges_.push_back(Edge{u, v, capacity});
    const auto e = static_cast<std::uint32_t>(idx);
    adj_[u].push_back(Port{v, e, static_cast<std::uint32_t>(adj_[v].size())});
    adj_[v].push_back(Port{u, e, static_cast<std::uint32_t>(adj_[u].size() - 1)});
    return idx;
}

bool TopologyGraph::has_edge(NodeId u, NodeId v) const {
    const auto& a = adj_[u];
    return std::any_of(a.begin(), a.end(), [v](const Port& p) { return p.peer == v; });
}

std::vector<NodeId> TopologyGraph::neighbors(NodeId u) const {
    std::vector<NodeId> out;
    out.reserve(adj_[u].size());
    for (const auto& p : adj_[u]) out.push_back(p.peer);
    return out;
}

IfId TopologyGraph::interface_to(NodeId u, NodeId v) const {
    const auto& a = adj_[u];
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].peer == v) return static_cast<IfId>(i + 1);
    }
    throw std::invalid_argument("nodes are not adjacent");
}

std::vector<Bps> TopologyGraph::interface_capacities(NodeId u) const {
    std::vector<Bps> caps(adj_[u].size() + 1, 0);
    for (std::size_t i = 0; i < adj_[u].size(); ++i) {
        caps[i + 1] = edges_[adj_[u][i].edge].capacity;
        caps[0] = std::max(caps[0], caps[i + 1]);
    }
    return caps;
}

bool TopologyGraph::connected() const {
    if (adj_.empty()) return true;
    std::vector<bool> seen(adj_.size(), false);
    std::deque<NodeId> q{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
        const NodeId u = q.front();
        q.pop_front();
        for (const auto& p : adj_[u]) {
            if (!seen[p.peer]) {
                seen[p.peer] = true;
                ++count;
                q.push_back(p.peer);
            }
        }
    }
    return count == adj_.size();
}

// --- Generation --------------------------------------------------------------

TopologyGraph barabasi_albert(std::size_t n, std::size_t m, std::mt19937_64& rng) {
    if (m < 1 || m >= n) throw std::invalid_argument("Barabási–Albert graph needs 1 <= m < n");
    TopologyGraph g(n);
    std::vector<NodeId> repeated;
    for (NodeId v = 1; v <= m; ++v) {
        g.add_edge(0, v);
        repeated.push_back(0);
        repeated.push_back(v);
    }
    for (NodeId src = static_cast<NodeId>(m + 1); src < n; ++src) {
        std::vector<NodeId> targets;
        std::unordered_set<NodeId> chosen;
        while (targets.size() < m) {
            std::uniform_int_distribution<std::size_t> pick(0, repeated.size() - 1);
            const NodeId t = repeated[pick(rng)];
            if (chosen.insert(t).second) targets.push_back(t);
        }
        for (NodeId t : targets) {
            g.add_edge(src, t);
            repeated.push_back(t);
            repeated.push_back(src);
        }
    }
    return g;
}

void assign_capacities(TopologyGraph& g) {
    auto& edges = g.edges();
    const std::size_t e = edges.size();
    if (e == 0) return;
    std::vector<std::uint64_t> products(e);
    for (std::size_t i = 0; i < e; ++i) {
        products[i] = static_cast<std::uint64_t>(g.degree(edges[i].u)) * g.degree(edges[i].v);
    }
    std::vector<std::uint64_t> sorted = products;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < e; ++i) {
        const auto rank = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), products[i]) -
                                                   sorted.begin());
        const std::size_t bucket = std::min(kCapacityBuckets - 1, kCapacityBuckets * rank / e);
        edges[i].capacity = kCapacityStep * (bucket + 1);
    }
}

TopologyGraph generate_topology(const TopologyConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    auto g = barabasi_albert(cfg.n_nodes, cfg.ba_m, rng);
    assign_capacities(g);
    return g;
}

// --- Allocation matrices -----------------------------------------------------

admission::AllocationMatrix build_matrix(const std::vector<Bps>& caps) {
    using u128 = unsigned __int128;
    const std::size_t k = caps.size();
    admission::AllocationMatrix m(k);
    if (k < 2) return m;
    // Column b holds k-1 copies of C_b before scaling, so each becomes C_b/(k-1).
    for (std::size_t b = 0; b < k; ++b) {
        for (std::size_t a = 0; a < k; ++a) {
            if (a != b) m.set(static_cast<IfId>(a), static_cast<IfId>(b), caps[b] / (k - 1));
        }
    }
    for (std::size_t a = 0; a < k; ++a) {
        const Bps sum = m.row_sum(static_cast<IfId>(a));
        if (sum <= caps[a]) continue;
        for (std::size_t b = 0; b < k; ++b) {
            const Bps v = m.at(static_cast<IfId>(a), static_cast<IfId>(b));
            m.set(static_cast<IfId>(a), static_cast<IfId>(b), static_cast<Bps>(u128(v) * caps[a] / sum));
        }
    }
    return m;
}

std::vector<admission::AllocationMatrix> build_matrices(const TopologyGraph& g) {
    std::vector<admission::AllocationMatrix> out;
    out.reserve(g.node_count());
    for (NodeId u = 0; u < g.node_count(); ++u) out.push_back(build_matrix(g.interface_capacities(u)));
    return out;
}

// --- Destination sampling ----------------------------------------------------

std::size_t destination_count(std::size_t n, double r) {
    const auto d = static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 0.5));
    return std::clamp<std::size_t>(d, 1, n - 1);
}

std::vector<NodeId> destination_order(const TopologyGraph& g, NodeId src, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, NodeId>> keyed;
    keyed.reserve(g.node_count());
    for (NodeId v = 0; v < g.node_count(); ++v) {
        const double u = unif(rng);
        if (v == src) continue;
        // log(u)/w orders like u^(1/w) without underflow.
        const double w = static_cast<double>(std::max<std::size_t>(g.degree(v), 1));
        keyed.emplace_back(std::log(std::max(u, std::numeric_limits<double>::min())) / w, v);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<NodeId> out;
    out.reserve(keyed.size());
    for (const auto& [key, v] : keyed) out.push_back(v);
    return out;
}

std::vector<NodeId> sample_destinations(const TopologyGraph& g, NodeId src, double r, std::mt19937_64& rng) {
    auto order = destination_order(g, src, rng);
    order.resize(destination_count(g.node_count(), r));
    return order;
}

std::vector<std::vector<NodeId>> destination_orders(const TopologyGraph& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x6a09e667f3bcc908ULL);
    std::vector<std::vector<NodeId>> out;
    out.reserve(g.node_count());
    for (NodeId s = 0; s < g.node_count(); ++s) out.push_back(destination_order(g, s, rng));
    return out;
}

// --- Paths -------------------------------------------------------------------

namespace {

struct Tree {
    std::vector<NodeId> parent;
    std::vector<IfId> up;       // interface of each node facing its parent
    std::vector<NodeId> order;  // BFS order from the root
};

Tree bfs_tree(const TopologyGraph& g, NodeId src) {
    const std::size_t n = g.node_count();
    std::vector<std::uint32_t> dist(n, std::numeric_limits<std::uint32_t>::max());
    Tree t;
    t.parent.assign(n, kNoParent);
    t.up.assign(n, kInternalInterface);
    t.order.reserve(n);
    dist[src] = 0;
    t.parent[src] = src;
    t.order.push_back(src);
    for (std::size_t i = 0; i < t.order.size(); ++i) {
        const NodeId u = t.order[i];
        for (const auto& p : g.ports(u)) {
            const NodeId v = p.peer;
            if (dist[v] == std::numeric_limits<std::uint32_t>::max()) {
                dist[v] = dist[u] + 1;
                t.parent[v] = u;
                t.up[v] = static_cast<IfId>(p.rev + 1);
                t.order.push_back(v);
            } else if (dist[v] == dist[u] + 1 && u < t.parent[v]) {
                t.parent[v] = u;
                t.up[v] = static_cast<IfId>(p.rev + 1);
            }
        }
    }
    return t;
}

}  // namespace

std::vector<NodeId> shortest_path_tree(const TopologyGraph& g, NodeId src) { return bfs_tree(g, src).parent; }

std::vector<NodeId> tree_path(const std::vector<NodeId>& parent, NodeId src, NodeId dst) {
    if (parent.at(dst) == kNoParent) throw std::invalid_argument("destination unreachable");
    std::vector<NodeId> path{dst};
    while (path.back() != src) path.push_back(parent[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<IfPair> path_pairs(const TopologyGraph& g, const std::vector<NodeId>& path) {
    std::vector<IfPair> out(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        out[i].in = i == 0 ? kInternalInterface : g.interface_to(path[i], path[i - 1]);
        out[i].out = i + 1 == path.size() ? kInternalInterface : g.interface_to(path[i], path[i + 1]);
    }
    return out;
}

// --- Reservations ------------------------------------------------------------

namespace {

// Flyovers one source uses, with the number of its paths through each.
struct SourceUsage {
    struct Use {
        NodeId node;
        IfPair pair;
        std::uint64_t paths;
        NodeId child;  // next node toward the destinations, or the node itself when it ends a path
    };
    std::vector<Use> uses;
    Tree tree;
};

SourceUsage source_usage(const TopologyGraph& g, NodeId src, const std::vector<NodeId>& dests) {
    SourceUsage su;
    su.tree = bfs_tree(g, src);
    const auto& parent = su.tree.parent;
    std::vector<std::uint64_t> below(g.node_count(), 0);
    std::vector<bool> is_dest(g.node_count(), false);
    for (NodeId d : dests) {
        is_dest[d] = true;
        below[d] = 1;
    }
    for (auto it = su.tree.order.rbegin(); it != su.tree.order.rend(); ++it) {
        if (*it != src && below[*it] > 0) below[parent[*it]] += below[*it];
    }
    for (NodeId v : su.tree.order) {
        if (below[v] == 0) continue;
        const IfId in = su.tree.up[v];
        if (is_dest[v]) su.uses.push_back({v, IfPair{in, kInternalInterface}, 1, v});
        const auto& ports = g.ports(v);
        for (std::size_t i = 0; i < ports.size(); ++i) {
            const NodeId c = ports[i].peer;
            if (c != src && parent[c] == v && below[c] > 0) {
                su.uses.push_back({v, IfPair{in, static_cast<IfId>(i + 1)}, below[c], c});
            }
        }
    }
    return su;
}

}  // namespace

RhoTable count_requesters(const TopologyGraph& g, const std::vector<std::vector<NodeId>>& dests) {
    RhoTable rho(g.node_count());
    for (NodeId s = 0; s < g.node_count(); ++s) {
        if (dests[s].empty()) continue;
        for (const auto& u : source_usage(g, s, dests[s]).uses) ++rho[u.node][pair_key(u.pair)];
    }
    return rho;
}

ReservationResult compute_reservations(const TopologyGraph& g, const std::vector<admission::AllocationMatrix>& m,
                                       const std::vector<std::vector<NodeId>>& dests, source::Strategy strategy,
                                       std::uint64_t rho_min) {
    const auto rho = count_requesters(g, dests);
    ReservationResult res;
    res.dests = dests;
    res.a.resize(g.node_count());
    constexpr Bps kInf = std::numeric_limits<Bps>::max();
    std::vector<Bps> prefix(g.node_count());
    std::vector<Bps> end_share(g.node_count());
    for (NodeId s = 0; s < g.node_count(); ++s) {
        if (dests[s].empty()) continue;
        const auto su = source_usage(g, s, dests[s]);
        std::fill(prefix.begin(), prefix.end(), kInf);
        // Uses are emitted in BFS order, so a node's prefix is final before its children read it.
        for (const auto& u : su.uses) {
            const Bps beta = admission::flyover_bandwidth(m[u.node].at(u.pair.in, u.pair.out), rho[u.node].at(pair_key(u.pair)),
                                                          rho_min);
            const Bps share = strategy == source::Strategy::concurrent ? beta / u.paths : beta;
            const Bps reach = std::min(prefix[u.node], share);
            if (u.child == u.node) {
                end_share[u.node] = reach;
            } else {
                prefix[u.child] = reach;
            }
        }
        res.a[s].reserve(dests[s].size());
        for (NodeId d : dests[s]) res.a[s].push_back(end_share[d]);
    }
    return res;
}

// --- Cover -------------------------------------------------------------------

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : (v[mid - 1] + v[mid]) / 2.0;
}

CoverResult gamma_cover(const ReservationResult& res, Bps gamma) {
    CoverResult out;
    out.gamma = gamma;
    for (std::size_t s = 0; s < res.a.size(); ++s) {
        if (res.a[s].empty()) continue;
        const auto above = std::count_if(res.a[s].begin(), res.a[s].end(), [gamma](Bps a) { return a > gamma; });
        out.per_node.push_back(static_cast<double>(above) / static_cast<double>(res.a[s].size()));
    }
    out.median = median(out.per_node);
    return out;
}

// --- Experiment --------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (n_nodes < 2) throw std::invalid_argument("n_nodes must be at least 2");
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("sampling rate r must lie in (0, 1]");
    if (ba_m < 1 || ba_m >= n_nodes) throw std::invalid_argument("BA parameter m must satisfy 1 <= m < n");
    if (rho_min < 1) throw std::invalid_argument("rho_min must be at least 1");
}

Experiment Experiment::create(std::size_t n_nodes, std::size_t ba_m, std::uint64_t seed) {
    Experiment e;
    e.graph = generate_topology(TopologyConfig{n_nodes, ba_m, seed});
    e.matrices = build_matrices(e.graph);
    e.orders = destination_orders(e.graph, seed);
    return e;
}

std::vector<std::vector<NodeId>> Experiment::destinations(double r) const {
    const std::size_t d = destination_count(graph.node_count(), r);
    std::vector<std::vector<NodeId>> out;
    out.reserve(orders.size());
    for (const auto& o : orders) out.emplace_back(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(d));
    return out;
}

ReservationResult Experiment::run(double r, source::Strategy strategy, std::uint64_t rho_min) const {
    return compute_reservations(graph, matrices, destinations(r), strategy, rho_min);
}

void write_reservations_csv(std::ostream& out, const ExperimentConfig& cfg, const ReservationResult& res,
                            bool header) {
    if (header) out << "seed,n,r,strategy,src,dst,a_ij\n";
    for (std::size_t s = 0; s < res.a.size(); ++s) {
        for (std::size_t k = 0; k < res.a[s].size(); ++k) {
            out << cfg.seed << ',' << cfg.n_nodes << ',' << cfg.r << ',' << source::to_string(cfg.strategy) << ','
                << s << ',' << res.dests[s][k] << ',' << res.a[s][k] << '\n';
        }
    }
}

}  // namespace helia::topo
