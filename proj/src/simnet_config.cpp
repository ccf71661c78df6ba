#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "helia/simnet.hpp"
#include "helia/units.hpp"
#include "json.hpp"

namespace helia::simnet {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(where, "unknown key '" + key + "'");
    }
}

DurationNs duration_of(const json& j, const std::string& where) {
    try {
        if (j.is_number()) {
            if (j.get<double>() == 0) return 0;
            fail(where, "durations need a unit, e.g. \"500ms\"");
        }
        return units::parse_duration(j.get<std::string>());
    } catch (const json::exception& e) {
        fail(where, e.what());
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

Bps bandwidth_of(const json& j, const std::string& where) {
    try {
        if (j.is_number_unsigned()) return j.get<Bps>();
        return units::parse_bandwidth(j.get<std::string>());
    } catch (const json::exception& e) {
        fail(where, e.what());
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

std::uint64_t count_of(const json& j, const std::string& where) {
    try {
        if (j.is_number_unsigned()) return j.get<std::uint64_t>();
        if (j.is_number_float()) return units::parse_count(std::to_string(j.get<double>()));
        return units::parse_count(j.get<std::string>());
    } catch (const json::exception& e) {
        fail(where, e.what());
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

template <class T>
T get_as(const json& j, const std::string& where) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        fail(where, e.what());
    }
}

NodeId node_of(const json& j, const std::string& where) { return get_as<NodeId>(j, where); }

topo::TopologyGraph graph_from_edges(std::size_t n, const std::vector<LinkSpec>& links) {
    topo::TopologyGraph g(n);
    for (const auto& l : links) {
        try {
            g.add_edge(l.a, l.b, l.capacity);
        } catch (const std::exception& e) {
            fail("topology", "link " + std::to_string(l.a) + "-" + std::to_string(l.b) + ": " + e.what());
        }
    }
    return g;
}

void parse_topology(const json& t, ScenarioConfig& cfg, const std::string& base_dir) {
    check_keys(t, "topology", {"chain", "nodes", "links", "file", "capacity", "delay"});
    const DurationNs delay = t.contains("delay") ? duration_of(t["delay"], "topology.delay") : 1 * kNsPerMs;
    const Bps capacity = t.contains("capacity") ? bandwidth_of(t["capacity"], "topology.capacity") : 1'000'000'000;
    const int modes = int(t.contains("chain")) + int(t.contains("links")) + int(t.contains("file"));
    if (modes != 1) fail("topology", "give exactly one of 'chain', 'links' or 'file'");

    if (t.contains("chain")) {
        const auto n = get_as<std::size_t>(t["chain"], "topology.chain");
        if (n < 2) fail("topology.chain", "needs at least 2 ASes");
        std::vector<LinkSpec> links;
        for (NodeId i = 0; i + 1 < n; ++i) links.push_back({i, i + 1, capacity, delay});
        cfg.graph = graph_from_edges(n, links);
        cfg.delays.assign(links.size(), delay);
    } else if (t.contains("links")) {
        if (!t.contains("nodes")) fail("topology", "'links' needs 'nodes'");
        const auto n = get_as<std::size_t>(t["nodes"], "topology.nodes");
        std::vector<LinkSpec> links;
        for (std::size_t i = 0; i < t["links"].size(); ++i) {
            const auto& l = t["links"][i];
            const std::string where = "topology.links[" + std::to_string(i) + "]";
            check_keys(l, where, {"a", "b", "capacity", "delay"});
            if (!l.contains("a") || !l.contains("b")) fail(where, "needs 'a' and 'b'");
            LinkSpec s{node_of(l["a"], where), node_of(l["b"], where),
                       l.contains("capacity") ? bandwidth_of(l["capacity"], where) : capacity,
                       l.contains("delay") ? duration_of(l["delay"], where) : delay};
            if (s.a >= n || s.b >= n) fail(where, "node out of range");
            links.push_back(s);
        }
        cfg.graph = graph_from_edges(n, links);
        for (const auto& l : links) cfg.delays.push_back(l.delay);
    } else {
        std::filesystem::path p = get_as<std::string>(t["file"], "topology.file");
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        std::ifstream in(p);
        if (!in) fail("topology.file", "cannot open " + p.string());
        auto file = read_topology_json(in);
        cfg.graph = std::move(file.graph);
        cfg.matrices = std::move(file.matrices);
        cfg.delays.assign(cfg.graph.edge_count(), delay);
    }
}

void parse_estimator(const json& e, admission::EstimatorConfig& est) {
    check_keys(e, "estimator", {"epsilon", "rho_min", "omega", "theta", "filter", "bloom_bits", "bloom_hashes"});
    if (e.contains("epsilon")) est.epsilon = duration_of(e["epsilon"], "estimator.epsilon");
    if (e.contains("rho_min")) est.rho_min = get_as<std::uint64_t>(e["rho_min"], "estimator.rho_min");
    if (e.contains("omega")) {
        const double w = get_as<double>(e["omega"], "estimator.omega");
        if (!(w > 0 && w <= 1)) fail("estimator.omega", "must lie in (0, 1]");
        est.omega_ppm = static_cast<std::uint32_t>(std::llround(w * 1e6));
    }
    if (e.contains("theta")) est.theta = get_as<std::uint32_t>(e["theta"], "estimator.theta");
    if (e.contains("filter")) {
        const auto f = get_as<std::string>(e["filter"], "estimator.filter");
        if (f == "exact") est.filter = admission::FilterKind::exact;
        else if (f == "bloom") est.filter = admission::FilterKind::bloom;
        else fail("estimator.filter", "expected 'exact' or 'bloom'");
    }
    if (e.contains("bloom_bits")) est.bloom_bits = get_as<std::size_t>(e["bloom_bits"], "estimator.bloom_bits");
    if (e.contains("bloom_hashes")) est.bloom_hashes = get_as<std::uint32_t>(e["bloom_hashes"], "estimator.bloom_hashes");
    try {
        est.validate();
    } catch (const std::invalid_argument& ex) {
        fail("estimator", ex.what());
    }
}

void parse_router(const json& r, router::RouterConfig& rc) {
    check_keys(r, "router", {"delta", "lifetime", "bucket_window", "self_renew", "scope"});
    if (r.contains("delta")) rc.delta = duration_of(r["delta"], "router.delta");
    if (r.contains("lifetime")) rc.lifetime = duration_of(r["lifetime"], "router.lifetime");
    if (r.contains("bucket_window")) rc.bucket_window = duration_of(r["bucket_window"], "router.bucket_window");
    if (r.contains("self_renew")) rc.self_renew = get_as<bool>(r["self_renew"], "router.self_renew");
    if (r.contains("scope")) {
        const auto s = get_as<std::string>(r["scope"], "router.scope");
        if (s == "per_pair") rc.scope = admission::EstimatorScope::per_pair;
        else if (s == "per_ingress") rc.scope = admission::EstimatorScope::per_ingress;
        else fail("router.scope", "expected 'per_pair' or 'per_ingress'");
    }
}

FlowSpec parse_flow(const json& f, std::size_t idx, DurationNs duration) {
    const std::string where = "flows[" + std::to_string(idx) + "]";
    check_keys(f, where, {"name", "src", "dst", "path", "kind", "packet_size", "load", "rate", "start", "stop",
                          "reply_size", "renew", "retry"});
    FlowSpec s;
    s.name = f.contains("name") ? get_as<std::string>(f["name"], where + ".name") : "flow" + std::to_string(idx);
    if (!f.contains("src") || !f.contains("dst")) fail(where, "needs 'src' and 'dst'");
    s.src = node_of(f["src"], where + ".src");
    s.dst = node_of(f["dst"], where + ".dst");
    if (f.contains("path")) s.path = get_as<std::vector<NodeId>>(f["path"], where + ".path");
    if (f.contains("kind")) {
        const auto k = get_as<std::string>(f["kind"], where + ".kind");
        if (k == "reservation") s.kind = FlowKind::reservation;
        else if (k == "best_effort") s.kind = FlowKind::best_effort;
        else fail(where + ".kind", "expected 'reservation' or 'best_effort'");
    }
    if (f.contains("packet_size")) s.packet_size = get_as<std::size_t>(f["packet_size"], where + ".packet_size");
    if (f.contains("load")) s.load = get_as<double>(f["load"], where + ".load");
    if (f.contains("rate")) s.rate = bandwidth_of(f["rate"], where + ".rate");
    if (f.contains("start")) s.start = static_cast<TimeNs>(duration_of(f["start"], where + ".start"));
    s.stop = f.contains("stop") ? static_cast<TimeNs>(duration_of(f["stop"], where + ".stop"))
                                : static_cast<TimeNs>(duration - std::min<DurationNs>(duration / 10, kNsPerSec));
    if (f.contains("reply_size")) s.reply_size = get_as<std::size_t>(f["reply_size"], where + ".reply_size");
    if (f.contains("renew")) s.renew_interval = duration_of(f["renew"], where + ".renew");
    if (f.contains("retry")) s.retry_interval = duration_of(f["retry"], where + ".retry");
    if (!(s.load > 0)) fail(where + ".load", "must be positive");
    if (s.kind == FlowKind::best_effort && s.rate == 0) fail(where, "best-effort flows need a 'rate'");
    return s;
}

AdversarySpec parse_adversary(const json& a, std::size_t idx) {
    const std::string where = "adversaries[" + std::to_string(idx) + "]";
    check_keys(a, where, {"kind", "from", "to", "flow", "factor", "packet_size", "count", "sybils", "attempts",
                          "forged_rate", "hop", "interval", "lag", "start", "stop"});
    AdversarySpec s;
    if (!a.contains("kind")) fail(where, "needs 'kind'");
    const auto k = get_as<std::string>(a["kind"], where + ".kind");
    bool found = false;
    for (auto kind : {AdversaryKind::best_effort_flood, AdversaryKind::request_flood, AdversaryKind::replayer,
                      AdversaryKind::spoofer, AdversaryKind::overuser, AdversaryKind::link_observer}) {
        if (k == to_string(kind)) {
            s.kind = kind;
            found = true;
        }
    }
    if (!found) fail(where + ".kind", "unknown adversary '" + k + "'");
    if (a.contains("from") != a.contains("to")) fail(where, "'from' and 'to' go together");
    if (a.contains("from")) {
        s.from = node_of(a["from"], where + ".from");
        s.to = node_of(a["to"], where + ".to");
        s.has_link = true;
    }
    if (a.contains("flow")) s.flow = get_as<std::string>(a["flow"], where + ".flow");
    if (s.kind == AdversaryKind::overuser) s.factor = 2.0;
    if (a.contains("factor")) s.factor = get_as<double>(a["factor"], where + ".factor");
    if (a.contains("packet_size")) s.packet_size = get_as<std::size_t>(a["packet_size"], where + ".packet_size");
    if (s.kind == AdversaryKind::spoofer) s.count = 1'000'000;
    for (const char* key : {"count", "sybils", "attempts"}) {
        if (a.contains(key)) s.count = count_of(a[key], where + "." + key);
    }
    if (a.contains("forged_rate")) s.forged_rate = get_as<double>(a["forged_rate"], where + ".forged_rate");
    if (a.contains("hop")) s.hop = get_as<std::size_t>(a["hop"], where + ".hop");
    if (s.kind == AdversaryKind::replayer) s.interval = 1 * kNsPerMs;
    for (const char* key : {"interval", "lag"}) {
        if (a.contains(key)) s.interval = duration_of(a[key], where + "." + key);
    }
    if (a.contains("start")) s.start = static_cast<TimeNs>(duration_of(a["start"], where + ".start"));
    if (a.contains("stop")) s.stop = static_cast<TimeNs>(duration_of(a["stop"], where + ".stop"));
    if (!(s.factor > 0)) fail(where + ".factor", "must be positive");
    return s;
}

RequirementSpec parse_requirement(const std::string& id, const json& r) {
    const std::string where = "requirements." + id;
    check_keys(r, where, {"flows", "delay_slack", "max_forgeries", "band"});
    RequirementSpec s;
    if (r.contains("flows")) s.flows = get_as<std::vector<std::string>>(r["flows"], where + ".flows");
    if (r.contains("delay_slack")) s.delay_slack = duration_of(r["delay_slack"], where + ".delay_slack");
    if (r.contains("max_forgeries")) s.max_forgeries = get_as<std::uint64_t>(r["max_forgeries"], where);
    if (r.contains("band")) {
        const auto band = get_as<std::vector<double>>(r["band"], where + ".band");
        if (band.size() != 2 || band[0] > band[1]) fail(where + ".band", "expected [lo, hi]");
        s.band_lo = band[0];
        s.band_hi = band[1];
    }
    return s;
}

const std::set<std::string> kRequirementIds{"R1", "R2", "R3", "R4", "R5", "confidentiality"};

}  // namespace

std::string_view to_string(AdversaryKind k) {
    switch (k) {
        case AdversaryKind::best_effort_flood: return "best_effort_flood";
        case AdversaryKind::request_flood: return "request_flood";
        case AdversaryKind::replayer: return "replayer";
        case AdversaryKind::spoofer: return "spoofer";
        case AdversaryKind::overuser: return "overuser";
        case AdversaryKind::link_observer: return "link_observer";
    }
    return "?";
}

ScenarioConfig parse_scenario(std::istream& in, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    check_keys(j, "scenario", {"name", "seed", "duration", "topology", "skew", "be_buffer", "priority_limit",
                               "router", "estimator", "flows", "adversaries", "requirements"});
    ScenarioConfig cfg;
    if (j.contains("name")) cfg.name = get_as<std::string>(j["name"], "name");
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j["seed"], "seed");
    if (j.contains("duration")) cfg.duration = duration_of(j["duration"], "duration");
    if (!j.contains("topology")) fail("scenario", "missing 'topology'");
    parse_topology(j["topology"], cfg, base_dir);
    if (j.contains("skew")) cfg.skew = duration_of(j["skew"], "skew");
    if (j.contains("be_buffer")) cfg.be_buffer = get_as<std::size_t>(j["be_buffer"], "be_buffer");
    if (j.contains("priority_limit")) cfg.priority_limit = get_as<std::size_t>(j["priority_limit"], "priority_limit");
    if (j.contains("router")) parse_router(j["router"], cfg.router);
    if (j.contains("estimator")) parse_estimator(j["estimator"], cfg.router.estimator);
    if (j.contains("flows")) {
        for (std::size_t i = 0; i < j["flows"].size(); ++i) cfg.flows.push_back(parse_flow(j["flows"][i], i, cfg.duration));
    }
    if (j.contains("adversaries")) {
        for (std::size_t i = 0; i < j["adversaries"].size(); ++i) {
            cfg.adversaries.push_back(parse_adversary(j["adversaries"][i], i));
        }
    }
    if (j.contains("requirements")) {
        const auto& r = j["requirements"];
        if (r.is_array()) {
            for (const auto& id : r) cfg.requirements[get_as<std::string>(id, "requirements")] = RequirementSpec{};
        } else {
            if (!r.is_object()) fail("requirements", "expected an object or a list of ids");
            for (const auto& [id, spec] : r.items()) cfg.requirements[id] = parse_requirement(id, spec);
        }
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_scenario(in, dir.empty() ? "." : dir.string());
}

void ScenarioConfig::validate() const {
    const std::size_t n = graph.node_count();
    if (n < 2) fail("topology", "needs at least 2 ASes");
    if (duration <= 0) fail("duration", "must be positive");
    if (delays.size() != graph.edge_count()) fail("topology", "one delay per link expected");
    if (!graph.connected()) fail("topology", "graph is not connected");
    for (const auto& [node, m] : matrices) {
        if (node >= n) fail("topology.matrices", "node out of range");
        if (m.size() != graph.degree(node) + 1) fail("topology.matrices", "matrix size does not match node degree");
    }
    for (const auto& [id, spec] : requirements) {
        if (!kRequirementIds.contains(id)) fail("requirements", "unknown requirement '" + id + "'");
    }

    std::set<std::string> names;
    std::set<NodeId> reservation_sources;
    for (const auto& f : flows) {
        const std::string where = "flow '" + f.name + "'";
        if (!names.insert(f.name).second) fail(where, "duplicate name");
        if (f.src >= n || f.dst >= n) fail(where, "node out of range");
        if (f.src == f.dst) fail(where, "src and dst must differ");
        if (f.start >= f.stop || f.stop > static_cast<TimeNs>(duration)) fail(where, "needs start < stop <= duration");
        if (!f.path.empty()) {
            if (f.path.front() != f.src || f.path.back() != f.dst) fail(where, "path must run from src to dst");
            for (std::size_t i = 0; i + 1 < f.path.size(); ++i) {
                if (f.path[i] >= n || f.path[i + 1] >= n || !graph.has_edge(f.path[i], f.path[i + 1])) {
                    fail(where, "path hop " + std::to_string(i) + " is not a link");
                }
            }
            if (f.path.size() > 255) fail(where, "path longer than 255 hops");
        }
        if (f.kind == FlowKind::reservation) {
            if (!reservation_sources.insert(f.src).second) {
                fail(where, "one reservation flow per source AS (reservations are per AS)");
            }
            if (f.packet_size > wire::kMaxPacketLen) fail(where, "packet_size above 65535");
        }
    }
    for (const auto& [id, spec] : requirements) {
        for (const auto& name : spec.flows) {
            if (!names.contains(name)) fail("requirements." + id, "unknown flow '" + name + "'");
        }
    }
    for (std::size_t i = 0; i < adversaries.size(); ++i) {
        const auto& a = adversaries[i];
        const std::string where = "adversary " + std::to_string(i) + " (" + std::string(to_string(a.kind)) + ")";
        const bool needs_link = a.kind == AdversaryKind::best_effort_flood || a.kind == AdversaryKind::link_observer;
        const bool needs_flow = !needs_link;
        if (needs_link && !a.has_link) fail(where, "needs 'from' and 'to'");
        if (a.has_link && (a.from >= n || a.to >= n || !graph.has_edge(a.from, a.to))) fail(where, "no such link");
        if (needs_flow) {
            auto it = std::find_if(flows.begin(), flows.end(), [&](const FlowSpec& f) { return f.name == a.flow; });
            if (it == flows.end()) fail(where, "unknown flow '" + a.flow + "'");
            if (it->kind != FlowKind::reservation) fail(where, "target flow must be a reservation flow");
        }
        if (a.stop != 0 && a.stop <= a.start) fail(where, "needs start < stop");
    }
}

void write_topology_json(std::ostream& out, const topo::TopologyGraph& g, std::uint64_t seed, bool with_matrices) {
    json j;
    j["seed"] = seed;
    j["nodes"] = g.node_count();
    json edges = json::array();
    for (const auto& e : g.edges()) edges.push_back(json::array({e.u, e.v, e.capacity}));
    j["edges"] = std::move(edges);
    if (with_matrices) {
        json m = json::object();
        for (NodeId u = 0; u < g.node_count(); ++u) {
            const auto mat = topo::build_matrix(g.interface_capacities(u));
            json rows = json::array();
            for (IfId a = 0; a < mat.size(); ++a) {
                json row = json::array();
                for (IfId b = 0; b < mat.size(); ++b) row.push_back(mat.at(a, b));
                rows.push_back(std::move(row));
            }
            m[std::to_string(u)] = std::move(rows);
        }
        j["matrices"] = std::move(m);
    }
    out << j.dump() << '\n';
}

TopologyFile read_topology_json(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("topology file: ") + e.what());
    }
    check_keys(j, "topology file", {"seed", "nodes", "edges", "matrices"});
    TopologyFile f;
    if (j.contains("seed")) f.seed = get_as<std::uint64_t>(j["seed"], "topology file.seed");
    if (!j.contains("nodes") || !j.contains("edges")) fail("topology file", "needs 'nodes' and 'edges'");
    const auto n = get_as<std::size_t>(j["nodes"], "topology file.nodes");
    std::vector<LinkSpec> links;
    for (const auto& e : j["edges"]) {
        const auto v = get_as<std::vector<std::uint64_t>>(e, "topology file.edges");
        if (v.size() != 3 || v[0] >= n || v[1] >= n) fail("topology file", "edge must be [u, v, bps] with valid nodes");
        links.push_back({static_cast<NodeId>(v[0]), static_cast<NodeId>(v[1]), v[2], 0});
    }
    f.graph = graph_from_edges(n, links);
    if (j.contains("matrices")) {
        for (const auto& [key, rows] : j["matrices"].items()) {
            NodeId node = 0;
            try {
                node = static_cast<NodeId>(std::stoul(key));
            } catch (const std::exception&) {
                fail("topology file.matrices", "bad node id '" + key + "'");
            }
            try {
                f.matrices[node] = admission::AllocationMatrix::from_rows(
                    get_as<std::vector<std::vector<Bps>>>(rows, "topology file.matrices"));
            } catch (const std::invalid_argument& e) {
                fail("topology file.matrices[" + key + "]", e.what());
            }
        }
    }
    return f;
}

}  // namespace helia::simnet
