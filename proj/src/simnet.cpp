#include "helia/simnet.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "helia/source_service.hpp"
#include "helia/units.hpp"

namespace helia::simnet {

namespace {

// Wall-clock origin of the simulation, so timestamps look like real ones.
constexpr TimeNs kEpoch = 1'700'000'000'000'000'000ULL;
constexpr std::size_t kMaxPacket = 1500;
constexpr AsId kSybilBase = 4'200'000'000ULL;
constexpr std::uint64_t kSpoofBatch = 1000;

enum class FrameKind : std::uint8_t { data, reply, setup, response, carrier, plain, flood, replay, sybil, forged };

const char* kind_name(FrameKind k) {
    switch (k) {
        case FrameKind::data: return "data";
        case FrameKind::reply: return "reply";
        case FrameKind::setup: return "setup";
        case FrameKind::response: return "resp";
        case FrameKind::carrier: return "renew";
        case FrameKind::plain: return "plain";
        case FrameKind::flood: return "flood";
        case FrameKind::replay: return "replay";
        case FrameKind::sybil: return "sybil";
        case FrameKind::forged: return "forged";
    }
    return "?";
}

bool router_visible(FrameKind k) {
    return k != FrameKind::plain && k != FrameKind::flood && k != FrameKind::response;
}

struct Step {
    NodeId node = 0;
    router::HopContext ctx;
};
using Route = std::shared_ptr<const std::vector<Step>>;

struct Frame {
    std::uint64_t id = 0;
    FrameKind kind = FrameKind::plain;
    int flow = -1;
    Bytes bytes;
    std::size_t size = 0;
    Route route;
    std::size_t pos = 0;
    TimeNs sent_at = 0;
    TimeNs req_sent_at = 0;
    bool priority = false;
    bool demoted = false;
    std::vector<wire::SetupRespEntry> entries;
};
using FramePtr = std::shared_ptr<Frame>;

struct Link {
    NodeId from = 0;
    NodeId to = 0;
    Bps capacity = 0;
    DurationNs delay = 0;
    std::deque<FramePtr> prio;
    std::deque<FramePtr> be;
    bool busy = false;
    bool observed = false;
    int replay_flow = -1;
    DurationNs replay_lag = 0;
};

struct FlowRt {
    FlowSpec spec;
    FlowStats stats;
    std::vector<NodeId> path;
    Route fwd;
    Route bwd;
    source::PathPlan plan;
    std::unique_ptr<source::ReservationService> svc;
    std::uint16_t len_b = 0;
    Bps rate = 0;
    bool sending = false;
    bool granted_once = false;
    std::size_t first_hop_node = 0;
};

// Sum of concurrently valid grants on one interface pair of one AS; each
// source counts once for its regular grants plus its tentative slot.
struct PairLedger {
    std::map<AsId, std::vector<admission::Grant>> regular;
    std::map<AsId, admission::Grant> tentative;
};

class Simulator {
public:
    Simulator(const ScenarioConfig& cfg, std::ostream* log) : cfg_(cfg), log_(log), rng_(cfg.seed) {}

    ScenarioResult run();

private:
    // --- event queue ---
    struct Event {
        TimeNs t;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const { return a.t != b.t ? a.t > b.t : a.seq > b.seq; }
    };

    void at(TimeNs t, std::function<void()> fn) {
        events_.push_back(Event{t, seq_++, std::move(fn)});
        std::push_heap(events_.begin(), events_.end(), Later{});
    }
    TimeNs local(NodeId n) const { return time_add(kEpoch + now_, skew_[n]); }

    // --- log ---
    void emit_line(const std::string& line);
    void log_decision(const Frame& f, const Step& st, const router::ForwardDecision& d);

    // --- setup ---
    void build_network();
    void build_flows();
    void build_adversaries();
    Route make_route(const std::vector<NodeId>& path, bool backward) const;
    std::size_t link_index(NodeId node, IfId iface) const { return link_of_[node][iface]; }

    // --- data path ---
    void arrive(const FramePtr& f);
    void enqueue(std::size_t link, const FramePtr& f, bool priority);
    void start_tx(std::size_t link);
    void finish_tx(std::size_t link, const FramePtr& f);
    void deliver(const FramePtr& f);
    void drop(const FramePtr& f, const char* why);
    FramePtr new_frame(FrameKind kind, int flow, Bytes bytes, Route route);

    // --- flows ---
    void flow_tick(std::size_t i);
    void flow_send(std::size_t i);
    void plain_send(std::size_t i);
    bool fully_valid(const FlowRt& fl, TimeNs t) const;
    void on_response(FlowRt& fl, const Frame& f);

    // --- adversaries ---
    void flood_tick(std::size_t link, DurationNs gap, std::size_t size, TimeNs stop);
    void sybil_tick(const AdversarySpec& a, std::size_t victim, std::size_t sybil, DurationNs period, TimeNs stop);
    void forged_tick(const AdversarySpec& a, std::size_t victim, DurationNs gap, TimeNs stop);
    void spoof_batch(const AdversarySpec& a, std::size_t victim, std::uint64_t remaining, DurationNs gap);
    void observe(const Frame& f);
    void on_grant(NodeId node, const router::GrantEvent& e);

    // --- results ---
    void evaluate(ScenarioResult& res);
    std::vector<const FlowRt*> eligible(const std::string& id, bool (*pred)(const FlowRt&)) const;
    TimeNs stop_of(const AdversarySpec& a) const {
        return a.stop == 0 ? static_cast<TimeNs>(cfg_.duration) : a.stop;
    }

    const ScenarioConfig& cfg_;
    std::ostream* log_;
    std::mt19937_64 rng_;
    std::vector<Event> events_;
    std::uint64_t seq_ = 0;
    std::uint64_t event_count_ = 0;
    TimeNs now_ = 0;
    std::uint64_t next_frame_ = 0;

    std::uint64_t digest_ = 0xcbf29ce484222325ULL;
    std::uint64_t lines_ = 0;

    std::vector<crypto::SecretKey> secrets_;
    std::vector<DurationNs> skew_;
    std::vector<std::unique_ptr<router::BorderRouter>> routers_;
    std::vector<Link> links_;
    std::vector<std::vector<std::size_t>> link_of_;
    std::vector<FlowRt> flows_;
    std::map<std::string, std::uint64_t> counters_;

    std::map<std::tuple<NodeId, IfId, IfId>, PairLedger> ledgers_;
    std::uint64_t grant_checks_ = 0;
    std::uint64_t grant_violations_ = 0;
    std::string grant_counterexample_;
    double max_utilization_ = 0.0;

    std::unordered_set<std::uint64_t> alpha_prefixes_;
    std::vector<crypto::Authenticator> alphas_;
};

// --- log ----------------------------------------------------------------------

void Simulator::emit_line(const std::string& line) {
    for (unsigned char c : line) {
        digest_ ^= c;
        digest_ *= 0x100000001b3ULL;
    }
    digest_ ^= '\n';
    digest_ *= 0x100000001b3ULL;
    ++lines_;
    if (log_ != nullptr) *log_ << line << '\n';
}

void Simulator::log_decision(const Frame& f, const Step& st, const router::ForwardDecision& d) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%" PRIu64 " as=%" PRIu64 " hop=%u %s id=%" PRIu64 " flow=%d cls=%s", now_,
                  as_of(st.node), static_cast<unsigned>(st.ctx.hop), kind_name(f.kind), f.id, f.flow,
                  std::string(router::to_string(d.cls)).c_str());
    std::string line = buf;
    if (!d.notes.empty()) {
        line += " notes=";
        for (std::size_t i = 0; i < d.notes.size(); ++i) {
            if (i > 0) line += ',';
            line += router::to_string(d.notes[i]);
        }
    }
    emit_line(line);
}

// --- setup --------------------------------------------------------------------

void Simulator::build_network() {
    const auto& g = cfg_.graph;
    const std::size_t n = g.node_count();
    for (std::size_t i = 0; i < n; ++i) {
        crypto::SecretKey k;
        for (std::size_t b = 0; b < k.bytes.size(); b += 8) {
            const std::uint64_t r = rng_();
            std::memcpy(k.bytes.data() + b, &r, 8);
        }
        secrets_.push_back(k);
    }
    std::uniform_int_distribution<DurationNs> skew(-cfg_.skew, cfg_.skew);
    for (std::size_t i = 0; i < n; ++i) skew_.push_back(cfg_.skew > 0 ? skew(rng_) : 0);

    link_of_.resize(n);
    for (NodeId u = 0; u < n; ++u) {
        link_of_[u].assign(g.degree(u) + 1, SIZE_MAX);
        const auto& ports = g.ports(u);
        for (std::size_t i = 0; i < ports.size(); ++i) {
            const auto& e = g.edges()[ports[i].edge];
            Link l;
            l.from = u;
            l.to = ports[i].peer;
            l.capacity = e.capacity;
            l.delay = cfg_.delays[ports[i].edge];
            link_of_[u][i + 1] = links_.size();
            links_.push_back(std::move(l));
        }
    }

    for (NodeId u = 0; u < n; ++u) {
        auto it = cfg_.matrices.find(u);
        auto matrix = it != cfg_.matrices.end() ? it->second : topo::build_matrix(g.interface_capacities(u));
        auto r = std::make_unique<router::BorderRouter>(as_of(u), secrets_[u], std::move(matrix), cfg_.router,
                                                        nullptr, local(u));
        r->set_nonce_source([this] {
            crypto::Nonce nonce;
            for (std::size_t b = 0; b < nonce.bytes.size(); ++b) nonce.bytes[b] = static_cast<std::uint8_t>(rng_());
            return nonce;
        });
        r->set_grant_observer([this, u](const router::GrantEvent& e) { on_grant(u, e); });
        routers_.push_back(std::move(r));
    }
}

Route Simulator::make_route(const std::vector<NodeId>& path, bool backward) const {
    const auto& g = cfg_.graph;
    std::vector<Step> steps(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        const IfId prev = i == 0 ? kInternalInterface : g.interface_to(path[i], path[i - 1]);
        const IfId next = i + 1 == path.size() ? kInternalInterface : g.interface_to(path[i], path[i + 1]);
        steps[i] = Step{path[i], router::HopContext{static_cast<std::uint8_t>(i), prev, next}};
        if (backward) std::swap(steps[i].ctx.ingress, steps[i].ctx.egress);
    }
    if (backward) std::reverse(steps.begin(), steps.end());
    return std::make_shared<const std::vector<Step>>(std::move(steps));
}

void Simulator::build_flows() {
    for (const auto& spec : cfg_.flows) {
        FlowRt fl;
        fl.spec = spec;
        fl.path = spec.path;
        if (fl.path.empty()) fl.path = topo::tree_path(topo::shortest_path_tree(cfg_.graph, spec.src), spec.src, spec.dst);
        fl.fwd = make_route(fl.path, false);
        fl.bwd = make_route(fl.path, true);
        fl.stats.name = spec.name;
        fl.stats.kind = spec.kind;
        fl.stats.src_as = as_of(spec.src);
        fl.first_hop_node = fl.path.front();
        flows_.push_back(std::move(fl));
    }
    for (const auto& a : cfg_.adversaries) {
        if (a.kind != AdversaryKind::overuser) continue;
        for (auto& fl : flows_) {
            if (fl.spec.name == a.flow) {
                fl.spec.load = a.factor;
                fl.spec.adversarial = true;
            }
        }
    }
    const DurationNs quarter = std::max<DurationNs>(cfg_.router.estimator.epsilon / 4, 1);
    for (std::size_t i = 0; i < flows_.size(); ++i) {
        auto& fl = flows_[i];
        fl.stats.adversarial = fl.spec.adversarial;
        DurationNs bound = 0;
        for (std::size_t h = 0; h + 1 < fl.path.size(); ++h) {
            const auto& l = links_[link_index(fl.path[h], (*fl.fwd)[h].ctx.egress)];
            bound += l.delay + policing::packet_time(fl.spec.packet_size, l.capacity) +
                     policing::packet_time(kMaxPacket, l.capacity);
        }
        auto req = cfg_.requirements.find("R4");
        fl.stats.delay_bound = bound + (req != cfg_.requirements.end() ? req->second.delay_slack : 0);
        if (fl.spec.renew_interval == 0) fl.spec.renew_interval = quarter;
        if (fl.spec.retry_interval == 0) fl.spec.retry_interval = quarter;

        if (fl.spec.kind == FlowKind::reservation) {
            const std::size_t n = fl.path.size();
            source::KeyRing keys;
            for (std::size_t h = 0; h < n; ++h) {
                const auto& st = (*fl.fwd)[h];
                fl.plan.hops.push_back(source::PathHop{as_of(st.node), st.ctx.ingress, st.ctx.egress});
                fl.plan.forward.push_back(static_cast<std::uint8_t>(h));
                if (fl.spec.reply_size > 0) fl.plan.backward.push_back(static_cast<std::uint8_t>(h));
                keys[as_of(st.node)] = crypto::derive_drkey(secrets_[st.node], as_of(fl.spec.src));
                for (bool rev : {false, true}) {
                    const IfId a = rev ? st.ctx.egress : st.ctx.ingress;
                    const IfId b = rev ? st.ctx.ingress : st.ctx.egress;
                    alphas_.push_back(crypto::compute_authenticator(secrets_[st.node], as_of(fl.spec.src), a, b));
                }
            }
            if (fl.spec.reply_size > 0) {
                const std::size_t lb = wire::DataPkt::header_len(0, n) + fl.spec.reply_size;
                if (lb > wire::kMaxPacketLen) throw ConfigError("flow '" + fl.spec.name + "': reply_size too large");
                fl.len_b = static_cast<std::uint16_t>(lb);
            }
            const std::size_t header = wire::DataPkt::header_len(n, fl.spec.reply_size > 0 ? n : 0);
            if (fl.spec.packet_size <= header) {
                throw ConfigError("flow '" + fl.spec.name + "': packet_size must exceed the " +
                                  std::to_string(header) + "-byte header");
            }
            fl.svc = std::make_unique<source::ReservationService>(as_of(fl.spec.src), std::move(keys));
            at(fl.spec.start, [this, i] { flow_tick(i); });
        } else {
            at(fl.spec.start, [this, i] { plain_send(i); });
        }
    }
}

void Simulator::build_adversaries() {
    auto flow_index = [this](const std::string& name) {
        for (std::size_t i = 0; i < flows_.size(); ++i) {
            if (flows_[i].spec.name == name) return i;
        }
        throw ConfigError("unknown flow '" + name + "'");
    };
    for (const auto& a : cfg_.adversaries) {
        switch (a.kind) {
            case AdversaryKind::best_effort_flood: {
                const std::size_t l = link_index(a.from, cfg_.graph.interface_to(a.from, a.to));
                const auto rate = static_cast<Bps>(static_cast<double>(links_[l].capacity) * a.factor);
                const DurationNs gap = std::max<DurationNs>(policing::packet_time(a.packet_size, rate), 1);
                const TimeNs stop = stop_of(a);
                const std::size_t size = a.packet_size;
                at(a.start, [this, l, gap, size, stop] { flood_tick(l, gap, size, stop); });
                break;
            }
            case AdversaryKind::request_flood: {
                const std::size_t v = flow_index(a.flow);
                if (a.hop == 0 || a.hop >= flows_[v].path.size()) {
                    throw ConfigError("request_flood: hop must lie inside the victim path, after its source");
                }
                const std::uint64_t sybils = a.count != 0 ? a.count : 10ULL * cfg_.router.estimator.theta;
                const DurationNs period = a.interval != 0 ? a.interval : std::max<DurationNs>(cfg_.router.estimator.epsilon / 4, 1);
                const TimeNs stop = stop_of(a);
                for (std::uint64_t s = 0; s < sybils; ++s) {
                    const TimeNs t0 = a.start + static_cast<TimeNs>(period) * s / std::max<std::uint64_t>(sybils, 1);
                    at(t0, [this, a, v, s, period, stop] { sybil_tick(a, v, s, period, stop); });
                    // Sybil authenticators are candidates for the link observer as well.
                    const auto& path = flows_[v].path;
                    for (std::size_t h = a.hop; h < path.size(); ++h) {
                        const auto& st = (*flows_[v].fwd)[h];
                        alphas_.push_back(crypto::compute_authenticator(secrets_[st.node], kSybilBase + s,
                                                                        st.ctx.ingress, st.ctx.egress));
                    }
                }
                if (a.forged_rate > 0) {
                    const auto gap = static_cast<DurationNs>(1e9 / a.forged_rate);
                    at(a.start, [this, a, v, gap, stop] { forged_tick(a, v, std::max<DurationNs>(gap, 1), stop); });
                }
                counters_["request_flood.sybils"] += sybils;
                break;
            }
            case AdversaryKind::replayer: {
                const std::size_t v = flow_index(a.flow);
                const auto& path = flows_[v].path;
                const NodeId from = a.has_link ? a.from : path[0];
                const NodeId to = a.has_link ? a.to : path[1];
                const std::size_t l = link_index(from, cfg_.graph.interface_to(from, to));
                links_[l].replay_flow = static_cast<int>(v);
                links_[l].replay_lag = a.interval;
                break;
            }
            case AdversaryKind::spoofer: {
                const std::size_t v = flow_index(a.flow);
                if (a.hop >= flows_[v].path.size()) throw ConfigError("spoofer: hop outside the victim path");
                const TimeNs stop = stop_of(a);
                const std::uint64_t batches = (a.count + kSpoofBatch - 1) / kSpoofBatch;
                const DurationNs gap = batches > 0 ? static_cast<DurationNs>((stop - a.start) / batches) : 0;
                if (a.count > 0) at(a.start, [this, a, v, gap] { spoof_batch(a, v, a.count, gap); });
                break;
            }
            case AdversaryKind::link_observer: {
                links_[link_index(a.from, cfg_.graph.interface_to(a.from, a.to))].observed = true;
                break;
            }
            case AdversaryKind::overuser: break;
        }
    }
    for (const auto& alpha : alphas_) {
        std::uint64_t p = 0;
        std::memcpy(&p, alpha.bytes.data(), 8);
        alpha_prefixes_.insert(p);
    }
}

// --- data path ----------------------------------------------------------------

FramePtr Simulator::new_frame(FrameKind kind, int flow, Bytes bytes, Route route) {
    auto f = std::make_shared<Frame>();
    f->id = next_frame_++;
    f->kind = kind;
    f->flow = flow;
    f->size = bytes.size();
    f->bytes = std::move(bytes);
    f->route = std::move(route);
    f->sent_at = now_;
    return f;
}

void Simulator::arrive(const FramePtr& f) {
    const Step& st = (*f->route)[f->pos];
    if (router_visible(f->kind)) {
        auto out = routers_[st.node]->process(f->bytes, st.ctx, local(st.node));
        log_decision(*f, st, out.decision);
        if (out.decision.cls == router::ForwardClass::drop) {
            drop(f, "router");
            return;
        }
        f->priority = out.decision.cls == router::ForwardClass::priority;
        if (!f->priority) f->demoted = true;
        for (auto& e : out.entries) f->entries.push_back(e);
    }
    if (f->pos + 1 == f->route->size()) {
        deliver(f);
        return;
    }
    enqueue(link_index(st.node, st.ctx.egress), f, f->priority);
}

void Simulator::enqueue(std::size_t li, const FramePtr& f, bool priority) {
    Link& l = links_[li];
    if (priority) {
        if (l.prio.size() >= cfg_.priority_limit) {
            ++counters_["link.priority_overflow"];
            drop(f, "priority_overflow");
            return;
        }
        l.prio.push_back(f);
    } else {
        if (l.be.size() >= cfg_.be_buffer) {
            drop(f, "be_overflow");
            return;
        }
        l.be.push_back(f);
    }
    if (!l.busy) start_tx(li);
}

void Simulator::start_tx(std::size_t li) {
    Link& l = links_[li];
    auto& q = !l.prio.empty() ? l.prio : l.be;
    if (q.empty()) {
        l.busy = false;
        return;
    }
    FramePtr f = std::move(q.front());
    q.pop_front();
    l.busy = true;
    at(now_ + static_cast<TimeNs>(policing::packet_time(f->size, l.capacity)), [this, li, f] { finish_tx(li, f); });
}

void Simulator::finish_tx(std::size_t li, const FramePtr& f) {
    Link& l = links_[li];
    if (l.observed) observe(*f);
    if (f->kind == FrameKind::flood) {
        ++counters_["flood.delivered"];
    } else {
        const TimeNs arrival = now_ + static_cast<TimeNs>(l.delay);
        at(arrival, [this, f] {
            ++f->pos;
            arrive(f);
        });
        if (l.replay_flow >= 0 && f->flow == l.replay_flow &&
            (f->kind == FrameKind::data || f->kind == FrameKind::carrier)) {
            auto copy = std::make_shared<Frame>(*f);
            copy->id = next_frame_++;
            copy->kind = FrameKind::replay;
            copy->entries.clear();
            ++counters_["replay.sent"];
            at(arrival + static_cast<TimeNs>(l.replay_lag), [this, copy] {
                ++copy->pos;
                arrive(copy);
            });
        }
    }
    start_tx(li);
}

void Simulator::drop(const FramePtr& f, const char* why) {
    switch (f->kind) {
        case FrameKind::flood: ++counters_["flood.dropped"]; return;
        case FrameKind::replay:
            if (std::strcmp(why, "router") == 0) ++counters_["replay.dropped"];
            break;
        case FrameKind::data:
        case FrameKind::plain: ++flows_[f->flow].stats.lost; break;
        default: break;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%" PRIu64 " drop %s id=%" PRIu64 " flow=%d reason=%s", now_, kind_name(f->kind),
                  f->id, f->flow, why);
    emit_line(buf);
}

void Simulator::deliver(const FramePtr& f) {
    switch (f->kind) {
        case FrameKind::data: {
            auto& fl = flows_[f->flow];
            auto& s = fl.stats;
            ++s.delivered;
            if (f->demoted) ++s.demoted;
            else ++s.delivered_priority;
            const DurationNs delay = time_diff(now_, f->sent_at);
            s.max_delay = std::max(s.max_delay, delay);
            if (delay > s.delay_bound) ++s.delay_breaches;
            if (fl.spec.reply_size > 0) {
                auto msg = wire::decode(f->bytes);
                const auto& pkt = std::get<wire::DataPkt>(*msg.message);
                auto reply = source::build_reply(pkt, Bytes(fl.spec.reply_size, 0x5a));
                auto r = new_frame(FrameKind::reply, f->flow, wire::encode(reply), fl.bwd);
                ++s.replies_sent;
                arrive(r);
            }
            return;
        }
        case FrameKind::reply: ++flows_[f->flow].stats.replies_delivered; return;
        case FrameKind::plain: {
            auto& s = flows_[f->flow].stats;
            ++s.delivered;
            s.max_delay = std::max(s.max_delay, time_diff(now_, f->sent_at));
            return;
        }
        case FrameKind::setup:
        case FrameKind::carrier: {
            // The destination returns the collected entries straight to the source.
            auto& fl = flows_[f->flow];
            wire::SetupResp resp;
            resp.src = fl.svc->src();
            Bytes inner;
            if (f->kind == FrameKind::carrier) {
                auto msg = wire::decode(f->bytes);
                const auto& pkt = std::get<wire::DataPkt>(*msg.message);
                auto req = wire::decode(pkt.payload);
                resp.ts_req = std::get<wire::SetupReq>(*req.message).ts_req;
            } else {
                auto msg = wire::decode(f->bytes);
                resp.ts_req = std::get<wire::SetupReq>(*msg.message).ts_req;
            }
            resp.entries = f->entries;
            std::sort(resp.entries.begin(), resp.entries.end(), [](const auto& a, const auto& b) {
                return a.hop != b.hop ? a.hop < b.hop : a.direction < b.direction;
            });
            auto r = new_frame(FrameKind::response, f->flow, wire::encode(resp), fl.bwd);
            r->req_sent_at = f->sent_at;
            r->priority = f->kind == FrameKind::carrier;
            arrive(r);
            return;
        }
        case FrameKind::response: on_response(flows_[f->flow], *f); return;
        case FrameKind::replay: ++counters_["replay.delivered"]; return;
        case FrameKind::sybil:
        case FrameKind::forged:
        case FrameKind::flood: return;
    }
}

// --- flows --------------------------------------------------------------------

bool Simulator::fully_valid(const FlowRt& fl, TimeNs t) const {
    const auto& store = fl.svc->store();
    for (std::uint8_t h : fl.plan.forward) {
        if (store.find_valid(source::grant_key(fl.plan.hops[h], Direction::forward), t) == nullptr) return false;
    }
    for (std::uint8_t h : fl.plan.backward) {
        if (store.find_valid(source::grant_key(fl.plan.hops[h], Direction::backward), t) == nullptr) return false;
    }
    return true;
}

void Simulator::on_response(FlowRt& fl, const Frame& f) {
    auto msg = wire::decode(f.bytes);
    const auto& resp = std::get<wire::SetupResp>(*msg.message);
    const auto ing = fl.svc->ingest(resp, fl.plan);
    const TimeNs t = local(fl.spec.src);
    const auto plan = source::compose(fl.svc->store(), {fl.plan}, source::Strategy::concurrent, t);
    fl.rate = plan.paths[0].partial ? 0 : static_cast<Bps>(static_cast<double>(plan.paths[0].rate) * fl.spec.load);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%" PRIu64 " ingest flow=%s accepted=%zu rejected=%zu rate=%" PRIu64, now_,
                  fl.spec.name.c_str(), ing.accepted.size(), ing.rejected, fl.rate);
    emit_line(buf);
    if (!fully_valid(fl, t)) return;
    if (!fl.granted_once) {
        fl.granted_once = true;
        fl.stats.granting_request = static_cast<DurationNs>(f.req_sent_at);
        std::snprintf(buf, sizeof buf, "%" PRIu64 " granted flow=%s request_sent=%" PRIu64, now_, fl.spec.name.c_str(),
                      f.req_sent_at);
        emit_line(buf);
    }
    if (!fl.sending && now_ < fl.spec.stop) {
        fl.sending = true;
        const std::size_t i = static_cast<std::size_t>(&fl - flows_.data());
        at(now_, [this, i] { flow_send(i); });
    }
}

void Simulator::flow_tick(std::size_t i) {
    auto& fl = flows_[i];
    if (now_ >= fl.spec.stop) return;
    const TimeNs t = local(fl.spec.src);
    auto r = fl.svc->renewal(fl.plan, t);
    FramePtr f;
    if (r.carrier) {
        f = new_frame(FrameKind::carrier, static_cast<int>(i), wire::encode(*r.carrier), fl.fwd);
        ++fl.stats.renewals;
    } else {
        f = new_frame(FrameKind::setup, static_cast<int>(i), wire::encode(r.request), fl.fwd);
        ++fl.stats.requests;
        if (fl.stats.first_request < 0) fl.stats.first_request = static_cast<DurationNs>(now_);
    }
    const DurationNs next = fl.granted_once ? fl.spec.renew_interval : fl.spec.retry_interval;
    at(now_ + static_cast<TimeNs>(next), [this, i] { flow_tick(i); });
    arrive(f);
}

void Simulator::flow_send(std::size_t i) {
    auto& fl = flows_[i];
    if (now_ >= fl.spec.stop) {
        fl.sending = false;
        return;
    }
    const TimeNs t = local(fl.spec.src);
    // Pause while any grant is about to lapse; the renewal will resume sending.
    if (fl.rate == 0 || !fully_valid(fl, time_add(t, cfg_.router.delta))) {
        at(now_ + static_cast<TimeNs>(kNsPerMs), [this, i] { flow_send(i); });
        return;
    }
    const std::size_t header = wire::DataPkt::header_len(fl.plan.forward.size(), fl.len_b > 0 ? fl.plan.backward.size() : 0);
    auto pkt = fl.svc->emit(fl.plan, Bytes(fl.spec.packet_size - header, 0xa5), fl.len_b, t);
    auto f = new_frame(FrameKind::data, static_cast<int>(i), wire::encode(pkt), fl.fwd);
    ++fl.stats.sent;
    fl.stats.sent_bytes += f->size;
    at(now_ + static_cast<TimeNs>(policing::packet_time(fl.spec.packet_size, fl.rate)), [this, i] { flow_send(i); });
    arrive(f);
}

void Simulator::plain_send(std::size_t i) {
    auto& fl = flows_[i];
    if (now_ >= fl.spec.stop) return;
    auto f = new_frame(FrameKind::plain, static_cast<int>(i), {}, fl.fwd);
    f->size = fl.spec.packet_size;
    ++fl.stats.sent;
    fl.stats.sent_bytes += f->size;
    at(now_ + static_cast<TimeNs>(policing::packet_time(fl.spec.packet_size, fl.spec.rate)), [this, i] { plain_send(i); });
    arrive(f);
}

// --- adversaries --------------------------------------------------------------

void Simulator::flood_tick(std::size_t li, DurationNs gap, std::size_t size, TimeNs stop) {
    if (now_ >= stop) return;
    auto f = std::make_shared<Frame>();
    f->id = next_frame_++;
    f->kind = FrameKind::flood;
    f->size = size;
    ++counters_["flood.sent"];
    enqueue(li, f, false);
    at(now_ + static_cast<TimeNs>(gap), [this, li, gap, size, stop] { flood_tick(li, gap, size, stop); });
}

void Simulator::sybil_tick(const AdversarySpec& a, std::size_t v, std::size_t s, DurationNs period, TimeNs stop) {
    if (now_ >= stop) return;
    const auto& victim = flows_[v];
    const AsId sybil = kSybilBase + s;
    // The sybil's own path starts one AS before the entry point; its hop 0 is itself.
    std::vector<Step> steps(victim.fwd->begin() + static_cast<std::ptrdiff_t>(a.hop - 1), victim.fwd->end());
    for (std::size_t j = 0; j < steps.size(); ++j) steps[j].ctx.hop = static_cast<std::uint8_t>(j);
    wire::SetupReq req;
    req.src = sybil;
    req.ts_req = local(steps[1].node);
    for (std::size_t j = 1; j < steps.size(); ++j) {
        const auto key = crypto::derive_drkey(secrets_[steps[j].node], sybil);
        req.entries.push_back(wire::SetupReqEntry{static_cast<std::uint8_t>(j), true, false,
                                                  crypto::compute_setup_auth(key, req.ts_req, true, false)});
    }
    auto f = new_frame(FrameKind::sybil, -1, wire::encode(req), std::make_shared<const std::vector<Step>>(std::move(steps)));
    ++counters_["request_flood.sybil_requests"];
    enqueue(link_index((*f->route)[0].node, (*f->route)[0].ctx.egress), f, false);
    at(now_ + static_cast<TimeNs>(period), [this, a, v, s, period, stop] { sybil_tick(a, v, s, period, stop); });
}

void Simulator::forged_tick(const AdversarySpec& a, std::size_t v, DurationNs gap, TimeNs stop) {
    if (now_ >= stop) return;
    const auto& victim = flows_[v];
    auto route = std::make_shared<const std::vector<Step>>(victim.fwd->begin() + static_cast<std::ptrdiff_t>(a.hop - 1),
                                                           victim.fwd->end());
    wire::SetupReq req;
    req.src = as_of(victim.spec.src);
    req.ts_req = local((*route)[1].node);
    for (std::size_t j = 1; j < route->size(); ++j) {
        crypto::Mac junk;
        for (auto& b : junk.bytes) b = static_cast<std::uint8_t>(rng_());
        req.entries.push_back(wire::SetupReqEntry{(*route)[j].ctx.hop, true, false, junk});
    }
    auto f = new_frame(FrameKind::forged, -1, wire::encode(req), route);
    ++counters_["request_flood.forged_requests"];
    enqueue(link_index((*route)[0].node, (*route)[0].ctx.egress), f, false);
    at(now_ + static_cast<TimeNs>(gap), [this, a, v, gap, stop] { forged_tick(a, v, gap, stop); });
}

void Simulator::spoof_batch(const AdversarySpec& a, std::size_t v, std::uint64_t remaining, DurationNs gap) {
    const auto& victim = flows_[v];
    const Step& st = (*victim.fwd)[a.hop];
    auto& r = *routers_[st.node];
    const std::uint64_t n = std::min(remaining, kSpoofBatch);
    const std::size_t hops = victim.path.size();
    for (std::uint64_t k = 0; k < n; ++k) {
        wire::DataPkt pkt;
        pkt.src = as_of(victim.spec.src);
        pkt.ts_pkt = local(st.node);
        for (std::size_t h = 0; h < hops; ++h) {
            crypto::ValidationField vf;
            const std::uint64_t bits = rng_();
            for (std::size_t b = 0; b < vf.bytes.size(); ++b) vf.bytes[b] = static_cast<std::uint8_t>(bits >> (8 * b));
            pkt.rvfs.push_back(wire::HopField{static_cast<std::uint8_t>(h), vf});
        }
        pkt.payload.assign(victim.spec.packet_size > pkt.header_len() ? victim.spec.packet_size - pkt.header_len() : 1, 0);
        const auto d = r.validate_forward(pkt, st.ctx, local(st.node));
        ++counters_["spoof.attempts"];
        if (d.cls == router::ForwardClass::priority) {
            ++counters_["spoof.priority"];
            char buf[128];
            std::snprintf(buf, sizeof buf, "%" PRIu64 " spoof as=%" PRIu64 " forged priority packet", now_, as_of(st.node));
            emit_line(buf);
        } else if (d.has(router::Note::mac_mismatch)) {
            ++counters_["spoof.rejected"];
        }
    }
    if (remaining > n) at(now_ + static_cast<TimeNs>(gap), [this, a, v, remaining, n, gap] { spoof_batch(a, v, remaining - n, gap); });
}

void Simulator::observe(const Frame& f) {
    ++counters_["observer.frames"];
    counters_["observer.bytes"] += f.size;
    if (f.kind == FrameKind::response) {
        auto msg = wire::decode(f.bytes);
        counters_["observer.sealed_grants"] += std::get<wire::SetupResp>(*msg.message).entries.size();
    }
    if (f.bytes.size() < 16) return;
    for (std::size_t i = 0; i + 16 <= f.bytes.size(); ++i) {
        std::uint64_t p = 0;
        std::memcpy(&p, f.bytes.data() + i, 8);
        if (!alpha_prefixes_.contains(p)) continue;
        for (const auto& alpha : alphas_) {
            if (std::memcmp(alpha.bytes.data(), f.bytes.data() + i, 16) == 0) ++counters_["observer.plaintext"];
        }
    }
}

void Simulator::on_grant(NodeId node, const router::GrantEvent& e) {
    auto& ledger = ledgers_[{node, e.pair.in, e.pair.out}];
    const TimeNs t = e.now;
    if (e.grant.kind == admission::GrantKind::regular) ledger.regular[e.src].push_back(e.grant);
    else ledger.tentative[e.src] = e.grant;

    unsigned __int128 regular = 0;
    unsigned __int128 total = 0;
    for (auto& [src, grants] : ledger.regular) {
        std::erase_if(grants, [t](const admission::Grant& g) { return time_diff(g.ts_exp, t) <= 0; });
        Bps best = 0;
        for (const auto& g : grants) best = std::max(best, g.bw);
        regular += best;
    }
    total = regular;
    for (const auto& [src, g] : ledger.tentative) {
        if (time_diff(g.ts_exp, t) > 0) total += g.bw;
    }
    ++grant_checks_;
    const auto omega_m = static_cast<unsigned __int128>(e.m_entry) * cfg_.router.estimator.omega_ppm / 1'000'000;
    if (e.m_entry > 0) {
        max_utilization_ = std::max(max_utilization_, static_cast<double>(total) / static_cast<double>(e.m_entry));
    }
    if (total > e.m_entry || regular > omega_m) {
        ++grant_violations_;
        if (grant_counterexample_.empty()) {
            std::ostringstream os;
            os << "as=" << as_of(node) << " pair=(" << e.pair.in << "," << e.pair.out << ") total="
               << static_cast<std::uint64_t>(total) << " regular=" << static_cast<std::uint64_t>(regular)
               << " M=" << e.m_entry << " at t=" << now_;
            grant_counterexample_ = os.str();
        }
    }
}

// --- results ------------------------------------------------------------------

std::vector<const FlowRt*> Simulator::eligible(const std::string& id, bool (*pred)(const FlowRt&)) const {
    std::vector<const FlowRt*> out;
    const auto& names = cfg_.requirements.at(id).flows;
    for (const auto& fl : flows_) {
        const bool listed = std::find(names.begin(), names.end(), fl.spec.name) != names.end();
        if (names.empty() ? pred(fl) : listed) out.push_back(&fl);
    }
    return out;
}

void Simulator::evaluate(ScenarioResult& res) {
    auto ctr = [this](const char* k) {
        auto it = counters_.find(k);
        return it == counters_.end() ? std::uint64_t{0} : it->second;
    };
    const DurationNs eps = cfg_.router.estimator.epsilon;
    for (const auto& [id, spec] : cfg_.requirements) {
        RequirementResult r{id, true, ""};
        std::ostringstream d;
        if (id == "R1") {
            const auto overflow = ctr("link.priority_overflow");
            r.pass = grant_violations_ == 0 && overflow == 0 && grant_checks_ > 0;
            d << "grants=" << grant_checks_ << " violations=" << grant_violations_ << " priority_overflow=" << overflow;
            char util[32];
            std::snprintf(util, sizeof util, " peak_share=%.4f", max_utilization_);
            d << util;
            if (!grant_counterexample_.empty()) d << " first: " << grant_counterexample_;
        } else if (id == "R2") {
            auto fls = eligible(id, [](const FlowRt& f) { return f.spec.kind == FlowKind::reservation && !f.spec.adversarial; });
            r.pass = !fls.empty();
            for (const auto* fl : fls) {
                const auto& s = fl->stats;
                const bool ok = s.granting_request >= 0 && s.granting_request - s.first_request <= 2 * eps;
                r.pass = r.pass && ok;
                d << fl->spec.name << ": ";
                if (s.granting_request < 0) d << "never granted; ";
                else d << "granted after " << units::format_duration(s.granting_request - s.first_request) << " (bound "
                       << units::format_duration(2 * eps) << "); ";
            }
        } else if (id == "R3") {
            const auto forged = ctr("spoof.priority");
            const auto attempts = ctr("spoof.attempts");
            r.pass = attempts > 0 && forged <= spec.max_forgeries;
            d << "attempts=" << attempts << " victim_priority=" << forged << " allowed=" << spec.max_forgeries;
        } else if (id == "R4") {
            auto fls = eligible(id, [](const FlowRt& f) {
                return f.spec.kind == FlowKind::reservation && !f.spec.adversarial && f.spec.load <= 1.0;
            });
            r.pass = !fls.empty();
            for (const auto* fl : fls) {
                const auto& s = fl->stats;
                const bool ok = s.sent > 0 && s.delivered == s.sent && s.lost == 0 && s.demoted == 0 &&
                                s.delay_breaches == 0 && s.replies_delivered == s.replies_sent;
                r.pass = r.pass && ok;
                d << fl->spec.name << ": sent=" << s.sent << " delivered=" << s.delivered << " demoted=" << s.demoted
                  << " lost=" << s.lost << " max_delay=" << units::format_duration(s.max_delay)
                  << " bound=" << units::format_duration(s.delay_bound) << "; ";
            }
        } else if (id == "R5") {
            auto fls = eligible(id, [](const FlowRt& f) { return f.spec.kind == FlowKind::reservation && f.spec.load > 1.0; });
            bool any = false;
            for (const auto* fl : fls) {
                const auto& stats = routers_[fl->first_hop_node]->monitor().stats();
                auto it = stats.find(as_of(fl->spec.src));
                const double conform = it == stats.end() ? 0.0 : static_cast<double>(it->second.conform_bytes);
                const double over = it == stats.end() ? 0.0 : static_cast<double>(it->second.overuse_bytes);
                const double frac = conform + over > 0 ? over / (conform + over) : 0.0;
                const bool ok = frac >= spec.band_lo && frac <= spec.band_hi;
                r.pass = r.pass && ok;
                any = true;
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s: demoted_fraction=%.4f band=[%.2f,%.2f]; ", fl->spec.name.c_str(), frac,
                              spec.band_lo, spec.band_hi);
                d << buf;
            }
            const auto sent = ctr("replay.sent");
            if (sent > 0) {
                any = true;
                const auto dropped = ctr("replay.dropped");
                r.pass = r.pass && dropped == sent;
                d << "replays=" << sent << " dropped=" << dropped;
            }
            r.pass = r.pass && any;
        } else if (id == "confidentiality") {
            const auto frames = ctr("observer.frames");
            const auto plain = ctr("observer.plaintext");
            r.pass = frames > 0 && ctr("observer.sealed_grants") > 0 && plain == 0;
            d << "frames=" << frames << " sealed_grants=" << ctr("observer.sealed_grants") << " plaintext_alpha=" << plain;
        }
        r.detail = d.str();
        while (!r.detail.empty() && (r.detail.back() == ' ' || r.detail.back() == ';')) r.detail.pop_back();
        res.requirements.push_back(std::move(r));
    }
}

ScenarioResult Simulator::run() {
    cfg_.validate();
    build_network();
    build_flows();
    build_adversaries();
    {
        std::ostringstream os;
        os << "0 config name=" << cfg_.name << " seed=" << cfg_.seed << " ases=" << cfg_.graph.node_count()
           << " links=" << cfg_.graph.edge_count() << " flows=" << cfg_.flows.size()
           << " adversaries=" << cfg_.adversaries.size() << " duration=" << units::format_duration(cfg_.duration);
        emit_line(os.str());
    }

    const auto end = static_cast<TimeNs>(cfg_.duration);
    while (!events_.empty()) {
        std::pop_heap(events_.begin(), events_.end(), Later{});
        Event ev = std::move(events_.back());
        events_.pop_back();
        if (ev.t > end) break;
        now_ = ev.t;
        ++event_count_;
        ev.fn();
    }
    now_ = end;

    ScenarioResult res;
    res.name = cfg_.name;
    res.seed = cfg_.seed;
    for (auto& fl : flows_) {
        auto& s = fl.stats;
        s.in_flight = s.sent - std::min(s.sent, s.delivered + s.lost);
        res.flows.push_back(s);
    }
    for (const auto& r : routers_) {
        std::ostringstream os;
        r->monitor().write_report_csv(os);
        res.monitor_reports[r->as_id()] = os.str();
    }
    evaluate(res);
    for (const auto& r : res.requirements) emit_line(std::to_string(end) + " requirement " + r.id + (r.pass ? " PASS" : " FAIL"));
    res.counters = counters_;
    res.events = event_count_;
    res.log_digest = digest_;
    res.log_lines = lines_;
    return res;
}

}  // namespace

bool ScenarioResult::passed() const {
    return std::all_of(requirements.begin(), requirements.end(), [](const auto& r) { return r.pass; });
}

const FlowStats* ScenarioResult::flow(const std::string& name) const {
    for (const auto& f : flows) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, std::ostream* log) { return Simulator(cfg, log).run(); }

void write_summary_csv(std::ostream& out, const ScenarioResult& res) {
    out << "scenario,seed,flow,kind,src_as,adversarial,sent,delivered,delivered_priority,demoted,lost,in_flight,"
           "max_delay_ns,delay_bound_ns,delay_breaches,replies_sent,replies_delivered,requests,renewals,"
           "first_request_ns,granting_request_ns\n";
    for (const auto& f : res.flows) {
        out << res.name << ',' << res.seed << ',' << f.name << ','
            << (f.kind == FlowKind::reservation ? "reservation" : "best_effort") << ',' << f.src_as << ','
            << (f.adversarial ? 1 : 0) << ',' << f.sent << ',' << f.delivered << ',' << f.delivered_priority << ','
            << f.demoted << ',' << f.lost << ',' << f.in_flight << ',' << f.max_delay << ',' << f.delay_bound << ','
            << f.delay_breaches << ',' << f.replies_sent << ',' << f.replies_delivered << ',' << f.requests << ','
            << f.renewals << ',' << f.first_request << ',' << f.granting_request << '\n';
    }
}

}  // namespace helia::simnet
