#include "helia/border_router.hpp"

#include <algorithm>

namespace helia::router {

using admission::PolicyRequest;
using policing::DedupTag;
using policing::DedupVerdict;
using policing::MonitorKey;
using policing::Verdict;

std::string_view to_string(ForwardClass c) {
    switch (c) {
        case ForwardClass::priority: return "priority";
        case ForwardClass::best_effort: return "best_effort";
        case ForwardClass::drop: return "drop";
    }
    return "?";
}

std::string_view to_string(Note n) {
    switch (n) {
        case Note::no_entry: return "no_entry";
        case Note::bad_interface: return "bad_interface";
        case Note::stale: return "stale";
        case Note::auth_failure: return "auth_failure";
        case Note::mac_mismatch: return "mac_mismatch";
        case Note::too_long: return "too_long";
        case Note::replay: return "replay";
        case Note::denied: return "denied";
        case Note::granted_forward: return "granted_fwd";
        case Note::granted_backward: return "granted_bwd";
        case Note::conform: return "conform";
        case Note::overuse: return "overuse";
        case Note::expired: return "expired";
        case Note::unknown_reservation: return "unknown";
        case Note::renewed: return "renewed";
        case Note::decode_error: return "decode_error";
    }
    return "?";
}

bool ForwardDecision::has(Note n) const { return std::find(notes.begin(), notes.end(), n) != notes.end(); }

BorderRouter::BorderRouter(AsId as, const crypto::SecretKey& secret, admission::AllocationMatrix matrix,
                           RouterConfig cfg, std::unique_ptr<admission::BandwidthPolicy> policy, TimeNs start)
    : as_(as),
      secret_(secret),
      matrix_(std::move(matrix)),
      cfg_(cfg),
      policy_(std::move(policy)),
      monitor_(cfg.bucket_window),
      dedup_(cfg.lifetime + cfg.delta),
      nonce_(crypto::random_nonce),
      initial_(matrix_) {
    if (!policy_) policy_ = std::make_unique<admission::EstimatorPolicy>(cfg_.estimator, cfg_.scope, start);
}

bool BorderRouter::fresh(TimeNs ts, TimeNs now) const {
    const DurationNs age = time_diff(now, ts);
    return age >= -cfg_.delta && age <= cfg_.lifetime + cfg_.delta;
}

bool BorderRouter::interfaces_valid(const HopContext& ctx) const {
    return ctx.ingress < matrix_.size() && ctx.egress < matrix_.size() && ctx.ingress != ctx.egress;
}

RouterOutput BorderRouter::process(std::span<const std::uint8_t> frame, const HopContext& ctx, TimeNs now) {
    auto res = wire::decode(frame);
    if (!res) return RouterOutput{ForwardDecision{ForwardClass::best_effort, ctx.egress, {Note::decode_error}}, {}};
    if (auto* req = std::get_if<wire::SetupReq>(&*res.message)) return handle_setup(*req, ctx, now);
    if (auto* pkt = std::get_if<wire::DataPkt>(&*res.message)) return handle_data(*pkt, ctx, now);
    // Responses travel back to the source without router processing.
    return RouterOutput{ForwardDecision{ForwardClass::best_effort, ctx.egress, {}}, {}};
}

std::optional<wire::SetupRespEntry> BorderRouter::admit(AsId src, IfPair pair, Direction dir, std::uint8_t hop,
                                                        const crypto::DrKey& key,
                                                        const std::optional<crypto::SetupDemand>& demand,
                                                        TimeNs now) {
    const Bps m_entry = matrix_.at(pair.in, pair.out);
    const auto grant = policy_->get_bandwidth(PolicyRequest{src, pair, m_entry, now, demand});
    if (!grant) return std::nullopt;
    if (observer_) observer_(GrantEvent{src, pair, dir, *grant, m_entry, now});
    const auto alpha = crypto::compute_authenticator(secret_, src, pair.in, pair.out);
    wire::SetupRespEntry e;
    e.hop = hop;
    e.direction = dir;
    e.nonce = nonce_();
    e.sealed = crypto::seal_grant(key, alpha, grant->bw, grant->ts_exp, e.nonce);
    e.bw = grant->bw;
    e.ts_exp = grant->ts_exp;
    monitor_.register_reservation(MonitorKey{src, pair, dir}, grant->bw, grant->ts_exp, now);
    return e;
}

RouterOutput BorderRouter::handle_setup(const wire::SetupReq& req, const HopContext& ctx, TimeNs now) {
    RouterOutput out;
    auto& d = out.decision;
    d.cls = ForwardClass::best_effort;
    d.egress = ctx.egress;

    const auto* entry = req.entry_for(ctx.hop);
    if (entry == nullptr) {
        d.notes.push_back(Note::no_entry);
        return out;
    }
    if (!interfaces_valid(ctx)) {
        d.notes.push_back(Note::bad_interface);
        return out;
    }
    if (!fresh(req.ts_req, now)) {
        d.notes.push_back(Note::stale);
        return out;
    }
    const auto key = crypto::derive_drkey(secret_, req.src);
    const auto expected = crypto::compute_setup_auth(key, req.ts_req, entry->flag_r, entry->flag_b, req.demand);
    if (!crypto::equal_ct(expected.bytes, entry->auth.bytes)) {
        d.notes.push_back(Note::auth_failure);
        return out;
    }
    if (dedup_.check(req.src, req.ts_req, DedupTag::setup, now) == DedupVerdict::replay) {
        d.cls = ForwardClass::drop;
        d.notes.push_back(Note::replay);
        return out;
    }

    if (entry->flag_r) {
        const IfPair pair{ctx.ingress, ctx.egress};
        if (auto e = admit(req.src, pair, Direction::forward, ctx.hop, key, req.demand, now)) {
            out.entries.push_back(*e);
            d.notes.push_back(Note::granted_forward);
        } else {
            d.notes.push_back(Note::denied);
        }
    }
    if (entry->flag_b) {
        // Backward traffic enters through our egress and leaves through our ingress.
        const IfPair pair{ctx.egress, ctx.ingress};
        if (auto e = admit(req.src, pair, Direction::backward, ctx.hop, key, req.demand, now)) {
            out.entries.push_back(*e);
            d.notes.push_back(Note::granted_backward);
        } else {
            d.notes.push_back(Note::denied);
        }
    }
    return out;
}

void BorderRouter::renew(const MonitorKey& key, TimeNs now, ForwardDecision& d) {
    const Bps m_entry = matrix_.at(key.pair.in, key.pair.out);
    const auto grant = policy_->get_bandwidth(PolicyRequest{key.src, key.pair, m_entry, now, {}});
    if (!grant) return;
    if (observer_) observer_(GrantEvent{key.src, key.pair, key.direction, *grant, m_entry, now});
    monitor_.register_reservation(key, grant->bw, grant->ts_exp, now);
    d.notes.push_back(Note::renewed);
}

ForwardDecision BorderRouter::finish(const MonitorKey& key, std::size_t len, const HopContext& ctx, TimeNs now) {
    ForwardDecision d{ForwardClass::best_effort, ctx.egress, {}};
    // The packet is itself the renewal request, so it is policed against the renewed entry.
    if (cfg_.self_renew) renew(key, now, d);
    switch (monitor_.police(key, len, now)) {
        case Verdict::conform:
            d.cls = ForwardClass::priority;
            d.notes.push_back(Note::conform);
            break;
        case Verdict::overuse: d.notes.push_back(Note::overuse); break;
        case Verdict::expired: d.notes.push_back(Note::expired); break;
        case Verdict::unknown: d.notes.push_back(Note::unknown_reservation); break;
    }
    return d;
}

ForwardDecision BorderRouter::validate_forward(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now) {
    ForwardDecision d{ForwardClass::best_effort, ctx.egress, {}};
    const auto* field = pkt.rvf_for(ctx.hop);
    if (field == nullptr) {
        d.notes.push_back(Note::no_entry);
        return d;
    }
    if (!interfaces_valid(ctx)) {
        d.notes.push_back(Note::bad_interface);
        return d;
    }
    if (!fresh(pkt.ts_pkt, now)) {
        d.notes.push_back(Note::stale);
        return d;
    }
    const std::size_t len = pkt.encoded_len();
    const auto alpha = crypto::compute_authenticator(secret_, pkt.src, ctx.ingress, ctx.egress);
    const auto vf = crypto::compute_validation_field(alpha, pkt.ts_pkt, static_cast<std::uint16_t>(len));
    if (!crypto::equal_ct(vf.bytes, field->vf.bytes)) {
        d.notes.push_back(Note::mac_mismatch);
        return d;
    }
    if (dedup_.check(pkt.src, pkt.ts_pkt, DedupTag::forward_data, now) == DedupVerdict::replay) {
        monitor_.note_replay(pkt.src);
        d.cls = ForwardClass::drop;
        d.notes.push_back(Note::replay);
        return d;
    }
    return finish(MonitorKey{pkt.src, IfPair{ctx.ingress, ctx.egress}, Direction::forward}, len, ctx, now);
}

ForwardDecision BorderRouter::validate_backward(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now) {
    ForwardDecision d{ForwardClass::best_effort, ctx.egress, {}};
    const auto* field = pkt.bvf_for(ctx.hop);
    if (field == nullptr) {
        d.notes.push_back(Note::no_entry);
        return d;
    }
    if (!interfaces_valid(ctx)) {
        d.notes.push_back(Note::bad_interface);
        return d;
    }
    if (!fresh(pkt.ts_pkt, now)) {
        d.notes.push_back(Note::stale);
        return d;
    }
    const std::size_t len = pkt.encoded_len();
    if (len > pkt.len_b) {
        d.notes.push_back(Note::too_long);
        return d;
    }
    const auto alpha = crypto::compute_authenticator(secret_, pkt.src, ctx.ingress, ctx.egress);
    const auto vf = crypto::compute_validation_field(alpha, pkt.ts_pkt, pkt.len_b);
    if (!crypto::equal_ct(vf.bytes, field->vf.bytes)) {
        d.notes.push_back(Note::mac_mismatch);
        return d;
    }
    if (dedup_.check(pkt.src, pkt.ts_pkt, DedupTag::backward_data, now) == DedupVerdict::replay) {
        monitor_.note_replay(pkt.src);
        d.cls = ForwardClass::drop;
        d.notes.push_back(Note::replay);
        return d;
    }
    return finish(MonitorKey{pkt.src, IfPair{ctx.ingress, ctx.egress}, Direction::backward}, len, ctx, now);
}

RouterOutput BorderRouter::handle_data(const wire::DataPkt& pkt, const HopContext& ctx, TimeNs now) {
    RouterOutput out;
    out.decision = pkt.d_flag ? validate_backward(pkt, ctx, now) : validate_forward(pkt, ctx, now);
    if (!pkt.carries_setup || out.decision.cls == ForwardClass::drop) return out;

    auto inner = wire::decode(pkt.payload);
    const auto* req = inner ? std::get_if<wire::SetupReq>(&*inner.message) : nullptr;
    if (req == nullptr || req->src != pkt.src) {
        out.decision.notes.push_back(Note::decode_error);
        return out;
    }
    auto setup = handle_setup(*req, ctx, now);
    out.entries = std::move(setup.entries);
    for (Note n : setup.decision.notes) out.decision.notes.push_back(n);
    if (setup.decision.cls == ForwardClass::drop) out.decision.cls = ForwardClass::drop;
    return out;
}

ScheduledUpdate BorderRouter::update_matrix(IfPair pair, Bps value, TimeNs now) {
    const Bps old = matrix_.at(pair.in, pair.out);
    matrix_.set(pair.in, pair.out, value);
    const TimeNs effective = value >= old ? now : time_add(now, cfg_.estimator.epsilon);
    ScheduledUpdate u{pair, value, effective};
    capacity_log_.push_back(u);
    return u;
}

Bps BorderRouter::physical_capacity(IfPair pair, TimeNs t) const {
    Bps cap = initial_.at(pair.in, pair.out);
    for (const auto& u : capacity_log_) {
        if (u.pair == pair && time_diff(t, u.effective_at) >= 0) cap = u.value;
    }
    return cap;
}

}  // namespace helia::router
