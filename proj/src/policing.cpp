#include "helia/policing.hpp"

#include <algorithm>
#include <ostream>

namespace helia::policing {

DurationNs packet_time(std::size_t len, Bps rate) {
    const unsigned __int128 bits_ns = static_cast<unsigned __int128>(len) * 8u * kNsPerSec;
    return static_cast<DurationNs>((bits_ns + rate - 1) / rate);
}

bool bucket_check(TokenBucket& bucket, DurationNs pkt_time, DurationNs window, TimeNs now) {
    const TimeNs start = time_diff(bucket.ts, now) > 0 ? bucket.ts : now;
    const TimeNs finish = time_add(start, pkt_time);
    if (time_diff(finish, now) > window) return false;
    bucket.ts = finish;
    return true;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::conform: return "conform";
        case Verdict::overuse: return "overuse";
        case Verdict::expired: return "expired";
        case Verdict::unknown: return "unknown";
    }
    return "?";
}

void TrafficMonitor::register_reservation(const MonitorKey& key, Bps bw, TimeNs ts_exp, TimeNs now) {
    auto [it, inserted] = entries_.try_emplace(key);
    if (inserted) it->second.bucket.ts = now;
    it->second.bw = bw;
    it->second.ts_exp = ts_exp;
}

Verdict TrafficMonitor::police(const MonitorKey& key, std::size_t pkt_len, TimeNs now) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return Verdict::unknown;
    auto& stats = stats_[key.src];
    if (time_diff(now, it->second.ts_exp) > 0) {
        ++stats.expired_pkts;
        return Verdict::expired;
    }
    if (bucket_check(it->second.bucket, pkt_len, it->second.bw, window_, now)) {
        stats.conform_bytes += pkt_len;
        return Verdict::conform;
    }
    stats.overuse_bytes += pkt_len;
    return Verdict::overuse;
}

void TrafficMonitor::sweep(TimeNs now) {
    std::erase_if(entries_, [now](const auto& kv) { return time_diff(now, kv.second.ts_exp) > 0; });
}

const MonitorEntry* TrafficMonitor::find(const MonitorKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

Bytes TrafficMonitor::serialize_bucket_state() const {
    Bytes out(entries_.size() * sizeof(TokenBucket));
    std::size_t off = 0;
    for (const auto& [key, entry] : entries_) {
        store_be64(out.data() + off, entry.bucket.ts);
        off += sizeof(TokenBucket);
    }
    return out;
}

void TrafficMonitor::write_report_csv(std::ostream& out) const {
    out << "src_as,conform_bytes,overuse_bytes,expired_pkts,replay_pkts\n";
    for (const auto& [src, s] : stats_) {
        out << src << ',' << s.conform_bytes << ',' << s.overuse_bytes << ',' << s.expired_pkts << ','
            << s.replay_pkts << '\n';
    }
}

void DedupWindow::evict(TimeNs now) {
    while (!seen_.empty() && time_diff(now, std::get<0>(*seen_.begin())) > horizon_) {
        seen_.erase(seen_.begin());
    }
}

DedupVerdict DedupWindow::check(AsId src, TimeNs ts, DedupTag tag, TimeNs now) {
    evict(now);
    const auto [it, inserted] = seen_.emplace(ts, src, tag);
    return inserted ? DedupVerdict::fresh : DedupVerdict::replay;
}

}  // namespace helia::policing
