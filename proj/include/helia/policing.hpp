#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "helia/bytes.hpp"
#include "helia/types.hpp"

namespace helia::policing {

/// Token bucket whose entire state is one timestamp: the instant at which the
/// bucket would be full again. Rate and burst window are supplied per call.
struct TokenBucket {
    TimeNs ts = 0;
};
static_assert(sizeof(TokenBucket) == 8);

/// Serialization time of `len` bytes at `rate`, rounded up to whole nanoseconds.
/// `rate` must be positive.
DurationNs packet_time(std::size_t len, Bps rate);

/// Allows the packet iff max(ts, now) + pkt_time <= now + window. On allow the
/// bucket advances by pkt_time; on deny it is left untouched.
bool bucket_check(TokenBucket& bucket, DurationNs pkt_time, DurationNs window, TimeNs now);

inline bool bucket_check(TokenBucket& bucket, std::size_t len, Bps rate, DurationNs window, TimeNs now) {
    return rate > 0 && bucket_check(bucket, packet_time(len, rate), window, now);
}

enum class Verdict { conform, overuse, expired, unknown };

std::string_view to_string(Verdict v);

struct MonitorEntry {
    TokenBucket bucket;
    Bps bw = 0;
    TimeNs ts_exp = 0;
};

struct MonitorKey {
    AsId src = 0;
    IfPair pair;
    Direction direction = Direction::forward;
    friend auto operator<=>(const MonitorKey&, const MonitorKey&) = default;
};

struct SourceStats {
    std::uint64_t conform_bytes = 0;
    std::uint64_t overuse_bytes = 0;
    std::uint64_t expired_pkts = 0;
    std::uint64_t replay_pkts = 0;
};

/// Deterministic per-source traffic monitor: one token bucket per
/// (source AS, interface pair, direction). Expired entries are evicted lazily
/// on access and by sweep().
class TrafficMonitor {
public:
    explicit TrafficMonitor(DurationNs window = 50 * kNsPerMs) : window_(window) {}

    /// Creates or replaces the entry. A replaced entry keeps its bucket state,
    /// so repeated registrations never grant additional burst.
    void register_reservation(const MonitorKey& key, Bps bw, TimeNs ts_exp, TimeNs now);

    Verdict police(const MonitorKey& key, std::size_t pkt_len, TimeNs now);

    void note_replay(AsId src) { ++stats_[src].replay_pkts; }

    /// Drops entries whose reservation has expired.
    void sweep(TimeNs now);

    const MonitorEntry* find(const MonitorKey& key) const;
    std::size_t size() const { return entries_.size(); }
    DurationNs window() const { return window_; }

    /// Bucket state of every entry, in key order: exactly 8 bytes per entry.
    Bytes serialize_bucket_state() const;

    const std::map<AsId, SourceStats>& stats() const { return stats_; }

    /// CSV with header src_as,conform_bytes,overuse_bytes,expired_pkts,replay_pkts.
    void write_report_csv(std::ostream& out) const;

private:
    DurationNs window_;
    std::map<MonitorKey, MonitorEntry> entries_;
    std::map<AsId, SourceStats> stats_;
};

enum class DedupVerdict { fresh, replay };

/// Kinds of timestamped messages tracked by the duplicate suppressor.
enum class DedupTag : std::uint8_t { forward_data = 0, backward_data = 1, setup = 2 };

/// Exact sliding-window duplicate suppressor keyed by (source, timestamp, tag).
/// Entries older than `horizon` relative to the current time are evicted.
class DedupWindow {
public:
    explicit DedupWindow(DurationNs horizon) : horizon_(horizon) {}

    DedupVerdict check(AsId src, TimeNs ts, DedupTag tag, TimeNs now);
    std::size_t size() const { return seen_.size(); }

private:
    using Key = std::tuple<TimeNs, AsId, DedupTag>;

    void evict(TimeNs now);

    DurationNs horizon_;
    std::set<Key> seen_;
};

}  // namespace helia::policing
