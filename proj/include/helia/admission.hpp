#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_set>
#include <variant>
#include <vector>

#include "helia/crypto.hpp"
#include "helia/types.hpp"

namespace helia::admission {

/// Reservable bandwidth between each ordered pair of interfaces of one AS.
class AllocationMatrix {
public:
    AllocationMatrix() = default;
    explicit AllocationMatrix(std::size_t n_interfaces);

    /// Throws std::invalid_argument for non-square input or a non-zero diagonal.
    static AllocationMatrix from_rows(const std::vector<std::vector<Bps>>& rows);

    std::size_t size() const { return n_; }
    Bps at(IfId from, IfId to) const;
    void set(IfId from, IfId to, Bps value);

    Bps row_sum(IfId from) const;
    Bps col_sum(IfId to) const;

    friend bool operator==(const AllocationMatrix&, const AllocationMatrix&) = default;

private:
    std::size_t index(IfId from, IfId to) const;

    std::size_t n_ = 0;
    std::vector<Bps> entries_;
};

/// beta = m_entry / max(rho, rho_min), rounded down.
Bps flyover_bandwidth(Bps m_entry, std::uint64_t rho, std::uint64_t rho_min);

/// Exact membership set over AS ids.
class ExactSet {
public:
    void insert(AsId as) { members_.insert(as); }
    bool contains(AsId as) const { return members_.contains(as); }
    void clear() { members_.clear(); }
    std::size_t size() const { return members_.size(); }
    const std::unordered_set<AsId>& members() const { return members_; }

private:
    std::unordered_set<AsId> members_;
};

/// Bloom filter over AS ids with double hashing.
class BloomFilter {
public:
    BloomFilter(std::size_t bits, std::uint32_t hashes);

    /// Bit count for `expected` items at false-positive rate `fp_rate`.
    static std::size_t optimal_bits(std::size_t expected, double fp_rate);

    void insert(AsId as);
    bool contains(AsId as) const;
    void clear();

    std::size_t bit_count() const { return bits_; }
    std::uint32_t hash_count() const { return hashes_; }
    std::size_t set_bits() const;
    std::size_t memory_bytes() const { return words_.size() * sizeof(std::uint64_t); }

    /// Fill-ratio cardinality estimate of the union, rounded up.
    friend std::uint64_t union_cardinality(const BloomFilter& a, const BloomFilter& b);

private:
    std::size_t bits_;
    std::uint32_t hashes_;
    std::vector<std::uint64_t> words_;
};

enum class FilterKind { exact, bloom };

/// Requester set used by the estimator; either exact or probabilistic.
class MembershipFilter {
public:
    static MembershipFilter exact();
    static MembershipFilter bloom(std::size_t bits, std::uint32_t hashes);

    void insert(AsId as);
    bool contains(AsId as) const;
    void clear();
    FilterKind kind() const;

    /// |a ∪ b|; both filters must be of the same kind and geometry.
    friend std::uint64_t union_cardinality(const MembershipFilter& a, const MembershipFilter& b);

private:
    explicit MembershipFilter(std::variant<ExactSet, BloomFilter> impl) : impl_(std::move(impl)) {}
    std::variant<ExactSet, BloomFilter> impl_;
};

struct EstimatorConfig {
    DurationNs epsilon = 10 * kNsPerSec;
    std::uint64_t rho_min = 16;
    /// Reservable fraction omega in parts per million, 0 < omega_ppm <= 1'000'000.
    std::uint32_t omega_ppm = 800'000;
    std::uint32_t theta = 8;
    FilterKind filter = FilterKind::bloom;
    std::size_t bloom_bits = BloomFilter::optimal_bits(10'000, 0.01);
    std::uint32_t bloom_hashes = 7;

    /// Throws std::invalid_argument when a parameter is out of range.
    void validate() const;
};

enum class GrantKind { regular, tentative };

struct Grant {
    Bps bw = 0;
    TimeNs ts_exp = 0;
    GrantKind kind = GrantKind::regular;
    friend bool operator==(const Grant&, const Grant&) = default;
};

/// Estimates the number of requesting ASes with three rotating filters and
/// admits requests against it.
///
/// b_p holds ASes that may be granted a regular reservation in the current
/// interval, b_c collects this interval's requesters and b_cc the previous
/// interval's. Every epsilon, rho is recomputed from |b_c ∪ b_cc| and the
/// filters rotate (b_p, b_cc, b_c) <- (b_cc, b_c, cleared b_p).
///
/// Requesters outside b_p may take one of theta tentative slots, each worth
/// (1 - omega) * M / theta. A slot stays occupied until its grant expires, so
/// at most theta tentative grants are valid at any instant.
class RhoEstimator {
public:
    RhoEstimator(const EstimatorConfig& cfg, TimeNs start);

    /// Applies every rotation due at or before `now`.
    void advance(TimeNs now);
    void rotate();

    /// Admission for one request. Rotations due at `now` are applied first.
    /// std::nullopt means denied for this interval.
    std::optional<Grant> request(AsId src, Bps m_entry, TimeNs now);

    std::uint64_t rho() const { return rho_; }
    TimeNs next_rotation() const { return next_rotation_; }
    const EstimatorConfig& config() const { return cfg_; }
    std::size_t slots_in_use(TimeNs now) const;

    const MembershipFilter& provisioned() const { return b_p_; }
    const MembershipFilter& current() const { return b_c_; }
    const MembershipFilter& previous() const { return b_cc_; }

private:
    struct Slot {
        AsId src = 0;
        TimeNs expires = 0;
        bool used = false;
    };

    Bps regular_share(Bps m_entry) const;
    Bps tentative_share(Bps m_entry) const;

    EstimatorConfig cfg_;
    MembershipFilter b_p_;
    MembershipFilter b_c_;
    MembershipFilter b_cc_;
    std::uint64_t rho_;
    TimeNs next_rotation_;
    std::vector<Slot> slots_;
};

/// Input to a bandwidth policy for one flyover request.
struct PolicyRequest {
    AsId src = 0;
    IfPair pair;
    Bps m_entry = 0;
    TimeNs now = 0;
    std::optional<crypto::SetupDemand> demand;
};

/// Computes (bw, tsExp) for a flyover request or denies it. Implementations
/// must never let concurrently valid grants on one interface pair exceed its
/// allocation-matrix entry.
class BandwidthPolicy {
public:
    virtual ~BandwidthPolicy() = default;
    virtual std::optional<Grant> get_bandwidth(const PolicyRequest& req) = 0;
};

enum class EstimatorScope { per_pair, per_ingress };

/// Default policy: one RhoEstimator per interface pair (or per ingress
/// interface). Demand fields are ignored.
class EstimatorPolicy final : public BandwidthPolicy {
public:
    explicit EstimatorPolicy(EstimatorConfig cfg, EstimatorScope scope = EstimatorScope::per_pair,
                             TimeNs start = 0);

    std::optional<Grant> get_bandwidth(const PolicyRequest& req) override;

    /// The estimator serving `pair`, if one has been created.
    const RhoEstimator* estimator(IfPair pair) const;
    const EstimatorConfig& config() const { return cfg_; }

private:
    IfPair key(IfPair pair) const;

    EstimatorConfig cfg_;
    EstimatorScope scope_;
    TimeNs start_;
    std::map<IfPair, RhoEstimator> estimators_;
};

}  // namespace helia::admission
