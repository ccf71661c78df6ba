#include "helia/admission.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace helia::admission {
namespace {

constexpr std::uint64_t kPpm = 1'000'000;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

// --- AllocationMatrix ------------------------------------------------------

AllocationMatrix::AllocationMatrix(std::size_t n_interfaces)
    : n_(n_interfaces), entries_(n_interfaces * n_interfaces, 0) {}

AllocationMatrix AllocationMatrix::from_rows(const std::vector<std::vector<Bps>>& rows) {
    AllocationMatrix m(rows.size());
    for (std::size_t a = 0; a < rows.size(); ++a) {
        if (rows[a].size() != rows.size()) throw std::invalid_argument("allocation matrix must be square");
        for (std::size_t b = 0; b < rows.size(); ++b) {
            m.set(static_cast<IfId>(a), static_cast<IfId>(b), rows[a][b]);
        }
    }
    return m;
}

std::size_t AllocationMatrix::index(IfId from, IfId to) const {
    if (from >= n_ || to >= n_) {
        throw std::out_of_range("interface pair (" + std::to_string(from) + "," + std::to_string(to) +
                                ") outside allocation matrix of size " + std::to_string(n_));
    }
    return static_cast<std::size_t>(from) * n_ + to;
}

Bps AllocationMatrix::at(IfId from, IfId to) const { return entries_[index(from, to)]; }

void AllocationMatrix::set(IfId from, IfId to, Bps value) {
    const auto i = index(from, to);
    if (from == to && value != 0) throw std::invalid_argument("allocation matrix diagonal must be zero");
    entries_[i] = value;
}

Bps AllocationMatrix::row_sum(IfId from) const {
    Bps s = 0;
    for (std::size_t b = 0; b < n_; ++b) s += at(from, static_cast<IfId>(b));
    return s;
}

Bps AllocationMatrix::col_sum(IfId to) const {
    Bps s = 0;
    for (std::size_t a = 0; a < n_; ++a) s += at(static_cast<IfId>(a), to);
    return s;
}

Bps flyover_bandwidth(Bps m_entry, std::uint64_t rho, std::uint64_t rho_min) {
    const std::uint64_t divisor = std::max<std::uint64_t>({rho, rho_min, 1});
    return m_entry / divisor;
}

// --- Filters ---------------------------------------------------------------

BloomFilter::BloomFilter(std::size_t bits, std::uint32_t hashes)
    : bits_(bits), hashes_(hashes), words_((bits + 63) / 64, 0) {
    if (bits == 0 || hashes == 0) throw std::invalid_argument("Bloom filter needs at least one bit and one hash");
}

std::size_t BloomFilter::optimal_bits(std::size_t expected, double fp_rate) {
    const double ln2 = std::log(2.0);
    return static_cast<std::size_t>(std::ceil(-static_cast<double>(expected) * std::log(fp_rate) / (ln2 * ln2)));
}

void BloomFilter::insert(AsId as) {
    const std::uint64_t h1 = splitmix64(as);
    const std::uint64_t h2 = splitmix64(h1 ^ 0x5bd1e9955bd1e995ULL) | 1;
    for (std::uint32_t i = 0; i < hashes_; ++i) {
        const std::size_t bit = (h1 + i * h2) % bits_;
        words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
    }
}

bool BloomFilter::contains(AsId as) const {
    const std::uint64_t h1 = splitmix64(as);
    const std::uint64_t h2 = splitmix64(h1 ^ 0x5bd1e9955bd1e995ULL) | 1;
    for (std::uint32_t i = 0; i < hashes_; ++i) {
        const std::size_t bit = (h1 + i * h2) % bits_;
        if (!(words_[bit / 64] & (std::uint64_t{1} << (bit % 64)))) return false;
    }
    return true;
}

void BloomFilter::clear() { std::fill(words_.begin(), words_.end(), 0); }

std::size_t BloomFilter::set_bits() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::uint64_t union_cardinality(const BloomFilter& a, const BloomFilter& b) {
    if (a.bits_ != b.bits_ || a.hashes_ != b.hashes_) {
        throw std::invalid_argument("Bloom filters with different geometry");
    }
    std::size_t set = 0;
    for (std::size_t i = 0; i < a.words_.size(); ++i) {
        set += static_cast<std::size_t>(std::popcount(a.words_[i] | b.words_[i]));
    }
    if (set == 0) return 0;
    const double m = static_cast<double>(a.bits_);
    if (set >= a.bits_) return a.bits_;
    const double estimate = -(m / a.hashes_) * std::log1p(-static_cast<double>(set) / m);
    return static_cast<std::uint64_t>(std::ceil(estimate));
}

MembershipFilter MembershipFilter::exact() { return MembershipFilter(ExactSet{}); }

MembershipFilter MembershipFilter::bloom(std::size_t bits, std::uint32_t hashes) {
    return MembershipFilter(BloomFilter(bits, hashes));
}

void MembershipFilter::insert(AsId as) {
    std::visit([as](auto& f) { f.insert(as); }, impl_);
}

bool MembershipFilter::contains(AsId as) const {
    return std::visit([as](const auto& f) { return f.contains(as); }, impl_);
}

void MembershipFilter::clear() {
    std::visit([](auto& f) { f.clear(); }, impl_);
}

FilterKind MembershipFilter::kind() const {
    return std::holds_alternative<ExactSet>(impl_) ? FilterKind::exact : FilterKind::bloom;
}

std::uint64_t union_cardinality(const MembershipFilter& a, const MembershipFilter& b) {
    if (const auto* ea = std::get_if<ExactSet>(&a.impl_)) {
        const auto& eb = std::get<ExactSet>(b.impl_);
        std::uint64_t n = eb.size();
        for (AsId as : ea->members()) {
            if (!eb.contains(as)) ++n;
        }
        return n;
    }
    return union_cardinality(std::get<BloomFilter>(a.impl_), std::get<BloomFilter>(b.impl_));
}

// --- RhoEstimator ----------------------------------------------------------

void EstimatorConfig::validate() const {
    if (epsilon <= 0) throw std::invalid_argument("epsilon must be positive");
    if (rho_min < 1) throw std::invalid_argument("rho_min must be at least 1");
    if (omega_ppm == 0 || omega_ppm > kPpm) throw std::invalid_argument("omega must lie in (0, 1]");
    if (filter == FilterKind::bloom && (bloom_bits == 0 || bloom_hashes == 0)) {
        throw std::invalid_argument("Bloom filter needs bits and hashes");
    }
}

namespace {

MembershipFilter make_filter(const EstimatorConfig& cfg) {
    return cfg.filter == FilterKind::exact ? MembershipFilter::exact()
                                           : MembershipFilter::bloom(cfg.bloom_bits, cfg.bloom_hashes);
}

}  // namespace

RhoEstimator::RhoEstimator(const EstimatorConfig& cfg, TimeNs start)
    : cfg_(cfg),
      b_p_(make_filter(cfg)),
      b_c_(make_filter(cfg)),
      b_cc_(make_filter(cfg)),
      rho_(cfg.rho_min),
      next_rotation_(time_add(start, cfg.epsilon)),
      slots_(cfg.theta) {
    cfg_.validate();
}

void RhoEstimator::rotate() {
    rho_ = std::max(union_cardinality(b_c_, b_cc_), cfg_.rho_min);
    // (b_p, b_cc, b_c) <- (b_cc, b_c, reset(b_p))
    std::swap(b_p_, b_cc_);  // b_p = old b_cc, b_cc = old b_p
    std::swap(b_cc_, b_c_);  // b_cc = old b_c, b_c = old b_p
    b_c_.clear();
    next_rotation_ = time_add(next_rotation_, cfg_.epsilon);
}

void RhoEstimator::advance(TimeNs now) {
    // After three idle rotations every filter is empty, so longer gaps can be skipped.
    int applied = 0;
    while (time_diff(now, next_rotation_) >= 0) {
        if (applied == 3) {
            const auto behind = static_cast<std::uint64_t>(time_diff(now, next_rotation_)) /
                                static_cast<std::uint64_t>(cfg_.epsilon);
            next_rotation_ = time_add(next_rotation_, static_cast<DurationNs>(behind + 1) * cfg_.epsilon);
            break;
        }
        rotate();
        ++applied;
    }
}

Bps RhoEstimator::regular_share(Bps m_entry) const {
    const unsigned __int128 num = static_cast<unsigned __int128>(m_entry) * cfg_.omega_ppm;
    return static_cast<Bps>(num / (static_cast<unsigned __int128>(kPpm) * rho_));
}

Bps RhoEstimator::tentative_share(Bps m_entry) const {
    const unsigned __int128 num = static_cast<unsigned __int128>(m_entry) * (kPpm - cfg_.omega_ppm);
    return static_cast<Bps>(num / (static_cast<unsigned __int128>(kPpm) * cfg_.theta));
}

std::optional<Grant> RhoEstimator::request(AsId src, Bps m_entry, TimeNs now) {
    advance(now);
    b_c_.insert(src);
    if (b_p_.contains(src)) {
        return Grant{regular_share(m_entry), time_add(now, cfg_.epsilon), GrantKind::regular};
    }
    if (cfg_.theta == 0) return std::nullopt;

    Slot* free_slot = nullptr;
    for (auto& slot : slots_) {
        const bool live = slot.used && time_diff(now, slot.expires) <= 0;
        if (live && slot.src == src) {
            return Grant{tentative_share(m_entry), slot.expires, GrantKind::tentative};
        }
        if (!live && free_slot == nullptr) free_slot = &slot;
    }
    if (free_slot == nullptr) return std::nullopt;
    *free_slot = Slot{src, time_add(now, cfg_.epsilon), true};
    return Grant{tentative_share(m_entry), free_slot->expires, GrantKind::tentative};
}

std::size_t RhoEstimator::slots_in_use(TimeNs now) const {
    std::size_t n = 0;
    for (const auto& slot : slots_) {
        if (slot.used && time_diff(now, slot.expires) <= 0) ++n;
    }
    return n;
}

// --- EstimatorPolicy -------------------------------------------------------

EstimatorPolicy::EstimatorPolicy(EstimatorConfig cfg, EstimatorScope scope, TimeNs start)
    : cfg_(cfg), scope_(scope), start_(start) {
    cfg_.validate();
}

IfPair EstimatorPolicy::key(IfPair pair) const {
    return scope_ == EstimatorScope::per_pair ? pair : IfPair{pair.in, pair.in};
}

std::optional<Grant> EstimatorPolicy::get_bandwidth(const PolicyRequest& req) {
    const IfPair k = key(req.pair);
    auto it = estimators_.find(k);
    if (it == estimators_.end()) it = estimators_.emplace(k, RhoEstimator(cfg_, start_)).first;
    return it->second.request(req.src, req.m_entry, req.now);
}

const RhoEstimator* EstimatorPolicy::estimator(IfPair pair) const {
    auto it = estimators_.find(key(pair));
    return it == estimators_.end() ? nullptr : &it->second;
}

}  // namespace helia::admission
