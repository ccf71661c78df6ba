// helia: command-line entry point for topology experiments, scenarios,
// crypto test vectors and benchmarks.
//
// Exit codes: 0 success, 1 failed requirement or check, 2 usage or config error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "helia/border_router.hpp"
#include "helia/crypto.hpp"
#include "helia/simnet.hpp"
#include "helia/source_service.hpp"
#include "helia/topo.hpp"
#include "helia/units.hpp"
#include "helia/wire.hpp"

using namespace helia;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) throw UsageError("cannot write " + path);
        }
    }
    std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

source::Strategy parse_strategy(const std::string& s) {
    if (s == "concurrent") return source::Strategy::concurrent;
    if (s == "max" || s == "maximum") return source::Strategy::maximum;
    throw UsageError("strategy must be 'concurrent' or 'max', got '" + s + "'");
}

Bps parse_bw(const std::string& s) {
    try {
        return units::parse_bandwidth(s);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (std::size_t j = 0; j < jobs; ++j) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

// --- topo gen ---------------------------------------------------------------

struct TopoGenOpts {
    std::size_t n = 500;
    std::size_t m = 2;
    std::uint64_t seed = 1;
    bool matrices = false;
    std::string out;
};

int cmd_topo_gen(const TopoGenOpts& o) {
    std::cerr << "# topo gen n=" << o.n << " m=" << o.m << " seed=" << o.seed << " matrices=" << o.matrices << '\n';
    if (o.m < 1 || o.m >= o.n) throw UsageError("--m must satisfy 1 <= m < n");
    const auto g = topo::generate_topology(topo::TopologyConfig{o.n, o.m, o.seed});
    Output out(o.out);
    simnet::write_topology_json(out.get(), g, o.seed, o.matrices);
    return 0;
}

// --- sim reservations / cover -----------------------------------------------

struct SimOpts {
    std::vector<std::size_t> n{500};
    std::size_t m = 2;
    std::vector<double> r{0.1};
    std::vector<std::string> strategy{"concurrent"};
    std::vector<std::string> gamma{"100kbps"};
    std::uint64_t rho_min = topo::kExperimentRhoMin;
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    std::size_t jobs = 1;
    std::string out;
};

void print_sim_config(const char* cmd, const SimOpts& o, bool with_gamma) {
    auto join = [](const auto& v) {
        std::ostringstream os;
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        return os.str();
    };
    std::cerr << "# " << cmd << " n=" << join(o.n) << " m=" << o.m << " r=" << join(o.r)
              << " strategy=" << join(o.strategy);
    if (with_gamma) std::cerr << " gamma=" << join(o.gamma);
    std::cerr << " rho_min=" << o.rho_min << " seed=" << o.seed << " seeds=" << o.seeds << '\n';
}

std::vector<topo::ExperimentConfig> expand(const SimOpts& o) {
    std::vector<topo::ExperimentConfig> cfgs;
    for (std::size_t n : o.n) {
        for (std::size_t s = 0; s < o.seeds; ++s) {
            topo::ExperimentConfig c;
            c.n_nodes = n;
            c.ba_m = o.m;
            c.rho_min = o.rho_min;
            c.seed = o.seed + s;
            for (double r : o.r) {
                c.r = r;
                try {
                    c.validate();
                } catch (const std::invalid_argument& e) {
                    throw UsageError(e.what());
                }
            }
            cfgs.push_back(c);
        }
    }
    for (const auto& s : o.strategy) parse_strategy(s);
    return cfgs;
}

int cmd_sim_reservations(const SimOpts& o) {
    print_sim_config("sim reservations", o, false);
    const auto cfgs = expand(o);
    std::vector<std::string> chunks(cfgs.size());
    parallel_for(cfgs.size(), o.jobs, [&](std::size_t i) {
        const auto exp = topo::Experiment::create(cfgs[i].n_nodes, cfgs[i].ba_m, cfgs[i].seed);
        std::ostringstream os;
        for (double r : o.r) {
            for (const auto& s : o.strategy) {
                auto c = cfgs[i];
                c.r = r;
                c.strategy = parse_strategy(s);
                topo::write_reservations_csv(os, c, exp.run(r, c.strategy, c.rho_min), false);
            }
        }
        chunks[i] = os.str();
    });
    Output out(o.out);
    out.get() << "seed,n,r,strategy,src,dst,a_ij\n";
    for (const auto& c : chunks) out.get() << c;
    return 0;
}

int cmd_sim_cover(const SimOpts& o) {
    print_sim_config("sim cover", o, true);
    const auto cfgs = expand(o);
    std::vector<Bps> gammas;
    for (const auto& g : o.gamma) gammas.push_back(parse_bw(g));
    std::vector<std::string> chunks(cfgs.size());
    parallel_for(cfgs.size(), o.jobs, [&](std::size_t i) {
        const auto exp = topo::Experiment::create(cfgs[i].n_nodes, cfgs[i].ba_m, cfgs[i].seed);
        std::ostringstream os;
        for (double r : o.r) {
            for (const auto& s : o.strategy) {
                const auto strategy = parse_strategy(s);
                const auto res = exp.run(r, strategy, cfgs[i].rho_min);
                for (Bps g : gammas) {
                    os << cfgs[i].seed << ',' << cfgs[i].n_nodes << ',' << r << ',' << source::to_string(strategy) << ','
                       << g << ',' << fmt_double(topo::gamma_cover(res, g).median) << '\n';
                }
            }
        }
        chunks[i] = os.str();
    });
    Output out(o.out);
    out.get() << "seed,n,r,strategy,gamma,median_cover\n";
    for (const auto& c : chunks) out.get() << c;
    return 0;
}

// --- scenario run -----------------------------------------------------------

struct ScenarioOpts {
    std::vector<std::string> files;
    std::optional<std::uint64_t> seed;
    std::string log;
    std::string summary;
    std::string reports;
    bool quiet = false;
    std::size_t jobs = 1;
};

int cmd_scenario_run(const ScenarioOpts& o) {
    std::vector<simnet::ScenarioConfig> cfgs;
    for (const auto& f : o.files) {
        auto cfg = simnet::load_scenario(f);
        if (o.seed) cfg.seed = *o.seed;
        cfgs.push_back(std::move(cfg));
    }
    if (cfgs.size() > 1 && !o.log.empty()) throw UsageError("--log takes a single scenario");
    std::vector<simnet::ScenarioResult> results(cfgs.size());
    std::ofstream log_file;
    if (!o.log.empty()) {
        log_file.open(o.log);
        if (!log_file) throw UsageError("cannot write " + o.log);
    }
    for (const auto& c : cfgs) {
        std::cerr << "# scenario " << c.name << " seed=" << c.seed << " ases=" << c.graph.node_count()
                  << " flows=" << c.flows.size() << " adversaries=" << c.adversaries.size()
                  << " duration=" << units::format_duration(c.duration)
                  << " epsilon=" << units::format_duration(c.router.estimator.epsilon)
                  << " rho_min=" << c.router.estimator.rho_min << " theta=" << c.router.estimator.theta
                  << " skew=" << units::format_duration(c.skew) << '\n';
    }
    parallel_for(cfgs.size(), o.jobs, [&](std::size_t i) {
        results[i] = simnet::run_scenario(cfgs[i], log_file.is_open() ? &log_file : nullptr);
    });

    bool ok = true;
    Output summary(o.summary.empty() ? "" : o.summary);
    bool header = true;
    for (const auto& res : results) {
        if (!o.summary.empty()) {
            std::ostringstream os;
            simnet::write_summary_csv(os, res);
            std::string text = os.str();
            if (!header) text = text.substr(text.find('\n') + 1);
            summary.get() << text;
            header = false;
        }
        if (!o.reports.empty()) {
            std::filesystem::create_directories(o.reports);
            for (const auto& [as, csv] : res.monitor_reports) {
                std::ofstream f(std::filesystem::path(o.reports) / (res.name + "_as" + std::to_string(as) + ".csv"));
                f << csv;
            }
        }
        std::printf("scenario %s seed=%llu events=%llu log_lines=%llu digest=%016llx\n", res.name.c_str(),
                    static_cast<unsigned long long>(res.seed), static_cast<unsigned long long>(res.events),
                    static_cast<unsigned long long>(res.log_lines), static_cast<unsigned long long>(res.log_digest));
        if (!o.quiet) {
            for (const auto& f : res.flows) {
                std::printf("  flow %-12s sent=%llu delivered=%llu priority=%llu demoted=%llu lost=%llu max_delay=%s\n",
                            f.name.c_str(), static_cast<unsigned long long>(f.sent),
                            static_cast<unsigned long long>(f.delivered),
                            static_cast<unsigned long long>(f.delivered_priority),
                            static_cast<unsigned long long>(f.demoted), static_cast<unsigned long long>(f.lost),
                            units::format_duration(f.max_delay).c_str());
            }
        }
        for (const auto& r : res.requirements) {
            std::printf("  %s %s  %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(), r.detail.c_str());
        }
        ok = ok && res.passed();
    }
    return ok ? 0 : 1;
}

// --- vectors ----------------------------------------------------------------

struct VectorsOpts {
    std::size_t count = 25;
    std::uint64_t seed = 1;
    std::string check;
    std::string out;
};

template <class T>
T fixed_from_hex(const std::string& hex) {
    auto b = from_hex(hex);
    if (!b || b->size() != T::kSize) throw UsageError("bad hex field '" + hex + "'");
    T out;
    std::copy(b->begin(), b->end(), out.bytes.begin());
    return out;
}

template <class T>
T random_fixed(std::mt19937_64& rng) {
    T out;
    for (auto& b : out.bytes) b = static_cast<std::uint8_t>(rng());
    return out;
}

// Recomputes one vector line; returns the expected and actual trailing fields.
std::pair<std::string, std::string> recompute(const std::string& kind, const std::vector<std::string>& f) {
    auto u64 = [](const std::string& s) { return static_cast<std::uint64_t>(std::stoull(s)); };
    auto u16 = [&](const std::string& s) {
        const auto v = u64(s);
        if (v > 0xffff) throw UsageError("field out of range: " + s);
        return static_cast<std::uint16_t>(v);
    };
    if (kind == "drkey" && f.size() == 3) {
        const auto k = crypto::derive_drkey(fixed_from_hex<crypto::SecretKey>(f[0]), u64(f[1]));
        return {f[2], to_hex(k.bytes)};
    }
    if (kind == "auth" && f.size() == 5) {
        const auto a = crypto::compute_authenticator(fixed_from_hex<crypto::SecretKey>(f[0]), u64(f[1]), u16(f[2]),
                                                     u16(f[3]));
        return {f[4], to_hex(a.bytes)};
    }
    if (kind == "vf" && f.size() == 4) {
        const auto m = crypto::compute_validation_mac(fixed_from_hex<crypto::Authenticator>(f[0]), u64(f[1]), u16(f[2]));
        return {f[3], to_hex(m.bytes)};
    }
    if (kind == "setupauth" && f.size() == 5) {
        const auto m = crypto::compute_setup_auth(fixed_from_hex<crypto::DrKey>(f[0]), u64(f[1]), f[2] == "1", f[3] == "1");
        return {f[4], to_hex(m.bytes)};
    }
    if (kind == "setupauth2" && f.size() == 7) {
        const auto m = crypto::compute_setup_auth(fixed_from_hex<crypto::DrKey>(f[0]), u64(f[1]), f[2] == "1", f[3] == "1",
                                                  crypto::SetupDemand{u64(f[4]), u64(f[5])});
        return {f[6], to_hex(m.bytes)};
    }
    if (kind == "seal" && f.size() == 7) {
        const auto s = crypto::seal_grant(fixed_from_hex<crypto::DrKey>(f[0]), fixed_from_hex<crypto::Authenticator>(f[1]),
                                          u64(f[2]), u64(f[3]), fixed_from_hex<crypto::Nonce>(f[4]));
        return {f[5] + " " + f[6], to_hex(s.ciphertext) + " " + to_hex(s.tag.bytes)};
    }
    throw UsageError("malformed vector line: " + kind);
}

int check_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::string line;
    std::size_t total = 0, bad = 0, lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        std::vector<std::string> f;
        for (std::string w; is >> w;) f.push_back(w);
        const auto [want, got] = recompute(kind, f);
        ++total;
        if (want != got) {
            ++bad;
            std::printf("mismatch line %zu: %s\n  want %s\n  got  %s\n", lineno, kind.c_str(), want.c_str(), got.c_str());
        }
    }
    std::printf("vectors checked=%zu mismatches=%zu\n", total, bad);
    return bad == 0 && total > 0 ? 0 : 1;
}

int cmd_vectors(const VectorsOpts& o) {
    if (!o.check.empty()) {
        std::cerr << "# vectors check=" << o.check << '\n';
        return check_vectors(o.check);
    }
    std::cerr << "# vectors count=" << o.count << " seed=" << o.seed << '\n';
    std::mt19937_64 rng(o.seed);
    Output out(o.out);
    auto& os = out.get();
    for (std::size_t i = 0; i < o.count; ++i) {
        const auto s = random_fixed<crypto::SecretKey>(rng);
        const AsId as = rng();
        const auto dk = crypto::derive_drkey(s, as);
        os << "drkey " << to_hex(s.bytes) << ' ' << as << ' ' << to_hex(dk.bytes) << '\n';
        const auto in = static_cast<IfId>(rng()), eg = static_cast<IfId>(rng());
        const auto auth = crypto::compute_authenticator(s, as, in, eg);
        os << "auth " << to_hex(s.bytes) << ' ' << as << ' ' << in << ' ' << eg << ' ' << to_hex(auth.bytes) << '\n';
        const TimeNs ts = rng();
        const auto len = static_cast<std::uint16_t>(rng());
        os << "vf " << to_hex(auth.bytes) << ' ' << ts << ' ' << len << ' '
           << to_hex(crypto::compute_validation_mac(auth, ts, len).bytes) << '\n';
        const bool r = rng() & 1, b = rng() & 1;
        os << "setupauth " << to_hex(dk.bytes) << ' ' << ts << ' ' << r << ' ' << b << ' '
           << to_hex(crypto::compute_setup_auth(dk, ts, r, b).bytes) << '\n';
        const crypto::SetupDemand dem{rng() >> 24, rng() >> 32};
        os << "setupauth2 " << to_hex(dk.bytes) << ' ' << ts << ' ' << r << ' ' << b << ' ' << dem.bw_dem << ' '
           << dem.bw_min << ' ' << to_hex(crypto::compute_setup_auth(dk, ts, r, b, dem).bytes) << '\n';
        const Bps bw = rng() >> 24;
        const TimeNs exp = rng();
        const auto nonce = random_fixed<crypto::Nonce>(rng);
        const auto sealed = crypto::seal_grant(dk, auth, bw, exp, nonce);
        os << "seal " << to_hex(dk.bytes) << ' ' << to_hex(auth.bytes) << ' ' << bw << ' ' << exp << ' '
           << to_hex(nonce.bytes) << ' ' << to_hex(sealed.ciphertext) << ' ' << to_hex(sealed.tag.bytes) << '\n';
    }
    return 0;
}

// --- bench validate -----------------------------------------------------------

struct BenchOpts {
    std::uint64_t packets = 1'000'000;
    std::size_t payload = 64;
    std::uint64_t seed = 1;
};

int cmd_bench_validate(const BenchOpts& o) {
    std::cerr << "# bench validate packets=" << o.packets << " payload=" << o.payload << " seed=" << o.seed << '\n';
    if (o.packets == 0) throw UsageError("--packets must be positive");
    std::mt19937_64 rng(o.seed);
    const auto secret = random_fixed<crypto::SecretKey>(rng);
    const AsId provider = 64'512, src = 64'513;
    const Bps cap = 1'000'000'000'000;
    auto matrix = admission::AllocationMatrix::from_rows({{0, cap}, {cap, 0}});
    const TimeNs t0 = 1'700'000'000'000'000'000ULL;
    router::BorderRouter br(provider, secret, matrix, router::RouterConfig{}, nullptr, t0);
    br.set_nonce_source([&] { return random_fixed<crypto::Nonce>(rng); });

    source::KeyRing keys{{provider, crypto::derive_drkey(secret, src)}};
    source::PathPlan plan{{source::PathHop{provider, 1, 0}}, {0}, {}};
    const router::HopContext ctx{0, 1, 0};
    const auto req = source::build_setup(keys, plan, src, t0);
    auto out = br.handle_setup(req, ctx, t0);
    source::GrantStore store;
    source::ingest_response(store, keys, wire::SetupResp{src, t0, out.entries}, plan);
    if (store.size() != 1) {
        std::cerr << "error: bench reservation was not granted\n";
        return 1;
    }
    const Bps bw = store.all().begin()->second.bw;
    // Packets are spaced to use half of the granted rate so policing never demotes.
    const auto pkt_bits = static_cast<double>((wire::DataPkt::header_len(1, 0) + o.payload) * 8);
    const auto spacing = static_cast<DurationNs>(std::ceil(2.0 * pkt_bits * 1e9 / static_cast<double>(bw)));

    const std::size_t batch = 10'000;
    std::vector<wire::DataPkt> pkts;
    pkts.reserve(batch);
    std::uint64_t priority = 0, done = 0;
    double seconds = 0;
    crypto::reset_op_counters();
    std::uint64_t macs = 0;
    TimeNs now = t0 + 1;
    while (done < o.packets) {
        pkts.clear();
        const std::size_t k = static_cast<std::size_t>(std::min<std::uint64_t>(batch, o.packets - done));
        for (std::size_t i = 0; i < k; ++i) {
            pkts.push_back(source::emit_packet(store, plan, src, Bytes(o.payload, 0xab), 0, now + i * spacing));
        }
        const auto before = crypto::op_counters().mac;
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < k; ++i) {
            priority += br.validate_forward(pkts[i], ctx, now + i * spacing).cls == router::ForwardClass::priority;
        }
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        macs += crypto::op_counters().mac - before;
        now += k * spacing;
        done += k;
    }
    std::printf("packets=%llu priority=%llu seconds=%.3f rate=%.0f pkt/s ns_per_pkt=%.1f macs_per_pkt=%.2f\n",
                static_cast<unsigned long long>(done), static_cast<unsigned long long>(priority), seconds,
                static_cast<double>(done) / seconds, seconds * 1e9 / static_cast<double>(done),
                static_cast<double>(macs) / static_cast<double>(done));
    return priority == done ? 0 : 1;
}

// --- plot ---------------------------------------------------------------------

struct PlotOpts {
    std::string input;
    std::string x = "gamma";
    std::string out;
};

struct CoverRow {
    std::uint64_t seed;
    std::size_t n;
    std::string r;
    std::string strategy;
    Bps gamma;
    double cover;
};

std::vector<CoverRow> read_cover_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("seed,n,r,strategy,gamma,median_cover", 0) != 0) throw UsageError(path + ": not a cover CSV");
    std::vector<CoverRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::vector<std::string> f;
        for (std::string c; std::getline(is, c, ',');) f.push_back(c);
        if (f.size() != 6) throw UsageError(path + ": bad row '" + line + "'");
        rows.push_back({std::stoull(f[0]), std::stoul(f[1]), f[2], f[3], std::stoull(f[4]), std::stod(f[5])});
    }
    return rows;
}

std::string svg_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

// Median cover against gamma (log axis) or n; one line per series, averaged over seeds.
void write_svg(std::ostream& os, const std::vector<CoverRow>& rows, bool x_gamma) {
    std::map<std::string, std::map<double, std::pair<double, int>>> series;
    for (const auto& r : rows) {
        std::string label = r.strategy + " r=" + r.r;
        label += x_gamma ? " n=" + std::to_string(r.n) : " gamma=" + units::format_bandwidth(r.gamma);
        const double x = x_gamma ? std::log10(static_cast<double>(std::max<Bps>(r.gamma, 1))) : static_cast<double>(r.n);
        auto& p = series[label][x];
        p.first += r.cover;
        p.second += 1;
    }
    double x0 = 1e300, x1 = -1e300;
    for (const auto& [_, pts] : series) {
        for (const auto& [x, _p] : pts) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
        }
    }
    if (series.empty()) x0 = 0, x1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    const double W = 720, H = 440, L = 70, R = 230, T = 30, B = 60;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - y * (H - T - B); };
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = i / 4.0;
        os << "<line x1=\"" << L - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << L << "\" y2=\"" << py(y) << "\" stroke=\"black\"/>";
        os << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
    }
    std::vector<double> ticks;
    if (x_gamma) {
        for (double d = std::ceil(x0); d <= x1 + 1e-9; d += 1) ticks.push_back(d);
    } else {
        for (const auto& [_, pts] : series) {
            for (const auto& [x, _p] : pts) ticks.push_back(x);
        }
        std::sort(ticks.begin(), ticks.end());
        ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    }
    for (double t : ticks) {
        const std::string label = x_gamma ? units::format_bandwidth(static_cast<Bps>(std::llround(std::pow(10.0, t))))
                                          : std::to_string(static_cast<long long>(t));
        os << "<line x1=\"" << px(t) << "\" y1=\"" << py(0) << "\" x2=\"" << px(t) << "\" y2=\"" << py(0) + 4
           << "\" stroke=\"black\"/>";
        os << "<text x=\"" << px(t) << "\" y=\"" << py(0) + 18 << "\" text-anchor=\"middle\">" << label << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
       << (x_gamma ? "gamma" : "n") << "</text>\n";
    os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << (T + H - B) / 2 << ")\">median cover</text>\n";
    std::size_t i = 0;
    for (const auto& [label, pts] : series) {
        const char* color = kColors[i % std::size(kColors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, p] : pts) os << px(x) << ',' << py(p.first / p.second) << ' ';
        os << "\"/>\n";
        for (const auto& [x, p] : pts) {
            os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(p.first / p.second) << "\" r=\"3\" fill=\"" << color << "\"/>";
        }
        const double ly = T + 16.0 * static_cast<double>(i);
        os << "\n<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 35 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        os << "<text x=\"" << W - R + 40 << "\" y=\"" << ly + 4 << "\">" << svg_escape(label) << "</text>\n";
        ++i;
    }
    os << "</svg>\n";
}

int cmd_plot(const PlotOpts& o) {
    std::cerr << "# plot input=" << o.input << " x=" << o.x << '\n';
    if (o.x != "gamma" && o.x != "n") throw UsageError("--x must be 'gamma' or 'n'");
    const auto rows = read_cover_csv(o.input);
    Output out(o.out);
    write_svg(out.get(), rows, o.x == "gamma");
    return 0;
}

void add_sim_options(CLI::App* cmd, SimOpts& o, bool with_gamma) {
    cmd->add_option("--n", o.n, "Node counts")->delimiter(',');
    cmd->add_option("--m", o.m, "Barabasi-Albert attachment count");
    cmd->add_option("--r", o.r, "Destination sampling rates in (0,1]")->delimiter(',');
    cmd->add_option("--strategy", o.strategy, "concurrent | max")->delimiter(',');
    if (with_gamma) cmd->add_option("--gamma", o.gamma, "Cover thresholds, e.g. 100kbps,1Mbps")->delimiter(',');
    cmd->add_option("--rho-min", o.rho_min, "Requester-count floor");
    cmd->add_option("--seed", o.seed, "First seed");
    cmd->add_option("--seeds", o.seeds, "Number of consecutive seeds");
    cmd->add_option("--jobs,-j", o.jobs, "Worker threads");
    cmd->add_option("--out,-o", o.out, "Output file (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Helia flyover reservations: experiments, scenarios and tools"};
    app.require_subcommand(1);

    TopoGenOpts topo_opts;
    auto* topo_cmd = app.add_subcommand("topo", "Topology tools")->require_subcommand(1);
    auto* topo_gen = topo_cmd->add_subcommand("gen", "Generate a Barabasi-Albert topology (JSON)");
    topo_gen->add_option("--n", topo_opts.n, "Nodes");
    topo_gen->add_option("--m", topo_opts.m, "Attachment count");
    topo_gen->add_option("--seed", topo_opts.seed, "Seed");
    topo_gen->add_flag("--matrices", topo_opts.matrices, "Include allocation matrices");
    topo_gen->add_option("--out,-o", topo_opts.out, "Output file (default stdout)");

    SimOpts res_opts, cover_opts;
    auto* sim_cmd = app.add_subcommand("sim", "Topology-scale reservation experiments")->require_subcommand(1);
    auto* sim_res = sim_cmd->add_subcommand("reservations", "Per-pair end-to-end reservations (CSV)");
    add_sim_options(sim_res, res_opts, false);
    auto* sim_cover = sim_cmd->add_subcommand("cover", "Median gamma-cover (CSV)");
    add_sim_options(sim_cover, cover_opts, true);

    ScenarioOpts sc_opts;
    std::uint64_t sc_seed = 0;
    auto* sc_cmd = app.add_subcommand("scenario", "Packet-level scenarios")->require_subcommand(1);
    auto* sc_run = sc_cmd->add_subcommand("run", "Run scenario files and check their requirements");
    sc_run->add_option("files", sc_opts.files, "Scenario JSON files")->required()->check(CLI::ExistingFile);
    auto* seed_opt = sc_run->add_option("--seed", sc_seed, "Override the scenario seed");
    sc_run->add_option("--log", sc_opts.log, "Write the event log here");
    sc_run->add_option("--summary", sc_opts.summary, "Write the per-flow summary CSV here ('-' for stdout)");
    sc_run->add_option("--reports", sc_opts.reports, "Directory for per-AS monitor reports");
    sc_run->add_flag("--quiet,-q", sc_opts.quiet, "Only print requirement lines");
    sc_run->add_option("--jobs,-j", sc_opts.jobs, "Scenarios run in parallel");

    VectorsOpts vec_opts;
    auto* vec_cmd = app.add_subcommand("vectors", "Emit or check crypto test vectors");
    vec_cmd->add_option("--count", vec_opts.count, "Groups of vectors to emit");
    vec_cmd->add_option("--seed", vec_opts.seed, "Seed");
    vec_cmd->add_option("--check", vec_opts.check, "Verify a vector file instead of emitting")->check(CLI::ExistingFile);
    vec_cmd->add_option("--out,-o", vec_opts.out, "Output file (default stdout)");

    BenchOpts bench_opts;
    std::string bench_packets = "1e6";
    auto* bench_cmd = app.add_subcommand("bench", "Benchmarks")->require_subcommand(1);
    auto* bench_val = bench_cmd->add_subcommand("validate", "Forward-packet validation throughput");
    bench_val->add_option("--packets", bench_packets, "Packets to validate, e.g. 1e6");
    bench_val->add_option("--payload", bench_opts.payload, "Payload bytes per packet");
    bench_val->add_option("--seed", bench_opts.seed, "Seed");

    PlotOpts plot_opts;
    auto* plot_cmd = app.add_subcommand("plot", "SVG line chart of median cover from a cover CSV");
    plot_cmd->add_option("input", plot_opts.input, "CSV written by `sim cover`")->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("--x", plot_opts.x, "gamma | n");
    plot_cmd->add_option("--out,-o", plot_opts.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (topo_gen->parsed()) return cmd_topo_gen(topo_opts);
        if (sim_res->parsed()) return cmd_sim_reservations(res_opts);
        if (sim_cover->parsed()) return cmd_sim_cover(cover_opts);
        if (sc_run->parsed()) {
            if (seed_opt->count() > 0) sc_opts.seed = sc_seed;
            return cmd_scenario_run(sc_opts);
        }
        if (vec_cmd->parsed()) return cmd_vectors(vec_opts);
        if (bench_val->parsed()) {
            try {
                bench_opts.packets = units::parse_count(bench_packets);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            return cmd_bench_validate(bench_opts);
        }
        if (plot_cmd->parsed()) return cmd_plot(plot_opts);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const simnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
