#pragma once

#include "fleetsim/config.hpp"
#include "fleetsim/engine.hpp"
#include "fleetsim/rebalance.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fleetsim {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

/// "0..9", "3", "1,4,7" or a mix such as "0..2,9".
inline std::vector<std::uint64_t> parse_seeds(std::string_view text) {
    std::vector<std::uint64_t> out;
    auto number = [&](std::string_view s) {
        s = csv::trim(s);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
            throw SchemaError("bad seed '" + std::string(s) + "'");
        return v;
    };
    for (const auto& part : csv::split(text)) {
        if (auto dots = part.find(".."); dots != std::string::npos) {
            const auto lo = number(std::string_view(part).substr(0, dots));
            const auto hi = number(std::string_view(part).substr(dots + 2));
            if (hi < lo) throw SchemaError("seed range '" + part + "' runs backwards");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(number(part));
        }
    }
    if (out.empty()) throw SchemaError("no seeds given");
    return out;
}

/// A built-in scenario name or a config file path.
inline ScenarioConfig resolve_config(const std::string& arg) {
    if (arg.empty() || arg == "canonical") return canonical_config();
    return load_config(arg);
}

inline const std::vector<std::string>& policy_names() {
    static const std::vector<std::string> names{"nr", "rr", "sar_star", "t_sar", "external", "replay"};
    return names;
}

/// Policy name plus the inputs some policies need.
struct PolicySpec {
    std::string name = "nr";
    std::string recording;        // t_sar, replay: file, or directory of sar_seed<k>.jsonl
    std::optional<double> scale;  // t_sar; default is the trip-count ratio
    std::string actions;          // external: one {"action": [...]} per line
};

inline std::vector<PolicySpec> parse_policies(std::string_view text, const PolicySpec& shared = {}) {
    std::vector<PolicySpec> out;
    for (const auto& name : csv::split(text)) {
        if (std::find(policy_names().begin(), policy_names().end(), name) == policy_names().end())
            throw SchemaError("unknown policy '" + name + "'");
        PolicySpec p = shared;
        p.name = name;
        out.push_back(std::move(p));
    }
    if (out.empty()) throw SchemaError("no policy given");
    return out;
}

inline std::string recording_file_name(std::uint64_t seed) { return "sar_seed" + std::to_string(seed) + ".jsonl"; }

inline std::string recording_path_for(const std::string& path, std::uint64_t seed) {
    if (std::filesystem::is_directory(path)) return (std::filesystem::path(path) / recording_file_name(seed)).string();
    return path;
}

inline std::unique_ptr<RebalancePolicy> make_policy(const PolicySpec& spec, const Scenario& scenario, std::uint64_t seed) {
    const auto& n = spec.name;
    if (n == "nr") return std::make_unique<NoRebalance>();
    if (n == "rr") return std::make_unique<RandomRebalance>();
    if (n == "sar_star") return std::make_unique<PerfectForesightRebalance>();
    if (n == "t_sar" || n == "replay") {
        if (spec.recording.empty()) throw SchemaError(n + " needs a recording");
        auto rec = read_recording_file(recording_path_for(spec.recording, seed));
        double scale = 1.0;
        if (n == "t_sar") {
            if (spec.scale) scale = *spec.scale;
            else if (rec.trip_total > 0)
                scale = static_cast<double>(scenario.trips.size()) / static_cast<double>(rec.trip_total);
        }
        return std::make_unique<TransferredSarRebalance>(std::move(rec), scale);
    }
    if (n == "external") {
        if (spec.actions.empty()) throw SchemaError("external needs an action file");
        std::ifstream in(spec.actions);
        if (!in) throw SchemaError("cannot open action file " + spec.actions);
        return std::make_unique<ExternalActionPolicy>(read_action_schedule(in));
    }
    throw SchemaError("unknown policy '" + n + "'");
}

struct SeedRun {
    std::uint64_t seed = 0;
    std::string policy;
    std::int64_t fleet_size = 0;
    std::int64_t trip_count = 0;
    EpisodeMetrics metrics;
    std::vector<double> rewards;
    std::vector<CountMatrix> rebalance_steps;  // aggregated sets per event
};

/// Calls fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline SeedRun run_one(const ScenarioConfig& cfg, const PolicySpec& spec, std::uint64_t seed) {
    auto scenario = build_scenario(cfg, seed);
    auto inner = make_policy(spec, *scenario, seed);
    RecordingPolicy policy(*inner);
    auto result = run_episode(scenario, policy);
    SeedRun r;
    r.seed = seed;
    r.policy = spec.name;
    r.fleet_size = scenario->fleet_size;
    r.trip_count = static_cast<std::int64_t>(scenario->trips.size());
    r.metrics = std::move(result.metrics);
    r.rewards = std::move(result.rewards);
    r.rebalance_steps = policy.steps();
    r.rebalance_steps.resize(static_cast<std::size_t>(scenario->clock.rebalance_events()), CountMatrix(scenario->grid));
    return r;
}

/// One episode per seed, returned in the order of `seeds`.
inline std::vector<SeedRun> run_seeds(const ScenarioConfig& cfg, const PolicySpec& spec,
                                      const std::vector<std::uint64_t>& seeds, unsigned threads = 1) {
    std::vector<SeedRun> out(seeds.size());
    parallel_for(seeds.size(), threads, [&](std::size_t i) { out[i] = run_one(cfg, spec, seeds[i]); });
    return out;
}

struct PolicySummary {
    std::string policy;
    std::size_t n_seeds = 0;
    double mean_wait = 0.0;
    double sd_wait = 0.0;  // sample standard deviation across seeds
    double e_nr = 0.0;     // percent versus the NR mean; negative is better
};

inline double mean_wait_of(const std::vector<SeedRun>& runs) {
    if (runs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : runs) s += r.metrics.mean_wait_per_request;
    return s / static_cast<double>(runs.size());
}

inline double sd_wait_of(const std::vector<SeedRun>& runs) {
    if (runs.size() < 2) return 0.0;
    const double m = mean_wait_of(runs);
    double ss = 0.0;
    for (const auto& r : runs) ss += (r.metrics.mean_wait_per_request - m) * (r.metrics.mean_wait_per_request - m);
    return std::sqrt(ss / static_cast<double>(runs.size() - 1));
}

/// 100 * (mean - mean_nr) / mean_nr.
inline double percent_vs_nr(double mean, double mean_nr) {
    if (mean_nr == 0.0) return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return 100.0 * (mean - mean_nr) / mean_nr;
}

inline PolicySummary summarize(const std::string& policy, const std::vector<SeedRun>& runs, double nr_mean) {
    PolicySummary s;
    s.policy = policy;
    s.n_seeds = runs.size();
    s.mean_wait = mean_wait_of(runs);
    s.sd_wait = sd_wait_of(runs);
    s.e_nr = percent_vs_nr(s.mean_wait, nr_mean);
    return s;
}

inline std::string run_id(const std::string& scenario, const std::string& policy, std::uint64_t seed) {
    return scenario + ":" + policy + ":" + std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Output files

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw SchemaError("cannot write " + p.string());
    return out;
}

inline void write_results_header(std::ostream& out) {
    out << "run_id,seed,policy,total_wait_pass_min,mean_wait_min,failed,served\n";
}

inline void write_results_rows(std::ostream& out, const std::string& scenario, const std::vector<SeedRun>& runs) {
    for (const auto& r : runs)
        out << run_id(scenario, r.policy, r.seed) << ',' << r.seed << ',' << r.policy << ','
            << r.metrics.total_wait_pass_min << ',' << format_double(r.metrics.mean_wait_per_request) << ','
            << r.metrics.failed_count << ',' << r.metrics.served_count << '\n';
}

inline void write_waits(std::ostream& out, const std::vector<SeedRun>& runs) {
    out << "seed,request_id,wait_min\n";
    for (const auto& r : runs)
        for (const auto& [id, wait] : r.metrics.per_request_wait) out << r.seed << ',' << raw(id) << ',' << wait << '\n';
}

inline void write_metrics_jsonl(std::ostream& out, const std::string& scenario, const std::vector<SeedRun>& runs) {
    for (const auto& r : runs) {
        nlohmann::ordered_json j;
        j["run_id"] = run_id(scenario, r.policy, r.seed);
        j["seed"] = r.seed;
        j["policy"] = r.policy;
        j["fleet_size"] = r.fleet_size;
        j["activated"] = r.metrics.activated_count;
        j["served"] = r.metrics.served_count;
        j["failed"] = r.metrics.failed_count;
        j["total_wait_pass_min"] = r.metrics.total_wait_pass_min;
        j["mean_wait_min"] = r.metrics.mean_wait_per_request;
        j["empty_miles"] = r.metrics.empty_miles;
        j["rebalance_requests"] = r.metrics.rebalance_requests;
        j["rebalance_cancelled"] = r.metrics.rebalance_cancelled;
        j["rewards"] = r.rewards;
        out << j.dump() << '\n';
    }
}

inline void write_summary(std::ostream& out, const std::vector<PolicySummary>& rows) {
    out << "policy,n_seeds,mean_wait_min,sd_wait_min,e_nr_pct\n";
    for (const auto& s : rows)
        out << s.policy << ',' << s.n_seeds << ',' << format_double(s.mean_wait) << ',' << format_double(s.sd_wait)
            << ',' << format_double(s.e_nr) << '\n';
}

// ---------------------------------------------------------------------------
// Commands

struct BatchResult {
    std::map<std::string, std::vector<SeedRun>> runs;  // by policy
    std::vector<PolicySummary> summary;                // in request order
};

/// Runs every policy on every seed. NR is always run so E_NR is defined;
/// it is only reported when asked for.
inline BatchResult run_batch(const ScenarioConfig& cfg, const std::vector<PolicySpec>& policies,
                             const std::vector<std::uint64_t>& seeds, unsigned threads = 1) {
    BatchResult out;
    const bool has_nr = std::any_of(policies.begin(), policies.end(), [](const PolicySpec& p) { return p.name == "nr"; });
    std::vector<SeedRun> nr_runs;
    if (!has_nr) nr_runs = run_seeds(cfg, PolicySpec{}, seeds, threads);
    for (const auto& p : policies) out.runs[p.name] = run_seeds(cfg, p, seeds, threads);
    const double nr_mean = mean_wait_of(has_nr ? out.runs.at("nr") : nr_runs);
    for (const auto& p : policies) out.summary.push_back(summarize(p.name, out.runs.at(p.name), nr_mean));
    return out;
}

/// Writes results.csv, summary.csv, metrics.jsonl and waits_<policy>.csv.
inline void write_batch(const std::filesystem::path& dir, const ScenarioConfig& cfg,
                        const std::vector<PolicySpec>& policies, const BatchResult& batch) {
    std::filesystem::create_directories(dir);
    auto results = open_out(dir / "results.csv");
    auto metrics = open_out(dir / "metrics.jsonl");
    write_results_header(results);
    for (const auto& p : policies) {
        const auto& runs = batch.runs.at(p.name);
        write_results_rows(results, cfg.name, runs);
        write_metrics_jsonl(metrics, cfg.name, runs);
        auto waits = open_out(dir / ("waits_" + p.name + ".csv"));
        write_waits(waits, runs);
    }
    auto summary = open_out(dir / "summary.csv");
    write_summary(summary, batch.summary);
}

struct SweepRow {
    std::int64_t fleet_size = 0;
    double requests_per_vehicle = 0.0;
    PolicySummary summary;
};

/// Mean trips per seed, for converting request:vehicle ratios into sizes.
inline double mean_trip_count(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    double total = 0.0;
    for (auto s : seeds) total += static_cast<double>(build_scenario(cfg, s)->trips.size());
    return seeds.empty() ? 0.0 : total / static_cast<double>(seeds.size());
}

inline std::vector<std::int64_t> sizes_for_ratios(double trips, const std::vector<double>& ratios) {
    std::vector<std::int64_t> out;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ValidationError("ratios must be positive");
        out.push_back(std::max<std::int64_t>(1, std::llround(trips / r)));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Mean wait per (fleet size, policy); E_NR is against NR at the same size.
inline std::vector<SweepRow> sweep_fleet(const ScenarioConfig& base, const std::vector<std::int64_t>& sizes,
                                         const std::vector<PolicySpec>& policies,
                                         const std::vector<std::uint64_t>& seeds, unsigned threads = 1) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] <= 0) throw ValidationError("fleet sizes must be positive");
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw ValidationError("fleet sizes must be ascending");
    }
    std::vector<SweepRow> out;
    for (auto size : sizes) {
        auto cfg = base;
        cfg.fleet_size = size;
        auto batch = run_batch(cfg, policies, seeds, threads);
        double trips = 0.0;
        const auto& any = batch.runs.begin()->second;
        for (const auto& r : any) trips += static_cast<double>(r.trip_count);
        trips /= static_cast<double>(std::max<std::size_t>(1, any.size()));
        for (const auto& s : batch.summary) out.push_back(SweepRow{size, trips / static_cast<double>(size), s});
    }
    return out;
}

inline void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "fleet_size,requests_per_vehicle,policy,n_seeds,mean_wait_min,sd_wait_min,e_nr_pct\n";
    for (const auto& r : rows)
        out << r.fleet_size << ',' << format_double(r.requests_per_vehicle) << ',' << r.summary.policy << ','
            << r.summary.n_seeds << ',' << format_double(r.summary.mean_wait) << ','
            << format_double(r.summary.sd_wait) << ',' << format_double(r.summary.e_nr) << '\n';
}

/// Sorted distinct waits with the fraction of requests at or below each.
inline std::vector<std::pair<Minutes, double>> wait_cdf(std::vector<Minutes> waits) {
    std::vector<std::pair<Minutes, double>> out;
    if (waits.empty()) return out;
    std::sort(waits.begin(), waits.end());
    const auto n = static_cast<double>(waits.size());
    for (std::size_t i = 0; i < waits.size(); ++i)
        if (i + 1 == waits.size() || waits[i + 1] != waits[i])
            out.emplace_back(waits[i], static_cast<double>(i + 1) / n);
    return out;
}

inline std::vector<Minutes> read_waits(std::istream& in, const std::string& what) {
    const auto table = csv::Table::read(in, what);
    const auto col = table.require_column("wait_min");
    std::vector<Minutes> out;
    out.reserve(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) out.push_back(table.as_int(r, col));
    return out;
}

/// Reads every waits_<policy>.csv in `run_dir` and writes cdf.csv.
inline std::filesystem::path export_cdf(const std::filesystem::path& run_dir, std::filesystem::path out_path = {}) {
    if (!std::filesystem::is_directory(run_dir)) throw SchemaError("no run directory " + run_dir.string());
    std::map<std::string, std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("waits_", 0) == 0 && e.path().extension() == ".csv")
            files[name.substr(6, name.size() - 6 - 4)] = e.path();
    }
    if (files.empty()) throw SchemaError("no per-request wait files in " + run_dir.string());
    if (out_path.empty()) out_path = run_dir / "cdf.csv";
    auto out = open_out(out_path);
    out << "policy,wait_min,cum_fraction\n";
    for (const auto& [policy, path] : files) {
        std::ifstream in(path);
        for (const auto& [w, f] : wait_cdf(read_waits(in, path.string())))
            out << policy << ',' << w << ',' << format_double(f) << '\n';
    }
    return out_path;
}

/// Runs SAR* per seed and writes sar_seed<k>.jsonl into `dir`.
inline std::vector<std::filesystem::path> record_sar(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                                     const std::filesystem::path& dir, unsigned threads = 1) {
    std::filesystem::create_directories(dir);
    PolicySpec sar;
    sar.name = "sar_star";
    const auto runs = run_seeds(cfg, sar, seeds, threads);
    const auto built = build_network(cfg);
    std::vector<std::filesystem::path> out;
    for (const auto& r : runs) {
        SarRecording rec{built.grid.n_x, built.grid.n_y, r.trip_count, r.seed, r.rebalance_steps};
        out.push_back(dir / recording_file_name(r.seed));
        write_recording_file(out.back().string(), rec);
    }
    return out;
}

}  // namespace fleetsim
