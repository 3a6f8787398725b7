// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.
#include "support.hpp"

#include <chrono>
#include <iomanip>
#include <iostream>

using namespace fleetsim;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

// Every run produced below is also checked for the accounting identities.
std::vector<SeedRun> all_runs;

std::vector<SeedRun> keep(std::vector<SeedRun> runs) {
    all_runs.insert(all_runs.end(), runs.begin(), runs.end());
    return runs;
}

PolicySpec spec(const std::string& name) {
    PolicySpec p;
    p.name = name;
    return p;
}

double pooled_sd(double a, double b) { return std::sqrt((a * a + b * b) / 2.0); }

void baseline_ordering(const std::vector<std::uint64_t>& seeds) {
    const auto cfg = canonical_config();
    const auto t0 = std::chrono::steady_clock::now();
    const auto nr = keep(run_seeds(cfg, spec("nr"), seeds));
    const auto rr = keep(run_seeds(cfg, spec("rr"), seeds));
    const auto sar = keep(run_seeds(cfg, spec("sar_star"), seeds));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double m_nr = mean_wait_of(nr), m_rr = mean_wait_of(rr), m_sar = mean_wait_of(sar);
    const double e_rr = percent_vs_nr(m_rr, m_nr), e_sar = percent_vs_nr(m_sar, m_nr);
    const bool ok = m_sar < m_nr && m_nr < m_rr && e_sar <= -5.0 && e_rr >= 5.0 && secs < 60.0;
    report("baseline_ordering", ok,
           "NR " + fmt(m_nr) + " RR " + fmt(m_rr) + " (" + fmt(e_rr, 2) + "%) SAR* " + fmt(m_sar) + " (" +
               fmt(e_sar, 2) + "%) runtime " + fmt(secs, 2) + " s");
}

void fleet_knee(const std::vector<std::uint64_t>& seeds) {
    const auto base = canonical_config();
    const auto sizes = sizes_for_ratios(mean_trip_count(base, seeds), {10, 15, 20, 30});
    std::map<std::int64_t, std::pair<std::vector<SeedRun>, std::vector<SeedRun>>> by_size;
    for (auto n : sizes) {
        auto cfg = base;
        cfg.fleet_size = n;
        by_size[n] = {keep(run_seeds(cfg, spec("nr"), seeds)), keep(run_seeds(cfg, spec("sar_star"), seeds))};
    }
    const auto trips = mean_trip_count(base, seeds);
    const auto size_at = [&](double ratio) { return std::max<std::int64_t>(1, std::llround(trips / ratio)); };
    const auto& [nr30, sar30] = by_size.at(size_at(30));
    const auto& [nr15, sar15] = by_size.at(size_at(15));
    const double imp30 = -percent_vs_nr(mean_wait_of(sar30), mean_wait_of(nr30));
    const double imp15 = -percent_vs_nr(mean_wait_of(sar15), mean_wait_of(nr15));
    const double gain30 = mean_wait_of(nr30) - mean_wait_of(sar30);
    const double sd30 = pooled_sd(sd_wait_of(nr30), sd_wait_of(sar30));
    std::string detail;
    for (const auto& [n, runs] : by_size)
        detail += "n=" + std::to_string(n) + " SAR* " +
                  fmt(percent_vs_nr(mean_wait_of(runs.second), mean_wait_of(runs.first)), 2) + "% ";
    detail += "| gain at 30:1 " + fmt(gain30) + " min vs pooled sd " + fmt(sd30);
    report("fleet_sizing_knee", imp30 <= imp15 && gain30 <= sd30, detail);
}

void dijkstra_oracle() {
    Rng rng(20240601);
    int bad = 0, pairs = 0;
    for (int g = 0; g < 100; ++g) {
        const int n = static_cast<int>(rng.uniform_int(1, 8));
        const auto graph = testsupport::random_digraph(rng, n, 0.15 + 0.6 * rng.uniform01());
        bad += testsupport::dijkstra_mismatches(graph);
        pairs += n * n;
    }
    report("dijkstra_oracle", bad == 0, std::to_string(pairs) + " pairs on 100 digraphs, " + std::to_string(bad) + " mismatches");
}

void aggregation_round_trip() {
    Rng rng(77);
    int bad = 0;
    for (int k = 0; k < 200; ++k)
        if (!testsupport::grid_round_trip(rng, static_cast<std::uint64_t>(k))) ++bad;
    report("aggregation_round_trip", bad == 0, "200 matrices, " + std::to_string(bad) + " mismatches");
}

void determinism() {
    testsupport::TempDir dir("accept_det");
    const auto cfg = canonical_config();
    const auto policies = parse_policies("nr");
    const auto seeds = parse_seeds("0..9");
    write_batch(dir.path() / "a", cfg, policies, run_batch(cfg, policies, seeds, 1));
    write_batch(dir.path() / "b", cfg, policies, run_batch(cfg, policies, seeds, 4));
    bool same = true;
    for (const auto* f : {"results.csv", "summary.csv", "metrics.jsonl", "waits_nr.csv"})
        same = same && testsupport::slurp(dir.path() / "a" / f) == testsupport::slurp(dir.path() / "b" / f) &&
               !testsupport::slurp(dir.path() / "a" / f).empty();
    report("determinism", same, "two NR runs over 10 seeds, byte comparison of 4 output files");
}

void protocol_checks(const std::vector<std::uint64_t>& seeds) {
    const auto catalog = testsupport::fixture_catalog();
    int mismatched = 0;
    for (auto seed : seeds) {
        EnvSession session(catalog);
        const auto ep = testsupport::zero_action_episode(session, "canonical", seed);
        NoRebalance nr;
        const auto offline = run_episode(build_scenario(canonical_config(), seed), nr);
        std::vector<double> rewards;
        for (std::size_t k = 1; k < ep.replies.size(); ++k) rewards.push_back(ep.replies[k].reward);
        if (!(ep.metrics == offline.metrics) || rewards != offline.rewards) ++mismatched;
        SeedRun r;
        r.seed = seed;
        r.policy = "env_zero";
        r.metrics = ep.metrics;
        r.rewards = rewards;
        all_runs.push_back(r);
    }
    const auto golden = testsupport::read_lines(testsupport::golden_dir() / "messages.jsonl");
    const auto golden_bad = testsupport::golden_mismatches();
    const auto cases = testsupport::malformed_cases();
    int wrong_code = 0;
    for (const auto& c : cases)
        if (testsupport::run_malformed(c) != c.code) ++wrong_code;
    const bool ok = mismatched == 0 && golden.size() >= 20 && golden_bad.empty() && !cases.empty() && wrong_code == 0;
    report("protocol", ok,
           std::to_string(seeds.size() - static_cast<std::size_t>(mismatched)) + "/" + std::to_string(seeds.size()) +
               " zero-action episodes equal NR; golden " + std::to_string(golden.size() - golden_bad.size()) + "/" +
               std::to_string(golden.size()) + " round-trip; malformed " +
               std::to_string(cases.size() - static_cast<std::size_t>(wrong_code)) + "/" + std::to_string(cases.size()));
}

void tsar_fidelity(const std::vector<std::uint64_t>& seeds) {
    testsupport::TempDir dir("accept_tsar");
    const auto cfg = canonical_config();
    record_sar(cfg, seeds, dir.path());
    const auto sar = keep(run_seeds(cfg, spec("sar_star"), seeds));
    auto t = spec("t_sar");
    t.recording = dir.path().string();
    t.scale = 1.0;
    const auto replay = keep(run_seeds(cfg, t, seeds));
    int equal = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto rec = read_recording_file((dir.path() / recording_file_name(seeds[i])).string());
        if (replay[i].rebalance_steps == rec.steps && sar[i].rebalance_steps == rec.steps) ++equal;
    }
    const double m_sar = mean_wait_of(sar), m_t = mean_wait_of(replay);
    const double rel = 100.0 * std::abs(m_t - m_sar) / m_sar;
    report("tsar_fidelity", equal == static_cast<int>(seeds.size()) && rel <= 10.0,
           std::to_string(equal) + "/" + std::to_string(seeds.size()) + " seeds with equal matrices; SAR* " +
               fmt(m_sar) + " replay " + fmt(m_t) + " (" + fmt(rel, 2) + "% apart)");
}

void accounting() {
    // Random actions through the environment add an externally driven policy.
    const auto catalog = testsupport::fixture_catalog();
    Rng rng(11);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EnvSession session(catalog);
        auto reply = session.handle(protocol::make_reset("canonical", seed));
        SeedRun r;
        r.seed = seed;
        r.policy = "env_random";
        while (!reply->done) {
            std::vector<double> a(reply->V.size());
            for (auto& x : a) x = 4.0 * rng.uniform01() - 1.0;
            reply = session.handle(protocol::make_step(a));
            r.rewards.push_back(reply->reward);
        }
        r.metrics = session.simulation()->metrics();
        all_runs.push_back(r);
    }
    std::size_t bad_sum = 0, bad_wait = 0;
    Minutes worst = 0;
    for (const auto& r : all_runs) {
        double sum = 0.0;
        for (double x : r.rewards) sum += x;
        if (sum != -static_cast<double>(r.metrics.total_wait_pass_min)) ++bad_sum;
        for (const auto& [id, w] : r.metrics.per_request_wait) {
            worst = std::max(worst, w);
            if (w > 30 || w < 0) ++bad_wait;
        }
    }
    report("accounting_identities", bad_sum == 0 && bad_wait == 0,
           std::to_string(all_runs.size()) + " episodes, " + std::to_string(bad_sum) + " reward-sum mismatches, max wait " +
               std::to_string(worst) + " min");
}

}  // namespace

int main() {
    try {
        const auto seeds = parse_seeds("0..9");
        baseline_ordering(seeds);
        fleet_knee(seeds);
        dijkstra_oracle();
        aggregation_round_trip();
        determinism();
        protocol_checks(seeds);
        tsar_fidelity(seeds);
        accounting();
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << std::endl;
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
