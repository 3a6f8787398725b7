#pragma once

#include "fleetsim/envserver.hpp"
#include "fleetsim/experiment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

inline std::filesystem::path source_dir() { return FLEETSIM_SOURCE_DIR; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("fleetsim_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Shortest paths

struct SmallGraph {
    int n = 0;
    std::vector<fleetsim::Edge> edges;
};

/// Random digraph on n nodes with integer weights in [1, 9]; integer sums
/// keep every comparison exact.
inline SmallGraph random_digraph(fleetsim::Rng& rng, int n, double density) {
    SmallGraph g;
    g.n = n;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b && rng.uniform01() < density)
                g.edges.push_back({fleetsim::NodeId{a}, fleetsim::NodeId{b}, static_cast<double>(rng.uniform_int(1, 9))});
    return g;
}

inline fleetsim::RoutingNetwork to_network(const SmallGraph& g) {
    std::vector<fleetsim::Node> nodes;
    for (int i = 0; i < g.n; ++i) nodes.push_back({fleetsim::NodeId{i}, static_cast<double>(i), 0.0});
    return fleetsim::RoutingNetwork(nodes, g.edges);
}

/// Minimum over every simple path by exhaustive depth-first enumeration.
inline double brute_force_time(const SmallGraph& g, int s, int t) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> on_path(static_cast<std::size_t>(g.n), false);
    auto dfs = [&](auto& self, int u, double acc) -> void {
        if (u == t) {
            best = std::min(best, acc);
            return;
        }
        on_path[static_cast<std::size_t>(u)] = true;
        for (const auto& e : g.edges) {
            const auto from = static_cast<int>(fleetsim::raw(e.from));
            const auto to = static_cast<int>(fleetsim::raw(e.to));
            if (from == u && !on_path[static_cast<std::size_t>(to)]) self(self, to, acc + e.travel_time);
        }
        on_path[static_cast<std::size_t>(u)] = false;
    };
    dfs(dfs, s, 0.0);
    return best;
}

/// Checks shortest_path against brute force for every ordered pair. Returns
/// the number of mismatches.
inline int dijkstra_mismatches(const SmallGraph& g) {
    const auto net = to_network(g);
    int bad = 0;
    for (int s = 0; s < g.n; ++s) {
        for (int t = 0; t < g.n; ++t) {
            const double expect = brute_force_time(g, s, t);
            if (!std::isfinite(expect)) {
                try {
                    fleetsim::shortest_path(net, fleetsim::NodeId{s}, fleetsim::NodeId{t});
                    ++bad;
                } catch (const fleetsim::Unreachable&) {
                }
                continue;
            }
            const auto p = fleetsim::shortest_path(net, fleetsim::NodeId{s}, fleetsim::NodeId{t});
            double sum = 0.0;
            for (double w : p.leg_times) sum += w;
            if (p.total_time != expect || sum != expect || p.node_sequence.front() != fleetsim::NodeId{s} ||
                p.node_sequence.back() != fleetsim::NodeId{t})
                ++bad;
        }
    }
    return bad;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Random matrix up to 10x10 with entries in [0, 50], pushed through
/// disaggregate and aggregate. True when the counts come back unchanged.
inline bool grid_round_trip(fleetsim::Rng& rng, std::uint64_t seed) {
    fleetsim::GridSpec spec;
    spec.n_x = static_cast<int>(rng.uniform_int(1, 10));
    spec.n_y = static_cast<int>(rng.uniform_int(1, 10));
    spec.x_min = -3.0 + rng.uniform01();
    spec.x_max = spec.x_min + 0.5 + 10.0 * rng.uniform01();
    spec.y_min = 7.0 * rng.uniform01();
    spec.y_max = spec.y_min + 0.5 + 10.0 * rng.uniform01();
    fleetsim::CountMatrix m(spec);
    for (int a = 1; a <= spec.n_x; ++a)
        for (int b = 1; b <= spec.n_y; ++b) m.at(a, b) = rng.uniform_int(0, 50);
    const auto points = fleetsim::disaggregate(spec, m, seed);
    return fleetsim::aggregate(spec, points) == m && static_cast<std::int64_t>(points.size()) == m.total();
}

// ---------------------------------------------------------------------------
// Protocol fixtures

/// The built-in catalog plus the two-by-two "tiny" scenario.
inline std::shared_ptr<const fleetsim::ScenarioCatalog> fixture_catalog() {
    auto c = fleetsim::ScenarioCatalog::with_builtin();
    c.add("tiny", fleetsim::load_config((golden_dir() / "tiny.cfg").string()));
    return std::make_shared<const fleetsim::ScenarioCatalog>(std::move(c));
}

struct MalformedCase {
    std::string name;
    std::vector<std::string> setup;
    std::string line;
    std::string code;
};

inline std::vector<MalformedCase> malformed_cases() {
    const auto j = nlohmann::json::parse(slurp(golden_dir() / "malformed.json"));
    std::vector<MalformedCase> out;
    for (const auto& c : j) {
        MalformedCase m;
        m.name = c.at("name").get<std::string>();
        for (const auto& s : c.value("setup", nlohmann::json::array())) m.setup.push_back(s.get<std::string>());
        m.line = c.at("line").get<std::string>();
        m.code = c.at("code").get<std::string>();
        out.push_back(std::move(m));
    }
    return out;
}

/// Plays setup then the case line through a fresh session. Returns the
/// error code of the reply, or a description of what went wrong.
inline std::string run_malformed(const MalformedCase& c) {
    fleetsim::EnvSession session(fixture_catalog());
    for (const auto& s : c.setup) {
        const auto reply = session.handle_line(s);
        if (reply && fleetsim::protocol::decode(*reply).kind == fleetsim::protocol::Kind::error)
            return "setup failed: " + *reply;
    }
    const auto reply = session.handle_line(c.line);
    if (!reply) return "no reply";
    const auto msg = fleetsim::protocol::decode(*reply);
    if (msg.kind != fleetsim::protocol::Kind::error) return "not an error: " + *reply;
    // The session must survive the error.
    const auto again = session.handle_line(R"({"kind":"reset","scenario":"tiny","seed":0})");
    if (!again || fleetsim::protocol::decode(*again).kind != fleetsim::protocol::Kind::reset_ok)
        return "session dead after error";
    return msg.code;
}

/// Lines of the golden corpus whose encode(decode(x)) differs from x.
inline std::vector<std::string> golden_mismatches() {
    std::vector<std::string> bad;
    for (const auto& line : read_lines(golden_dir() / "messages.jsonl")) {
        try {
            if (fleetsim::protocol::encode(fleetsim::protocol::decode(line)) != line) bad.push_back(line);
        } catch (const std::exception&) {
            bad.push_back(line);
        }
    }
    return bad;
}

// ---------------------------------------------------------------------------
// Environment episodes

struct EnvEpisode {
    std::vector<fleetsim::protocol::Message> replies;
    fleetsim::EpisodeMetrics metrics;
    double reward_sum = 0.0;
};

/// Drives one session with zero actions until done.
inline EnvEpisode zero_action_episode(fleetsim::EnvSession& session, const std::string& scenario, std::uint64_t seed) {
    using namespace fleetsim::protocol;
    EnvEpisode ep;
    auto reply = session.handle(make_reset(scenario, seed));
    ep.replies.push_back(*reply);
    std::size_t cells = reply->V.size();
    while (reply->kind != Kind::error && !reply->done) {
        reply = session.handle(make_step(std::vector<double>(cells, 0.0)));
        ep.replies.push_back(*reply);
        ep.reward_sum += reply->reward;
    }
    if (session.simulation()) ep.metrics = session.simulation()->metrics();
    return ep;
}

}  // namespace testsupport
