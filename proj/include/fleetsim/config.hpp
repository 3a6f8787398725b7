#pragma once

#include "fleetsim/csv.hpp"
#include "fleetsim/error.hpp"
#include "fleetsim/network.hpp"
#include "fleetsim/rng.hpp"
#include "fleetsim/scenario.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fleetsim {

/// Scenario description as read from a key = value config file.
struct ScenarioConfig {
    std::string name = "scenario";

    // Network: files, or a synthetic lattice when node_file is empty.
    std::string node_file;
    std::string edge_file;
    int lattice_rows = 8;
    int lattice_cols = 8;
    double lattice_spacing = 0.5;  // miles
    double lattice_speed = 0.25;   // miles per minute
    double lattice_noise = 0.0;
    std::uint64_t lattice_seed = 0;

    // Grid; bounds default to the network's bounding box.
    int grid_nx = 5;
    int grid_ny = 5;
    std::optional<double> grid_x_min, grid_x_max, grid_y_min, grid_y_max;

    // Demand: a trip file, or synthetic demand when trip_file is empty.
    std::string trip_file;
    std::optional<double> subsample_fraction;
    DemandSpec demand;
    std::optional<std::uint64_t> demand_seed;  // fixed demand across run seeds

    std::int64_t fleet_size = 20;
    int capacity = 4;
    Minutes dt_sim = 1;
    Minutes dt_dispatch = 1;
    Minutes dt_rebalance = 60;
    std::int64_t horizon_steps = 1440;
    Minutes max_wait = 30;
    std::uint64_t seed = 0;
    DispatchMetric dispatch_metric = DispatchMetric::travel_time;
    bool observe_rebalance_requests = false;

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
    text = csv::trim(text);
    T v{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size())
        throw SchemaError("config key '" + key + "': cannot parse '" + std::string(text) + "'");
    return v;
}

inline std::vector<double> parse_list(const std::string& key, std::string_view text) {
    std::vector<double> out;
    for (const auto& part : csv::split(text)) out.push_back(parse_number<double>(key, part));
    return out;
}

inline bool parse_bool(const std::string& key, std::string_view text) {
    text = csv::trim(text);
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw SchemaError("config key '" + key + "': expected a boolean");
}

/// `m,n,weight` optionally followed by 24 hourly multipliers.
inline Hotspot parse_hotspot(const std::string& key, std::string_view text) {
    const auto v = parse_list(key, text);
    if (v.size() != 3 && v.size() != 27) throw SchemaError("config key '" + key + "': expected m,n,weight[,24 multipliers]");
    Hotspot h;
    h.cell = Cell{static_cast<int>(v[0]), static_cast<int>(v[1])};
    if (static_cast<double>(h.cell.m) != v[0] || static_cast<double>(h.cell.n) != v[1])
        throw SchemaError("config key '" + key + "': cell indices must be integers");
    h.weight = v[2];
    if (v.size() == 27) h.hourly_multiplier.assign(v.begin() + 3, v.end());
    return h;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Relative file paths
/// are resolved against `base_dir`.
inline ScenarioConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    ScenarioConfig c;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = csv::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw SchemaError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(csv::trim(body.substr(0, eq)));
        const std::string value(csv::trim(body.substr(eq + 1)));
        const bool repeatable = key == "origin_hotspot" || key == "dest_hotspot";
        if (!repeatable && seen.count(key))
            throw SchemaError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        seen[key] = line_no;

        using detail::parse_number;
        if (key == "name") c.name = value;
        else if (key == "node_file") c.node_file = detail::resolve(base_dir, value);
        else if (key == "edge_file") c.edge_file = detail::resolve(base_dir, value);
        else if (key == "lattice_rows") c.lattice_rows = parse_number<int>(key, value);
        else if (key == "lattice_cols") c.lattice_cols = parse_number<int>(key, value);
        else if (key == "lattice_spacing") c.lattice_spacing = parse_number<double>(key, value);
        else if (key == "lattice_speed") c.lattice_speed = parse_number<double>(key, value);
        else if (key == "lattice_noise") c.lattice_noise = parse_number<double>(key, value);
        else if (key == "lattice_seed") c.lattice_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "grid_nx") c.grid_nx = parse_number<int>(key, value);
        else if (key == "grid_ny") c.grid_ny = parse_number<int>(key, value);
        else if (key == "grid_x_min") c.grid_x_min = parse_number<double>(key, value);
        else if (key == "grid_x_max") c.grid_x_max = parse_number<double>(key, value);
        else if (key == "grid_y_min") c.grid_y_min = parse_number<double>(key, value);
        else if (key == "grid_y_max") c.grid_y_max = parse_number<double>(key, value);
        else if (key == "trip_file") c.trip_file = detail::resolve(base_dir, value);
        else if (key == "subsample_fraction") c.subsample_fraction = parse_number<double>(key, value);
        else if (key == "demand_trips") c.demand.total_trips = parse_number<std::int64_t>(key, value);
        else if (key == "demand_profile") {
            const auto v = detail::parse_list(key, value);
            if (v.size() != 24) throw SchemaError("config key 'demand_profile' needs 24 hourly rates");
            std::copy(v.begin(), v.end(), c.demand.hourly_rates.begin());
        } else if (key == "origin_hotspot") c.demand.origins.hotspots.push_back(detail::parse_hotspot(key, value));
        else if (key == "dest_hotspot") c.demand.destinations.hotspots.push_back(detail::parse_hotspot(key, value));
        else if (key == "origin_uniform_weight") c.demand.origins.uniform_weight = parse_number<double>(key, value);
        else if (key == "dest_uniform_weight") c.demand.destinations.uniform_weight = parse_number<double>(key, value);
        else if (key == "demand_seed") c.demand_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "fleet_size") c.fleet_size = parse_number<std::int64_t>(key, value);
        else if (key == "capacity") c.capacity = parse_number<int>(key, value);
        else if (key == "dt_sim") c.dt_sim = parse_number<Minutes>(key, value);
        else if (key == "dt_dispatch") c.dt_dispatch = parse_number<Minutes>(key, value);
        else if (key == "dt_rebalance") c.dt_rebalance = parse_number<Minutes>(key, value);
        else if (key == "horizon_steps") c.horizon_steps = parse_number<std::int64_t>(key, value);
        else if (key == "max_wait") c.max_wait = parse_number<Minutes>(key, value);
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "dispatch_metric") {
            if (value == "travel_time") c.dispatch_metric = DispatchMetric::travel_time;
            else if (value == "euclidean") c.dispatch_metric = DispatchMetric::euclidean;
            else throw SchemaError("dispatch_metric must be travel_time or euclidean");
        } else if (key == "observe_rebalance_requests") c.observe_rebalance_requests = detail::parse_bool(key, value);
        else throw SchemaError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (c.node_file.empty() != c.edge_file.empty())
        throw SchemaError("config: node_file and edge_file must be given together");
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open config " + path);
    return parse_config(in, std::filesystem::path(path).parent_path());
}

/// The desk-scale reference scenario: 8x8 lattice, 5x5 grid, 300 trips
/// from a two-hotspot commuter profile, 20 vehicles (15 requests per
/// vehicle), one-minute steps, hourly rebalancing over a day.
inline ScenarioConfig canonical_config() {
    ScenarioConfig c;
    c.name = "canonical";
    c.lattice_rows = 8;
    c.lattice_cols = 8;
    c.lattice_spacing = 1.35;
    c.lattice_speed = 0.25;
    c.grid_nx = 5;
    c.grid_ny = 5;
    c.demand.total_trips = 300;
    c.demand.hourly_rates = {4, 3, 2, 1, 1, 2, 5, 12, 20, 14, 9, 8, 9, 9, 10, 13, 18, 22, 20, 14, 10, 8, 7, 5};
    // South-west hotspot busy in the morning, north-east one in the evening.
    std::vector<double> morning(24, 1.0), evening(24, 1.0);
    for (int h = 6; h <= 10; ++h) {
        morning[h] = 2.0;
        evening[h] = 0.35;
    }
    for (int h = 15; h <= 19; ++h) {
        morning[h] = 0.35;
        evening[h] = 2.0;
    }
    c.demand.origins.hotspots = {Hotspot{Cell{1, 1}, 1.0, morning}, Hotspot{Cell{5, 5}, 1.0, evening}};
    c.demand.origins.uniform_weight = 0.03;
    c.demand.destinations = c.demand.origins;
    c.demand.destinations.uniform_weight = 0.7;
    c.fleet_size = 20;
    return c;
}

struct BuiltNetwork {
    std::shared_ptr<const RoutingNetwork> network;
    GridSpec grid;
};

inline BuiltNetwork build_network(const ScenarioConfig& c) {
    BuiltNetwork out;
    if (!c.node_file.empty()) {
        out.network = std::make_shared<const RoutingNetwork>(load_network_files(c.node_file, c.edge_file));
    } else {
        out.network = std::make_shared<const RoutingNetwork>(synth_grid_network(
            c.lattice_rows, c.lattice_cols, c.lattice_spacing, c.lattice_speed, c.lattice_noise, c.lattice_seed));
    }
    const auto& net = *out.network;
    if (net.empty()) throw ValidationError("network has no nodes");
    double x0 = net.node_at(0).x, x1 = x0, y0 = net.node_at(0).y, y1 = y0;
    for (const auto& n : net.nodes()) {
        x0 = std::min(x0, n.x);
        x1 = std::max(x1, n.x);
        y0 = std::min(y0, n.y);
        y1 = std::max(y1, n.y);
    }
    // Degenerate extents get a unit-wide box so the grid stays valid.
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    out.grid = GridSpec{c.grid_nx, c.grid_ny, c.grid_x_min.value_or(x0), c.grid_x_max.value_or(x1),
                        c.grid_y_min.value_or(y0), c.grid_y_max.value_or(y1)};
    out.grid.validate();
    return out;
}

/// Materialises the scenario for one run seed.
inline std::shared_ptr<const Scenario> build_scenario(const ScenarioConfig& c, std::uint64_t seed) {
    auto built = build_network(c);
    auto s = std::make_shared<Scenario>();
    s->name = c.name;
    s->network = built.network;
    s->grid = built.grid;
    s->clock = SimClock::make(c.dt_sim, c.dt_dispatch, c.dt_rebalance, c.horizon_steps);
    s->fleet_size = c.fleet_size;
    s->capacity = c.capacity;
    s->max_wait = c.max_wait;
    s->seed = seed;
    s->dispatch_metric = c.dispatch_metric;
    s->observe_rebalance_requests = c.observe_rebalance_requests;

    const auto demand_seed = c.demand_seed.value_or(seed);
    if (!c.trip_file.empty()) {
        s->trips = preprocess(load_raw_trip_file(c.trip_file), derive_seed(demand_seed, stream::kPreprocess));
    } else {
        s->trips = synth_demand(c.demand, *built.network, built.grid, derive_seed(demand_seed, stream::kDemand));
    }
    if (c.subsample_fraction)
        s->trips = sample_subset(s->trips, *c.subsample_fraction, derive_seed(demand_seed, stream::kSubsample));
    s->validate();
    return s;
}

}  // namespace fleetsim
