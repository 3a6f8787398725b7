#pragma once

#include "fleetsim/csv.hpp"
#include "fleetsim/domain.hpp"
#include "fleetsim/grid.hpp"
#include "fleetsim/network.hpp"
#include "fleetsim/rng.hpp"
#include "fleetsim/snap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fleetsim {

inline constexpr Minutes kMinutesPerDay = 1440;
inline constexpr Minutes kPickupBinMinutes = 15;

struct TripRecord {
    RequestId id{};
    Minutes pickup_t = 0;  // minutes since midnight
    NodeId origin_node{};
    NodeId dest_node{};
    int n_pass = 1;

    friend bool operator==(const TripRecord&, const TripRecord&) = default;
};

inline bool trip_order(const TripRecord& a, const TripRecord& b) {
    if (a.pickup_t != b.pickup_t) return a.pickup_t < b.pickup_t;
    return a.id < b.id;
}

/// A trip row as ingested, before cleaning.
struct RawTrip {
    std::int64_t trip_id = 0;
    std::optional<Minutes> pickup_min;
    std::optional<Minutes> dropoff_min;
    std::optional<NodeId> origin_node;
    std::optional<NodeId> dest_node;
    std::optional<int> n_pass;
    /// The source carries a dropoff time column, so a missing value is a defect.
    bool dropoff_expected = false;
    /// pickup_min is the start of a 15-minute bin and still needs jittering.
    bool binned = true;
};

/// Reads `trip_id,pickup_bin_min,origin_node,dest_node[,n_pass]`; an
/// optional `dropoff_bin_min` column is honoured when present.
inline std::vector<RawTrip> load_raw_trips(std::istream& in) {
    const auto t = csv::Table::read(in, "trip table");
    const auto c_id = t.require_column("trip_id");
    const auto c_pick = t.require_column("pickup_bin_min");
    const auto c_orig = t.require_column("origin_node");
    const auto c_dest = t.require_column("dest_node");
    const auto c_pass = t.column("n_pass");
    const auto c_drop = t.column("dropoff_bin_min");
    std::vector<RawTrip> rows;
    rows.reserve(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        RawTrip row;
        row.trip_id = t.as_int(r, c_id);
        row.pickup_min = t.as_optional_int(r, c_pick);
        if (auto o = t.as_optional_int(r, c_orig)) row.origin_node = NodeId{*o};
        if (auto d = t.as_optional_int(r, c_dest)) row.dest_node = NodeId{*d};
        if (c_pass)
            if (auto p = t.as_optional_int(r, *c_pass)) row.n_pass = static_cast<int>(*p);
        if (c_drop) {
            row.dropoff_expected = true;
            row.dropoff_min = t.as_optional_int(r, *c_drop);
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<RawTrip> load_raw_trip_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open trip file " + path);
    return load_raw_trips(in);
}

/// Cleans raw rows: (I) drops rows missing a pickup/dropoff time or
/// location, (II) drops rows whose pickup and dropoff share both location
/// and time, (III) spreads binned pickup times uniformly over their
/// 15-minute bin. Rows already jittered pass step III untouched.
inline std::vector<TripRecord> preprocess(const std::vector<RawTrip>& raw, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TripRecord> out;
    std::set<std::int64_t> seen;
    for (const auto& row : raw) {
        if (!seen.insert(row.trip_id).second)
            throw ValidationError("duplicate trip id " + std::to_string(row.trip_id));
        if (!row.pickup_min || !row.origin_node || !row.dest_node) continue;
        if (row.dropoff_expected && !row.dropoff_min) continue;
        if (row.dropoff_min && *row.origin_node == *row.dest_node && *row.pickup_min == *row.dropoff_min) continue;

        if (*row.pickup_min < 0 || *row.pickup_min >= kMinutesPerDay)
            throw SchemaError("trip " + std::to_string(row.trip_id) + ": pickup minute outside [0, 1440)");
        const int n_pass = row.n_pass.value_or(1);
        if (n_pass < 1) throw SchemaError("trip " + std::to_string(row.trip_id) + ": n_pass must be >= 1");

        TripRecord rec;
        rec.id = RequestId{row.trip_id};
        rec.origin_node = *row.origin_node;
        rec.dest_node = *row.dest_node;
        rec.n_pass = n_pass;
        if (row.binned) {
            const Minutes bin = *row.pickup_min / kPickupBinMinutes * kPickupBinMinutes;
            rec.pickup_t = bin + rng.uniform_int(0, kPickupBinMinutes - 1);
        } else {
            rec.pickup_t = *row.pickup_min;
        }
        out.push_back(rec);
    }
    std::sort(out.begin(), out.end(), trip_order);
    return out;
}

/// Processed trips in raw form, marked as already jittered.
inline std::vector<RawTrip> to_raw(const std::vector<TripRecord>& trips) {
    std::vector<RawTrip> raw;
    raw.reserve(trips.size());
    for (const auto& t : trips) {
        RawTrip r;
        r.trip_id = fleetsim::raw(t.id);
        r.pickup_min = t.pickup_t;
        r.origin_node = t.origin_node;
        r.dest_node = t.dest_node;
        r.n_pass = t.n_pass;
        r.binned = false;
        raw.push_back(r);
    }
    return raw;
}

/// Uniformly random subset of round(fraction * N) trips, original order kept.
inline std::vector<TripRecord> sample_subset(const std::vector<TripRecord>& trips, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("subset fraction must be in (0, 1]");
    const auto n = trips.size();
    auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    keep = std::min(keep, n);
    Rng rng(seed);
    std::vector<TripRecord> out;
    out.reserve(keep);
    // Selection sampling: every subset of size `keep` is equally likely.
    for (std::size_t i = 0; i < n && out.size() < keep; ++i) {
        const auto remaining = n - i;
        const auto needed = keep - out.size();
        if (rng.below(remaining) < needed) out.push_back(trips[i]);
    }
    return out;
}

/// One component of a spatial demand mixture.
struct Hotspot {
    Cell cell;
    double weight = 1.0;
    std::vector<double> hourly_multiplier;  // 24 entries, or empty for 1.0

    double weight_at(int hour) const {
        return hourly_multiplier.empty() ? weight : weight * hourly_multiplier.at(static_cast<std::size_t>(hour));
    }

    friend bool operator==(const Hotspot&, const Hotspot&) = default;
};

/// Hotspots plus a weight spread evenly over every cell.
struct SpatialMixture {
    std::vector<Hotspot> hotspots;
    double uniform_weight = 0.0;

    bool empty() const { return hotspots.empty() && uniform_weight == 0.0; }

    friend bool operator==(const SpatialMixture&, const SpatialMixture&) = default;
};

struct DemandSpec {
    std::array<double, 24> hourly_rates{};
    SpatialMixture origins;
    SpatialMixture destinations;  // empty: reuse origins
    std::int64_t total_trips = 0;

    friend bool operator==(const DemandSpec&, const DemandSpec&) = default;
};

namespace detail {

inline Cell draw_cell(const SpatialMixture& mix, const GridSpec& grid, int hour, Rng& rng) {
    std::vector<double> w;
    w.reserve(mix.hotspots.size() + 1);
    for (const auto& h : mix.hotspots) w.push_back(h.weight_at(hour));
    w.push_back(mix.uniform_weight);
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) {
        // Nothing active this hour: fall back to the hour-independent weights.
        for (std::size_t i = 0; i < mix.hotspots.size(); ++i) w[i] = mix.hotspots[i].weight;
        total = 0.0;
        for (double v : w) total += v;
        if (!(total > 0.0)) throw DegenerateProfile("spatial mixture has zero total weight");
    }
    const auto k = rng.categorical(w);
    if (k < mix.hotspots.size()) return mix.hotspots[k].cell;
    return grid.cell_at(rng.below(grid.cell_count()));
}

inline NodeId draw_node_in(Cell cell, const RoutingNetwork& net, const NodeSnapper& snapper, Rng& rng) {
    const auto& nodes = snapper.nodes_in(cell);
    if (!nodes.empty()) return net.node_at(nodes[rng.below(nodes.size())]).id;
    const auto& g = snapper.grid();
    const double x = g.x_min + (cell.m - 1 + rng.uniform01()) * g.cell_width();
    const double y = g.y_min + (cell.n - 1 + rng.uniform01()) * g.cell_height();
    return nearest_node(net, x, y);
}

inline void validate_mixture(const SpatialMixture& mix, const GridSpec& grid) {
    if (mix.uniform_weight < 0.0) throw DegenerateProfile("negative uniform weight");
    for (const auto& h : mix.hotspots) {
        if (h.cell.m < 1 || h.cell.m > grid.n_x || h.cell.n < 1 || h.cell.n > grid.n_y)
            throw ValidationError("hotspot cell outside grid");
        if (h.weight < 0.0) throw DegenerateProfile("negative hotspot weight");
        if (!h.hourly_multiplier.empty() && h.hourly_multiplier.size() != 24)
            throw ValidationError("hotspot hourly multiplier needs 24 entries");
        for (double m : h.hourly_multiplier)
            if (m < 0.0) throw DegenerateProfile("negative hourly multiplier");
    }
}

}  // namespace detail

/// Synthetic diurnal demand: hour of day from the normalised hourly profile,
/// minute uniform within it, origin and destination cells from the spatial
/// mixtures, then a node inside each cell.
inline std::vector<TripRecord> synth_demand(const DemandSpec& spec, const RoutingNetwork& net, const GridSpec& grid,
                                            std::uint64_t seed) {
    double total_rate = 0.0;
    for (double r : spec.hourly_rates) {
        if (r < 0.0) throw DegenerateProfile("hourly rates must be nonnegative");
        total_rate += r;
    }
    if (!(total_rate > 0.0)) throw DegenerateProfile("hourly profile is all zero");
    if (spec.total_trips < 0) throw ValidationError("total_trips must be nonnegative");
    if (net.empty()) throw ValidationError("demand synthesis needs a nonempty network");

    SpatialMixture origins = spec.origins;
    if (origins.empty()) origins.uniform_weight = 1.0;
    const SpatialMixture& dests = spec.destinations.empty() ? origins : spec.destinations;
    detail::validate_mixture(origins, grid);
    detail::validate_mixture(dests, grid);

    const NodeSnapper snapper(net, grid);
    Rng rng(seed);
    std::vector<TripRecord> trips;
    trips.reserve(static_cast<std::size_t>(spec.total_trips));
    for (std::int64_t i = 0; i < spec.total_trips; ++i) {
        const int hour = static_cast<int>(rng.categorical(spec.hourly_rates));
        TripRecord t;
        t.id = RequestId{i};
        t.pickup_t = hour * 60 + rng.uniform_int(0, 59);
        t.origin_node = detail::draw_node_in(detail::draw_cell(origins, grid, hour, rng), net, snapper, rng);
        t.dest_node = detail::draw_node_in(detail::draw_cell(dests, grid, hour, rng), net, snapper, rng);
        for (int attempt = 0; attempt < 16 && t.dest_node == t.origin_node && net.node_count() > 1; ++attempt)
            t.dest_node = detail::draw_node_in(detail::draw_cell(dests, grid, hour, rng), net, snapper, rng);
        trips.push_back(t);
    }
    std::sort(trips.begin(), trips.end(), trip_order);
    return trips;
}

/// Vehicles at the nodes nearest to uniform random points of the operating area.
inline std::vector<Vehicle> place_fleet(std::int64_t fleet_size, const RoutingNetwork& net, const GridSpec& grid,
                                        std::uint64_t seed, int capacity = 4) {
    if (fleet_size < 1) throw ValidationError("fleet size must be at least 1");
    if (capacity < 1) throw ValidationError("vehicle capacity must be at least 1");
    Rng rng(seed);
    std::vector<Vehicle> fleet;
    fleet.reserve(static_cast<std::size_t>(fleet_size));
    for (std::int64_t i = 0; i < fleet_size; ++i) {
        const double x = grid.x_min + rng.uniform01() * (grid.x_max - grid.x_min);
        const double y = grid.y_min + rng.uniform01() * (grid.y_max - grid.y_min);
        Vehicle v;
        v.id = VehicleId{i};
        v.position_node = nearest_node(net, x, y);
        v.capacity = capacity;
        fleet.push_back(std::move(v));
    }
    return fleet;
}

enum class DispatchMetric { travel_time, euclidean };

/// Everything an episode needs; immutable once built.
struct Scenario {
    std::string name = "scenario";
    std::shared_ptr<const RoutingNetwork> network;
    GridSpec grid;
    SimClock clock;
    std::vector<TripRecord> trips;  // sorted by (pickup_t, id)
    std::int64_t fleet_size = 1;
    int capacity = 4;
    Minutes max_wait = 30;
    std::uint64_t seed = 0;
    DispatchMetric dispatch_metric = DispatchMetric::travel_time;
    /// Count unassigned rebalance requests in the waiting-request observation.
    bool observe_rebalance_requests = false;

    void validate() const {
        if (!network || network->empty()) throw ValidationError("scenario needs a nonempty network");
        grid.validate();
        SimClock::make(clock.dt_sim, clock.dt_dispatch, clock.dt_rebalance, clock.horizon_steps);
        if (fleet_size < 1) throw ValidationError("fleet size must be at least 1");
        if (capacity < 1) throw ValidationError("vehicle capacity must be at least 1");
        if (max_wait < 1) throw ValidationError("max wait must be at least one minute");
        if (!std::is_sorted(trips.begin(), trips.end(), trip_order))
            throw ValidationError("trips must be sorted by pickup time then id");
        std::set<RequestId> ids;
        for (const auto& t : trips) {
            if (t.pickup_t < 0 || t.n_pass < 1) throw ValidationError("invalid trip " + std::to_string(raw(t.id)));
            if (raw(t.id) < 0) throw ValidationError("trip ids must be nonnegative");
            if (!ids.insert(t.id).second) throw ValidationError("duplicate trip id " + std::to_string(raw(t.id)));
            network->index_of(t.origin_node);
            network->index_of(t.dest_node);
        }
    }
};

}  // namespace fleetsim
