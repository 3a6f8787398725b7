#include "fleetsim/config.hpp"
#include "fleetsim/scenario.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace fleetsim;

namespace {

std::vector<RawTrip> raw_from(const std::string& text) {
    std::istringstream in(text);
    return load_raw_trips(in);
}

std::vector<TripRecord> numbered(int n) {
    std::vector<TripRecord> out;
    for (int i = 0; i < n; ++i) out.push_back({RequestId{i}, i, NodeId{0}, NodeId{1}, 1});
    return out;
}

struct Lattice {
    RoutingNetwork net = synth_grid_network(8, 8, 1.0, 0.5);
    GridSpec grid{4, 4, 0.0, 7.0, 0.0, 7.0};
};

}  // namespace

TEST(Preprocess, DropsMissingFields) {
    const auto raw = raw_from("trip_id,pickup_bin_min,origin_node,dest_node\n1,540,3,4\n2,540,3,\n3,,3,4\n4,540,,4\n");
    const auto trips = preprocess(raw, 0);
    ASSERT_EQ(trips.size(), 1u);
    EXPECT_EQ(trips[0].id, RequestId{1});
    EXPECT_EQ(trips[0].n_pass, 1);
}

TEST(Preprocess, DropsStationaryTrips) {
    const auto raw = raw_from(
        "trip_id,pickup_bin_min,dropoff_bin_min,origin_node,dest_node\n"
        "1,540,540,3,3\n2,540,555,3,3\n3,540,540,3,4\n4,540,,3,4\n");
    const auto trips = preprocess(raw, 0);
    std::set<RequestId> ids;
    for (const auto& t : trips) ids.insert(t.id);
    EXPECT_EQ(ids, (std::set<RequestId>{RequestId{2}, RequestId{3}}));
    EXPECT_EQ(trips.size(), 2u);
}

TEST(Preprocess, JittersWithinTheBin) {
    std::string text = "trip_id,pickup_bin_min,origin_node,dest_node\n";
    for (int i = 0; i < 300; ++i) text += std::to_string(i) + ",540,1,2\n";
    const auto raw = raw_from(text);
    const auto a = preprocess(raw, 17);
    std::set<Minutes> seen;
    for (const auto& t : a) {
        EXPECT_GE(t.pickup_t, 540);
        EXPECT_LE(t.pickup_t, 554);
        seen.insert(t.pickup_t);
    }
    EXPECT_EQ(seen.size(), 15u);
    EXPECT_EQ(a, preprocess(raw, 17));
    EXPECT_NE(a, preprocess(raw, 18));
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end(), trip_order));
}

TEST(Preprocess, JitterAppliedOnce) {
    const auto raw = raw_from("trip_id,pickup_bin_min,origin_node,dest_node,n_pass\n1,540,1,2,2\n2,600,2,1,1\n");
    const auto once = preprocess(raw, 5);
    EXPECT_EQ(preprocess(to_raw(once), 99), once);
}

TEST(Preprocess, RejectsBadRows) {
    EXPECT_THROW(preprocess(raw_from("trip_id,pickup_bin_min,origin_node,dest_node\n1,1440,1,2\n"), 0), SchemaError);
    EXPECT_THROW(preprocess(raw_from("trip_id,pickup_bin_min,origin_node,dest_node,n_pass\n1,0,1,2,0\n"), 0),
                 SchemaError);
    EXPECT_THROW(preprocess(raw_from("trip_id,pickup_bin_min,origin_node,dest_node\n1,0,1,2\n1,5,1,2\n"), 0),
                 ValidationError);
    EXPECT_THROW(raw_from("trip_id,origin_node,dest_node\n1,1,2\n"), SchemaError);
    EXPECT_THROW(raw_from("trip_id,pickup_bin_min,origin_node,dest_node\nx,0,1,2\n"), SchemaError);
}

TEST(SampleSubset, Examples) {
    const auto trips = numbered(1000);
    EXPECT_EQ(sample_subset(trips, 1.0, 3), trips);
    EXPECT_EQ(sample_subset(trips, 0.01, 3).size(), 10u);
    EXPECT_EQ(sample_subset(trips, 0.01, 3), sample_subset(trips, 0.01, 3));
    EXPECT_EQ(sample_subset(numbered(7), 0.5, 1).size(), 4u);
    EXPECT_THROW(sample_subset(trips, 0.0, 1), ValidationError);
    EXPECT_THROW(sample_subset(trips, 1.5, 1), ValidationError);
}

TEST(SampleSubset, OrderedSubsetAndUniform) {
    const auto trips = numbered(10);
    std::vector<int> hits(10, 0);
    for (std::uint64_t s = 0; s < 4000; ++s) {
        const auto sub = sample_subset(trips, 0.3, s);
        ASSERT_EQ(sub.size(), 3u);
        EXPECT_TRUE(std::is_sorted(sub.begin(), sub.end(), trip_order));
        for (const auto& t : sub) ++hits[static_cast<std::size_t>(raw(t.id))];
    }
    // Each trip is kept with probability 0.3; 1200 expected, sd about 29.
    for (int h : hits) EXPECT_NEAR(h, 1200, 120);
}

TEST(SynthDemand, AllMassInOneHour) {
    Lattice w;
    DemandSpec d;
    d.hourly_rates[8] = 1.0;
    d.total_trips = 500;
    const auto trips = synth_demand(d, w.net, w.grid, 1);
    EXPECT_EQ(trips.size(), 500u);
    for (const auto& t : trips) {
        EXPECT_GE(t.pickup_t, 480);
        EXPECT_LT(t.pickup_t, 540);
    }
    EXPECT_TRUE(std::is_sorted(trips.begin(), trips.end(), trip_order));
}

TEST(SynthDemand, SingleHotspotOwnsEveryOrigin) {
    Lattice w;
    DemandSpec d;
    d.hourly_rates.fill(1.0);
    d.origins.hotspots.push_back(Hotspot{Cell{3, 2}, 1.0, {}});
    d.destinations.uniform_weight = 1.0;
    d.total_trips = 400;
    const NodeSnapper snap(w.net, w.grid);
    std::set<std::size_t> dest_cells;
    for (const auto& t : synth_demand(d, w.net, w.grid, 2)) {
        EXPECT_EQ(snap.cell_of_node(t.origin_node), (Cell{3, 2}));
        dest_cells.insert(w.grid.flat_index(snap.cell_of_node(t.dest_node)));
    }
    EXPECT_EQ(dest_cells.size(), w.grid.cell_count());
}

TEST(SynthDemand, HourlyHistogramMatchesProfile) {
    Lattice w;
    DemandSpec d;
    for (int h = 0; h < 24; ++h) d.hourly_rates[static_cast<std::size_t>(h)] = 1.0 + (h * 7) % 11;
    d.total_trips = 100000;
    const auto trips = synth_demand(d, w.net, w.grid, 3);
    std::array<double, 24> counts{};
    for (const auto& t : trips) counts[static_cast<std::size_t>(t.pickup_t / 60)] += 1.0;
    double total_rate = 0.0;
    for (double r : d.hourly_rates) total_rate += r;
    for (std::size_t h = 0; h < 24; ++h) {
        const double p = d.hourly_rates[h] / total_rate;
        const double n = static_cast<double>(d.total_trips);
        EXPECT_LE(std::abs(counts[h] - n * p), 3.0 * std::sqrt(n * p * (1.0 - p))) << "hour " << h;
    }
}

TEST(SynthDemand, Degenerate) {
    Lattice w;
    DemandSpec d;
    d.total_trips = 5;
    EXPECT_THROW(synth_demand(d, w.net, w.grid, 0), DegenerateProfile);
    d.hourly_rates[0] = 1.0;
    d.origins.hotspots.push_back(Hotspot{Cell{9, 1}, 1.0, {}});
    EXPECT_THROW(synth_demand(d, w.net, w.grid, 0), ValidationError);
    d.origins.hotspots = {Hotspot{Cell{1, 1}, 0.0, {}}};
    EXPECT_THROW(synth_demand(d, w.net, w.grid, 0), DegenerateProfile);
}

TEST(PlaceFleet, Examples) {
    const auto one = synth_grid_network(1, 1, 1.0, 1.0);
    const auto f1 = place_fleet(1, one, GridSpec{1, 1, 0.0, 1.0, 0.0, 1.0}, 4);
    ASSERT_EQ(f1.size(), 1u);
    EXPECT_EQ(f1[0].position_node, NodeId{0});

    Lattice w;
    const auto a = place_fleet(100, w.net, w.grid, 7);
    ASSERT_EQ(a.size(), 100u);
    for (const auto& v : a) {
        EXPECT_TRUE(v.is_free());
        EXPECT_EQ(v.capacity, 4);
    }
    const auto b = place_fleet(100, w.net, w.grid, 7);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].position_node, b[i].position_node);
    EXPECT_THROW(place_fleet(0, w.net, w.grid, 7), ValidationError);
}

TEST(Config, CanonicalFileMatchesBuiltin) {
    const auto from_file = load_config((testsupport::source_dir() / "configs" / "canonical.cfg").string());
    EXPECT_EQ(from_file, canonical_config());
}

TEST(Config, CanonicalScenarioShape) {
    const auto s = build_scenario(canonical_config(), 0);
    EXPECT_EQ(s->clock.dt_sim, 1);
    EXPECT_EQ(s->clock.dt_dispatch, 1);
    EXPECT_EQ(s->clock.dt_rebalance, 60);
    EXPECT_EQ(s->clock.horizon_steps, 1440);
    EXPECT_EQ(s->clock.rebalance_events(), 24);
    EXPECT_EQ(s->max_wait, 30);
    EXPECT_EQ(s->capacity, 4);
    EXPECT_EQ(s->grid.n_x, 5);
    EXPECT_EQ(s->grid.n_y, 5);
    EXPECT_EQ(s->trips.size(), 300u);
    EXPECT_EQ(s->trips.size() / static_cast<std::size_t>(s->fleet_size), 15u);
}

TEST(Config, ParseErrors) {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
    };
    EXPECT_THROW(parse("fleet_size = many\n"), SchemaError);
    EXPECT_THROW(parse("no_such_key = 1\n"), SchemaError);
    EXPECT_THROW(parse("fleet_size = 1\nfleet_size = 2\n"), SchemaError);
    EXPECT_THROW(parse("node_file = a.csv\n"), SchemaError);
    EXPECT_THROW(parse("demand_profile = 1,2,3\n"), SchemaError);
    EXPECT_THROW(parse("dispatch_metric = manhattan\n"), SchemaError);
    const auto c = parse("# comment\nfleet_size = 7  # trailing\nseed = 3\ndispatch_metric = euclidean\n");
    EXPECT_EQ(c.fleet_size, 7);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.dispatch_metric, DispatchMetric::euclidean);
}

TEST(Config, TripFileScenario) {
    testsupport::TempDir dir("trips");
    {
        std::ofstream(dir.path() / "nodes.csv") << "node_id,x,y\n0,0,0\n1,1,0\n2,2,0\n";
        std::ofstream(dir.path() / "edges.csv") << "from,to,travel_time_min\n0,1,2\n1,0,2\n1,2,2\n2,1,2\n";
        std::ofstream(dir.path() / "trips.csv")
            << "trip_id,pickup_bin_min,origin_node,dest_node\n1,0,0,2\n2,15,2,0\n3,30,1,\n4,45,0,1\n";
        std::ofstream(dir.path() / "s.cfg") << "node_file = nodes.csv\nedge_file = edges.csv\ntrip_file = trips.csv\n"
                                               "grid_nx = 2\ngrid_ny = 1\nfleet_size = 1\nsubsample_fraction = 0.67\n";
    }
    const auto cfg = load_config((dir.path() / "s.cfg").string());
    const auto s = build_scenario(cfg, 4);
    EXPECT_EQ(s->network->node_count(), 3u);
    EXPECT_EQ(s->trips.size(), 2u);
    EXPECT_EQ(build_scenario(cfg, 4)->trips, s->trips);
}
