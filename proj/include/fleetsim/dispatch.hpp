#pragma once

#include "fleetsim/domain.hpp"
#include "fleetsim/network.hpp"
#include "fleetsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace fleetsim {

/// One vehicle matched to one request, with its routes.
struct Assignment {
    VehicleId vehicle{};
    RequestId request{};
    Path pickup_path;
    Path dropoff_path;  // trivial (no legs) for rebalance requests
};

/// Any dispatch heuristic the engine can drive. Implementations must not
/// reuse a vehicle or a request within one call.
class Dispatcher {
public:
    virtual ~Dispatcher() = default;
    virtual std::vector<Assignment> dispatch(std::span<const Request> waiting, std::span<const Vehicle> vehicles,
                                             PathCache& routes) = 0;
};

/// Requests in service order: ascending (activation_t, id).
inline std::vector<std::size_t> fifo_order(std::span<const Request> waiting) {
    std::vector<std::size_t> order(waiting.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (waiting[a].activation_t != waiting[b].activation_t)
            return waiting[a].activation_t < waiting[b].activation_t;
        return waiting[a].id < waiting[b].id;
    });
    return order;
}

/// Nearest free vehicle with enough capacity, requests taken first come
/// first served. Ties go to the lowest vehicle id.
class GreedyDispatcher final : public Dispatcher {
public:
    explicit GreedyDispatcher(DispatchMetric metric = DispatchMetric::travel_time) : metric_(metric) {}

    std::vector<Assignment> dispatch(std::span<const Request> waiting, std::span<const Vehicle> vehicles,
                                     PathCache& routes) override {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < vehicles.size(); ++i)
            if (vehicles[i].is_free()) pool.push_back(i);
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return vehicles[a].id < vehicles[b].id; });

        std::vector<Assignment> out;
        const auto& net = routes.network();
        for (auto ri : fifo_order(waiting)) {
            if (pool.empty()) break;
            const auto& req = waiting[ri];
            if (!req.is_rebalance && !std::isfinite(routes.travel_time(req.origin_node, req.dest_node))) continue;

            auto best = pool.end();
            double best_cost = std::numeric_limits<double>::infinity();
            for (auto it = pool.begin(); it != pool.end(); ++it) {
                const auto& v = vehicles[*it];
                if (v.capacity < req.n_pass) continue;
                const double travel = routes.travel_time(v.position_node, req.origin_node);
                if (!std::isfinite(travel)) continue;
                const double cost =
                    metric_ == DispatchMetric::travel_time ? travel : net.distance(v.position_node, req.origin_node);
                if (cost < best_cost) {
                    best_cost = cost;
                    best = it;
                }
            }
            if (best == pool.end()) continue;

            const auto& v = vehicles[*best];
            Assignment a;
            a.vehicle = v.id;
            a.request = req.id;
            a.pickup_path = routes.path(v.position_node, req.origin_node);
            a.dropoff_path = req.is_rebalance ? Path{{req.origin_node}, {}, 0.0} : routes.path(req.origin_node, req.dest_node);
            out.push_back(std::move(a));
            pool.erase(best);
        }
        return out;
    }

private:
    DispatchMetric metric_;
};

inline std::vector<Assignment> dispatch_greedy(std::span<const Request> waiting, std::span<const Vehicle> vehicles,
                                               PathCache& routes,
                                               DispatchMetric metric = DispatchMetric::travel_time) {
    return GreedyDispatcher(metric).dispatch(waiting, vehicles, routes);
}

namespace detail {
inline void append_legs(std::vector<Leg>& legs, const Path& path) {
    for (std::size_t i = 0; i < path.leg_times.size(); ++i)
        legs.push_back(Leg{path.node_sequence[i], path.node_sequence[i + 1], path.leg_times[i]});
}
}  // namespace detail

/// Pickup legs then, for real requests, dropoff legs. The pickup happens
/// once the first `pickup_index` legs are done.
inline Itinerary build_itinerary(const Assignment& assignment, bool is_rebalance) {
    Itinerary it;
    it.request = assignment.request;
    it.is_rebalance = is_rebalance;
    detail::append_legs(it.legs, assignment.pickup_path);
    it.pickup_index = it.legs.size();
    if (!is_rebalance) detail::append_legs(it.legs, assignment.dropoff_path);
    return it;
}

}  // namespace fleetsim
