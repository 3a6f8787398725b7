#pragma once

#include "fleetsim/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fleetsim {

/// Simulation time in whole minutes.
using Minutes = std::int64_t;

enum class NodeId : std::int64_t {};
enum class RequestId : std::int64_t {};
enum class VehicleId : std::int64_t {};

constexpr std::int64_t raw(NodeId id) noexcept { return static_cast<std::int64_t>(id); }
constexpr std::int64_t raw(RequestId id) noexcept { return static_cast<std::int64_t>(id); }
constexpr std::int64_t raw(VehicleId id) noexcept { return static_cast<std::int64_t>(id); }

/// Simulation, dispatch and rebalance cadences plus the episode length.
struct SimClock {
    Minutes t = 0;
    Minutes dt_sim = 1;
    Minutes dt_dispatch = 1;
    Minutes dt_rebalance = 60;
    std::int64_t horizon_steps = 1440;

    /// Throws ValidationError unless dt_sim | dt_dispatch | dt_rebalance.
    static SimClock make(Minutes dt_sim, Minutes dt_dispatch, Minutes dt_rebalance,
                         std::int64_t horizon_steps) {
        if (dt_sim <= 0 || dt_dispatch <= 0 || dt_rebalance <= 0)
            throw ValidationError("clock intervals must be positive");
        if (dt_dispatch % dt_sim != 0)
            throw ValidationError("dispatch interval must be an integer multiple of the simulation step");
        if (dt_rebalance % dt_dispatch != 0)
            throw ValidationError("rebalance interval must be an integer multiple of the dispatch interval");
        if (horizon_steps < 0) throw ValidationError("horizon must be nonnegative");
        return SimClock{0, dt_sim, dt_dispatch, dt_rebalance, horizon_steps};
    }

    Minutes horizon_minutes() const noexcept { return horizon_steps * dt_sim; }
    bool at_horizon() const noexcept { return t >= horizon_minutes(); }
    bool dispatch_due() const noexcept { return t % dt_dispatch == 0; }
    bool rebalance_due() const noexcept { return t % dt_rebalance == 0; }
    std::int64_t rebalance_index() const noexcept { return t / dt_rebalance; }
    /// Number of rebalance events in one episode.
    std::int64_t rebalance_events() const noexcept {
        return (horizon_minutes() + dt_rebalance - 1) / dt_rebalance;
    }
};

enum class RequestStatus : std::uint8_t { waiting, assigned, occupying, delivered, failed };

constexpr std::string_view to_string(RequestStatus s) noexcept {
    switch (s) {
        case RequestStatus::waiting: return "waiting";
        case RequestStatus::assigned: return "assigned";
        case RequestStatus::occupying: return "occupying";
        case RequestStatus::delivered: return "delivered";
        case RequestStatus::failed: return "failed";
    }
    return "?";
}

constexpr bool is_legal_transition(RequestStatus from, RequestStatus to) noexcept {
    using S = RequestStatus;
    return (from == S::waiting && to == S::assigned) || (from == S::assigned && to == S::occupying) ||
           (from == S::occupying && to == S::delivered) || (from == S::waiting && to == S::failed);
}

struct Request {
    RequestId id{};
    RequestStatus status = RequestStatus::waiting;
    NodeId origin_node{};
    NodeId dest_node{};
    Minutes activation_t = 0;
    int n_pass = 1;
    Minutes accumulated_wait = 0;
    Minutes max_wait = 30;
    bool is_rebalance = false;
};

/// Phantom request that pulls a free vehicle to `node`.
inline Request make_rebalance_request(RequestId id, NodeId node, Minutes now) {
    Request r;
    r.id = id;
    r.origin_node = node;
    r.dest_node = node;
    r.activation_t = now;
    r.n_pass = 0;
    r.is_rebalance = true;
    return r;
}

inline Request transition_request(Request request, RequestStatus new_status) {
    if (!is_legal_transition(request.status, new_status))
        throw IllegalTransition("illegal request transition " + std::string(to_string(request.status)) +
                                " -> " + std::string(to_string(new_status)));
    request.status = new_status;
    return request;
}

enum class VehicleStatus : std::uint8_t { free, occupied };

struct Leg {
    NodeId from{};
    NodeId to{};
    double remaining = 0.0;  // minutes left on this edge
};

/// Route of a vehicle serving one request.
///
/// Legs before `pickup_index` lead to the request origin; the rest carry the
/// passenger to the destination. A rebalance itinerary has no dropoff legs.
struct Itinerary {
    RequestId request{};
    bool is_rebalance = false;
    std::vector<Leg> legs;
    std::size_t pickup_index = 0;
    std::size_t cursor = 0;
    bool picked_up = false;

    bool finished() const noexcept { return picked_up && cursor >= legs.size(); }
};

struct Vehicle {
    VehicleId id{};
    VehicleStatus status = VehicleStatus::free;
    NodeId position_node{};
    int capacity = 4;
    std::optional<Itinerary> itinerary;

    bool is_free() const noexcept { return status == VehicleStatus::free; }
};

}  // namespace fleetsim
