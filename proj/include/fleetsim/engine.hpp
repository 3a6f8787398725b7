#pragma once

#include "fleetsim/dispatch.hpp"
#include "fleetsim/domain.hpp"
#include "fleetsim/grid.hpp"
#include "fleetsim/network.hpp"
#include "fleetsim/rebalance.hpp"
#include "fleetsim/rng.hpp"
#include "fleetsim/scenario.hpp"
#include "fleetsim/snap.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

namespace fleetsim {

struct EpisodeMetrics {
    /// Passenger-minutes spent waiting for assignment.
    std::int64_t total_wait_pass_min = 0;
    /// Real requests only, keyed by trip id.
    std::map<RequestId, Minutes> per_request_wait;
    std::int64_t activated_count = 0;
    std::int64_t served_count = 0;  // assigned a vehicle
    std::int64_t failed_count = 0;  // expired, or still waiting at the horizon
    double mean_wait_per_request = 0.0;
    /// Miles driven on pickup and rebalance legs.
    double empty_miles = 0.0;
    std::int64_t rebalance_requests = 0;
    std::int64_t rebalance_cancelled = 0;

    friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

/// Agent-based episode state advanced one simulation step at a time.
///
/// Each step runs, in order: activation of due trips, dispatch of waiting
/// requests (on dispatch minutes), a rebalance event (on rebalance minutes),
/// vehicle movement, wait accrual and expiry, then the clock advances. The
/// step can be split at the rebalance event so an external agent can supply
/// the rebalance set: begin_step(), open_rebalance(), close_rebalance(),
/// finish_step().
class Simulation {
public:
    explicit Simulation(std::shared_ptr<const Scenario> scenario, std::unique_ptr<Dispatcher> dispatcher = nullptr)
        : scenario_(std::move(scenario)),
          clock_(scenario_->clock),
          routes_(scenario_->network),
          snapper_(*scenario_->network, scenario_->grid),
          dispatcher_(dispatcher ? std::move(dispatcher)
                                 : std::make_unique<GreedyDispatcher>(scenario_->dispatch_metric)),
          policy_rng_(derive_seed(scenario_->seed, stream::kPolicy)) {
        scenario_->validate();
        clock_.t = 0;
        vehicles_ = place_fleet(scenario_->fleet_size, *scenario_->network, scenario_->grid,
                                derive_seed(scenario_->seed, stream::kFleet), scenario_->capacity);
        requests_.reserve(scenario_->trips.size());
    }

    const Scenario& scenario() const noexcept { return *scenario_; }
    const SimClock& clock() const noexcept { return clock_; }
    const NodeSnapper& snapper() const noexcept { return snapper_; }
    const std::vector<Vehicle>& vehicles() const noexcept { return vehicles_; }
    const std::vector<Request>& requests() const noexcept { return requests_; }
    bool done() const noexcept { return clock_.at_horizon(); }
    bool in_step() const noexcept { return in_step_; }

    /// Activation and dispatch of the current minute.
    void begin_step() {
        if (clock_.at_horizon()) throw HorizonExceeded("episode already at its horizon");
        if (in_step_) throw Error("begin_step called twice");
        in_step_ = true;
        rebalance_done_ = !clock_.rebalance_due();
        activate();
        if (clock_.dispatch_due()) dispatch_waiting();
    }

    bool rebalance_pending() const noexcept { return in_step_ && !rebalance_done_; }

    /// Cancels stale phantom requests, snapshots the observation and opens a
    /// new observation interval.
    const RebalanceObservation& open_rebalance() {
        if (!rebalance_pending()) throw Error("no rebalance event pending");
        if (!open_obs_) {
            cancel_stale_rebalance();
            auto obs = observe();
            if (clock_.rebalance_index() == 0) obs.R = CountMatrix(scenario_->grid);
            open_obs_ = std::move(obs);
            restart_interval();
        }
        return *open_obs_;
    }

    /// Snapshot taken by the currently open rebalance event.
    const RebalanceObservation& open_observation() const {
        if (!open_obs_) throw Error("no rebalance event open");
        return *open_obs_;
    }

    /// Injects the rebalance set and dispatches it.
    void close_rebalance(const RebalanceSet& targets) {
        if (!open_obs_) throw Error("close_rebalance without open_rebalance");
        inject_rebalance(targets);
        open_obs_.reset();
        rebalance_done_ = true;
    }

    void rebalance(RebalancePolicy& policy) {
        const auto& obs = open_rebalance();
        const auto t = clock_.t;
        const auto& trips = scenario_->trips;
        auto first = std::upper_bound(trips.begin(), trips.end(), t,
                                      [](Minutes v, const TripRecord& r) { return v < r.pickup_t; });
        auto last = std::upper_bound(first, trips.end(), t + clock_.dt_rebalance,
                                     [](Minutes v, const TripRecord& r) { return v < r.pickup_t; });
        const RebalanceContext ctx{obs,
                                   t,
                                   clock_.rebalance_index(),
                                   std::span<const TripRecord>(trips).subspan(static_cast<std::size_t>(first - trips.begin()),
                                                                              static_cast<std::size_t>(last - first)),
                                   *scenario_->network,
                                   scenario_->grid,
                                   snapper_,
                                   policy_rng_};
        close_rebalance(policy.propose(ctx));
    }

    /// Movement, wait accrual, expiry and clock advance. A pending rebalance
    /// event that was never opened is skipped.
    void finish_step() {
        if (!in_step_) throw Error("finish_step without begin_step");
        if (open_obs_) throw Error("rebalance opened but not closed");
        move_vehicles();
        accrue_wait();
        expire();
        clock_.t += clock_.dt_sim;
        in_step_ = false;
    }

    /// One full step; a null policy disables rebalancing.
    void step(RebalancePolicy* policy) {
        begin_step();
        if (policy && rebalance_pending()) rebalance(*policy);
        finish_step();
    }

    /// Current aggregate state. R covers the interval opened at the last
    /// rebalance event.
    RebalanceObservation observe() const {
        RebalanceObservation obs{CountMatrix(scenario_->grid), CountMatrix(scenario_->grid), 0.0};
        for (const auto& v : vehicles_)
            if (v.is_free()) ++obs.V[snapper_.cell_of_node(v.position_node)];
        for (auto idx : interval_seen_) ++obs.R[snapper_.cell_of_node(requests_[idx].origin_node)];
        if (scenario_->observe_rebalance_requests)
            for (const auto& [id, origin] : interval_phantoms_) ++obs.R[snapper_.cell_of_node(origin)];
        const auto horizon = clock_.horizon_minutes();
        obs.t_norm = horizon > 0 ? static_cast<double>(clock_.t) / static_cast<double>(horizon) : 0.0;
        return obs;
    }

    /// Negated passenger-minutes accrued since the previous call.
    double interval_reward() {
        const auto acc = interval_wait_;
        interval_wait_ = 0;
        return -static_cast<double>(acc);
    }

    /// Episode accounting; requests still waiting count as failed with the
    /// wait they accrued so far.
    EpisodeMetrics metrics() const {
        EpisodeMetrics m = metrics_;
        m.activated_count = static_cast<std::int64_t>(requests_.size());
        std::int64_t wait_sum = 0;
        for (const auto& r : requests_) {
            m.per_request_wait.emplace(r.id, r.accumulated_wait);
            m.total_wait_pass_min += static_cast<std::int64_t>(r.n_pass) * r.accumulated_wait;
            wait_sum += r.accumulated_wait;
            switch (r.status) {
                case RequestStatus::waiting:
                case RequestStatus::failed: ++m.failed_count; break;
                default: ++m.served_count; break;
            }
        }
        m.mean_wait_per_request =
            requests_.empty() ? 0.0 : static_cast<double>(wait_sum) / static_cast<double>(requests_.size());
        return m;
    }

    std::int64_t waiting_count() const noexcept { return static_cast<std::int64_t>(waiting_.size()); }
    std::int64_t free_vehicle_count() const {
        return std::count_if(vehicles_.begin(), vehicles_.end(), [](const Vehicle& v) { return v.is_free(); });
    }

private:
    void activate() {
        const auto& trips = scenario_->trips;
        while (next_trip_ < trips.size() && trips[next_trip_].pickup_t <= clock_.t) {
            const auto& trip = trips[next_trip_++];
            Request r;
            r.id = trip.id;
            r.origin_node = trip.origin_node;
            r.dest_node = trip.dest_node;
            r.activation_t = trip.pickup_t;
            r.n_pass = trip.n_pass;
            r.max_wait = scenario_->max_wait;
            index_.emplace(r.id, requests_.size());
            waiting_.push_back(requests_.size());
            requests_.push_back(r);
            seen_epoch_.push_back(-1);
        }
        for (auto idx : waiting_) mark_seen(idx);
        if (scenario_->observe_rebalance_requests)
            for (const auto& [id, r] : phantoms_)
                if (r.status == RequestStatus::waiting) interval_phantoms_.emplace(id, r.origin_node);
    }

    void mark_seen(std::size_t idx) {
        if (seen_epoch_[idx] != epoch_) {
            seen_epoch_[idx] = epoch_;
            interval_seen_.push_back(idx);
        }
    }

    void restart_interval() {
        ++epoch_;
        interval_seen_.clear();
        interval_phantoms_.clear();
        for (auto idx : waiting_) mark_seen(idx);
    }

    void dispatch_waiting() {
        if (waiting_.empty()) return;
        std::vector<Request> batch;
        batch.reserve(waiting_.size());
        for (auto idx : waiting_) batch.push_back(requests_[idx]);
        const auto assignments = dispatcher_->dispatch(batch, vehicles_, routes_);
        if (assignments.empty()) return;
        for (const auto& a : assignments) apply(a);
        std::erase_if(waiting_, [&](std::size_t idx) { return requests_[idx].status != RequestStatus::waiting; });
    }

    void cancel_stale_rebalance() {
        std::erase_if(phantoms_, [&](const auto& kv) {
            if (kv.second.status != RequestStatus::waiting) return false;
            ++metrics_.rebalance_cancelled;
            return true;
        });
    }

    void inject_rebalance(const RebalanceSet& targets) {
        if (targets.empty()) return;
        auto fresh = to_rebalance_requests(targets, clock_.t, phantom_serial_);
        phantom_serial_ += static_cast<std::int64_t>(fresh.size());
        metrics_.rebalance_requests += static_cast<std::int64_t>(fresh.size());
        for (const auto& r : fresh) {
            scenario_->network->index_of(r.origin_node);
            phantoms_.emplace(r.id, r);
        }
        const auto assignments = dispatcher_->dispatch(fresh, vehicles_, routes_);
        for (const auto& a : assignments) apply(a);
    }

    Request& request(RequestId id) {
        if (raw(id) < 0) return phantoms_.at(id);
        return requests_.at(index_.at(id));
    }

    Vehicle& vehicle(VehicleId id) {
        auto it = std::lower_bound(vehicles_.begin(), vehicles_.end(), id,
                                   [](const Vehicle& v, VehicleId key) { return v.id < key; });
        if (it == vehicles_.end() || it->id != id) throw ValidationError("dispatcher returned an unknown vehicle");
        return *it;
    }

    void apply(const Assignment& a) {
        auto& v = vehicle(a.vehicle);
        auto& r = request(a.request);
        if (!v.is_free()) throw ValidationError("dispatcher assigned a busy vehicle");
        r = transition_request(r, RequestStatus::assigned);
        v.itinerary = build_itinerary(a, r.is_rebalance);
        v.status = VehicleStatus::occupied;
        settle(v);
    }

    /// Applies the pickup and completion events due at the itinerary cursor.
    void settle(Vehicle& v) {
        auto& it = *v.itinerary;
        if (!it.picked_up && it.cursor == it.pickup_index) {
            auto& r = request(it.request);
            r = transition_request(r, RequestStatus::occupying);
            it.picked_up = true;
        }
        if (it.finished()) {
            const auto id = it.request;
            auto& r = request(id);
            r = transition_request(r, RequestStatus::delivered);
            if (r.is_rebalance) phantoms_.erase(id);
            v.itinerary.reset();
            v.status = VehicleStatus::free;
        }
    }

    void move_vehicles() {
        const auto& net = *scenario_->network;
        for (auto& v : vehicles_) {
            if (!v.itinerary) continue;
            double budget = static_cast<double>(clock_.dt_sim);
            while (v.itinerary && budget > 0.0) {
                auto& it = *v.itinerary;
                auto& leg = it.legs[it.cursor];
                if (leg.remaining <= budget) {
                    budget -= leg.remaining;
                    leg.remaining = 0.0;
                    v.position_node = leg.to;
                    if (!it.picked_up || it.is_rebalance) metrics_.empty_miles += net.distance(leg.from, leg.to);
                    ++it.cursor;
                    settle(v);
                } else {
                    leg.remaining -= budget;
                    budget = 0.0;
                }
            }
        }
    }

    void accrue_wait() {
        for (auto idx : waiting_) {
            auto& r = requests_[idx];
            const Minutes inc = std::min(clock_.dt_sim, r.max_wait - r.accumulated_wait);
            r.accumulated_wait += inc;
            interval_wait_ += static_cast<std::int64_t>(r.n_pass) * inc;
        }
    }

    void expire() {
        std::erase_if(waiting_, [&](std::size_t idx) {
            auto& r = requests_[idx];
            if (r.accumulated_wait < r.max_wait) return false;
            r = transition_request(r, RequestStatus::failed);
            return true;
        });
    }

    std::shared_ptr<const Scenario> scenario_;
    SimClock clock_;
    PathCache routes_;
    NodeSnapper snapper_;
    std::unique_ptr<Dispatcher> dispatcher_;
    Rng policy_rng_;

    std::vector<Vehicle> vehicles_;  // ascending id
    std::vector<Request> requests_;  // activated real requests, activation order
    std::unordered_map<RequestId, std::size_t> index_;
    std::vector<std::size_t> waiting_;  // FIFO
    std::map<RequestId, Request> phantoms_;  // live rebalance requests
    std::int64_t phantom_serial_ = 0;
    std::size_t next_trip_ = 0;

    std::vector<std::int64_t> seen_epoch_;
    std::vector<std::size_t> interval_seen_;
    std::map<RequestId, NodeId> interval_phantoms_;
    std::int64_t epoch_ = 0;
    std::int64_t interval_wait_ = 0;

    bool in_step_ = false;
    bool rebalance_done_ = true;
    std::optional<RebalanceObservation> open_obs_;
    EpisodeMetrics metrics_;
};

struct EpisodeResult {
    EpisodeMetrics metrics;
    /// One entry per rebalance interval; sums to -total_wait_pass_min.
    std::vector<double> rewards;
};

/// Runs a whole episode. A null policy disables rebalance events entirely.
inline EpisodeResult run_episode(std::shared_ptr<const Scenario> scenario, RebalancePolicy* policy,
                                 std::unique_ptr<Dispatcher> dispatcher = nullptr) {
    Simulation sim(std::move(scenario), std::move(dispatcher));
    EpisodeResult out;
    while (!sim.done()) {
        if (sim.clock().rebalance_due() && sim.clock().t > 0) out.rewards.push_back(sim.interval_reward());
        sim.step(policy);
    }
    out.rewards.push_back(sim.interval_reward());
    out.metrics = sim.metrics();
    return out;
}

inline EpisodeResult run_episode(std::shared_ptr<const Scenario> scenario, RebalancePolicy& policy) {
    return run_episode(std::move(scenario), &policy);
}

}  // namespace fleetsim
