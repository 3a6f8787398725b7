#pragma once

#include "fleetsim/domain.hpp"
#include "fleetsim/error.hpp"
#include "fleetsim/grid.hpp"
#include "fleetsim/network.hpp"
#include "fleetsim/rng.hpp"
#include "fleetsim/scenario.hpp"
#include "fleetsim/snap.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace fleetsim {

/// What a rebalancing policy sees at a rebalance boundary.
struct RebalanceObservation {
    CountMatrix V;  // free vehicles per cell now
    CountMatrix R;  // requests seen waiting during the preceding interval
    double t_norm = 0.0;

    friend bool operator==(const RebalanceObservation&, const RebalanceObservation&) = default;
};

/// Target nodes, one per phantom request.
using RebalanceSet = std::vector<NodeId>;

struct RebalanceContext {
    const RebalanceObservation& obs;
    Minutes t;
    std::int64_t index;                  // rebalance event number, t / dt_rebalance
    std::span<const TripRecord> upcoming;  // trips activating in (t, t + dt_rebalance]
    const RoutingNetwork& net;
    const GridSpec& grid;
    const NodeSnapper& snapper;
    Rng& rng;
};

class RebalancePolicy {
public:
    virtual ~RebalancePolicy() = default;
    virtual RebalanceSet propose(const RebalanceContext& ctx) = 0;
};

/// Materialises a rebalance set as phantom requests with ids -1, -2, ...
/// continuing from `next_serial`.
inline std::vector<Request> to_rebalance_requests(const RebalanceSet& targets, Minutes now, std::int64_t next_serial = 0) {
    std::vector<Request> out;
    out.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i)
        out.push_back(make_rebalance_request(RequestId{-(next_serial + static_cast<std::int64_t>(i) + 1)}, targets[i], now));
    return out;
}

// ---------------------------------------------------------------------------
// NR

inline RebalanceSet policy_nr(const RebalanceObservation&) { return {}; }

class NoRebalance final : public RebalancePolicy {
public:
    RebalanceSet propose(const RebalanceContext& ctx) override { return policy_nr(ctx.obs); }
};

// ---------------------------------------------------------------------------
// RR

/// k ~ U{0..free vehicles} phantom requests at uniform random points.
inline RebalanceSet policy_rr(const RebalanceObservation& obs, const RoutingNetwork& net, const GridSpec& grid, Rng& rng) {
    const auto k = rng.uniform_int(0, obs.V.total());
    RebalanceSet out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) {
        const double x = grid.x_min + rng.uniform01() * (grid.x_max - grid.x_min);
        const double y = grid.y_min + rng.uniform01() * (grid.y_max - grid.y_min);
        out.push_back(nearest_node(net, x, y));
    }
    return out;
}

class RandomRebalance final : public RebalancePolicy {
public:
    RebalanceSet propose(const RebalanceContext& ctx) override { return policy_rr(ctx.obs, ctx.net, ctx.grid, ctx.rng); }
};

// ---------------------------------------------------------------------------
// SAR*

/// One phantom request at the origin of every trip in the next interval.
inline RebalanceSet policy_sar_star(std::span<const TripRecord> upcoming) {
    RebalanceSet out;
    out.reserve(upcoming.size());
    for (const auto& t : upcoming) out.push_back(t.origin_node);
    return out;
}

class PerfectForesightRebalance final : public RebalancePolicy {
public:
    RebalanceSet propose(const RebalanceContext& ctx) override { return policy_sar_star(ctx.upcoming); }
};

// ---------------------------------------------------------------------------
// Grid-level rebalance sets

inline CountMatrix aggregate_targets(const RebalanceSet& targets, const NodeSnapper& snapper) {
    CountMatrix m(snapper.grid());
    for (auto node : targets) ++m[snapper.cell_of_node(node)];
    return m;
}

/// G^-1 followed by snapping. The targets come back in random order so no
/// cell is favoured when there are more targets than free vehicles.
inline RebalanceSet counts_to_targets(const CountMatrix& counts, const NodeSnapper& snapper, Rng& rng) {
    RebalanceSet out;
    for (const auto& p : disaggregate(snapper.grid(), counts, rng)) out.push_back(snapper.snap(p));
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
    return out;
}

/// Per-step rebalance count matrices recorded from a reference run.
struct SarRecording {
    int n_x = 0;
    int n_y = 0;
    std::int64_t trip_total = 0;
    std::uint64_t seed = 0;
    std::vector<CountMatrix> steps;

    friend bool operator==(const SarRecording&, const SarRecording&) = default;
};

/// JSON lines: a header object, then {"index": k, "counts": [...]} per step.
inline void write_recording(std::ostream& out, const SarRecording& rec) {
    nlohmann::ordered_json head;
    head["kind"] = "sar_recording";
    head["n_x"] = rec.n_x;
    head["n_y"] = rec.n_y;
    head["trip_total"] = rec.trip_total;
    head["seed"] = rec.seed;
    out << head.dump() << '\n';
    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
        nlohmann::ordered_json row;
        row["index"] = k;
        row["counts"] = std::vector<std::int64_t>(rec.steps[k].flat().begin(), rec.steps[k].flat().end());
        out << row.dump() << '\n';
    }
}

inline SarRecording read_recording(std::istream& in) {
    SarRecording rec;
    std::string line;
    bool have_head = false;
    std::size_t expect = 0;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            if (!have_head) {
                if (j.at("kind") != "sar_recording") throw SchemaError("not a rebalance recording");
                rec.n_x = j.at("n_x").get<int>();
                rec.n_y = j.at("n_y").get<int>();
                rec.trip_total = j.at("trip_total").get<std::int64_t>();
                rec.seed = j.at("seed").get<std::uint64_t>();
                have_head = true;
                continue;
            }
            if (j.at("index").get<std::size_t>() != expect++) throw SchemaError("recording steps out of order");
            rec.steps.push_back(CountMatrix::from_flat(rec.n_x, rec.n_y, j.at("counts").get<std::vector<std::int64_t>>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed recording: ") + e.what());
    }
    if (!have_head) throw SchemaError("empty recording");
    return rec;
}

inline SarRecording read_recording_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open recording " + path);
    return read_recording(in);
}

inline void write_recording_file(const std::string& path, const SarRecording& rec) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write recording " + path);
    write_recording(out, rec);
}

/// round(count * scale), halves rounding up.
inline CountMatrix scale_counts(const CountMatrix& counts, double scale) {
    CountMatrix out(counts.n_x(), counts.n_y());
    for (int m = 1; m <= counts.n_x(); ++m)
        for (int n = 1; n <= counts.n_y(); ++n)
            out.at(m, n) = static_cast<std::int64_t>(std::floor(static_cast<double>(counts.at(m, n)) * scale + 0.5));
    return out;
}

/// Replays recorded SAR* matrices, rescaled, as an imperfect forecast.
class TransferredSarRebalance final : public RebalancePolicy {
public:
    TransferredSarRebalance(SarRecording recording, double scale) : recording_(std::move(recording)), scale_(scale) {
        if (!(scale_ >= 0.0) || !std::isfinite(scale_)) throw ValidationError("t-SAR scale must be finite and >= 0");
    }

    const SarRecording& recording() const noexcept { return recording_; }
    double scale() const noexcept { return scale_; }

    CountMatrix counts_for(std::int64_t index) const {
        if (index < 0 || static_cast<std::size_t>(index) >= recording_.steps.size())
            throw MissingRecord("no recorded rebalance matrix for step " + std::to_string(index));
        return scale_counts(recording_.steps[static_cast<std::size_t>(index)], scale_);
    }

    RebalanceSet propose(const RebalanceContext& ctx) override {
        const auto counts = counts_for(ctx.index);
        if (!counts.matches(ctx.grid)) throw ShapeMismatch("recording grid differs from scenario grid");
        return counts_to_targets(counts, ctx.snapper, ctx.rng);
    }

private:
    SarRecording recording_;
    double scale_;
};

// ---------------------------------------------------------------------------
// External actions

/// Converts a real-valued action matrix into integer counts: entries are
/// clamped at zero and rounded half-up; if the total exceeds the free
/// vehicle budget, counts are scaled down by largest-remainder
/// apportionment to exactly the budget.
inline CountMatrix action_to_counts(std::span<const double> action, const GridSpec& grid, std::int64_t budget) {
    if (action.size() != grid.cell_count())
        throw ShapeMismatch("action has " + std::to_string(action.size()) + " entries, grid has " +
                            std::to_string(grid.cell_count()));
    CountMatrix counts(grid);
    std::vector<std::int64_t> rounded(action.size());
    std::int64_t total = 0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        const double a = std::isfinite(action[i]) ? std::max(0.0, action[i]) : 0.0;
        // Anything above the budget gets scaled down anyway.
        rounded[i] = static_cast<std::int64_t>(std::floor(std::min(a, 1e15) + 0.5));
        total += rounded[i];
    }
    budget = std::max<std::int64_t>(budget, 0);
    if (total > budget) {
        std::vector<std::int64_t> floors(rounded.size());
        std::vector<double> rem(rounded.size());
        std::int64_t assigned = 0;
        for (std::size_t i = 0; i < rounded.size(); ++i) {
            const double share = static_cast<double>(rounded[i]) * static_cast<double>(budget) / static_cast<double>(total);
            floors[i] = static_cast<std::int64_t>(std::floor(share));
            rem[i] = share - static_cast<double>(floors[i]);
            assigned += floors[i];
        }
        std::vector<std::size_t> order(rounded.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t k = 0; assigned < budget && k < order.size(); ++k) {
            if (rem[order[k]] <= 0.0) break;
            ++floors[order[k]];
            ++assigned;
        }
        rounded = std::move(floors);
    }
    for (std::size_t i = 0; i < rounded.size(); ++i) counts[grid.cell_at(i)] = rounded[i];
    return counts;
}

inline RebalanceSet action_to_requests(std::span<const double> action, const RebalanceObservation& obs,
                                       const NodeSnapper& snapper, Rng& rng) {
    return counts_to_targets(action_to_counts(action, snapper.grid(), obs.V.total()), snapper, rng);
}

/// Applies one externally supplied action per rebalance event. Events with
/// no queued action rebalance nothing.
class ExternalActionPolicy final : public RebalancePolicy {
public:
    ExternalActionPolicy() = default;
    explicit ExternalActionPolicy(std::vector<std::vector<double>> schedule) : schedule_(std::move(schedule)) {}

    /// Action for the next event only; overrides the schedule.
    void set_next(std::vector<double> action) { next_ = std::move(action); }

    RebalanceSet propose(const RebalanceContext& ctx) override {
        std::vector<double> action;
        if (next_) {
            action = std::move(*next_);
            next_.reset();
        } else if (ctx.index >= 0 && static_cast<std::size_t>(ctx.index) < schedule_.size()) {
            action = schedule_[static_cast<std::size_t>(ctx.index)];
        } else {
            return {};
        }
        return action_to_requests(action, ctx.obs, ctx.snapper, ctx.rng);
    }

private:
    std::vector<std::vector<double>> schedule_;
    std::optional<std::vector<double>> next_;
};

/// One {"action": [...]} object per line, one line per rebalance event.
inline std::vector<std::vector<double>> read_action_schedule(std::istream& in) {
    std::vector<std::vector<double>> out;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            out.push_back(nlohmann::json::parse(line).at("action").get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed action file: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Wraps a policy and keeps the aggregate of every set it proposes.
class RecordingPolicy final : public RebalancePolicy {
public:
    explicit RecordingPolicy(RebalancePolicy& inner) : inner_(&inner) {}

    RebalanceSet propose(const RebalanceContext& ctx) override {
        auto out = inner_->propose(ctx);
        const auto k = static_cast<std::size_t>(ctx.index);
        if (steps_.size() <= k) steps_.resize(k + 1, CountMatrix(ctx.grid));
        steps_[k] = aggregate_targets(out, ctx.snapper);
        return out;
    }

    const std::vector<CountMatrix>& steps() const noexcept { return steps_; }

private:
    RebalancePolicy* inner_;
    std::vector<CountMatrix> steps_;
};

}  // namespace fleetsim
