#pragma once

#include "fleetsim/grid.hpp"
#include "fleetsim/network.hpp"

#include <limits>
#include <vector>

namespace fleetsim {

/// Maps continuous positions onto network nodes without leaving the grid cell.
///
/// A point snaps to the nearest node inside its own cell; cells without any
/// node fall back to the globally nearest node. Keeping snaps in-cell makes
/// aggregate(snap(disaggregate(M))) == M whenever every nonzero cell of M
/// holds at least one node.
class NodeSnapper {
public:
    NodeSnapper(const RoutingNetwork& net, const GridSpec& spec) : net_(&net), spec_(spec), by_cell_(spec.cell_count()) {
        spec_.validate();
        for (std::size_t i = 0; i < net.node_count(); ++i) {
            const auto& node = net.node_at(i);
            if (!spec_.contains(node.x, node.y))
                throw ValidationError("node " + std::to_string(raw(node.id)) + " lies outside the grid bounds");
            by_cell_[spec_.flat_index(cell_of(spec_, node.x, node.y))].push_back(i);
        }
    }

    const GridSpec& grid() const noexcept { return spec_; }

    /// Node indices inside a cell, ascending by id.
    const std::vector<std::size_t>& nodes_in(Cell c) const { return by_cell_.at(spec_.flat_index(c)); }

    NodeId snap(Point p) const {
        const auto& candidates = nodes_in(cell_of(spec_, p));
        if (candidates.empty()) return nearest_node(*net_, p.x, p.y);
        std::size_t best = candidates.front();
        double best_d2 = std::numeric_limits<double>::infinity();
        for (auto i : candidates) {
            const auto& node = net_->node_at(i);
            const double d2 = (node.x - p.x) * (node.x - p.x) + (node.y - p.y) * (node.y - p.y);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        return net_->node_at(best).id;
    }

    Cell cell_of_node(NodeId id) const {
        const auto& node = net_->node(id);
        return cell_of(spec_, node.x, node.y);
    }

private:
    const RoutingNetwork* net_;
    GridSpec spec_;
    std::vector<std::vector<std::size_t>> by_cell_;
};

}  // namespace fleetsim
