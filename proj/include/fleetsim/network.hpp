#pragma once

#include "fleetsim/csv.hpp"
#include "fleetsim/domain.hpp"
#include "fleetsim/error.hpp"
#include "fleetsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fleetsim {

struct Node {
    NodeId id{};
    double x = 0.0;  // miles
    double y = 0.0;
};

struct Edge {
    NodeId from{};
    NodeId to{};
    double travel_time = 0.0;  // minutes
};

/// Immutable directed routing graph. Nodes are stored sorted by id, so the
/// dense index order coincides with id order.
class RoutingNetwork {
public:
    struct OutEdge {
        std::size_t to;
        double travel_time;
    };

    RoutingNetwork() = default;

    RoutingNetwork(std::vector<Node> nodes, std::vector<Edge> edges) : nodes_(std::move(nodes)), edges_(std::move(edges)) {
        std::sort(nodes_.begin(), nodes_.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (i > 0 && nodes_[i].id == nodes_[i - 1].id)
                throw ValidationError("duplicate node id " + std::to_string(raw(nodes_[i].id)));
            if (!std::isfinite(nodes_[i].x) || !std::isfinite(nodes_[i].y))
                throw ValidationError("non-finite coordinates for node " + std::to_string(raw(nodes_[i].id)));
            index_.emplace(nodes_[i].id, i);
        }
        out_.resize(nodes_.size());
        for (const auto& e : edges_) {
            const auto from = find(e.from);
            const auto to = find(e.to);
            if (!from || !to)
                throw ValidationError("edge " + std::to_string(raw(e.from)) + "->" + std::to_string(raw(e.to)) +
                                      " references an unknown node");
            if (!(e.travel_time > 0.0) || !std::isfinite(e.travel_time))
                throw ValidationError("edge " + std::to_string(raw(e.from)) + "->" + std::to_string(raw(e.to)) +
                                      " has nonpositive travel time");
            out_[*from].push_back(OutEdge{*to, e.travel_time});
        }
        // Adjacency in target-index order keeps relaxation order independent of file order.
        for (auto& adj : out_)
            std::stable_sort(adj.begin(), adj.end(), [](const OutEdge& a, const OutEdge& b) { return a.to < b.to; });
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }

    std::span<const Node> nodes() const noexcept { return nodes_; }
    std::span<const Edge> edges() const noexcept { return edges_; }
    const Node& node_at(std::size_t index) const { return nodes_.at(index); }
    std::span<const OutEdge> out_edges(std::size_t index) const { return out_.at(index); }

    std::optional<std::size_t> find(NodeId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(NodeId id) const {
        if (auto i = find(id)) return *i;
        throw ValidationError("unknown node id " + std::to_string(raw(id)));
    }

    const Node& node(NodeId id) const { return nodes_[index_of(id)]; }

    /// Euclidean distance in miles between two nodes.
    double distance(NodeId a, NodeId b) const {
        const auto& na = node(a);
        const auto& nb = node(b);
        return std::hypot(na.x - nb.x, na.y - nb.y);
    }

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<OutEdge>> out_;
    std::unordered_map<NodeId, std::size_t> index_;
};

struct Path {
    std::vector<NodeId> node_sequence;
    std::vector<double> leg_times;
    double total_time = 0.0;

    bool has_legs() const noexcept { return !leg_times.empty(); }
};

/// Single-source shortest-path tree.
///
/// Among equal-cost predecessors the one with the lowest node id wins, so
/// every reconstructed path is canonical.
struct ShortestPathTree {
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    std::size_t source = 0;
    std::vector<double> dist;
    std::vector<std::size_t> pred;

    bool reachable(std::size_t target) const { return std::isfinite(dist[target]); }
};

inline ShortestPathTree dijkstra(const RoutingNetwork& net, std::size_t source) {
    const auto n = net.node_count();
    ShortestPathTree tree;
    tree.source = source;
    tree.dist.assign(n, std::numeric_limits<double>::infinity());
    tree.pred.assign(n, ShortestPathTree::kNone);
    std::vector<bool> settled(n, false);

    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    tree.dist[source] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (settled[u]) continue;
        settled[u] = true;
        for (const auto& e : net.out_edges(u)) {
            if (settled[e.to]) continue;
            const double nd = d + e.travel_time;
            if (nd < tree.dist[e.to]) {
                tree.dist[e.to] = nd;
                tree.pred[e.to] = u;
                queue.emplace(nd, e.to);
            } else if (nd == tree.dist[e.to] && u < tree.pred[e.to]) {
                tree.pred[e.to] = u;
            }
        }
    }
    return tree;
}

inline Path path_from_tree(const RoutingNetwork& net, const ShortestPathTree& tree, std::size_t target) {
    if (!tree.reachable(target))
        throw Unreachable("no path from node " + std::to_string(raw(net.node_at(tree.source).id)) + " to node " +
                          std::to_string(raw(net.node_at(target).id)));
    std::vector<std::size_t> rev;
    for (auto v = target; v != ShortestPathTree::kNone; v = tree.pred[v]) {
        rev.push_back(v);
        if (v == tree.source) break;
    }
    Path path;
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) path.node_sequence.push_back(net.node_at(*it).id);
    for (std::size_t i = rev.size() - 1; i > 0; --i) {
        const auto from = rev[i];
        const auto to = rev[i - 1];
        double w = std::numeric_limits<double>::infinity();
        for (const auto& e : net.out_edges(from))
            if (e.to == to) w = std::min(w, e.travel_time);
        path.leg_times.push_back(w);
        path.total_time += w;
    }
    return path;
}

inline Path shortest_path(const RoutingNetwork& net, NodeId origin, NodeId dest) {
    const auto o = net.index_of(origin);
    const auto d = net.index_of(dest);
    return path_from_tree(net, dijkstra(net, o), d);
}

/// Lazily filled per-origin shortest-path trees. Not thread-safe: each
/// episode owns its own cache over a shared immutable network.
class PathCache {
public:
    explicit PathCache(std::shared_ptr<const RoutingNetwork> net) : net_(std::move(net)), trees_(net_->node_count()) {}

    const RoutingNetwork& network() const noexcept { return *net_; }

    const ShortestPathTree& tree(std::size_t origin) {
        auto& slot = trees_[origin];
        if (!slot) slot = std::make_unique<ShortestPathTree>(dijkstra(*net_, origin));
        return *slot;
    }

    /// Travel time in minutes, +inf when unreachable.
    double travel_time(NodeId origin, NodeId dest) {
        return tree(net_->index_of(origin)).dist[net_->index_of(dest)];
    }

    Path path(NodeId origin, NodeId dest) {
        return path_from_tree(*net_, tree(net_->index_of(origin)), net_->index_of(dest));
    }

private:
    std::shared_ptr<const RoutingNetwork> net_;
    std::vector<std::unique_ptr<ShortestPathTree>> trees_;
};

/// Node closest to (x, y); ties go to the lowest id.
inline NodeId nearest_node(const RoutingNetwork& net, double x, double y) {
    if (net.empty()) throw ValidationError("nearest_node on an empty network");
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    const auto nodes = net.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double dx = nodes[i].x - x;
        const double dy = nodes[i].y - y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return nodes[best].id;
}

inline RoutingNetwork load_network(std::istream& node_table, std::istream& edge_table) {
    const auto nt = csv::Table::read(node_table, "node table");
    if (nt.header() != std::vector<std::string>{"node_id", "x", "y"})
        throw SchemaError("node table: header must be node_id,x,y");
    std::vector<Node> nodes;
    nodes.reserve(nt.size());
    for (std::size_t r = 0; r < nt.size(); ++r)
        nodes.push_back(Node{NodeId{nt.as_int(r, 0)}, nt.as_double(r, 1), nt.as_double(r, 2)});

    const auto et = csv::Table::read(edge_table, "edge table");
    if (et.header() != std::vector<std::string>{"from", "to", "travel_time_min"})
        throw SchemaError("edge table: header must be from,to,travel_time_min");
    std::vector<Edge> edges;
    edges.reserve(et.size());
    for (std::size_t r = 0; r < et.size(); ++r)
        edges.push_back(Edge{NodeId{et.as_int(r, 0)}, NodeId{et.as_int(r, 1)}, et.as_double(r, 2)});
    return RoutingNetwork(std::move(nodes), std::move(edges));
}

inline RoutingNetwork load_network_files(const std::string& node_path, const std::string& edge_path) {
    std::ifstream nodes(node_path);
    if (!nodes) throw SchemaError("cannot open node file " + node_path);
    std::ifstream edges(edge_path);
    if (!edges) throw SchemaError("cannot open edge file " + edge_path);
    return load_network(nodes, edges);
}

/// rows x cols lattice, 4-neighbour bidirectional edges of spacing/speed
/// minutes. With noise > 0 each directed weight is scaled by an independent
/// factor uniform in [1 - noise, 1 + noise].
inline RoutingNetwork synth_grid_network(int rows, int cols, double spacing, double speed, double noise = 0.0,
                                         std::uint64_t seed = 0) {
    if (rows < 1 || cols < 1) throw ValidationError("lattice needs at least one row and column");
    if (!(spacing > 0.0) || !(speed > 0.0)) throw ValidationError("lattice spacing and speed must be positive");
    if (noise < 0.0 || noise >= 1.0) throw ValidationError("lattice noise must be in [0, 1)");
    std::vector<Node> nodes;
    nodes.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            nodes.push_back(Node{NodeId{static_cast<std::int64_t>(r) * cols + c}, c * spacing, r * spacing});

    Rng rng(seed);
    const double base = spacing / speed;
    auto weight = [&] { return noise > 0.0 ? base * (1.0 + noise * (2.0 * rng.uniform01() - 1.0)) : base; };
    std::vector<Edge> edges;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const NodeId here{static_cast<std::int64_t>(r) * cols + c};
            if (c + 1 < cols) {
                const NodeId right{static_cast<std::int64_t>(r) * cols + c + 1};
                edges.push_back(Edge{here, right, weight()});
                edges.push_back(Edge{right, here, weight()});
            }
            if (r + 1 < rows) {
                const NodeId up{static_cast<std::int64_t>(r + 1) * cols + c};
                edges.push_back(Edge{here, up, weight()});
                edges.push_back(Edge{up, here, weight()});
            }
        }
    }
    return RoutingNetwork(std::move(nodes), std::move(edges));
}

}  // namespace fleetsim
