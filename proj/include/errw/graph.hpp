#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errw/error.hpp"

namespace errw {

using Node = std::uint32_t;
using Hops = std::uint32_t;

/// Distance sentinel for pairs with no connecting path. Never a usable length.
inline constexpr Hops kUnreachable = std::numeric_limits<Hops>::max();

enum class GraphMode { undirected, directed };
enum class NeighborKind { in, out, both };

inline const char* to_string(GraphMode m) {
    return m == GraphMode::directed ? "directed" : "undirected";
}

/// Ordered node pair. Undirected graphs hand out edges with u < v.
struct Edge {
    Node u = 0;
    Node v = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge canonical(Edge e) { return e.u < e.v ? e : Edge{e.v, e.u}; }

/// Simple graph without self-loops or parallel edges.
///
/// Adjacency lists are kept sorted so every traversal, and therefore every
/// argmin/argmax scan built on top of them, visits nodes in ascending order.
class Graph {
public:
    Graph(std::size_t n_nodes, GraphMode mode) : n_(n_nodes), mode_(mode), out_(n_nodes) {
        if (n_nodes == 0) throw InvalidArgument("graph must have at least one node");
        if (n_nodes > std::numeric_limits<Node>::max() / 2)
            throw InvalidArgument("graph too large");
        if (mode == GraphMode::directed) in_.resize(n_nodes);
    }

    /// Builds a graph from a pair list. Duplicates collapse; in undirected mode
    /// (u, v) and (v, u) are the same edge.
    static Graph from_edge_list(std::span<const Edge> pairs, std::size_t n_nodes, GraphMode mode) {
        Graph g(n_nodes, mode);
        for (const Edge& e : pairs) {
            if (e.u >= n_nodes || e.v >= n_nodes)
                throw InvalidArgument("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                      ") out of range for " + std::to_string(n_nodes) + " nodes");
            if (e.u == e.v) throw InvalidArgument("self-loop at node " + std::to_string(e.u));
            g.add_edge(e.u, e.v);
        }
        return g;
    }

    std::size_t num_nodes() const noexcept { return n_; }
    std::size_t num_edges() const noexcept { return keys_.size(); }
    GraphMode mode() const noexcept { return mode_; }
    bool directed() const noexcept { return mode_ == GraphMode::directed; }

    bool has_edge(Node u, Node v) const {
        if (u >= n_ || v >= n_ || u == v) return false;
        return keys_.contains(key(u, v));
    }

    /// Returns false if the edge was already present.
    bool add_edge(Node u, Node v) {
        check_node(u);
        check_node(v);
        if (u == v) throw InvalidArgument("self-loop at node " + std::to_string(u));
        if (!keys_.insert(key(u, v)).second) return false;
        sorted_insert(out_[u], v);
        if (directed())
            sorted_insert(in_[v], u);
        else
            sorted_insert(out_[v], u);
        return true;
    }

    /// Returns false if the edge was absent.
    bool remove_edge(Node u, Node v) {
        if (!has_edge(u, v)) return false;
        keys_.erase(key(u, v));
        sorted_erase(out_[u], v);
        if (directed())
            sorted_erase(in_[v], u);
        else
            sorted_erase(out_[v], u);
        return true;
    }

    const std::vector<Node>& out_neighbors(Node v) const {
        check_node(v);
        return out_[v];
    }

    const std::vector<Node>& in_neighbors(Node v) const {
        check_node(v);
        return directed() ? in_[v] : out_[v];
    }

    std::vector<Node> neighbors(Node v, NeighborKind kind) const {
        check_node(v);
        if (!directed() || kind == NeighborKind::out) return out_[v];
        if (kind == NeighborKind::in) return in_[v];
        std::vector<Node> merged;
        merged.reserve(out_[v].size() + in_[v].size());
        std::set_union(out_[v].begin(), out_[v].end(), in_[v].begin(), in_[v].end(),
                       std::back_inserter(merged));
        return merged;
    }

    std::size_t out_degree(Node v) const { return out_neighbors(v).size(); }
    std::size_t in_degree(Node v) const { return in_neighbors(v).size(); }

    /// All edges in lexicographic order (canonical u < v when undirected).
    std::vector<Edge> edges() const {
        std::vector<Edge> result;
        result.reserve(num_edges());
        for (Node u = 0; u < n_; ++u)
            for (Node v : out_[u])
                if (directed() || u < v) result.push_back({u, v});
        return result;
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.n_ == b.n_ && a.mode_ == b.mode_ && a.out_ == b.out_;
    }

private:
    void check_node(Node v) const {
        if (v >= n_)
            throw InvalidArgument("node " + std::to_string(v) + " out of range for " +
                                  std::to_string(n_) + " nodes");
    }

    std::uint64_t key(Node u, Node v) const {
        if (!directed() && u > v) std::swap(u, v);
        return (static_cast<std::uint64_t>(u) << 32) | v;
    }

    static void sorted_insert(std::vector<Node>& list, Node v) {
        list.insert(std::lower_bound(list.begin(), list.end(), v), v);
    }

    static void sorted_erase(std::vector<Node>& list, Node v) {
        auto it = std::lower_bound(list.begin(), list.end(), v);
        if (it != list.end() && *it == v) list.erase(it);
    }

    std::size_t n_;
    GraphMode mode_;
    std::vector<std::vector<Node>> out_;
    std::vector<std::vector<Node>> in_;  // directed mode only
    std::unordered_set<std::uint64_t> keys_;
};

/// Partition of the nodes into strongly connected (or, for undirected graphs,
/// connected) components. Components are numbered by their smallest node.
struct SccDecomposition {
    std::vector<std::size_t> component_id;
    std::vector<std::vector<Node>> components;
    std::set<std::pair<std::size_t, std::size_t>> condensation_edges;

    std::size_t count() const noexcept { return components.size(); }
    bool same(Node a, Node b) const { return component_id.at(a) == component_id.at(b); }
};

/// BFS hop distances from `source`, following edge direction in directed mode.
inline std::vector<Hops> bfs_distances(const Graph& g, Node source) {
    std::vector<Hops> dist(g.num_nodes(), kUnreachable);
    dist.at(source) = 0;
    std::vector<Node> frontier{source};
    std::size_t head = 0;
    while (head < frontier.size()) {
        const Node x = frontier[head++];
        for (Node y : g.out_neighbors(x)) {
            if (dist[y] != kUnreachable) continue;
            dist[y] = dist[x] + 1;
            frontier.push_back(y);
        }
    }
    return dist;
}

inline std::optional<Hops> shortest_path_distance(const Graph& g, Node i, Node j) {
    if (j >= g.num_nodes()) throw InvalidArgument("node out of range");
    const Hops d = bfs_distances(g, i)[j];
    if (d == kUnreachable) return std::nullopt;
    return d;
}

namespace detail {

inline SccDecomposition renumber(const Graph& g, const std::vector<std::size_t>& raw) {
    const std::size_t n = g.num_nodes();
    SccDecomposition out;
    out.component_id.assign(n, 0);
    std::vector<std::size_t> relabel(n, static_cast<std::size_t>(-1));
    for (Node v = 0; v < n; ++v) {
        auto& r = relabel[raw[v]];
        if (r == static_cast<std::size_t>(-1)) {
            r = out.components.size();
            out.components.emplace_back();
        }
        out.component_id[v] = r;
        out.components[r].push_back(v);
    }
    for (const Edge& e : g.edges()) {
        const auto a = out.component_id[e.u];
        const auto b = out.component_id[e.v];
        if (a != b) {
            out.condensation_edges.emplace(a, b);
            if (!g.directed()) out.condensation_edges.emplace(b, a);
        }
    }
    return out;
}

} // namespace detail

/// Connected components, ignoring direction.
inline SccDecomposition connected_components(const Graph& g) {
    const std::size_t n = g.num_nodes();
    std::vector<std::size_t> raw(n, static_cast<std::size_t>(-1));
    std::vector<Node> stack;
    for (Node s = 0; s < n; ++s) {
        if (raw[s] != static_cast<std::size_t>(-1)) continue;
        raw[s] = s;
        stack.push_back(s);
        while (!stack.empty()) {
            const Node x = stack.back();
            stack.pop_back();
            for (Node y : g.neighbors(x, NeighborKind::both)) {
                if (raw[y] == static_cast<std::size_t>(-1)) {
                    raw[y] = s;
                    stack.push_back(y);
                }
            }
        }
    }
    return detail::renumber(g, raw);
}

/// Iterative Tarjan. Undirected graphs get their connected components.
inline SccDecomposition strongly_connected_components(const Graph& g) {
    if (!g.directed()) return connected_components(g);
    const std::size_t n = g.num_nodes();
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(n, unset), low(n, 0), raw(n, unset);
    std::vector<char> on_stack(n, 0);
    std::vector<Node> scc_stack;
    std::vector<std::pair<Node, std::size_t>> call;  // node, next neighbour position
    std::size_t counter = 0;

    for (Node root = 0; root < n; ++root) {
        if (index[root] != unset) continue;
        call.emplace_back(root, 0);
        index[root] = low[root] = counter++;
        scc_stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& [v, pos] = call.back();
            const auto& nbrs = g.out_neighbors(v);
            if (pos < nbrs.size()) {
                const Node w = nbrs[pos++];
                if (index[w] == unset) {
                    index[w] = low[w] = counter++;
                    scc_stack.push_back(w);
                    on_stack[w] = 1;
                    call.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            const Node done = v;
            call.pop_back();
            if (!call.empty()) {
                const Node parent = call.back().first;
                low[parent] = std::min(low[parent], low[done]);
            }
            if (low[done] == index[done]) {
                Node w;
                do {
                    w = scc_stack.back();
                    scc_stack.pop_back();
                    on_stack[w] = 0;
                    raw[w] = done;
                } while (w != done);
            }
        }
    }
    // raw ids are arbitrary representatives; renumber by first appearance,
    // which is ascending smallest-node order.
    return detail::renumber(g, raw);
}

inline bool is_connected(const Graph& g) { return connected_components(g).count() == 1; }

namespace detail {

/// Is `target` reachable from `source` when edge `skip` is ignored?
inline bool reachable_without(const Graph& g, Node source, Node target, Edge skip) {
    std::vector<char> seen(g.num_nodes(), 0);
    std::vector<Node> stack{source};
    seen[source] = 1;
    const bool undirected = !g.directed();
    while (!stack.empty()) {
        const Node x = stack.back();
        stack.pop_back();
        if (x == target) return true;
        for (Node y : g.out_neighbors(x)) {
            if (seen[y]) continue;
            if (x == skip.u && y == skip.v) continue;
            if (undirected && x == skip.v && y == skip.u) continue;
            seen[y] = 1;
            stack.push_back(y);
        }
    }
    return false;
}

} // namespace detail

/// True iff removing `e` does not split the component containing it, i.e. `e`
/// is not a bridge. On a connected graph this is "still connected".
inline bool removal_preserves_connectivity(const Graph& g, Edge e) {
    if (g.directed()) throw InvalidArgument("removal_preserves_connectivity needs an undirected graph");
    if (!g.has_edge(e.u, e.v)) throw InvalidArgument("edge not present");
    return detail::reachable_without(g, e.u, e.v, e);
}

/// True iff removing the directed edge `e` leaves its SCC strongly connected.
/// Edges between different SCCs cannot split an SCC, so they report true.
inline bool removal_preserves_scc(const Graph& g, Edge e) {
    if (!g.directed()) throw InvalidArgument("removal_preserves_scc needs a directed graph");
    if (!g.has_edge(e.u, e.v)) throw InvalidArgument("edge not present");
    // Inside an SCC, u can still reach v iff the component survives: any
    // detour must stay inside the component.
    if (!detail::reachable_without(g, e.v, e.u, Edge{kUnreachable, kUnreachable})) return true;
    return detail::reachable_without(g, e.u, e.v, e);
}

/// Structure-preservation predicate matching the graph's mode.
inline bool removal_preserves_structure(const Graph& g, Edge e) {
    return g.directed() ? removal_preserves_scc(g, e) : removal_preserves_connectivity(g, e);
}

/// Undirected graph on the same nodes with every directed edge made symmetric.
inline Graph symmetrize(const Graph& g) {
    Graph out(g.num_nodes(), GraphMode::undirected);
    for (const Edge& e : g.edges()) out.add_edge(e.u, e.v);
    return out;
}

/// Node-induced subgraph; node k of the result is `nodes[k]`.
inline Graph induced_subgraph(const Graph& g, std::span<const Node> nodes) {
    std::vector<std::size_t> local(g.num_nodes(), static_cast<std::size_t>(-1));
    for (std::size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = k;
    Graph sub(nodes.size(), g.mode());
    for (std::size_t k = 0; k < nodes.size(); ++k)
        for (Node y : g.out_neighbors(nodes[k]))
            if (local[y] != static_cast<std::size_t>(-1))
                sub.add_edge(static_cast<Node>(k), static_cast<Node>(local[y]));
    return sub;
}

// ---------------------------------------------------------------------------
// Edge-list text format
//
//   # nodes=N directed={0|1}
//   u v
//   ...
//
// Further lines starting with '#' are comments.

struct EdgeListFile {
    Graph graph;
    std::size_t dropped_self_loops = 0;
    std::size_t duplicate_edges = 0;
};

inline EdgeListFile read_edge_list(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::size_t> n;
    std::optional<bool> is_directed;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream hdr(line);
        std::string hash, nodes_kv, dir_kv;
        hdr >> hash >> nodes_kv >> dir_kv;
        if (hash != "#" || nodes_kv.rfind("nodes=", 0) != 0 || dir_kv.rfind("directed=", 0) != 0)
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected header '# nodes=N directed={0|1}'");
        try {
            n = std::stoull(nodes_kv.substr(6));
        } catch (const std::exception&) {
            throw ParseError("bad node count in header");
        }
        const std::string d = dir_kv.substr(9);
        if (d != "0" && d != "1") throw ParseError("directed flag must be 0 or 1");
        is_directed = d == "1";
        break;
    }
    if (!n) throw ParseError("missing edge-list header");
    if (*n == 0) throw ParseError("node count must be positive");

    EdgeListFile out{Graph(*n, *is_directed ? GraphMode::directed : GraphMode::undirected)};
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream row(line);
        long long u = -1, v = -1;
        std::string extra;
        if (!(row >> u >> v) || (row >> extra))
            throw ParseError("line " + std::to_string(line_no) + ": expected 'u v'");
        if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= *n || static_cast<std::size_t>(v) >= *n)
            throw ParseError("line " + std::to_string(line_no) + ": node id out of range");
        if (u == v) {
            ++out.dropped_self_loops;
            continue;
        }
        if (!out.graph.add_edge(static_cast<Node>(u), static_cast<Node>(v))) ++out.duplicate_edges;
    }
    return out;
}

inline void write_edge_list(std::ostream& os, const Graph& g) {
    os << "# nodes=" << g.num_nodes() << " directed=" << (g.directed() ? 1 : 0) << '\n';
    for (const Edge& e : g.edges()) os << e.u << ' ' << e.v << '\n';
}

} // namespace errw
