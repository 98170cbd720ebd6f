#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "errw/error.hpp"
#include "errw/graph.hpp"

namespace errw {

/// Probability measure on a set of distinct nodes.
struct NeighborMeasure {
    std::vector<Node> support;
    std::vector<double> mass;

    void validate() const {
        if (support.size() != mass.size()) throw InvalidArgument("measure: support/mass length mismatch");
        if (support.empty()) throw InvalidArgument("measure: empty support");
        double total = 0.0;
        for (double m : mass) {
            if (!(m >= 0.0)) throw InvalidArgument("measure: negative mass");
            total += m;
        }
        if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("measure: masses do not sum to 1");
        auto sorted = support;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InvalidArgument("measure: repeated support node");
    }
};

/// Self-mass of the neighbour measure. Held at zero: the measure is uniform
/// over neighbours only.
inline constexpr double kNeighborSelfMass = 0.0;

/// Uniform measure over the (in ∪ out) neighbours of v.
inline NeighborMeasure neighbor_measure(const Graph& g, Node v) {
    NeighborMeasure mu;
    mu.support = g.neighbors(v, NeighborKind::both);
    if (mu.support.empty()) throw InvalidArgument("neighbor_measure: node " + std::to_string(v) + " is isolated");
    mu.mass.assign(mu.support.size(), 1.0 / static_cast<double>(mu.support.size()));
    return mu;
}

namespace detail {

/// Min-cost flow by successive shortest paths (Dijkstra with potentials) on
/// the bipartite transport network source → supply → demand → sink.
class TransportSolver {
public:
    /// `cost[i][j]` is the unit cost from supply i to demand j; supplies and
    /// demands must have equal totals.
    static double solve(const std::vector<double>& supply, const std::vector<double>& demand,
                        const std::vector<std::vector<double>>& cost) {
        TransportSolver s(supply, demand, cost);
        return s.run();
    }

private:
    struct Arc {
        std::size_t to;
        double cap;
        double cost;
        std::size_t rev;
    };

    TransportSolver(const std::vector<double>& supply, const std::vector<double>& demand,
                    const std::vector<std::vector<double>>& cost)
        : a_(supply.size()), b_(demand.size()), graph_(a_ + b_ + 2) {
        source_ = a_ + b_;
        sink_ = source_ + 1;
        for (std::size_t i = 0; i < a_; ++i) add_arc(source_, i, supply[i], 0.0);
        for (std::size_t j = 0; j < b_; ++j) add_arc(a_ + j, sink_, demand[j], 0.0);
        double total = 0.0;
        for (double x : supply) total += x;
        for (std::size_t i = 0; i < a_; ++i)
            for (std::size_t j = 0; j < b_; ++j) add_arc(i, a_ + j, total, cost[i][j]);
        remaining_ = total;
        epsilon_ = 1e-12 * std::max(1.0, total);
    }

    void add_arc(std::size_t from, std::size_t to, double cap, double cost) {
        graph_[from].push_back({to, cap, cost, graph_[to].size()});
        graph_[to].push_back({from, 0.0, -cost, graph_[from].size() - 1});
    }

    double run() {
        const std::size_t n = graph_.size();
        std::vector<double> potential(n, 0.0);
        std::vector<double> dist(n);
        std::vector<std::size_t> prev_node(n), prev_arc(n);
        std::vector<char> done(n);
        double total_cost = 0.0;
        constexpr double inf = std::numeric_limits<double>::infinity();
        while (remaining_ > epsilon_) {
            // Dense Dijkstra; the network is small and nearly complete.
            std::fill(dist.begin(), dist.end(), inf);
            std::fill(done.begin(), done.end(), 0);
            dist[source_] = 0.0;
            for (;;) {
                std::size_t x = n;
                double best = inf;
                for (std::size_t v = 0; v < n; ++v)
                    if (!done[v] && dist[v] < best) {
                        best = dist[v];
                        x = v;
                    }
                if (x == n) break;
                done[x] = 1;
                for (std::size_t k = 0; k < graph_[x].size(); ++k) {
                    const Arc& arc = graph_[x][k];
                    if (arc.cap <= epsilon_) continue;
                    const double nd = dist[x] + arc.cost + potential[x] - potential[arc.to];
                    if (nd < dist[arc.to] - 1e-12) {
                        dist[arc.to] = nd;
                        prev_node[arc.to] = x;
                        prev_arc[arc.to] = k;
                    }
                }
            }
            if (dist[sink_] == inf) throw NumericalError("transport: demand cannot be met");
            for (std::size_t v = 0; v < n; ++v)
                if (dist[v] < inf) potential[v] += dist[v];
            double push = remaining_;
            for (std::size_t v = sink_; v != source_; v = prev_node[v])
                push = std::min(push, graph_[prev_node[v]][prev_arc[v]].cap);
            for (std::size_t v = sink_; v != source_; v = prev_node[v]) {
                Arc& arc = graph_[prev_node[v]][prev_arc[v]];
                arc.cap -= push;
                graph_[v][arc.rev].cap += push;
                total_cost += push * arc.cost;
            }
            remaining_ -= push;
        }
        return total_cost;
    }

    std::size_t a_, b_;
    std::vector<std::vector<Arc>> graph_;
    std::size_t source_ = 0, sink_ = 0;
    double remaining_ = 0.0;
    double epsilon_ = 0.0;
};

/// Smallest common scale turning every mass into an integer, or 0 if none is
/// found below the cap.
inline std::uint64_t integer_scale(const std::vector<double>& a, const std::vector<double>& b) {
    constexpr std::uint64_t cap = 1ULL << 40;
    std::uint64_t scale = std::lcm<std::uint64_t>(a.size(), b.size());
    for (int attempt = 0; attempt < 2 && scale <= cap; ++attempt) {
        bool ok = true;
        for (const auto* side : {&a, &b})
            for (double m : *side) {
                const double s = m * static_cast<double>(scale);
                if (std::abs(s - std::round(s)) > 1e-9) ok = false;
            }
        if (ok) return scale;
        scale = std::lcm<std::uint64_t>(scale, 720720ULL);
    }
    return 0;
}

/// W1 under the hop metric of an undirected graph.
inline double wasserstein1_on(const Graph& metric, const NeighborMeasure& mu, const NeighborMeasure& nu) {
    std::vector<std::vector<double>> cost(mu.support.size(), std::vector<double>(nu.support.size()));
    for (std::size_t i = 0; i < mu.support.size(); ++i) {
        const auto dist = bfs_distances(metric, mu.support[i]);
        for (std::size_t j = 0; j < nu.support.size(); ++j) {
            const Hops d = dist.at(nu.support[j]);
            if (d == kUnreachable)
                throw InvalidArgument("wasserstein1: nodes " + std::to_string(mu.support[i]) + " and " +
                                      std::to_string(nu.support[j]) + " are not connected");
            cost[i][j] = static_cast<double>(d);
        }
    }
    const std::uint64_t scale = integer_scale(mu.mass, nu.mass);
    auto scaled = [&](const std::vector<double>& m) {
        std::vector<double> out(m.size());
        for (std::size_t k = 0; k < m.size(); ++k)
            out[k] = scale ? std::round(m[k] * static_cast<double>(scale)) : m[k];
        return out;
    };
    const double raw = TransportSolver::solve(scaled(mu.mass), scaled(nu.mass), cost);
    return scale ? raw / static_cast<double>(scale) : raw;
}

} // namespace detail

/// Exact Wasserstein-1 distance between two measures with the shortest-path hop
/// metric as ground cost. Directed graphs are measured on their symmetrization.
inline double wasserstein1(const Graph& g, const NeighborMeasure& mu, const NeighborMeasure& nu) {
    mu.validate();
    nu.validate();
    if (g.directed()) return detail::wasserstein1_on(symmetrize(g), mu, nu);
    return detail::wasserstein1_on(g, mu, nu);
}

namespace detail {

inline double ollivier_ricci_on(const Graph& g, const Graph& metric, Edge e) {
    const auto d = bfs_distances(metric, e.u)[e.v];
    if (d == kUnreachable || d == 0) throw InvalidArgument("ollivier_ricci: endpoints not connected");
    const double w1 = wasserstein1_on(metric, neighbor_measure(g, e.u), neighbor_measure(g, e.v));
    return 1.0 - w1 / static_cast<double>(d);
}

} // namespace detail

/// κ(u, v) = 1 − W1(μ_u, μ_v) / d(u, v).
inline double ollivier_ricci_edge(const Graph& g, Edge e) {
    if (!g.has_edge(e.u, e.v)) throw InvalidArgument("ollivier_ricci_edge: edge not present");
    if (g.directed()) return detail::ollivier_ricci_on(g, symmetrize(g), e);
    return detail::ollivier_ricci_on(g, g, e);
}

struct EdgeCurvature {
    Edge edge;
    double kappa;
};

struct CurvatureReport {
    std::vector<EdgeCurvature> edge_values;  ///< in g.edges() order

    double at(Edge e) const {
        auto it = std::lower_bound(edge_values.begin(), edge_values.end(), e,
                                   [](const EdgeCurvature& x, const Edge& k) { return x.edge < k; });
        if (it == edge_values.end() || it->edge != e) throw InvalidArgument("no curvature for edge");
        return it->kappa;
    }
};

inline CurvatureReport curvature_all_edges(const Graph& g) {
    const Graph metric = g.directed() ? symmetrize(g) : g;
    CurvatureReport report;
    const auto edges = g.edges();
    report.edge_values.reserve(edges.size());
    // Both orientations of a directed edge share one undirected computation.
    std::map<Edge, double> cache;
    for (const Edge& e : edges) {
        const Edge key = canonical(e);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, detail::ollivier_ricci_on(g, metric, key)).first;
        report.edge_values.push_back({e, it->second});
    }
    return report;
}

} // namespace errw
