#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "errw/dense_matrix.hpp"
#include "errw/error.hpp"
#include "errw/graph.hpp"
#include "errw/linalg.hpp"

namespace errw {

/// Values attached to ordered node pairs, stored densely with a presence mask.
/// Symmetric quantities store both (i, j) and (j, i).
class PairValues {
public:
    PairValues() = default;
    explicit PairValues(std::size_t n) : n_(n), values_(n * n, 0.0), present_(n * n, 0) {}

    std::size_t num_nodes() const noexcept { return n_; }

    void set(Node i, Node j, double v) {
        const auto k = index(i, j);
        if (!present_[k]) ++count_;
        present_[k] = 1;
        values_[k] = v;
    }

    void erase(Node i, Node j) {
        const auto k = index(i, j);
        if (present_[k]) --count_;
        present_[k] = 0;
    }

    bool contains(Node i, Node j) const { return present_[index(i, j)] != 0; }

    std::optional<double> get(Node i, Node j) const {
        const auto k = index(i, j);
        if (!present_[k]) return std::nullopt;
        return values_[k];
    }

    double at(Node i, Node j) const {
        const auto k = index(i, j);
        if (!present_[k])
            throw InvalidArgument("no value for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        return values_[k];
    }

    /// Number of stored ordered pairs.
    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }

    /// Visits stored pairs in (i, j) lexicographic order.
    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (present_[i * n_ + j]) f(static_cast<Node>(i), static_cast<Node>(j), values_[i * n_ + j]);
    }

private:
    std::size_t index(Node i, Node j) const {
        if (i >= n_ || j >= n_) throw InvalidArgument("pair index out of range");
        return static_cast<std::size_t>(i) * n_ + j;
    }

    std::size_t n_ = 0;
    std::size_t count_ = 0;
    std::vector<double> values_;
    std::vector<char> present_;
};

enum class ResistanceScope { all_pairs, within_component, within_scc };

struct ResistanceReport {
    GraphMode mode = GraphMode::undirected;
    ResistanceScope scope = ResistanceScope::all_pairs;
    PairValues values;
    std::optional<SccDecomposition> scc;
    /// Lyapunov residual ‖L̄Σ + ΣL̄ᵀ − I‖_max per processed SCC (directed only),
    /// indexed like `scc->components`; NaN for SCCs that were skipped.
    std::vector<double> lyapunov_residuals;
};

/// Dense out-Laplacian D − A of the subgraph induced by `nodes` (all nodes when
/// empty). For undirected graphs this is the ordinary Laplacian.
inline DenseMatrix out_laplacian(const Graph& g, std::span<const Node> nodes = {}) {
    std::vector<Node> all;
    if (nodes.empty()) {
        all.resize(g.num_nodes());
        for (Node v = 0; v < g.num_nodes(); ++v) all[v] = v;
        nodes = all;
    }
    std::vector<std::size_t> local(g.num_nodes(), static_cast<std::size_t>(-1));
    for (std::size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = k;
    DenseMatrix lap(nodes.size(), nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        for (Node y : g.out_neighbors(nodes[k])) {
            const auto j = local[y];
            if (j == static_cast<std::size_t>(-1)) continue;
            lap(k, j) -= 1.0;
            lap(k, k) += 1.0;
        }
    }
    return lap;
}

namespace detail {

inline void fill_from_gram(PairValues& out, std::span<const Node> nodes, const DenseMatrix& x) {
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        for (std::size_t b = a + 1; b < nodes.size(); ++b) {
            const double r = std::max(0.0, x(a, a) + x(b, b) - 2.0 * x(a, b));
            out.set(nodes[a], nodes[b], r);
            out.set(nodes[b], nodes[a], r);
        }
    }
}

inline void undirected_component(const Graph& g, std::span<const Node> nodes, PairValues& out) {
    if (nodes.size() < 2) return;
    const DenseMatrix pinv = laplacian_pseudoinverse(out_laplacian(g, nodes));
    fill_from_gram(out, nodes, pinv);
}

} // namespace detail

/// All-pairs resistance R_ij = L†_ii + L†_jj − 2L†_ij of a connected undirected graph.
inline ResistanceReport effective_resistance_undirected(const Graph& g) {
    if (g.directed()) throw InvalidArgument("effective_resistance_undirected: graph is directed");
    auto cc = connected_components(g);
    if (cc.count() != 1)
        throw InvalidArgument("effective_resistance_undirected: graph has " + std::to_string(cc.count()) +
                              " connected components");
    ResistanceReport report{GraphMode::undirected, ResistanceScope::all_pairs, PairValues(g.num_nodes()),
                            std::nullopt, {}};
    detail::undirected_component(g, cc.components.front(), report.values);
    return report;
}

/// Undirected resistance evaluated separately inside each connected component;
/// pairs in different components are absent.
inline ResistanceReport effective_resistance_per_component(const Graph& g) {
    if (g.directed()) throw InvalidArgument("effective_resistance_per_component: graph is directed");
    ResistanceReport report{GraphMode::undirected, ResistanceScope::within_component,
                            PairValues(g.num_nodes()), connected_components(g), {}};
    for (const auto& comp : report.scc->components) detail::undirected_component(g, comp, report.values);
    return report;
}

/// Directed effective resistance on every SCC with at least two nodes.
///
/// Each SCC's induced out-Laplacian L is projected onto 1⊥ with a Helmert basis
/// Q (L̄ = Q L Qᵀ), the Lyapunov equation L̄Σ + ΣL̄ᵀ = I is solved, and
/// R_ij = (e_i − e_j)ᵀ X (e_i − e_j) with X = 2QᵀΣQ.
inline ResistanceReport effective_resistance_directed(const Graph& g) {
    if (!g.directed()) throw InvalidArgument("effective_resistance_directed: graph is undirected");
    ResistanceReport report{GraphMode::directed, ResistanceScope::within_scc, PairValues(g.num_nodes()),
                            strongly_connected_components(g), {}};
    const auto& comps = report.scc->components;
    report.lyapunov_residuals.assign(comps.size(), std::nan(""));
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto& nodes = comps[c];
        if (nodes.size() < 2) continue;
        const DenseMatrix q = orthonormal_complement_basis(nodes.size());
        const DenseMatrix reduced = matmul_nt(matmul(q, out_laplacian(g, nodes)), q);
        LyapunovSolution sol;
        try {
            sol = lyapunov_solve(reduced);
        } catch (const NumericalError& e) {
            throw NumericalError("SCC " + std::to_string(c) + " (" + std::to_string(nodes.size()) +
                                 " nodes): " + e.what());
        }
        report.lyapunov_residuals[c] = sol.residual;
        DenseMatrix x = matmul_tn(q, matmul(sol.sigma, q));
        x *= 2.0;
        detail::fill_from_gram(report.values, nodes, x);
    }
    return report;
}

/// Dispatches on the graph mode. Undirected graphs are evaluated per connected
/// component so disconnected inputs still yield finite scores.
inline ResistanceReport effective_resistance(const Graph& g) {
    return g.directed() ? effective_resistance_directed(g) : effective_resistance_per_component(g);
}

/// Divides every pair value by its hop distance d(i, j). Pairs with no path are
/// dropped.
inline ResistanceReport resistance_per_hop(const ResistanceReport& report, const Graph& g) {
    if (report.values.num_nodes() != g.num_nodes())
        throw InvalidArgument("resistance_per_hop: report does not match graph");
    ResistanceReport out = report;
    out.values = PairValues(g.num_nodes());
    std::vector<Hops> dist;
    Node current = kUnreachable;
    report.values.for_each([&](Node i, Node j, double r) {
        if (i != current) {
            dist = bfs_distances(g, i);
            current = i;
        }
        const Hops d = dist[j];
        if (d == kUnreachable) return;
        if (d == 0) throw NumericalError("resistance_per_hop: zero distance between distinct nodes");
        out.values.set(i, j, r / static_cast<double>(d));
    });
    return out;
}

/// Pairs eligible for edge addition: every unordered pair (i < j) when
/// undirected, every ordered pair within one SCC when directed.
inline std::vector<Edge> admissible_pairs(const Graph& g) {
    std::vector<Edge> out;
    const auto n = static_cast<Node>(g.num_nodes());
    if (!g.directed()) {
        for (Node i = 0; i < n; ++i)
            for (Node j = i + 1; j < n; ++j) out.push_back({i, j});
        return out;
    }
    const auto scc = strongly_connected_components(g);
    for (Node i = 0; i < n; ++i)
        for (Node j = 0; j < n; ++j)
            if (i != j && scc.same(i, j)) out.push_back({i, j});
    return out;
}

} // namespace errw
