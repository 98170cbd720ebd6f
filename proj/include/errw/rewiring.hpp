#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errw/curvature.hpp"
#include "errw/error.hpp"
#include "errw/graph.hpp"
#include "errw/resistance.hpp"

namespace errw {

enum class Strategy {
    none,
    resistance_add_remove,
    resistance_hop_add_remove,
    resistance_add_only,
    resistance_hop_add_only,
    curvature_add_remove,
};

inline constexpr std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::none: return "none";
    case Strategy::resistance_add_remove: return "resistance_add_remove";
    case Strategy::resistance_hop_add_remove: return "resistance_hop_add_remove";
    case Strategy::resistance_add_only: return "resistance_add_only";
    case Strategy::resistance_hop_add_only: return "resistance_hop_add_only";
    case Strategy::curvature_add_remove: return "curvature_add_remove";
    }
    return "none";
}

inline Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::none, Strategy::resistance_add_remove, Strategy::resistance_hop_add_remove,
                       Strategy::resistance_add_only, Strategy::resistance_hop_add_only,
                       Strategy::curvature_add_remove})
        if (to_string(s) == name) return s;
    throw InvalidArgument("unknown rewiring strategy '" + std::string(name) + "'");
}

inline bool removes_edges(Strategy s) {
    return s == Strategy::resistance_add_remove || s == Strategy::resistance_hop_add_remove ||
           s == Strategy::curvature_add_remove;
}

inline bool uses_hop_scores(Strategy s) {
    return s == Strategy::resistance_hop_add_remove || s == Strategy::resistance_hop_add_only;
}

struct RewiringConfig {
    Strategy strategy = Strategy::resistance_add_remove;
    double budget_fraction = 0.0;
    std::uint64_t seed = 0;  // reserved; every strategy is deterministic

    void validate() const {
        if (!(budget_fraction >= 0.0 && budget_fraction <= 1.0))
            throw InvalidArgument("budget fraction must lie in [0, 1]");
    }
};

enum class EditAction { add, add_pair, remove, skip };

inline constexpr std::string_view to_string(EditAction a) {
    switch (a) {
    case EditAction::add: return "add";
    case EditAction::add_pair: return "add_pair";
    case EditAction::remove: return "remove";
    case EditAction::skip: return "skip";
    }
    return "skip";
}

inline EditAction parse_edit_action(std::string_view s) {
    for (EditAction a : {EditAction::add, EditAction::add_pair, EditAction::remove, EditAction::skip})
        if (to_string(a) == s) return a;
    throw ParseError("unknown edit action '" + std::string(s) + "'");
}

struct EditRecord {
    std::size_t t = 0;
    EditAction action = EditAction::skip;
    std::vector<Edge> edges;
    double score = 0.0;
    std::string reason;

    friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

struct RewiringState {
    explicit RewiringState(Graph g) : graph(std::move(g)) {}

    Graph graph;
    std::vector<EditRecord> edits;
    std::size_t budget = 0;
    std::size_t added_count = 0;
    std::size_t removed_count = 0;
    std::size_t iterations = 0;
    std::string termination;
    std::optional<std::string> error;  ///< set when a numerical failure cut the run short
};

/// B = floor(r · E₀). The small slack absorbs binary representation error in r.
inline std::size_t rewiring_budget(double fraction, std::size_t initial_edges) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(initial_edges) + 1e-9));
}

/// Scores closer than this (relative) are ties and fall back to node order.
inline constexpr double kTieTolerance = 1e-9;

inline bool score_tie(double a, double b) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= kTieTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

struct AdditionPlan {
    Edge target{};        ///< argmax pair
    double score = 0.0;   ///< its score
    std::vector<Edge> edges;  ///< empty: nothing valid to add
    std::string reason;

    bool none() const noexcept { return edges.empty(); }
};

/// Picks the maximal-score admissible pair (lexicographically first among
/// ties). If it is not an edge the plan is that edge. Otherwise two edges link
/// each endpoint to the other's neighbourhood; among valid (n_u, n_v) the
/// smallest score(u*, n_v) + score(v*, n_u) wins, then node order.
inline AdditionPlan select_addition(const Graph& g, const PairValues& scores) {
    if (scores.empty()) throw InvalidArgument("select_addition: empty admissible set");
    std::optional<Edge> best;
    double best_score = 0.0;
    scores.for_each([&](Node i, Node j, double v) {
        if (!g.directed() && i > j) return;
        if (!best || (v > best_score && !score_tie(v, best_score))) {
            best = Edge{i, j};
            best_score = v;
        }
    });
    if (!best) throw InvalidArgument("select_addition: empty admissible set");

    AdditionPlan plan;
    plan.target = *best;
    plan.score = best_score;
    const Node u = best->u, v = best->v;
    if (!g.has_edge(u, v)) {
        plan.edges.push_back(*best);
        plan.reason = "max-score pair is not an edge";
        return plan;
    }

    const auto nu = g.neighbors(u, NeighborKind::both);
    const auto nv = g.neighbors(v, NeighborKind::both);
    auto pair_score = [&](Node a, Node b) {
        auto s = scores.get(a, b);
        return s ? *s : std::numeric_limits<double>::infinity();
    };
    std::optional<std::pair<Edge, Edge>> chosen;
    double chosen_score = 0.0;
    for (Node n_u : nu) {
        for (Node n_v : nv) {
            if (n_v == u || n_u == v) continue;
            Edge e1{u, n_v}, e2{v, n_u};
            if (g.has_edge(e1.u, e1.v) || g.has_edge(e2.u, e2.v)) continue;
            if (!g.directed()) {
                e1 = canonical(e1);
                e2 = canonical(e2);
            }
            if (e1 == e2) continue;
            const double s = pair_score(u, n_v) + pair_score(v, n_u);
            if (!chosen || (s < chosen_score && !score_tie(s, chosen_score))) {
                chosen = std::make_pair(e1, e2);
                chosen_score = s;
            }
        }
    }
    if (!chosen) {
        plan.reason = "max-score pair is an edge and no neighbourhood bridge is available";
        return plan;
    }
    plan.edges = {chosen->first, chosen->second};
    plan.reason = "max-score pair is an edge; bridging neighbourhoods";
    return plan;
}

struct ScoredEdge {
    Edge edge;
    double score;
};

struct RemovalChoice {
    Edge edge;
    double score;
    bool cross_component;  ///< endpoints in different SCCs (directed only)
};

/// Scans `candidates` by score (ascending, or descending when `highest_first`),
/// node order within ties, and returns the first edge whose removal keeps the
/// graph connected (undirected) or its SCC intact (directed).
inline std::optional<RemovalChoice> first_removable(const Graph& g, std::vector<ScoredEdge> candidates,
                                                    bool highest_first = false) {
    std::stable_sort(candidates.begin(), candidates.end(), [&](const ScoredEdge& a, const ScoredEdge& b) {
        if (a.score != b.score) return highest_first ? a.score > b.score : a.score < b.score;
        return a.edge < b.edge;
    });
    std::size_t start = 0;
    while (start < candidates.size()) {
        std::size_t stop = start + 1;
        while (stop < candidates.size() && score_tie(candidates[stop].score, candidates[start].score)) ++stop;
        std::sort(candidates.begin() + static_cast<std::ptrdiff_t>(start),
                  candidates.begin() + static_cast<std::ptrdiff_t>(stop),
                  [](const ScoredEdge& a, const ScoredEdge& b) { return a.edge < b.edge; });
        for (std::size_t k = start; k < stop; ++k) {
            const Edge e = candidates[k].edge;
            if (!removal_preserves_structure(g, e)) continue;
            bool cross = false;
            if (g.directed()) cross = !detail::reachable_without(g, e.v, e.u, Edge{kUnreachable, kUnreachable});
            return RemovalChoice{e, candidates[k].score, cross};
        }
        start = stop;
    }
    return std::nullopt;
}

/// Lowest-score removable edge of `g` among those with a score, skipping
/// `exclude`.
inline std::optional<RemovalChoice> select_removal(const Graph& g, const PairValues& scores,
                                                   std::span<const Edge> exclude = {}) {
    std::vector<ScoredEdge> candidates;
    for (const Edge& e : g.edges()) {
        if (std::find(exclude.begin(), exclude.end(), e) != exclude.end()) continue;
        if (auto s = scores.get(e.u, e.v)) candidates.push_back({e, *s});
    }
    return first_removable(g, std::move(candidates));
}

/// Score map used by the resistance strategies on the current graph.
inline PairValues rewiring_scores(const Graph& g, Strategy s) {
    ResistanceReport report = effective_resistance(g);
    if (uses_hop_scores(s)) report = resistance_per_hop(report, g);
    return std::move(report.values);
}

namespace detail {

inline std::string edge_text(Edge e) {
    return "(" + std::to_string(e.u) + ", " + std::to_string(e.v) + ")";
}

template <typename Step>
RewiringState run_budgeted(const Graph& g0, const RewiringConfig& cfg, Step&& step) {
    cfg.validate();
    RewiringState st(g0);
    st.budget = rewiring_budget(cfg.budget_fraction, g0.num_edges());
    std::size_t consecutive_none = 0;
    std::size_t t = 0;
    const std::size_t cap = 2 * st.budget;
    try {
        while (st.added_count < st.budget && t < cap) {
            // step returns false to stop the run.
            if (!step(st, t, consecutive_none)) break;
            ++t;
        }
    } catch (const NumericalError& e) {
        st.error = e.what();
        st.termination = "numerical error";
    }
    st.iterations = t;
    if (st.termination.empty()) {
        if (st.added_count >= st.budget)
            st.termination = "budget reached";
        else if (t >= cap)
            st.termination = "iteration cap";
    }
    return st;
}

/// Logs a skipped iteration; false once two skips happened back to back.
inline bool record_skip(RewiringState& st, std::size_t t, std::size_t& consecutive_none, double score,
                        std::string reason) {
    st.edits.push_back({t, EditAction::skip, {}, score, std::move(reason)});
    if (++consecutive_none >= 2) {
        st.termination = "no valid addition twice in a row";
        return false;
    }
    return true;
}

} // namespace detail

/// Resistance-guided rewiring. Each iteration adds at the max-score admissible
/// pair and, for removing strategies, deletes the min-score edge of the
/// pre-addition edge set whose removal keeps the current graph connected (or
/// its SCC intact). Scores are recomputed from scratch every iteration.
inline RewiringState err_rewire(const Graph& g0, const RewiringConfig& cfg) {
    if (cfg.strategy == Strategy::curvature_add_remove)
        throw InvalidArgument("err_rewire: use curvature_rewire for the curvature strategy");
    if (cfg.strategy == Strategy::none) {
        cfg.validate();
        RewiringState st(g0);
        st.termination = "no rewiring";
        return st;
    }
    const bool removing = removes_edges(cfg.strategy);
    return detail::run_budgeted(g0, cfg, [&](RewiringState& st, std::size_t t, std::size_t& none_count) {
        const PairValues scores = rewiring_scores(st.graph, cfg.strategy);
        if (scores.empty())
            return detail::record_skip(st, t, none_count, 0.0, "empty admissible set");
        AdditionPlan plan = select_addition(st.graph, scores);
        if (plan.none()) return detail::record_skip(st, t, none_count, plan.score, plan.reason);
        none_count = 0;
        if (st.added_count + plan.edges.size() > st.budget) {
            st.termination = "next addition would exceed the budget";
            return false;
        }
        for (const Edge& e : plan.edges) st.graph.add_edge(e.u, e.v);
        st.added_count += plan.edges.size();
        st.edits.push_back({t, plan.edges.size() == 1 ? EditAction::add : EditAction::add_pair, plan.edges,
                            plan.score, plan.reason + " " + detail::edge_text(plan.target)});
        if (!removing) return true;
        if (auto r = select_removal(st.graph, scores, plan.edges)) {
            st.graph.remove_edge(r->edge.u, r->edge.v);
            ++st.removed_count;
            st.edits.push_back({t, EditAction::remove, {r->edge}, r->score,
                                r->cross_component ? "min-score removable edge (cross-SCC)"
                                                   : "min-score removable edge"});
        } else {
            st.edits.push_back({t, EditAction::skip, {}, 0.0, "no removable edge"});
        }
        return true;
    });
}

/// Curvature baseline. Each iteration takes the most negatively curved edge
/// (u, v), adds the absent edge between N(u) and N(v) that most raises κ(u, v)
/// after insertion, then removes the highest-curvature edge that keeps the
/// structure intact.
inline RewiringState curvature_rewire(const Graph& g0, const RewiringConfig& cfg) {
    if (cfg.strategy != Strategy::curvature_add_remove)
        throw InvalidArgument("curvature_rewire: strategy must be curvature_add_remove");
    return detail::run_budgeted(g0, cfg, [&](RewiringState& st, std::size_t t, std::size_t& none_count) {
        Graph& g = st.graph;
        const CurvatureReport curv = curvature_all_edges(g);
        if (curv.edge_values.empty()) return detail::record_skip(st, t, none_count, 0.0, "graph has no edges");
        EdgeCurvature worst = curv.edge_values.front();
        for (const auto& ec : curv.edge_values)
            if (ec.kappa < worst.kappa && !score_tie(ec.kappa, worst.kappa)) worst = ec;

        const Node u = worst.edge.u, v = worst.edge.v;
        std::set<Edge> candidates;
        for (Node i : g.neighbors(u, NeighborKind::both))
            for (Node j : g.neighbors(v, NeighborKind::both)) {
                if (i == j || g.has_edge(i, j)) continue;
                candidates.insert(g.directed() ? Edge{i, j} : canonical(Edge{i, j}));
            }
        std::optional<Edge> best;
        double best_kappa = 0.0;
        for (const Edge& c : candidates) {
            Graph trial = g;
            trial.add_edge(c.u, c.v);
            const double k = ollivier_ricci_edge(trial, worst.edge);
            if (!best || (k > best_kappa && !score_tie(k, best_kappa))) {
                best = c;
                best_kappa = k;
            }
        }
        if (!best)
            return detail::record_skip(st, t, none_count, worst.kappa,
                                       "no absent edge between the neighbourhoods of " +
                                           detail::edge_text(worst.edge));
        none_count = 0;
        if (st.added_count + 1 > st.budget) {
            st.termination = "next addition would exceed the budget";
            return false;
        }
        g.add_edge(best->u, best->v);
        ++st.added_count;
        st.edits.push_back({t, EditAction::add, {*best}, best_kappa,
                            "raises curvature of most negative edge " + detail::edge_text(worst.edge)});

        const CurvatureReport after = curvature_all_edges(g);
        std::vector<ScoredEdge> removable;
        for (const auto& ec : after.edge_values)
            if (ec.edge != *best) removable.push_back({ec.edge, ec.kappa});
        if (auto r = first_removable(g, std::move(removable), /*highest_first=*/true)) {
            g.remove_edge(r->edge.u, r->edge.v);
            ++st.removed_count;
            st.edits.push_back({t, EditAction::remove, {r->edge}, r->score,
                                r->cross_component ? "max-curvature removable edge (cross-SCC)"
                                                   : "max-curvature removable edge"});
        } else {
            st.edits.push_back({t, EditAction::skip, {}, 0.0, "no removable edge"});
        }
        return true;
    });
}

/// Runs whichever procedure the strategy names.
inline RewiringState rewire(const Graph& g0, const RewiringConfig& cfg) {
    if (cfg.strategy == Strategy::curvature_add_remove) return curvature_rewire(g0, cfg);
    return err_rewire(g0, cfg);
}

/// Applies an edit log to the starting graph.
inline Graph replay(const Graph& g0, std::span<const EditRecord> edits) {
    Graph g = g0;
    for (const auto& e : edits) {
        switch (e.action) {
        case EditAction::add:
        case EditAction::add_pair:
            for (const Edge& x : e.edges)
                if (!g.add_edge(x.u, x.v)) throw InvalidArgument("replay: edge " + detail::edge_text(x) + " already present");
            break;
        case EditAction::remove:
            for (const Edge& x : e.edges)
                if (!g.remove_edge(x.u, x.v)) throw InvalidArgument("replay: edge " + detail::edge_text(x) + " absent");
            break;
        case EditAction::skip: break;
        }
    }
    return g;
}

/// Edges added by a run, in canonical form for undirected graphs.
inline std::set<Edge> added_edges(const RewiringState& st) {
    std::set<Edge> out;
    for (const auto& e : st.edits)
        if (e.action == EditAction::add || e.action == EditAction::add_pair)
            for (const Edge& x : e.edges) out.insert(st.graph.directed() ? x : canonical(x));
    return out;
}

} // namespace errw
