#include <gtest/gtest.h>

#include <sstream>

#include "errw/graph.hpp"
#include "oracles.hpp"

using namespace errw;

TEST(Graph, UndirectedPairsCanonicalize) {
    const std::vector<Edge> pairs{{0, 1}, {1, 0}};
    EXPECT_EQ(Graph::from_edge_list(pairs, 2, GraphMode::undirected).num_edges(), 1u);
    EXPECT_EQ(Graph::from_edge_list(pairs, 2, GraphMode::directed).num_edges(), 2u);
}

TEST(Graph, ConstructionErrors) {
    EXPECT_THROW(Graph(0, GraphMode::undirected), InvalidArgument);
    const std::vector<Edge> out_of_range{{0, 5}};
    EXPECT_THROW(Graph::from_edge_list(out_of_range, 3, GraphMode::undirected), InvalidArgument);
    const std::vector<Edge> loop{{1, 1}};
    EXPECT_THROW(Graph::from_edge_list(loop, 3, GraphMode::undirected), InvalidArgument);
}

TEST(Graph, NeighborKinds) {
    Graph g(3, GraphMode::directed);
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    EXPECT_EQ(g.neighbors(1, NeighborKind::in), (std::vector<Node>{0}));
    EXPECT_EQ(g.neighbors(1, NeighborKind::out), (std::vector<Node>{2}));
    EXPECT_EQ(g.neighbors(1, NeighborKind::both), (std::vector<Node>{0, 2}));
    EXPECT_EQ(oracle::cycle(4).neighbors(0, NeighborKind::out), (std::vector<Node>{1, 3}));
    EXPECT_THROW(g.neighbors(7, NeighborKind::out), InvalidArgument);
}

TEST(Graph, UndirectedMembershipIsSymmetric) {
    Graph g(3, GraphMode::undirected);
    g.add_edge(2, 0);
    EXPECT_TRUE(g.has_edge(0, 2));
    EXPECT_TRUE(g.has_edge(2, 0));
    EXPECT_FALSE(g.add_edge(0, 2));
    EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 2}}));
}

TEST(Graph, AddThenRemoveRestores) {
    Rng rng(4);
    Graph g = oracle::random_connected(9, 0.3, rng);
    const Graph before = g;
    for (Node i = 0; i < 9; ++i)
        for (Node j = i + 1; j < 9; ++j) {
            if (g.has_edge(i, j)) continue;
            g.add_edge(i, j);
            g.remove_edge(j, i);
            EXPECT_EQ(g, before);
        }
}

TEST(Graph, ShortestPathDistances) {
    EXPECT_EQ(shortest_path_distance(oracle::path(3), 0, 2), 2u);
    Graph d(2, GraphMode::directed);
    d.add_edge(0, 1);
    EXPECT_FALSE(shortest_path_distance(d, 1, 0).has_value());
    EXPECT_EQ(shortest_path_distance(oracle::cycle(5), 0, 3), 2u);
}

TEST(Graph, StronglyConnectedComponents) {
    Graph c3(3, GraphMode::directed);
    c3.add_edge(0, 1);
    c3.add_edge(1, 2);
    c3.add_edge(2, 0);
    EXPECT_EQ(strongly_connected_components(c3).count(), 1u);

    Graph two(3, GraphMode::directed);
    two.add_edge(0, 1);
    two.add_edge(1, 0);
    const auto scc = strongly_connected_components(two);
    ASSERT_EQ(scc.count(), 2u);
    EXPECT_EQ(scc.components[0], (std::vector<Node>{0, 1}));
    EXPECT_EQ(scc.components[1], (std::vector<Node>{2}));
}

TEST(Graph, SccMatchesReachabilityClosure) {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const Graph g = oracle::random_digraph(8, 0.18, rng);
        const auto scc = strongly_connected_components(g);
        const auto reach = oracle::reachability(g);
        for (Node a = 0; a < 8; ++a)
            for (Node b = 0; b < 8; ++b) EXPECT_EQ(scc.same(a, b), reach[a][b] && reach[b][a]);
    }
}

TEST(Graph, SccStableUnderRelabeling) {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = oracle::random_digraph(9, 0.2, rng);
        std::vector<Node> perm(9);
        for (Node i = 0; i < 9; ++i) perm[i] = i;
        for (std::size_t i = 8; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        Graph h(9, GraphMode::directed);
        for (const Edge& e : g.edges()) h.add_edge(perm[e.u], perm[e.v]);
        const auto a = strongly_connected_components(g), b = strongly_connected_components(h);
        ASSERT_EQ(a.count(), b.count());
        for (Node x = 0; x < 9; ++x)
            for (Node y = 0; y < 9; ++y) EXPECT_EQ(a.same(x, y), b.same(perm[x], perm[y]));
    }
}

TEST(Graph, BridgesAndCycles) {
    const Graph tree = oracle::path(5);
    for (const Edge& e : tree.edges()) EXPECT_FALSE(removal_preserves_connectivity(tree, e));
    const Graph c4 = oracle::cycle(4);
    for (const Edge& e : c4.edges()) EXPECT_TRUE(removal_preserves_connectivity(c4, e));
    EXPECT_THROW(removal_preserves_connectivity(c4, Edge{0, 2}), InvalidArgument);
}

TEST(Graph, ConnectivityPredicateMatchesRemoveAndBfs) {
    Rng rng(5);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 3 + rng.below(10);
        const Graph g = oracle::random_connected(n, 0.2, rng);
        for (const Edge& e : g.edges()) {
            Graph h = g;
            h.remove_edge(e.u, e.v);
            EXPECT_EQ(removal_preserves_connectivity(g, e), oracle::component_count(h) == 1);
        }
    }
}

TEST(Graph, SccPredicate) {
    Graph two(2, GraphMode::directed);
    two.add_edge(0, 1);
    two.add_edge(1, 0);
    EXPECT_FALSE(removal_preserves_scc(two, {0, 1}));

    Graph cross(4, GraphMode::directed);
    cross.add_edge(0, 1);
    cross.add_edge(1, 0);
    cross.add_edge(2, 3);
    cross.add_edge(3, 2);
    cross.add_edge(1, 2);
    EXPECT_TRUE(removal_preserves_scc(cross, {1, 2}));

    // Two parallel routes 0->1->3 and 0->2->3, closed by 3->0.
    Graph par(4, GraphMode::directed);
    for (Edge e : {Edge{0, 1}, Edge{1, 3}, Edge{0, 2}, Edge{2, 3}, Edge{3, 0}}) par.add_edge(e.u, e.v);
    par.add_edge(1, 2);
    for (const Edge& e : par.edges()) {
        Graph h = par;
        h.remove_edge(e.u, e.v);
        const bool kept = oracle::same_scc(h, e.u, e.v) || !oracle::same_scc(par, e.u, e.v);
        EXPECT_EQ(removal_preserves_scc(par, e), kept) << e.u << "->" << e.v;
    }
}

TEST(Graph, SccPredicateMatchesOracleOnRandomDigraphs) {
    Rng rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        const Graph g = oracle::random_digraph(7, 0.3, rng);
        for (const Edge& e : g.edges()) {
            Graph h = g;
            h.remove_edge(e.u, e.v);
            EXPECT_EQ(removal_preserves_scc(g, e), oracle::scc_count(h) == oracle::scc_count(g));
        }
    }
}

TEST(Graph, Symmetrize) {
    Graph d(2, GraphMode::directed);
    d.add_edge(0, 1);
    EXPECT_EQ(symmetrize(d).edges(), (std::vector<Edge>{{0, 1}}));
    d.add_edge(1, 0);
    EXPECT_EQ(symmetrize(d).num_edges(), 1u);
    Rng rng(7);
    const Graph g = oracle::random_connected(10, 0.3, rng);
    EXPECT_EQ(symmetrize(oracle::as_symmetric_digraph(g)), g);
}

TEST(Graph, EdgeListRoundTrip) {
    std::istringstream in("# nodes=4 directed=1\n0 1\n# comment\n1 2\n2 2\n1 2\n");
    auto f = read_edge_list(in);
    EXPECT_EQ(f.graph.num_edges(), 2u);
    EXPECT_EQ(f.dropped_self_loops, 1u);
    EXPECT_EQ(f.duplicate_edges, 1u);
    std::ostringstream out;
    write_edge_list(out, f.graph);
    EXPECT_EQ(out.str(), "# nodes=4 directed=1\n0 1\n1 2\n");

    std::istringstream bad("0 1\n");
    EXPECT_THROW(read_edge_list(bad), ParseError);
    std::istringstream range("# nodes=2 directed=0\n0 3\n");
    EXPECT_THROW(read_edge_list(range), ParseError);
}
