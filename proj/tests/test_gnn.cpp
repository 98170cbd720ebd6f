#include <gtest/gtest.h>

#include "errw/gnn.hpp"
#include "oracles.hpp"

using namespace errw;

namespace {

DenseMatrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

double max_gap(const DenseMatrix& a, const oracle::Mat& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - b[i][j]));
    return worst;
}

// Two dense clusters joined by one edge; features carry the cluster sign.
struct Toy {
    Graph g{12, GraphMode::undirected};
    DenseMatrix x{12, 3};
    std::vector<int> labels = std::vector<int>(12);
    NodeSplit split;
};

Toy toy_problem() {
    Toy t;
    Rng rng(42);
    for (Node i = 0; i < 12; ++i) {
        t.labels[i] = i < 6 ? 0 : 1;
        for (Node j = i + 1; j < 12; ++j)
            if ((i < 6) == (j < 6)) t.g.add_edge(i, j);
        t.x(i, 0) = i < 6 ? 1.0 : -1.0;
        t.x(i, 1) = 0.1 * rng.normal();
        t.x(i, 2) = 0.1 * rng.normal();
    }
    t.g.add_edge(5, 6);
    const std::string roles = "ttvveettvvee";
    for (char c : roles) t.split.role.push_back(static_cast<Split>(c));
    return t;
}

} // namespace

TEST(Sparse, MultiplyMatchesDense) {
    Rng rng(1);
    const Graph g = oracle::random_connected(9, 0.3, rng);
    const auto ops = build_operators(g);
    const DenseMatrix x = gaussian(9, 4, rng);
    const DenseMatrix a = ops.gcn_norm->to_dense();
    EXPECT_LE(max_abs_diff(ops.gcn_norm->multiply(x), matmul(a, x)), 1e-14);
    EXPECT_LE(max_abs_diff(ops.gcn_norm->multiply_transposed(x), matmul(a.transpose(), x)), 1e-14);
}

TEST(Operators, PathNormalization) {
    const auto ops = build_operators(oracle::path(3));
    const DenseMatrix a = ops.gcn_norm->to_dense();
    EXPECT_NEAR(a(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
    EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(a(0, 2), 0.0);
}

TEST(Operators, DirectedMeanAggregators) {
    Graph g(3, GraphMode::directed);
    g.add_edge(0, 1);
    g.add_edge(0, 2);
    g.add_edge(1, 2);
    const auto ops = build_operators(g);
    EXPECT_FALSE(ops.gcn_norm.has_value());
    const DenseMatrix out = ops.dir_out.to_dense(), in = ops.dir_in.to_dense();
    EXPECT_DOUBLE_EQ(out(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(out(0, 2), 0.5);
    EXPECT_DOUBLE_EQ(in(2, 0), 0.5);
    EXPECT_DOUBLE_EQ(in(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(ops.dir_in.row_sum(0), 0.0);
    EXPECT_DOUBLE_EQ(ops.dir_out.row_sum(2), 0.0);
}

TEST(Forward, GcnMatchesDirectComputation) {
    Rng rng(2);
    for (std::size_t depth : {1u, 2u, 3u, 4u})
        for (bool pn : {false, true}) {
            const Graph g = oracle::random_connected(8, 0.3, rng);
            const DenseMatrix x = gaussian(8, 4, rng);
            const auto p = init_params(ModelKind::gcn, depth, 4, 5, 3, pn, rng);
            const auto out = forward(build_operators(g), p, x);
            EXPECT_LE(max_gap(out.logits, oracle::gcn_forward_direct(g, p, oracle::to_mat(x))), 1e-12);
            EXPECT_EQ(out.embeddings.size(), depth + 1);
        }
}

TEST(Forward, DirGcnMatchesDirectComputation) {
    Rng rng(3);
    for (std::size_t depth : {1u, 2u, 3u, 4u})
        for (bool pn : {false, true}) {
            const Graph g = oracle::random_digraph(8, 0.3, rng);
            const DenseMatrix x = gaussian(8, 4, rng);
            const auto p = init_params(ModelKind::dirgcn, depth, 4, 5, 3, pn, rng);
            const auto out = forward(build_operators(g), p, x);
            EXPECT_LE(max_gap(out.logits, oracle::dirgcn_forward_direct(g, p, oracle::to_mat(x))), 1e-12);
        }
}

TEST(Forward, RejectsShapeMismatch) {
    Rng rng(4);
    const auto p = init_params(ModelKind::gcn, 2, 4, 5, 3, false, rng);
    EXPECT_THROW(forward(build_operators(oracle::path(4)), p, DenseMatrix(4, 3)), InvalidArgument);
    EXPECT_THROW(forward(build_operators(oracle::path(4)), p, DenseMatrix(5, 4)), InvalidArgument);
    EXPECT_THROW(init_params(ModelKind::gcn, 0, 4, 5, 3, false, rng), InvalidArgument);
}

TEST(Forward, PermutationEquivariance) {
    Rng rng(5);
    const Graph g = oracle::random_connected(10, 0.3, rng);
    const DenseMatrix x = gaussian(10, 4, rng);
    std::vector<Node> perm(10);
    for (Node i = 0; i < 10; ++i) perm[i] = (i * 3 + 1) % 10;
    Graph h(10, GraphMode::undirected);
    for (const Edge& e : g.edges()) h.add_edge(perm[e.u], perm[e.v]);
    DenseMatrix px(10, 4);
    for (Node i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 4; ++j) px(perm[i], j) = x(i, j);
    for (bool pn : {false, true}) {
        const auto p = init_params(ModelKind::gcn, 3, 4, 5, 3, pn, rng);
        const DenseMatrix a = forward(build_operators(g), p, x).logits;
        const DenseMatrix b = forward(build_operators(h), p, px).logits;
        for (Node i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a(i, j), b(perm[i], j), 1e-12);
    }
}

TEST(PairNorm, Examples) {
    const DenseMatrix y = pairnorm(DenseMatrix{{1}, {-1}});
    // Pairwise mean squared distance of {1, -1} is 2, so the scale is sqrt 2.
    EXPECT_NEAR(y(0, 0), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(y(1, 0), -1 / std::sqrt(2.0), 1e-15);
    EXPECT_THROW(pairnorm(DenseMatrix{{3, 3}, {3, 3}}), NumericalError);
    EXPECT_THROW(pairnorm(DenseMatrix{{3, 3}}), InvalidArgument);
}

TEST(PairNorm, MatchesPairwiseDefinition) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const DenseMatrix h = gaussian(2 + rng.below(10), 1 + rng.below(5), rng);
        const DenseMatrix y = pairnorm(h);
        EXPECT_LE(max_gap(y, oracle::pairnorm_direct(oracle::to_mat(h))), 1e-12);
        EXPECT_NEAR(oracle::mean_sq_pairwise(y), 1.0, 1e-12);
        for (std::size_t j = 0; j < y.cols(); ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < y.rows(); ++i) mean += y(i, j);
            EXPECT_NEAR(mean, 0.0, 1e-12);
        }
    }
}

TEST(PairNorm, ShiftAndScaleInvariant) {
    Rng rng(7);
    const DenseMatrix h = gaussian(7, 3, rng);
    DenseMatrix shifted = h;
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 3; ++j) shifted(i, j) = 4.0 * h(i, j) + static_cast<double>(j) - 2.0;
    EXPECT_LE(max_abs_diff(pairnorm(h), pairnorm(shifted)), 1e-12);
}

TEST(PairNorm, BackwardMatchesFiniteDifferences) {
    Rng rng(8);
    const DenseMatrix h = gaussian(6, 3, rng), g = gaussian(6, 3, rng);
    const auto fwd = pairnorm_with_scale(h);
    const DenseMatrix analytic = pairnorm_backward(g, fwd.output, fwd.scale);
    const double step = 1e-6;
    for (std::size_t k = 0; k < h.size(); ++k) {
        DenseMatrix up = h, down = h;
        up.data()[k] += step;
        down.data()[k] -= step;
        const double fd = (dot(g, pairnorm(up)) - dot(g, pairnorm(down))) / (2 * step);
        EXPECT_NEAR(analytic.data()[k], fd, 1e-7);
    }
}

TEST(Loss, UniformLogits) {
    const DenseMatrix z(4, 3);
    DenseMatrix grad;
    EXPECT_NEAR(softmax_cross_entropy(z, {0, 1, 2, 0}, {0, 1, 2, 3}, &grad), std::log(3.0), 1e-15);
    EXPECT_NEAR(grad(0, 0), (1.0 / 3.0 - 1.0) / 4.0, 1e-15);
    EXPECT_NEAR(grad(0, 1), (1.0 / 3.0) / 4.0, 1e-15);
    EXPECT_THROW(softmax_cross_entropy(z, {0, 1, 2, 0}, {}, nullptr), InvalidArgument);
}

TEST(Gradients, LibraryCheckIsTight) {
    for (ModelKind kind : {ModelKind::gcn, ModelKind::dirgcn})
        for (std::size_t depth : {1u, 2u, 3u, 4u})
            for (bool pn : {false, true}) {
                GradientCheckConfig c;
                c.model = kind;
                c.depth = depth;
                c.pairnorm = pn;
                c.seed = depth * 10 + pn;
                EXPECT_LE(gradient_check(c), 1e-5) << to_string(kind) << " depth " << depth << " pn " << pn;
            }
}

TEST(Gradients, FiniteDifferencesWithWeightDecay) {
    Rng rng(9);
    for (ModelKind kind : {ModelKind::gcn, ModelKind::dirgcn}) {
        const Graph g = kind == ModelKind::gcn ? oracle::random_connected(7, 0.3, rng)
                                               : oracle::random_digraph(7, 0.35, rng);
        const DenseMatrix x = gaussian(7, 4, rng);
        const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0};
        const auto p = init_params(kind, 3, 4, 5, 3, true, rng);
        EXPECT_LE(oracle::finite_difference_gap(build_operators(g), p, x, labels, {0, 1, 2, 3}, 0.05, 1e-5, 1e-4),
                  1e-5);
    }
}

TEST(Training, PresetsFromTable) {
    EXPECT_EQ(table6_hyperparameters("Cora"), (HyperParams{16, 0.5, 0.01, 5e-3}));
    EXPECT_EQ(table6_hyperparameters("texas"), (HyperParams{64, 0.5, 0.01, 5e-4}));
    EXPECT_FALSE(table6_hyperparameters("unknown").has_value());
}

TEST(Training, SeparatesToyClusters) {
    const Toy t = toy_problem();
    TrainConfig c;
    c.hyper = {8, 0.0, 0.05, 0.0};
    c.epochs = 100;
    c.seed = 1;
    const auto r = train(t.g, t.x, t.labels, 2, t.split, c);
    EXPECT_DOUBLE_EQ(r.best_val_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(r.val_accuracy.back(), 1.0);
    // The checkpoint is the first epoch with perfect validation accuracy.
    EXPECT_EQ(r.val_accuracy[r.best_epoch], 1.0);
    for (std::size_t e = 0; e < r.best_epoch; ++e) EXPECT_LT(r.val_accuracy[e], 1.0);
    EXPECT_LT(r.train_loss.back(), r.train_loss.front());
    EXPECT_EQ(r.captured_embeddings.size(), 3u);
}

TEST(Training, ZeroLearningRateKeepsLossFixed) {
    const Toy t = toy_problem();
    TrainConfig c;
    c.hyper = {8, 0.0, 0.0, 0.0};
    c.epochs = 5;
    const auto r = train(t.g, t.x, t.labels, 2, t.split, c);
    for (double l : r.train_loss) EXPECT_DOUBLE_EQ(l, r.train_loss.front());
    EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Training, DeterministicForSeed) {
    const Toy t = toy_problem();
    TrainConfig c;
    c.epochs = 30;
    c.seed = 17;
    c.pairnorm = true;
    c.depth = 3;
    const auto a = train(t.g, t.x, t.labels, 2, t.split, c);
    const auto b = train(t.g, t.x, t.labels, 2, t.split, c);
    EXPECT_EQ(a.train_loss, b.train_loss);
    EXPECT_EQ(a.val_accuracy, b.val_accuracy);
    EXPECT_EQ(max_abs_diff(a.captured_embeddings.back(), b.captured_embeddings.back()), 0.0);
}

TEST(Training, RejectsBadInputs) {
    Toy t = toy_problem();
    TrainConfig c;
    Graph d(12, GraphMode::directed);
    d.add_edge(0, 1);
    EXPECT_THROW(train(d, t.x, t.labels, 2, t.split, c), InvalidArgument);
    t.labels[0] = 5;
    EXPECT_THROW(train(t.g, t.x, t.labels, 2, t.split, c), InvalidArgument);
}
