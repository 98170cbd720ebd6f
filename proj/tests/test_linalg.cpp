#include <gtest/gtest.h>

#include "errw/linalg.hpp"
#include "errw/resistance.hpp"
#include "oracles.hpp"

using namespace errw;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

} // namespace

TEST(DenseMatrix, ConstructionChecks) {
    EXPECT_THROW(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
    EXPECT_THROW(DenseMatrix(1, 1, std::vector<double>{std::nan("")}), InvalidArgument);
    EXPECT_THROW(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), InvalidArgument);
}

TEST(DenseMatrix, ProductsAgree) {
    Rng rng(1);
    const DenseMatrix a = random_matrix(4, 3, rng), b = random_matrix(4, 5, rng);
    EXPECT_LE(max_abs_diff(matmul_tn(a, b), matmul(a.transpose(), b)), 1e-14);
    const DenseMatrix c = random_matrix(5, 3, rng);
    EXPECT_LE(max_abs_diff(matmul_nt(a, c), matmul(a, c.transpose())), 1e-14);
}

TEST(Solve, Examples) {
    Rng rng(2);
    const DenseMatrix b = random_matrix(3, 2, rng);
    EXPECT_LE(max_abs_diff(solve_linear_system(DenseMatrix::identity(3), b), b), 1e-15);
    const DenseMatrix x = solve_linear_system(DenseMatrix{{2, 0}, {0, 4}}, DenseMatrix{{2}, {4}});
    EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(x(1, 0), 1.0);
}

TEST(Solve, RandomWellConditionedResidual) {
    Rng rng(3);
    DenseMatrix a = random_matrix(20, 20, rng);
    for (std::size_t i = 0; i < 20; ++i) a(i, i) += 10.0;
    const DenseMatrix b = random_matrix(20, 3, rng);
    const DenseMatrix x = solve_linear_system(a, b);
    EXPECT_LE(max_abs_diff(matmul(a, x), b), 1e-8);
}

TEST(Solve, SingularThrows) {
    EXPECT_THROW(solve_linear_system(DenseMatrix{{1, 2}, {2, 4}}, DenseMatrix{{1}, {1}}), NumericalError);
}

TEST(Solve, RowPermutationInvariance) {
    Rng rng(4);
    DenseMatrix a = random_matrix(8, 8, rng);
    const DenseMatrix b = random_matrix(8, 1, rng);
    const DenseMatrix x = solve_linear_system(a, b);
    // Reverse the equations: same solution.
    DenseMatrix pa(8, 8), pb(8, 1);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) pa(i, j) = a(7 - i, j);
        pb(i, 0) = b(7 - i, 0);
    }
    EXPECT_LE(max_abs_diff(solve_linear_system(pa, pb), x), 1e-10);
}

TEST(Pseudoinverse, K2AndPath) {
    const DenseMatrix p = laplacian_pseudoinverse(DenseMatrix{{1, -1}, {-1, 1}});
    EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(p(0, 1), -0.25, 1e-15);
    const DenseMatrix p3 = laplacian_pseudoinverse(out_laplacian(oracle::path(3)));
    EXPECT_NEAR(p3(0, 0) + p3(2, 2) - 2 * p3(0, 2), 2.0, 1e-12);
}

TEST(Pseudoinverse, MoorePenroseIdentities) {
    Rng rng(5);
    for (std::size_t n : {3u, 8u, 15u, 30u}) {
        const DenseMatrix l = out_laplacian(oracle::random_connected(n, 0.2, rng));
        const DenseMatrix p = laplacian_pseudoinverse(l);
        EXPECT_LE(max_abs_diff(matmul(matmul(l, p), l), l), 1e-7);
        EXPECT_LE(max_abs_diff(matmul(matmul(p, l), p), p), 1e-7);
        const DenseMatrix lp = matmul(l, p), pl = matmul(p, l);
        EXPECT_LE(max_abs_diff(lp, lp.transpose()), 1e-7);
        EXPECT_LE(max_abs_diff(pl, pl.transpose()), 1e-7);
    }
}

TEST(Pseudoinverse, DisconnectedRejected) {
    Graph g(4, GraphMode::undirected);
    g.add_edge(0, 1);
    g.add_edge(2, 3);
    EXPECT_THROW(laplacian_pseudoinverse(out_laplacian(g)), NumericalError);
}

TEST(Helmert, Orthonormality) {
    const DenseMatrix q2 = orthonormal_complement_basis(2);
    EXPECT_NEAR(q2(0, 0), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(q2(0, 1), -1 / std::sqrt(2.0), 1e-15);
    const DenseMatrix q3 = orthonormal_complement_basis(3);
    EXPECT_LE(max_abs_diff(matmul_nt(q3, q3), DenseMatrix::identity(2)), 1e-12);
    const DenseMatrix q10 = orthonormal_complement_basis(10);
    DenseMatrix proj = DenseMatrix::identity(10);
    for (double& x : proj.data()) x -= 0.1;
    EXPECT_LE(max_abs_diff(matmul_tn(q10, q10), proj), 1e-12);
    EXPECT_THROW(orthonormal_complement_basis(1), InvalidArgument);
}

TEST(Lyapunov, DiagonalExamples) {
    const auto s = lyapunov_solve(DenseMatrix::identity(2));
    EXPECT_NEAR(s.sigma(0, 0), 0.5, 1e-12);
    EXPECT_NEAR(s.sigma(0, 1), 0.0, 1e-12);
    const auto d = lyapunov_solve(DenseMatrix{{1, 0}, {0, 2}});
    EXPECT_NEAR(d.sigma(0, 0), 0.5, 1e-12);
    EXPECT_NEAR(d.sigma(1, 1), 0.25, 1e-12);
}

TEST(Lyapunov, MatchesKroneckerOracle) {
    Rng rng(6);
    for (std::size_t m : {2u, 5u, 8u, 15u}) {
        DenseMatrix a = random_matrix(m, m, rng);
        for (std::size_t i = 0; i < m; ++i) a(i, i) += 2.0 * std::sqrt(static_cast<double>(m)) + 1.0;
        const auto sol = lyapunov_solve(a);
        const auto ref = oracle::kronecker_lyapunov(oracle::to_mat(a));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(sol.sigma(i, j), ref[i][j], 1e-8);
        EXPECT_LE(max_abs_diff(sol.sigma, sol.sigma.transpose()), 1e-9);
        EXPECT_LE(sol.residual, 1e-8);
    }
}

TEST(Lyapunov, UnstableRejected) {
    EXPECT_THROW(lyapunov_solve(DenseMatrix{{-1, 0}, {0, 2}}), NumericalError);
    EXPECT_THROW(lyapunov_solve(DenseMatrix{{0, 1}, {-1, 0}}), NumericalError);
}
