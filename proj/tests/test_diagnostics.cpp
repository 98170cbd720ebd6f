#include <gtest/gtest.h>

#include "errw/diagnostics.hpp"
#include "oracles.hpp"

using namespace errw;

namespace {

DenseMatrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

// CKA from centered Gram matrices, entry by entry.
double gram_cka(const DenseMatrix& x, const DenseMatrix& y) {
    const std::size_t n = x.rows();
    auto gram = [n](const DenseMatrix& m) {
        oracle::Mat k = oracle::zeros(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < m.cols(); ++c) k[i][j] += m(i, c) * m(j, c);
        // H K H with H = I - 11ᵀ/n.
        std::vector<double> rmean(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) rmean[i] += k[i][j];
            all += rmean[i];
            rmean[i] /= static_cast<double>(n);
        }
        all /= static_cast<double>(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) k[i][j] += all - rmean[i] - rmean[j];
        return k;
    };
    const auto k = gram(x), l = gram(y);
    double kl = 0, kk = 0, ll = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            kl += k[i][j] * l[i][j];
            kk += k[i][j] * k[i][j];
            ll += l[i][j] * l[i][j];
        }
    return kl / std::sqrt(kk * ll);
}

struct PairMeans {
    double same, diff;
};

PairMeans brute_force_cosine(const DenseMatrix& h, const std::vector<int>& labels) {
    double same = 0, diff = 0;
    std::size_t ns = 0, nd = 0;
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = i + 1; j < h.rows(); ++j) {
            double dotp = 0, a = 0, b = 0;
            for (std::size_t c = 0; c < h.cols(); ++c) {
                dotp += h(i, c) * h(j, c);
                a += h(i, c) * h(i, c);
                b += h(j, c) * h(j, c);
            }
            if (a == 0 || b == 0) continue;
            const double v = std::abs(dotp) / std::sqrt(a * b);
            if (labels[i] == labels[j]) {
                same += v;
                ++ns;
            } else {
                diff += v;
                ++nd;
            }
        }
    return {same / static_cast<double>(ns), diff / static_cast<double>(nd)};
}

} // namespace

TEST(Cosine, AbsoluteValues) {
    const std::vector<double> a{1, 0}, b{0, 2}, c{-3, 0}, z{0, 0};
    EXPECT_DOUBLE_EQ(abs_cosine(a, b), 0.0);
    EXPECT_DOUBLE_EQ(abs_cosine(a, c), 1.0);
    EXPECT_THROW(abs_cosine(a, z), InvalidArgument);
}

TEST(Cosine, ClassStructureExample) {
    // Same-class rows identical, classes orthogonal.
    const DenseMatrix h{{1, 0}, {1, 0}, {0, 2}, {0, 2}};
    const auto st = class_pair_cosine(h, {0, 0, 1, 1});
    EXPECT_DOUBLE_EQ(st.same_mean, 1.0);
    EXPECT_DOUBLE_EQ(st.diff_mean, 0.0);
    EXPECT_EQ(st.same_pairs, 2u);
    EXPECT_EQ(st.diff_pairs, 4u);
    EXPECT_FALSE(st.sampled);
}

TEST(Cosine, MatchesBruteForceAndSkipsZeroRows) {
    Rng rng(1);
    DenseMatrix h = gaussian(30, 4, rng);
    for (std::size_t c = 0; c < 4; ++c) h(7, c) = 0.0;
    std::vector<int> labels(30);
    for (auto& y : labels) y = static_cast<int>(rng.below(3));
    const auto st = class_pair_cosine(h, labels);
    const auto ref = brute_force_cosine(h, labels);
    EXPECT_NEAR(st.same_mean, ref.same, 1e-12);
    EXPECT_NEAR(st.diff_mean, ref.diff, 1e-12);
    EXPECT_EQ(st.zero_rows, 1u);
}

TEST(Cosine, SampledEstimateIsClose) {
    Rng rng(2);
    DenseMatrix h = gaussian(300, 3, rng);
    std::vector<int> labels(300);
    for (std::size_t i = 0; i < 300; ++i) {
        labels[i] = static_cast<int>(i % 2);
        h(i, 0) += labels[i] ? 3.0 : -3.0;
    }
    const auto exact = class_pair_cosine(h, labels);
    const auto sampled = class_pair_cosine(h, labels, 5, 5000);
    EXPECT_TRUE(sampled.sampled);
    EXPECT_NEAR(sampled.same_mean, exact.same_mean, 0.03);
    EXPECT_NEAR(sampled.diff_mean, exact.diff_mean, 0.03);
    const auto again = class_pair_cosine(h, labels, 5, 5000);
    EXPECT_EQ(sampled.same_mean, again.same_mean);
}

TEST(Cka, MatchesGramDefinition) {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const DenseMatrix x = gaussian(15, 4, rng), y = gaussian(15, 6, rng);
        EXPECT_NEAR(linear_cka(x, y), gram_cka(x, y), 1e-10);
    }
}

TEST(Cka, Invariances) {
    Rng rng(4);
    const DenseMatrix x = gaussian(20, 5, rng), y = gaussian(20, 3, rng);
    EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-12);
    const double base = linear_cka(x, y);
    const DenseMatrix q = oracle::random_orthogonal(5, rng);
    EXPECT_NEAR(linear_cka(matmul(x, q), y), base, 1e-10);
    DenseMatrix scaled = x;
    scaled *= 7.5;
    for (std::size_t i = 0; i < 20; ++i) scaled(i, 0) += 3.0;
    EXPECT_NEAR(linear_cka(scaled, y), base, 1e-10);
    EXPECT_NEAR(linear_cka(y, x), base, 1e-12);
    EXPECT_THROW(linear_cka(DenseMatrix(20, 2), y), InvalidArgument);
}

TEST(Probe, SeparableEmbeddings) {
    Rng rng(5);
    DenseMatrix h = gaussian(60, 4, rng);
    std::vector<int> labels(60);
    NodeSplit split;
    for (std::size_t i = 0; i < 60; ++i) {
        labels[i] = static_cast<int>(i % 3);
        h(i, labels[i]) += 6.0;
        split.role.push_back(i < 30 ? Split::train : (i < 40 ? Split::val : Split::test));
    }
    const auto r = linear_probe(h, labels, split);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_GT(r.iterations, 0u);
    EXPECT_EQ(linear_probe(h, labels, split).accuracy, r.accuracy);
}

TEST(Overlap, TwoSets) {
    const std::set<Edge> a{{0, 1}, {1, 2}, {2, 3}}, b{{1, 2}, {3, 4}};
    const auto rows = edge_set_overlap({a, b});
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].exclusive_size, 2u);  // only a
    EXPECT_EQ(rows[1].exclusive_size, 1u);  // only b
    EXPECT_EQ(rows[2].intersection_size, 1u);
    EXPECT_EQ(rows[2].union_size, 4u);
    EXPECT_DOUBLE_EQ(rows[2].jaccard, 0.25);
    EXPECT_THROW(edge_set_overlap({a}), InvalidArgument);
}

TEST(Overlap, ExclusivePartsPartitionTheUnion) {
    Rng rng(6);
    std::vector<std::set<Edge>> sets(4);
    std::set<Edge> all;
    for (auto& s : sets)
        for (int k = 0; k < 15; ++k) {
            const Node u = static_cast<Node>(rng.below(6)), v = static_cast<Node>(6 + rng.below(6));
            s.insert({u, v});
            all.insert({u, v});
        }
    std::size_t total = 0;
    for (const auto& r : edge_set_overlap(sets)) total += r.exclusive_size;
    EXPECT_EQ(total, all.size());
}
