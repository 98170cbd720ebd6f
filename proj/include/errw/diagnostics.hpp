#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "errw/dense_matrix.hpp"
#include "errw/error.hpp"
#include "errw/gnn.hpp"
#include "errw/graph.hpp"
#include "errw/random.hpp"

namespace errw {

/// |uᵀv| / (‖u‖‖v‖).
inline double abs_cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InvalidArgument("abs_cosine: length mismatch");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    if (uu == 0.0 || vv == 0.0) throw InvalidArgument("abs_cosine: zero vector");
    return std::min(1.0, std::abs(uv) / std::sqrt(uu * vv));
}

/// Pair counts above this are estimated from a seeded uniform sample of this size.
inline constexpr std::size_t kExactPairLimit = 1'000'000;

struct CosineLayerStats {
    std::size_t layer = 0;
    double same_mean = 0.0;
    double diff_mean = 0.0;
    std::size_t same_pairs = 0;  ///< pairs averaged (sampled or exact)
    std::size_t diff_pairs = 0;
    std::size_t zero_rows = 0;   ///< nodes excluded for having a zero embedding
    bool sampled = false;
};

/// Mean |cos| over same-class and different-class node pairs for one embedding matrix.
inline CosineLayerStats class_pair_cosine(const DenseMatrix& h, const std::vector<int>& labels,
                                          std::uint64_t seed = 0, std::size_t exact_limit = kExactPairLimit) {
    if (h.rows() != labels.size()) throw InvalidArgument("class_pair_cosine: label count mismatch");
    CosineLayerStats st;
    std::vector<std::size_t> valid;
    DenseMatrix unit = h;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        double s = 0.0;
        for (double x : h.row(i)) s += x * x;
        if (s == 0.0) {
            ++st.zero_rows;
            continue;
        }
        const double inv = 1.0 / std::sqrt(s);
        for (double& x : unit.row(i)) x *= inv;
        valid.push_back(i);
    }
    {
        std::vector<std::size_t> counts;
        for (std::size_t i : valid) {
            const auto y = static_cast<std::size_t>(labels[i]);
            if (counts.size() <= y) counts.resize(y + 1, 0);
            ++counts[y];
        }
        std::size_t classes = 0, with_pair = 0;
        for (auto c : counts) {
            classes += c > 0;
            with_pair += c >= 2;
        }
        if (classes < 2 || with_pair < 1)
            throw InvalidArgument("class_pair_cosine: needs at least 2 classes and a class with 2 members");
    }
    auto cosine = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        const auto ra = unit.row(a), rb = unit.row(b);
        for (std::size_t k = 0; k < ra.size(); ++k) s += ra[k] * rb[k];
        return std::min(1.0, std::abs(s));
    };
    double same = 0.0, diff = 0.0;
    auto account = [&](std::size_t a, std::size_t b) {
        const double c = cosine(a, b);
        if (labels[a] == labels[b]) {
            same += c;
            ++st.same_pairs;
        } else {
            diff += c;
            ++st.diff_pairs;
        }
    };
    const std::size_t m = valid.size();
    const std::size_t total = m * (m - 1) / 2;
    if (total <= exact_limit) {
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) account(valid[a], valid[b]);
    } else {
        st.sampled = true;
        Rng rng(derive_seed(seed, {"class-pair-cosine"}));
        for (std::size_t k = 0; k < exact_limit; ++k) {
            const std::size_t a = rng.below(m);
            std::size_t b = rng.below(m - 1);
            if (b >= a) ++b;
            account(valid[a], valid[b]);
        }
    }
    if (st.same_pairs == 0 || st.diff_pairs == 0) throw InvalidArgument("class_pair_cosine: no valid pairs");
    st.same_mean = same / static_cast<double>(st.same_pairs);
    st.diff_mean = diff / static_cast<double>(st.diff_pairs);
    return st;
}

/// Cosine curves across layers; `layers[k]` is reported as layer index k.
inline std::vector<CosineLayerStats> class_pair_cosine(const std::vector<DenseMatrix>& layers,
                                                       const std::vector<int>& labels, std::uint64_t seed = 0,
                                                       std::size_t exact_limit = kExactPairLimit) {
    std::vector<CosineLayerStats> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto st = class_pair_cosine(layers[l], labels, derive_seed(seed, {std::to_string(l)}), exact_limit);
        st.layer = l;
        out.push_back(st);
    }
    return out;
}

/// Linear CKA ‖Y_cᵀX_c‖²_F / (‖X_cᵀX_c‖_F ‖Y_cᵀY_c‖_F) on column-centered inputs.
inline double linear_cka(const DenseMatrix& x, const DenseMatrix& y) {
    if (x.rows() != y.rows()) throw InvalidArgument("linear_cka: row count mismatch");
    if (x.rows() < 2) throw InvalidArgument("linear_cka: needs at least 2 rows");
    const DenseMatrix xc = center_columns(x), yc = center_columns(y);
    const double xs = xc.frobenius_norm(), ys = yc.frobenius_norm();
    if (xs < 1e-300 || ys < 1e-300 || xs <= 1e-12 * std::max(1.0, x.max_abs()) ||
        ys <= 1e-12 * std::max(1.0, y.max_abs()))
        throw InvalidArgument("linear_cka: zero-variance input");
    // Normalizing first keeps the products well scaled; CKA ignores the factor.
    DenseMatrix xn = xc, yn = yc;
    xn *= 1.0 / xs;
    yn *= 1.0 / ys;
    const DenseMatrix yx = matmul_tn(yn, xn);
    const DenseMatrix xx = matmul_tn(xn, xn);
    const DenseMatrix yy = matmul_tn(yn, yn);
    const double num = dot(yx, yx);
    const double den = xx.frobenius_norm() * yy.frobenius_norm();
    return std::clamp(num / den, 0.0, 1.0);
}

struct ProbeConfig {
    double lr = 0.1;
    std::size_t iterations = 1000;
    double l2 = 1e-4;
    double tolerance = 1e-7;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Multinomial logistic regression (weights + bias) on train rows of frozen
/// embeddings, fitted by full-batch gradient descent; reports test accuracy.
/// Features are standardized with train-row statistics.
inline ProbeResult linear_probe(const DenseMatrix& h, const std::vector<int>& labels, const NodeSplit& split,
                                const ProbeConfig& cfg = {}) {
    if (h.rows() != labels.size() || split.role.size() != labels.size())
        throw InvalidArgument("linear_probe: size mismatch");
    const auto train_rows = split.rows(Split::train);
    const auto test_rows = split.rows(Split::test);
    std::set<int> train_classes;
    for (auto i : train_rows) train_classes.insert(labels[i]);
    if (train_classes.size() < 2) throw InvalidArgument("linear_probe: training mask holds a single class");
    int max_label = 0;
    for (int y : labels) {
        if (y < 0) throw InvalidArgument("linear_probe: negative label");
        max_label = std::max(max_label, y);
    }
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
    const std::size_t d = h.cols();

    std::vector<double> mean(d, 0.0), inv_sd(d, 1.0);
    for (auto i : train_rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += h(i, j);
    for (double& m : mean) m /= static_cast<double>(train_rows.size());
    for (std::size_t j = 0; j < d; ++j) {
        double v = 0.0;
        for (auto i : train_rows) v += (h(i, j) - mean[j]) * (h(i, j) - mean[j]);
        v /= static_cast<double>(train_rows.size());
        if (v > 1e-24) inv_sd[j] = 1.0 / std::sqrt(v);
    }
    DenseMatrix z(h.rows(), d);
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) z(i, j) = (h(i, j) - mean[j]) * inv_sd[j];

    DenseMatrix w(d, classes);
    std::vector<double> b(classes, 0.0);
    DenseMatrix xt(train_rows.size(), d);
    std::vector<int> yt(train_rows.size());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
        for (std::size_t j = 0; j < d; ++j) xt(r, j) = z(train_rows[r], j);
        yt[r] = labels[train_rows[r]];
    }
    std::vector<std::size_t> all_rows(train_rows.size());
    for (std::size_t r = 0; r < all_rows.size(); ++r) all_rows[r] = r;

    ProbeResult res;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        DenseMatrix logits = matmul(xt, w);
        for (std::size_t r = 0; r < logits.rows(); ++r)
            for (std::size_t c = 0; c < classes; ++c) logits(r, c) += b[c];
        DenseMatrix g;
        softmax_cross_entropy(logits, yt, all_rows, &g);
        DenseMatrix gw = matmul_tn(xt, g);
        double gmax = 0.0;
        for (std::size_t k = 0; k < gw.size(); ++k) {
            gw.data()[k] += cfg.l2 * w.data()[k];
            gmax = std::max(gmax, std::abs(gw.data()[k]));
        }
        std::vector<double> gb(classes, 0.0);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < classes; ++c) gb[c] += g(r, c);
        for (double x : gb) gmax = std::max(gmax, std::abs(x));
        res.iterations = it;
        if (gmax < cfg.tolerance) {
            res.converged = true;
            break;
        }
        for (std::size_t k = 0; k < w.size(); ++k) w.data()[k] -= cfg.lr * gw.data()[k];
        for (std::size_t c = 0; c < classes; ++c) b[c] -= cfg.lr * gb[c];
        res.iterations = it + 1;
    }
    DenseMatrix logits = matmul(z, w);
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 0; c < classes; ++c) logits(r, c) += b[c];
    res.accuracy = accuracy(logits, labels, test_rows);
    return res;
}

struct OverlapRow {
    std::uint32_t subset_mask = 0;  ///< bit k set = set k participates
    std::size_t exclusive_size = 0; ///< elements in exactly these sets
    std::size_t intersection_size = 0;
    std::size_t union_size = 0;
    double jaccard = 0.0;           ///< |∩| / |∪| over the subset
};

/// UpSet-style overlap of added-edge sets, one row per nonempty subset.
inline std::vector<OverlapRow> edge_set_overlap(const std::vector<std::set<Edge>>& sets) {
    const std::size_t k = sets.size();
    if (k < 2) throw InvalidArgument("edge_set_overlap: needs at least 2 sets");
    if (k > 20) throw InvalidArgument("edge_set_overlap: at most 20 sets");
    std::set<Edge> all;
    for (const auto& s : sets) all.insert(s.begin(), s.end());
    std::vector<std::uint32_t> membership;
    membership.reserve(all.size());
    for (const Edge& e : all) {
        std::uint32_t m = 0;
        for (std::size_t i = 0; i < k; ++i)
            if (sets[i].count(e)) m |= 1u << i;
        membership.push_back(m);
    }
    std::vector<OverlapRow> rows;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
        OverlapRow r;
        r.subset_mask = mask;
        for (std::uint32_t m : membership) {
            r.exclusive_size += m == mask;
            r.intersection_size += (m & mask) == mask;
            r.union_size += (m & mask) != 0;
        }
        r.jaccard = r.union_size ? static_cast<double>(r.intersection_size) / static_cast<double>(r.union_size) : 0.0;
        rows.push_back(r);
    }
    return rows;
}

struct DiagnosticsReport {
    std::vector<CosineLayerStats> cosine;
    struct Cka {
        std::string strategy_a, strategy_b;
        std::size_t depth;
        double value;
    };
    std::vector<Cka> cka;
    struct Probe {
        std::size_t depth, readout_layer;
        double accuracy;
    };
    std::vector<Probe> probe;
    std::vector<OverlapRow> overlap;
};

} // namespace errw
