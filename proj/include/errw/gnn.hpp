#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errw/dense_matrix.hpp"
#include "errw/error.hpp"
#include "errw/graph.hpp"
#include "errw/random.hpp"

namespace errw {

/// Compressed sparse row matrix.
class SparseMatrix {
public:
    SparseMatrix() = default;

    /// Builds from (row, col, value) triplets; duplicates are summed.
    SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                 std::vector<std::uint32_t> col, std::vector<double> val)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_(std::move(col)), val_(std::move(val)) {
        if (row_ptr_.size() != rows_ + 1 || col_.size() != val_.size() || row_ptr_.back() != val_.size())
            throw InvalidArgument("sparse matrix: inconsistent CSR arrays");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nonzeros() const noexcept { return val_.size(); }

    template <typename F>
    void for_each_in_row(std::size_t i, F&& f) const {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) f(static_cast<std::size_t>(col_[k]), val_[k]);
    }

    double row_sum(std::size_t i) const {
        double s = 0.0;
        for_each_in_row(i, [&](std::size_t, double v) { s += v; });
        return s;
    }

    /// this * x.
    DenseMatrix multiply(const DenseMatrix& x) const {
        if (x.rows() != cols_) throw InvalidArgument("sparse multiply: dimension mismatch");
        DenseMatrix out(rows_, x.cols());
        const std::size_t m = x.cols();
        for (std::size_t i = 0; i < rows_; ++i) {
            double* oi = out.row(i).data();
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                const double a = val_[k];
                const double* xr = x.row(col_[k]).data();
                for (std::size_t j = 0; j < m; ++j) oi[j] += a * xr[j];
            }
        }
        return out;
    }

    /// thisᵀ * x.
    DenseMatrix multiply_transposed(const DenseMatrix& x) const {
        if (x.rows() != rows_) throw InvalidArgument("sparse multiply: dimension mismatch");
        DenseMatrix out(cols_, x.cols());
        const std::size_t m = x.cols();
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* xi = x.row(i).data();
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                const double a = val_[k];
                double* oc = out.row(col_[k]).data();
                for (std::size_t j = 0; j < m; ++j) oc[j] += a * xi[j];
            }
        }
        return out;
    }

    DenseMatrix to_dense() const {
        DenseMatrix d(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i) for_each_in_row(i, [&](std::size_t j, double v) { d(i, j) += v; });
        return d;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::uint32_t> col_;
    std::vector<double> val_;
};

/// Propagation matrices. `gcn_norm` = D̃^{-1/2}(A + I)D̃^{-1/2} exists for
/// undirected graphs; `dir_in` = D_in⁻¹A_in and `dir_out` = D_out⁻¹A_out always
/// (zero rows where the degree is zero; both coincide on undirected graphs).
struct PropagationOperators {
    std::size_t num_nodes = 0;
    std::optional<SparseMatrix> gcn_norm;
    SparseMatrix dir_in;
    SparseMatrix dir_out;
};

namespace detail {

/// Row-normalized aggregation over `lists[i]`.
inline SparseMatrix mean_aggregator(std::size_t n, const std::vector<std::vector<Node>>& lists) {
    std::vector<std::size_t> ptr{0};
    std::vector<std::uint32_t> col;
    std::vector<double> val;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = lists[i];
        for (Node j : l) {
            col.push_back(j);
            val.push_back(1.0 / static_cast<double>(l.size()));
        }
        ptr.push_back(col.size());
    }
    return SparseMatrix(n, n, std::move(ptr), std::move(col), std::move(val));
}

} // namespace detail

inline PropagationOperators build_operators(const Graph& g) {
    const std::size_t n = g.num_nodes();
    PropagationOperators ops;
    ops.num_nodes = n;
    std::vector<std::vector<Node>> in(n), out(n);
    for (Node v = 0; v < n; ++v) {
        in[v] = g.in_neighbors(v);
        out[v] = g.out_neighbors(v);
    }
    ops.dir_in = detail::mean_aggregator(n, in);
    ops.dir_out = detail::mean_aggregator(n, out);
    if (!g.directed()) {
        std::vector<double> inv_sqrt(n);
        for (Node v = 0; v < n; ++v) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.out_degree(v) + 1));
        std::vector<std::size_t> ptr{0};
        std::vector<std::uint32_t> col;
        std::vector<double> val;
        for (Node i = 0; i < n; ++i) {
            bool self_done = false;
            auto push = [&](Node j) {
                col.push_back(j);
                val.push_back(inv_sqrt[i] * inv_sqrt[j]);
            };
            for (Node j : g.out_neighbors(i)) {
                if (!self_done && j > i) {
                    push(i);
                    self_done = true;
                }
                push(j);
            }
            if (!self_done) push(i);
            ptr.push_back(col.size());
        }
        ops.gcn_norm = SparseMatrix(n, n, std::move(ptr), std::move(col), std::move(val));
    }
    return ops;
}

enum class ModelKind { gcn, dirgcn };

inline constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::gcn ? "gcn" : "dirgcn"; }

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "gcn") return ModelKind::gcn;
    if (s == "dirgcn") return ModelKind::dirgcn;
    throw InvalidArgument("unknown model '" + std::string(s) + "'");
}

/// Weight matrices per layer: {W} for GCN, {W_in, W_out, W_self} for DirGCN.
using LayerParams = std::vector<DenseMatrix>;

struct AdamState {
    std::vector<LayerParams> m;
    std::vector<LayerParams> v;
    std::size_t step = 0;
};

struct ModelParams {
    ModelKind kind = ModelKind::gcn;
    std::size_t depth = 0;
    std::size_t hidden_dim = 0;
    std::vector<LayerParams> weights;
    AdamState adam;
    bool pairnorm_enabled = false;

    std::size_t input_dim() const { return weights.front().front().rows(); }
    std::size_t output_dim() const { return weights.back().front().cols(); }
};

inline std::size_t matrices_per_layer(ModelKind k) { return k == ModelKind::gcn ? 1 : 3; }

/// Glorot-uniform initialization. Layer 0 maps features to hidden (or straight
/// to classes when depth = 1); the last layer outputs class logits.
inline ModelParams init_params(ModelKind kind, std::size_t depth, std::size_t in_dim, std::size_t hidden_dim,
                               std::size_t num_classes, bool pairnorm, Rng& rng) {
    if (depth == 0) throw InvalidArgument("model depth must be at least 1");
    if (in_dim == 0 || num_classes == 0 || (depth > 1 && hidden_dim == 0))
        throw InvalidArgument("model dimensions must be positive");
    ModelParams p;
    p.kind = kind;
    p.depth = depth;
    p.hidden_dim = hidden_dim;
    p.pairnorm_enabled = pairnorm;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t fan_in = l == 0 ? in_dim : hidden_dim;
        const std::size_t fan_out = l + 1 == depth ? num_classes : hidden_dim;
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        LayerParams layer;
        for (std::size_t k = 0; k < matrices_per_layer(kind); ++k) {
            DenseMatrix w(fan_in, fan_out);
            for (double& x : w.data()) x = rng.uniform(-a, a);
            layer.push_back(std::move(w));
        }
        p.weights.push_back(std::move(layer));
    }
    for (const auto& layer : p.weights) {
        LayerParams zeros;
        for (const auto& w : layer) zeros.emplace_back(w.rows(), w.cols());
        p.adam.m.push_back(zeros);
        p.adam.v.push_back(std::move(zeros));
    }
    return p;
}

/// Below this scale an embedding matrix counts as collapsed.
inline constexpr double kPairNormMinScale = 1e-12;

struct PairNormResult {
    DenseMatrix output;
    double scale = 0.0;  ///< sqrt of the mean squared pairwise distance of the input
};

/// Centers rows and rescales so the mean squared pairwise distance
/// (1/n²)Σᵢⱼ‖hᵢ − hⱼ‖² equals 1, using Σᵢⱼ‖hᵢ − hⱼ‖² = 2nΣᵢ‖hᵢ − h̄‖².
inline PairNormResult pairnorm_with_scale(const DenseMatrix& h) {
    const std::size_t n = h.rows();
    if (n < 2) throw InvalidArgument("pairnorm: needs at least 2 nodes");
    DenseMatrix c = center_columns(h);
    const double sq = dot(c, c);
    const double scale = std::sqrt(2.0 * sq / static_cast<double>(n));
    if (!(scale >= kPairNormMinScale))
        throw NumericalError("pairnorm: embeddings are constant across nodes (scale " + std::to_string(scale) + ")");
    c *= 1.0 / scale;
    return {std::move(c), scale};
}

inline DenseMatrix pairnorm(const DenseMatrix& h) { return pairnorm_with_scale(h).output; }

/// Gradient through PairNorm given its output y and scale.
inline DenseMatrix pairnorm_backward(const DenseMatrix& dy, const DenseMatrix& y, double scale) {
    const double n = static_cast<double>(y.rows());
    const double proj = (2.0 / n) * dot(dy, y);
    DenseMatrix dc = dy;
    for (std::size_t k = 0; k < dc.size(); ++k) dc.data()[k] = (dy.data()[k] - proj * y.data()[k]) / scale;
    return center_columns(dc);
}

struct LayerCache {
    DenseMatrix input;      ///< H^(l) after dropout
    DenseMatrix keep;       ///< dropout multipliers (empty when inactive)
    DenseMatrix pre;        ///< after PairNorm (if any), before ReLU
    double pn_scale = 0.0;  ///< 0 when PairNorm was not applied
};

struct ForwardResult {
    DenseMatrix logits;
    std::vector<DenseMatrix> embeddings;  ///< H^(0) = X, ..., H^(depth) = logits
    std::vector<LayerCache> cache;
};

namespace detail {

inline DenseMatrix apply_dropout(const DenseMatrix& h, double rate, Rng& rng, DenseMatrix& keep) {
    keep = DenseMatrix(h.rows(), h.cols());
    const double scale = 1.0 / (1.0 - rate);
    DenseMatrix out = h;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double m = rng.bernoulli(rate) ? 0.0 : scale;
        keep.data()[k] = m;
        out.data()[k] *= m;
    }
    return out;
}

inline DenseMatrix propagate(const PropagationOperators& ops, ModelKind kind, const DenseMatrix& h,
                             const LayerParams& w) {
    if (kind == ModelKind::gcn) {
        if (!ops.gcn_norm) throw InvalidArgument("gcn forward: operators lack gcn_norm (graph is directed)");
        return ops.gcn_norm->multiply(matmul(h, w[0]));
    }
    DenseMatrix z = ops.dir_in.multiply(matmul(h, w[0]));
    z += ops.dir_out.multiply(matmul(h, w[1]));
    z += matmul(h, w[2]);
    return z;
}

} // namespace detail

/// Full forward pass. Hidden layers apply propagation, optional PairNorm, then
/// ReLU; the last layer emits logits. Dropout (inverted) hits every layer input
/// when `training` and `dropout > 0`.
inline ForwardResult forward(const PropagationOperators& ops, const ModelParams& params, const DenseMatrix& x,
                             bool training = false, double dropout = 0.0, Rng* rng = nullptr) {
    if (x.rows() != ops.num_nodes) throw InvalidArgument("forward: feature rows != node count");
    if (params.weights.empty() || x.cols() != params.input_dim())
        throw InvalidArgument("forward: feature dim " + std::to_string(x.cols()) + " does not match the model");
    const bool drop = training && dropout > 0.0;
    if (drop && !rng) throw InvalidArgument("forward: dropout requires a random stream");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("forward: dropout rate must lie in [0, 1)");

    ForwardResult r;
    r.embeddings.push_back(x);
    DenseMatrix h = x;
    for (std::size_t l = 0; l < params.depth; ++l) {
        const auto& w = params.weights[l];
        if (h.cols() != w[0].rows()) throw InvalidArgument("forward: layer " + std::to_string(l) + " dim mismatch");
        LayerCache c;
        c.input = drop ? detail::apply_dropout(h, dropout, *rng, c.keep) : h;
        DenseMatrix z = detail::propagate(ops, params.kind, c.input, w);
        const bool last = l + 1 == params.depth;
        if (!last) {
            if (params.pairnorm_enabled) {
                auto pn = pairnorm_with_scale(z);
                z = std::move(pn.output);
                c.pn_scale = pn.scale;
            }
            c.pre = z;
            for (double& v : z.data()) v = std::max(v, 0.0);
        }
        h = std::move(z);
        r.embeddings.push_back(h);
        r.cache.push_back(std::move(c));
    }
    r.logits = h;
    return r;
}

inline ForwardResult gcn_forward(const PropagationOperators& ops, const ModelParams& params, const DenseMatrix& x,
                                 bool training = false, double dropout = 0.0, Rng* rng = nullptr) {
    if (params.kind != ModelKind::gcn) throw InvalidArgument("gcn_forward: model is not a GCN");
    return forward(ops, params, x, training, dropout, rng);
}

inline ForwardResult dirgcn_forward(const PropagationOperators& ops, const ModelParams& params,
                                    const DenseMatrix& x, bool training = false, double dropout = 0.0,
                                    Rng* rng = nullptr) {
    if (params.kind != ModelKind::dirgcn) throw InvalidArgument("dirgcn_forward: model is not a DirGCN");
    return forward(ops, params, x, training, dropout, rng);
}

/// Mean softmax cross-entropy over the rows in `rows`, with its logit gradient.
inline double softmax_cross_entropy(const DenseMatrix& logits, const std::vector<int>& labels,
                                    const std::vector<std::size_t>& rows, DenseMatrix* grad) {
    if (rows.empty()) throw InvalidArgument("cross-entropy: no training rows");
    if (grad) *grad = DenseMatrix(logits.rows(), logits.cols());
    const double inv = 1.0 / static_cast<double>(rows.size());
    double loss = 0.0;
    std::vector<double> p(logits.cols());
    for (std::size_t i : rows) {
        const auto z = logits.row(i);
        const double mx = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) total += (p[c] = std::exp(z[c] - mx));
        const auto y = static_cast<std::size_t>(labels[i]);
        loss -= (z[y] - mx - std::log(total)) * inv;
        if (grad)
            for (std::size_t c = 0; c < z.size(); ++c)
                (*grad)(i, c) = (p[c] / total - (c == y ? 1.0 : 0.0)) * inv;
    }
    return loss;
}

/// Parameter gradients for a cached forward pass given dL/dlogits.
inline std::vector<LayerParams> backward(const PropagationOperators& ops, const ModelParams& params,
                                         const ForwardResult& fwd, DenseMatrix dz) {
    std::vector<LayerParams> grads(params.depth);
    for (std::size_t l = params.depth; l-- > 0;) {
        const LayerCache& c = fwd.cache[l];
        const auto& w = params.weights[l];
        const bool last = l + 1 == params.depth;
        if (!last) {
            // dz currently holds dL/dH^(l+1); undo ReLU then PairNorm.
            for (std::size_t k = 0; k < dz.size(); ++k)
                if (c.pre.data()[k] <= 0.0) dz.data()[k] = 0.0;
            if (c.pn_scale > 0.0) dz = pairnorm_backward(dz, c.pre, c.pn_scale);
        }
        DenseMatrix dinput;
        if (params.kind == ModelKind::gcn) {
            const DenseMatrix g = ops.gcn_norm->multiply_transposed(dz);
            grads[l] = {matmul_tn(c.input, g)};
            if (l > 0) dinput = matmul_nt(g, w[0]);
        } else {
            const DenseMatrix gi = ops.dir_in.multiply_transposed(dz);
            const DenseMatrix go = ops.dir_out.multiply_transposed(dz);
            grads[l] = {matmul_tn(c.input, gi), matmul_tn(c.input, go), matmul_tn(c.input, dz)};
            if (l > 0) {
                dinput = matmul_nt(gi, w[0]);
                dinput += matmul_nt(go, w[1]);
                dinput += matmul_nt(dz, w[2]);
            }
        }
        if (l == 0) break;
        if (c.keep.size())
            for (std::size_t k = 0; k < dinput.size(); ++k) dinput.data()[k] *= c.keep.data()[k];
        dz = std::move(dinput);
    }
    return grads;
}

inline double weight_sq_norm(const ModelParams& p) {
    double s = 0.0;
    for (const auto& layer : p.weights)
        for (const auto& w : layer) s += dot(w, w);
    return s;
}

/// Objective: cross-entropy on `rows` + (weight_decay / 2)·Σ‖W‖². Returns the
/// objective and fills `grads` (including the weight-decay term).
inline double loss_and_gradients(const PropagationOperators& ops, const ModelParams& params, const DenseMatrix& x,
                                 const std::vector<int>& labels, const std::vector<std::size_t>& rows,
                                 double weight_decay, std::vector<LayerParams>& grads, double dropout = 0.0,
                                 Rng* rng = nullptr, double* cross_entropy = nullptr) {
    const ForwardResult fwd = forward(ops, params, x, dropout > 0.0, dropout, rng);
    DenseMatrix dlogits;
    const double ce = softmax_cross_entropy(fwd.logits, labels, rows, &dlogits);
    if (cross_entropy) *cross_entropy = ce;
    grads = backward(ops, params, fwd, std::move(dlogits));
    if (weight_decay != 0.0)
        for (std::size_t l = 0; l < grads.size(); ++l)
            for (std::size_t k = 0; k < grads[l].size(); ++k) {
                DenseMatrix decay = params.weights[l][k];
                decay *= weight_decay;
                grads[l][k] += decay;
            }
    return ce + 0.5 * weight_decay * weight_sq_norm(params);
}

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline void adam_step(ModelParams& p, const std::vector<LayerParams>& grads, const AdamConfig& cfg) {
    ++p.adam.step;
    const double t = static_cast<double>(p.adam.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t l = 0; l < p.weights.size(); ++l)
        for (std::size_t k = 0; k < p.weights[l].size(); ++k) {
            auto w = p.weights[l][k].data();
            auto m = p.adam.m[l][k].data();
            auto v = p.adam.v[l][k].data();
            const auto g = grads[l][k].data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                w[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
            }
        }
}

/// Node roles from a masks file: t(rain), v(alidation), e(valuation/test), - unused.
enum class Split : char { train = 't', val = 'v', test = 'e', unused = '-' };

struct NodeSplit {
    std::vector<Split> role;

    std::vector<std::size_t> rows(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < role.size(); ++i)
            if (role[i] == s) out.push_back(i);
        return out;
    }
};

struct HyperParams {
    std::size_t hidden_dim = 16;
    double dropout = 0.5;
    double lr = 0.01;
    double weight_decay = 5e-3;

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// Published per-dataset settings; nullopt for datasets without a preset.
inline std::optional<HyperParams> table6_hyperparameters(std::string_view dataset) {
    std::string name(dataset);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == "cora" || name == "citeseer") return HyperParams{16, 0.5, 0.01, 5e-3};
    if (name == "cornell" || name == "texas") return HyperParams{64, 0.5, 0.01, 5e-4};
    return std::nullopt;
}

struct TrainConfig {
    ModelKind model = ModelKind::gcn;
    std::size_t depth = 2;
    HyperParams hyper;
    bool pairnorm = false;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> train_loss;      ///< per epoch, before the update
    std::vector<double> val_accuracy;    ///< per epoch, after the update
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    double test_accuracy_at_best = 0.0;
    std::vector<DenseMatrix> captured_embeddings;  ///< inference embeddings at the best epoch
    ModelParams best_params;
};

inline double accuracy(const DenseMatrix& logits, const std::vector<int>& labels,
                       const std::vector<std::size_t>& rows) {
    if (rows.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i : rows) {
        const auto z = logits.row(i);
        const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        hit += pred == labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(rows.size());
}

inline void validate_training_inputs(std::size_t n, const DenseMatrix& x, const std::vector<int>& labels,
                                     std::size_t num_classes, const NodeSplit& split) {
    if (x.rows() != n || labels.size() != n || split.role.size() != n)
        throw InvalidArgument("train: features, labels and masks must cover every node");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw InvalidArgument("train: label " + std::to_string(y) + " outside [0, C)");
    if (split.rows(Split::train).empty()) throw InvalidArgument("train: empty training mask");
}

/// Full-batch training with Adam and best-validation checkpointing.
inline TrainReport train(const Graph& g, const DenseMatrix& x, const std::vector<int>& labels,
                         std::size_t num_classes, const NodeSplit& split, const TrainConfig& cfg) {
    validate_training_inputs(g.num_nodes(), x, labels, num_classes, split);
    if (cfg.model == ModelKind::gcn && g.directed())
        throw InvalidArgument("train: GCN needs an undirected graph; symmetrize first");
    const PropagationOperators ops = build_operators(g);
    Rng init_rng(derive_seed(cfg.seed, {"init"}));
    Rng drop_rng(derive_seed(cfg.seed, {"dropout"}));
    ModelParams params = init_params(cfg.model, cfg.depth, x.cols(), cfg.hyper.hidden_dim, num_classes,
                                     cfg.pairnorm, init_rng);
    const auto train_rows = split.rows(Split::train);
    const auto val_rows = split.rows(Split::val);
    const auto test_rows = split.rows(Split::test);
    const AdamConfig adam{cfg.hyper.lr};

    TrainReport report;
    report.best_params = params;
    bool have_best = false;
    std::vector<LayerParams> grads;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double ce = 0.0;
        loss_and_gradients(ops, params, x, labels, train_rows, cfg.hyper.weight_decay, grads, cfg.hyper.dropout,
                           &drop_rng, &ce);
        if (!std::isfinite(ce)) throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
        report.train_loss.push_back(ce);
        adam_step(params, grads, adam);

        ForwardResult eval = forward(ops, params, x);
        const double val = accuracy(eval.logits, labels, val_rows);
        report.val_accuracy.push_back(val);
        if (!have_best || val > report.best_val_accuracy) {
            have_best = true;
            report.best_epoch = epoch;
            report.best_val_accuracy = val;
            report.test_accuracy_at_best = accuracy(eval.logits, labels, test_rows);
            report.captured_embeddings = std::move(eval.embeddings);
            report.best_params = params;
        }
    }
    if (!have_best) {
        ForwardResult eval = forward(ops, params, x);
        report.test_accuracy_at_best = accuracy(eval.logits, labels, test_rows);
        report.captured_embeddings = std::move(eval.embeddings);
    }
    return report;
}

struct GradientCheckConfig {
    ModelKind model = ModelKind::gcn;
    std::size_t depth = 2;
    bool pairnorm = false;
    std::size_t num_nodes = 6;
    std::size_t feature_dim = 4;
    std::size_t hidden_dim = 5;
    std::size_t num_classes = 3;
    double weight_decay = 0.0;
    double step = 1e-5;
    std::uint64_t seed = 0;
};

/// Denominator floor for the relative error. Central differences at step 1e-5
/// carry roughly 1e-11 of roundoff, which would dominate tiny gradients.
inline constexpr double kGradientCheckFloor = 1e-4;

/// Max relative difference between analytic and central finite-difference
/// gradients on a random instance (dropout off).
inline double gradient_check(const GradientCheckConfig& cfg) {
    if (cfg.num_nodes < 2 || cfg.num_nodes > 8 || cfg.feature_dim > 5 || cfg.hidden_dim > 5 || cfg.num_classes > 5)
        throw InvalidArgument("gradient_check: instance must have 2..8 nodes and dims <= 5");
    Rng rng(derive_seed(cfg.seed, {"gradient-check"}));
    const bool directed = cfg.model == ModelKind::dirgcn;
    Graph g(cfg.num_nodes, directed ? GraphMode::directed : GraphMode::undirected);
    for (Node i = 0; i < cfg.num_nodes; ++i)
        for (Node j = 0; j < cfg.num_nodes; ++j) {
            if (i == j || (!directed && j < i)) continue;
            if (rng.bernoulli(0.45)) g.add_edge(i, j);
        }
    const PropagationOperators ops = build_operators(g);
    DenseMatrix x(cfg.num_nodes, cfg.feature_dim);
    for (double& v : x.data()) v = rng.normal();
    std::vector<int> labels(cfg.num_nodes);
    for (auto& y : labels) y = static_cast<int>(rng.below(cfg.num_classes));
    std::vector<std::size_t> rows(cfg.num_nodes);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    ModelParams params =
        init_params(cfg.model, cfg.depth, cfg.feature_dim, cfg.hidden_dim, cfg.num_classes, cfg.pairnorm, rng);

    std::vector<LayerParams> analytic, scratch;
    loss_and_gradients(ops, params, x, labels, rows, cfg.weight_decay, analytic);
    double worst = 0.0;
    for (std::size_t l = 0; l < params.weights.size(); ++l)
        for (std::size_t k = 0; k < params.weights[l].size(); ++k)
            for (std::size_t i = 0; i < params.weights[l][k].size(); ++i) {
                double& w = params.weights[l][k].data()[i];
                const double saved = w;
                w = saved + cfg.step;
                const double up = loss_and_gradients(ops, params, x, labels, rows, cfg.weight_decay, scratch);
                w = saved - cfg.step;
                const double down = loss_and_gradients(ops, params, x, labels, rows, cfg.weight_decay, scratch);
                w = saved;
                const double fd = (up - down) / (2.0 * cfg.step);
                const double a = analytic[l][k].data()[i];
                const double denom = std::max({std::abs(a), std::abs(fd), kGradientCheckFloor});
                worst = std::max(worst, std::abs(a - fd) / denom);
            }
    return worst;
}

} // namespace errw
