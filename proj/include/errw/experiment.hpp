#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "errw/dense_matrix.hpp"
#include "errw/diagnostics.hpp"
#include "errw/error.hpp"
#include "errw/gnn.hpp"
#include "errw/graph.hpp"
#include "errw/random.hpp"
#include "errw/rewiring.hpp"

namespace errw {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- dataset io

struct FeatureFile {
    DenseMatrix features;
    std::size_t num_classes = 0;
};

/// Header "n d C", then n rows of d reals.
inline FeatureFile read_features(std::istream& in) {
    long long n = -1, d = -1, c = -1;
    if (!(in >> n >> d >> c) || n <= 0 || d <= 0 || c <= 0)
        throw ParseError("features: expected header 'n d C' with positive values");
    std::vector<double> data(static_cast<std::size_t>(n * d));
    for (std::size_t k = 0; k < data.size(); ++k)
        if (!(in >> data[k]))
            throw ParseError("features: row " + std::to_string(k / static_cast<std::size_t>(d)) + " is short");
    std::string extra;
    if (in >> extra) throw ParseError("features: trailing data after " + std::to_string(n) + " rows");
    try {
        return {DenseMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d), std::move(data)),
                static_cast<std::size_t>(c)};
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("features: ") + e.what());
    }
}

inline void write_features(std::ostream& os, const DenseMatrix& x, std::size_t num_classes) {
    os << x.rows() << ' ' << x.cols() << ' ' << num_classes << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) os << (j ? " " : "") << x(i, j);
        os << '\n';
    }
}

inline std::vector<int> read_labels(std::istream& in, std::size_t n) {
    std::vector<int> labels;
    long long y;
    while (in >> y) {
        if (y < 0 || y > std::numeric_limits<int>::max()) throw ParseError("labels: value out of range");
        labels.push_back(static_cast<int>(y));
    }
    if (!in.eof()) throw ParseError("labels: non-integer token");
    if (labels.size() != n)
        throw ParseError("labels: expected " + std::to_string(n) + " values, got " + std::to_string(labels.size()));
    return labels;
}

inline NodeSplit read_masks(std::istream& in, std::size_t n) {
    NodeSplit split;
    char ch;
    while (in.get(ch)) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        switch (ch) {
        case 't': split.role.push_back(Split::train); break;
        case 'v': split.role.push_back(Split::val); break;
        case 'e': split.role.push_back(Split::test); break;
        case '-': split.role.push_back(Split::unused); break;
        default: throw ParseError(std::string("masks: unexpected character '") + ch + "'");
        }
    }
    if (split.role.size() != n)
        throw ParseError("masks: expected " + std::to_string(n) + " entries, got " + std::to_string(split.role.size()));
    return split;
}

struct DatasetPaths {
    std::string name;
    std::string edges, features, labels, masks;
};

struct Dataset {
    std::string name;
    Graph graph;
    DenseMatrix features;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    NodeSplit split;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return in;
}

} // namespace detail

inline Dataset load_dataset(const DatasetPaths& p) {
    auto edges_in = detail::open_input(p.edges);
    EdgeListFile ef = [&] {
        try {
            return read_edge_list(edges_in);
        } catch (const Error& e) {
            throw ParseError(p.edges + ": " + e.what());
        }
    }();
    auto fin = detail::open_input(p.features);
    FeatureFile ff = read_features(fin);
    const std::size_t n = ef.graph.num_nodes();
    if (ff.features.rows() != n)
        throw ParseError("features cover " + std::to_string(ff.features.rows()) + " nodes, graph has " +
                         std::to_string(n));
    auto lin = detail::open_input(p.labels);
    auto labels = read_labels(lin, n);
    for (int y : labels)
        if (static_cast<std::size_t>(y) >= ff.num_classes) throw ParseError("label outside [0, C)");
    auto min = detail::open_input(p.masks);
    NodeSplit split = read_masks(min, n);
    return {p.name, std::move(ef.graph), std::move(ff.features), std::move(labels), ff.num_classes,
            std::move(split)};
}

inline void write_dataset(const Dataset& d, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream(dir / "edges.txt") << [&] {
        std::ostringstream s;
        write_edge_list(s, d.graph);
        return s.str();
    }();
    std::ofstream fo(dir / "features.txt");
    write_features(fo, d.features, d.num_classes);
    std::ofstream lo(dir / "labels.txt");
    for (int y : d.labels) lo << y << '\n';
    std::ofstream mo(dir / "masks.txt");
    for (Split s : d.split.role) mo << static_cast<char>(s);
    mo << '\n';
}

inline DatasetPaths dataset_paths_in(const fs::path& dir, std::string name) {
    return {std::move(name), (dir / "edges.txt").string(), (dir / "features.txt").string(),
            (dir / "labels.txt").string(), (dir / "masks.txt").string()};
}

struct SbmConfig {
    std::size_t num_nodes = 100;
    std::size_t num_classes = 3;
    std::size_t feature_dim = 8;
    double p_in = 0.15;
    double p_out = 0.02;
    double feature_signal = 1.0;
    bool directed = false;
    double train_fraction = 0.2;
    double val_fraction = 0.2;
};

/// Stochastic block model with Gaussian class-centroid features. Isolated nodes
/// get one edge to a same-class node so every node has a neighbour.
inline Dataset generate_sbm(const SbmConfig& c, std::uint64_t seed) {
    if (c.num_nodes < 2 || c.num_classes < 2 || c.feature_dim == 0)
        throw InvalidArgument("sbm: needs >= 2 nodes, >= 2 classes and a positive feature dim");
    Rng rng(derive_seed(seed, {"sbm"}));
    const std::size_t n = c.num_nodes;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c.num_classes);
    Graph g(n, c.directed ? GraphMode::directed : GraphMode::undirected);
    for (Node i = 0; i < n; ++i)
        for (Node j = 0; j < n; ++j) {
            if (i == j || (!c.directed && j < i)) continue;
            if (rng.bernoulli(labels[i] == labels[j] ? c.p_in : c.p_out)) g.add_edge(i, j);
        }
    for (Node i = 0; i < n; ++i) {
        if (!g.neighbors(i, NeighborKind::both).empty()) continue;
        Node j = static_cast<Node>((i + c.num_classes) % n);
        g.add_edge(i, j == i ? static_cast<Node>((i + 1) % n) : j);
    }
    DenseMatrix centroids(c.num_classes, c.feature_dim);
    for (double& v : centroids.data()) v = rng.normal() * c.feature_signal;
    DenseMatrix x(n, c.feature_dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c.feature_dim; ++j)
            x(i, j) = centroids(static_cast<std::size_t>(labels[i]), j) + rng.normal();
    NodeSplit split;
    split.role.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        split.role[i] = u < c.train_fraction                  ? Split::train
                        : u < c.train_fraction + c.val_fraction ? Split::val
                                                                : Split::test;
    }
    // Guarantee every class has a training node.
    for (std::size_t k = 0; k < c.num_classes && k < n; ++k) split.role[k] = Split::train;
    return {"sbm", std::move(g), std::move(x), std::move(labels), c.num_classes, std::move(split)};
}

// ------------------------------------------------------------ serialization

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline Json edit_to_json(const EditRecord& e) {
    Json edges = Json::array();
    for (const Edge& x : e.edges) edges.push_back({x.u, x.v});
    Json j;
    j["t"] = e.t;
    j["action"] = std::string(to_string(e.action));
    j["edges"] = std::move(edges);
    j["score"] = std::isfinite(e.score) ? Json(e.score) : Json(nullptr);
    j["reason"] = e.reason;
    return j;
}

inline Json edit_log_to_json(const std::vector<EditRecord>& edits) {
    Json a = Json::array();
    for (const auto& e : edits) a.push_back(edit_to_json(e));
    return a;
}

inline std::vector<EditRecord> edit_log_from_json(const Json& a) {
    if (!a.is_array()) throw ParseError("edit log: expected a JSON array");
    std::vector<EditRecord> out;
    try {
        for (const auto& j : a) {
            EditRecord e;
            e.t = j.at("t").get<std::size_t>();
            e.action = parse_edit_action(j.at("action").get<std::string>());
            for (const auto& x : j.at("edges")) e.edges.push_back({x.at(0).get<Node>(), x.at(1).get<Node>()});
            e.score = j.at("score").is_null() ? std::nan("") : j.at("score").get<double>();
            e.reason = j.at("reason").get<std::string>();
            out.push_back(std::move(e));
        }
    } catch (const Json::exception& ex) {
        throw ParseError(std::string("edit log: ") + ex.what());
    }
    return out;
}

inline Json matrix_to_json(const DenseMatrix& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

inline DenseMatrix matrix_from_json(const Json& rows) {
    const std::size_t n = rows.size();
    const std::size_t d = n ? rows.at(0).size() : 0;
    std::vector<double> data;
    data.reserve(n * d);
    for (const auto& r : rows) {
        if (r.size() != d) throw ParseError("matrix: ragged rows");
        for (const auto& v : r) data.push_back(v.get<double>());
    }
    return DenseMatrix(n, d, std::move(data));
}

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    static std::atomic<std::uint64_t> counter{0};
    const fs::path tmp = path.string() + ".tmp." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

// ------------------------------------------------------------------- config

struct ExperimentConfig {
    DatasetPaths dataset;
    ModelKind model = ModelKind::gcn;
    bool pairnorm = false;
    std::vector<Strategy> strategies{Strategy::none};
    std::vector<double> budgets{0.0};
    std::vector<std::size_t> depths{2};
    std::uint64_t root_seed = 0;
    std::string output_dir = "runs";
    HyperParams hyper;
    std::size_t epochs = 200;

    void validate() const {
        if (strategies.empty() || budgets.empty() || depths.empty())
            throw InvalidArgument("config: strategies, budgets and depths must be nonempty");
        for (double b : budgets)
            if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("config: budgets must lie in [0, 1]");
        for (auto d : depths)
            if (d < 1) throw InvalidArgument("config: depths must be >= 1");
        if (epochs == 0) throw InvalidArgument("config: epochs must be positive");
    }
};

inline Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["dataset"] = {{"name", c.dataset.name},
                    {"edges", c.dataset.edges},
                    {"features", c.dataset.features},
                    {"labels", c.dataset.labels},
                    {"masks", c.dataset.masks}};
    j["model"] = std::string(to_string(c.model));
    j["pairnorm"] = c.pairnorm;
    Json s = Json::array();
    for (auto x : c.strategies) s.push_back(std::string(to_string(x)));
    j["strategies"] = s;
    j["budgets"] = c.budgets;
    j["depths"] = c.depths;
    j["root_seed"] = c.root_seed;
    j["output_dir"] = c.output_dir;
    j["hyperparameters"] = {{"hidden_dim", c.hyper.hidden_dim},
                            {"dropout", c.hyper.dropout},
                            {"lr", c.hyper.lr},
                            {"weight_decay", c.hyper.weight_decay}};
    j["epochs"] = c.epochs;
    return j;
}

/// Relative dataset paths resolve against `base` (the config file's directory).
/// Hyperparameters default to the dataset's published preset when one exists.
inline ExperimentConfig config_from_json(const Json& j, const fs::path& base = {}) {
    ExperimentConfig c;
    try {
        const auto& d = j.at("dataset");
        auto resolve = [&](const char* key) {
            fs::path p = d.at(key).get<std::string>();
            return (p.is_relative() && !base.empty() ? base / p : p).lexically_normal().string();
        };
        c.dataset.name = d.value("name", std::string("dataset"));
        c.dataset.edges = resolve("edges");
        c.dataset.features = resolve("features");
        c.dataset.labels = resolve("labels");
        c.dataset.masks = resolve("masks");
        c.model = parse_model_kind(j.value("model", std::string("gcn")));
        c.pairnorm = j.value("pairnorm", false);
        if (j.contains("strategies")) {
            c.strategies.clear();
            for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
        }
        if (j.contains("budgets")) c.budgets = j.at("budgets").get<std::vector<double>>();
        if (j.contains("depths")) c.depths = j.at("depths").get<std::vector<std::size_t>>();
        c.root_seed = j.value("root_seed", std::uint64_t{0});
        c.output_dir = j.value("output_dir", std::string("runs"));
        if (!c.output_dir.empty() && fs::path(c.output_dir).is_relative() && !base.empty())
            c.output_dir = (base / c.output_dir).lexically_normal().string();
        c.hyper = table6_hyperparameters(c.dataset.name).value_or(HyperParams{});
        if (j.contains("hyperparameters")) {
            const auto& h = j.at("hyperparameters");
            c.hyper.hidden_dim = h.value("hidden_dim", c.hyper.hidden_dim);
            c.hyper.dropout = h.value("dropout", c.hyper.dropout);
            c.hyper.lr = h.value("lr", c.hyper.lr);
            c.hyper.weight_decay = h.value("weight_decay", c.hyper.weight_decay);
        }
        c.epochs = j.value("epochs", c.epochs);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

/// Content hash over the canonical config (minus the output location) and the
/// bytes of every input file.
inline std::string config_fingerprint(const ExperimentConfig& c) {
    Json j = config_to_json(c);
    j.erase("output_dir");
    std::uint64_t h = fnv1a(j.dump());
    for (const auto& p : {c.dataset.edges, c.dataset.features, c.dataset.labels, c.dataset.masks})
        h = fnv1a(read_file(p), mix64(h));
    return hex64(h);
}

inline std::uint64_t run_seed(std::uint64_t root, Strategy s, double budget, std::size_t depth) {
    return derive_seed(root, {to_string(s), format_real(budget), std::to_string(depth)});
}

// ------------------------------------------------------------------ records

struct DepthResult {
    std::size_t depth = 0;
    bool ok = false;
    double test_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    std::size_t best_epoch = 0;
    std::string error;

    friend bool operator==(const DepthResult&, const DepthResult&) = default;
};

struct RunRecord {
    std::string fingerprint;
    std::string dataset;
    ModelKind model = ModelKind::gcn;
    bool pairnorm = false;
    Strategy strategy = Strategy::none;
    double budget = 0.0;
    std::size_t added = 0;
    std::size_t removed = 0;
    std::string rewiring_termination;
    std::optional<std::string> rewiring_error;
    std::vector<DepthResult> depths;
    std::optional<std::size_t> best_layer;
    double max_test_accuracy = 0.0;
    double wall_time_seconds = 0.0;  ///< kept out of the record file; see timing.json

    bool ok() const {
        if (rewiring_error) return false;
        return std::all_of(depths.begin(), depths.end(), [](const DepthResult& d) { return d.ok; });
    }
};

inline Json record_to_json(const RunRecord& r) {
    Json depths = Json::array();
    for (const auto& d : r.depths) {
        Json x{{"depth", d.depth}, {"ok", d.ok}};
        if (d.ok) {
            x["test_accuracy"] = d.test_accuracy;
            x["best_val_accuracy"] = d.best_val_accuracy;
            x["best_epoch"] = d.best_epoch;
        } else {
            x["error"] = d.error;
        }
        depths.push_back(std::move(x));
    }
    Json j{{"fingerprint", r.fingerprint},
           {"dataset", r.dataset},
           {"model", std::string(to_string(r.model))},
           {"pairnorm", r.pairnorm},
           {"strategy", std::string(to_string(r.strategy))},
           {"budget", r.budget},
           {"added", r.added},
           {"removed", r.removed},
           {"rewiring_termination", r.rewiring_termination},
           {"depths", std::move(depths)},
           {"max_test_accuracy", r.max_test_accuracy}};
    j["rewiring_error"] = r.rewiring_error ? Json(*r.rewiring_error) : Json(nullptr);
    j["best_layer"] = r.best_layer ? Json(*r.best_layer) : Json(nullptr);
    return j;
}

inline RunRecord record_from_json(const Json& j) {
    RunRecord r;
    try {
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.model = parse_model_kind(j.at("model").get<std::string>());
        r.pairnorm = j.at("pairnorm").get<bool>();
        r.strategy = parse_strategy(j.at("strategy").get<std::string>());
        r.budget = j.at("budget").get<double>();
        r.added = j.at("added").get<std::size_t>();
        r.removed = j.at("removed").get<std::size_t>();
        r.rewiring_termination = j.value("rewiring_termination", std::string());
        if (j.contains("rewiring_error") && !j["rewiring_error"].is_null())
            r.rewiring_error = j["rewiring_error"].get<std::string>();
        for (const auto& x : j.at("depths")) {
            DepthResult d;
            d.depth = x.at("depth").get<std::size_t>();
            d.ok = x.at("ok").get<bool>();
            if (d.ok) {
                d.test_accuracy = x.at("test_accuracy").get<double>();
                d.best_val_accuracy = x.value("best_val_accuracy", 0.0);
                d.best_epoch = x.value("best_epoch", std::size_t{0});
            } else {
                d.error = x.value("error", std::string());
            }
            r.depths.push_back(d);
        }
        if (!j.at("best_layer").is_null()) r.best_layer = j.at("best_layer").get<std::size_t>();
        r.max_test_accuracy = j.at("max_test_accuracy").get<double>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("run record: ") + e.what());
    }
    return r;
}

/// Best depth by test accuracy; ties take the smallest depth.
inline void finalize_best(RunRecord& r) {
    r.best_layer.reset();
    r.max_test_accuracy = 0.0;
    for (const auto& d : r.depths) {
        if (!d.ok) continue;
        if (!r.best_layer || d.test_accuracy > r.max_test_accuracy ||
            (d.test_accuracy == r.max_test_accuracy && d.depth < *r.best_layer)) {
            r.best_layer = d.depth;
            r.max_test_accuracy = d.test_accuracy;
        }
    }
}

struct SummaryRow {
    std::string model;
    bool pairnorm = false;
    std::string strategy;
    std::string dataset;
    double budget = 0.0;
    std::size_t best_layer = 0;
    double accuracy = 0.0;
    std::string cell;  ///< "L / acc" with accuracy in percent, one decimal
};

inline std::string format_cell(std::size_t layer, double accuracy) {
    std::ostringstream s;
    s << layer << " / " << std::fixed << std::setprecision(1) << accuracy * 100.0;
    return s.str();
}

/// One row per (model, pairnorm, strategy, dataset, budget) holding the
/// best-over-depth accuracy; groups without a successful depth are omitted.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
    if (records.empty()) throw InvalidArgument("summarize: no records");
    using Key = std::tuple<std::string, bool, std::string, std::string, double>;
    std::map<Key, std::pair<std::size_t, double>> best;
    for (const auto& r : records) {
        const Key k{std::string(to_string(r.model)), r.pairnorm, std::string(to_string(r.strategy)), r.dataset,
                    r.budget};
        for (const auto& d : r.depths) {
            if (!d.ok) continue;
            auto it = best.find(k);
            if (it == best.end() || d.test_accuracy > it->second.second ||
                (d.test_accuracy == it->second.second && d.depth < it->second.first))
                best[k] = {d.depth, d.test_accuracy};
        }
    }
    std::vector<SummaryRow> rows;
    for (const auto& [k, v] : best) {
        const auto& [model, pn, strat, ds, budget] = k;
        rows.push_back({model, pn, strat, ds, budget, v.first, v.second, format_cell(v.first, v.second)});
    }
    return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream s;
    s << "model,pairnorm,strategy,dataset,budget,best_layer,accuracy,cell\n";
    for (const auto& r : rows)
        s << r.model << ',' << (r.pairnorm ? 1 : 0) << ',' << r.strategy << ',' << r.dataset << ','
          << format_real(r.budget) << ',' << r.best_layer << ',' << format_real(r.accuracy) << ',' << r.cell
          << '\n';
    return s.str();
}

// ----------------------------------------------------------------- pipeline

/// Worker count from ERR_THREADS, else the hardware concurrency.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("ERR_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `jobs[i]()` on up to `workers` threads. Each job owns its outputs, so
/// results do not depend on scheduling.
inline void run_parallel(const std::vector<std::function<void()>>& jobs, std::size_t workers) {
    workers = std::max<std::size_t>(1, std::min(workers, jobs.size()));
    if (workers == 1) {
        for (const auto& j : jobs) j();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < jobs.size();) jobs[i]();
        });
    for (auto& t : pool) t.join();
}

inline std::string run_label(Strategy s, double budget) {
    return std::string(to_string(s)) + "_b" + format_real(budget);
}

struct PipelineResult {
    fs::path run_dir;
    std::vector<RunRecord> records;

    bool ok() const {
        return std::all_of(records.begin(), records.end(), [](const RunRecord& r) { return r.ok(); });
    }
};

/// Embeddings captured at a run's best checkpoint, plus what diagnostics need.
inline Json embedding_archive(const Dataset& d, Strategy s, double budget, std::size_t depth,
                              const std::vector<DenseMatrix>& layers) {
    Json layer_json = Json::array();
    // Layer 0 is the raw feature matrix; it is stored once in the dataset.
    for (std::size_t l = 1; l < layers.size(); ++l) layer_json.push_back(matrix_to_json(layers[l]));
    std::string masks;
    for (Split x : d.split.role) masks.push_back(static_cast<char>(x));
    return {{"strategy", std::string(to_string(s))},
            {"budget", budget},
            {"depth", depth},
            {"labels", d.labels},
            {"masks", masks},
            {"layers", std::move(layer_json)}};
}

/// Algorithm pipeline: rewire once per (strategy, budget), then train every
/// depth on the rewired graph. Outputs land in output_dir/<fingerprint>/.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, std::size_t workers = worker_count()) {
    cfg.validate();
    const Dataset data = load_dataset(cfg.dataset);
    const std::string fp = config_fingerprint(cfg);
    PipelineResult result;
    result.run_dir = fs::path(cfg.output_dir) / fp;
    fs::create_directories(result.run_dir);
    write_file_atomic(result.run_dir / "config.json", config_to_json(cfg).dump(2) + "\n");

    struct Cell {
        Strategy strategy;
        double budget;
    };
    std::vector<Cell> cells;
    for (auto s : cfg.strategies)
        for (double b : cfg.budgets) cells.push_back({s, b});

    std::vector<std::optional<RewiringState>> rewired(cells.size());
    std::vector<RunRecord> records(cells.size());
    std::vector<double> rewire_seconds(cells.size(), 0.0);
    std::vector<std::function<void()>> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c)
        jobs.push_back([&, c] {
            const auto t0 = std::chrono::steady_clock::now();
            RunRecord& r = records[c];
            r.fingerprint = fp;
            r.dataset = data.name;
            r.model = cfg.model;
            r.pairnorm = cfg.pairnorm;
            r.strategy = cells[c].strategy;
            r.budget = cells[c].budget;
            try {
                RewiringConfig rc{cells[c].strategy, cells[c].budget, cfg.root_seed};
                rewired[c] = rewire(data.graph, rc);
                r.added = rewired[c]->added_count;
                r.removed = rewired[c]->removed_count;
                r.rewiring_termination = rewired[c]->termination;
                r.rewiring_error = rewired[c]->error;
                write_file_atomic(result.run_dir / "edits" / (run_label(r.strategy, r.budget) + ".json"),
                                  edit_log_to_json(rewired[c]->edits).dump(1) + "\n");
                std::ostringstream g;
                write_edge_list(g, rewired[c]->graph);
                write_file_atomic(result.run_dir / "graphs" / (run_label(r.strategy, r.budget) + ".txt"), g.str());
            } catch (const std::exception& e) {
                r.rewiring_error = e.what();
                rewired[c].reset();
            }
            rewire_seconds[c] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        });
    run_parallel(jobs, workers);

    struct Job {
        std::size_t cell;
        std::size_t depth_index;
    };
    std::vector<Job> train_jobs;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        records[c].depths.resize(cfg.depths.size());
        for (std::size_t k = 0; k < cfg.depths.size(); ++k) {
            records[c].depths[k].depth = cfg.depths[k];
            if (!rewired[c] || rewired[c]->error) {
                records[c].depths[k].error = "rewiring failed";
                continue;
            }
            train_jobs.push_back({c, k});
        }
    }
    std::vector<double> train_seconds(train_jobs.size(), 0.0);
    jobs.clear();
    for (std::size_t j = 0; j < train_jobs.size(); ++j)
        jobs.push_back([&, j] {
            const auto t0 = std::chrono::steady_clock::now();
            const auto [c, k] = train_jobs[j];
            DepthResult& out = records[c].depths[k];
            try {
                const Graph& rg = rewired[c]->graph;
                const Graph g = cfg.model == ModelKind::gcn && rg.directed() ? symmetrize(rg) : rg;
                TrainConfig tc{cfg.model, out.depth, cfg.hyper, cfg.pairnorm, cfg.epochs,
                               run_seed(cfg.root_seed, cells[c].strategy, cells[c].budget, out.depth)};
                TrainReport rep = train(g, data.features, data.labels, data.num_classes, data.split, tc);
                out.ok = true;
                out.test_accuracy = rep.test_accuracy_at_best;
                out.best_val_accuracy = rep.best_val_accuracy;
                out.best_epoch = rep.best_epoch;
                const std::string name = run_label(cells[c].strategy, cells[c].budget) + "_d" + std::to_string(out.depth);
                write_file_atomic(result.run_dir / "embeddings" / (name + ".json"),
                                  embedding_archive(data, cells[c].strategy, cells[c].budget, out.depth,
                                                    rep.captured_embeddings)
                                          .dump() +
                                      "\n");
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
            train_seconds[j] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        });
    run_parallel(jobs, workers);

    for (std::size_t j = 0; j < train_jobs.size(); ++j) rewire_seconds[train_jobs[j].cell] += train_seconds[j];
    Json timing = Json::object();
    std::ostringstream csv;
    csv << "strategy,budget,added,removed,depth,ok,test_accuracy,best_epoch\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        RunRecord& r = records[c];
        finalize_best(r);
        r.wall_time_seconds = rewire_seconds[c];
        timing[run_label(r.strategy, r.budget)] = r.wall_time_seconds;
        write_file_atomic(result.run_dir / "records" / (run_label(r.strategy, r.budget) + ".json"),
                          record_to_json(r).dump(2) + "\n");
        for (const auto& d : r.depths)
            csv << to_string(r.strategy) << ',' << format_real(r.budget) << ',' << r.added << ',' << r.removed
                << ',' << d.depth << ',' << (d.ok ? 1 : 0) << ',' << (d.ok ? format_real(d.test_accuracy) : "")
                << ',' << (d.ok ? std::to_string(d.best_epoch) : "") << '\n';
    }
    write_file_atomic(result.run_dir / "records.csv", csv.str());
    write_file_atomic(result.run_dir / "timing.json", timing.dump(2) + "\n");
    result.records = std::move(records);
    return result;
}

/// Loads every record file of a run directory, in file-name order.
inline std::vector<RunRecord> load_records(const fs::path& run_dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(run_dir / "records"))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> out;
    for (const auto& f : files) out.push_back(record_from_json(Json::parse(read_file(f))));
    return out;
}

// -------------------------------------------------------------- diagnostics

struct EmbeddingArchive {
    Strategy strategy = Strategy::none;
    double budget = 0.0;
    std::size_t depth = 0;
    std::vector<int> labels;
    NodeSplit split;
    std::vector<DenseMatrix> layers;  ///< H^(1) .. H^(depth)
};

inline EmbeddingArchive load_embedding_archive(const fs::path& path) {
    EmbeddingArchive a;
    try {
        const Json j = Json::parse(read_file(path));
        a.strategy = parse_strategy(j.at("strategy").get<std::string>());
        a.budget = j.at("budget").get<double>();
        a.depth = j.at("depth").get<std::size_t>();
        a.labels = j.at("labels").get<std::vector<int>>();
        std::istringstream masks(j.at("masks").get<std::string>());
        a.split = read_masks(masks, a.labels.size());
        for (const auto& l : j.at("layers")) a.layers.push_back(matrix_from_json(l));
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (a.layers.size() != a.depth) throw ParseError(path.string() + ": layer count does not match depth");
    return a;
}

struct DiagnoseOptions {
    std::size_t outer_depth = 7;  ///< depth whose inner layers form the cosine curve
    std::uint64_t seed = 0;
};

struct DiagnoseOutput {
    std::vector<fs::path> files;
    std::size_t zero_rows_excluded = 0;
};

/// Reads a sweep directory (embeddings/, edits/) and writes cosine curves,
/// probe grids, CKA tables and added-edge overlap tables as CSV into `out_dir`.
inline DiagnoseOutput diagnose_run(const fs::path& run_dir, const fs::path& out_dir, const DiagnoseOptions& opt = {}) {
    std::vector<fs::path> files;
    if (fs::exists(run_dir / "embeddings"))
        for (const auto& e : fs::directory_iterator(run_dir / "embeddings"))
            if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InvalidArgument("diagnose: no embedding archives under " + run_dir.string());
    std::vector<EmbeddingArchive> archives;
    for (const auto& f : files) archives.push_back(load_embedding_archive(f));
    std::sort(archives.begin(), archives.end(), [](const EmbeddingArchive& a, const EmbeddingArchive& b) {
        return std::tuple(to_string(a.strategy), a.budget, a.depth) < std::tuple(to_string(b.strategy), b.budget, b.depth);
    });

    DiagnoseOutput out;
    fs::create_directories(out_dir);
    std::map<std::string, std::vector<const EmbeddingArchive*>> by_cell;
    for (const auto& a : archives) by_cell[run_label(a.strategy, a.budget)].push_back(&a);

    for (const auto& [label, cell] : by_cell) {
        const EmbeddingArchive* outer = nullptr;
        for (const auto* a : cell)
            if (a->depth == opt.outer_depth) outer = a;
        if (!outer) outer = cell.back();  // deepest available
        std::ostringstream cos;
        cos << "layer,same_mean,diff_mean\n";
        const auto curve = class_pair_cosine(outer->layers, outer->labels, derive_seed(opt.seed, {label}));
        for (const auto& st : curve) {
            cos << st.layer + 1 << ',' << format_real(st.same_mean) << ',' << format_real(st.diff_mean) << '\n';
            out.zero_rows_excluded += st.zero_rows;
        }
        out.files.push_back(out_dir / ("cosine_" + label + ".csv"));
        write_file_atomic(out.files.back(), cos.str());

        std::ostringstream probe;
        probe << "depth,readout_layer,accuracy\n";
        for (const auto* a : cell)
            for (std::size_t l = 1; l < a->depth; ++l) {
                const auto r = linear_probe(a->layers[l - 1], a->labels, a->split);
                probe << a->depth << ',' << l << ',' << format_real(r.accuracy) << '\n';
            }
        out.files.push_back(out_dir / ("probe_" + label + ".csv"));
        write_file_atomic(out.files.back(), probe.str());
    }

    std::map<double, std::vector<const EmbeddingArchive*>> by_budget;
    for (const auto& a : archives) by_budget[a.budget].push_back(&a);
    for (const auto& [budget, group] : by_budget) {
        const std::string suffix = "b" + format_real(budget);
        std::ostringstream cka;
        cka << "strategy_a,strategy_b,depth,cka\n";
        for (const auto* a : group)
            for (const auto* b : group)
                if (a->depth == b->depth && to_string(a->strategy) < to_string(b->strategy))
                    cka << to_string(a->strategy) << ',' << to_string(b->strategy) << ',' << a->depth << ','
                        << format_real(linear_cka(a->layers.back(), b->layers.back())) << '\n';
        out.files.push_back(out_dir / ("cka_" + suffix + ".csv"));
        write_file_atomic(out.files.back(), cka.str());

        std::vector<std::string> names;
        std::vector<std::set<Edge>> sets;
        std::set<Strategy> seen;
        for (const auto* a : group) {
            if (!seen.insert(a->strategy).second) continue;
            const fs::path log = run_dir / "edits" / (run_label(a->strategy, budget) + ".json");
            if (!fs::exists(log)) continue;
            std::set<Edge> added;
            for (const auto& e : edit_log_from_json(Json::parse(read_file(log))))
                if (e.action == EditAction::add || e.action == EditAction::add_pair)
                    added.insert(e.edges.begin(), e.edges.end());
            if (added.empty()) continue;
            names.push_back(std::string(to_string(a->strategy)));
            sets.push_back(std::move(added));
        }
        if (sets.size() < 2) continue;
        std::ostringstream upset;
        upset << "subset_mask,exclusive_size,jaccard\n";
        for (const auto& r : edge_set_overlap(sets))
            upset << r.subset_mask << ',' << r.exclusive_size << ',' << format_real(r.jaccard) << '\n';
        out.files.push_back(out_dir / ("upset_" + suffix + ".csv"));
        write_file_atomic(out.files.back(), upset.str());
        Json legend = Json::array();
        for (std::size_t k = 0; k < names.size(); ++k) legend.push_back({{"bit", k}, {"strategy", names[k]}});
        out.files.push_back(out_dir / ("upset_" + suffix + "_sets.json"));
        write_file_atomic(out.files.back(), legend.dump(2) + "\n");
    }
    return out;
}

} // namespace errw
