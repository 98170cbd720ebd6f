// err: command-line front end for rewiring, resistance/curvature scoring,
// training, sweeps, summaries and diagnostics.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "errw/errw.hpp"

namespace {

using namespace errw;

Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    auto file = read_edge_list(in);
    if (file.dropped_self_loops)
        std::cerr << "note: dropped " << file.dropped_self_loops << " self-loop(s) from " << path << '\n';
    if (file.duplicate_edges) std::cerr << "note: ignored " << file.duplicate_edges << " duplicate edge(s)\n";
    return std::move(file.graph);
}

/// Opens `path` for writing, or returns stdout when it is empty or "-".
std::ostream& output_stream(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
    if (path.empty() || path == "-") return std::cout;
    holder = std::make_unique<std::ofstream>(path);
    if (!*holder) throw Error("cannot write '" + path + "'");
    return *holder;
}

int cmd_resistance(const std::string& input, const std::string& output) {
    const Graph g = load_graph(input);
    const ResistanceReport report = effective_resistance(g);
    const ResistanceReport hop = resistance_per_hop(report, g);
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = output_stream(output, holder);
    os << "i,j,R,R_hop,d\n";
    std::vector<Hops> dist;
    Node current = kUnreachable;
    report.values.for_each([&](Node i, Node j, double r) {
        if (!g.directed() && i > j) return;
        if (i != current) {
            dist = bfs_distances(g, i);
            current = i;
        }
        const auto h = hop.values.get(i, j);
        os << i << ',' << j << ',' << format_real(r) << ',' << (h ? format_real(*h) : "") << ','
           << (dist[j] == kUnreachable ? std::string() : std::to_string(dist[j])) << '\n';
    });
    for (std::size_t c = 0; c < report.lyapunov_residuals.size(); ++c)
        if (report.lyapunov_residuals[c] == report.lyapunov_residuals[c])
            std::cerr << "scc " << c << " lyapunov residual " << report.lyapunov_residuals[c] << '\n';
    return 0;
}

int cmd_curvature(const std::string& input, const std::string& output) {
    const Graph g = load_graph(input);
    const CurvatureReport report = curvature_all_edges(g);
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = output_stream(output, holder);
    os << "u,v,kappa\n";
    for (const auto& ec : report.edge_values)
        os << ec.edge.u << ',' << ec.edge.v << ',' << format_real(ec.kappa) << '\n';
    return 0;
}

int cmd_rewire(const std::string& strategy, double budget, const std::string& input, const std::string& output,
               const std::string& log) {
    const Graph g0 = load_graph(input);
    RewiringConfig cfg{parse_strategy(strategy), budget, 0};
    const RewiringState st = rewire(g0, cfg);
    if (!log.empty()) write_file_atomic(log, edit_log_to_json(st.edits).dump(1) + "\n");
    std::ostringstream g;
    write_edge_list(g, st.graph);
    if (output.empty() || output == "-")
        std::cout << g.str();
    else
        write_file_atomic(output, g.str());
    std::cerr << "budget " << st.budget << ", added " << st.added_count << ", removed " << st.removed_count
              << ", iterations " << st.iterations << " (" << st.termination << ")\n";
    if (st.error) {
        std::cerr << "error: " << *st.error << '\n';
        return 1;
    }
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string name = "dataset", edges, features, labels, masks;
    std::string model = "gcn";
    std::size_t depth = 2;
    bool pairnorm = false;
    std::uint64_t seed = 0;
    std::size_t epochs = 200;
    std::string output;
};

int cmd_train(const TrainArgs& a) {
    DatasetPaths paths{a.name, a.edges, a.features, a.labels, a.masks};
    TrainConfig tc;
    tc.model = parse_model_kind(a.model);
    tc.depth = a.depth;
    tc.pairnorm = a.pairnorm;
    tc.seed = a.seed;
    tc.epochs = a.epochs;
    tc.hyper = table6_hyperparameters(a.name).value_or(HyperParams{});
    if (!a.config.empty()) {
        const ExperimentConfig cfg = load_config(a.config);
        paths = cfg.dataset;
        tc.model = cfg.model;
        tc.pairnorm = cfg.pairnorm;
        tc.hyper = cfg.hyper;
        tc.epochs = cfg.epochs;
        tc.seed = cfg.root_seed;
    }
    const Dataset d = load_dataset(paths);
    const Graph g = tc.model == ModelKind::gcn && d.graph.directed() ? symmetrize(d.graph) : d.graph;
    const TrainReport rep = train(g, d.features, d.labels, d.num_classes, d.split, tc);
    Json j{{"dataset", d.name},
           {"model", std::string(to_string(tc.model))},
           {"depth", tc.depth},
           {"pairnorm", tc.pairnorm},
           {"best_epoch", rep.best_epoch},
           {"best_val_accuracy", rep.best_val_accuracy},
           {"test_accuracy", rep.test_accuracy_at_best},
           {"train_loss", rep.train_loss},
           {"val_accuracy", rep.val_accuracy}};
    if (a.output.empty())
        std::cout << j.dump(2) << '\n';
    else
        write_file_atomic(a.output, j.dump(2) + "\n");
    std::cerr << "test accuracy " << rep.test_accuracy_at_best << " at epoch " << rep.best_epoch << '\n';
    return 0;
}

int cmd_sweep(const std::string& config, std::size_t threads) {
    const ExperimentConfig cfg = load_config(config);
    const PipelineResult res = run_pipeline(cfg, threads ? threads : worker_count());
    std::cout << res.run_dir.string() << '\n';
    int failed = 0;
    for (const auto& r : res.records) {
        if (r.rewiring_error) {
            std::cerr << to_string(r.strategy) << " @ " << r.budget << ": rewiring failed: " << *r.rewiring_error << '\n';
            ++failed;
            continue;
        }
        for (const auto& d : r.depths)
            if (!d.ok) {
                std::cerr << to_string(r.strategy) << " @ " << r.budget << " depth " << d.depth << ": " << d.error
                          << '\n';
                ++failed;
            }
    }
    return failed ? 1 : 0;
}

int cmd_summarize(const std::vector<std::string>& run_dirs, const std::string& output) {
    std::vector<RunRecord> records;
    for (const auto& dir : run_dirs) {
        auto r = load_records(dir);
        records.insert(records.end(), r.begin(), r.end());
    }
    const std::string csv = summary_csv(summarize(records));
    if (output.empty() || output == "-")
        std::cout << csv;
    else
        write_file_atomic(output, csv);
    return 0;
}

int cmd_diagnose(const std::string& run_dir, const std::string& out_dir, std::size_t outer, std::uint64_t seed) {
    const auto out = diagnose_run(run_dir, out_dir, {outer, seed});
    for (const auto& f : out.files) std::cout << f.string() << '\n';
    if (out.zero_rows_excluded)
        std::cerr << "note: " << out.zero_rows_excluded << " zero-embedding row(s) excluded from cosine means\n";
    return 0;
}

int cmd_generate(const SbmConfig& c, std::uint64_t seed, const std::string& out_dir) {
    write_dataset(generate_sbm(c, seed), out_dir);
    std::cout << out_dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Resistance-guided graph rewiring and GNN experiments"};
    app.require_subcommand(1);
    int status = 0;

    std::string input, output, log, strategy = "resistance_add_remove";
    double budget = 0.0;

    auto* res = app.add_subcommand("resistance", "All-pairs effective resistance as CSV (i,j,R,R_hop,d)");
    res->add_option("--input,-i", input, "Edge-list file")->required();
    res->add_option("--output,-o", output, "CSV output (default stdout)");
    res->callback([&] { status = cmd_resistance(input, output); });

    auto* curv = app.add_subcommand("curvature", "Ollivier-Ricci curvature of every edge as CSV (u,v,kappa)");
    curv->add_option("--input,-i", input, "Edge-list file")->required();
    curv->add_option("--output,-o", output, "CSV output (default stdout)");
    curv->callback([&] { status = cmd_curvature(input, output); });

    auto* rw = app.add_subcommand("rewire", "Budgeted rewiring with an edit log");
    rw->add_option("--strategy,-s", strategy, "Rewiring strategy")->required();
    rw->add_option("--budget,-b", budget, "Budget fraction r in [0, 1]")->required();
    rw->add_option("--input,-i", input, "Edge-list file")->required();
    rw->add_option("--output,-o", output, "Rewired edge list (default stdout)");
    rw->add_option("--log,-l", log, "Edit log JSON");
    rw->callback([&] { status = cmd_rewire(strategy, budget, input, output, log); });

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train one model and report the best-validation checkpoint");
    tr->add_option("--config,-c", ta.config, "Experiment config (dataset, model, hyperparameters)");
    tr->add_option("--name", ta.name, "Dataset name (selects published hyperparameters)");
    tr->add_option("--edges", ta.edges, "Edge-list file");
    tr->add_option("--features", ta.features, "Feature file");
    tr->add_option("--labels", ta.labels, "Label file");
    tr->add_option("--masks", ta.masks, "Mask file");
    tr->add_option("--model", ta.model, "gcn or dirgcn");
    tr->add_option("--depth", ta.depth, "Layer count");
    tr->add_flag("--pairnorm", ta.pairnorm, "Apply PairNorm on hidden layers");
    tr->add_option("--seed", ta.seed, "Random seed");
    tr->add_option("--epochs", ta.epochs, "Training epochs");
    tr->add_option("--output,-o", ta.output, "Report JSON (default stdout)");
    tr->callback([&] {
        if (ta.config.empty() && (ta.edges.empty() || ta.features.empty() || ta.labels.empty() || ta.masks.empty()))
            throw CLI::ValidationError("train", "give --config or all of --edges/--features/--labels/--masks");
        status = cmd_train(ta);
    });

    std::string config;
    std::size_t threads = 0;
    auto* sw = app.add_subcommand("sweep", "Run a full strategy x budget x depth sweep");
    sw->add_option("--config,-c", config, "Experiment config JSON")->required();
    sw->add_option("--threads,-j", threads, "Worker threads (default ERR_THREADS or all cores)");
    sw->callback([&] { status = cmd_sweep(config, threads); });

    std::vector<std::string> run_dirs;
    auto* sm = app.add_subcommand("summarize", "Best layer / accuracy table from sweep records");
    sm->add_option("--run-dir,-r", run_dirs, "Sweep output directory (repeatable)")->required();
    sm->add_option("--output,-o", output, "CSV output (default stdout)");
    sm->callback([&] { status = cmd_summarize(run_dirs, output); });

    std::string run_dir, out_dir;
    std::size_t outer = 7;
    std::uint64_t seed = 0;
    auto* dg = app.add_subcommand("diagnose", "Cosine, probe, CKA and edge-overlap CSVs for a sweep");
    dg->add_option("--run-dir,-r", run_dir, "Sweep output directory")->required();
    dg->add_option("--out-dir,-o", out_dir, "Directory for CSV outputs")->required();
    dg->add_option("--outer-depth", outer, "Depth whose inner layers give the cosine curve");
    dg->add_option("--seed", seed, "Seed for pair sampling");
    dg->callback([&] { status = cmd_diagnose(run_dir, out_dir, outer, seed); });

    SbmConfig sbm;
    auto* gen = app.add_subcommand("generate", "Write a synthetic block-model dataset");
    gen->add_option("--nodes", sbm.num_nodes, "Node count");
    gen->add_option("--classes", sbm.num_classes, "Class count");
    gen->add_option("--dim", sbm.feature_dim, "Feature dimension");
    gen->add_option("--p-in", sbm.p_in, "Within-class edge probability");
    gen->add_option("--p-out", sbm.p_out, "Cross-class edge probability");
    gen->add_flag("--directed", sbm.directed, "Generate a directed graph");
    gen->add_option("--seed", seed, "Random seed");
    gen->add_option("--out-dir,-o", out_dir, "Output directory")->required();
    gen->callback([&] { status = cmd_generate(sbm, seed, out_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return status;
}
