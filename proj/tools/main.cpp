#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "CLI11.hpp"

#include "cfgraph/router.hpp"
#include "cfgraph/serialize.hpp"
#include "cfgraph/unlearn.hpp"

using json = nlohmann::json;
using namespace cfgraph;

namespace {

// ---------------------------------------------------------------------------
// Declarative key=value config files: `[section]` headers, `key = v1,v2,...`,
// `#` comments. Flat files (no header) land in the "" section.
// ---------------------------------------------------------------------------

using IniSection = std::map<std::string, std::string>;
using IniFile = std::map<std::string, IniSection>;

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

IniFile parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("config file not found: " + path);
    IniFile out;
    std::string section, line;
    while (std::getline(in, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line is not key=value: " + line);
        out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(trim(item));
    return items;
}

std::vector<double> double_list(const IniSection& sec, const std::string& key,
                                std::vector<double> fallback) {
    auto it = sec.find(key);
    if (it == sec.end()) return fallback;
    std::vector<double> out;
    for (const std::string& s : split_list(it->second)) out.push_back(std::stod(s));
    if (out.empty()) throw ValidationError("config: empty list for " + key);
    return out;
}

std::vector<int> int_list(const IniSection& sec, const std::string& key,
                          std::vector<int> fallback) {
    auto it = sec.find(key);
    if (it == sec.end()) return fallback;
    std::vector<int> out;
    for (const std::string& s : split_list(it->second)) out.push_back(std::stoi(s));
    if (out.empty()) throw ValidationError("config: empty list for " + key);
    return out;
}

std::vector<std::string> string_list(const IniSection& sec, const std::string& key,
                                     std::vector<std::string> fallback) {
    auto it = sec.find(key);
    if (it == sec.end()) return fallback;
    auto out = split_list(it->second);
    if (out.empty()) throw ValidationError("config: empty list for " + key);
    return out;
}

// ---------------------------------------------------------------------------
// Forget request files: kind=node, nodes=3,17,42 or edges=1-2,5-9
// ---------------------------------------------------------------------------

ForgetRequest load_request(const std::string& path) {
    const IniSection sec = parse_ini(path)[""];
    auto kind_it = sec.find("kind");
    if (kind_it == sec.end()) throw ValidationError("request file: missing kind=");
    ForgetRequest req;
    req.kind = forget_kind_from_name(kind_it->second);
    if (req.kind == ForgetKind::Edge) {
        auto it = sec.find("edges");
        if (it == sec.end()) throw ValidationError("request file: edge kind needs edges=");
        for (const std::string& pair : split_list(it->second)) {
            const auto dash = pair.find('-');
            if (dash == std::string::npos)
                throw ValidationError("request file: edge must be u-v: " + pair);
            req.edge_pairs.push_back({std::stoi(pair.substr(0, dash)),
                                      std::stoi(pair.substr(dash + 1))});
        }
    } else {
        auto it = sec.find("nodes");
        if (it == sec.end()) throw ValidationError("request file: missing nodes=");
        std::vector<NodeId> nodes;
        for (const std::string& s : split_list(it->second)) nodes.push_back(std::stoi(s));
        req.nodes = make_node_set(std::move(nodes));
    }
    return req;
}

// ---------------------------------------------------------------------------
// Final per-node scores: pipeline A applies correct-and-smooth when
// configured; the KRR head takes the requested kernel chunk size.
// ---------------------------------------------------------------------------

Matrix final_scores(const ModelVar& model, const Dataset& ds, Eigen::Index chunk) {
    if (const auto* a = std::get_if<PipelineAModel>(&model)) {
        Matrix base = predict_a(*a);
        if (a->config.cns && !ds.multi_label())
            base = correct_and_smooth(ds, base, *a->config.cns);
        return base;
    }
    const auto& b = std::get<LcfNetModel>(model);
    return krr_predict(b.head, b.h_final, chunk);
}

json report_json(const UnlearnReport& r) {
    return json{{"strategy", r.strategy},
                {"delta_theta", r.delta_theta},
                {"pred_agreement", r.pred_agreement},
                {"prob_equal", r.prob_equal},
                {"mia_auc", r.mia_auc},
                {"wall_clock", r.wall_clock},
                {"affected_size", r.affected_size},
                {"touched_rows", r.touched_rows},
                {"small_forget_set", r.small_forget_set}};
}

// ---------------------------------------------------------------------------
// Hyperparameter sweeps. Grids iterate in the declared order, so the first
// strictly-best validation score wins: ties resolve to the lexicographically
// smallest config tuple.
// ---------------------------------------------------------------------------

struct SweepCell {
    json config;
    double val_metric = 0.0;
};

FeatureVariant variant_from_name(const std::string& s) {
    if (s == "plain") return FeatureVariant::Plain;
    if (s == "concat") return FeatureVariant::MultihopConcat;
    if (s == "rff") return FeatureVariant::MultihopRff;
    throw ValidationError("unknown variant: " + s);
}

Phi phi_from_name(const std::string& s) {
    if (s == "none") return Phi::None;
    if (s == "tanh") return Phi::Tanh;
    if (s == "elu") return Phi::Elu;
    throw ValidationError("unknown phi: " + s);
}

std::pair<ModelVar, json> sweep_a(const Dataset& ds, const IniSection& sec,
                                  bool fp32, std::uint64_t seed, Eigen::Index chunk) {
    const std::vector<int> Ks = int_list(sec, "K", {1, 2, 3, 4, 5, 6, 7, 8});
    const std::vector<double> alphas =
        double_list(sec, "alpha", {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3});
    const std::vector<double> epsilons = double_list(sec, "epsilon", {0.0, 0.05, 0.1});
    const std::string variant = sec.count("variant") ? sec.at("variant") : "plain";
    const std::string x_src = sec.count("x_src") ? sec.at("x_src") : "raw";

    PipelineAConfig base;
    base.variant = variant_from_name(variant);
    base.x_src = x_src == "row-norm" ? SourceNorm::RowNormalized : SourceNorm::Raw;
    base.fp32 = fp32;
    if (sec.count("cns")) {
        const auto parts = split_list(sec.at("cns"));
        if (parts.size() != 3) throw ValidationError("config: cns needs 3 values");
        base.cns = CnsParams{std::stod(parts[0]), std::stod(parts[1]),
                             std::stoi(parts[2])};
    }
    if (base.variant == FeatureVariant::MultihopRff) {
        RffParams rff;
        if (sec.count("rff_features")) rff.num_features = std::stoi(sec.at("rff_features"));
        if (sec.count("rff_sigma")) rff.sigma = std::stod(sec.at("rff_sigma"));
        rff.seed = derive_seed(seed, 31);
        base.rff = rff;
    }

    std::vector<SweepCell> cells;
    std::optional<ModelVar> best;
    double best_val = -1.0;
    json best_cfg;
    for (int K : Ks)
        for (double alpha : alphas)
            for (double eps : epsilons) {
                PipelineAConfig cfg = base;
                cfg.K = K;
                cfg.alpha = alpha;
                cfg.epsilon = eps;
                if (base.variant == FeatureVariant::MultihopConcat)
                    cfg.group_alphas = std::vector<double>(K + 1, alpha);
                ModelVar model = fit_a(ds, cfg);
                const double val =
                    evaluate(final_scores(model, ds, chunk), ds, ds.val_mask);
                json jc{{"pipeline", "A"}, {"K", K}, {"alpha", alpha},
                        {"epsilon", eps},  {"variant", variant}};
                cells.push_back({jc, val});
                if (val > best_val) {
                    best_val = val;
                    best = std::move(model);
                    best_cfg = jc;
                }
            }
    json report{{"pipeline", "A"}, {"selected", best_cfg}, {"val_metric", best_val}};
    for (const SweepCell& c : cells)
        report["grid"].push_back({{"config", c.config}, {"val", c.val_metric}});
    return {std::move(*best), std::move(report)};
}

std::pair<ModelVar, json> sweep_lcf(const Dataset& ds, const IniSection& sec,
                                    Eigen::Index chunk) {
    const std::vector<int> Ks = int_list(sec, "K", {3, 6, 9});
    const std::vector<std::string> phis =
        string_list(sec, "phi", {"none", "tanh", "elu"});
    const std::vector<double> lambdas = double_list(sec, "lambda", {0.5, 1.0, 2.0});
    const std::vector<double> sigma_scales =
        double_list(sec, "sigma_scale", {0.25, 0.5, 1.0, 2.0, 4.0});
    const std::vector<double> lambda_primes =
        double_list(sec, "lambda_prime", {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0});

    LcfConfig base;
    if (sec.count("use_lcf")) base.use_lcf = sec.at("use_lcf") == "true";
    if (sec.count("whiten_h0")) base.whiten_h0 = sec.at("whiten_h0") == "true";

    std::vector<SweepCell> cells;
    std::optional<ModelVar> best;
    double best_val = -1.0;
    json best_cfg;
    for (int K : Ks)
        for (const std::string& phi : phis)
            for (double lambda : lambdas)
                for (double ss : sigma_scales)
                    for (double lp : lambda_primes) {
                        LcfConfig cfg = base;
                        cfg.K = K;
                        cfg.phi = phi_from_name(phi);
                        cfg.lambda = lambda;
                        cfg.sigma_scale = ss;
                        cfg.lambda_prime = lp;
                        ModelVar model = fit_lcfnet(ds, cfg);
                        const double val =
                            evaluate(final_scores(model, ds, chunk), ds, ds.val_mask);
                        json jc{{"pipeline", "B"},     {"K", K},
                                {"phi", phi},          {"lambda", lambda},
                                {"sigma_scale", ss},   {"lambda_prime", lp}};
                        cells.push_back({jc, val});
                        if (val > best_val) {
                            best_val = val;
                            best = std::move(model);
                            best_cfg = jc;
                        }
                    }
    json report{{"pipeline", "B"}, {"selected", best_cfg}, {"val_metric", best_val}};
    for (const SweepCell& c : cells)
        report["grid"].push_back({{"config", c.config}, {"val", c.val_metric}});
    return {std::move(*best), std::move(report)};
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw MissingFile("cannot write: " + path);
    out << text << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_route(const std::string& dir, double tau) {
    const Dataset ds = load_dataset(dir);
    const RoutingDecision d = route(ds, tau);
    json out{{"dataset", ds.name},
             {"pipeline", std::string(1, d.pipeline)},
             {"tau", d.tau},
             {"reason", d.reason}};
    if (d.h_adj) out["h_adj"] = *d.h_adj;
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_fit(const std::string& dir, const std::string& config_path,
            const std::string& out_model, double tau, const std::string& precision,
            std::uint64_t seed, Eigen::Index chunk) {
    const Dataset ds = load_dataset(dir);
    IniFile cfg;
    if (!config_path.empty()) cfg = parse_ini(config_path);
    const RoutingDecision d = route(ds, tau);
    auto [model, report] = d.pipeline == 'A'
                               ? sweep_a(ds, cfg["pipeline_a"], precision == "fp32",
                                         seed, chunk)
                               : sweep_lcf(ds, cfg["lcfnet"], chunk);
    save_model(model, out_model);
    report["routing"] = {{"pipeline", std::string(1, d.pipeline)}, {"reason", d.reason}};
    if (d.h_adj) report["routing"]["h_adj"] = *d.h_adj;
    report["test_metric"] = evaluate(final_scores(model, ds, chunk), ds, ds.test_mask);
    report["model_file"] = out_model;
    std::cout << report.dump(2) << '\n';
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& dir,
                const std::string& out_path, Eigen::Index chunk) {
    const ModelVar model = load_model(model_path);
    const Dataset ds = load_dataset(dir);
    const Matrix scores = final_scores(model, ds, chunk);
    if (scores.rows() != ds.n())
        throw DimensionMismatch("predict: model was fit on a different graph");
    std::ostringstream os;
    os << "node\tpred";
    for (Eigen::Index c = 0; c < scores.cols(); ++c) os << "\tscore" << c;
    for (NodeId v = 0; v < ds.n(); ++v) {
        Eigen::Index arg = 0;
        scores.row(v).maxCoeff(&arg);
        os << '\n' << v << '\t' << arg;
        for (Eigen::Index c = 0; c < scores.cols(); ++c) os << '\t' << scores(v, c);
    }
    write_text(out_path, os.str());
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dir,
             Eigen::Index chunk) {
    const ModelVar model = load_model(model_path);
    const Dataset ds = load_dataset(dir);
    const Matrix scores = final_scores(model, ds, chunk);
    json out{{"dataset", ds.name},
             {"metric", metric_name(ds.metric)},
             {"train", evaluate(scores, ds, ds.train_mask)},
             {"val", evaluate(scores, ds, ds.val_mask)},
             {"test", evaluate(scores, ds, ds.test_mask)}};
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_unlearn(const std::string& model_path, const std::string& dir,
                const std::string& request_path, const std::string& strategy,
                const std::string& out_model) {
    const ModelVar model = load_model(model_path);
    const Dataset ds = load_dataset(dir);
    const ForgetRequest req = load_request(request_path);
    auto [updated, report] = unlearn(model, ds, req, strategy_from_name(strategy));
    if (!out_model.empty()) save_model(updated, out_model);
    json out = report_json(report);
    out["forget_kind"] = forget_kind_name(req.kind);
    out["forget_size"] = req.size();
    if (!out_model.empty()) out["model_file"] = out_model;
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_verify_exact(const std::string& model_path, const std::string& dir,
                     const std::string& request_path) {
    const ModelVar model = load_model(model_path);
    const Dataset ds = load_dataset(dir);
    const ForgetRequest req = load_request(request_path);
    auto [m_khop, r_khop] = unlearn_khop(model, ds, req);
    auto [m_ref, r_ref] = retrain_from_scratch(model, ds, req);
    auto [ds_after, affected] = apply_forget(ds, req);
    const UnlearnReport v = verify_exact(m_khop, m_ref, ds_after);
    json out = report_json(v);
    out["exact"] = v.delta_theta == 0.0 && v.prob_equal;
    out["t_khop"] = r_khop.wall_clock;
    out["t_retrain"] = r_ref.wall_clock;
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_bench(const std::string& dir, const std::string& config_path,
              const std::string& out_path, std::uint64_t seed) {
    const Dataset ds = load_dataset(dir);
    IniSection sec;
    if (!config_path.empty()) sec = parse_ini(config_path)[""];
    const std::vector<std::string> kinds = string_list(
        sec, "kinds", {"label", "feature", "edge", "node", "subgraph"});
    const std::vector<int> sizes = int_list(sec, "sizes", {1, 8, 64});
    PipelineAConfig cfg;
    cfg.K = sec.count("K") ? std::stoi(sec.at("K")) : 2;
    cfg.alpha = sec.count("alpha") ? std::stod(sec.at("alpha")) : 1.0;
    std::vector<std::pair<ForgetKind, std::size_t>> grid;
    for (const std::string& kind : kinds)
        for (int size : sizes)
            grid.emplace_back(forget_kind_from_name(kind),
                              static_cast<std::size_t>(size));
    const auto rows = bench_unlearn(ds, cfg, grid, seed);
    std::ostringstream os;
    os << bench_csv_header();
    for (const BenchRow& r : rows) os << '\n' << bench_csv_line(r);
    write_text(out_path, os.str());
    return 0;
}

int cmd_gen_synth(const std::string& out_dir, NodeId n, int classes, double p_in,
                  double p_out, int dim, double sep, int clusters,
                  std::uint64_t seed, bool sparse, double avg_degree, double bias) {
    Dataset ds;
    if (sparse) {
        ds = generate_sparse(n, avg_degree, classes, dim, bias, seed);
    } else {
        SbmSpec spec;
        spec.n = n;
        spec.num_classes = classes;
        spec.p_in = p_in;
        spec.p_out = p_out;
        spec.feature_dim = dim;
        spec.class_mean_separation = sep;
        spec.feature_clusters_per_class = clusters;
        spec.seed = seed;
        ds = generate_sbm(spec);
    }
    save_dataset(ds, out_dir);
    json out{{"dir", out_dir},    {"n", ds.n()},
             {"edges", ds.graph.edges.size()}, {"classes", ds.num_classes()},
             {"seed", seed}};
    std::cout << out.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-form graph node classification with exact unlearning"};
    app.require_subcommand(1);

    std::string dataset_dir, model_path, config_path, request_path;
    std::string out_path, precision = "fp64", strategy = "khop";
    double tau = kDefaultTau;
    std::uint64_t seed = 0;
    Eigen::Index chunk = kDefaultKernelChunk;

    NodeId gen_n = 1000;
    int gen_classes = 2, gen_dim = 8, gen_clusters = 1;
    double gen_p_in = 0.05, gen_p_out = 0.005, gen_sep = 2.0;
    double gen_avg_degree = 10.0, gen_bias = 0.9;
    bool gen_sparse = false;

    std::function<int()> run;

    auto* c_route = app.add_subcommand("route", "print the routing decision as JSON");
    c_route->add_option("dataset", dataset_dir)->required();
    c_route->add_option("--tau", tau);
    c_route->callback([&] { run = [&] { return cmd_route(dataset_dir, tau); }; });

    auto* c_fit = app.add_subcommand("fit", "route, sweep the grid, write the best model");
    c_fit->add_option("dataset", dataset_dir)->required();
    c_fit->add_option("--out", out_path)->required();
    c_fit->add_option("--config", config_path);
    c_fit->add_option("--tau", tau);
    c_fit->add_option("--precision", precision)
        ->check(CLI::IsMember({"fp32", "fp64"}));
    c_fit->add_option("--seed", seed);
    c_fit->add_option("--chunk", chunk)->check(CLI::PositiveNumber);
    c_fit->callback([&] {
        run = [&] {
            return cmd_fit(dataset_dir, config_path, out_path, tau, precision, seed,
                           chunk);
        };
    });

    auto* c_pred = app.add_subcommand("predict", "per-node predictions as TSV");
    c_pred->add_option("model", model_path)->required();
    c_pred->add_option("dataset", dataset_dir)->required();
    c_pred->add_option("--out", out_path);
    c_pred->add_option("--chunk", chunk)->check(CLI::PositiveNumber);
    c_pred->callback([&] {
        run = [&] { return cmd_predict(model_path, dataset_dir, out_path, chunk); };
    });

    auto* c_eval = app.add_subcommand("eval", "metric on train/val/test as JSON");
    c_eval->add_option("model", model_path)->required();
    c_eval->add_option("dataset", dataset_dir)->required();
    c_eval->add_option("--chunk", chunk)->check(CLI::PositiveNumber);
    c_eval->callback(
        [&] { run = [&] { return cmd_eval(model_path, dataset_dir, chunk); }; });

    auto* c_unl = app.add_subcommand("unlearn", "apply a forget request to a model");
    c_unl->add_option("model", model_path)->required();
    c_unl->add_option("dataset", dataset_dir)->required();
    c_unl->add_option("request", request_path)->required();
    c_unl->add_option("--strategy", strategy)
        ->check(CLI::IsMember({"khop", "full", "retrain"}));
    c_unl->add_option("--out", out_path);
    c_unl->callback([&] {
        run = [&] {
            return cmd_unlearn(model_path, dataset_dir, request_path, strategy,
                               out_path);
        };
    });

    auto* c_ver = app.add_subcommand(
        "verify-exact", "compare khop unlearning against retrain-from-scratch");
    c_ver->add_option("model", model_path)->required();
    c_ver->add_option("dataset", dataset_dir)->required();
    c_ver->add_option("request", request_path)->required();
    c_ver->callback([&] {
        run = [&] { return cmd_verify_exact(model_path, dataset_dir, request_path); };
    });

    auto* c_bench = app.add_subcommand("bench-unlearn",
                                       "time khop vs full vs retrain, emit CSV");
    c_bench->add_option("dataset", dataset_dir)->required();
    c_bench->add_option("--config", config_path);
    c_bench->add_option("--out", out_path);
    c_bench->add_option("--seed", seed);
    c_bench->callback([&] {
        run = [&] { return cmd_bench(dataset_dir, config_path, out_path, seed); };
    });

    auto* c_gen = app.add_subcommand("gen-synth", "write a synthetic dataset directory");
    c_gen->add_option("--out", out_path)->required();
    c_gen->add_option("--n", gen_n)->check(CLI::PositiveNumber);
    c_gen->add_option("--classes", gen_classes)->check(CLI::PositiveNumber);
    c_gen->add_option("--p-in", gen_p_in);
    c_gen->add_option("--p-out", gen_p_out);
    c_gen->add_option("--dim", gen_dim)->check(CLI::PositiveNumber);
    c_gen->add_option("--sep", gen_sep);
    c_gen->add_option("--clusters", gen_clusters)->check(CLI::PositiveNumber);
    c_gen->add_option("--seed", seed);
    c_gen->add_flag("--sparse", gen_sparse,
                    "power-law-ish sparse generator instead of SBM");
    c_gen->add_option("--avg-degree", gen_avg_degree);
    c_gen->add_option("--bias", gen_bias);
    c_gen->callback([&] {
        run = [&] {
            return cmd_gen_synth(out_path, gen_n, gen_classes, gen_p_in, gen_p_out,
                                 gen_dim, gen_sep, gen_clusters, seed, gen_sparse,
                                 gen_avg_degree, gen_bias);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        return run();
    } catch (const NumericalError& e) {
        std::cerr << json{{"error", "numerical"}, {"message", e.what()}}.dump() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << json{{"error", "validation"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }
}
