#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfgraph/errors.hpp"
#include "cfgraph/graph.hpp"
#include "cfgraph/prng.hpp"

namespace cfgraph {

enum class Metric { Accuracy, RocAuc };

inline const char* metric_name(Metric m) {
    return m == Metric::Accuracy ? "accuracy" : "roc-auc";
}

enum class PipelineOverride { None, ForceA, ForceB };

/// Graph + features + labels + split masks. `y_multi` (n x T of 0/1) is
/// populated instead of `y` for multi-label tasks.
struct Dataset {
    Graph graph;
    Matrix X;
    std::vector<int> y;  // class id, -1 where absent
    Matrix y_multi;      // 0 cols unless multi-label
    std::vector<char> train_mask, val_mask, test_mask;
    Metric metric = Metric::Accuracy;
    std::string name = "dataset";
    PipelineOverride pipeline_override = PipelineOverride::None;

    NodeId n() const { return graph.n; }
    bool multi_label() const { return y_multi.cols() > 0; }

    int num_classes() const {
        if (multi_label()) return static_cast<int>(y_multi.cols());
        int c = 0;
        for (int v : y) c = std::max(c, v + 1);
        return c;
    }

    NodeSet mask_nodes(const std::vector<char>& mask) const {
        NodeSet out;
        for (NodeId v = 0; v < n(); ++v)
            if (mask[v] && !graph.deleted[v]) out.push_back(v);
        return out;
    }

    void validate() const {
        const auto nn = static_cast<std::size_t>(graph.n);
        if (static_cast<std::size_t>(X.rows()) != nn)
            throw DimensionMismatch("feature row count != n");
        if (y.size() != nn || train_mask.size() != nn || val_mask.size() != nn ||
            test_mask.size() != nn)
            throw DimensionMismatch("label/mask size != n");
        for (NodeId v = 0; v < graph.n; ++v) {
            const int overlap = (train_mask[v] != 0) + (val_mask[v] != 0) + (test_mask[v] != 0);
            if (overlap > 1) throw MaskOverlap("node in multiple split masks");
            if (train_mask[v] && !multi_label() && y[v] < 0)
                throw ValidationError("train node without label");
        }
    }
};

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Stochastic-block-model spec for desk-scale oracle datasets.
/// feature_clusters_per_class = 2 places each class's features in two
/// opposed Gaussian clusters (not linearly separable).
struct SbmSpec {
    NodeId n = 200;
    int num_classes = 2;
    double p_in = 0.05;
    double p_out = 0.005;
    int feature_dim = 8;
    double class_mean_separation = 2.0;
    int feature_clusters_per_class = 1;
    std::uint64_t seed = 1;
};

namespace detail {

inline void stratified_split(Dataset& ds, SplitMix64& rng) {
    const NodeId n = ds.n();
    ds.train_mask.assign(static_cast<std::size_t>(n), 0);
    ds.val_mask.assign(static_cast<std::size_t>(n), 0);
    ds.test_mask.assign(static_cast<std::size_t>(n), 0);
    const int classes = ds.num_classes();
    for (int c = 0; c < classes; ++c) {
        std::vector<NodeId> members;
        for (NodeId v = 0; v < n; ++v)
            if (ds.y[v] == c) members.push_back(v);
        // Fisher-Yates with the named stream
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[rng.next_below(i)]);
        const std::size_t n_train = (members.size() * 6) / 10;
        const std::size_t n_val = members.size() / 5;
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i < n_train)
                ds.train_mask[members[i]] = 1;
            else if (i < n_train + n_val)
                ds.val_mask[members[i]] = 1;
            else
                ds.test_mask[members[i]] = 1;
        }
    }
}

}  // namespace detail

inline Dataset generate_sbm(const SbmSpec& spec) {
    if (spec.p_in < 0 || spec.p_in > 1 || spec.p_out < 0 || spec.p_out > 1)
        throw ValidationError("SBM edge probabilities must be in [0,1]");
    Dataset ds;
    ds.name = "sbm";
    SplitMix64 rng(derive_seed(spec.seed, 11));

    ds.y.resize(static_cast<std::size_t>(spec.n));
    for (NodeId v = 0; v < spec.n; ++v) ds.y[v] = v % spec.num_classes;

    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 0; u < spec.n; ++u)
        for (NodeId v = u + 1; v < spec.n; ++v) {
            const double p = (ds.y[u] == ds.y[v]) ? spec.p_in : spec.p_out;
            if (rng.next_unit() < p) edges.emplace_back(u, v);
        }
    ds.graph = make_graph(spec.n, edges);

    // Class means: deterministic orthogonal-ish directions scaled by the
    // requested separation; cluster 1 (if any) sits at the opposite pole.
    SplitMix64 frng(derive_seed(spec.seed, 12));
    Matrix means(spec.num_classes * spec.feature_clusters_per_class, spec.feature_dim);
    for (Eigen::Index r = 0; r < means.rows(); ++r)
        for (int j = 0; j < spec.feature_dim; ++j) means(r, j) = frng.next_gaussian();
    for (int c = 0; c < spec.num_classes; ++c)
        for (int s = 0; s < spec.feature_clusters_per_class; ++s) {
            const Eigen::Index r = c * spec.feature_clusters_per_class + s;
            if (s % 2 == 1) {
                means.row(r) = -means.row(r - 1);
                continue;
            }
            const double norm = means.row(r).norm();
            means.row(r) *= spec.class_mean_separation / (norm > 0 ? norm : 1.0);
        }

    ds.X.resize(spec.n, spec.feature_dim);
    for (NodeId v = 0; v < spec.n; ++v) {
        const int cluster =
            spec.feature_clusters_per_class > 1
                ? static_cast<int>(rng.next_below(spec.feature_clusters_per_class))
                : 0;
        const Eigen::Index r = ds.y[v] * spec.feature_clusters_per_class + cluster;
        for (int j = 0; j < spec.feature_dim; ++j)
            ds.X(v, j) = means(r, j) + frng.next_gaussian();
    }

    SplitMix64 srng(derive_seed(spec.seed, 13));
    detail::stratified_split(ds, srng);
    ds.validate();
    return ds;
}

/// Large sparse synthetic graph for scaling benchmarks: samples roughly
/// n*avg_degree/2 edges, biased within-class by `homophily_bias`.
inline Dataset generate_sparse(NodeId n, double avg_degree, int num_classes,
                               int feature_dim, double homophily_bias,
                               std::uint64_t seed) {
    Dataset ds;
    ds.name = "sparse-synth";
    SplitMix64 rng(derive_seed(seed, 21));
    ds.y.resize(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v)
        ds.y[v] = static_cast<int>(rng.next_below(num_classes));

    std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(num_classes));
    for (NodeId v = 0; v < n; ++v) by_class[ds.y[v]].push_back(v);

    const auto target_edges = static_cast<std::int64_t>(n * avg_degree / 2.0);
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(static_cast<std::size_t>(target_edges));
    for (std::int64_t e = 0; e < target_edges; ++e) {
        const NodeId u = static_cast<NodeId>(rng.next_below(n));
        NodeId v;
        if (rng.next_unit() < homophily_bias) {
            const auto& pool = by_class[ds.y[u]];
            v = pool[rng.next_below(pool.size())];
        } else {
            v = static_cast<NodeId>(rng.next_below(n));
        }
        if (u != v) edges.emplace_back(u, v);
    }
    ds.graph = make_graph(n, edges);

    SplitMix64 frng(derive_seed(seed, 22));
    Matrix means(num_classes, feature_dim);
    for (int c = 0; c < num_classes; ++c)
        for (int j = 0; j < feature_dim; ++j) means(c, j) = 2.0 * frng.next_gaussian();
    ds.X.resize(n, feature_dim);
    for (NodeId v = 0; v < n; ++v)
        for (int j = 0; j < feature_dim; ++j)
            ds.X(v, j) = means(ds.y[v], j) + frng.next_gaussian();

    SplitMix64 srng(derive_seed(seed, 23));
    detail::stratified_split(ds, srng);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Forget-request application at dataset level
// ---------------------------------------------------------------------------

/// Apply a forget request to the whole dataset. Label forget drops nodes
/// from the training set; feature forget zeroes feature rows; node and
/// subgraph deletion mask nodes and remove them from every split.
inline std::pair<Dataset, NodeSet> apply_forget(const Dataset& ds, const ForgetRequest& req) {
    auto [graph2, affected] = modify_graph(ds.graph, req);
    Dataset out = ds;
    out.graph = std::move(graph2);
    switch (req.kind) {
        case ForgetKind::Label:
            for (NodeId v : req.nodes) {
                if (!ds.train_mask[v])
                    throw ValidationError("label forget target is not a training node");
                out.train_mask[v] = 0;
                out.y[v] = -1;
                if (out.multi_label()) out.y_multi.row(v).setZero();
            }
            break;
        case ForgetKind::Feature:
            for (NodeId v : req.nodes) out.X.row(v).setZero();
            break;
        case ForgetKind::Edge:
            break;
        case ForgetKind::Node:
        case ForgetKind::Subgraph:
            for (NodeId v : req.nodes) {
                out.train_mask[v] = 0;
                out.val_mask[v] = 0;
                out.test_mask[v] = 0;
            }
            break;
    }
    return {std::move(out), std::move(affected)};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Argmax accuracy; ties break toward the lowest class id.
inline double evaluate_accuracy(const Matrix& pred, const std::vector<int>& y,
                                const NodeSet& nodes) {
    if (nodes.empty()) throw ValidationError("evaluate: empty mask");
    std::int64_t correct = 0;
    for (NodeId v : nodes) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < pred.cols(); ++c)
            if (pred(v, c) > pred(v, best)) best = c;
        if (static_cast<int>(best) == y[v]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

/// Binary ROC-AUC via the Mann-Whitney rank statistic, average ranks on
/// ties. `positive` holds 0/1 truth per node in `nodes`.
inline double evaluate_auc(const std::vector<double>& scores,
                           const std::vector<int>& positive) {
    if (scores.size() != positive.size() || scores.empty())
        throw ValidationError("evaluate_auc: bad inputs");
    std::int64_t n_pos = 0, n_neg = 0;
    for (int p : positive) (p ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw SingleClassAuc("AUC undefined: single-class labels");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (positive[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Dataset-level metric on a split mask: accuracy, binary ROC-AUC (class-1
/// column as score), or mean per-task AUC for multi-label data.
inline double evaluate(const Matrix& pred, const Dataset& ds, const std::vector<char>& mask) {
    const NodeSet nodes = ds.mask_nodes(mask);
    if (nodes.empty()) throw ValidationError("evaluate: empty mask");
    if (ds.metric == Metric::Accuracy) return evaluate_accuracy(pred, ds.y, nodes);
    if (ds.multi_label()) {
        double total = 0.0;
        for (Eigen::Index t = 0; t < ds.y_multi.cols(); ++t) {
            std::vector<double> scores;
            std::vector<int> truth;
            for (NodeId v : nodes) {
                scores.push_back(pred(v, t));
                truth.push_back(ds.y_multi(v, t) > 0.5 ? 1 : 0);
            }
            total += evaluate_auc(scores, truth);
        }
        return total / static_cast<double>(ds.y_multi.cols());
    }
    const Eigen::Index score_col = pred.cols() >= 2 ? 1 : 0;
    std::vector<double> scores;
    std::vector<int> truth;
    for (NodeId v : nodes) {
        scores.push_back(pred(v, score_col));
        truth.push_back(ds.y[v] == 1 ? 1 : 0);
    }
    return evaluate_auc(scores, truth);
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------
//
//   edges.tsv      u<TAB>v per line, each undirected edge once
//   features.bin   magic "CFG1", int64 n, int64 d, n*d fp64 little-endian
//   features.csv   alternative text form: "n d" header then rows
//   labels.tsv     id<TAB>label  (label = int class, or comma-joined 0/1
//                  task vector for multi-label)
//   splits.json    {"train":[...],"val":[...],"test":[...]} or
//                  {"seed":N,"protocol":"stratified-60-20-20"}; optional
//                  "metric" and "pipeline_override" fields

namespace detail {

inline Matrix load_features(const std::filesystem::path& dir) {
    const auto bin = dir / "features.bin";
    if (std::filesystem::exists(bin)) {
        std::ifstream in(bin, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, "CFG1", 4) != 0)
            throw ValidationError("features.bin: bad magic");
        std::int64_t n = 0, d = 0;
        in.read(reinterpret_cast<char*>(&n), 8);
        in.read(reinterpret_cast<char*>(&d), 8);
        if (!in || n < 0 || d < 0) throw ValidationError("features.bin: bad header");
        Matrix X(n, d);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) {
                double v;
                in.read(reinterpret_cast<char*>(&v), 8);
                X(i, j) = v;
            }
        if (!in) throw ValidationError("features.bin: truncated");
        return X;
    }
    const auto csv = dir / "features.csv";
    std::ifstream in(csv);
    if (!in) throw MissingFile("missing features.bin / features.csv in " + dir.string());
    std::int64_t n = 0, d = 0;
    if (!(in >> n >> d)) throw ValidationError("features.csv: bad header");
    Matrix X(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j)
            if (!(in >> X(i, j))) throw ValidationError("features.csv: truncated");
    return X;
}

inline void parse_labels(const std::filesystem::path& path, Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open " + path.string());
    ds.y.assign(static_cast<std::size_t>(ds.graph.n), -1);
    std::string line;
    std::vector<std::pair<NodeId, std::string>> raw;
    bool multi = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long id;
        std::string lab;
        if (!(ls >> id >> lab)) throw ValidationError("malformed label line: " + line);
        if (id < 0 || id >= ds.graph.n) throw ValidationError("label id out of range");
        if (lab.find(',') != std::string::npos) multi = true;
        raw.emplace_back(static_cast<NodeId>(id), lab);
    }
    if (multi) {
        std::size_t tasks = 0;
        for (auto& [id, lab] : raw)
            tasks = std::max(tasks,
                             static_cast<std::size_t>(std::count(lab.begin(), lab.end(), ',')) + 1);
        ds.y_multi = Matrix::Zero(ds.graph.n, static_cast<Eigen::Index>(tasks));
        for (auto& [id, lab] : raw) {
            std::istringstream ls(lab);
            std::string tok;
            Eigen::Index t = 0;
            while (std::getline(ls, tok, ','))
                ds.y_multi(id, t++) = std::stod(tok);
        }
    } else {
        for (auto& [id, lab] : raw) ds.y[id] = std::stoi(lab);
    }
}

}  // namespace detail

inline Dataset load_dataset(const std::string& dir_str) {
    const std::filesystem::path dir(dir_str);
    if (!std::filesystem::is_directory(dir))
        throw MissingFile("dataset directory not found: " + dir_str);
    Dataset ds;
    ds.name = dir.filename().string();
    ds.X = detail::load_features(dir);
    ds.graph = load_edge_list((dir / "edges.tsv").string(),
                              static_cast<NodeId>(ds.X.rows()));
    detail::parse_labels(dir / "labels.tsv", ds);

    std::ifstream sin(dir / "splits.json");
    if (!sin) throw MissingFile("missing splits.json in " + dir_str);
    nlohmann::json js = nlohmann::json::parse(sin);
    const auto nn = static_cast<std::size_t>(ds.graph.n);
    ds.train_mask.assign(nn, 0);
    ds.val_mask.assign(nn, 0);
    ds.test_mask.assign(nn, 0);
    if (js.contains("protocol")) {
        if (js["protocol"] != "stratified-60-20-20")
            throw ValidationError("unknown split protocol");
        SplitMix64 rng(derive_seed(js.value("seed", 0ull), 13));
        detail::stratified_split(ds, rng);
    } else {
        auto fill = [&](const char* key, std::vector<char>& mask) {
            for (const auto& id : js.at(key)) {
                const long v = id.get<long>();
                if (v < 0 || v >= ds.graph.n) throw ValidationError("split id out of range");
                mask[static_cast<std::size_t>(v)] = 1;
            }
        };
        fill("train", ds.train_mask);
        fill("val", ds.val_mask);
        fill("test", ds.test_mask);
    }
    if (js.contains("metric"))
        ds.metric = js["metric"] == "roc-auc" ? Metric::RocAuc : Metric::Accuracy;
    if (js.contains("pipeline_override")) {
        const std::string p = js["pipeline_override"];
        ds.pipeline_override = p == "A"   ? PipelineOverride::ForceA
                               : p == "B" ? PipelineOverride::ForceB
                                          : PipelineOverride::None;
    }
    ds.validate();
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& dir_str) {
    const std::filesystem::path dir(dir_str);
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "edges.tsv");
        for (const auto& [u, v] : ds.graph.edges) out << u << '\t' << v << '\n';
    }
    {
        std::ofstream out(dir / "features.bin", std::ios::binary);
        out.write("CFG1", 4);
        const std::int64_t n = ds.X.rows(), d = ds.X.cols();
        out.write(reinterpret_cast<const char*>(&n), 8);
        out.write(reinterpret_cast<const char*>(&d), 8);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j) {
                const double v = ds.X(i, j);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
    }
    {
        std::ofstream out(dir / "labels.tsv");
        if (ds.multi_label()) {
            for (NodeId v = 0; v < ds.graph.n; ++v) {
                out << v << '\t';
                for (Eigen::Index t = 0; t < ds.y_multi.cols(); ++t)
                    out << (t ? "," : "") << ds.y_multi(v, t);
                out << '\n';
            }
        } else {
            for (NodeId v = 0; v < ds.graph.n; ++v)
                if (ds.y[v] >= 0) out << v << '\t' << ds.y[v] << '\n';
        }
    }
    {
        nlohmann::json js;
        auto dump = [&](const std::vector<char>& mask) {
            std::vector<NodeId> ids;
            for (NodeId v = 0; v < ds.graph.n; ++v)
                if (mask[v]) ids.push_back(v);
            return ids;
        };
        js["train"] = dump(ds.train_mask);
        js["val"] = dump(ds.val_mask);
        js["test"] = dump(ds.test_mask);
        js["metric"] = metric_name(ds.metric);
        std::ofstream out(dir / "splits.json");
        out << js.dump(2) << '\n';
    }
}

}  // namespace cfgraph
