#pragma once

#include <bit>
#include <chrono>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cfgraph/dataset.hpp"
#include "cfgraph/lcfnet.hpp"
#include "cfgraph/numerics.hpp"
#include "cfgraph/pipeline_a.hpp"

namespace cfgraph {

enum class UnlearnStrategy { Khop, Full, Retrain };

inline const char* strategy_name(UnlearnStrategy s) {
    switch (s) {
        case UnlearnStrategy::Khop: return "khop";
        case UnlearnStrategy::Full: return "full";
        case UnlearnStrategy::Retrain: return "retrain";
    }
    return "?";
}

inline UnlearnStrategy strategy_from_name(const std::string& s) {
    if (s == "khop") return UnlearnStrategy::Khop;
    if (s == "full") return UnlearnStrategy::Full;
    if (s == "retrain") return UnlearnStrategy::Retrain;
    throw ValidationError("unknown strategy: " + s);
}

struct UnlearnReport {
    std::string strategy;
    double delta_theta = 0.0;
    double pred_agreement = 1.0;
    bool prob_equal = true;
    double mia_auc = 0.5;
    double wall_clock = 0.0;
    std::size_t affected_size = 0;  // |N_L(S) ∩ V_tr|
    std::size_t touched_rows = 0;   // feature rows recomputed
    bool small_forget_set = false;  // |F| < 10: MIA AUC is high-variance
};

using ModelVar = std::variant<PipelineAModel, LcfNetModel>;

inline Matrix model_logits(const ModelVar& m) {
    if (const auto* a = std::get_if<PipelineAModel>(&m)) return predict_a(*a);
    return predict_lcfnet_cached(std::get<LcfNetModel>(m));
}

/// Max-abs difference over every solved weight block.
inline double weights_delta(const ModelVar& m1, const ModelVar& m2) {
    if (m1.index() != m2.index()) throw KindMismatch("model kinds differ");
    if (const auto* a1 = std::get_if<PipelineAModel>(&m1)) {
        const auto& a2 = std::get<PipelineAModel>(m2);
        if (a1->W.rows() != a2.W.rows() || a1->W.cols() != a2.W.cols())
            throw KindMismatch("weight shapes differ");
        return (a1->W - a2.W).cwiseAbs().maxCoeff();
    }
    const auto& b1 = std::get<LcfNetModel>(m1);
    const auto& b2 = std::get<LcfNetModel>(m2);
    if (b1.layer_W.size() != b2.layer_W.size() ||
        b1.head.dual.rows() != b2.head.dual.rows())
        throw KindMismatch("weight shapes differ");
    double d = (b1.head.dual - b2.head.dual).cwiseAbs().maxCoeff();
    for (std::size_t k = 0; k < b1.layer_W.size(); ++k)
        d = std::max(d, (b1.layer_W[k] - b2.layer_W[k]).cwiseAbs().maxCoeff());
    return d;
}

inline ModelVar refit_model(const ModelVar& proto, const Dataset& ds) {
    if (const auto* a = std::get_if<PipelineAModel>(&proto))
        return fit_a(ds, a->config);
    return fit_lcfnet(ds, std::get<LcfNetModel>(proto).config);
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Verification tolerance: fp64 exact-statistics path vs the relaxed fp32
/// budget (feature maps rounded through float, Table-style footnote mode).
inline double delta_tolerance(const ModelVar& m) {
    if (const auto* a = std::get_if<PipelineAModel>(&m))
        return a->config.fp32 ? 1e-3 : 1e-12;
    return 1e-12;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strategy B / reference: full re-solve on modified inputs
// ---------------------------------------------------------------------------

/// Re-runs the exact fit path on the modified dataset with identical config
/// and seeds. The retrain reference is this same code path.
inline std::pair<ModelVar, UnlearnReport> unlearn_full(const ModelVar& model,
                                                       const Dataset& ds,
                                                       const ForgetRequest& req,
                                                       bool as_retrain = false) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [ds2, S] = apply_forget(ds, req);
    ModelVar out = refit_model(model, ds2);
    UnlearnReport report;
    report.strategy = strategy_name(as_retrain ? UnlearnStrategy::Retrain
                                               : UnlearnStrategy::Full);
    report.wall_clock = detail::seconds_since(t0);
    report.small_forget_set = req.size() < 10;
    NodeSet train = ds.mask_nodes(ds.train_mask);
    for (NodeId v : S)
        if (node_set_contains(train, v)) ++report.affected_size;
    return {std::move(out), std::move(report)};
}

inline std::pair<ModelVar, UnlearnReport> retrain_from_scratch(const ModelVar& model,
                                                               const Dataset& ds,
                                                               const ForgetRequest& req) {
    return unlearn_full(model, ds, req, true);
}

// ---------------------------------------------------------------------------
// Strategy A: K-hop-local Gram downdate
// ---------------------------------------------------------------------------

namespace detail {

/// Locality depth of the pipeline-A feature map.
inline int locality_depth_a(const PipelineAConfig& cfg) { return cfg.K; }

inline int locality_depth_h0(const BaseFeatureFlags& f) {
    int L = 0;
    if (f.hops) L = std::max(L, 3);
    if (f.variance) L = std::max(L, 2);
    if (f.diffs) L = std::max(L, 3);
    if (f.attn) L = std::max(L, 1);
    return L;
}

}  // namespace detail

/// Pipeline A K-hop unlearning. Feature rows are recomputed only inside
/// N_L(S) (reachability taken on the pre-modification graph, a superset of
/// the modified one for deletions); Gram/RHS statistics are downdated
/// exactly, so the solved weights are bit-identical to a fresh retrain.
inline std::pair<ModelVar, UnlearnReport> unlearn_khop_a(const PipelineAModel& model,
                                                         const Dataset& ds,
                                                         const ForgetRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineAConfig& cfg = model.config;
    auto [ds2, S] = apply_forget(ds, req);
    if (ds2.num_classes() != model.num_classes)
        throw NotLocalityEligible(
            "class set shrank under forgetting; use the full re-solve");

    PipelineAModel out = model;
    const NodeSet old_train = ds.mask_nodes(ds.train_mask);
    const NodeSet new_train = ds2.mask_nodes(ds2.train_mask);

    UnlearnReport report;
    report.strategy = strategy_name(UnlearnStrategy::Khop);
    report.small_forget_set = req.size() < 10;

    std::vector<std::pair<Vector, Vector>> removals, additions;
    const Matrix Y_old = training_targets_a(ds, old_train, cfg);
    const Matrix Y_new = training_targets_a(ds2, new_train, cfg);
    auto y_row = [](const Matrix& Y, const NodeSet& nodes, NodeId v) {
        const auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
        return Y.row(static_cast<Eigen::Index>(it - nodes.begin())).transpose();
    };

    if (req.kind == ForgetKind::Label) {
        // graph and features untouched: RHS/Gram row removal only
        for (NodeId v : req.nodes) {
            removals.emplace_back(model.H.row(v).transpose(), y_row(Y_old, old_train, v));
            ++report.affected_size;
        }
    } else {
        const int L = detail::locality_depth_a(cfg);
        const NodeSet N = k_hop_neighborhood(ds.graph, S, L);

        // recompute hop rows hop-by-hop inside the expanding neighborhoods
        out.hops[0] = source_features(ds2, cfg);
        for (int k = 1; k <= cfg.K; ++k) {
            const NodeSet Nk = k_hop_neighborhood(ds.graph, S, k);
            std::vector<double> row(static_cast<std::size_t>(out.hops[k].cols()));
            for (NodeId v : Nk) {
                propagate_row(ds2.graph, out.hops[k - 1], v, row.data());
                for (Eigen::Index j = 0; j < out.hops[k].cols(); ++j)
                    out.hops[k](v, j) = row[j];
            }
        }
        // reassemble the final feature rows for N only
        Matrix omega;
        if (cfg.variant == FeatureVariant::MultihopRff)
            omega = rff_frequencies(cfg.rff->num_features,
                                    detail::concat_width(cfg, out.hops[0].cols()),
                                    cfg.rff->sigma, cfg.rff->seed);
        Matrix concat_rows(ds.n(), detail::concat_width(cfg, out.hops[0].cols()));
        for (NodeId v : N) {
            detail::assemble_concat_row(out.hops, cfg, v, concat_rows);
            if (cfg.variant == FeatureVariant::MultihopRff) {
                rff_apply_row(omega, concat_rows, v, out.H);
            } else {
                out.H.row(v) = concat_rows.row(v);
            }
            if (cfg.fp32)
                for (Eigen::Index j = 0; j < out.H.cols(); ++j)
                    out.H(v, j) = static_cast<double>(static_cast<float>(out.H(v, j)));
        }
        report.touched_rows = N.size();

        for (NodeId v : N) {
            const bool was_train = node_set_contains(old_train, v);
            const bool is_train = node_set_contains(new_train, v);
            if (was_train) {
                removals.emplace_back(model.H.row(v).transpose(),
                                      y_row(Y_old, old_train, v));
                ++report.affected_size;
            }
            if (is_train)
                additions.emplace_back(out.H.row(v).transpose(),
                                       y_row(Y_new, new_train, v));
        }
    }

    gram_downdate(out.stats, removals, additions);
    out.W = out.stats.solve();
    report.wall_clock = detail::seconds_since(t0);
    return {ModelVar(std::move(out)), std::move(report)};
}

/// LCF-Net K-hop unlearning: eligible only for the single-layer network
/// without transductive whitening (deeper layers and whitening statistics
/// are global). The layer-1 ridge is downdated exactly; the kernel head is
/// refit on the updated representation.
inline std::pair<ModelVar, UnlearnReport> unlearn_khop_lcf(const LcfNetModel& model,
                                                           const Dataset& ds,
                                                           const ForgetRequest& req) {
    const LcfConfig& cfg = model.config;
    if (!cfg.use_lcf || cfg.K != 1)
        throw NotLocalityEligible("layers beyond the first are non-local");
    if (cfg.whiten_h0)
        throw NotLocalityEligible("whitening statistics are non-local");
    const auto t0 = std::chrono::steady_clock::now();
    auto [ds2, S] = apply_forget(ds, req);
    if (ds2.num_classes() != model.num_classes)
        throw NotLocalityEligible(
            "class set shrank under forgetting; use the full re-solve");

    LcfNetModel out = model;
    const NodeSet old_train = ds.mask_nodes(ds.train_mask);
    const NodeSet new_train = ds2.mask_nodes(ds2.train_mask);
    const Matrix Y_old = lcf_targets(ds, old_train);
    const Matrix Y_new = lcf_targets(ds2, new_train);
    auto y_row = [](const Matrix& Y, const NodeSet& nodes, NodeId v) {
        const auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
        return Y.row(static_cast<Eigen::Index>(it - nodes.begin())).transpose();
    };

    UnlearnReport report;
    report.strategy = strategy_name(UnlearnStrategy::Khop);
    report.small_forget_set = req.size() < 10;

    std::vector<std::pair<Vector, Vector>> removals, additions;
    if (req.kind == ForgetKind::Label) {
        for (NodeId v : req.nodes) {
            removals.emplace_back(model.a[0].row(v).transpose(),
                                  y_row(Y_old, old_train, v));
            ++report.affected_size;
        }
    } else {
        const int L = detail::locality_depth_h0(cfg.base_flags) + 1;
        const NodeSet N = k_hop_neighborhood(ds.graph, S, L);
        out.h0 = base_features_h0(ds2, cfg.base_flags);
        Matrix a = propagate(ds2.graph, out.h0);
        if (cfg.phi != Phi::None)
            for (Eigen::Index r = 0; r < a.rows(); ++r)
                for (Eigen::Index c = 0; c < a.cols(); ++c)
                    a(r, c) = apply_phi(cfg.phi, a(r, c));
        out.a[0] = std::move(a);
        report.touched_rows = N.size();
        for (NodeId v : N) {
            if (node_set_contains(old_train, v)) {
                removals.emplace_back(model.a[0].row(v).transpose(),
                                      y_row(Y_old, old_train, v));
                ++report.affected_size;
            }
            if (node_set_contains(new_train, v))
                additions.emplace_back(out.a[0].row(v).transpose(),
                                       y_row(Y_new, new_train, v));
        }
    }

    gram_downdate(out.layer_stats[0], removals, additions);
    out.layer_W[0] = out.layer_stats[0].solve();
    Matrix p = layer_predictions(out.a[0], out.layer_W[0]);
    out.h_final.resize(out.h0.rows(), out.h0.cols() + p.cols());
    out.h_final << out.h0, p;

    Matrix h_tr(static_cast<Eigen::Index>(new_train.size()), out.h_final.cols());
    for (std::size_t i = 0; i < new_train.size(); ++i)
        h_tr.row(i) = out.h_final.row(new_train[i]);
    out.sigma = cfg.sigma_scale * median_pairwise_distance(h_tr);
    out.head = krr_fit(h_tr, Y_new, out.sigma, cfg.lambda_prime);

    report.wall_clock = detail::seconds_since(t0);
    return {ModelVar(std::move(out)), std::move(report)};
}

inline std::pair<ModelVar, UnlearnReport> unlearn_khop(const ModelVar& model,
                                                       const Dataset& ds,
                                                       const ForgetRequest& req) {
    if (const auto* a = std::get_if<PipelineAModel>(&model))
        return unlearn_khop_a(*a, ds, req);
    return unlearn_khop_lcf(std::get<LcfNetModel>(model), ds, req);
}

inline std::pair<ModelVar, UnlearnReport> unlearn(const ModelVar& model,
                                                  const Dataset& ds,
                                                  const ForgetRequest& req,
                                                  UnlearnStrategy strategy) {
    switch (strategy) {
        case UnlearnStrategy::Khop: return unlearn_khop(model, ds, req);
        case UnlearnStrategy::Full: return unlearn_full(model, ds, req);
        case UnlearnStrategy::Retrain: return retrain_from_scratch(model, ds, req);
    }
    throw ValidationError("unreachable strategy");
}

// ---------------------------------------------------------------------------
// Membership inference harness
// ---------------------------------------------------------------------------

struct MiaResult {
    double auc_unlearned = 0.5;
    double auc_retrained = 0.5;
    bool degenerate = false;  // all scores identical
};

/// Attacker score: per-node max softmax confidence. AUC separates forget
/// nodes (positives) from never-trained holdout nodes. Byte-identical
/// models give identical AUCs; any gap flags inexact removal.
inline MiaResult mia_attack(const ModelVar& unlearned, const ModelVar& retrained,
                            const NodeSet& forget_nodes, const NodeSet& holdout_nodes) {
    if (forget_nodes.empty() || holdout_nodes.empty())
        throw ValidationError("mia_attack: empty node sets");
    auto auc_of = [&](const ModelVar& m) {
        const Matrix P = softmax_rows(model_logits(m));
        std::vector<double> scores;
        std::vector<int> truth;
        for (NodeId v : forget_nodes) {
            scores.push_back(P.row(v).maxCoeff());
            truth.push_back(1);
        }
        for (NodeId v : holdout_nodes) {
            scores.push_back(P.row(v).maxCoeff());
            truth.push_back(0);
        }
        const bool flat =
            std::all_of(scores.begin(), scores.end(),
                        [&](double s) { return s == scores.front(); });
        return std::pair<double, bool>{flat ? 0.5 : evaluate_auc(scores, truth), flat};
    };
    MiaResult r;
    auto [au, du] = auc_of(unlearned);
    auto [ar, dr] = auc_of(retrained);
    r.auc_unlearned = au;
    r.auc_retrained = ar;
    r.degenerate = du && dr;
    return r;
}

// ---------------------------------------------------------------------------
// Byte-identity verification
// ---------------------------------------------------------------------------

inline std::size_t bitwise_equal_count(const Matrix& a, const Matrix& b) {
    std::size_t eq = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        bool row_eq = true;
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (std::bit_cast<std::uint64_t>(a(i, j)) !=
                std::bit_cast<std::uint64_t>(b(i, j))) {
                row_eq = false;
                break;
            }
        eq += row_eq;
    }
    return eq;
}

/// Compare an unlearned model against the retrain reference: max-abs weight
/// difference, bitwise probability equality, argmax agreement (ties toward
/// the lowest class id on both sides), and optionally the MIA statistic.
inline UnlearnReport verify_exact(const ModelVar& unlearned, const ModelVar& retrained,
                                  const Dataset& ds_after,
                                  const NodeSet& forget_nodes = {},
                                  const NodeSet& holdout_nodes = {}) {
    UnlearnReport report;
    report.strategy = "verify";
    report.delta_theta = weights_delta(unlearned, retrained);

    const Matrix logits_u = model_logits(unlearned);
    const Matrix logits_r = model_logits(retrained);
    if (logits_u.rows() != logits_r.rows() || logits_u.cols() != logits_r.cols())
        throw KindMismatch("prediction shapes differ");
    const Matrix prob_u = softmax_rows(logits_u);
    const Matrix prob_r = softmax_rows(logits_r);

    std::size_t live = 0, agree = 0;
    bool prob_equal = true;
    for (NodeId v = 0; v < ds_after.n(); ++v) {
        if (ds_after.graph.deleted[v]) continue;  // absent from the report
        ++live;
        Eigen::Index best_u = 0, best_r = 0;
        for (Eigen::Index c = 1; c < prob_u.cols(); ++c) {
            if (prob_u(v, c) > prob_u(v, best_u)) best_u = c;
            if (prob_r(v, c) > prob_r(v, best_r)) best_r = c;
        }
        agree += best_u == best_r;
        for (Eigen::Index c = 0; c < prob_u.cols(); ++c)
            if (std::bit_cast<std::uint64_t>(prob_u(v, c)) !=
                std::bit_cast<std::uint64_t>(prob_r(v, c)))
                prob_equal = false;
    }
    report.pred_agreement = live ? static_cast<double>(agree) / live : 1.0;
    report.prob_equal = prob_equal;

    if (!forget_nodes.empty() && !holdout_nodes.empty()) {
        report.mia_auc =
            mia_attack(unlearned, retrained, forget_nodes, holdout_nodes).auc_unlearned;
        report.small_forget_set = forget_nodes.size() < 10;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
    std::string kind;
    std::size_t forget_size = 0;
    std::size_t neighborhood_size = 0;
    double t_khop = 0.0;
    double t_full = 0.0;
    double t_retrain = 0.0;
    double speedup = 0.0;  // t_full / t_khop
};

inline std::string bench_csv_header() {
    return "kind,forget_size,neighborhood_size,t_khop,t_full,t_retrain,speedup";
}

inline std::string bench_csv_line(const BenchRow& r) {
    std::ostringstream os;
    os << r.kind << ',' << r.forget_size << ',' << r.neighborhood_size << ','
       << r.t_khop << ',' << r.t_full << ',' << r.t_retrain << ',' << r.speedup;
    return os.str();
}

/// Times the khop, full, and retrain paths for each (kind, size) cell.
inline std::vector<BenchRow> bench_unlearn(
    const Dataset& ds, const PipelineAConfig& cfg,
    const std::vector<std::pair<ForgetKind, std::size_t>>& grid,
    std::uint64_t seed = 0) {
    PipelineAModel model = fit_a(ds, cfg);
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    std::vector<BenchRow> rows;
    for (const auto& [kind, size] : grid) {
        SplitMix64 rng(derive_seed(seed, 41 + rows.size()));
        ForgetRequest req;
        req.kind = kind;
        if (kind == ForgetKind::Edge) {
            if (ds.graph.edges.empty()) throw ValidationError("bench: no edges");
            std::vector<std::size_t> picks;
            while (picks.size() < size)
                picks.push_back(rng.next_below(ds.graph.edges.size()));
            std::sort(picks.begin(), picks.end());
            picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
            for (std::size_t e : picks) req.edge_pairs.push_back(ds.graph.edges[e]);
        } else {
            NodeSet targets;
            while (targets.size() < size)
                targets.push_back(train[rng.next_below(train.size())]);
            req.nodes = make_node_set(std::move(targets));
        }

        BenchRow row;
        row.kind = forget_kind_name(kind);
        row.forget_size = req.size();
        auto [mk, rk] = unlearn_khop_a(model, ds, req);
        row.t_khop = rk.wall_clock;
        row.neighborhood_size =
            kind == ForgetKind::Label ? rk.affected_size : rk.touched_rows;
        auto [mf, rf] = unlearn_full(model, ds, req);
        row.t_full = rf.wall_clock;
        auto [mr, rr] = retrain_from_scratch(model, ds, req);
        row.t_retrain = rr.wall_clock;
        row.speedup = row.t_khop > 0 ? row.t_full / row.t_khop : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cfgraph
