#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "cfgraph/dataset.hpp"
#include "cfgraph/graph.hpp"
#include "cfgraph/numerics.hpp"

namespace cfgraph {

enum class FeatureVariant { Plain, MultihopConcat, MultihopRff };
enum class SourceNorm { Raw, RowNormalized };

struct CnsParams {
    double alpha_correct = 0.8;
    double alpha_smooth = 0.8;
    int num_iters = 50;
};

struct RffParams {
    int num_features = 256;
    double sigma = 1.0;
    std::uint64_t seed = 0;
};

struct PipelineAConfig {
    int K = 2;
    SourceNorm x_src = SourceNorm::Raw;
    double alpha = 1.0;
    double epsilon = 0.0;
    FeatureVariant variant = FeatureVariant::Plain;
    std::vector<double> group_alphas;  // per-hop for multihop-concat; empty = uniform
    std::optional<CnsParams> cns;
    std::optional<RffParams> rff;
    bool fp32 = false;

    void validate() const {
        if (K < 0 || K > 8) throw ValidationError("pipeline A: K out of range");
        if (alpha <= 0) throw ValidationError("pipeline A: alpha must be > 0");
        if (epsilon < 0 || epsilon >= 1)
            throw ValidationError("pipeline A: epsilon must be in [0,1)");
        if (variant == FeatureVariant::MultihopRff && !rff)
            throw ValidationError("pipeline A: rff variant needs rff params");
        if (!group_alphas.empty()) {
            if (variant != FeatureVariant::MultihopConcat)
                throw ValidationError("pipeline A: group alphas need multihop-concat");
            if (group_alphas.size() != static_cast<std::size_t>(K) + 1)
                throw ValidationError("pipeline A: need one group alpha per hop 0..K");
            for (double a : group_alphas)
                if (a <= 0) throw ValidationError("pipeline A: group alpha must be > 0");
        }
    }
};

/// Fitted model. Caches the hop matrices P_k = A~^k X_src so unlearning
/// can re-derive feature rows locally, plus the final map H.
struct PipelineAModel {
    PipelineAConfig config;
    std::vector<Matrix> hops;  // P_0..P_K
    Matrix H;                  // n x D
    Matrix W;                  // D x C
    RidgeStats stats;
    int num_classes = 0;
};

inline Matrix source_features(const Dataset& ds, const PipelineAConfig& cfg) {
    Matrix X = ds.X;
    if (cfg.x_src == SourceNorm::RowNormalized) {
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const double norm = X.row(r).norm();
            if (norm > 0) X.row(r) /= norm;
        }
    }
    return X;
}

/// Y_eps = (1 - eps) Y + eps / C, entrywise.
inline Matrix smooth_labels(const Matrix& Y_onehot, double epsilon) {
    if (epsilon < 0 || epsilon > 1) throw ValidationError("smooth_labels: bad epsilon");
    const double floor = epsilon / static_cast<double>(Y_onehot.cols());
    Matrix out(Y_onehot.rows(), Y_onehot.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c)
            out(r, c) = (1.0 - epsilon) * Y_onehot(r, c) + floor;
    return out;
}

namespace detail {

/// Tikhonov group scale for hop g: columns divided by sqrt(alpha_g / alpha)
/// turn the single-alpha solve into per-group penalties.
inline double group_scale(const PipelineAConfig& cfg, int hop) {
    if (cfg.group_alphas.empty()) return 1.0;
    return std::sqrt(cfg.alpha / cfg.group_alphas[static_cast<std::size_t>(hop)]);
}

inline Eigen::Index concat_width(const PipelineAConfig& cfg, Eigen::Index d) {
    return cfg.variant == FeatureVariant::Plain ? d : d * (cfg.K + 1);
}

/// Assemble one row of the pre-RFF feature map from the hop matrices.
inline void assemble_concat_row(const std::vector<Matrix>& hops,
                                const PipelineAConfig& cfg, NodeId v, Matrix& out) {
    const Eigen::Index d = hops[0].cols();
    if (cfg.variant == FeatureVariant::Plain) {
        for (Eigen::Index j = 0; j < d; ++j) out(v, j) = hops.back()(v, j);
        return;
    }
    for (int k = 0; k <= cfg.K; ++k) {
        const double s = group_scale(cfg, k);
        for (Eigen::Index j = 0; j < d; ++j) out(v, k * d + j) = s * hops[k](v, j);
    }
}

}  // namespace detail

/// Hop stack P_0..P_K of the (possibly row-normalized) source features.
inline std::vector<Matrix> build_hops(const Graph& g, const Matrix& X_src, int K) {
    std::vector<Matrix> hops;
    hops.reserve(static_cast<std::size_t>(K) + 1);
    hops.push_back(X_src);
    for (int k = 1; k <= K; ++k) hops.push_back(propagate(g, hops.back()));
    return hops;
}

/// Final feature map H from the hop stack: plain tail, scaled concat, or
/// RFF of the concat. Row-local given the hop rows.
inline Matrix assemble_features_a(const std::vector<Matrix>& hops,
                                  const PipelineAConfig& cfg) {
    const Eigen::Index n = hops[0].rows();
    Matrix concat(n, detail::concat_width(cfg, hops[0].cols()));
    for (NodeId v = 0; v < n; ++v) detail::assemble_concat_row(hops, cfg, v, concat);
    Matrix H;
    if (cfg.variant == FeatureVariant::MultihopRff) {
        Matrix omega = rff_frequencies(cfg.rff->num_features, concat.cols(),
                                       cfg.rff->sigma, cfg.rff->seed);
        H.resize(n, 2 * cfg.rff->num_features);
        for (NodeId v = 0; v < n; ++v) rff_apply_row(omega, concat, v, H);
    } else {
        H = std::move(concat);
    }
    if (cfg.fp32) round_to_fp32(H);
    return H;
}

inline Matrix build_features_a(const Dataset& ds, const PipelineAConfig& cfg) {
    cfg.validate();
    return assemble_features_a(build_hops(ds.graph, source_features(ds, cfg), cfg.K), cfg);
}

/// Training targets: smoothed one-hot, or the raw multi-label matrix.
inline Matrix training_targets_a(const Dataset& ds, const NodeSet& train,
                                 const PipelineAConfig& cfg) {
    if (ds.multi_label()) {
        Matrix Y(static_cast<Eigen::Index>(train.size()), ds.y_multi.cols());
        for (std::size_t i = 0; i < train.size(); ++i) Y.row(i) = ds.y_multi.row(train[i]);
        return Y;
    }
    return smooth_labels(one_hot(ds.y, train, ds.num_classes()), cfg.epsilon);
}

inline PipelineAModel fit_a(const Dataset& ds, const PipelineAConfig& cfg) {
    cfg.validate();
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    if (train.empty()) throw ValidationError("fit_a: empty training set");
    PipelineAModel model;
    model.config = cfg;
    model.hops = build_hops(ds.graph, source_features(ds, cfg), cfg.K);
    model.H = assemble_features_a(model.hops, cfg);
    model.num_classes = ds.num_classes();
    Matrix H_tr(static_cast<Eigen::Index>(train.size()), model.H.cols());
    for (std::size_t i = 0; i < train.size(); ++i) H_tr.row(i) = model.H.row(train[i]);
    auto [W, stats] = ridge_solve(H_tr, training_targets_a(ds, train, cfg), cfg.alpha);
    model.W = std::move(W);
    model.stats = std::move(stats);
    return model;
}

/// Y_hat = H W, fixed ascending reduction per entry.
inline Matrix predict_a(const PipelineAModel& model) {
    Matrix out(model.H.rows(), model.W.cols());
    for (Eigen::Index r = 0; r < model.H.rows(); ++r)
        for (Eigen::Index c = 0; c < model.W.cols(); ++c) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < model.H.cols(); ++j)
                s += model.H(r, j) * model.W(j, c);
            out(r, c) = s;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Correct-and-Smooth
// ---------------------------------------------------------------------------

/// Huang-style C&S: propagate the train-row residual and add it back with
/// the mean-train-error autoscale, then clamp train rows to their labels
/// and propagate the smoothed predictions.
inline Matrix correct_and_smooth(const Dataset& ds, const Matrix& base_pred,
                                 const CnsParams& params) {
    if (base_pred.rows() != ds.n()) throw DimensionMismatch("cns: row count != n");
    if (!base_pred.allFinite()) throw ValidationError("cns: non-finite base predictions");
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    const int C = static_cast<int>(base_pred.cols());
    Matrix Y = Matrix::Zero(ds.n(), C);
    for (NodeId v : train) Y(v, ds.y[v]) = 1.0;

    Matrix E = Matrix::Zero(ds.n(), C);
    double err_total = 0.0;
    for (NodeId v : train) {
        E.row(v) = Y.row(v) - base_pred.row(v);
        err_total += E.row(v).cwiseAbs().sum();
    }
    const double sigma = err_total / static_cast<double>(std::max<std::size_t>(train.size(), 1));
    for (int t = 0; t < params.num_iters; ++t)
        E = (1.0 - params.alpha_correct) * E + params.alpha_correct * propagate(ds.graph, E);

    Matrix corrected = base_pred;
    for (NodeId v = 0; v < ds.n(); ++v) {
        const double l1 = E.row(v).cwiseAbs().sum();
        if (l1 > 0) corrected.row(v) += sigma * E.row(v) / l1;
    }

    for (NodeId v : train) corrected.row(v) = Y.row(v);
    for (int t = 0; t < params.num_iters; ++t)
        corrected = (1.0 - params.alpha_smooth) * corrected +
                    params.alpha_smooth * propagate(ds.graph, corrected);
    return corrected;
}

// ---------------------------------------------------------------------------
// APPNP label propagation + LP-Ridge
// ---------------------------------------------------------------------------

/// Z0 = one-hot train labels; Z <- (1-a) A~ Z + a Z0, `iters` steps.
inline Matrix appnp_label_propagation(const Dataset& ds, double alpha_ppr, int iters) {
    if (alpha_ppr <= 0 || alpha_ppr > 1)
        throw ValidationError("appnp: alpha_ppr must be in (0,1]");
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    const int C = ds.num_classes();
    Matrix Z0 = Matrix::Zero(ds.n(), C);
    if (ds.multi_label()) {
        for (NodeId v : train) Z0.row(v) = ds.y_multi.row(v);
    } else {
        for (NodeId v : train) Z0(v, ds.y[v]) = 1.0;
    }
    Matrix Z = Z0;
    for (int t = 0; t < iters; ++t)
        Z = (1.0 - alpha_ppr) * propagate(ds.graph, Z) + alpha_ppr * Z0;
    return Z;
}

/// Ridge on APPNP soft labels as features; {0,1} targets per task.
inline Matrix lp_ridge_predict(const Dataset& ds, double alpha_ppr, int iters,
                               double alpha) {
    Matrix Z = appnp_label_propagation(ds, alpha_ppr, iters);
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    if (train.empty()) throw ValidationError("lp_ridge: empty training set");
    Matrix Z_tr(static_cast<Eigen::Index>(train.size()), Z.cols());
    for (std::size_t i = 0; i < train.size(); ++i) Z_tr.row(i) = Z.row(train[i]);
    Matrix Y_tr = ds.multi_label()
                      ? [&] {
                            Matrix Y(static_cast<Eigen::Index>(train.size()),
                                     ds.y_multi.cols());
                            for (std::size_t i = 0; i < train.size(); ++i)
                                Y.row(i) = ds.y_multi.row(train[i]);
                            return Y;
                        }()
                      : one_hot(ds.y, train, ds.num_classes());
    auto [W, stats] = ridge_solve(Z_tr, Y_tr, alpha);
    return Z * W;
}

}  // namespace cfgraph
