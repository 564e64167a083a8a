#pragma once

#include <cmath>
#include <vector>

#include "cfgraph/dataset.hpp"
#include "cfgraph/graph.hpp"
#include "cfgraph/numerics.hpp"

namespace cfgraph {

enum class Phi { None, Tanh, Elu };

inline const char* phi_name(Phi p) {
    switch (p) {
        case Phi::None: return "none";
        case Phi::Tanh: return "tanh";
        case Phi::Elu: return "elu";
    }
    return "?";
}

inline Phi phi_from_name(const std::string& s) {
    if (s == "none") return Phi::None;
    if (s == "tanh") return Phi::Tanh;
    if (s == "elu") return Phi::Elu;
    throw ValidationError("unknown phi: " + s);
}

inline double apply_phi(Phi phi, double x) {
    switch (phi) {
        case Phi::None: return x;
        case Phi::Tanh: return std::tanh(x);
        case Phi::Elu: return x >= 0 ? x : std::expm1(x);
    }
    return x;
}

struct BaseFeatureFlags {
    bool hops = true;      // X^, A~X^, A~^2 X^, A~^3 X^
    bool variance = true;  // var_1, var_2
    bool diffs = true;     // successive hop differences
    bool attn = true;      // cosine-weighted neighbor mean
};

struct LcfConfig {
    int K = 3;
    Phi phi = Phi::Tanh;
    double lambda = 1.0;         // per-layer ridge
    double sigma_scale = 1.0;    // bandwidth = sigma_scale * sigma_med(h_K[tr])
    double lambda_prime = 1e-2;  // KRR regularizer
    bool use_lcf = true;         // false: KRR-only on h0
    bool whiten_h0 = true;
    BaseFeatureFlags base_flags;

    void validate() const {
        if (K < 1 || K > 9) throw ValidationError("lcf: K out of range");
        if (lambda <= 0 || lambda_prime <= 0 || sigma_scale <= 0)
            throw ValidationError("lcf: regularizers and sigma scale must be > 0");
        if (!base_flags.hops && !base_flags.variance && !base_flags.diffs &&
            !base_flags.attn)
            throw ValidationError("lcf: all base feature blocks disabled");
    }
};

struct LcfNetModel {
    LcfConfig config;
    int num_classes = 0;
    double sigma = 1.0;  // resolved KRR bandwidth
    std::vector<Matrix> layer_W;
    std::vector<RidgeStats> layer_stats;
    KernelHead head;
    // caches for prediction replay and local unlearning
    Matrix h0;               // n x d0 (post-whitening if enabled)
    std::vector<Matrix> a;   // per-layer phi(A~ h_{k-1}), n x D_k
    Matrix h_final;          // n x D_{K+1}
};

namespace detail {

/// Cosine-similarity-weighted neighbor mean on row-normalized features:
/// w_uv = max(x^_u . x^_v, 0), renormalized per node; uniform fallback
/// when every weight is zero; isolated nodes keep their own row.
inline Matrix cosine_attention(const Graph& g, const Matrix& Xn) {
    Matrix out(Xn.rows(), Xn.cols());
    for (NodeId v = 0; v < g.n; ++v) {
        const NodeId* begin = g.neighbors_begin(v);
        const NodeId* end = g.neighbors_end(v);
        if (begin == end) {
            out.row(v) = Xn.row(v);
            continue;
        }
        double total = 0.0;
        for (const NodeId* u = begin; u != end; ++u) {
            double dot = 0.0;
            for (Eigen::Index j = 0; j < Xn.cols(); ++j) dot += Xn(v, j) * Xn(*u, j);
            total += std::max(dot, 0.0);
        }
        for (Eigen::Index j = 0; j < Xn.cols(); ++j) {
            double s = 0.0;
            for (const NodeId* u = begin; u != end; ++u) {
                double dot = 0.0;
                for (Eigen::Index jj = 0; jj < Xn.cols(); ++jj)
                    dot += Xn(v, jj) * Xn(*u, jj);
                const double w = total > 0
                                     ? std::max(dot, 0.0) / total
                                     : 1.0 / static_cast<double>(end - begin);
                s += w * Xn(*u, j);
            }
            out(v, j) = s;
        }
    }
    return out;
}

}  // namespace detail

/// Base feature block h0: hop powers, neighborhood variances
/// var_k = A~^k(X^ o X^) - (A~^k X^)^o2, hop differences, and attention.
inline Matrix base_features_h0(const Dataset& ds, const BaseFeatureFlags& flags) {
    Matrix Xn = ds.X;
    for (Eigen::Index r = 0; r < Xn.rows(); ++r) {
        const double norm = Xn.row(r).norm();
        if (norm > 0) Xn.row(r) /= norm;
    }
    const Eigen::Index d = Xn.cols();
    std::vector<Matrix> P(4);  // A~^k Xn
    P[0] = Xn;
    for (int k = 1; k <= 3; ++k) P[k] = propagate(ds.graph, P[k - 1]);
    Matrix X2 = Xn.cwiseProduct(Xn);
    std::vector<Matrix> Q(3);  // A~^k (Xn o Xn)
    Q[0] = X2;
    for (int k = 1; k <= 2; ++k) Q[k] = propagate(ds.graph, Q[k - 1]);

    std::vector<Matrix> blocks;
    if (flags.hops)
        for (int k = 0; k <= 3; ++k) blocks.push_back(P[k]);
    if (flags.variance)
        for (int k = 1; k <= 2; ++k)
            blocks.push_back(Q[k] - P[k].cwiseProduct(P[k]));
    if (flags.diffs)
        for (int k = 0; k <= 2; ++k) blocks.push_back(P[k] - P[k + 1]);
    if (flags.attn) blocks.push_back(detail::cosine_attention(ds.graph, Xn));

    Matrix h0(ds.n(), static_cast<Eigen::Index>(blocks.size()) * d);
    for (std::size_t b = 0; b < blocks.size(); ++b)
        h0.middleCols(static_cast<Eigen::Index>(b) * d, d) = blocks[b];
    return h0;
}

/// p = a W, fixed ascending reduction per entry.
inline Matrix layer_predictions(const Matrix& a, const Matrix& W) {
    Matrix p(a.rows(), W.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < a.cols(); ++j) s += a(r, j) * W(j, c);
            p(r, c) = s;
        }
    return p;
}

struct LcfLayerOut {
    Matrix a;       // phi(A~ h_prev)
    Matrix W;       // ridge weights for this layer
    RidgeStats stats;
    Matrix p;       // a W over all rows
    Matrix h_next;  // [h_prev | p]
};

inline LcfLayerOut lcf_layer(const Graph& g, const Matrix& h_prev, Phi phi,
                             double lambda, const Matrix& Y_tr, const NodeSet& train) {
    LcfLayerOut out;
    out.a = propagate(g, h_prev);
    if (phi != Phi::None)
        for (Eigen::Index r = 0; r < out.a.rows(); ++r)
            for (Eigen::Index c = 0; c < out.a.cols(); ++c)
                out.a(r, c) = apply_phi(phi, out.a(r, c));
    Matrix a_tr(static_cast<Eigen::Index>(train.size()), out.a.cols());
    for (std::size_t i = 0; i < train.size(); ++i) a_tr.row(i) = out.a.row(train[i]);
    auto [W, stats] = ridge_solve(a_tr, Y_tr, lambda);
    out.W = std::move(W);
    out.stats = std::move(stats);
    out.p = layer_predictions(out.a, out.W);
    out.h_next.resize(h_prev.rows(), h_prev.cols() + out.p.cols());
    out.h_next << h_prev, out.p;
    return out;
}

inline Matrix lcf_targets(const Dataset& ds, const NodeSet& train) {
    if (ds.multi_label()) {
        Matrix Y(static_cast<Eigen::Index>(train.size()), ds.y_multi.cols());
        for (std::size_t i = 0; i < train.size(); ++i) Y.row(i) = ds.y_multi.row(train[i]);
        return Y;
    }
    return one_hot(ds.y, train, ds.num_classes());
}

inline LcfNetModel fit_lcfnet(const Dataset& ds, const LcfConfig& cfg) {
    cfg.validate();
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    if (train.empty()) throw ValidationError("fit_lcfnet: empty training set");
    LcfNetModel model;
    model.config = cfg;
    model.num_classes = ds.num_classes();

    model.h0 = base_features_h0(ds, cfg.base_flags);
    if (cfg.whiten_h0) model.h0 = column_whiten(model.h0, train);
    const Matrix Y_tr = lcf_targets(ds, train);

    Matrix h = model.h0;
    if (cfg.use_lcf) {
        for (int k = 1; k <= cfg.K; ++k) {
            LcfLayerOut layer = lcf_layer(ds.graph, h, cfg.phi, cfg.lambda, Y_tr, train);
            model.a.push_back(std::move(layer.a));
            model.layer_W.push_back(std::move(layer.W));
            model.layer_stats.push_back(std::move(layer.stats));
            h = std::move(layer.h_next);
        }
    }
    model.h_final = std::move(h);

    Matrix h_tr(static_cast<Eigen::Index>(train.size()), model.h_final.cols());
    for (std::size_t i = 0; i < train.size(); ++i)
        h_tr.row(i) = model.h_final.row(train[i]);
    model.sigma = cfg.sigma_scale * median_pairwise_distance(h_tr);
    model.head = krr_fit(h_tr, Y_tr, model.sigma, cfg.lambda_prime);
    return model;
}

/// Replay the layer stack with stored weights (no re-solving), then the
/// KRR head. On fit-time inputs this reproduces fit-time state bitwise.
inline Matrix predict_lcfnet(const LcfNetModel& model, const Dataset& ds) {
    if (ds.X.rows() != model.h0.rows())
        throw DimensionMismatch("predict_lcfnet: node count changed");
    Matrix h0 = base_features_h0(ds, model.config.base_flags);
    if (model.config.whiten_h0) {
        const NodeSet train = ds.mask_nodes(ds.train_mask);
        h0 = column_whiten(h0, train);
    }
    Matrix h = h0;
    if (model.config.use_lcf) {
        for (std::size_t k = 0; k < model.layer_W.size(); ++k) {
            Matrix a = propagate(ds.graph, h);
            if (model.config.phi != Phi::None)
                for (Eigen::Index r = 0; r < a.rows(); ++r)
                    for (Eigen::Index c = 0; c < a.cols(); ++c)
                        a(r, c) = apply_phi(model.config.phi, a(r, c));
            Matrix p = layer_predictions(a, model.layer_W[k]);
            Matrix h_next(h.rows(), h.cols() + p.cols());
            h_next << h, p;
            h = std::move(h_next);
        }
    }
    return krr_predict(model.head, h);
}

/// Cached-state prediction (no recomputation); the fit-time view.
inline Matrix predict_lcfnet_cached(const LcfNetModel& model) {
    return krr_predict(model.head, model.h_final);
}

}  // namespace cfgraph
