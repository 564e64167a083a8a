#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfgraph/pipeline_a.hpp"
#include "helpers.hpp"

using namespace cfgraph;
using testutil::bitwise_equal;
using testutil::dense_propagate_power;
using testutil::dense_propagation_operator;
using testutil::max_abs_diff;

namespace {

Dataset easy_sbm(NodeId n = 400, std::uint64_t seed = 1) {
    SbmSpec spec;
    spec.n = n;
    spec.num_classes = 2;
    spec.p_in = 0.05;
    spec.p_out = 0.005;
    spec.class_mean_separation = 2.0;
    spec.seed = seed;
    return generate_sbm(spec);
}

/// Straightforward dense reimplementation of the Huang C&S recipe, used
/// as an oracle for the sparse implementation.
Matrix cns_oracle(const Dataset& ds, const Matrix& base, const CnsParams& p) {
    const Matrix T = dense_propagation_operator(ds.graph);
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    const Eigen::Index C = base.cols();
    Matrix Y = Matrix::Zero(ds.n(), C);
    for (NodeId v : train) Y(v, ds.y[v]) = 1.0;
    Matrix E = Matrix::Zero(ds.n(), C);
    double err = 0.0;
    for (NodeId v : train) {
        E.row(v) = Y.row(v) - base.row(v);
        err += E.row(v).cwiseAbs().sum();
    }
    const double sigma = err / static_cast<double>(train.size());
    for (int t = 0; t < p.num_iters; ++t)
        E = (1.0 - p.alpha_correct) * E + p.alpha_correct * (T * E);
    Matrix corrected = base;
    for (NodeId v = 0; v < ds.n(); ++v) {
        const double l1 = E.row(v).cwiseAbs().sum();
        if (l1 > 0) corrected.row(v) += sigma * E.row(v) / l1;
    }
    for (NodeId v : train) corrected.row(v) = Y.row(v);
    for (int t = 0; t < p.num_iters; ++t)
        corrected = (1.0 - p.alpha_smooth) * corrected + p.alpha_smooth * (T * corrected);
    return corrected;
}

}  // namespace

TEST_CASE("build_features_a: K=0 plain is the source matrix") {
    Dataset ds = easy_sbm(50);
    PipelineAConfig cfg;
    cfg.K = 0;
    Matrix H = build_features_a(ds, cfg);
    CHECK(bitwise_equal(H, ds.X));
}

TEST_CASE("build_features_a: row-normalized source has unit rows") {
    Dataset ds = easy_sbm(50);
    ds.X.row(7).setZero();  // zero rows stay zero
    PipelineAConfig cfg;
    cfg.K = 0;
    cfg.x_src = SourceNorm::RowNormalized;
    Matrix H = build_features_a(ds, cfg);
    for (NodeId v = 0; v < ds.n(); ++v) {
        const double norm = H.row(v).norm();
        if (v == 7)
            CHECK(norm == 0.0);
        else
            CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("build_features_a: K=3 plain matches the dense power oracle") {
    Dataset ds = easy_sbm(50);
    PipelineAConfig cfg;
    cfg.K = 3;
    Matrix H = build_features_a(ds, cfg);
    CHECK(max_abs_diff(H, dense_propagate_power(ds.graph, ds.X, 3)) < 1e-12);
}

TEST_CASE("build_features_a: concat stacks hops in order") {
    Dataset ds = easy_sbm(40);
    PipelineAConfig cfg;
    cfg.K = 2;
    cfg.variant = FeatureVariant::MultihopConcat;
    Matrix H = build_features_a(ds, cfg);
    const Eigen::Index d = ds.X.cols();
    CHECK(H.cols() == 3 * d);
    CHECK(bitwise_equal(Matrix(H.leftCols(d)), ds.X));
    CHECK(max_abs_diff(Matrix(H.middleCols(d, d)),
                       dense_propagate_power(ds.graph, ds.X, 1)) < 1e-12);
}

TEST_CASE("smooth_labels formula") {
    Matrix Y = Matrix::Zero(2, 4);
    Y(0, 1) = 1.0;
    Y(1, 3) = 1.0;
    CHECK(bitwise_equal(smooth_labels(Y, 0.0), Y));
    Matrix all_uniform = smooth_labels(Y, 1.0);
    for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index c = 0; c < 4; ++c)
            CHECK(all_uniform(r, c) == doctest::Approx(0.25).epsilon(1e-15));
    Matrix s = smooth_labels(Y, 0.1);
    CHECK(s(0, 1) == doctest::Approx(0.925).epsilon(1e-15));
    CHECK(s(0, 0) == doctest::Approx(0.025).epsilon(1e-15));
    for (Eigen::Index r = 0; r < 2; ++r)
        CHECK(s.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_a solves the homophilous SBM to high accuracy") {
    Dataset ds = easy_sbm(400);
    PipelineAConfig cfg;
    cfg.K = 2;
    cfg.alpha = 1.0;
    PipelineAModel model = fit_a(ds, cfg);
    const double acc = evaluate(predict_a(model), ds, ds.test_mask);
    CHECK(acc > 0.95);
}

TEST_CASE("fit_a: identical labels everywhere give that class everywhere") {
    Dataset ds = easy_sbm(60);
    for (NodeId v = 0; v < ds.n(); ++v) ds.y[v] = 0;
    PipelineAConfig cfg;
    cfg.K = 1;
    PipelineAModel model = fit_a(ds, cfg);
    CHECK(model.num_classes == 1);
    CHECK(evaluate(predict_a(model), ds, ds.test_mask) == 1.0);
}

TEST_CASE("fit_a is deterministic, and ridge optimality holds end to end") {
    Dataset ds = easy_sbm(120);
    PipelineAConfig cfg;
    cfg.K = 2;
    cfg.epsilon = 0.05;
    PipelineAModel a = fit_a(ds, cfg);
    PipelineAModel b = fit_a(ds, cfg);
    CHECK(bitwise_equal(a.W, b.W));
    Matrix grad = (a.stats.gram_matrix() +
                   cfg.alpha * Matrix::Identity(a.W.rows(), a.W.rows())) *
                      a.W -
                  a.stats.rhs_matrix();
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("per-group Tikhonov equals the explicit penalty-matrix oracle") {
    Dataset ds = easy_sbm(80);
    PipelineAConfig cfg;
    cfg.K = 2;
    cfg.alpha = 1.0;
    cfg.variant = FeatureVariant::MultihopConcat;
    cfg.group_alphas = {0.5, 1.0, 4.0};
    PipelineAModel model = fit_a(ds, cfg);
    Matrix pred = predict_a(model);

    // oracle: unscaled concat, per-column penalty diag(alpha_g)
    PipelineAConfig plain_cfg = cfg;
    plain_cfg.group_alphas.clear();
    Matrix H_raw = build_features_a(ds, plain_cfg);
    const NodeSet train = ds.mask_nodes(ds.train_mask);
    Matrix H_tr(static_cast<Eigen::Index>(train.size()), H_raw.cols());
    for (std::size_t i = 0; i < train.size(); ++i) H_tr.row(i) = H_raw.row(train[i]);
    Matrix Y_tr = one_hot(ds.y, train, 2);
    const Eigen::Index d = ds.X.cols();
    Matrix penalty = Matrix::Zero(H_raw.cols(), H_raw.cols());
    for (int g = 0; g <= 2; ++g)
        for (Eigen::Index j = 0; j < d; ++j)
            penalty(g * d + j, g * d + j) = cfg.group_alphas[g];
    Matrix W_oracle = (H_tr.transpose() * H_tr + penalty).inverse() *
                      (H_tr.transpose() * Y_tr);
    CHECK(max_abs_diff(pred, H_raw * W_oracle) < 1e-8);
}

TEST_CASE("multihop-rff variant is deterministic in the seed") {
    Dataset ds = easy_sbm(80);
    PipelineAConfig cfg;
    cfg.K = 1;
    cfg.variant = FeatureVariant::MultihopRff;
    cfg.rff = RffParams{64, 2.0, 5};
    PipelineAModel a = fit_a(ds, cfg);
    PipelineAModel b = fit_a(ds, cfg);
    CHECK(bitwise_equal(a.W, b.W));
    CHECK(a.H.cols() == 128);
    cfg.rff->seed = 6;
    PipelineAModel c = fit_a(ds, cfg);
    CHECK(!bitwise_equal(a.W, c.W));
}

TEST_CASE("config validation") {
    PipelineAConfig cfg;
    cfg.K = 9;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.K = 2;
    cfg.epsilon = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.epsilon = 0.0;
    cfg.variant = FeatureVariant::MultihopRff;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // missing rff params
    cfg.variant = FeatureVariant::Plain;
    cfg.group_alphas = {1.0};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);  // group alphas need concat
}

TEST_CASE("correct_and_smooth: zero alphas clamp train rows only") {
    Dataset ds = easy_sbm(60);
    PipelineAConfig cfg;
    cfg.K = 1;
    Matrix base = predict_a(fit_a(ds, cfg));
    CnsParams p;
    p.alpha_correct = 0.0;
    p.alpha_smooth = 0.0;
    p.num_iters = 10;
    Matrix out = correct_and_smooth(ds, base, p);
    for (NodeId v = 0; v < ds.n(); ++v) {
        if (ds.train_mask[v]) {
            for (Eigen::Index c = 0; c < out.cols(); ++c)
                CHECK(out(v, c) == (ds.y[v] == static_cast<int>(c) ? 1.0 : 0.0));
        } else {
            CHECK(max_abs_diff(Matrix(out.row(v)), Matrix(base.row(v))) == 0.0);
        }
    }
}

TEST_CASE("correct_and_smooth matches the dense reference recipe") {
    Dataset ds = easy_sbm(80);
    PipelineAConfig cfg;
    cfg.K = 2;
    Matrix base = predict_a(fit_a(ds, cfg));
    CnsParams p;
    p.alpha_correct = 0.7;
    p.alpha_smooth = 0.6;
    p.num_iters = 20;
    CHECK(max_abs_diff(correct_and_smooth(ds, base, p), cns_oracle(ds, base, p)) < 1e-9);
}

TEST_CASE("correct_and_smooth does not hurt accuracy on the easy SBM") {
    Dataset ds = easy_sbm(300, 3);
    PipelineAConfig cfg;
    cfg.K = 2;
    Matrix base = predict_a(fit_a(ds, cfg));
    CnsParams p;
    p.alpha_correct = 0.8;
    p.alpha_smooth = 0.8;
    Matrix out = correct_and_smooth(ds, base, p);
    const double acc_base = evaluate(base, ds, ds.test_mask);
    const double acc_cns = evaluate(out, ds, ds.test_mask);
    CHECK(acc_cns >= acc_base - 0.02);
    // train rows agree with labels after the smooth clamp + propagation
    const double train_acc = evaluate(out, ds, ds.train_mask);
    CHECK(train_acc > 0.95);
}

TEST_CASE("appnp: alpha_ppr=1 and iters=0 both return Z0") {
    Dataset ds = easy_sbm(40);
    Matrix z0 = appnp_label_propagation(ds, 0.3, 0);
    for (NodeId v = 0; v < ds.n(); ++v)
        for (Eigen::Index c = 0; c < z0.cols(); ++c) {
            const double expect =
                ds.train_mask[v] && ds.y[v] == static_cast<int>(c) ? 1.0 : 0.0;
            CHECK(z0(v, c) == expect);
        }
    CHECK(bitwise_equal(appnp_label_propagation(ds, 1.0, 7), z0));
}

TEST_CASE("appnp decays monotonically along a path from a lone label") {
    Dataset ds;
    ds.graph = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    ds.X = Matrix::Zero(5, 1);
    ds.y = {0, 1, -1, -1, -1};  // class 1 exists so C = 2
    ds.train_mask = {1, 0, 0, 0, 0};
    ds.val_mask = {0, 1, 0, 0, 0};
    ds.test_mask = {0, 0, 1, 1, 1};
    ds.y[1] = 1;
    Matrix Z = appnp_label_propagation(ds, 0.1, 30);
    for (NodeId v = 0; v + 1 < 5; ++v) CHECK(Z(v, 0) > Z(v + 1, 0));
}

TEST_CASE("lp_ridge produces sane predictions on the easy SBM") {
    Dataset ds = easy_sbm(200, 9);
    Matrix pred = lp_ridge_predict(ds, 0.1, 20, 1.0);
    CHECK(evaluate(pred, ds, ds.test_mask) > 0.8);
}

TEST_CASE("plain-variant predictions are permutation-equivariant, bitwise") {
    Dataset ds = easy_sbm(70, 4);
    PipelineAConfig cfg;
    cfg.K = 2;
    Matrix pred = predict_a(fit_a(ds, cfg));

    // permute ids, refit, permute predictions back
    const NodeId n = ds.n();
    std::vector<NodeId> perm(static_cast<std::size_t>(n));
    SplitMix64 rng(8);
    for (NodeId v = 0; v < n; ++v) perm[v] = v;
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);

    Dataset pd;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (const auto& [u, v] : ds.graph.edges) edges.emplace_back(perm[u], perm[v]);
    pd.graph = make_graph(n, edges);
    pd.X.resize(n, ds.X.cols());
    pd.y.resize(static_cast<std::size_t>(n));
    pd.train_mask.resize(static_cast<std::size_t>(n));
    pd.val_mask.resize(static_cast<std::size_t>(n));
    pd.test_mask.resize(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v) {
        pd.X.row(perm[v]) = ds.X.row(v);
        pd.y[perm[v]] = ds.y[v];
        pd.train_mask[perm[v]] = ds.train_mask[v];
        pd.val_mask[perm[v]] = ds.val_mask[v];
        pd.test_mask[perm[v]] = ds.test_mask[v];
    }
    Matrix pred_p = predict_a(fit_a(pd, cfg));
    Matrix back(n, pred.cols());
    for (NodeId v = 0; v < n; ++v) back.row(v) = pred_p.row(perm[v]);
    CHECK(bitwise_equal(back, pred));
}
