#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cfgraph/dataset.hpp"
#include "helpers.hpp"

using namespace cfgraph;
using testutil::bitwise_equal;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("sbm generator: basic shape and split accounting") {
    SbmSpec spec;
    spec.n = 120;
    spec.num_classes = 3;
    Dataset ds = generate_sbm(spec);
    CHECK(ds.n() == 120);
    CHECK(ds.num_classes() == 3);
    CHECK(ds.X.rows() == 120);
    std::size_t total = 0;
    for (NodeId v = 0; v < ds.n(); ++v)
        total += (ds.train_mask[v] != 0) + (ds.val_mask[v] != 0) + (ds.test_mask[v] != 0);
    CHECK(total == 120);  // every node lands in exactly one split
    const auto train = ds.mask_nodes(ds.train_mask);
    CHECK(train.size() >= 70);
    CHECK(train.size() <= 74);
}

TEST_CASE("sbm generator is deterministic per seed") {
    SbmSpec spec;
    spec.n = 80;
    spec.seed = 99;
    Dataset a = generate_sbm(spec);
    Dataset b = generate_sbm(spec);
    CHECK(a.graph.edges == b.graph.edges);
    CHECK(bitwise_equal(a.X, b.X));
    CHECK(a.train_mask == b.train_mask);
    spec.seed = 100;
    Dataset c = generate_sbm(spec);
    CHECK(a.graph.edges != c.graph.edges);
}

TEST_CASE("sbm homophily poles") {
    SbmSpec spec;
    spec.n = 200;
    spec.p_in = 0.1;
    spec.p_out = 0.0;
    Dataset homo = generate_sbm(spec);
    std::vector<char> all(200, 1);
    CHECK(adjusted_homophily(homo.graph, homo.y, all) == doctest::Approx(1.0));

    spec.p_in = 0.0;
    spec.p_out = 0.1;
    Dataset hetero = generate_sbm(spec);
    CHECK(adjusted_homophily(hetero.graph, hetero.y, all) < -0.5);
}

TEST_CASE("adjusted homophily tracks the sbm mixing ratio") {
    // Averaged over seeds, h_adj should increase with p_in/(p_in+p_out).
    auto mean_h = [](double p_in, double p_out) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SbmSpec spec;
            spec.n = 150;
            spec.p_in = p_in;
            spec.p_out = p_out;
            spec.seed = seed;
            Dataset ds = generate_sbm(spec);
            std::vector<char> all(150, 1);
            total += adjusted_homophily(ds.graph, ds.y, all);
        }
        return total / 10.0;
    };
    const double low = mean_h(0.02, 0.08);
    const double mid = mean_h(0.05, 0.05);
    const double high = mean_h(0.08, 0.02);
    CHECK(low < mid);
    CHECK(mid < high);
}

TEST_CASE("generate_sparse hits the requested scale") {
    Dataset ds = generate_sparse(5000, 6.0, 4, 8, 0.8, 3);
    CHECK(ds.n() == 5000);
    const double avg_deg = 2.0 * static_cast<double>(ds.graph.edges.size()) / 5000.0;
    CHECK(avg_deg > 4.0);
    CHECK(avg_deg < 7.0);
    std::vector<char> all(5000, 1);
    CHECK(adjusted_homophily(ds.graph, ds.y, all) > 0.3);
}

TEST_CASE("save/load round-trip is lossless") {
    TempDir tmp("cfg_ds_roundtrip");
    SbmSpec spec;
    spec.n = 60;
    spec.num_classes = 3;
    spec.seed = 5;
    Dataset ds = generate_sbm(spec);
    ds.X(0, 0) = 1e-300;  // exercise full fp64 range through the binary format
    ds.X(1, 0) = -0.1;
    save_dataset(ds, tmp.path.string());
    Dataset ld = load_dataset(tmp.path.string());
    CHECK(ld.graph.edges == ds.graph.edges);
    CHECK(bitwise_equal(ld.X, ds.X));
    CHECK(ld.y == ds.y);
    CHECK(ld.train_mask == ds.train_mask);
    CHECK(ld.val_mask == ds.val_mask);
    CHECK(ld.test_mask == ds.test_mask);
    CHECK(ld.metric == ds.metric);
}

TEST_CASE("load: csv features and seed-protocol splits") {
    TempDir tmp("cfg_ds_csv");
    std::ofstream(tmp.path / "edges.tsv") << "0\t1\n1\t2\n";
    std::ofstream(tmp.path / "features.csv") << "3 2\n1 0\n0 1\n1 1\n";
    std::ofstream(tmp.path / "labels.tsv") << "0\t0\n1\t1\n2\t0\n";
    std::ofstream(tmp.path / "splits.json")
        << R"({"seed": 4, "protocol": "stratified-60-20-20", "metric": "roc-auc"})";
    Dataset ds = load_dataset(tmp.path.string());
    CHECK(ds.n() == 3);
    CHECK(ds.X(2, 0) == 1.0);
    CHECK(ds.metric == Metric::RocAuc);
    CHECK(ds.graph.edges.size() == 2);
}

TEST_CASE("load: multi-label labels.tsv") {
    TempDir tmp("cfg_ds_multi");
    std::ofstream(tmp.path / "edges.tsv") << "0\t1\n";
    std::ofstream(tmp.path / "features.csv") << "2 1\n0.5\n1.5\n";
    std::ofstream(tmp.path / "labels.tsv") << "0\t1,0,1\n1\t0,1,0\n";
    std::ofstream(tmp.path / "splits.json") << R"({"train":[0],"val":[],"test":[1]})";
    Dataset ds = load_dataset(tmp.path.string());
    CHECK(ds.multi_label());
    CHECK(ds.y_multi.cols() == 3);
    CHECK(ds.y_multi(0, 2) == 1.0);
    CHECK(ds.y_multi(1, 1) == 1.0);
}

TEST_CASE("load failures carry the right error type") {
    TempDir tmp("cfg_ds_bad");
    CHECK_THROWS_AS(load_dataset((tmp.path / "nope").string()), MissingFile);

    std::ofstream(tmp.path / "edges.tsv") << "0\t1\n";
    std::ofstream(tmp.path / "features.csv") << "2 1\n0\n1\n";
    std::ofstream(tmp.path / "labels.tsv") << "0\t0\n1\t1\n";
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), MissingFile);  // no splits.json

    std::ofstream(tmp.path / "splits.json") << R"({"train":[0,1],"val":[1],"test":[]})";
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), MaskOverlap);

    std::ofstream(tmp.path / "splits.json") << R"({"train":[0],"val":[],"test":[7]})";
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), ValidationError);
}

TEST_CASE("apply_forget: label forget clears the training entry only") {
    SbmSpec spec;
    spec.n = 40;
    Dataset ds = generate_sbm(spec);
    const NodeId target = ds.mask_nodes(ds.train_mask)[0];
    ForgetRequest req;
    req.kind = ForgetKind::Label;
    req.nodes = {target};
    auto [out, affected] = apply_forget(ds, req);
    CHECK(affected == NodeSet{target});
    CHECK(out.train_mask[target] == 0);
    CHECK(out.y[target] == -1);
    CHECK(out.graph.edges == ds.graph.edges);
    CHECK(bitwise_equal(out.X, ds.X));

    const NodeId non_train = ds.mask_nodes(ds.test_mask)[0];
    req.nodes = {non_train};
    CHECK_THROWS_AS(apply_forget(ds, req), ValidationError);
}

TEST_CASE("apply_forget: node deletion removes the node from all splits") {
    SbmSpec spec;
    spec.n = 40;
    Dataset ds = generate_sbm(spec);
    const NodeId target = ds.mask_nodes(ds.train_mask)[0];
    ForgetRequest req;
    req.kind = ForgetKind::Node;
    req.nodes = {target};
    auto [out, affected] = apply_forget(ds, req);
    CHECK(out.graph.deleted[target] == 1);
    CHECK(out.train_mask[target] == 0);
    CHECK(node_set_contains(affected, target));
    CHECK(out.n() == ds.n());  // ids never shift
    // deleted nodes drop out of mask_nodes
    CHECK(!node_set_contains(out.mask_nodes(out.train_mask), target));
}

TEST_CASE("apply_forget: feature forget zeroes rows, keeps structure") {
    SbmSpec spec;
    spec.n = 30;
    Dataset ds = generate_sbm(spec);
    ForgetRequest req;
    req.kind = ForgetKind::Feature;
    req.nodes = {3, 7};
    auto [out, affected] = apply_forget(ds, req);
    CHECK(out.X.row(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.X.row(7).cwiseAbs().maxCoeff() == 0.0);
    CHECK(bitwise_equal(Matrix(out.X.row(0)), Matrix(ds.X.row(0))));
    CHECK(out.graph.edges == ds.graph.edges);
    CHECK(affected == NodeSet{3, 7});
}

TEST_CASE("accuracy: perfect predictions and tie-breaking") {
    std::vector<int> y{0, 1, 2};
    Matrix pred = Matrix::Identity(3, 3);
    NodeSet nodes{0, 1, 2};
    CHECK(evaluate_accuracy(pred, y, nodes) == 1.0);
    // ties resolve toward the lowest class id
    Matrix flat = Matrix::Zero(3, 3);
    CHECK(evaluate_accuracy(flat, y, nodes) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("roc-auc basics") {
    CHECK(evaluate_auc({0.1, 0.9}, {0, 1}) == 1.0);
    CHECK(evaluate_auc({0.9, 0.1}, {0, 1}) == 0.0);
    CHECK(evaluate_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    CHECK_THROWS_AS(evaluate_auc({0.1, 0.2}, {1, 1}), SingleClassAuc);
}

TEST_CASE("roc-auc matches the O(n^2) pair-count oracle") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores;
        std::vector<int> truth;
        for (int i = 0; i < 30; ++i) {
            scores.push_back(rng.next_below(8) / 8.0);  // force ties
            truth.push_back(rng.next_unit() < 0.4 ? 1 : 0);
        }
        std::int64_t n_pos = 0, n_neg = 0;
        for (int t : truth) (t ? n_pos : n_neg)++;
        if (n_pos == 0 || n_neg == 0) continue;
        double wins = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            for (std::size_t j = 0; j < scores.size(); ++j) {
                if (!(truth[i] == 1 && truth[j] == 0)) continue;
                if (scores[i] > scores[j]) wins += 1.0;
                else if (scores[i] == scores[j]) wins += 0.5;
            }
        const double oracle = wins / (static_cast<double>(n_pos) * n_neg);
        CHECK(evaluate_auc(scores, truth) == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("evaluate dispatches on metric and multi-label") {
    SbmSpec spec;
    spec.n = 40;
    Dataset ds = generate_sbm(spec);
    Matrix perfect = Matrix::Zero(40, 2);
    for (NodeId v = 0; v < 40; ++v) perfect(v, ds.y[v]) = 1.0;
    CHECK(evaluate(perfect, ds, ds.test_mask) == 1.0);
    ds.metric = Metric::RocAuc;
    CHECK(evaluate(perfect, ds, ds.test_mask) == 1.0);

    // multi-label mean per-task AUC
    Dataset ml = ds;
    ml.y_multi = Matrix::Zero(40, 2);
    for (NodeId v = 0; v < 40; ++v) ml.y_multi(v, ds.y[v]) = 1.0;
    CHECK(evaluate(perfect, ml, ml.test_mask) == 1.0);
}

TEST_CASE("validate rejects overlapping masks and unlabeled train nodes") {
    SbmSpec spec;
    spec.n = 20;
    Dataset ds = generate_sbm(spec);
    Dataset bad = ds;
    bad.val_mask[ds.mask_nodes(ds.train_mask)[0]] = 1;
    CHECK_THROWS_AS(bad.validate(), MaskOverlap);
    Dataset bad2 = ds;
    bad2.y[ds.mask_nodes(ds.train_mask)[0]] = -1;
    CHECK_THROWS_AS(bad2.validate(), ValidationError);
}
