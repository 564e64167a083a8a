#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfgraph/router.hpp"
#include "helpers.hpp"

using namespace cfgraph;

namespace {

Dataset sbm(double p_in, double p_out, std::uint64_t seed = 1) {
    SbmSpec spec;
    spec.n = 150;
    spec.num_classes = 2;
    spec.p_in = p_in;
    spec.p_out = p_out;
    spec.seed = seed;
    return generate_sbm(spec);
}

const std::vector<std::pair<std::string, double>> kBenchmarkHomophily = {
    {"cora", 0.77},        {"citeseer", 0.67}, {"pubmed", 0.69},
    {"photo", 0.78},       {"cs", 0.76},       {"physics", 0.85},
    {"wikics", 0.57},      {"arxiv", 0.41},    {"minesweeper", 0.01},
    {"tolokers", 0.09},    {"ratings", 0.14},  {"roman", -0.05},
    {"questions", 0.02},
};

}  // namespace

TEST_CASE("route picks A above and B below the threshold") {
    Dataset homo = sbm(0.1, 0.0);
    RoutingDecision d = route(homo);
    CHECK(d.pipeline == 'A');
    CHECK(d.reason == "computed");
    CHECK(*d.h_adj == doctest::Approx(1.0));

    Dataset hetero = sbm(0.0, 0.1);
    RoutingDecision d2 = route(hetero);
    CHECK(d2.pipeline == 'B');
    CHECK(*d2.h_adj < 0.2);

    // any tau <= 1 keeps the fully homophilous graph on A
    for (double tau : {-0.5, 0.0, 0.5, 1.0}) CHECK(route(homo, tau).pipeline == 'A');
}

TEST_CASE("routing never looks at non-train labels") {
    Dataset ds = sbm(0.05, 0.02, 3);
    RoutingDecision before = route(ds);
    Dataset mutated = ds;
    for (NodeId v = 0; v < ds.n(); ++v)
        if (!ds.train_mask[v]) mutated.y[v] = 1 - mutated.y[v];
    RoutingDecision after = route(mutated);
    CHECK(before.pipeline == after.pipeline);
    CHECK(*before.h_adj == *after.h_adj);
}

TEST_CASE("overrides and refusal cases") {
    Dataset ds = sbm(0.1, 0.0);
    ds.pipeline_override = PipelineOverride::ForceB;
    RoutingDecision d = route(ds);
    CHECK(d.pipeline == 'B');
    CHECK(d.reason == "hand-assigned");
    CHECK(!d.h_adj.has_value());

    // multi-label without override refuses to auto-route
    Dataset ml = sbm(0.1, 0.0);
    ml.y_multi = Matrix::Zero(ml.n(), 2);
    for (NodeId v = 0; v < ml.n(); ++v) ml.y_multi(v, ml.y[v]) = 1.0;
    CHECK_THROWS_AS(route(ml), ValidationError);
    ml.pipeline_override = PipelineOverride::ForceB;
    CHECK(route(ml).pipeline == 'B');

    // no train-train edges likewise refuses
    Dataset lonely;
    lonely.graph = make_graph(4, {{0, 1}, {2, 3}});
    lonely.X = Matrix::Zero(4, 1);
    lonely.y = {0, 1, 0, 1};
    lonely.train_mask = {1, 0, 1, 0};
    lonely.val_mask = {0, 1, 0, 0};
    lonely.test_mask = {0, 0, 0, 1};
    CHECK_THROWS_AS(route(lonely), ValidationError);
    lonely.pipeline_override = PipelineOverride::ForceA;
    CHECK(route(lonely).pipeline == 'A');
}

TEST_CASE("tau sweep: flips happen only where tau crosses h_adj") {
    std::vector<std::pair<std::string, double>> entries{{"high", 0.77}, {"low", -0.05}};
    auto table = tau_sweep(entries, {0.0, 0.2, 0.5});
    CHECK(table[0].pipeline == std::vector<char>{'A', 'A', 'A'});
    CHECK(table[1].pipeline == std::vector<char>{'B', 'B', 'B'});
    auto fine = tau_sweep(entries, {-0.1, -0.05, 0.77, 0.78});
    CHECK(fine[0].pipeline == std::vector<char>{'A', 'A', 'A', 'B'});
    CHECK(fine[1].pipeline == std::vector<char>{'A', 'A', 'B', 'B'});
}

TEST_CASE("tau sweep is monotone: raising tau only moves A to B") {
    const std::vector<double> taus{-0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    auto table = tau_sweep(kBenchmarkHomophily, taus);
    for (const auto& row : table)
        for (std::size_t i = 1; i < row.pipeline.size(); ++i)
            CHECK(!(row.pipeline[i - 1] == 'B' && row.pipeline[i] == 'A'));
}

TEST_CASE("benchmark homophily fixture reproduces the assignment table") {
    const std::vector<double> taus{-0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    auto table = tau_sweep(kBenchmarkHomophily, taus);
    auto b_set = [&](std::size_t tau_idx) {
        std::vector<std::string> names;
        for (const auto& row : table)
            if (row.pipeline[tau_idx] == 'B') names.push_back(row.name);
        return names;
    };
    CHECK(b_set(0).empty());                                     // tau = -0.1
    CHECK(b_set(1) == std::vector<std::string>{"roman"});        // tau = 0
    CHECK(b_set(2) == std::vector<std::string>{"minesweeper", "tolokers", "roman",
                                               "questions"});    // tau = 0.1
    const std::vector<std::string> hetero5{"minesweeper", "tolokers", "ratings",
                                           "roman", "questions"};
    CHECK(b_set(3) == hetero5);  // tau = 0.2
    CHECK(b_set(4) == hetero5);  // tau = 0.3
    CHECK(b_set(5) == hetero5);  // tau = 0.4
    CHECK(b_set(6) == std::vector<std::string>{"arxiv", "minesweeper", "tolokers",
                                               "ratings", "roman", "questions"});
}

TEST_CASE("dataset-based sweep agrees with route()") {
    std::vector<Dataset> sets;
    sets.push_back(sbm(0.1, 0.0));
    sets.back().name = "homo";
    sets.push_back(sbm(0.0, 0.1));
    sets.back().name = "hetero";
    auto table = tau_sweep(sets, {0.2});
    CHECK(table[0].pipeline[0] == route(sets[0]).pipeline);
    CHECK(table[1].pipeline[0] == route(sets[1]).pipeline);
}
