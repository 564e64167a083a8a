#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfgraph/dataset.hpp"
#include "cfgraph/graph.hpp"

namespace cfgraph {

struct RoutingDecision {
    std::optional<double> h_adj;  // absent for hand-assigned datasets
    double tau = 0.2;
    char pipeline = 'A';
    std::string reason;  // "computed" or "hand-assigned"
};

constexpr double kDefaultTau = 0.2;

/// Route on train-set adjusted homophily: h_adj >= tau selects the linear
/// pipeline (A), below tau the kernel pipeline (B). Multi-label datasets
/// and graphs with no train-train edges cannot be auto-routed and need an
/// explicit pipeline override.
inline RoutingDecision route(const Dataset& ds, double tau = kDefaultTau) {
    RoutingDecision d;
    d.tau = tau;
    if (ds.pipeline_override != PipelineOverride::None) {
        d.pipeline = ds.pipeline_override == PipelineOverride::ForceA ? 'A' : 'B';
        d.reason = "hand-assigned";
        return d;
    }
    if (ds.multi_label())
        throw ValidationError(
            "route: multi-label dataset must be hand-assigned via pipeline_override");
    try {
        d.h_adj = adjusted_homophily(ds.graph, ds.y, ds.train_mask);
    } catch (const NoTrainEdges&) {
        throw ValidationError(
            "route: no train-train edges; set pipeline_override explicitly");
    }
    d.pipeline = *d.h_adj >= tau ? 'A' : 'B';
    d.reason = "computed";
    return d;
}

struct SweepRow {
    std::string name;
    double h_adj = 0.0;
    std::vector<char> pipeline;  // one decision per tau, same order as input
};

/// Threshold-sensitivity table over precomputed (name, h_adj) entries.
inline std::vector<SweepRow> tau_sweep(
    const std::vector<std::pair<std::string, double>>& entries,
    const std::vector<double>& taus) {
    std::vector<SweepRow> table;
    table.reserve(entries.size());
    for (const auto& [name, h] : entries) {
        SweepRow row;
        row.name = name;
        row.h_adj = h;
        for (double tau : taus) row.pipeline.push_back(h >= tau ? 'A' : 'B');
        table.push_back(std::move(row));
    }
    return table;
}

inline std::vector<SweepRow> tau_sweep(const std::vector<Dataset>& datasets,
                                       const std::vector<double>& taus) {
    std::vector<std::pair<std::string, double>> entries;
    for (const Dataset& ds : datasets)
        entries.emplace_back(ds.name, adjusted_homophily(ds.graph, ds.y, ds.train_mask));
    return tau_sweep(entries, taus);
}

}  // namespace cfgraph
