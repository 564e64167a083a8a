#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "cfgraph/unlearn.hpp"

namespace cfgraph {

// Versioned binary model container, magic "CFGM". Everything little-endian;
// matrices as (rows, cols, fp64 data row-major); ridge statistics as their
// canonical (normalized) accumulator chunks so the round-trip is bitwise.

constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ValidationError("model file truncated");
    return v;
}

inline void write_matrix(std::ostream& out, const Matrix& M) {
    write_pod<std::int64_t>(out, M.rows());
    write_pod<std::int64_t>(out, M.cols());
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c) write_pod<double>(out, M(r, c));
}

inline Matrix read_matrix(std::istream& in) {
    const auto rows = read_pod<std::int64_t>(in);
    const auto cols = read_pod<std::int64_t>(in);
    if (rows < 0 || cols < 0) throw ValidationError("model file: bad matrix header");
    Matrix M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = read_pod<double>(in);
    return M;
}

inline void write_stats(std::ostream& out, const RidgeStats& stats) {
    write_pod<std::int32_t>(out, stats.width());
    write_pod<std::int32_t>(out, stats.targets());
    write_pod<double>(out, stats.alpha());
    auto dump = [&](const std::vector<ExactSum>& v) {
        write_pod<std::uint64_t>(out, v.size());
        for (const ExactSum& s : v) {
            ExactSum canonical = s;
            canonical.normalize();
            for (std::int64_t chunk : canonical.raw_chunks())
                write_pod<std::int64_t>(out, chunk);
        }
    };
    dump(stats.gram_raw());
    dump(stats.rhs_raw());
}

inline RidgeStats read_stats(std::istream& in) {
    const auto D = read_pod<std::int32_t>(in);
    const auto C = read_pod<std::int32_t>(in);
    const auto alpha = read_pod<double>(in);
    RidgeStats stats(D, C, alpha);
    auto slurp = [&](std::vector<ExactSum>& v) {
        const auto count = read_pod<std::uint64_t>(in);
        if (count != v.size()) throw ValidationError("model file: stats size mismatch");
        for (ExactSum& s : v)
            for (std::int64_t& chunk : s.raw_chunks())
                chunk = read_pod<std::int64_t>(in);
    };
    slurp(stats.gram_raw());
    slurp(stats.rhs_raw());
    return stats;
}

inline void write_config_a(std::ostream& out, const PipelineAConfig& cfg) {
    write_pod<std::int32_t>(out, cfg.K);
    write_pod<std::uint8_t>(out, cfg.x_src == SourceNorm::RowNormalized);
    write_pod<double>(out, cfg.alpha);
    write_pod<double>(out, cfg.epsilon);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.variant));
    write_pod<std::uint64_t>(out, cfg.group_alphas.size());
    for (double a : cfg.group_alphas) write_pod<double>(out, a);
    write_pod<std::uint8_t>(out, cfg.cns.has_value());
    if (cfg.cns) {
        write_pod<double>(out, cfg.cns->alpha_correct);
        write_pod<double>(out, cfg.cns->alpha_smooth);
        write_pod<std::int32_t>(out, cfg.cns->num_iters);
    }
    write_pod<std::uint8_t>(out, cfg.rff.has_value());
    if (cfg.rff) {
        write_pod<std::int32_t>(out, cfg.rff->num_features);
        write_pod<double>(out, cfg.rff->sigma);
        write_pod<std::uint64_t>(out, cfg.rff->seed);
    }
    write_pod<std::uint8_t>(out, cfg.fp32);
}

inline PipelineAConfig read_config_a(std::istream& in) {
    PipelineAConfig cfg;
    cfg.K = read_pod<std::int32_t>(in);
    cfg.x_src = read_pod<std::uint8_t>(in) ? SourceNorm::RowNormalized : SourceNorm::Raw;
    cfg.alpha = read_pod<double>(in);
    cfg.epsilon = read_pod<double>(in);
    cfg.variant = static_cast<FeatureVariant>(read_pod<std::uint8_t>(in));
    const auto n_groups = read_pod<std::uint64_t>(in);
    cfg.group_alphas.resize(n_groups);
    for (double& a : cfg.group_alphas) a = read_pod<double>(in);
    if (read_pod<std::uint8_t>(in)) {
        CnsParams p;
        p.alpha_correct = read_pod<double>(in);
        p.alpha_smooth = read_pod<double>(in);
        p.num_iters = read_pod<std::int32_t>(in);
        cfg.cns = p;
    }
    if (read_pod<std::uint8_t>(in)) {
        RffParams p;
        p.num_features = read_pod<std::int32_t>(in);
        p.sigma = read_pod<double>(in);
        p.seed = read_pod<std::uint64_t>(in);
        cfg.rff = p;
    }
    cfg.fp32 = read_pod<std::uint8_t>(in) != 0;
    return cfg;
}

inline void write_config_lcf(std::ostream& out, const LcfConfig& cfg) {
    write_pod<std::int32_t>(out, cfg.K);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.phi));
    write_pod<double>(out, cfg.lambda);
    write_pod<double>(out, cfg.sigma_scale);
    write_pod<double>(out, cfg.lambda_prime);
    write_pod<std::uint8_t>(out, cfg.use_lcf);
    write_pod<std::uint8_t>(out, cfg.whiten_h0);
    write_pod<std::uint8_t>(out, cfg.base_flags.hops);
    write_pod<std::uint8_t>(out, cfg.base_flags.variance);
    write_pod<std::uint8_t>(out, cfg.base_flags.diffs);
    write_pod<std::uint8_t>(out, cfg.base_flags.attn);
}

inline LcfConfig read_config_lcf(std::istream& in) {
    LcfConfig cfg;
    cfg.K = read_pod<std::int32_t>(in);
    cfg.phi = static_cast<Phi>(read_pod<std::uint8_t>(in));
    cfg.lambda = read_pod<double>(in);
    cfg.sigma_scale = read_pod<double>(in);
    cfg.lambda_prime = read_pod<double>(in);
    cfg.use_lcf = read_pod<std::uint8_t>(in) != 0;
    cfg.whiten_h0 = read_pod<std::uint8_t>(in) != 0;
    cfg.base_flags.hops = read_pod<std::uint8_t>(in) != 0;
    cfg.base_flags.variance = read_pod<std::uint8_t>(in) != 0;
    cfg.base_flags.diffs = read_pod<std::uint8_t>(in) != 0;
    cfg.base_flags.attn = read_pod<std::uint8_t>(in) != 0;
    return cfg;
}

}  // namespace detail

inline void save_model(const ModelVar& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingFile("cannot write model file: " + path);
    out.write("CFGM", 4);
    detail::write_pod<std::uint32_t>(out, kModelFormatVersion);
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(model.index()));
    if (const auto* a = std::get_if<PipelineAModel>(&model)) {
        detail::write_config_a(out, a->config);
        detail::write_pod<std::int32_t>(out, a->num_classes);
        detail::write_pod<std::uint64_t>(out, a->hops.size());
        for (const Matrix& P : a->hops) detail::write_matrix(out, P);
        detail::write_matrix(out, a->H);
        detail::write_matrix(out, a->W);
        detail::write_stats(out, a->stats);
    } else {
        const auto& b = std::get<LcfNetModel>(model);
        detail::write_config_lcf(out, b.config);
        detail::write_pod<std::int32_t>(out, b.num_classes);
        detail::write_pod<double>(out, b.sigma);
        detail::write_pod<std::uint64_t>(out, b.layer_W.size());
        for (std::size_t k = 0; k < b.layer_W.size(); ++k) {
            detail::write_matrix(out, b.layer_W[k]);
            detail::write_stats(out, b.layer_stats[k]);
            detail::write_matrix(out, b.a[k]);
        }
        detail::write_pod<double>(out, b.head.sigma);
        detail::write_pod<double>(out, b.head.lambda_prime);
        detail::write_matrix(out, b.head.dual);
        detail::write_matrix(out, b.head.train_repr);
        detail::write_matrix(out, b.h0);
        detail::write_matrix(out, b.h_final);
    }
    if (!out) throw ValidationError("model write failed: " + path);
}

inline ModelVar load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CFGM", 4) != 0)
        throw ValidationError("model file: bad magic");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kModelFormatVersion)
        throw ValidationError("model file: unsupported version");
    const auto kind = detail::read_pod<std::uint8_t>(in);
    if (kind == 0) {
        PipelineAModel m;
        m.config = detail::read_config_a(in);
        m.num_classes = detail::read_pod<std::int32_t>(in);
        const auto n_hops = detail::read_pod<std::uint64_t>(in);
        m.hops.resize(n_hops);
        for (Matrix& P : m.hops) P = detail::read_matrix(in);
        m.H = detail::read_matrix(in);
        m.W = detail::read_matrix(in);
        m.stats = detail::read_stats(in);
        return m;
    }
    if (kind == 1) {
        LcfNetModel m;
        m.config = detail::read_config_lcf(in);
        m.num_classes = detail::read_pod<std::int32_t>(in);
        m.sigma = detail::read_pod<double>(in);
        const auto n_layers = detail::read_pod<std::uint64_t>(in);
        for (std::size_t k = 0; k < n_layers; ++k) {
            m.layer_W.push_back(detail::read_matrix(in));
            m.layer_stats.push_back(detail::read_stats(in));
            m.a.push_back(detail::read_matrix(in));
        }
        m.head.sigma = detail::read_pod<double>(in);
        m.head.lambda_prime = detail::read_pod<double>(in);
        m.head.dual = detail::read_matrix(in);
        m.head.train_repr = detail::read_matrix(in);
        m.h0 = detail::read_matrix(in);
        m.h_final = detail::read_matrix(in);
        return m;
    }
    throw ValidationError("model file: unknown model kind");
}

}  // namespace cfgraph
