#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "cfgraph/errors.hpp"
#include "cfgraph/exact_sum.hpp"
#include "cfgraph/graph.hpp"
#include "cfgraph/prng.hpp"

namespace cfgraph {

using Vector = Eigen::VectorXd;

inline Matrix chol_solve(const Matrix& A, const Matrix& B) {
    if (!A.allFinite()) throw NotPositiveDefinite("non-finite system matrix");
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("Cholesky factorization failed");
    return llt.solve(B);
}

/// Ridge sufficient statistics G = H_tr^T H_tr and b = H_tr^T Y_tr, held
/// in exact accumulators (upper triangle of G; symmetry is structural).
/// Because accumulation is exact, removing a row's contribution and
/// re-adding its replacement leaves statistics bit-identical to assembling
/// them fresh from the modified data, which is the property the unlearning
/// verification gate relies on.
class RidgeStats {
public:
    RidgeStats() = default;
    RidgeStats(int width, int targets, double alpha)
        : D_(width), C_(targets), alpha_(alpha),
          gram_(static_cast<std::size_t>(width) * (width + 1) / 2),
          rhs_(static_cast<std::size_t>(width) * targets) {
        if (alpha <= 0) throw ValidationError("ridge alpha must be > 0");
    }

    int width() const { return D_; }
    int targets() const { return C_; }
    double alpha() const { return alpha_; }

    void add_row(const Vector& h, const Vector& y) { update_row(h, y, false); }
    void remove_row(const Vector& h, const Vector& y) { update_row(h, y, true); }

    Matrix gram_matrix() const {
        Matrix G(D_, D_);
        std::size_t k = 0;
        for (int i = 0; i < D_; ++i)
            for (int j = i; j < D_; ++j, ++k) {
                const double v = gram_[k].to_double();
                G(i, j) = v;
                G(j, i) = v;
            }
        return G;
    }

    Matrix rhs_matrix() const {
        Matrix b(D_, C_);
        std::size_t k = 0;
        for (int i = 0; i < D_; ++i)
            for (int c = 0; c < C_; ++c, ++k) b(i, c) = rhs_[k].to_double();
        return b;
    }

    /// W = (G + alpha I)^{-1} b via Cholesky.
    Matrix solve() const {
        Matrix A = gram_matrix();
        A.diagonal().array() += alpha_;
        return chol_solve(A, rhs_matrix());
    }

    bool operator==(const RidgeStats& o) const {
        if (D_ != o.D_ || C_ != o.C_ || alpha_ != o.alpha_) return false;
        for (std::size_t i = 0; i < gram_.size(); ++i)
            if (!(gram_[i] == o.gram_[i])) return false;
        for (std::size_t i = 0; i < rhs_.size(); ++i)
            if (!(rhs_[i] == o.rhs_[i])) return false;
        return true;
    }

    std::vector<ExactSum>& gram_raw() { return gram_; }
    std::vector<ExactSum>& rhs_raw() { return rhs_; }
    const std::vector<ExactSum>& gram_raw() const { return gram_; }
    const std::vector<ExactSum>& rhs_raw() const { return rhs_; }

private:
    void update_row(const Vector& h, const Vector& y, bool remove) {
        if (h.size() != D_ || y.size() != C_)
            throw DimensionMismatch("RidgeStats: row width mismatch");
        std::size_t k = 0;
        for (int i = 0; i < D_; ++i)
            for (int j = i; j < D_; ++j, ++k) {
                const double p = h[i] * h[j];
                remove ? gram_[k].sub(p) : gram_[k].add(p);
            }
        k = 0;
        for (int i = 0; i < D_; ++i)
            for (int c = 0; c < C_; ++c, ++k) {
                const double p = h[i] * y[c];
                remove ? rhs_[k].sub(p) : rhs_[k].add(p);
            }
    }

    int D_ = 0, C_ = 0;
    double alpha_ = 1.0;
    std::vector<ExactSum> gram_;
    std::vector<ExactSum> rhs_;
};

/// Assemble statistics in canonical row order and solve.
inline std::pair<Matrix, RidgeStats> ridge_solve(const Matrix& H_tr, const Matrix& Y_tr,
                                                 double alpha) {
    if (H_tr.rows() != Y_tr.rows())
        throw DimensionMismatch("ridge_solve: row count mismatch");
    RidgeStats stats(static_cast<int>(H_tr.cols()), static_cast<int>(Y_tr.cols()), alpha);
    for (Eigen::Index r = 0; r < H_tr.rows(); ++r)
        stats.add_row(H_tr.row(r).transpose(), Y_tr.row(r).transpose());
    return {stats.solve(), std::move(stats)};
}

/// Rank-bounded sufficient-statistic refresh: subtract removed rows' outer
/// products, add replacements. O(m D^2) for m touched rows.
inline void gram_downdate(RidgeStats& stats,
                          const std::vector<std::pair<Vector, Vector>>& removals,
                          const std::vector<std::pair<Vector, Vector>>& additions) {
    for (const auto& [h, y] : removals) stats.remove_row(h, y);
    for (const auto& [h, y] : additions) stats.add_row(h, y);
}

// ---------------------------------------------------------------------------
// Gaussian kernel / KRR
// ---------------------------------------------------------------------------

/// K_ij = exp(-||a_i - b_j||^2 / (2 sigma^2)); each entry is a single
/// fixed-order distance reduction, so chunking cannot change values.
inline void for_each_kernel_chunk(
    const Matrix& A, const Matrix& B, double sigma, Eigen::Index chunk,
    const std::function<void(Eigen::Index row_start, const Matrix& block)>& fn) {
    if (A.cols() != B.cols()) throw DimensionMismatch("kernel: width mismatch");
    if (sigma <= 0 || chunk < 1) throw ValidationError("kernel: bad sigma/chunk");
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for (Eigen::Index r0 = 0; r0 < A.rows(); r0 += chunk) {
        const Eigen::Index rows = std::min(chunk, A.rows() - r0);
        Matrix block(rows, B.rows());
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < B.rows(); ++j) {
                double d2 = 0.0;
                for (Eigen::Index k = 0; k < A.cols(); ++k) {
                    const double t = A(r0 + i, k) - B(j, k);
                    d2 += t * t;
                }
                block(i, j) = std::exp(-d2 * inv_two_sigma2);
            }
        fn(r0, block);
    }
}

inline Matrix gaussian_kernel(const Matrix& A, const Matrix& B, double sigma,
                              Eigen::Index chunk) {
    Matrix K(A.rows(), B.rows());
    for_each_kernel_chunk(A, B, sigma, chunk,
                          [&](Eigen::Index r0, const Matrix& block) {
                              K.middleRows(r0, block.rows()) = block;
                          });
    return K;
}

/// Gaussian KRR head: dual = (K_tr + lambda' I)^{-1} Y_tr.
struct KernelHead {
    double sigma = 1.0;
    double lambda_prime = 1.0;
    Matrix dual;        // N_tr x C
    Matrix train_repr;  // N_tr x D
};

constexpr Eigen::Index kDefaultKernelChunk = 2048;

inline KernelHead krr_fit(const Matrix& h_tr, const Matrix& Y_tr, double sigma,
                          double lambda_prime, Eigen::Index chunk = kDefaultKernelChunk) {
    if (lambda_prime <= 0) throw ValidationError("krr_fit: lambda' must be > 0");
    if (h_tr.rows() != Y_tr.rows()) throw DimensionMismatch("krr_fit: row mismatch");
    Matrix K = gaussian_kernel(h_tr, h_tr, sigma, chunk);
    K.diagonal().array() += lambda_prime;
    KernelHead head;
    head.sigma = sigma;
    head.lambda_prime = lambda_prime;
    head.dual = chol_solve(K, Y_tr);
    head.train_repr = h_tr;
    return head;
}

inline Matrix krr_predict(const KernelHead& head, const Matrix& h_query,
                          Eigen::Index chunk = kDefaultKernelChunk) {
    if (h_query.cols() != head.train_repr.cols())
        throw DimensionMismatch("krr_predict: width mismatch");
    Matrix out(h_query.rows(), head.dual.cols());
    for_each_kernel_chunk(
        h_query, head.train_repr, head.sigma, chunk,
        [&](Eigen::Index r0, const Matrix& block) {
            for (Eigen::Index i = 0; i < block.rows(); ++i)
                for (Eigen::Index c = 0; c < head.dual.cols(); ++c) {
                    double s = 0.0;
                    for (Eigen::Index j = 0; j < block.cols(); ++j)
                        s += block(i, j) * head.dual(j, c);
                    out(r0 + i, c) = s;
                }
        });
    return out;
}

/// Median pairwise distance over a deterministic stride subsample of at
/// most 1000 rows; the bandwidth anchor for KRR grids.
inline double median_pairwise_distance(const Matrix& H) {
    const Eigen::Index n = H.rows();
    if (n < 2) return 1.0;
    const Eigen::Index m = std::min<Eigen::Index>(n, 1000);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) idx[i] = i * n / m;
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j)
            dists.push_back((H.row(idx[i]) - H.row(idx[j])).norm());
    const std::size_t mid = (dists.size() - 1) / 2;  // lower median
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    const double med = dists[mid];
    return med > 0 ? med : 1.0;
}

// ---------------------------------------------------------------------------
// Random Fourier features
// ---------------------------------------------------------------------------

/// Frequency matrix for the Rahimi-Recht map: w_i ~ N(0, sigma^{-2} I)
/// drawn from the splitmix64 stream keyed on `seed`.
inline Matrix rff_frequencies(int num_features, Eigen::Index dim, double sigma,
                              std::uint64_t seed) {
    if (num_features < 1) throw ValidationError("rff: num_features must be >= 1");
    if (sigma <= 0) throw ValidationError("rff: sigma must be > 0");
    SplitMix64 rng(derive_seed(seed, 31));
    Matrix omega(num_features, dim);
    for (int f = 0; f < num_features; ++f)
        for (Eigen::Index j = 0; j < dim; ++j)
            omega(f, j) = rng.next_gaussian() / sigma;
    return omega;
}

/// Apply the map to one row: z(x) = sqrt(1/F) [cos(w_i.x), sin(w_i.x)].
/// Row-local, so feature rows can be recomputed independently.
inline void rff_apply_row(const Matrix& omega, const Matrix& X, Eigen::Index row,
                          Matrix& Z) {
    const int F = static_cast<int>(omega.rows());
    const double scale = std::sqrt(1.0 / static_cast<double>(F));
    for (int f = 0; f < F; ++f) {
        double t = 0.0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) t += omega(f, j) * X(row, j);
        Z(row, 2 * f) = scale * std::cos(t);
        Z(row, 2 * f + 1) = scale * std::sin(t);
    }
}

inline Matrix rff_map(const Matrix& X, int num_features, double sigma, std::uint64_t seed) {
    Matrix omega = rff_frequencies(num_features, X.cols(), sigma, seed);
    Matrix Z(X.rows(), 2 * num_features);
    for (Eigen::Index r = 0; r < X.rows(); ++r) rff_apply_row(omega, X, r, Z);
    return Z;
}

// ---------------------------------------------------------------------------
// Transductive whitening
// ---------------------------------------------------------------------------

/// Per-column standardization with mean/std taken over `stat_rows`,
/// applied to every row. Population variance; std clamped at 1e-8.
inline Matrix column_whiten(const Matrix& M, const NodeSet& stat_rows) {
    if (stat_rows.empty()) throw ValidationError("column_whiten: empty stat rows");
    const double m = static_cast<double>(stat_rows.size());
    Matrix out(M.rows(), M.cols());
    ExactSum acc;
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
        acc.clear();
        for (NodeId v : stat_rows) acc.add(M(v, j));
        const double mu = acc.to_double() / m;
        acc.clear();
        for (NodeId v : stat_rows) {
            const double t = M(v, j) - mu;
            acc.add(t * t);
        }
        const double sd = std::max(std::sqrt(acc.to_double() / m), 1e-8);
        for (Eigen::Index r = 0; r < M.rows(); ++r) out(r, j) = (M(r, j) - mu) / sd;
    }
    return out;
}

/// Round every entry through fp32; the opt-in reduced-precision mode.
inline void round_to_fp32(Matrix& M) {
    for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c)
            M(r, c) = static_cast<double>(static_cast<float>(M(r, c)));
}

/// One-hot rows for the given nodes.
inline Matrix one_hot(const std::vector<int>& y, const NodeSet& nodes, int num_classes) {
    Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), num_classes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (y[nodes[i]] < 0 || y[nodes[i]] >= num_classes)
            throw ValidationError("one_hot: label out of range");
        Y(static_cast<Eigen::Index>(i), y[nodes[i]]) = 1.0;
    }
    return Y;
}

/// Row-wise softmax with the usual max-shift; deterministic left-to-right
/// reductions so equal logits give bit-equal probabilities.
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix P(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        double mx = logits(r, 0);
        for (Eigen::Index c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c));
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            P(r, c) = std::exp(logits(r, c) - mx);
            z += P(r, c);
        }
        for (Eigen::Index c = 0; c < logits.cols(); ++c) P(r, c) /= z;
    }
    return P;
}

}  // namespace cfgraph
