#pragma once

#include <cfloat>
#include <cmath>
#include <cstring>
#include <vector>

#include "ttsvd/counters.hpp"
#include "ttsvd/errors.hpp"
#include "ttsvd/storage.hpp"
#include "ttsvd/threading.hpp"

namespace ttsvd {

#ifdef NDEBUG
inline constexpr bool kDebugBuild = false;
#else
inline constexpr bool kDebugBuild = true;
#endif

/// m x m upper-triangular factor, column-major. Entries strictly below the
/// diagonal are exactly zero. Q is never materialized anywhere in this
/// library; R carries all the information the TT-SVD pipeline needs.
struct TriangularFactor {
    index_t m = 0;
    std::vector<double> entries; // m x m column-major

    TriangularFactor() = default;
    explicit TriangularFactor(index_t m_) : m(m_), entries(static_cast<std::size_t>(m_ * m_), 0.0) {}

    double& operator()(index_t i, index_t j) { return entries[static_cast<std::size_t>(j * m + i)]; }
    double operator()(index_t i, index_t j) const { return entries[static_cast<std::size_t>(j * m + i)]; }

    ConstMatrixView view() const { return ConstMatrixView{entries.data(), m, m, m}; }
};

/// Block reduction parameters. eps_fp is the smallest positive normalized
/// double; adding it twice inside the reflector computation (once in t, once
/// under the sqrt) keeps every reflector valid with ||v||^2 = 2 and removes
/// the need for a zero-norm branch.
struct BlockParams {
    index_t n_b = 256;
    double eps_fp = DBL_MIN; // 2.2250738585072014e-308
    bool validate_reflectors = kDebugBuild;

    /// Largest multiple of 8 with (n_b + m) * m * 8 <= l2_budget, clamped to
    /// [16, 4096]. The block and the triangle then fit in L2 together.
    static BlockParams for_cols(index_t m, index_t l2_budget_bytes = 256 * 1024) {
        BlockParams p;
        const index_t cap = l2_budget_bytes / 8;
        index_t nb = (cap / std::max<index_t>(m, 1) - m) / 8 * 8;
        if (nb < 16) nb = 16;
        if (nb > 4096) nb = 4096;
        p.n_b = nb;
        return p;
    }
};

/// Optional instrumentation for tsqr runs.
struct TsqrStats {
    index_t scratch_bytes = 0;      // peak auxiliary memory over all workers
    index_t blocks = 0;             // reduce_block invocations
    double max_reflector_dev = 0.0; // max | ||v||^2 - 2 | over valid reflectors
};

namespace detail {

/// Workspace for one worker: the (n_b + m) x m staircase matrix W and the
/// scaled reflector buffer ((n_b + 1) x m).
struct QrScratch {
    index_t n_b = 0, m = 0;
    std::vector<double> w;
    std::vector<double> v;

    void ensure(index_t n_b_, index_t m_) {
        if (n_b_ <= n_b && m_ == m) return;
        n_b = std::max(n_b, n_b_);
        m = m_;
        w.assign(static_cast<std::size_t>((n_b + m) * m), 0.0);
        v.assign(static_cast<std::size_t>((n_b + 1) * m), 0.0);
    }
    index_t bytes() const { return static_cast<index_t>((w.size() + v.size()) * 8); }
};

/// Core of the Q-less Householder reduction on the staircase matrix held in
/// scratch. Reflector j spans rows [j, j+n_b] of W (always n_b + 1 entries);
/// the updated column top plus alpha is written back as row j of the result
/// triangle. Branch-free: the eps_fp terms keep t strictly positive and the
/// sign flip compiles to arithmetic.
class BlockReducer {
public:
    BlockReducer(QrScratch& s, index_t n_b, index_t m, const BlockParams& p)
        : s_(s), n_b_(n_b), m_(m), ldw_(n_b + m), eps_(p.eps_fp),
          validate_(p.validate_reflectors) {}

    void run() {
        recurse(0, m_);
    }

    double max_dev = 0.0;

private:
    // Recursive left/right column blocking; a pure reordering of the plain
    // j-loop, so results are bitwise independent of the split.
    void recurse(index_t c0, index_t c1) {
        if (c1 - c0 <= 8) {
            for (index_t j = c0; j < c1; ++j) {
                form_reflector(j);
                for (index_t k = j + 1; k < c1; ++k) apply(j, k);
            }
            return;
        }
        const index_t mid = c0 + (c1 - c0) / 2;
        recurse(c0, mid);
        for (index_t j = c0; j < mid; ++j)
            for (index_t k = mid; k < c1; ++k) apply(j, k);
        recurse(mid, c1);
    }

    void form_reflector(index_t j) {
        double* wj = s_.w.data() + j * ldw_;
        double* u = wj + j; // rows j .. j+n_b
        double t = eps_ + dot(u, u, n_b_ + 1);
        double alpha = std::sqrt(t + eps_);
        alpha = (u[0] > 0.0) ? -alpha : alpha;
        t -= alpha * u[0];
        const double beta = 1.0 / std::sqrt(t);
        double* vj = s_.v.data() + j * (n_b_ + 1);
        vj[0] = (u[0] - alpha) * beta;
        for (index_t i = 1; i <= n_b_; ++i) vj[i] = u[i] * beta;
        if (validate_) {
            const double t0 = t + alpha * u[0] - eps_; // ||u||^2 before shifts
            if (t0 >= 1e-300 && t0 <= 1e300) {
                double nv = 0.0;
                for (index_t i = 0; i <= n_b_; ++i) nv += vj[i] * vj[i];
                max_dev = std::max(max_dev, std::fabs(nv - 2.0));
            }
        }
        // emit row j of the result triangle: projected column top, then alpha
        for (index_t i = 0; i < j; ++i) wj[n_b_ + i] = wj[i];
        wj[n_b_ + j] = alpha;
    }

    // four independent partial sums so the reduction vectorizes
    static double dot(const double* a, const double* b, index_t len) {
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        index_t i = 0;
        for (; i + 4 <= len; i += 4) {
            s0 += a[i] * b[i];
            s1 += a[i + 1] * b[i + 1];
            s2 += a[i + 2] * b[i + 2];
            s3 += a[i + 3] * b[i + 3];
        }
        double s = (s0 + s1) + (s2 + s3);
        for (; i < len; ++i) s += a[i] * b[i];
        return s;
    }

    void apply(index_t j, index_t k) {
        const double* vj = s_.v.data() + j * (n_b_ + 1);
        double* wk = s_.w.data() + k * ldw_ + j;
        const double gamma = dot(vj, wk, n_b_ + 1);
        for (index_t i = 0; i <= n_b_; ++i) wk[i] -= gamma * vj[i];
    }

    QrScratch& s_;
    index_t n_b_, m_, ldw_;
    double eps_;
    bool validate_;
};

/// One staircase reduction into scratch-resident state; R is updated in
/// place. M is only read. Blocks shorter than m rows (range leftovers) are
/// zero-padded up to m: zero rows do not change the Gram matrix, and the
/// staircase window never outruns the block that way.
inline void reduce_into(QrScratch& s, ConstMatrixView M, TriangularFactor& R,
                        const BlockParams& params, double& max_dev) {
    const index_t m = M.cols;
    const index_t n_b = std::max(M.rows, m);
    s.ensure(n_b, m);
    const index_t ldw = n_b + m;
    for (index_t j = 0; j < m; ++j) {
        double* wj = s.w.data() + j * ldw;
        std::memcpy(wj, M.col(j), static_cast<std::size_t>(M.rows) * sizeof(double));
        for (index_t i = M.rows; i < n_b; ++i) wj[i] = 0.0;
        std::memcpy(wj + n_b, R.entries.data() + j * m, static_cast<std::size_t>(m) * sizeof(double));
    }
    BlockReducer red(s, n_b, m, params);
    red.run();
    max_dev = std::max(max_dev, red.max_dev);
    for (index_t j = 0; j < m; ++j)
        std::memcpy(R.entries.data() + j * m, s.w.data() + j * ldw + n_b,
                    static_cast<std::size_t>(m) * sizeof(double));
}

inline std::uint64_t block_flops(index_t rows, index_t m) {
    const index_t n_b = std::max(rows, m); // short blocks run zero-padded
    return 2ull * static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(m + 1) *
           static_cast<std::uint64_t>(n_b + 1);
}

} // namespace detail

/// Householder QR step of a rectangular block M (n_b x m) against an upper
/// triangular R (m x m): returns Rbar with Rbar^T Rbar = M^T M + R^T R in
/// exact arithmetic. M is not modified and no Q is formed. Never divides by
/// zero; rank-deficient and zero inputs reduce without a special path.
inline TriangularFactor reduce_block(ConstMatrixView M, const TriangularFactor& R,
                                     const BlockParams& params, TsqrStats* stats = nullptr,
                                     Counters* counters = nullptr) {
    if (R.m != M.cols)
        throw DimensionMismatch("reduce_block: R.m != M.cols");
    detail::QrScratch scratch;
    TriangularFactor out = R;
    double dev = 0.0;
    detail::reduce_into(scratch, M, out, params, dev);
    if (stats) {
        stats->scratch_bytes = std::max(stats->scratch_bytes, scratch.bytes());
        stats->blocks += 1;
        stats->max_reflector_dev = std::max(stats->max_reflector_dev, dev);
    }
    if (counters) counters->add(detail::block_flops(M.rows, M.cols), 0);
    return out;
}

/// Fixed left-to-right pairwise reduction of per-worker (or per-partition)
/// triangular factors: the accumulated triangle stays the R operand, each
/// new part enters stacked as the rectangular operand. The order is pinned
/// because the reduction only commutes in exact arithmetic.
inline TriangularFactor combine_factors(const std::vector<TriangularFactor>& parts,
                                        const BlockParams& params, TsqrStats* stats = nullptr,
                                        Counters* counters = nullptr) {
    if (parts.empty()) throw DimensionMismatch("combine_factors: empty list");
    TriangularFactor acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].m != acc.m) throw DimensionMismatch("combine_factors: mixed column counts");
        acc = reduce_block(parts[i].view(), acc, params, stats, counters);
    }
    return acc;
}

/// Q-less TSQR of a tall-skinny padded matrix: every worker runs a flat-tree
/// reduction over its contiguous row range (reading X exactly once), then the
/// per-worker triangles are combined on the calling thread in ascending
/// worker order. R^T R = X^T X up to rounding; auxiliary memory is
/// O(workers * (n_b + m) * m), independent of n.
inline TriangularFactor tsqr(ConstMatrixView X, const BlockParams& params, int workers,
                             TsqrStats* stats = nullptr, Counters* counters = nullptr) {
    const index_t n = X.rows, m = X.cols;
    if (m < 1) throw DimensionError("tsqr: needs at least one column");
    if (n < m) throw DimensionError("tsqr: requires n >= m");

    const auto ranges = partition_rows(n, workers);
    const std::size_t nw = ranges.size();
    std::vector<TriangularFactor> parts(nw);
    std::vector<detail::QrScratch> scratch(nw);
    std::vector<double> devs(nw, 0.0);
    std::uint64_t flops = 0;

    parallel_ranges(n, workers, [&](int w, index_t begin, index_t end) {
        TriangularFactor R(m);
        auto& s = scratch[static_cast<std::size_t>(w)];
        for (index_t r0 = begin; r0 < end; r0 += params.n_b) {
            const index_t rows = std::min(params.n_b, end - r0);
            ConstMatrixView block{X.data + r0, rows, m, X.stride};
            detail::reduce_into(s, block, R, params, devs[static_cast<std::size_t>(w)]);
        }
        parts[static_cast<std::size_t>(w)] = std::move(R);
    });

    index_t scratch_bytes = 0, blocks = 0;
    for (const auto& s : scratch) scratch_bytes += s.bytes();
    for (const auto& r : ranges) {
        blocks += (r.second - r.first + params.n_b - 1) / params.n_b;
        for (index_t r0 = r.first; r0 < r.second; r0 += params.n_b)
            flops += detail::block_flops(std::min(params.n_b, r.second - r0), m);
    }

    TsqrStats local;
    TriangularFactor R = nw == 1 ? std::move(parts.front())
                                 : combine_factors(parts, params, &local, nullptr);
    flops += static_cast<std::uint64_t>(local.blocks) * detail::block_flops(m, m);
    if (stats) {
        stats->scratch_bytes = std::max(stats->scratch_bytes, scratch_bytes + local.scratch_bytes);
        stats->blocks += blocks + local.blocks;
        double dev = local.max_reflector_dev;
        for (double d : devs) dev = std::max(dev, d);
        stats->max_reflector_dev = std::max(stats->max_reflector_dev, dev);
    }
    if (counters) counters->add(flops, 8ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m));
    return R;
}

} // namespace ttsvd
