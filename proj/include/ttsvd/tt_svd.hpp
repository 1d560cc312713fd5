#pragma once

#include <chrono>
#include <limits>
#include <optional>
#include <vector>

#include "ttsvd/counters.hpp"
#include "ttsvd/errors.hpp"
#include "ttsvd/small_svd.hpp"
#include "ttsvd/storage.hpp"
#include "ttsvd/tensor_train.hpp"
#include "ttsvd/threading.hpp"
#include "ttsvd/tsmm.hpp"
#include "ttsvd/tsqr.hpp"

namespace ttsvd {

/// Per-iteration instrumentation: phase timings, step dimensions, the chosen
/// rank and the realized reduction factor f_j = r_new / (n_i r_i).
struct StepRecord {
    index_t step = 0; // 1-based, in execution order
    double t_tsqr = 0, t_small_svd = 0, t_tsmm = 0, t_reorder = 0;
    index_t rows = 0, cols = 0, rank = 0;
    double f = 0;
};

struct RunRecorder {
    std::vector<StepRecord> steps;

    StepRecord& next_step() {
        steps.emplace_back();
        steps.back().step = static_cast<index_t>(steps.size());
        return steps.back();
    }
};

/// Execution knobs shared by the decomposition drivers.
struct ExecContext {
    int threads = 1;
    index_t l2_budget_bytes = 256 * 1024;
    bool validate_reflectors = kDebugBuild;
    Counters* counters = nullptr;
    RunRecorder* recorder = nullptr;
    TsqrStats* tsqr_stats = nullptr;

    BlockParams block_params(index_t m) const {
        BlockParams p = BlockParams::for_cols(m, l2_budget_bytes);
        p.validate_reflectors = validate_reflectors;
        return p;
    }
};

namespace detail {

inline double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

/// Singular values and right singular vectors of a work matrix W.
struct WorkSVD {
    std::vector<double> sigma; // length nsig
    std::vector<double> V;     // cols x nsig, column-major
    index_t cols = 0, nsig = 0;

    ConstMatrixView v_view(index_t r) const { return ConstMatrixView{V.data(), cols, r, cols}; }
};

/// sigma/V of a work matrix. Tall input runs the Q-less pipeline
/// (tsqr -> small_svd); a wider-than-tall work matrix (possible near the
/// chain ends) falls back to a one-sided Jacobi of its transpose, which
/// yields the same values without materializing any Q.
inline WorkSVD svd_of_work(ConstMatrixView W, const ExecContext& ctx, StepRecord* rec) {
    WorkSVD out;
    out.cols = W.cols;
    if (W.rows >= W.cols) {
        double t0 = now_seconds();
        TriangularFactor R = tsqr(W, ctx.block_params(W.cols), ctx.threads, ctx.tsqr_stats, ctx.counters);
        double t1 = now_seconds();
        SmallSVD s = small_svd(R);
        double t2 = now_seconds();
        if (rec) {
            rec->t_tsqr += t1 - t0;
            rec->t_small_svd += t2 - t1;
        }
        out.sigma = std::move(s.sigma);
        out.V = std::move(s.V);
        out.nsig = W.cols;
    } else {
        double t0 = now_seconds();
        std::vector<double> wt(static_cast<std::size_t>(W.cols * W.rows));
        for (index_t j = 0; j < W.cols; ++j)
            for (index_t i = 0; i < W.rows; ++i)
                wt[static_cast<std::size_t>(i * W.cols + j)] = W(i, j);
        SmallSVD s = jacobi_svd(ConstMatrixView{wt.data(), W.cols, W.rows, W.cols});
        double t1 = now_seconds();
        if (rec) rec->t_small_svd += t1 - t0;
        out.sigma = std::move(s.sigma);
        out.V = std::move(s.U); // right singular vectors of W
        out.nsig = W.rows;
    }
    return out;
}

/// Rank choice of one sweep step. On top of the tail rule, singular values
/// below the numerical-zero level of the preceding factorization are never
/// kept: exact-arithmetic zeros come out of tsqr/jacobi as O(eps) junk, and
/// the tail rule with delta = 0 would otherwise retain them.
inline index_t choose_rank(const WorkSVD& s, const TruncationSpec& spec, index_t rows) {
    const double sigma1 = s.sigma.empty() ? 0.0 : s.sigma.front();
    const double zero_level =
        32.0 * DBL_EPSILON * sigma1 *
        std::sqrt(static_cast<double>(std::max(rows, s.cols)));
    const double delta_eff = std::max(spec.delta, zero_level);
    return std::min(select_rank(s.sigma, delta_eff, spec.r_max), s.nsig);
}

/// T^(i) <- reshape((V_{:,1:r})^T, (r, n_i, r_i)).
inline TTCore core_from_vt(const WorkSVD& s, index_t r, index_t n, index_t r_right) {
    TTCore c(r, n, r_right);
    for (index_t b = 0; b < r_right; ++b)
        for (index_t x = 0; x < n; ++x)
            for (index_t a = 0; a < r; ++a)
                c(a, x, b) = s.V[static_cast<std::size_t>(a * s.cols + (x + n * b))];
    return c;
}

/// Left-end core: T^(i) <- reshape(V_{:,1:r}, (r_left, n_i, r)).
inline TTCore core_from_v(const WorkSVD& s, index_t r_left, index_t n, index_t r) {
    TTCore c(r_left, n, r);
    for (index_t b = 0; b < r; ++b)
        for (index_t x = 0; x < n; ++x)
            for (index_t a = 0; a < r_left; ++a)
                c(a, x, b) = s.V[static_cast<std::size_t>(b * s.cols + (a + r_left * x))];
    return c;
}

/// Copy a padded matrix whose logical flat order is (r_left, n, r_right)
/// into a core.
inline TTCore core_from_padded(const PaddedMatrix& p, index_t r_left, index_t n, index_t r_right) {
    TTCore c(r_left, n, r_right);
    ConstMatrixView v = p.view();
    for (index_t l = 0; l < r_left * n * r_right; ++l)
        c.data[static_cast<std::size_t>(l)] = v(l % v.rows, l / v.rows);
    return c;
}

/// The right-to-left TSQR chain (Alg. 2 loop): shared by the plain variant,
/// the merged thick-bounds sweep and the thick-bounds recovery. Consumes the
/// initial matricization view; returns the cores and the first iteration's
/// ||Sigma||_F (used to derive delta).
struct ChainResult {
    std::vector<TTCore> cores;
    double first_sigma_norm = 0.0;
};

inline ChainResult run_chain(ConstMatrixView W0, const std::vector<index_t>& dims,
                             TruncationSpec& spec, index_t d_for_delta, const ExecContext& ctx) {
    const index_t d = static_cast<index_t>(dims.size());
    ChainResult res;
    res.cores.resize(static_cast<std::size_t>(d));
    PaddedMatrix owned;
    ConstMatrixView cur = W0;
    index_t r = 1;
    for (index_t i = d - 1; i >= 1; --i) {
        const index_t n_i = dims[static_cast<std::size_t>(i)];
        const index_t m = n_i * r;
        StepRecord* rec = ctx.recorder ? &ctx.recorder->next_step() : nullptr;
        WorkSVD s = svd_of_work(cur, ctx, rec);
        if (i == d - 1) res.first_sigma_norm = sigma_norm(s.sigma);
        if (!spec.has_delta())
            spec.delta = derive_delta(sigma_norm(s.sigma), spec.eps, d_for_delta);
        const index_t rnew = choose_rank(s, spec, cur.rows);
        res.cores[static_cast<std::size_t>(i)] = core_from_vt(s, rnew, n_i, r);
        const index_t n_next = dims[static_cast<std::size_t>(i - 1)];
        const index_t out_rows = cur.rows / n_next;
        const index_t out_cols = n_next * rnew;
        double t0 = now_seconds();
        owned = tsmm_reshape(cur, s.v_view(rnew), out_rows, out_cols, ctx.threads, ctx.counters);
        double t1 = now_seconds();
        if (rec) {
            rec->t_tsmm += t1 - t0;
            rec->rows = cur.rows;
            rec->cols = m;
            rec->rank = rnew;
            rec->f = static_cast<double>(rnew) / static_cast<double>(m);
        }
        cur = owned.view();
        r = rnew;
    }
    // T^(1): the final 1 x (n_1 r_1) work matrix, relabeled
    TTCore first(1, dims[0], r);
    for (index_t l = 0; l < dims[0] * r; ++l)
        first.data[static_cast<std::size_t>(l)] = cur(l % cur.rows, l / cur.rows);
    res.cores[0] = std::move(first);
    return res;
}

/// Triangular factor of an arbitrary work matrix: tsqr when tall, otherwise
/// the matrix is embedded into a zero-padded square block first (zero rows do
/// not change the Gram matrix).
inline TriangularFactor gram_triangular(ConstMatrixView W, const ExecContext& ctx) {
    if (W.rows >= W.cols) return tsqr(W, ctx.block_params(W.cols), ctx.threads, ctx.tsqr_stats, ctx.counters);
    PaddedMatrix sq(W.cols, W.cols);
    for (index_t j = 0; j < W.cols; ++j)
        for (index_t i = 0; i < W.rows; ++i) sq(i, j) = W(i, j);
    return tsqr(sq.view(), ctx.block_params(W.cols), ctx.threads, ctx.tsqr_stats, ctx.counters);
}

} // namespace detail

/// Reference TT-SVD (Alg. 1): truncated SVD of each matricization computed
/// directly by one-sided Jacobi on the tall side, W carried as U*Sigma.
/// Simple dense buffers, no padding, no TSQR: this is the oracle the
/// optimized variants are validated against.
inline TensorTrain tt_svd_reference(const DenseTensor& X, TruncationSpec spec) {
    const index_t d = X.shape().d();
    if (d < 2) throw DegenerateDimension("tt_svd_reference: requires d >= 2");
    const auto& dims = X.shape().dims();
    spec.delta = derive_delta(frobenius_norm(X), spec.eps, d);

    std::vector<double> w(static_cast<std::size_t>(X.total()));
    for (index_t l = 0; l < X.total(); ++l) w[static_cast<std::size_t>(l)] = X.at_flat(l);

    TensorTrain tt;
    tt.cores.resize(static_cast<std::size_t>(d));
    index_t r = 1;
    index_t total = X.total();
    for (index_t i = d - 1; i >= 1; --i) {
        const index_t n_i = dims[static_cast<std::size_t>(i)];
        const index_t m = n_i * r;
        const index_t rows = total / m;
        detail::WorkSVD s;
        s.cols = m;
        std::vector<double> u_sigma; // rows x nsig, columns already scaled by sigma
        if (rows >= m) {
            SmallSVD j = jacobi_svd(ConstMatrixView{w.data(), rows, m, rows});
            s.nsig = m;
            s.sigma = j.sigma;
            s.V = std::move(j.V);
            u_sigma.assign(static_cast<std::size_t>(rows * m), 0.0);
            for (index_t c = 0; c < m; ++c)
                for (index_t ii = 0; ii < rows; ++ii)
                    u_sigma[static_cast<std::size_t>(c * rows + ii)] =
                        j.U[static_cast<std::size_t>(c * rows + ii)] * j.sigma[static_cast<std::size_t>(c)];
        } else {
            // wide work matrix: SVD of the transpose swaps the roles of U and V
            std::vector<double> wt(static_cast<std::size_t>(rows * m));
            for (index_t c = 0; c < m; ++c)
                for (index_t ii = 0; ii < rows; ++ii)
                    wt[static_cast<std::size_t>(ii * m + c)] = w[static_cast<std::size_t>(c * rows + ii)];
            SmallSVD j = jacobi_svd(ConstMatrixView{wt.data(), m, rows, m});
            s.nsig = rows;
            s.sigma = j.sigma;
            s.V = std::move(j.U);
            u_sigma.assign(static_cast<std::size_t>(rows * rows), 0.0);
            for (index_t c = 0; c < rows; ++c)
                for (index_t ii = 0; ii < rows; ++ii)
                    u_sigma[static_cast<std::size_t>(c * rows + ii)] =
                        j.V[static_cast<std::size_t>(c * rows + ii)] * j.sigma[static_cast<std::size_t>(c)];
        }
        const index_t rnew = detail::choose_rank(s, spec, rows);
        tt.cores[static_cast<std::size_t>(i)] = detail::core_from_vt(s, rnew, n_i, r);
        w.assign(u_sigma.begin(), u_sigma.begin() + static_cast<std::ptrdiff_t>(rows * rnew));
        total = rows * rnew;
        r = rnew;
    }
    TTCore first(1, dims[0], r);
    for (index_t l = 0; l < total; ++l) first.data[static_cast<std::size_t>(l)] = w[static_cast<std::size_t>(l)];
    tt.cores[0] = std::move(first);
    tt.validate();
    return tt;
}

/// Optimized TSQR TT-SVD (Alg. 2): per iteration
/// tsqr -> small_svd -> select_rank -> core from V^T -> fused tsmm+reshape,
/// with delta derived from the first iteration's Sigma. The input tensor is
/// only read; the first work matrix is a zero-copy view.
inline TensorTrain tt_svd_tsqr(const DenseTensor& X, TruncationSpec spec, const ExecContext& ctx = {}) {
    const index_t d = X.shape().d();
    if (d < 2) throw DegenerateDimension("tt_svd_tsqr: requires d >= 2");
    detail::ChainResult res =
        detail::run_chain(reshape_view(X, d - 1), X.shape().dims(), spec, d, ctx);
    TensorTrain tt;
    tt.cores = std::move(res.cores);
    tt.validate();
    return tt;
}

/// Thick-bounds parameters (Alg. 3): minimal combined boundary dimension,
/// minimal first-step reduction factor, and estimated ranks (empty list
/// means "use r_max, capped by the dimension products").
struct ThickBoundsParams {
    index_t m_min = 16;
    double f1_min = 0.5;
    std::vector<index_t> r_tilde; // r~_1..r~_{d-1}; empty = derive from r_max

    index_t estimate_at(index_t pos, const Shape& shape, index_t r_max) const {
        index_t cap = std::min(shape.leading(pos), shape.total() / shape.leading(pos));
        index_t rt = r_max;
        if (!r_tilde.empty()) {
            const std::size_t idx = static_cast<std::size_t>(std::min<index_t>(
                pos - 1, static_cast<index_t>(r_tilde.size()) - 1));
            rt = r_tilde[idx];
        }
        return std::min(rt, cap);
    }
};

/// Minimal k >= 1 such that m = prod of the k trailing extents satisfies
/// m >= max(m_min, r~_{d-k} / f1_min); falls back to k = d-1 when no k
/// satisfies the bound. Guarantees the first sweep both raises the compute
/// intensity and reduces the work matrix by at least f1_min.
inline std::pair<index_t, index_t> choose_combined_dims(const Shape& shape,
                                                        const ThickBoundsParams& params,
                                                        index_t r_max = std::numeric_limits<index_t>::max()) {
    const index_t d = shape.d();
    if (d < 2) throw DegenerateDimension("choose_combined_dims: requires d >= 2");
    if (params.m_min < 1 || params.f1_min <= 0.0 || params.f1_min > 1.0)
        throw DimensionMismatch("choose_combined_dims: invalid parameters");
    for (index_t k = 1; k < d; ++k) {
        const index_t m = shape.trailing(k);
        const double need = std::max(static_cast<double>(params.m_min),
                                     static_cast<double>(params.estimate_at(d - k, shape, r_max)) / params.f1_min);
        if (static_cast<double>(m) >= need) return {k, m};
    }
    return {d - 1, shape.total() / shape.dim(0)};
}

/// Thick-bounds TT-SVD (Alg. 3): merge the k right-most dimensions, run the
/// TSQR sweep on the merged tensor, then recover the k boundary cores by
/// decomposing the combined core. The recovery reuses the derived truncation
/// parameter rescaled to the combined core's norm (the combined core lives
/// behind a non-orthonormal left chain, so the global delta is not in its
/// units).
inline TensorTrain tt_svd_thick_bounds(const DenseTensor& X, TruncationSpec spec,
                                       const ThickBoundsParams& params, const ExecContext& ctx = {}) {
    const index_t d = X.shape().d();
    if (d < 2) throw DegenerateDimension("tt_svd_thick_bounds: requires d >= 2");
    const auto [k, m] = choose_combined_dims(X.shape(), params, spec.r_max);
    if (k == 1) return tt_svd_tsqr(X, spec, ctx);

    std::vector<index_t> mdims(X.shape().dims().begin(), X.shape().dims().end() - k);
    mdims.push_back(m);
    DenseTensor merged{Shape(mdims)};
    copy_logical(X, merged);

    const index_t dm = static_cast<index_t>(mdims.size());
    detail::ChainResult main =
        detail::run_chain(reshape_view(merged, dm - 1), mdims, spec, dm, ctx);

    // recovery: TT-SVD of the combined core T_bar (r_b x m), reshaped as a
    // (k+1)-dimensional tensor with leading extent r_b
    TTCore tbar = std::move(main.cores.back());
    const index_t rb = tbar.r_left;
    std::vector<index_t> rdims;
    rdims.push_back(rb);
    for (index_t i = d - k; i < d; ++i) rdims.push_back(X.shape().dim(i));
    DenseTensor rec{Shape(rdims)};
    for (index_t l = 0; l < rb * m; ++l) rec.at_flat(l) = tbar.data[static_cast<std::size_t>(l)];

    TruncationSpec rspec = spec;
    double tnorm = 0.0;
    for (double x : tbar.data) tnorm += x * x;
    rspec.delta = spec.delta * std::sqrt(tnorm) /
                  (main.first_sigma_norm > 0 ? main.first_sigma_norm : 1.0);
    detail::ChainResult rc =
        detail::run_chain(reshape_view(rec, static_cast<index_t>(rdims.size()) - 1), rdims, rspec,
                          static_cast<index_t>(rdims.size()), ctx);

    // absorb the leading dummy-mode core (1 x r_b x rho) into its neighbor;
    // lossless recovery makes it orthogonal, so the boundary core stays
    // right-orthonormal
    TTCore theta = std::move(rc.cores[0]);
    const TTCore& c1 = rc.cores[1];
    TensorTrain tt;
    tt.cores.assign(main.cores.begin(), main.cores.end() - 1);
    if (rb == 1 && theta.r_right == 1) {
        // rank-1 boundary: the captured-norm scalar moves to the
        // norm-carrying core instead of breaking orthonormality here
        const double s = theta(0, 0, 0);
        for (auto& x : tt.cores[0].data) x *= s;
        theta(0, 0, 0) = 1.0;
    }
    TTCore boundary(rb, c1.n, c1.r_right);
    for (index_t b = 0; b < c1.r_right; ++b)
        for (index_t x = 0; x < c1.n; ++x)
            for (index_t a = 0; a < rb; ++a) {
                double s = 0.0;
                for (index_t l = 0; l < theta.r_right; ++l)
                    s += theta(0, a, l) * c1(l, x, b);
                boundary(a, x, b) = s;
            }
    tt.cores.push_back(std::move(boundary));
    for (std::size_t j = 2; j < rc.cores.size(); ++j) tt.cores.push_back(std::move(rc.cores[j]));
    tt.validate();
    return tt;
}

/// Two-sided TSQR TT-SVD (Alg. 4): iterates i = d, 1, d-1, 2, ... building
/// cores alternately at the right and left ends. Right steps extract the
/// core from V^T; left steps work on the transposed matricization and
/// extract the core from V directly. One transpose-reorder per iteration
/// keeps the work matrix in the layout the next (opposite-end) step expects.
inline TensorTrain tt_svd_two_sided(const DenseTensor& X, TruncationSpec spec,
                                    const ExecContext& ctx = {}) {
    const index_t d = X.shape().d();
    if (d < 2) throw DegenerateDimension("tt_svd_two_sided: requires d >= 2");
    const auto& dims = X.shape().dims();

    TensorTrain tt;
    tt.cores.resize(static_cast<std::size_t>(d));
    index_t lo = 0, hi = d - 1;
    index_t r_left = 1, r_right = 1;
    PaddedMatrix owned;
    ConstMatrixView cur = reshape_view(X, d - 1);
    index_t built = 0;
    bool right_phase = true;

    while (built < d - 1) {
        StepRecord* rec = ctx.recorder ? &ctx.recorder->next_step() : nullptr;
        if (right_phase) {
            const index_t m = dims[static_cast<std::size_t>(hi)] * r_right;
            detail::WorkSVD s = detail::svd_of_work(cur, ctx, rec);
            if (!spec.has_delta())
                spec.delta = derive_delta(sigma_norm(s.sigma), spec.eps, d);
            const index_t rnew = detail::choose_rank(s, spec, cur.rows);
            tt.cores[static_cast<std::size_t>(hi)] =
                detail::core_from_vt(s, rnew, dims[static_cast<std::size_t>(hi)], r_right);
            if (rec) {
                rec->rows = cur.rows;
                rec->cols = m;
                rec->rank = rnew;
                rec->f = static_cast<double>(rnew) / static_cast<double>(m);
            }
            ++built;
            if (built == d - 1) {
                // remaining middle core in place (even d ends on a right step)
                double t0 = detail::now_seconds();
                PaddedMatrix mid = tsmm_reshape(cur, s.v_view(rnew),
                                                r_left * dims[static_cast<std::size_t>(lo)], rnew,
                                                ctx.threads, ctx.counters);
                if (rec) rec->t_tsmm += detail::now_seconds() - t0;
                tt.cores[static_cast<std::size_t>(lo)] =
                    detail::core_from_padded(mid, r_left, dims[static_cast<std::size_t>(lo)], rnew);
                break;
            }
            const index_t a = r_left * dims[static_cast<std::size_t>(lo)];
            const index_t b = cur.rows * rnew / a;
            double t0 = detail::now_seconds();
            PaddedMatrix p = tsmm_reshape(cur, s.v_view(rnew), a, b, ctx.threads, ctx.counters);
            double t1 = detail::now_seconds();
            owned = transpose_reorder(p.view(), b, a, ctx.threads, ctx.counters);
            double t2 = detail::now_seconds();
            if (rec) {
                rec->t_tsmm += t1 - t0;
                rec->t_reorder += t2 - t1;
            }
            cur = owned.view();
            hi -= 1;
            r_right = rnew;
            right_phase = false;
        } else {
            const index_t a = r_left * dims[static_cast<std::size_t>(lo)];
            detail::WorkSVD s = detail::svd_of_work(cur, ctx, rec);
            const index_t rnew = detail::choose_rank(s, spec, cur.rows);
            tt.cores[static_cast<std::size_t>(lo)] =
                detail::core_from_v(s, r_left, dims[static_cast<std::size_t>(lo)], rnew);
            if (rec) {
                rec->rows = cur.rows;
                rec->cols = a;
                rec->rank = rnew;
                rec->f = static_cast<double>(rnew) / static_cast<double>(a);
            }
            ++built;
            if (built == d - 1) {
                // odd d ends on a left step: middle core needs the transpose
                double t0 = detail::now_seconds();
                PaddedMatrix p = tsmm_reshape(cur, s.v_view(rnew), cur.rows, rnew, ctx.threads, ctx.counters);
                double t1 = detail::now_seconds();
                PaddedMatrix q = transpose_reorder(p.view(), rnew, cur.rows, ctx.threads, ctx.counters);
                double t2 = detail::now_seconds();
                if (rec) {
                    rec->t_tsmm += t1 - t0;
                    rec->t_reorder += t2 - t1;
                }
                tt.cores[static_cast<std::size_t>(hi)] =
                    detail::core_from_padded(q, rnew, dims[static_cast<std::size_t>(hi)], r_right);
                break;
            }
            const index_t out_rows = rnew * cur.rows / (dims[static_cast<std::size_t>(hi)] * r_right);
            const index_t out_cols = dims[static_cast<std::size_t>(hi)] * r_right;
            double t0 = detail::now_seconds();
            PaddedMatrix p = tsmm_reshape(cur, s.v_view(rnew), cur.rows, rnew, ctx.threads, ctx.counters);
            double t1 = detail::now_seconds();
            owned = transpose_reorder(p.view(), out_rows, out_cols, ctx.threads, ctx.counters);
            double t2 = detail::now_seconds();
            if (rec) {
                rec->t_tsmm += t1 - t0;
                rec->t_reorder += t2 - t1;
            }
            cur = owned.view();
            lo += 1;
            r_left = rnew;
            right_phase = true;
        }
    }
    tt.validate();
    return tt;
}

/// In-process realization of the distributed sweep (Alg. 5): the tensor is
/// partitioned along its first dimension, one slab per (virtual) process.
/// Each partition runs the local sweep; every QR performs a global
/// combine_factors over the per-partition triangles in pinned partition
/// order, the small SVD is duplicated on every partition, and T^(1) is
/// gathered from the per-partition final work matrices.
inline TensorTrain tt_svd_distributed(const std::vector<DenseTensor>& slabs, TruncationSpec spec,
                                      const ExecContext& ctx = {},
                                      std::vector<TensorTrain>* per_partition = nullptr) {
    if (slabs.empty()) throw PartitionMismatch("tt_svd_distributed: no partitions");
    const Shape& local = slabs.front().shape();
    for (const auto& s : slabs)
        if (!(s.shape() == local)) throw PartitionMismatch("tt_svd_distributed: slab shapes differ");
    const index_t parts = static_cast<index_t>(slabs.size());
    const index_t d_local = local.d();
    const index_t d = d_local + 1;

    if (parts == 1) {
        // degenerate global tensor (1, n_1, ..., n_d): same buffer layout
        std::vector<index_t> gdims;
        gdims.push_back(1);
        for (index_t n : local.dims()) gdims.push_back(n);
        DenseTensor glob{Shape(gdims)};
        copy_logical(slabs[0], glob);
        TensorTrain tt = tt_svd_tsqr(glob, spec, ctx);
        if (per_partition) per_partition->assign(1, tt);
        return tt;
    }

    struct PartState {
        PaddedMatrix owned;
        ConstMatrixView cur;
    };
    std::vector<PartState> st(static_cast<std::size_t>(parts));
    for (index_t p = 0; p < parts; ++p) {
        auto& s = st[static_cast<std::size_t>(p)];
        if (d_local == 1)
            // a 1-d slab has no valid split; its natural matricization is 1 x n_1
            s.cur = ConstMatrixView{slabs[static_cast<std::size_t>(p)].data(), 1, local.dim(0),
                                    slabs[static_cast<std::size_t>(p)].leading_stride()};
        else
            s.cur = reshape_view(slabs[static_cast<std::size_t>(p)], d_local - 1);
    }

    TensorTrain tt;
    tt.cores.resize(static_cast<std::size_t>(d));
    if (per_partition) per_partition->assign(static_cast<std::size_t>(parts), TensorTrain{});

    index_t r = 1;
    for (index_t i = d_local - 1; i >= 0; --i) {
        const index_t n_i = local.dim(i);
        const index_t m = n_i * r;
        StepRecord* rec = ctx.recorder ? &ctx.recorder->next_step() : nullptr;
        double t0 = detail::now_seconds();
        std::vector<TriangularFactor> rparts;
        rparts.reserve(static_cast<std::size_t>(parts));
        index_t global_rows = 0;
        for (index_t p = 0; p < parts; ++p) {
            global_rows += st[static_cast<std::size_t>(p)].cur.rows;
            rparts.push_back(detail::gram_triangular(st[static_cast<std::size_t>(p)].cur, ctx));
        }
        TriangularFactor R = combine_factors(rparts, ctx.block_params(m), ctx.tsqr_stats, ctx.counters);
        double t1 = detail::now_seconds();
        if (rec) rec->t_tsqr += t1 - t0;

        // duplicated small SVD: every partition factorizes the same combined R
        index_t rnew = 0;
        for (index_t p = 0; p < parts; ++p) {
            double ts = detail::now_seconds();
            SmallSVD sv = small_svd(R);
            if (rec && p == 0) rec->t_small_svd += detail::now_seconds() - ts;
            detail::WorkSVD s;
            s.cols = m;
            s.nsig = std::min(m, global_rows);
            s.sigma = std::move(sv.sigma);
            s.V = std::move(sv.V);
            if (!spec.has_delta())
                spec.delta = derive_delta(sigma_norm(s.sigma), spec.eps, d);
            rnew = detail::choose_rank(s, spec, global_rows);
            TTCore core = detail::core_from_vt(s, rnew, n_i, r);
            if (per_partition)
                (*per_partition)[static_cast<std::size_t>(p)].cores.insert(
                    (*per_partition)[static_cast<std::size_t>(p)].cores.begin(), core);
            if (p == 0) tt.cores[static_cast<std::size_t>(i + 1)] = std::move(core);
            double tm = detail::now_seconds();
            auto& stp = st[static_cast<std::size_t>(p)];
            const index_t out_rows = i >= 1 ? stp.cur.rows / local.dim(i - 1) : 1;
            const index_t out_cols = i >= 1 ? local.dim(i - 1) * rnew : rnew;
            ConstMatrixView vv{s.V.data(), m, rnew, m};
            stp.owned = tsmm_reshape(stp.cur, vv, out_rows, out_cols, ctx.threads, ctx.counters);
            stp.cur = stp.owned.view();
            if (rec && p == 0) rec->t_tsmm += detail::now_seconds() - tm;
        }
        if (rec) {
            rec->rows = global_rows;
            rec->cols = m;
            rec->rank = rnew;
            rec->f = static_cast<double>(rnew) / static_cast<double>(m);
        }
        r = rnew;
    }

    // gather T^(1) from the per-partition slices
    TTCore first(1, parts, r);
    for (index_t p = 0; p < parts; ++p)
        for (index_t b = 0; b < r; ++b)
            first(0, p, b) = st[static_cast<std::size_t>(p)].cur(0, b);
    tt.cores[0] = std::move(first);
    if (per_partition)
        for (index_t p = 0; p < parts; ++p) {
            TTCore own(1, 1, r);
            for (index_t b = 0; b < r; ++b) own(0, 0, b) = st[static_cast<std::size_t>(p)].cur(0, b);
            auto& ptt = (*per_partition)[static_cast<std::size_t>(p)];
            ptt.cores.insert(ptt.cores.begin(), std::move(own));
        }
    tt.validate();
    return tt;
}

} // namespace ttsvd
