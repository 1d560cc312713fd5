#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "ttsvd/counters.hpp"
#include "ttsvd/errors.hpp"
#include "ttsvd/storage.hpp"
#include "ttsvd/threading.hpp"

namespace ttsvd {

/// Fused tall-skinny matrix-matrix multiplication with in-flight reshape:
/// computes X*V (n x k) and stores it flattened column-major into a freshly
/// padded (out_rows x out_cols) matrix, i.e. product element (i,c) lands at
/// flat position p = i + n*c, which is out(p mod out_rows, p div out_rows).
/// Output addresses are computed directly, so no intermediate n x k buffer
/// exists. X is read once, the output written once. X and V are unmodified.
inline PaddedMatrix tsmm_reshape(ConstMatrixView X, ConstMatrixView V, index_t out_rows,
                                 index_t out_cols, int workers = 1, Counters* counters = nullptr) {
    const index_t n = X.rows, m = X.cols, k = V.cols;
    if (V.rows != m) throw ShapeError("tsmm_reshape: V.rows != X.cols");
    if (k > m) throw ShapeError("tsmm_reshape: k > m (kernel only shrinks)");
    if (out_rows < 1 || out_cols < 1 || n * k != out_rows * out_cols)
        throw ShapeError("tsmm_reshape: out shape does not hold n*k elements");

    PaddedMatrix out(out_rows, out_cols);
    double* od = out.data();
    const index_t ostride = out.stride();

    // Row blocks sized so the per-block accumulator stays cache resident.
    const index_t block = std::clamp<index_t>(32768 / std::max<index_t>(k, 1), 64, 1024);

    parallel_ranges(n, workers, [&](int, index_t begin, index_t end) {
        std::vector<double> acc(static_cast<std::size_t>(block * k));
        for (index_t r0 = begin; r0 < end; r0 += block) {
            const index_t rows = std::min(block, end - r0);
            std::fill(acc.begin(), acc.begin() + static_cast<std::ptrdiff_t>(rows * k), 0.0);
            for (index_t j = 0; j < m; ++j) {
                const double* xj = X.col(j) + r0;
                for (index_t c = 0; c < k; ++c) {
                    const double vjc = V(j, c);
                    double* a = acc.data() + c * rows;
                    for (index_t i = 0; i < rows; ++i) a[i] += vjc * xj[i];
                }
            }
            for (index_t c = 0; c < k; ++c) {
                // flat positions [r0 + n*c, r0 + n*c + rows) split at out_rows
                // boundaries into contiguous destination runs
                const double* a = acc.data() + c * rows;
                index_t p = r0 + n * c, left = rows, src = 0;
                while (left > 0) {
                    const index_t oi = p % out_rows, oj = p / out_rows;
                    const index_t run = std::min(left, out_rows - oi);
                    std::memcpy(od + oj * ostride + oi, a + src,
                                static_cast<std::size_t>(run) * sizeof(double));
                    p += run;
                    src += run;
                    left -= run;
                }
            }
        }
    });

    if (counters)
        counters->add(2ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m) *
                          static_cast<std::uint64_t>(k),
                      8ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m + k));
    return out;
}

/// Convenience overload: plain product layout (n x k).
inline PaddedMatrix tsmm_reshape(ConstMatrixView X, ConstMatrixView V, int workers = 1,
                                 Counters* counters = nullptr) {
    return tsmm_reshape(X, V, X.rows, V.cols, workers, counters);
}

/// Out-of-place transpose fused with a reshape: flattens W^T column-major and
/// reinterprets the flat order as an (out_rows x out_cols) padded matrix.
/// This is the reorder the two-sided sweep needs between opposite-end
/// iterations. With matching shapes it is an involution. Pure permutation;
/// values are moved, never changed.
inline PaddedMatrix transpose_reorder(ConstMatrixView W, index_t out_rows, index_t out_cols,
                                      int workers = 1, Counters* counters = nullptr) {
    const index_t n = W.rows, m = W.cols;
    if (out_rows < 1 || out_cols < 1 || out_rows * out_cols != n * m)
        throw ShapeError("transpose_reorder: out shape does not hold n*m elements");
    PaddedMatrix out(out_rows, out_cols);
    double* od = out.data();
    const index_t ostride = out.stride();
    const index_t tile = 64;

    parallel_ranges(n, workers, [&](int, index_t begin, index_t end) {
        for (index_t i0 = begin; i0 < end; i0 += tile) {
            const index_t i1 = std::min(end, i0 + tile);
            for (index_t j0 = 0; j0 < m; j0 += tile) {
                const index_t j1 = std::min(m, j0 + tile);
                for (index_t i = i0; i < i1; ++i) {
                    // row i of W lands at contiguous flat positions m*i + j;
                    // write it as runs split at out_rows boundaries
                    index_t j = j0;
                    index_t p = m * i + j0;
                    while (j < j1) {
                        const index_t oi = p % out_rows;
                        const index_t run = std::min(j1 - j, out_rows - oi);
                        double* dst = od + (p / out_rows) * ostride + oi;
                        for (index_t t = 0; t < run; ++t) dst[t] = W(i, j + t);
                        j += run;
                        p += run;
                    }
                }
            }
        }
    });

    if (counters)
        counters->add(0, 16ull * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m));
    return out;
}

/// Default shape: the plain m x n transpose.
inline PaddedMatrix transpose_reorder(ConstMatrixView W, int workers = 1,
                                      Counters* counters = nullptr) {
    return transpose_reorder(W, W.cols, W.rows, workers, counters);
}

} // namespace ttsvd
