#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ttsvd/errors.hpp"
#include "ttsvd/tsqr.hpp"

namespace ttsvd {

/// Economy SVD A = U diag(sigma) V^T with sigma nonincreasing. U is n x m
/// with orthonormal columns (completed deterministically for zero singular
/// values), V is m x m orthonormal.
struct SmallSVD {
    index_t n = 0, m = 0;
    std::vector<double> U;     // n x m column-major
    std::vector<double> sigma; // length m, nonincreasing
    std::vector<double> V;     // m x m column-major

    double u(index_t i, index_t j) const { return U[static_cast<std::size_t>(j * n + i)]; }
    double v(index_t i, index_t j) const { return V[static_cast<std::size_t>(j * m + i)]; }
};

/// Truncation request: rank cap r_max and tolerance eps. delta is derived
/// once from the first iteration's singular values and carried along.
struct TruncationSpec {
    index_t r_max = std::numeric_limits<index_t>::max();
    double eps = 0.0;
    double delta = -1.0; // < 0: not derived yet

    bool has_delta() const { return delta >= 0.0; }
};

/// delta = eps / sqrt(d-1) * norm_source. norm_source is ||X||_F, or in the
/// optimized path ||Sigma||_F of the first small SVD (equal since QR and the
/// reshape preserve the Frobenius norm).
inline double derive_delta(double norm_source, double eps, index_t d) {
    if (d < 2) throw DegenerateDimension("derive_delta: requires d >= 2");
    return eps / std::sqrt(static_cast<double>(d - 1)) * norm_source;
}

/// Rank rule of the truncated SVD step:
///   r_delta = min{ j : sigma_{j+1}^2 + sigma_{j+2}^2 + ... <= delta^2 },
///   r = min(r_max, r_delta), clamped to >= 1 so cores never have zero rank.
inline index_t select_rank(const std::vector<double>& sigma, double delta, index_t r_max) {
    const index_t m = static_cast<index_t>(sigma.size());
    double tail = 0.0;
    index_t r_delta = m;
    for (index_t j = m; j-- > 0;) {
        tail += sigma[static_cast<std::size_t>(j)] * sigma[static_cast<std::size_t>(j)];
        if (tail <= delta * delta)
            r_delta = j;
        else
            break;
    }
    index_t r = std::min(r_max, r_delta);
    if (r < 1) r = 1;
    return std::min(r, std::max<index_t>(m, 1));
}

namespace detail {

/// One-sided Jacobi on a tall column-major matrix held in `a` (n x m,
/// contiguous, ld = n): orthogonalizes the columns by plane rotations,
/// accumulating them into V. Cyclic sweeps; converged when every Gram
/// rotation falls below 1e2 * eps_mach relative to the column norms (which
/// implies the 1e2 * eps_mach * sigma_1^2 level). Max 30 sweeps.
inline void jacobi_orthogonalize(std::vector<double>& a, index_t n, index_t m,
                                 std::vector<double>& v) {
    v.assign(static_cast<std::size_t>(m * m), 0.0);
    for (index_t j = 0; j < m; ++j) v[static_cast<std::size_t>(j * m + j)] = 1.0;
    const double tol = 1e2 * DBL_EPSILON;
    const int max_sweeps = 30;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (index_t p = 0; p < m - 1; ++p) {
            for (index_t q = p + 1; q < m; ++q) {
                double* ap = a.data() + p * n;
                double* aq = a.data() + q * n;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (index_t i = 0; i < n; ++i) {
                    alpha += ap[i] * ap[i];
                    beta += aq[i] * aq[i];
                    gamma += ap[i] * aq[i];
                }
                if (std::fabs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = ((zeta >= 0.0) ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (index_t i = 0; i < n; ++i) {
                    const double x = ap[i], y = aq[i];
                    ap[i] = c * x - s * y;
                    aq[i] = s * x + c * y;
                }
                double* vp = v.data() + p * m;
                double* vq = v.data() + q * m;
                for (index_t i = 0; i < m; ++i) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) return;
    }
    throw ConvergenceError("jacobi_svd: no convergence in 30 sweeps");
}

} // namespace detail

/// One-sided Jacobi SVD of a tall matrix (n >= m). Accurate for small m; no
/// bidiagonalization machinery. Deterministic: fixed cyclic sweep order.
inline SmallSVD jacobi_svd(ConstMatrixView A) {
    const index_t n = A.rows, m = A.cols;
    if (n < m) throw DimensionError("jacobi_svd: requires n >= m");
    SmallSVD out;
    out.n = n;
    out.m = m;
    std::vector<double> a(static_cast<std::size_t>(n * m));
    for (index_t j = 0; j < m; ++j)
        for (index_t i = 0; i < n; ++i) a[static_cast<std::size_t>(j * n + i)] = A(i, j);

    std::vector<double> v;
    detail::jacobi_orthogonalize(a, n, m, v);

    std::vector<double> norms(static_cast<std::size_t>(m));
    for (index_t j = 0; j < m; ++j) {
        double s = 0.0;
        const double* c = a.data() + j * n;
        for (index_t i = 0; i < n; ++i) s += c[i] * c[i];
        norms[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    std::vector<index_t> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), index_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](index_t x, index_t y) { return norms[static_cast<std::size_t>(x)] > norms[static_cast<std::size_t>(y)]; });

    out.sigma.resize(static_cast<std::size_t>(m));
    out.U.assign(static_cast<std::size_t>(n * m), 0.0);
    out.V.assign(static_cast<std::size_t>(m * m), 0.0);
    const double sigma1 = norms.empty() ? 0.0 : norms[static_cast<std::size_t>(order[0])];
    const double cutoff = sigma1 * static_cast<double>(n) * DBL_EPSILON;
    std::vector<index_t> deficient;
    for (index_t j = 0; j < m; ++j) {
        const index_t src = order[static_cast<std::size_t>(j)];
        const double s = norms[static_cast<std::size_t>(src)];
        out.sigma[static_cast<std::size_t>(j)] = s;
        for (index_t i = 0; i < m; ++i)
            out.V[static_cast<std::size_t>(j * m + i)] = v[static_cast<std::size_t>(src * m + i)];
        if (s > cutoff) {
            const double inv = 1.0 / s;
            for (index_t i = 0; i < n; ++i)
                out.U[static_cast<std::size_t>(j * n + i)] = a[static_cast<std::size_t>(src * n + i)] * inv;
        } else {
            deficient.push_back(j);
        }
    }
    // Deterministic orthonormal completion of U for (numerically) zero
    // singular values: canonical basis vectors, re-orthogonalized twice.
    std::size_t next_axis = 0;
    for (index_t j : deficient) {
        double* uj = out.U.data() + j * n;
        for (; next_axis < static_cast<std::size_t>(n); ++next_axis) {
            for (index_t i = 0; i < n; ++i) uj[i] = 0.0;
            uj[next_axis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (index_t k = 0; k < m; ++k) {
                    if (k == j) continue;
                    const double* uk = out.U.data() + k * n;
                    double dot = 0.0;
                    for (index_t i = 0; i < n; ++i) dot += uk[i] * uj[i];
                    for (index_t i = 0; i < n; ++i) uj[i] -= dot * uk[i];
                }
            }
            double nrm = 0.0;
            for (index_t i = 0; i < n; ++i) nrm += uj[i] * uj[i];
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (index_t i = 0; i < n; ++i) uj[i] /= nrm;
                ++next_axis;
                break;
            }
        }
    }
    return out;
}

/// Small SVD of a triangular TSQR factor (Alg. 2 line 6).
inline SmallSVD small_svd(const TriangularFactor& R) {
    if (R.m > 4096) throw DimensionMismatch("small_svd: m exceeds 4096");
    return jacobi_svd(R.view());
}

inline double sigma_norm(const std::vector<double>& sigma) {
    double s = 0.0;
    for (double x : sigma) s += x * x;
    return std::sqrt(s);
}

} // namespace ttsvd
