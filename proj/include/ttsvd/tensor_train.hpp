#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ttsvd/errors.hpp"
#include "ttsvd/storage.hpp"

namespace ttsvd {

/// One tensor-train core T^(j): r_left x n x r_right, column-major flattened
/// (left rank index fastest).
struct TTCore {
    index_t r_left = 1, n = 1, r_right = 1;
    std::vector<double> data;

    TTCore() = default;
    TTCore(index_t rl, index_t n_, index_t rr)
        : r_left(rl), n(n_), r_right(rr),
          data(static_cast<std::size_t>(rl * n_ * rr), 0.0) {}

    double& operator()(index_t a, index_t i, index_t b) {
        return data[static_cast<std::size_t>(a + r_left * (i + n * b))];
    }
    double operator()(index_t a, index_t i, index_t b) const {
        return data[static_cast<std::size_t>(a + r_left * (i + n * b))];
    }

    /// Horizontal unfolding r_left x (n*r_right); same buffer.
    ConstMatrixView horizontal() const {
        return ConstMatrixView{data.data(), r_left, n * r_right, r_left};
    }
    /// Vertical unfolding (r_left*n) x r_right; same buffer.
    ConstMatrixView vertical() const {
        return ConstMatrixView{data.data(), r_left * n, r_right, r_left * n};
    }
};

/// Ordered chain of cores with boundary ranks r_0 = r_d = 1.
struct TensorTrain {
    std::vector<TTCore> cores;

    index_t d() const { return static_cast<index_t>(cores.size()); }

    Shape dims() const {
        std::vector<index_t> ds;
        ds.reserve(cores.size());
        for (const auto& c : cores) ds.push_back(c.n);
        return Shape(ds);
    }

    /// Rank chain r_0..r_d.
    std::vector<index_t> ranks() const {
        std::vector<index_t> r;
        r.reserve(cores.size() + 1);
        r.push_back(cores.empty() ? 1 : cores.front().r_left);
        for (const auto& c : cores) r.push_back(c.r_right);
        return r;
    }

    index_t max_rank() const {
        index_t m = 1;
        for (const auto& c : cores) m = std::max({m, c.r_left, c.r_right});
        return m;
    }

    void validate() const {
        if (cores.empty()) throw DegenerateDimension("TensorTrain: no cores");
        if (cores.front().r_left != 1 || cores.back().r_right != 1)
            throw DimensionMismatch("TensorTrain: boundary ranks must be 1");
        for (std::size_t j = 0; j + 1 < cores.size(); ++j)
            if (cores[j].r_right != cores[j + 1].r_left)
                throw DimensionMismatch("TensorTrain: rank chain broken at core " + std::to_string(j));
    }
};

/// Contract the train left-to-right into a dense tensor.
inline DenseTensor tt_reconstruct(const TensorTrain& tt) {
    tt.validate();
    const Shape shape = tt.dims();
    check_budget(shape.total());
    // running factor M: N x r, column-major
    index_t N = tt.cores.front().n;
    index_t r = tt.cores.front().r_right;
    std::vector<double> M(tt.cores.front().data);
    for (index_t j = 1; j < tt.d(); ++j) {
        const TTCore& c = tt.cores[static_cast<std::size_t>(j)];
        ConstMatrixView H = c.horizontal(); // r x (n*r_right)
        const index_t nc = H.cols;
        check_budget(N * nc);
        std::vector<double> next(static_cast<std::size_t>(N * nc), 0.0);
        for (index_t cc = 0; cc < nc; ++cc) {
            double* dst = next.data() + cc * N;
            for (index_t l = 0; l < r; ++l) {
                const double h = H(l, cc);
                if (h == 0.0) continue;
                const double* src = M.data() + l * N;
                for (index_t i = 0; i < N; ++i) dst[i] += h * src[i];
            }
        }
        M = std::move(next);
        N *= c.n;
        r = c.r_right;
    }
    DenseTensor out(shape);
    for (index_t l = 0; l < shape.total(); ++l) out.at_flat(l) = M[static_cast<std::size_t>(l)];
    return out;
}

/// Relative Frobenius reconstruction error ||X - reconstruct(tt)|| / ||X||.
inline double tt_error(const DenseTensor& X, const TensorTrain& tt) {
    if (!(tt.dims() == X.shape())) throw ShapeError("tt_error: dims mismatch");
    DenseTensor Y = tt_reconstruct(tt);
    double diff = 0.0, nrm = 0.0;
    for (index_t l = 0; l < X.total(); ++l) {
        const double x = X.at_flat(l);
        const double e = x - Y.at_flat(l);
        diff += e * e;
        nrm += x * x;
    }
    return std::sqrt(diff) / std::sqrt(nrm);
}

/// Max orthonormality deviation over all cores except `excluded`: cores left
/// of it are checked as left-orthonormal (vertical unfolding, G^T G = I),
/// cores right of it as right-orthonormal (horizontal unfolding, G G^T = I).
inline double check_orthonormality(const TensorTrain& tt, index_t excluded) {
    double worst = 0.0;
    for (index_t j = 0; j < tt.d(); ++j) {
        if (j == excluded) continue;
        const TTCore& c = tt.cores[static_cast<std::size_t>(j)];
        ConstMatrixView G = j < excluded ? c.vertical() : c.horizontal();
        // gram of the orthonormal direction
        const bool by_cols = j < excluded;
        const index_t k = by_cols ? G.cols : G.rows;
        const index_t len = by_cols ? G.rows : G.cols;
        double dev2 = 0.0;
        for (index_t a = 0; a < k; ++a) {
            for (index_t b = 0; b < k; ++b) {
                double dot = 0.0;
                for (index_t i = 0; i < len; ++i) {
                    const double x = by_cols ? G(i, a) : G(a, i);
                    const double y = by_cols ? G(i, b) : G(b, i);
                    dot += x * y;
                }
                const double t = dot - (a == b ? 1.0 : 0.0);
                dev2 += t * t;
            }
        }
        worst = std::max(worst, std::sqrt(dev2));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// TT save/load: header (d, ranks r_0..r_d, dims) as 64-bit little-endian
// integers, then the core buffers in order, little-endian doubles.
// ---------------------------------------------------------------------------

inline void save_tt(const TensorTrain& tt, const std::string& path) {
    tt.validate();
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("save_tt: cannot open " + path);
    detail::write_u64(f.get(), static_cast<std::uint64_t>(tt.d()));
    for (index_t r : tt.ranks()) detail::write_u64(f.get(), static_cast<std::uint64_t>(r));
    for (const auto& c : tt.cores) detail::write_u64(f.get(), static_cast<std::uint64_t>(c.n));
    for (const auto& c : tt.cores)
        detail::write_doubles(f.get(), c.data.data(), static_cast<index_t>(c.data.size()));
}

inline TensorTrain load_tt(const std::string& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("load_tt: cannot open " + path);
    const index_t d = static_cast<index_t>(detail::read_u64(f.get()));
    if (d < 1 || d > 64) throw IoError("load_tt: bad header");
    std::vector<index_t> ranks(static_cast<std::size_t>(d + 1));
    for (auto& r : ranks) r = static_cast<index_t>(detail::read_u64(f.get()));
    std::vector<index_t> dims(static_cast<std::size_t>(d));
    for (auto& n : dims) n = static_cast<index_t>(detail::read_u64(f.get()));
    TensorTrain tt;
    for (index_t j = 0; j < d; ++j) {
        TTCore c(ranks[static_cast<std::size_t>(j)], dims[static_cast<std::size_t>(j)],
                 ranks[static_cast<std::size_t>(j + 1)]);
        detail::read_doubles(f.get(), c.data.data(), static_cast<index_t>(c.data.size()));
        tt.cores.push_back(std::move(c));
    }
    tt.validate();
    return tt;
}

} // namespace ttsvd
