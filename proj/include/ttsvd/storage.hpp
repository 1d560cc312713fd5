#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <random>
#include <vector>

#include "ttsvd/errors.hpp"
#include "ttsvd/shape.hpp"

namespace ttsvd {

/// Process-wide allocation budget for dense buffers (default 8 GiB).
inline std::atomic<index_t>& memory_budget_bytes() {
    static std::atomic<index_t> budget{index_t{8} << 30};
    return budget;
}

inline void check_budget(index_t elements) {
    if (elements > kMaxElements || elements * 8 > memory_budget_bytes().load())
        throw AllocationError("allocation of " + std::to_string(elements) +
                              " doubles exceeds the memory budget");
}

/// Non-owning column-major matrix view with a padded leading stride.
/// Element (i,j) lives at data[j*stride + i].
struct ConstMatrixView {
    const double* data = nullptr;
    index_t rows = 0, cols = 0, stride = 0;

    double operator()(index_t i, index_t j) const { return data[j * stride + i]; }
    const double* col(index_t j) const { return data + j * stride; }
};

struct MatrixView {
    double* data = nullptr;
    index_t rows = 0, cols = 0, stride = 0;

    double& operator()(index_t i, index_t j) const { return data[j * stride + i]; }
    double* col(index_t j) const { return data + j * stride; }
    operator ConstMatrixView() const { return ConstMatrixView{data, rows, cols, stride}; }
};

/// Owning tall-skinny work matrix. The stride follows the padding rule and
/// padded slots are zeroed at allocation, so full-column operations over the
/// buffer are safe.
class PaddedMatrix {
public:
    PaddedMatrix() = default;
    PaddedMatrix(index_t rows, index_t cols)
        : rows_(rows), cols_(cols), stride_(padded_stride(rows)) {
        if (rows < 1 || cols < 1) throw DimensionError("PaddedMatrix: empty shape");
        check_budget(stride_ * cols_);
        buf_.assign(static_cast<std::size_t>(stride_ * cols_), 0.0);
    }

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t stride() const { return stride_; }

    double& operator()(index_t i, index_t j) { return buf_[static_cast<std::size_t>(j * stride_ + i)]; }
    double operator()(index_t i, index_t j) const { return buf_[static_cast<std::size_t>(j * stride_ + i)]; }

    MatrixView view() { return MatrixView{buf_.data(), rows_, cols_, stride_}; }
    ConstMatrixView view() const { return ConstMatrixView{buf_.data(), rows_, cols_, stride_}; }

    double* data() { return buf_.data(); }
    const double* data() const { return buf_.data(); }

private:
    index_t rows_ = 0, cols_ = 0, stride_ = 0;
    std::vector<double> buf_;
};

/// Dense d-dimensional tensor with Fortran ordering: the leading dimensions
/// are stored contiguously and the stride of the last dimension is padded.
/// The buffer is laid out as the (n_bar/n_d) x n_d matricization with
/// stride = padded_stride(n_bar/n_d); padded slots hold zero.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape) : shape_(std::move(shape)) {
        const index_t total = shape_.total();
        rows_ = total / shape_.dim(shape_.d() - 1);
        stride_ = padded_stride(rows_);
        check_budget(stride_ * shape_.dim(shape_.d() - 1));
        buf_.assign(static_cast<std::size_t>(stride_ * shape_.dim(shape_.d() - 1)), 0.0);
    }

    const Shape& shape() const { return shape_; }
    index_t total() const { return shape_.total(); }
    /// Rows of the natural n_bar/n_d x n_d matricization.
    index_t rows() const { return rows_; }
    index_t leading_stride() const { return stride_; }

    /// Element by logical flat (column-major) index in [0, total()).
    double& at_flat(index_t l) {
        return buf_[static_cast<std::size_t>((l / rows_) * stride_ + (l % rows_))];
    }
    double at_flat(index_t l) const {
        return buf_[static_cast<std::size_t>((l / rows_) * stride_ + (l % rows_))];
    }

    double* data() { return buf_.data(); }
    const double* data() const { return buf_.data(); }
    index_t buffer_size() const { return static_cast<index_t>(buf_.size()); }

private:
    Shape shape_;
    index_t rows_ = 0, stride_ = 0;
    std::vector<double> buf_;
};

/// Zero-copy matricization: view the tensor as the
/// (prod_{i<=split_after} n_i) x (prod_{i>split_after} n_i) matrix.
/// Only neighboring-dimension merges are supported. Throws LayoutError when
/// the padded layout cannot express the split as a strided 2-d view; use
/// reshape_copy in that case.
inline MatrixView reshape_view(DenseTensor& t, index_t split_after) {
    const index_t d = t.shape().d();
    if (split_after < 1 || split_after >= d)
        throw DimensionError("reshape_view: split must satisfy 1 <= split < d");
    const index_t r = t.shape().leading(split_after);
    const index_t c = t.total() / r;
    if (split_after == d - 1)
        return MatrixView{t.data(), r, c, t.leading_stride()};
    // Padding sits between slabs of the last dimension; any other split is a
    // strided view only when the buffer is contiguous.
    if (t.leading_stride() == t.rows())
        return MatrixView{t.data(), r, c, r};
    throw LayoutError("reshape_view: split " + std::to_string(split_after) +
                      " is not representable over the padded layout");
}

inline ConstMatrixView reshape_view(const DenseTensor& t, index_t split_after) {
    MatrixView v = reshape_view(const_cast<DenseTensor&>(t), split_after);
    return ConstMatrixView{v.data, v.rows, v.cols, v.stride};
}

/// Copy fallback for splits the padded layout cannot view.
inline PaddedMatrix reshape_copy(const DenseTensor& t, index_t split_after) {
    const index_t d = t.shape().d();
    if (split_after < 1 || split_after >= d)
        throw DimensionError("reshape_copy: split must satisfy 1 <= split < d");
    const index_t r = t.shape().leading(split_after);
    const index_t c = t.total() / r;
    PaddedMatrix out(r, c);
    for (index_t l = 0; l < t.total(); ++l) out(l % r, l / r) = t.at_flat(l);
    return out;
}

/// Copy all logical entries of src into dst (same total element count,
/// possibly different shape/stride). Runs over contiguous spans of both
/// layouts, so it moves at memcpy speed.
inline void copy_logical(const DenseTensor& src, DenseTensor& dst) {
    if (src.total() != dst.total())
        throw ShapeError("copy_logical: element counts differ");
    const index_t total = src.total();
    index_t l = 0;
    while (l < total) {
        const index_t src_left = src.rows() - l % src.rows();
        const index_t dst_left = dst.rows() - l % dst.rows();
        const index_t run = std::min({src_left, dst_left, total - l});
        const double* s = src.data() + (l / src.rows()) * src.leading_stride() + l % src.rows();
        double* d = dst.data() + (l / dst.rows()) * dst.leading_stride() + l % dst.rows();
        std::memcpy(d, s, static_cast<std::size_t>(run) * sizeof(double));
        l += run;
    }
}

/// Frobenius norm over the real entries only (padding excluded).
inline double frobenius_norm(const DenseTensor& t) {
    const index_t cols = t.total() / t.rows();
    double total = 0.0;
    for (index_t j = 0; j < cols; ++j) {
        const double* c = t.data() + j * t.leading_stride();
        double s = 0.0;
        for (index_t i = 0; i < t.rows(); ++i) s += c[i] * c[i];
        total += s;
    }
    return std::sqrt(total);
}

inline double frobenius_norm(ConstMatrixView m) {
    double total = 0.0;
    for (index_t j = 0; j < m.cols; ++j) {
        const double* c = m.col(j);
        double s = 0.0;
        for (index_t i = 0; i < m.rows; ++i) s += c[i] * c[i];
        total += s;
    }
    return std::sqrt(total);
}

/// Uniform [0,1) doubles from a seeded mt19937_64, filled in logical
/// column-major order. Same (shape, seed) gives a bitwise-identical buffer
/// on any platform: the engine is fully specified by the standard and the
/// 53-bit mapping below avoids implementation-defined distributions.
inline DenseTensor random_tensor(const Shape& shape, std::uint64_t seed) {
    DenseTensor t(shape);
    std::mt19937_64 eng(seed);
    const index_t cols = t.total() / t.rows();
    for (index_t j = 0; j < cols; ++j) {
        double* c = t.data() + j * t.leading_stride();
        for (index_t i = 0; i < t.rows(); ++i)
            c[i] = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Raw dump/load: header of (d, dims..., stride) as 64-bit little-endian
// integers, followed by the padded buffer as little-endian doubles. Used by
// the CLI for reproducible inputs.
// ---------------------------------------------------------------------------

namespace detail {
static_assert(sizeof(double) == 8, "requires 64-bit IEEE doubles");

inline void write_u64(std::FILE* f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    if (std::fwrite(b, 1, 8, f) != 8) throw IoError("dump: short write");
}

inline std::uint64_t read_u64(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) throw IoError("load: short read");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_doubles(std::FILE* f, const double* p, index_t n) {
    for (index_t i = 0; i < n; ++i) {
        std::uint64_t v;
        std::memcpy(&v, p + i, 8);
        write_u64(f, v);
    }
}

inline void read_doubles(std::FILE* f, double* p, index_t n) {
    for (index_t i = 0; i < n; ++i) {
        std::uint64_t v = read_u64(f);
        std::memcpy(p + i, &v, 8);
    }
}

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
} // namespace detail

inline void dump_tensor(const DenseTensor& t, const std::string& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("dump_tensor: cannot open " + path);
    detail::write_u64(f.get(), static_cast<std::uint64_t>(t.shape().d()));
    for (index_t n : t.shape().dims()) detail::write_u64(f.get(), static_cast<std::uint64_t>(n));
    detail::write_u64(f.get(), static_cast<std::uint64_t>(t.leading_stride()));
    detail::write_doubles(f.get(), t.data(), t.buffer_size());
}

inline DenseTensor load_tensor(const std::string& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("load_tensor: cannot open " + path);
    const index_t d = static_cast<index_t>(detail::read_u64(f.get()));
    if (d < 1 || d > 64) throw IoError("load_tensor: bad header");
    std::vector<index_t> dims(static_cast<std::size_t>(d));
    for (auto& n : dims) n = static_cast<index_t>(detail::read_u64(f.get()));
    const index_t stride = static_cast<index_t>(detail::read_u64(f.get()));
    DenseTensor t{Shape(dims)};
    if (stride != t.leading_stride()) throw IoError("load_tensor: stride mismatch");
    detail::read_doubles(f.get(), t.data(), t.buffer_size());
    return t;
}

} // namespace ttsvd
