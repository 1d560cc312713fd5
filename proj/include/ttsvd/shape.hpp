#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ttsvd/errors.hpp"

namespace ttsvd {

using index_t = std::int64_t;

/// Tensors above 2^40 elements are rejected (desk/cluster scale bound).
inline constexpr index_t kMaxElements = index_t{1} << 40;

/// Smallest s >= n_rows of the form 2^6 * (2l+1), i.e. an odd multiple of
/// 64 elements. Strides of this form avoid cache thrashing for the
/// power-of-two leading dimensions that are typical in tensor-train work
/// matrices. Idempotent: padded_stride(padded_stride(n)) == padded_stride(n).
inline index_t padded_stride(index_t n_rows) {
    if (n_rows < 1) throw DimensionError("padded_stride: n_rows must be >= 1");
    if (n_rows <= 64) return 64;
    index_t q = (n_rows + 63) / 64; // ceil to a multiple of 64
    if (q % 2 == 0) ++q;
    return 64 * q;
}

/// Ordered list of positive extents n_1..n_d.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<index_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) { validate(); }

    index_t d() const { return static_cast<index_t>(dims_.size()); }
    index_t dim(index_t i) const { return dims_[static_cast<std::size_t>(i)]; }
    const std::vector<index_t>& dims() const { return dims_; }

    /// n_bar = prod n_i. Guarded against overflow of the supported range.
    index_t total() const {
        index_t t = 1;
        for (index_t n : dims_) {
            if (t > kMaxElements / n)
                throw AllocationError("Shape::total: element count exceeds 2^40");
            t *= n;
        }
        return t;
    }

    /// Product of the leading k extents.
    index_t leading(index_t k) const {
        index_t t = 1;
        for (index_t i = 0; i < k; ++i) t *= dim(i);
        return t;
    }

    /// Product of the trailing k extents.
    index_t trailing(index_t k) const {
        index_t t = 1;
        for (index_t i = d() - k; i < d(); ++i) t *= dim(i);
        return t;
    }

    std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += 'x';
            s += std::to_string(dims_[i]);
        }
        return s;
    }

    bool operator==(const Shape& o) const { return dims_ == o.dims_; }

private:
    void validate() const {
        if (dims_.empty()) throw DimensionError("Shape: needs at least one dimension");
        for (index_t n : dims_)
            if (n < 1) throw DimensionError("Shape: extents must be >= 1");
        (void)total();
    }

    std::vector<index_t> dims_;
};

} // namespace ttsvd
