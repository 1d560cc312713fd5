#pragma once

#include <stdexcept>
#include <string>

namespace ttsvd {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A reshape cannot be expressed as a strided view (a copy is required).
class LayoutError : public Error {
    using Error::Error;
};

/// Requested allocation exceeds the configured memory budget.
class AllocationError : public Error {
    using Error::Error;
};

/// Operand dimensions are inconsistent (e.g. R.m != M.cols).
class DimensionMismatch : public Error {
    using Error::Error;
};

/// A tall-skinny operation was called with fewer rows than columns.
class DimensionError : public Error {
    using Error::Error;
};

/// Tensor has too few dimensions for a train decomposition.
class DegenerateDimension : public Error {
    using Error::Error;
};

/// Iterative scheme exceeded its sweep limit.
class ConvergenceError : public Error {
    using Error::Error;
};

/// Output shape is inconsistent with the input sizes.
class ShapeError : public Error {
    using Error::Error;
};

/// Distributed slabs do not share a common trailing shape.
class PartitionMismatch : public Error {
    using Error::Error;
};

/// Cost-model series does not converge (reduction factor >= 1).
class DivergenceError : public Error {
    using Error::Error;
};

/// Report or file I/O failed.
class IoError : public Error {
    using Error::Error;
};

} // namespace ttsvd
