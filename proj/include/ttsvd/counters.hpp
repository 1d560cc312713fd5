#pragma once

#include <cstdint>

namespace ttsvd {

/// Software stand-in for hardware performance counters: kernels tally the
/// floating point operations they execute (FMA pairs count as 2) and the
/// bytes they stream to or from their operand buffers. Values are exact
/// deterministic functions of the kernel arguments, accumulated by the
/// coordinating thread.
struct Counters {
    std::uint64_t flops = 0;
    std::uint64_t bytes = 0;

    void add(std::uint64_t f, std::uint64_t b) {
        flops += f;
        bytes += b;
    }
    Counters& operator+=(const Counters& o) {
        flops += o.flops;
        bytes += o.bytes;
        return *this;
    }
};

} // namespace ttsvd
