#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ttsvd/small_svd.hpp"
#include "ttsvd/tsqr.hpp"

using namespace ttsvd;

namespace {

PaddedMatrix padded_from(const oracles::Dense& d) {
    PaddedMatrix p(d.rows, d.cols);
    for (index_t j = 0; j < d.cols; ++j)
        for (index_t i = 0; i < d.rows; ++i) p(i, j) = d(i, j);
    return p;
}

double gram_residual(ConstMatrixView X, const TriangularFactor& R) {
    oracles::Dense gx = oracles::gram(X);
    oracles::Dense gr = oracles::gram(R.view());
    return oracles::frob_diff(gx, gr) / oracles::frob(gx);
}

} // namespace

TEST(ReduceBlock, HandHouseholderStep) {
    // M = [3;4], R = [0]: u = (3,4,0), u1 > 0 flips the sign, Rbar = [-5]
    PaddedMatrix m(2, 1);
    m(0, 0) = 3;
    m(1, 0) = 4;
    TriangularFactor r(1);
    TriangularFactor rb = reduce_block(m.view(), r, BlockParams{});
    EXPECT_NEAR(rb(0, 0), -5.0, 1e-14);
}

TEST(ReduceBlock, ZeroBlockKeepsTriangle) {
    PaddedMatrix m(5, 1); // zeros
    TriangularFactor r(1);
    r(0, 0) = 2.0;
    TriangularFactor rb = reduce_block(m.view(), r, BlockParams{});
    EXPECT_DOUBLE_EQ(rb(0, 0), 2.0); // u1 = 0 keeps alpha positive
}

TEST(ReduceBlock, GramPreservation) {
    oracles::Dense m = oracles::gaussian(8, 3, 42);
    oracles::Dense rt = oracles::gaussian(3, 3, 43);
    TriangularFactor r(3);
    for (index_t j = 0; j < 3; ++j)
        for (index_t i = 0; i <= j; ++i) r(i, j) = rt(i, j);
    PaddedMatrix mp = padded_from(m);
    TriangularFactor rb = reduce_block(mp.view(), r, BlockParams{});
    // Rbar^T Rbar = M^T M + R^T R against the naive oracle
    oracles::Dense expect = oracles::gram(mp.view());
    oracles::Dense rg = oracles::gram(r.view());
    for (std::size_t i = 0; i < expect.a.size(); ++i) expect.a[i] += rg.a[i];
    oracles::Dense got = oracles::gram(rb.view());
    EXPECT_LE(oracles::frob_diff(expect, got), 1e-13 * oracles::frob(expect));
    // strict lower triangle is exactly zero
    for (index_t j = 0; j < 3; ++j)
        for (index_t i = j + 1; i < 3; ++i) EXPECT_EQ(rb(i, j), 0.0);
}

TEST(ReduceBlock, DimensionMismatch) {
    PaddedMatrix m(4, 3);
    TriangularFactor r(2);
    EXPECT_THROW(reduce_block(m.view(), r, BlockParams{}), DimensionMismatch);
}

TEST(Tsqr, OrthonormalEmbeddedIdentity) {
    PaddedMatrix x(100, 4);
    for (index_t j = 0; j < 4; ++j) x(j, j) = 1.0;
    TriangularFactor r = tsqr(x.view(), BlockParams::for_cols(4), 1);
    for (index_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(std::fabs(r(j, j)), 1.0, 1e-14);
        for (index_t i = 0; i < j; ++i) EXPECT_NEAR(r(i, j), 0.0, 1e-15);
    }
}

TEST(Tsqr, GramPreservationLarge) {
    oracles::Dense d = oracles::gaussian(100000, 8, 7);
    PaddedMatrix x = padded_from(d);
    TriangularFactor r = tsqr(x.view(), BlockParams::for_cols(8), 4);
    EXPECT_LE(gram_residual(x.view(), r), 1e-12);
}

TEST(Tsqr, RankDeficientDuplicateColumn) {
    oracles::Dense d = oracles::gaussian(10000, 5, 9);
    for (index_t i = 0; i < d.rows; ++i) d(i, 2) = d(i, 0); // column 3 = column 1
    PaddedMatrix x = padded_from(d);
    TriangularFactor r = tsqr(x.view(), BlockParams::for_cols(5), 2);
    for (double v : r.entries) EXPECT_TRUE(std::isfinite(v));
    SmallSVD s = small_svd(r);
    EXPECT_LE(s.sigma[4] / s.sigma[0], 1e-14); // numerical rank 4
    EXPECT_LE(gram_residual(x.view(), r), 1e-12);
}

TEST(Tsqr, ZeroAndShortInputs) {
    PaddedMatrix z(1000, 3);
    TriangularFactor r = tsqr(z.view(), BlockParams::for_cols(3), 2);
    for (double v : r.entries) EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(oracles::frob(oracles::from_view(r.view())), 1e-150);

    PaddedMatrix s(2, 3);
    EXPECT_THROW(tsqr(s.view(), BlockParams{}, 1), DimensionError);
}

TEST(Tsqr, GramPropertyRandomizedSweep) {
    // assorted sizes, workers and degeneracies; c <= 10 n bound on the
    // relative Gram residual
    std::mt19937_64 eng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        const index_t n = 32 + static_cast<index_t>(eng() % 20000);
        const index_t m = 1 + static_cast<index_t>(eng() % 16);
        oracles::Dense d = oracles::gaussian(n, std::min(n, m), trial);
        if (trial % 3 == 0 && d.cols > 1)
            for (index_t i = 0; i < n; ++i) d(i, d.cols - 1) = 0.0; // zero column
        PaddedMatrix x = padded_from(d);
        const int workers = 1 + static_cast<int>(eng() % 4);
        TriangularFactor r = tsqr(x.view(), BlockParams::for_cols(d.cols), workers);
        const double c = gram_residual(x.view(), r) / DBL_EPSILON;
        EXPECT_LE(c, 10.0 * static_cast<double>(n)) << "n=" << n << " m=" << m;
    }
}

TEST(Tsqr, DeterministicBitwise) {
    oracles::Dense d = oracles::gaussian(5000, 6, 5);
    PaddedMatrix x = padded_from(d);
    TriangularFactor a = tsqr(x.view(), BlockParams::for_cols(6), 3);
    TriangularFactor b = tsqr(x.view(), BlockParams::for_cols(6), 3);
    EXPECT_EQ(a.entries, b.entries);
}

TEST(Tsqr, AuxiliaryMemoryIndependentOfN) {
    BlockParams p = BlockParams::for_cols(8);
    TsqrStats small, large;
    oracles::Dense d1 = oracles::gaussian(10000, 8, 1);
    oracles::Dense d2 = oracles::gaussian(1000000, 8, 2);
    PaddedMatrix x1 = padded_from(d1), x2 = padded_from(d2);
    tsqr(x1.view(), p, 2, &small);
    tsqr(x2.view(), p, 2, &large);
    EXPECT_EQ(small.scratch_bytes, large.scratch_bytes);
    // O(workers * (n_b + m) * m): block + reflector buffers per worker, plus
    // one m-sized combine workspace
    EXPECT_LE(large.scratch_bytes, 2 * 2 * (p.n_b + 8 + 1) * 8 * 8 + 4096);
}

TEST(Tsqr, ReflectorNormInstrumentation) {
    BlockParams p = BlockParams::for_cols(4);
    p.validate_reflectors = true;
    TsqrStats stats;
    oracles::Dense d = oracles::gaussian(10000, 4, 12);
    for (index_t i = 0; i < d.rows; ++i) d(i, 1) = 0.0;
    for (index_t i = 0; i < d.rows; ++i) d(i, 3) = 1e-200 * d(i, 0); // tiny column
    PaddedMatrix x = padded_from(d);
    tsqr(x.view(), p, 2, &stats);
    EXPECT_LE(stats.max_reflector_dev, 1e-12);
}

TEST(CombineFactors, SingleAndGramSum) {
    TriangularFactor a(2);
    a(0, 0) = 1;
    a(1, 1) = 1;
    TriangularFactor single = combine_factors({a}, BlockParams{});
    EXPECT_EQ(single.entries, a.entries);

    TriangularFactor c = combine_factors({a, a}, BlockParams{});
    oracles::Dense g = oracles::gram(c.view());
    EXPECT_NEAR(g(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(g(1, 1), 2.0, 1e-15);
    EXPECT_NEAR(g(0, 1), 0.0, 1e-15);
}

TEST(CombineFactors, FourRandomGramSum) {
    std::vector<TriangularFactor> parts;
    oracles::Dense expect(4, 4);
    for (int p = 0; p < 4; ++p) {
        oracles::Dense t = oracles::gaussian(4, 4, 100 + p);
        TriangularFactor r(4);
        for (index_t j = 0; j < 4; ++j)
            for (index_t i = 0; i <= j; ++i) r(i, j) = t(i, j);
        oracles::Dense g = oracles::gram(r.view());
        for (std::size_t i = 0; i < expect.a.size(); ++i) expect.a[i] += g.a[i];
        parts.push_back(std::move(r));
    }
    TriangularFactor c = combine_factors(parts, BlockParams{});
    EXPECT_LE(oracles::frob_diff(oracles::gram(c.view()), expect), 1e-13 * oracles::frob(expect));

    parts.push_back(TriangularFactor(3));
    EXPECT_THROW(combine_factors(parts, BlockParams{}), DimensionMismatch);
}

TEST(BlockParams, SizingRule) {
    // largest multiple of 8 with (n_b + m) m 8 <= 256 KiB, clamped to [16, 4096]
    EXPECT_EQ(BlockParams::for_cols(1).n_b, 4096);
    EXPECT_EQ(BlockParams::for_cols(16).n_b, 2032);
    EXPECT_GE(BlockParams::for_cols(4096).n_b, 16);
    const index_t m = 100;
    const index_t nb = BlockParams::for_cols(m).n_b;
    EXPECT_LE((nb + m) * m * 8, 256 * 1024);
    EXPECT_GT((nb + 8 + m) * m * 8, 256 * 1024);
}
