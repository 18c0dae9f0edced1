#include <gtest/gtest.h>

#include <cmath>

#include "kronhom/lattice.hpp"
#include "kronhom/rng.hpp"
#include "support/oracles.hpp"

using namespace kronhom;

namespace {

LatticeConfig base(int d, int L) {
    LatticeConfig c;
    c.d = d;
    c.L = L;
    c.n0 = 4;
    c.alpha = {1, 4};
    c.lambda = 0.4;
    return c;
}

}  // namespace

TEST(Grid, MultiIndexBigEndian) {
    EXPECT_EQ(multi_index(MultiIndex{0, 0, 0}, 3, 4), 0u);
    EXPECT_EQ(multi_index(MultiIndex{1, 2, 3}, 3, 4), 27u);
    EXPECT_THROW(multi_index(MultiIndex{4, 0, 0}, 3, 4), SizeError);
}

TEST(Grid, UnravelRoundTrip) {
    for (int d : {2, 3})
        for (std::size_t lin = 0; lin < (d == 2 ? 25u : 125u); ++lin)
            EXPECT_EQ(multi_index(unravel_index(lin, d, 5), d, 5), lin);
}

TEST(LatticeConfig, ValidationNamesKey) {
    auto c = base(2, 4);
    c.lambda = 1.5;
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "lambda");
    }
    c = base(2, 4);
    c.alpha = {3, 16};  // k = 1.5
    EXPECT_THROW(c.validate(), ConfigError);
    c = base(2, 4);
    c.n0 = 6;
    EXPECT_THROW(c.validate(), ConfigError);
    c = base(2, 4);
    c.contrast.betas = {0.9};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(LatticeConfig, SubcellGeometry) {
    auto c = base(2, 4);
    EXPECT_EQ(c.n(), 16u);
    EXPECT_EQ(c.subcell_intervals(), 2);
    EXPECT_EQ(c.subcell_offset(), 1);
    c.n0 = 8;
    EXPECT_EQ(c.subcell_intervals(), 4);
    EXPECT_EQ(c.subcell_offset(), 2);
}

TEST(Rational, Parse) {
    EXPECT_EQ(parse_rational("1/4"), (Rational{1, 4}));
    EXPECT_EQ(parse_rational("2/8"), (Rational{1, 4}));
    EXPECT_EQ(parse_rational("0.5"), (Rational{1, 2}));
    EXPECT_THROW(parse_rational("x"), ConfigError);
    EXPECT_THROW(parse_rational("1/0"), ConfigError);
}

TEST(Sample, Deterministic) {
    const auto c = base(3, 4);
    EXPECT_EQ(sample_realization(c, 42), sample_realization(c, 42));
    EXPECT_NE(sample_realization(c, 42).covered, sample_realization(c, 43).covered);
}

TEST(Sample, CoverageZeroIsEmpty) {
    auto c = base(2, 8);
    c.coverage_prob = 0.0;
    const auto r = sample_realization(c, 1);
    EXPECT_EQ(r.K(), 0u);
    for (double v : coefficient_grid(r).values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(covered_volume_fraction(r), 0.0);
}

TEST(Sample, MeanKWithinThreeSigma) {
    const auto c = base(3, 8);
    const double cells = 512.0, p = 0.5;
    double sum = 0.0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) sum += static_cast<double>(sample_realization(c, derive_seed(7, s)).K());
    const double mean = sum / seeds;
    const double sigma_of_mean = std::sqrt(cells * p * (1 - p) / seeds);
    EXPECT_NEAR(mean, cells * p, 3.0 * sigma_of_mean);
}

TEST(Sample, PerCellCoverageChiSquare) {
    // 16 cells x 1000 seeds; per-cell covered counts against Binomial(1000, p).
    auto c = base(2, 4);
    c.coverage_prob = 0.3;
    const int seeds = 1000;
    std::vector<int> hits(16, 0);
    for (int s = 0; s < seeds; ++s)
        for (const auto& cell : sample_realization(c, derive_seed(99, s)).covered)
            ++hits[cell_linear_index(cell, 2, 4)];
    const double expect = seeds * c.coverage_prob;
    double chi2 = 0.0;
    for (int h : hits) {
        chi2 += (h - expect) * (h - expect) / expect;
        chi2 += (h - expect) * (h - expect) / (seeds - expect);
    }
    // 16 degrees of freedom, 1% upper critical value.
    EXPECT_LT(chi2, 32.0);
}

TEST(Sample, TwoValueAndLayered) {
    auto c = base(2, 8);
    c.coverage_prob = 1.0;
    c.contrast = {ContrastKind::two_value, {0.3, 0.1}};
    const auto r = sample_realization(c, 5);
    int low = 0;
    for (double b : r.cell_beta) {
        EXPECT_TRUE(b == 0.3 || b == 0.1);
        low += b == 0.1;
    }
    EXPECT_GT(low, 10);
    EXPECT_LT(low, 54);
    c.contrast = {ContrastKind::layered, {0.5, 0.2}};
    const auto q = sample_realization(c, 5);
    for (std::size_t k = 0; k < q.K(); ++k) EXPECT_EQ(q.cell_beta[k], q.covered[k][1] % 2 == 0 ? 0.5 : 0.2);
}

TEST(CoefficientGrid, SingleCellInterfaceValues) {
    auto c = base(2, 1);
    c.n0 = 8;
    c.alpha = {1, 4};  // k = 4, window nodes 2..6
    c.contrast.betas = {0.6};
    Realization r{c, {{0, 0, 0}}, {0.6}, 0};
    const auto g = coefficient_grid(r);
    EXPECT_DOUBLE_EQ(g.at({4, 4, 0}), 0.6);   // interior
    EXPECT_DOUBLE_EQ(g.at({2, 4, 0}), 0.3);   // edge
    EXPECT_DOUBLE_EQ(g.at({2, 2, 0}), 0.15);  // corner
    EXPECT_DOUBLE_EQ(g.at({6, 6, 0}), 0.15);
    EXPECT_DOUBLE_EQ(g.at({1, 4, 0}), 0.0);
}

TEST(CoefficientGrid, ThreeDimensionalFractions) {
    auto c = base(3, 1);
    c.n0 = 8;
    c.contrast.betas = {0.6};
    Realization r{c, {{0, 0, 0}}, {0.6}, 0};
    const auto g = coefficient_grid(r);
    EXPECT_DOUBLE_EQ(g.at({4, 4, 4}), 0.6);
    EXPECT_DOUBLE_EQ(g.at({2, 4, 4}), 0.3);
    EXPECT_DOUBLE_EQ(g.at({2, 2, 4}), 0.15);
    EXPECT_DOUBLE_EQ(g.at({2, 2, 2}), 0.075);
}

TEST(CoefficientGrid, FullCoverageIsConstant) {
    auto c = base(3, 3);
    c.alpha = {1, 2};
    c.coverage_prob = 1.0;
    const auto r = sample_realization(c, 3);
    EXPECT_EQ(r.K(), 27u);
    for (double v : coefficient_grid(r).values) EXPECT_DOUBLE_EQ(v, 0.6);
    EXPECT_DOUBLE_EQ(covered_volume_fraction(r), 1.0);
}

TEST(CoefficientGrid, VolumeFraction) {
    auto c = base(2, 4);
    Realization r{c, {}, {}, 0};
    for (int k = 0; k < 8; ++k) {
        r.covered.push_back(cell_from_linear(2 * k, 2, 4));
        r.cell_beta.push_back(0.6);
    }
    EXPECT_DOUBLE_EQ(covered_volume_fraction(r), 1.0 / 8.0);
}

TEST(CoefficientGridProperty, BoundsAndInteriorValue) {
    oracle::Gen gen(11);
    for (int trial = 0; trial < 40; ++trial) {
        const auto c = gen.lattice(gen.integer(2, 3));
        const auto r = sample_realization(c, gen.u64());
        const auto g = coefficient_grid(r);
        const double top = c.max_beta();
        for (double v : g.values) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, top + 1e-15);
        }
        const auto field = oracle::element_beta(r);
        EXPECT_EQ(field, element_field(r));
    }
}

TEST(CoefficientGridProperty, CellShiftIsNodeShift) {
    oracle::Gen gen(12);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = gen.integer(2, 3);
        auto c = gen.lattice(d, 4);
        const auto r = sample_realization(c, gen.u64());
        CellIndex s{0, 0, 0};
        for (int l = 0; l < d; ++l) s[l] = gen.integer(0, c.L - 1);
        const auto g0 = coefficient_grid(r);
        const auto g1 = coefficient_grid(shift_cells(r, s));
        const std::size_t n = c.n();
        for (std::size_t lin = 0; lin < g0.values.size(); ++lin) {
            auto mu = unravel_index(lin, d, n);
            for (int l = 0; l < d; ++l) mu[l] = (mu[l] + static_cast<std::size_t>(s[l] * c.n0)) % n;
            ASSERT_EQ(g0.values[lin], g1.at(mu));
        }
    }
}

TEST(Rng, CounterIndependentOfOrder) {
    const CounterRng a(5, 0), b(5, 0);
    std::vector<double> fwd, bwd(100);
    for (int i = 0; i < 100; ++i) fwd.push_back(a.uniform(i));
    for (int i = 99; i >= 0; --i) bwd[i] = b.uniform(i);
    EXPECT_EQ(fwd, bwd);
    for (double v : fwd) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}
