#include <gtest/gtest.h>

#include <cmath>

#include "kronhom/homogenize.hpp"
#include "support/oracles.hpp"

using namespace kronhom;

namespace {

LatticeConfig base(int d, int L) {
    LatticeConfig c;
    c.d = d;
    c.L = L;
    c.n0 = 4;
    c.lambda = 0.4;
    return c;
}

double l1(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

}  // namespace

TEST(CorrectorRhs, SumsToZero) {
    oracle::Gen gen(51);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = gen.integer(2, 3);
        const auto r = sample_realization(gen.lattice(d, 3), gen.u64());
        for (int axis = 0; axis < d; ++axis) {
            const auto f = corrector_rhs(r, axis);
            double s = 0.0;
            for (double v : f) s += v;
            EXPECT_LE(std::abs(s), 1e-13 * std::max(l1(f), 1e-300));
        }
    }
}

TEST(CorrectorRhs, EmptyAndBadAxis) {
    auto c = base(2, 4);
    c.coverage_prob = 0.0;
    const auto r = sample_realization(c, 1);
    for (double v : corrector_rhs(r, 0)) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(corrector_rhs(r, 2), ConfigError);
    EXPECT_THROW(corrector_rhs(r, -1), ConfigError);
}

TEST(CorrectorRhs, SingleCellAntisymmetricUnderReflection) {
    auto c = base(2, 1);
    c.n0 = 8;
    Realization r{c, {{0, 0, 0}}, {0.6}, 0};
    const auto f = corrector_rhs(r, 0);
    const std::size_t n = c.n();
    // The sub-cell window 2..6 is symmetric about node 4; node i reflects to 8 - i.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t ir = (8 - i + n) % n;
            EXPECT_NEAR(f[multi_index({i, j, 0}, 2, n)], -f[multi_index({ir, j, 0}, 2, n)], 1e-15);
        }
}

TEST(CorrectorRhs, MatchesStochasticPartTimesCoordinate) {
    // f_i = -h^{d-1} * (B x_i) for the linear coordinate x_i away from the wrap seam,
    // where B is the contrast part of the stiffness.
    auto c = base(2, 2);
    c.n0 = 8;
    c.coverage_prob = 1.0;
    c.alpha = {1, 4};
    const auto r = sample_realization(c, 3);
    const auto B = assemble_stochastic_part(r);
    const std::size_t n = c.n();
    std::vector<double> x(B.size());
    for (std::size_t lin = 0; lin < x.size(); ++lin) x[lin] = static_cast<double>(unravel_index(lin, 2, n)[0]);
    const auto Bx = B(x);
    const auto f = corrector_rhs(r, 0);
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t lin = 0; lin < x.size(); ++lin) {
        const auto mu = unravel_index(lin, 2, n);
        if (mu[0] == 0 || mu[0] == n - 1) continue;
        EXPECT_NEAR(f[lin], -h * Bx[lin], 1e-14);
    }
}

TEST(Homogenized, NoContrastGivesLambdaIdentity) {
    for (int d : {2, 3}) {
        auto c = base(d, 4);
        c.coverage_prob = 0.0;
        const auto h = homogenized_matrix(sample_realization(c, 1), SolveOptions::for_dimension(d));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) EXPECT_NEAR(h.a[i][j], i == j ? 0.4 : 0.0, 1e-10);
    }
}

TEST(Homogenized, FullCoverageGivesIdentity) {
    for (int d : {2, 3}) {
        auto c = base(d, 4);
        c.alpha = {1, 2};
        c.coverage_prob = 1.0;
        const auto h = homogenized_matrix(sample_realization(c, 1), SolveOptions::for_dimension(d));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) EXPECT_NEAR(h.a[i][j], i == j ? 1.0 : 0.0, 1e-10);
        EXPECT_NEAR(h.mean_coefficient, 0.6, 1e-13);
    }
}

TEST(Homogenized, LaminateMeans) {
    for (int d : {2, 3}) {
        auto c = base(d, 4);
        c.alpha = {1, 2};
        c.coverage_prob = 1.0;
        c.contrast = {ContrastKind::layered, {0.55, 0.1}};
        const auto r = sample_realization(c, 1);
        auto o = SolveOptions::for_dimension(d);
        o.tolerance = 1e-10;
        const auto h = homogenized_matrix(r, o);
        const auto [harmonic, arithmetic] = oracle::laminate_means(r);
        for (int i = 0; i < d - 1; ++i) EXPECT_NEAR(h.a[i][i], arithmetic, 1e-8);
        EXPECT_NEAR(h.a[d - 1][d - 1], harmonic, 1e-8);
        EXPECT_LE(h.asymmetry(), 1e-8);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                if (i == j) continue;
                EXPECT_NEAR(h.a[i][j], 0.0, 1e-8);
            }
    }
}

TEST(HomogenizedProperty, BoundsAndSymmetry) {
    oracle::Gen gen(52);
    for (int trial = 0; trial < 25; ++trial) {
        const int d = gen.integer(2, 3);
        const auto c = gen.lattice(d, 3);
        auto o = SolveOptions::for_dimension(d);
        const auto h = homogenized_matrix(sample_realization(c, gen.u64()), o);
        const double upper = c.lambda + c.max_beta();
        for (int i = 0; i < d; ++i) {
            EXPECT_GE(h.a[i][i], c.lambda - 1e-6);
            EXPECT_LE(h.a[i][i], upper + 1e-6);
        }
        EXPECT_LE(h.asymmetry(), 10 * o.tolerance);
    }
}

TEST(HomogenizedProperty, ShiftInvariance) {
    oracle::Gen gen(53);
    for (int trial = 0; trial < 8; ++trial) {
        const int d = gen.integer(2, 3);
        const auto c = gen.lattice(d, 3);
        auto o = SolveOptions::for_dimension(d);
        o.tolerance = 1e-10;
        const auto r = sample_realization(c, gen.u64());
        CellIndex s{0, 0, 0};
        for (int l = 0; l < d; ++l) s[l] = gen.integer(0, c.L - 1);
        const auto h0 = homogenized_matrix(r, o);
        const auto h1 = homogenized_matrix(shift_cells(r, s), o);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) EXPECT_NEAR(h0.a[i][j], h1.a[i][j], 1e-8);
    }
}

TEST(Homogenized, NonConvergenceRaisesSolveFailure) {
    auto o = SolveOptions::for_dimension(2);
    o.max_iter = 1;
    const auto r = sample_realization(base(2, 8), 9);
    try {
        homogenized_matrix(r, o);
        FAIL();
    } catch (const SolveFailure& e) {
        EXPECT_EQ(e.seed(), 9u);
        EXPECT_EQ(e.L(), 8);
    }
}

TEST(Ensemble, DeterministicAcrossWorkerCounts) {
    const auto c = base(2, 4);
    const auto o = SolveOptions::for_dimension(2);
    EnsembleOptions one, three;
    three.workers = 3;
    const auto s1 = ensemble_run(c, 12, 2024, o, one);
    const auto s3 = ensemble_run(c, 12, 2024, o, three);
    ASSERT_EQ(s1.records.size(), s3.records.size());
    for (std::size_t m = 0; m < s1.records.size(); ++m) {
        EXPECT_EQ(s1.records[m].seed, derive_seed(2024, m));
        EXPECT_EQ(s1.records[m].seed, s3.records[m].seed);
        EXPECT_EQ(s1.records[m].result.a, s3.records[m].result.a);
    }
    EXPECT_EQ(s1.mean, s3.mean);
    EXPECT_EQ(s1.sigma, s3.sigma);
    EXPECT_EQ(s1.used, 12u);
    EXPECT_GT(s1.sigma[0][0], 0.0);
}

TEST(Ensemble, IdenticalSeedsHaveZeroSpread) {
    EnsembleOptions e;
    e.seed_for = [](std::size_t) { return std::uint64_t{77}; };
    const auto s = ensemble_run(base(2, 4), 5, 1, SolveOptions::for_dimension(2), e);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_LE(s.sigma[i][j], 1e-15);
}

TEST(Ensemble, RejectsTooFewAndHandlesFailures) {
    EXPECT_THROW(ensemble_run(base(2, 4), 1, 1, SolveOptions{}), ConfigError);
    auto o = SolveOptions::for_dimension(2);
    o.max_iter = 1;
    EXPECT_THROW(ensemble_run(base(2, 8), 3, 1, o), SolveFailure);
    EnsembleOptions e;
    e.skip_failed = true;
    EXPECT_THROW(ensemble_run(base(2, 8), 3, 1, o, e), InsufficientData);

    EnsembleStats s;
    s.d = 2;
    s.M = 3;
    s.records.resize(3);
    s.records[0].result.a = {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}}};
    s.records[1].failed = true;
    s.records[2].result.a = {{{3.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}}};
    reduce_statistics(s);
    EXPECT_EQ(s.used, 2u);
    EXPECT_EQ(s.failed(), 1u);
    EXPECT_DOUBLE_EQ(s.mean[0][0], 2.0);
    EXPECT_DOUBLE_EQ(s.sigma[0][0], std::sqrt(2.0));
}

TEST(DeviationFit, SyntheticPowerLaw) {
    const std::vector<double> L{4, 8, 16, 32};
    std::vector<double> sigma;
    for (double l : L) sigma.push_back(0.3 / l);
    const auto fit = fit_power_law(L, sigma, 2);
    EXPECT_NEAR(fit.slope, -1.0, 1e-12);
    EXPECT_NEAR(std::exp(fit.intercept), 0.3, 1e-12);
    EXPECT_NEAR(fit.slope_stderr, 0.0, 1e-12);
    EXPECT_EQ(fit.expected_slope, -1.0);

    oracle::Gen gen(54);
    for (int trial = 0; trial < 20; ++trial) {
        const double p = gen.real(-3.0, 0.0), c = gen.real(0.01, 5.0);
        std::vector<double> s;
        for (double l : L) s.push_back(c * std::pow(l, p));
        EXPECT_NEAR(fit_power_law(L, s, 3).slope, p, 1e-10);
    }
}

TEST(DeviationFit, NeedsThreeDistinctLevels) {
    const std::vector<double> two{4, 8}, s2{0.1, 0.05};
    EXPECT_THROW(fit_power_law(two, s2, 2), InsufficientData);
    const std::vector<double> dup{4, 4, 8}, s3{0.1, 0.1, 0.05};
    EXPECT_THROW(fit_power_law(dup, s3, 2), InsufficientData);
    const std::vector<double> three{4, 8, 16}, zero{0.1, 0.0, 0.05};
    EXPECT_THROW(fit_power_law(three, zero, 2), InsufficientData);
}
