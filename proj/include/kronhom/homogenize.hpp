#pragma once

// Corrector problems, per-realization homogenized matrices and Monte-Carlo
// ensembles with deviation-law fits.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <span>
#include <thread>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/lattice.hpp"
#include "kronhom/operators.hpp"
#include "kronhom/rng.hpp"
#include "kronhom/solver.hpp"

namespace kronhom {

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Contrast part of the edge weights along `axis`, indexed by the lower end
/// node: the mean of beta over the 2^{d-1} elements sharing that edge. These
/// are exactly the off-diagonal weights of the Kronecker stochastic part.
inline std::vector<double> edge_weights(const Realization& r, int axis) {
    const auto shape = r.config.shape();
    const int d = shape.d;
    const std::size_t n = shape.n;
    if (axis < 0 || axis >= d) throw ConfigError("direction", "direction out of range");
    const auto field = element_field(r);
    std::vector<double> w(shape.size(), 0.0);
    const double weight = 1.0 / static_cast<double>(1 << (d - 1));
    for (std::size_t lin = 0; lin < w.size(); ++lin) {
        const MultiIndex mu = unravel_index(lin, d, n);
        double acc = 0.0;
        for (int corner = 0; corner < (1 << d); ++corner) {
            if (corner & (1 << axis)) continue;
            MultiIndex e = mu;
            for (int l = 0; l < d; ++l)
                if (corner & (1 << l)) e[l] = (mu[l] + n - 1) % n;
            acc += field[multi_index(e, d, n)];
        }
        w[lin] = acc * weight;
    }
    return w;
}

/// Load vector of the corrector problem in direction `axis` (0-based):
/// f(mu) = h^{d-1} (w(mu) - w(mu - e_axis)) with w the contrast edge weights.
/// Sums to zero exactly up to roundoff.
inline std::vector<double> corrector_rhs(const Realization& r, int axis) {
    const auto shape = r.config.shape();
    const int d = shape.d;
    const std::size_t n = shape.n;
    if (axis < 0 || axis >= d) throw ConfigError("direction", "direction out of range");
    std::vector<double> f(shape.size(), 0.0);
    if (r.K() == 0) return f;
    const auto w = edge_weights(r, axis);
    const double h = 1.0 / static_cast<double>(n);
    const double scale = std::pow(h, d - 1);
    for (std::size_t lin = 0; lin < f.size(); ++lin) {
        MultiIndex prev = unravel_index(lin, d, n);
        prev[axis] = (prev[axis] + n - 1) % n;
        f[lin] = scale * (w[lin] - w[multi_index(prev, d, n)]);
    }
    return f;
}

struct PhaseTimes {
    double assembly = 0.0;  ///< seconds
    double rhs = 0.0;
    double solve = 0.0;
};

struct HomogenizedMatrix {
    int d = 2;
    Matrix3 a{};  ///< entries (i, j), i, j < d
    std::uint64_t seed = 0;
    int L = 0;
    double lambda = 0.0;
    std::size_t K = 0;
    std::array<int, 3> iterations{0, 0, 0};
    double mean_coefficient = 0.0;  ///< h^d * sum of coefficient_grid
    PhaseTimes times;

    double asymmetry() const {
        double m = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m = std::max(m, std::abs(a[i][j] - a[j][i]));
        return m;
    }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// a_ii = lambda + int(beta a_hat) - <f_i, u_i>,  a_ij = -<f_j, u_i>, where
/// h^{d-2} A u_i = f_i. Uses a prebuilt preconditioner for A's grid.
inline HomogenizedMatrix homogenized_matrix(const Realization& r, const SolveOptions& opts, const Preconditioner& P) {
    const auto& c = r.config;
    c.validate();
    const int d = c.d;
    const std::size_t n = c.n();
    if (P.size() != c.shape().size()) throw SizeError("homogenized_matrix: preconditioner grid mismatch");

    HomogenizedMatrix out;
    out.d = d;
    out.seed = r.seed;
    out.L = c.L;
    out.lambda = c.lambda;
    out.K = r.K();

    auto t0 = std::chrono::steady_clock::now();
    const auto A = assemble_stiffness(r);
    out.times.assembly = detail::seconds_since(t0);

    const double h = 1.0 / static_cast<double>(n);
    const double hd = std::pow(h, d);
    const double stiff_scale = std::pow(h, d - 2);

    t0 = std::chrono::steady_clock::now();
    const auto cg = coefficient_grid(r);
    double total = 0.0;
    for (double v : cg.values) total += v;
    out.mean_coefficient = hd * total;
    std::vector<std::vector<double>> f(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) f[i] = corrector_rhs(r, i);
    out.times.rhs = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> u(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        if (r.K() == 0) {
            u[i].assign(A.size(), 0.0);
            continue;
        }
        std::vector<double> rhs(f[i]);
        for (double& v : rhs) v /= stiff_scale;
        auto [sol, rep] = pcg_solve(A, rhs, P, opts);
        if (!rep.converged) {
            throw SolveFailure("homogenized_matrix: corrector solve in direction " + std::to_string(i + 1) +
                                   " did not converge in " + std::to_string(rep.iterations) +
                                   " iterations (residual " + std::to_string(rep.final_residual) + ")",
                               r.seed, c.L);
        }
        out.iterations[i] = rep.iterations;
        u[i] = std::move(sol);
    }
    out.times.solve = detail::seconds_since(t0);

    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double pair = r.K() == 0 ? 0.0 : dot(f[j], u[i]);
            out.a[i][j] = (i == j ? c.lambda + out.mean_coefficient : 0.0) - pair;
        }
    return out;
}

inline HomogenizedMatrix homogenized_matrix(const Realization& r, const SolveOptions& opts) {
    return homogenized_matrix(r, opts, Preconditioner::make(opts, r.config.shape()));
}

struct RealizationRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    HomogenizedMatrix result;
};

struct EnsembleOptions {
    unsigned workers = 1;
    bool skip_failed = false;
    /// Overrides the sub-seed of realization m (tests only).
    std::function<std::uint64_t(std::size_t)> seed_for;
};

struct EnsembleStats {
    int d = 2;
    int L = 0;
    std::size_t M = 0;  ///< requested realizations
    double lambda = 0.0;
    std::uint64_t master_seed = 0;
    Matrix3 mean{};
    Matrix3 sigma{};
    std::size_t used = 0;  ///< realizations entering the statistics
    std::vector<RealizationRecord> records;

    std::size_t failed() const noexcept { return M - used; }
};

/// Fixed-order mean and sample standard deviation (M - 1 normalization)
/// over the non-failed records.
inline void reduce_statistics(EnsembleStats& s) {
    s.mean = {};
    s.sigma = {};
    s.used = 0;
    for (const auto& rec : s.records) {
        if (rec.failed) continue;
        ++s.used;
        for (int i = 0; i < s.d; ++i)
            for (int j = 0; j < s.d; ++j) s.mean[i][j] += rec.result.a[i][j];
    }
    if (s.used == 0) throw InsufficientData("ensemble: no successful realizations");
    for (int i = 0; i < s.d; ++i)
        for (int j = 0; j < s.d; ++j) s.mean[i][j] /= static_cast<double>(s.used);
    if (s.used < 2) return;
    for (const auto& rec : s.records) {
        if (rec.failed) continue;
        for (int i = 0; i < s.d; ++i)
            for (int j = 0; j < s.d; ++j) {
                const double e = rec.result.a[i][j] - s.mean[i][j];
                s.sigma[i][j] += e * e;
            }
    }
    for (int i = 0; i < s.d; ++i)
        for (int j = 0; j < s.d; ++j) s.sigma[i][j] = std::sqrt(s.sigma[i][j] / static_cast<double>(s.used - 1));
}

/// M independent realizations with sub-seeds derive_seed(master_seed, m).
/// Results do not depend on the worker count.
inline EnsembleStats ensemble_run(const LatticeConfig& config, std::size_t M, std::uint64_t master_seed,
                                  const SolveOptions& opts, const EnsembleOptions& eopts = {}) {
    config.validate();
    opts.validate();
    if (M < 2) throw ConfigError("M", "ensemble needs at least two realizations");

    EnsembleStats s;
    s.d = config.d;
    s.L = config.L;
    s.M = M;
    s.lambda = config.lambda;
    s.master_seed = master_seed;
    s.records.resize(M);

    const auto P = Preconditioner::make(opts, config.shape());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t m = next++; m < M; m = next++) {
            auto& rec = s.records[m];
            rec.index = m;
            rec.seed = eopts.seed_for ? eopts.seed_for(m) : derive_seed(master_seed, m);
            try {
                rec.result = homogenized_matrix(sample_realization(config, rec.seed), opts, P);
            } catch (const Error& e) {
                rec.failed = true;
                rec.error = e.what();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(eopts.workers, static_cast<unsigned>(M)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (!eopts.skip_failed) {
        for (const auto& rec : s.records)
            if (rec.failed)
                throw SolveFailure("ensemble: realization " + std::to_string(rec.index) + " failed: " + rec.error,
                                   rec.seed, config.L);
    }
    reduce_statistics(s);
    return s;
}

struct DeviationFit {
    std::vector<double> L;
    std::vector<double> sigma;
    double slope = 0.0;
    double intercept = 0.0;  ///< log sigma at L = 1
    double slope_stderr = 0.0;
    double expected_slope = 0.0;  ///< -d/2
};

/// Least-squares fit of log sigma = intercept + slope * log L.
inline DeviationFit fit_power_law(std::span<const double> L, std::span<const double> sigma, int d) {
    if (L.size() != sigma.size()) throw SizeError("fit_power_law: length mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < L.size(); ++i) {
        if (!(L[i] > 0.0) || !(sigma[i] > 0.0))
            throw InsufficientData("fit_power_law: L and sigma must be positive");
        if (std::find(xs.begin(), xs.end(), std::log(L[i])) != xs.end())
            throw InsufficientData("fit_power_law: duplicate L value");
        xs.push_back(std::log(L[i]));
        ys.push_back(std::log(sigma[i]));
    }
    if (xs.size() < 3) throw InsufficientData("fit_power_law: at least three distinct L values required");
    const double k = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    DeviationFit fit;
    fit.L.assign(L.begin(), L.end());
    fit.sigma.assign(sigma.begin(), sigma.end());
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
        sse += e * e;
    }
    fit.slope_stderr = std::sqrt(sse / (k - 2.0) / sxx);
    fit.expected_slope = -0.5 * d;
    if (!std::isfinite(fit.slope)) throw NumericalBreakdown("fit_power_law: non-finite slope");
    return fit;
}

/// Fit of sigma_{ij} against L over the given ensembles (0-based entry).
inline DeviationFit deviation_slope(const std::vector<EnsembleStats>& stats, int i = 0, int j = 0) {
    if (stats.empty()) throw InsufficientData("deviation_slope: no ensembles");
    const int d = stats.front().d;
    if (i < 0 || j < 0 || i >= d || j >= d) throw ConfigError("entry", "matrix entry out of range");
    std::vector<double> L, sigma;
    for (const auto& s : stats) {
        if (s.d != d) throw SizeError("deviation_slope: mixed dimensions");
        L.push_back(static_cast<double>(s.L));
        sigma.push_back(s.sigma[i][j]);
    }
    return fit_power_law(L, sigma, d);
}

}  // namespace kronhom
