#pragma once

// Low Kronecker rank approximation of the pseudo-inverse periodic Laplacian.
//
// The reciprocal eigensum 1/(lambda_i + lambda_j + lambda_k) is written via
// the Laplace transform 1/x = int_0^inf exp(-x t) dt and discretized by
// sinc quadrature after t = exp(s):
//
//     1/x ~= sum_q w_q exp(-t_q x),   t_q = exp(s_q),  w_q = h exp(s_q),
//
// with s_q equispaced. Every term is separable in (i, j, k), giving a
// canonical tensor whose factors are w_q^{1/d} exp(-t_q lambda_i). One extra
// rank-1 term zeroes the origin entry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/fft.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/rng.hpp"
#include "kronhom/spectral.hpp"

namespace kronhom {

struct ExpSumQuadrature {
    std::vector<double> nodes;    ///< t_q > 0
    std::vector<double> weights;  ///< w_q > 0
    double a = 0.0, b = 0.0;
    double eps = 0.0;
    double achieved = 0.0;  ///< max relative error |1 - x * sum| on the test grid

    std::size_t rank() const noexcept { return nodes.size(); }

    double operator()(double x) const {
        double s = 0.0;
        for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * std::exp(-nodes[q] * x);
        return s;
    }
};

namespace detail {

/// Sinc rule with m nodes for 1/x on [1, ratio], relative accuracy target eps.
inline ExpSumQuadrature sinc_rule(double ratio, double eps, std::size_t m) {
    // Tails: small t costs at most ratio * exp(s_min) relative error,
    // large t at most exp(-exp(s_max)) for x >= 1.
    const double s_min = std::log(eps / (4.0 * ratio));
    const double s_max = std::log(std::log(4.0 / eps));
    const double h = m > 1 ? (s_max - s_min) / static_cast<double>(m - 1) : 1.0;
    ExpSumQuadrature q;
    for (std::size_t j = 0; j < m; ++j) {
        const double s = m > 1 ? s_min + h * static_cast<double>(j) : 0.0;
        q.nodes.push_back(std::exp(s));
        q.weights.push_back(h * std::exp(s));
    }
    return q;
}

inline std::vector<double> test_grid(double ratio) {
    constexpr std::size_t points = 2000;
    std::vector<double> x(points);
    const double lr = std::log(ratio);
    for (std::size_t i = 0; i < points; ++i)
        x[i] = std::exp(lr * static_cast<double>(i) / static_cast<double>(points - 1));
    x.back() = ratio;
    return x;
}

inline double max_relative_error(const ExpSumQuadrature& q, const std::vector<double>& grid) {
    double e = 0.0;
    for (double x : grid) e = std::max(e, std::abs(1.0 - x * q(x)));
    return e;
}

}  // namespace detail

inline constexpr std::size_t kDefaultRankCap = 256;

/// Exponential sum with sup_{x in [a,b]} |1 - x * sum_q w_q exp(-t_q x)| <= eps,
/// hence |1/x - sum| <= eps / a. The node count is the smallest that meets
/// eps on a dense log-spaced test grid: doubling until success, then bisection.
inline ExpSumQuadrature exp_sum_quadrature(double a, double b, double eps, std::size_t max_rank = kDefaultRankCap) {
    if (!(a > 0.0 && b > a)) throw ConfigError("interval", "exp_sum_quadrature needs 0 < a < b");
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("eps_rank", "tolerance must lie in (0, 1)");
    const double ratio = b / a;
    const auto grid = detail::test_grid(ratio);
    auto attempt = [&](std::size_t m) {
        auto q = detail::sinc_rule(ratio, eps, m);
        q.achieved = detail::max_relative_error(q, grid);
        return q;
    };
    std::size_t hi = 2;
    ExpSumQuadrature best = attempt(hi);
    while (best.achieved > eps) {
        if (hi >= max_rank) {
            throw ApproximationError("exp_sum_quadrature: tolerance not reached within rank " +
                                         std::to_string(max_rank),
                                     best.achieved);
        }
        hi = std::min(2 * hi, max_rank);
        best = attempt(hi);
    }
    std::size_t lo = hi / 2;  // fails (or is below the first probe)
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        auto q = attempt(mid);
        if (q.achieved <= eps) {
            hi = mid;
            best = std::move(q);
        } else {
            lo = mid;
        }
    }
    // Undo the scaling x' = x / a.
    for (std::size_t j = 0; j < best.rank(); ++j) {
        best.nodes[j] /= a;
        best.weights[j] /= a;
    }
    best.a = a;
    best.b = b;
    best.eps = eps;
    return best;
}

/// Canonical tensor sum_r prod_l u_{r,l}[i_l] on an n^d grid.
class CanonicalTensor {
public:
    CanonicalTensor(int d, std::size_t n) : d_(d), n_(n) {}

    int d() const noexcept { return d_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t rank() const noexcept { return factors_.size(); }

    /// factors[l] has n entries, l = 0..d-1.
    void add_term(std::vector<std::vector<double>> factors) {
        if (static_cast<int>(factors.size()) != d_) throw SizeError("CanonicalTensor: expected d factors");
        for (const auto& f : factors)
            if (f.size() != n_) throw SizeError("CanonicalTensor: factor length mismatch");
        factors_.push_back(std::move(factors));
    }

    const std::vector<double>& factor(std::size_t r, int l) const { return factors_[r][static_cast<std::size_t>(l)]; }

    double operator()(const MultiIndex& mu) const {
        double s = 0.0;
        for (const auto& term : factors_) {
            double p = 1.0;
            for (int l = 0; l < d_; ++l) p *= term[static_cast<std::size_t>(l)][mu[l]];
            s += p;
        }
        return s;
    }

private:
    int d_;
    std::size_t n_;
    std::vector<std::vector<std::vector<double>>> factors_;
};

/// Rank-R approximation of 1/g on all multi-indices with g > 0, with
/// a = smallest positive eigensum and b = d * max eigenvalue.
inline CanonicalTensor canonical_reciprocal(const EigenSpectrum& spectrum, int d, double eps,
                                            ExpSumQuadrature* quadrature_out = nullptr) {
    if (d != 2 && d != 3) throw SizeError("canonical_reciprocal: d must be 2 or 3");
    const double a = spectrum.min_positive();
    const double b = d * spectrum.max();
    const auto q = exp_sum_quadrature(a, b, eps);
    CanonicalTensor t(d, spectrum.n);
    for (std::size_t r = 0; r < q.rank(); ++r) {
        const double scale = std::pow(q.weights[r], 1.0 / d);
        std::vector<double> u(spectrum.n);
        for (std::size_t i = 0; i < spectrum.n; ++i) u[i] = scale * std::exp(-q.nodes[r] * spectrum.lambda[i]);
        t.add_term(std::vector<std::vector<double>>(static_cast<std::size_t>(d), u));
    }
    if (quadrature_out) *quadrature_out = q;
    return t;
}

/// Appends -v * e0 (x) ... (x) e0 with v the value at the origin.
inline CanonicalTensor dc_correction(const CanonicalTensor& t) {
    CanonicalTensor out = t;
    const double v = t(MultiIndex{0, 0, 0});
    std::vector<std::vector<double>> f(static_cast<std::size_t>(t.d()), std::vector<double>(t.n(), 0.0));
    for (auto& u : f) u[0] = 1.0;
    f[0][0] = -v;
    out.add_term(std::move(f));
    return out;
}

/// y = F^{-1} (sum_r u_{r,1} (x) ... (x) u_{r,d}) . (F x): one forward and one
/// inverse FFT plus one rank-1 Hadamard scaling per term.
class LkrPreconditioner {
public:
    explicit LkrPreconditioner(CanonicalTensor t)
        : tensor_(std::move(t)), fft_(std::make_shared<RealFft>(GridShape{tensor_.d(), tensor_.n()})) {}

    /// Corrected canonical approximation of the pseudo-inverse at tolerance eps.
    static LkrPreconditioner build(int d, std::size_t n, double eps) {
        ExpSumQuadrature q;
        auto t = dc_correction(canonical_reciprocal(fourier_eigenvalues(n), d, eps, &q));
        LkrPreconditioner p(std::move(t));
        p.quadrature_rank_ = q.rank();
        return p;
    }

    const CanonicalTensor& tensor() const noexcept { return tensor_; }
    std::size_t rank() const noexcept { return tensor_.rank(); }
    std::size_t quadrature_rank() const noexcept { return quadrature_rank_; }
    std::size_t size() const noexcept { return fft_->real_size(); }

    void apply(std::span<const double> x, std::span<double> y) const {
        const int d = tensor_.d();
        const std::size_t n = tensor_.n(), h = fft_->half_extent(), R = tensor_.rank();
        const std::size_t rows = fft_->complex_size() / h;
        fft_->filter(x, y, [&](fftw_complex* s) {
            std::vector<double> v(R), m(h);
            for (std::size_t row = 0; row < rows; ++row) {
                // Leading indices of this row: (i) in 2D, (i, j) in 3D.
                const std::size_t i = d == 3 ? row / n : row;
                const std::size_t j = row % n;
                for (std::size_t r = 0; r < R; ++r) {
                    double p = tensor_.factor(r, 0)[i];
                    if (d == 3) p *= tensor_.factor(r, 1)[j];
                    v[r] = p;
                }
                std::fill(m.begin(), m.end(), 0.0);
                for (std::size_t r = 0; r < R; ++r) {
                    const double* u = tensor_.factor(r, d - 1).data();
                    const double vr = v[r];
                    for (std::size_t k = 0; k < h; ++k) m[k] += vr * u[k];
                }
                fftw_complex* c = s + row * h;
                for (std::size_t k = 0; k < h; ++k) {
                    c[k][0] *= m[k];
                    c[k][1] *= m[k];
                }
            }
        });
    }

    std::vector<double> operator()(std::span<const double> x) const {
        std::vector<double> y(size());
        apply(x, y);
        return y;
    }

private:
    CanonicalTensor tensor_;
    std::shared_ptr<const RealFft> fft_;
    std::size_t quadrature_rank_ = 0;
};

inline std::vector<double> apply_lkr_preconditioner(const CanonicalTensor& t, std::span<const double> x) {
    require_size(x, GridShape{t.d(), t.n()}.size(), "apply_lkr_preconditioner");
    return LkrPreconditioner(t)(x);
}

/// max |t(mu) - g_plus(mu)| / max(g_plus(mu), floor) over all multi-indices
/// (when n^d <= sample) or over `sample` random ones. Entries with
/// g_plus < 1e-300 (the origin) are skipped. floor defaults to 1e-12 * max(g_plus).
inline double max_rel_error(const CanonicalTensor& t, const PseudoInverseDiag& g_plus, std::size_t sample,
                            double floor = -1.0, std::uint64_t seed = 0x5eed) {
    if (sample == 0) throw ConfigError("sample", "sample count must be positive");
    if (g_plus.shape != GridShape{t.d(), t.n()}) throw SizeError("max_rel_error: shape mismatch");
    if (floor < 0.0) floor = 1e-12 * g_plus.max();
    const std::size_t N = g_plus.values.size();
    double worst = 0.0;
    auto visit = [&](std::size_t lin) {
        const double g = g_plus.values[lin];
        if (g < 1e-300) return;
        const double e = t(unravel_index(lin, t.d(), t.n()));
        worst = std::max(worst, std::abs(e - g) / std::max(g, floor));
    };
    if (N <= sample) {
        for (std::size_t lin = 0; lin < N; ++lin) visit(lin);
    } else {
        const CounterRng rng(seed, 1);
        for (std::size_t s = 0; s < sample; ++s) visit(rng.bits(s) % N);
    }
    return worst;
}

}  // namespace kronhom
