#pragma once

// Fourier diagonalization of the periodic Laplacian and the exact
// (pseudo-inverse) Fourier preconditioner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/fft.hpp"
#include "kronhom/grid.hpp"

namespace kronhom {

/// Eigenvalues of the n x n periodic 1D Laplacian, indexed by frequency.
struct EigenSpectrum {
    std::size_t n = 0;
    std::vector<double> lambda;
    double imag_residue = 0.0;  ///< max |Im| of the transformed first column

    double max() const { return *std::max_element(lambda.begin(), lambda.end()); }
    /// Smallest nonzero eigenvalue, 2 - 2 cos(2 pi / n).
    double min_positive() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : lambda)
            if (v > 0.0) m = std::min(m, v);
        return m;
    }
};

/// DFT of the first column p = (2, -1, 0, ..., 0, -1) of the circulant.
inline EigenSpectrum fourier_eigenvalues(std::size_t n) {
    if (n < 3) throw SizeError("fourier_eigenvalues: n must be >= 3");
    std::vector<double> p(n, 0.0);
    p[0] = 2.0;
    p[1] = -1.0;
    p[n - 1] = -1.0;
    const auto f = dft(p);
    EigenSpectrum s;
    s.n = n;
    s.lambda.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        s.imag_residue = std::max(s.imag_residue, std::abs(f[j].imag()));
        s.lambda[j] = f[j].real();
    }
    if (s.imag_residue > 1e-12) throw NumericalBreakdown("fourier_eigenvalues: spectrum is not real");
    s.lambda[0] = 0.0;  // exact: row sums of the circulant vanish
    return s;
}

/// g(i_1, ..., i_d) = lambda_{i_1} + ... + lambda_{i_d}, kept as d copies of
/// one eigenvalue vector (an exact rank-d canonical form).
struct EigensumTensor {
    int d = 2;
    EigenSpectrum spectrum;

    std::size_t n() const noexcept { return spectrum.n; }
    double operator()(const MultiIndex& mu) const {
        double g = 0.0;
        for (int l = 0; l < d; ++l) g += spectrum.lambda[mu[l]];
        return g;
    }
};

inline EigensumTensor eigensum_tensor(int d, const EigenSpectrum& spectrum) {
    if (d != 2 && d != 3) throw SizeError("eigensum_tensor: d must be 2 or 3");
    return {d, spectrum};
}

/// Full n^d diagonal of the preconditioner in the Fourier basis.
struct PseudoInverseDiag {
    GridShape shape;
    std::vector<double> values;

    double at(const MultiIndex& mu) const { return values[multi_index(mu, shape.d, shape.n)]; }
    double max() const { return *std::max_element(values.begin(), values.end()); }
};

/// 1/g entrywise with the single zero entry (the origin) replaced by 0.
inline PseudoInverseDiag pseudoinverse_diag(const EigensumTensor& g) {
    PseudoInverseDiag p{{g.d, g.n()}, {}};
    p.values.resize(p.shape.size());
    for (std::size_t lin = 0; lin < p.values.size(); ++lin) {
        const double v = g(unravel_index(lin, g.d, g.n()));
        p.values[lin] = lin == 0 ? 0.0 : 1.0 / v;
    }
    return p;
}

/// 1/(g + delta), delta > 0: the inverse of the shifted Laplacian A_lap + delta I.
inline PseudoInverseDiag regularized_inverse_diag(const EigensumTensor& g, double delta) {
    if (!(delta > 0.0)) throw ConfigError("delta", "regularization must be positive");
    PseudoInverseDiag p{{g.d, g.n()}, {}};
    p.values.resize(p.shape.size());
    for (std::size_t lin = 0; lin < p.values.size(); ++lin)
        p.values[lin] = 1.0 / (g(unravel_index(lin, g.d, g.n())) + delta);
    return p;
}

/// Applies a real Fourier multiplier stored as a full n^d diagonal. The
/// multiplier must be even under i -> n - i on every axis (true for
/// eigensum functions), so the half spectrum carries all the information.
class FourierPreconditioner {
public:
    explicit FourierPreconditioner(PseudoInverseDiag diag)
        : diag_(std::move(diag)), fft_(std::make_shared<RealFft>(diag_.shape)) {}

    static FourierPreconditioner exact(int d, std::size_t n) {
        return FourierPreconditioner(pseudoinverse_diag(eigensum_tensor(d, fourier_eigenvalues(n))));
    }
    static FourierPreconditioner regularized(int d, std::size_t n, double delta) {
        return FourierPreconditioner(regularized_inverse_diag(eigensum_tensor(d, fourier_eigenvalues(n)), delta));
    }

    const PseudoInverseDiag& diag() const noexcept { return diag_; }
    std::size_t size() const noexcept { return diag_.values.size(); }

    void apply(std::span<const double> x, std::span<double> y) const {
        const std::size_t n = diag_.shape.n, h = fft_->half_extent();
        const std::size_t rows = fft_->complex_size() / h;
        fft_->filter(x, y, [&](fftw_complex* s) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* m = diag_.values.data() + r * n;
                fftw_complex* row = s + r * h;
                for (std::size_t k = 0; k < h; ++k) {
                    row[k][0] *= m[k];
                    row[k][1] *= m[k];
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
    PseudoInverseDiag diag_;
    std::shared_ptr<const RealFft> fft_;
};

inline std::vector<double> apply_fourier_preconditioner(const PseudoInverseDiag& g_plus, std::span<const double> x) {
    require_size(x, g_plus.values.size(), "apply_fourier_preconditioner");
    return FourierPreconditioner(g_plus)(x);
}

}  // namespace kronhom
