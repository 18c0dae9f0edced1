#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms on cubic grids.
// Plans are built once per grid under a global lock (the FFTW planner is
// not thread safe); execution uses the new-array interface on per-call
// aligned buffers, so a plan can be shared by concurrent callers.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <type_traits>
#include <vector>

#include <fftw3.h>

#include "kronhom/errors.hpp"
#include "kronhom/grid.hpp"

namespace kronhom {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDestroy {
    void operator()(fftw_plan p) const noexcept {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};

using PlanHandle = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

}  // namespace detail

using RealBuffer = std::unique_ptr<double[], detail::FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], detail::FftwFree>;

inline RealBuffer make_real_buffer(std::size_t n) {
    return RealBuffer(fftw_alloc_real(n));
}
inline ComplexBuffer make_complex_buffer(std::size_t n) {
    return ComplexBuffer(fftw_alloc_complex(n));
}

/// d-dimensional r2c/c2r pair. The half spectrum has extents
/// n x ... x n x (n/2 + 1), last axis fastest. Unnormalized: backward(forward(x)) = N x.
class RealFft {
public:
    explicit RealFft(GridShape shape) : shape_(shape) {
        if (shape.d < 1 || shape.d > 3 || shape.n < 1) throw SizeError("RealFft: unsupported shape");
        int dims[3] = {static_cast<int>(shape.n), static_cast<int>(shape.n), static_cast<int>(shape.n)};
        auto in = make_real_buffer(real_size());
        auto out = make_complex_buffer(complex_size());
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_.reset(fftw_plan_dft_r2c(shape.d, dims, in.get(), out.get(), FFTW_ESTIMATE));
        backward_.reset(fftw_plan_dft_c2r(shape.d, dims, out.get(), in.get(), FFTW_ESTIMATE));
        if (!forward_ || !backward_) throw Error("RealFft: FFTW planning failed");
    }

    GridShape shape() const noexcept { return shape_; }
    std::size_t real_size() const noexcept { return shape_.size(); }
    std::size_t half_extent() const noexcept { return shape_.n / 2 + 1; }
    std::size_t complex_size() const noexcept { return shape_.size() / shape_.n * half_extent(); }

    /// `in` and `out` must come from make_*_buffer (FFTW alignment).
    void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_.get(), in, out); }
    /// Destroys `in`.
    void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(backward_.get(), in, out); }

    /// y = F^{-1} diag(m) F x / N; `scale(spectrum)` applies the multiplier
    /// to the half spectrum in place.
    template <class Scale>
    void filter(std::span<const double> x, std::span<double> y, Scale&& scale) const {
        require_size(x, real_size(), "spectral filter");
        require_size(y, real_size(), "spectral filter");
        auto buf = make_real_buffer(real_size());
        auto spec = make_complex_buffer(complex_size());
        std::copy(x.begin(), x.end(), buf.get());
        forward(buf.get(), spec.get());
        scale(spec.get());
        backward(spec.get(), buf.get());
        const double inv = 1.0 / static_cast<double>(real_size());
        for (std::size_t i = 0; i < real_size(); ++i) y[i] = buf[i] * inv;
    }

private:
    GridShape shape_;
    detail::PlanHandle forward_;
    detail::PlanHandle backward_;
};

/// Complex DFT of a real 1D vector, X_j = sum_m x_m exp(-2 pi i j m / n).
inline std::vector<std::complex<double>> dft(std::span<const double> x) {
    const std::size_t n = x.size();
    auto in = make_complex_buffer(n);
    auto out = make_complex_buffer(n);
    detail::PlanHandle plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan.reset(fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE));
    }
    for (std::size_t i = 0; i < n; ++i) {
        in[i][0] = x[i];
        in[i][1] = 0.0;
    }
    fftw_execute(plan.get());
    std::vector<std::complex<double>> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = {out[i][0], out[i][1]};
    return r;
}

}  // namespace kronhom
