#pragma once

// Preconditioned conjugate gradients on the subspace of mean-zero vectors.

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/lowrank.hpp"
#include "kronhom/spectral.hpp"

namespace kronhom {

template <class T>
concept LinearOperator = requires(const T& op, std::span<const double> x, std::span<double> y) {
    { op.size() } -> std::convertible_to<std::size_t>;
    op.apply(x, y);
};

enum class PreconditionerKind { fourier, lkr, regularized };

inline std::string to_string(PreconditionerKind k) {
    switch (k) {
        case PreconditionerKind::fourier: return "fourier";
        case PreconditionerKind::lkr: return "lkr";
        case PreconditionerKind::regularized: return "rp";
    }
    return "fourier";
}

inline PreconditionerKind parse_preconditioner_kind(const std::string& s) {
    if (s == "fourier") return PreconditionerKind::fourier;
    if (s == "lkr") return PreconditionerKind::lkr;
    if (s == "rp" || s == "regularized") return PreconditionerKind::regularized;
    throw ConfigError("precond", "unknown preconditioner '" + s + "' (expected fourier, lkr or rp)");
}

struct SolveOptions {
    double tolerance = 1e-8;  ///< relative residual ||f - A u|| / ||f||
    int max_iter = 500;
    PreconditionerKind preconditioner = PreconditionerKind::fourier;
    double eps_rank = 1e-8;  ///< lkr only
    double delta = 1e-2;     ///< regularized only
    /// Stop on sqrt(<r, Pr> / <r0, Pr0>) instead of the plain residual.
    bool preconditioned_stop = false;

    /// 1e-8 in 2D and 1e-7 in 3D.
    static SolveOptions for_dimension(int d) {
        SolveOptions o;
        o.tolerance = d == 3 ? 1e-7 : 1e-8;
        return o;
    }

    void validate() const {
        if (!(tolerance > 0.0)) throw ConfigError("eps", "tolerance must be positive");
        if (max_iter < 1) throw ConfigError("max_iter", "must be positive");
        if (!(eps_rank > 0.0 && eps_rank < 1.0)) throw ConfigError("eps_rank", "must lie in (0, 1)");
        if (!(delta >= 0.0)) throw ConfigError("delta", "must be non-negative");
        if (preconditioner == PreconditionerKind::regularized && !(delta > 0.0))
            throw ConfigError("delta", "regularized preconditioner needs delta > 0");
    }
};

struct PcgReport {
    int iterations = 0;
    std::vector<double> history;  ///< relative residual per iteration, starting at 1
    bool converged = false;
    double final_residual = 0.0;  ///< last entry of history
    double true_residual = 0.0;   ///< ||f - A u|| / ||f|| recomputed at return
    std::string preconditioner;
    std::vector<std::string> warnings;
};

/// Type-erased preconditioner chosen by SolveOptions.
class Preconditioner {
public:
    static Preconditioner make(const SolveOptions& opts, GridShape shape) {
        opts.validate();
        switch (opts.preconditioner) {
            case PreconditionerKind::fourier:
                return Preconditioner(FourierPreconditioner::exact(shape.d, shape.n), "fourier");
            case PreconditionerKind::lkr:
                return Preconditioner(LkrPreconditioner::build(shape.d, shape.n, opts.eps_rank), "lkr");
            case PreconditionerKind::regularized:
                return Preconditioner(FourierPreconditioner::regularized(shape.d, shape.n, opts.delta), "rp");
        }
        throw ConfigError("precond", "unknown preconditioner");
    }

    template <class Impl>
    Preconditioner(Impl impl, std::string name) : impl_(std::move(impl)), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const {
        return std::visit([](const auto& p) { return p.size(); }, impl_);
    }
    void apply(std::span<const double> x, std::span<double> y) const {
        std::visit([&](const auto& p) { p.apply(x, y); }, impl_);
    }

private:
    std::variant<FourierPreconditioner, LkrPreconditioner> impl_;
    std::string name_;
};

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline void project_mean_zero_inplace(std::span<double> x) {
    const double m = mean(x);
    for (double& v : x) v -= m;
}

inline std::vector<double> project_mean_zero(std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    project_mean_zero_inplace(y);
    return y;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// ||f - A u|| / ||f||, or the absolute residual when f = 0.
template <LinearOperator Op>
double residual(const Op& A, std::span<const double> u, std::span<const double> f) {
    require_size(u, A.size(), "residual");
    require_size(f, A.size(), "residual");
    std::vector<double> r(A.size());
    A.apply(u, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = f[i] - r[i];
    const double nf = norm2(f);
    return nf > 0.0 ? norm2(r) / nf : norm2(r);
}

/// Solves A u = f for mean-zero u. The right-hand side is projected onto
/// mean-zero vectors first (with a warning when it was not already). The
/// iterate is re-projected every step.
template <LinearOperator Op, LinearOperator Pre>
std::pair<std::vector<double>, PcgReport> pcg_solve(const Op& A, std::span<const double> f, const Pre& P,
                                                    const SolveOptions& opts, std::string precond_name = "custom") {
    opts.validate();
    const std::size_t N = A.size();
    require_size(f, N, "pcg_solve");
    if (P.size() != N) throw SizeError("pcg_solve: preconditioner size mismatch");

    PcgReport rep;
    rep.preconditioner = std::move(precond_name);
    std::vector<double> u(N, 0.0), r(f.begin(), f.end()), z(N), p(N), q(N);
    if (std::abs(mean(f)) * static_cast<double>(N) > 1e-10 * norm2(f) * std::sqrt(static_cast<double>(N)))
        rep.warnings.push_back("right-hand side was not mean-zero; projected");
    project_mean_zero_inplace(r);

    const double nf = norm2(r);
    if (!std::isfinite(nf)) throw NumericalBreakdown("pcg_solve: non-finite right-hand side");
    if (nf == 0.0) {
        rep.converged = true;
        rep.history.push_back(0.0);
        return {std::move(u), std::move(rep)};
    }

    P.apply(r, z);
    project_mean_zero_inplace(z);
    p = z;
    double rz = dot(r, z);
    const double rz0 = rz;
    rep.history.push_back(1.0);

    for (int it = 1; it <= opts.max_iter; ++it) {
        A.apply(p, q);
        const double pq = dot(p, q);
        if (!std::isfinite(pq) || !std::isfinite(rz))
            throw NumericalBreakdown("pcg_solve: non-finite inner product at iteration " + std::to_string(it));
        if (pq <= 0.0) throw NumericalBreakdown("pcg_solve: loss of positive definiteness at iteration " +
                                                std::to_string(it));
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < N; ++i) {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        project_mean_zero_inplace(u);
        rep.iterations = it;

        P.apply(r, z);
        project_mean_zero_inplace(z);
        const double rz_new = dot(r, z);
        const double rel = opts.preconditioned_stop ? std::sqrt(std::abs(rz_new) / rz0) : norm2(r) / nf;
        if (!std::isfinite(rel))
            throw NumericalBreakdown("pcg_solve: residual became non-finite at iteration " + std::to_string(it));
        rep.history.push_back(rel);
        if (rel <= opts.tolerance) {
            rep.converged = true;
            break;
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
    }
    rep.final_residual = rep.history.back();
    std::vector<double> fp(f.begin(), f.end());
    project_mean_zero_inplace(fp);
    rep.true_residual = residual(A, u, fp);
    return {std::move(u), std::move(rep)};
}

template <LinearOperator Op>
std::pair<std::vector<double>, PcgReport> pcg_solve(const Op& A, std::span<const double> f, const Preconditioner& P,
                                                    const SolveOptions& opts) {
    return pcg_solve(A, f, P, opts, P.name());
}

/// Builds the preconditioner named in `opts` for the operator's grid.
template <LinearOperator Op>
    requires requires(const Op& a) { a.shape(); }
std::pair<std::vector<double>, PcgReport> pcg_solve(const Op& A, std::span<const double> f, const SolveOptions& opts) {
    const auto P = Preconditioner::make(opts, A.shape());
    return pcg_solve(A, f, P, opts);
}

}  // namespace kronhom
