#pragma once

// Random checkerboard realizations on the L^d cell lattice and their nodal
// coefficient values on the periodic n^d grid (n = n0 * L).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/rng.hpp"

namespace kronhom {

struct Rational {
    int num = 1;
    int den = 4;

    double value() const noexcept { return static_cast<double>(num) / den; }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
    bool operator==(const Rational&) const = default;
};

/// Parses "p/q" or a decimal such as "0.25" (converted exactly when it is a
/// dyadic fraction with denominator up to 2^20).
inline Rational parse_rational(const std::string& text, const std::string& key = "alpha") {
    const auto slash = text.find('/');
    try {
        if (slash != std::string::npos) {
            std::size_t used_p = 0, used_q = 0;
            const std::string ps = text.substr(0, slash), qs = text.substr(slash + 1);
            const int p = std::stoi(ps, &used_p);
            const int q = std::stoi(qs, &used_q);
            if (used_p != ps.size() || used_q != qs.size() || q <= 0) throw std::invalid_argument(text);
            const int g = std::gcd(p, q);
            return {p / g, q / g};
        }
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        for (int q = 1; q <= (1 << 20); q *= 2) {
            const double p = v * q;
            if (p == std::floor(p)) {
                const int pi = static_cast<int>(p);
                const int g = std::gcd(pi, q);
                return {pi / g, q / g};
            }
        }
    } catch (const std::logic_error&) {
    }
    throw ConfigError(key, "cannot parse '" + text + "' as a rational number");
}

enum class ContrastKind { fixed, two_value, layered };

inline std::string to_string(ContrastKind k) {
    switch (k) {
        case ContrastKind::fixed: return "fixed";
        case ContrastKind::two_value: return "two_value";
        case ContrastKind::layered: return "layered";
    }
    return "fixed";
}

inline ContrastKind parse_contrast_kind(const std::string& s) {
    if (s == "fixed") return ContrastKind::fixed;
    if (s == "two_value") return ContrastKind::two_value;
    if (s == "layered") return ContrastKind::layered;
    throw ConfigError("contrast", "unknown contrast model '" + s + "'");
}

/// How perturbation amplitudes are assigned to covered cells.
///   fixed:     one value, betas[0] if given, else 1 - lambda
///   two_value: betas = {b1, b2}, each covered cell picks one with prob. 1/2
///   layered:   beta = betas[s_last mod betas.size()], s_last = cell index on the last axis
struct ContrastModel {
    ContrastKind kind = ContrastKind::fixed;
    std::vector<double> betas;

    bool operator==(const ContrastModel&) const = default;
};

struct LatticeConfig {
    int d = 2;
    int L = 4;
    int n0 = 4;
    Rational alpha{1, 4};
    double lambda = 0.4;
    ContrastModel contrast;
    double coverage_prob = 0.5;
    /// Sub-cell start inside its cell, in grid intervals; negative means centered.
    int offset = -1;

    std::size_t n() const noexcept { return static_cast<std::size_t>(n0) * static_cast<std::size_t>(L); }
    GridShape shape() const noexcept { return {d, n()}; }

    /// Sub-cell width in grid intervals, k = 2 alpha n0 (only meaningful after validate()).
    int subcell_intervals() const noexcept { return 2 * alpha.num * n0 / alpha.den; }

    int subcell_offset() const noexcept {
        return offset >= 0 ? offset : (n0 - subcell_intervals()) / 2;
    }

    std::size_t num_cells() const noexcept {
        std::size_t c = 1;
        for (int l = 0; l < d; ++l) c *= static_cast<std::size_t>(L);
        return c;
    }

    double fixed_beta() const {
        return contrast.betas.empty() ? 1.0 - lambda : contrast.betas.front();
    }

    double max_beta() const {
        if (contrast.kind == ContrastKind::fixed) return fixed_beta();
        return *std::max_element(contrast.betas.begin(), contrast.betas.end());
    }

    void validate() const {
        if (d != 2 && d != 3) throw ConfigError("d", "dimension must be 2 or 3");
        if (L < 1) throw ConfigError("L", "cells per axis must be positive");
        if (n0 < 4 || (n0 & (n0 - 1)) != 0) throw ConfigError("n0", "must be a power of two >= 4");
        if (alpha.num <= 0 || alpha.den <= 0 || 2 * alpha.num > alpha.den)
            throw ConfigError("alpha", "overlap factor must satisfy 0 < alpha <= 1/2");
        if ((2 * alpha.num * n0) % alpha.den != 0)
            throw ConfigError("alpha", "2 * alpha * n0 must be an integer");
        const int k = subcell_intervals();
        if (k % 2 != 0 || k < 2 || k > n0)
            throw ConfigError("alpha", "sub-cell width 2 * alpha * n0 must be an even integer in [2, n0]");
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "must lie in (0, 1]");
        if (!(coverage_prob >= 0.0 && coverage_prob <= 1.0))
            throw ConfigError("coverage_prob", "must lie in [0, 1]");
        if (offset >= 0 && offset + k > n0)
            throw ConfigError("offset", "sub-cell does not fit inside its cell");
        switch (contrast.kind) {
            case ContrastKind::fixed:
                if (contrast.betas.size() > 1) throw ConfigError("betas", "fixed contrast takes one value");
                break;
            case ContrastKind::two_value:
                if (contrast.betas.size() != 2) throw ConfigError("betas", "two_value contrast needs two values");
                break;
            case ContrastKind::layered:
                if (contrast.betas.empty()) throw ConfigError("betas", "layered contrast needs at least one value");
                break;
        }
        const double top = 1.0 - lambda;
        auto check = [&](double b) {
            if (!(b >= 0.0 && b <= top + 1e-15))
                throw ConfigError("beta", "contrast values must lie in [0, 1 - lambda]");
        };
        if (contrast.kind == ContrastKind::fixed) check(fixed_beta());
        for (double b : contrast.betas) check(b);
    }

    bool operator==(const LatticeConfig&) const = default;
};

/// Cell multi-index s in {0..L-1}^d; unused trailing entries are 0.
using CellIndex = std::array<int, 3>;

struct Realization {
    LatticeConfig config;
    std::vector<CellIndex> covered;  ///< big-endian order, no duplicates
    std::vector<double> cell_beta;   ///< parallel to `covered`
    std::uint64_t seed = 0;

    std::size_t K() const noexcept { return covered.size(); }
    bool operator==(const Realization&) const = default;
};

inline std::size_t cell_linear_index(const CellIndex& s, int d, int L) {
    std::size_t lin = 0;
    for (int l = 0; l < d; ++l) lin = lin * static_cast<std::size_t>(L) + static_cast<std::size_t>(s[l]);
    return lin;
}

inline CellIndex cell_from_linear(std::size_t lin, int d, int L) {
    CellIndex s{0, 0, 0};
    for (int l = d - 1; l >= 0; --l) {
        s[l] = static_cast<int>(lin % static_cast<std::size_t>(L));
        lin /= static_cast<std::size_t>(L);
    }
    return s;
}

/// Draws a realization. Each cell is covered independently with
/// `coverage_prob`; the draw for cell c uses counters 2c (coverage) and
/// 2c+1 (contrast choice), so the result is a pure function of (config, seed).
inline Realization sample_realization(const LatticeConfig& config, std::uint64_t seed) {
    config.validate();
    Realization r;
    r.config = config;
    r.seed = seed;
    const CounterRng rng(seed, 0);
    const std::size_t cells = config.num_cells();
    for (std::size_t c = 0; c < cells; ++c) {
        if (!(rng.uniform(2 * c) < config.coverage_prob)) continue;
        const CellIndex s = cell_from_linear(c, config.d, config.L);
        double beta = 0.0;
        switch (config.contrast.kind) {
            case ContrastKind::fixed: beta = config.fixed_beta(); break;
            case ContrastKind::two_value:
                beta = rng.uniform(2 * c + 1) < 0.5 ? config.contrast.betas[0] : config.contrast.betas[1];
                break;
            case ContrastKind::layered: {
                const auto& b = config.contrast.betas;
                beta = b[static_cast<std::size_t>(s[config.d - 1]) % b.size()];
                break;
            }
        }
        r.covered.push_back(s);
        r.cell_beta.push_back(beta);
    }
    return r;
}

/// Cyclic shift of the cell pattern by `shift` cells per axis.
inline Realization shift_cells(const Realization& r, const CellIndex& shift) {
    const int d = r.config.d, L = r.config.L;
    std::vector<std::pair<std::size_t, double>> moved;
    moved.reserve(r.K());
    for (std::size_t k = 0; k < r.K(); ++k) {
        CellIndex s = r.covered[k];
        for (int l = 0; l < d; ++l) s[l] = ((s[l] + shift[l]) % L + L) % L;
        moved.emplace_back(cell_linear_index(s, d, L), r.cell_beta[k]);
    }
    std::sort(moved.begin(), moved.end());
    Realization out;
    out.config = r.config;
    out.seed = r.seed;
    for (const auto& [lin, beta] : moved) {
        out.covered.push_back(cell_from_linear(lin, d, L));
        out.cell_beta.push_back(beta);
    }
    return out;
}

/// First grid node of the sub-cell window of cell coordinate `s` (one axis).
/// The window spans nodes start .. start + k (mod n), i.e. k + 1 nodes.
inline std::size_t subcell_start(const LatticeConfig& c, int s) {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(c.n0) +
           static_cast<std::size_t>(c.subcell_offset());
}

/// Piecewise-constant variable coefficient on grid elements. Element e is
/// the h-cube with lower corner node e; its value is beta of the covering
/// sub-cell, or 0 outside all sub-cells.
inline std::vector<double> element_field(const Realization& r) {
    const auto& c = r.config;
    const std::size_t n = c.n();
    const std::size_t k = static_cast<std::size_t>(c.subcell_intervals());
    std::vector<double> field(c.shape().size(), 0.0);
    for (std::size_t q = 0; q < r.K(); ++q) {
        std::array<std::size_t, 3> start{0, 0, 0}, extent{1, 1, 1};
        for (int l = 0; l < c.d; ++l) {
            start[l] = subcell_start(c, r.covered[q][l]);
            extent[l] = k;
        }
        for (std::size_t a = 0; a < extent[0]; ++a)
            for (std::size_t b = 0; b < extent[1]; ++b)
                for (std::size_t e = 0; e < extent[2]; ++e) {
                    const MultiIndex mu{(start[0] + a) % n, (start[1] + b) % n, (start[2] + e) % n};
                    field[multi_index(mu, c.d, n)] = r.cell_beta[q];
                }
    }
    return field;
}

/// Nodal values of the variable coefficient part beta * a_hat.
struct CoefficientGrid {
    GridShape shape;
    std::vector<double> values;

    double at(const MultiIndex& mu) const { return values[multi_index(mu, shape.d, shape.n)]; }
};

/// Each node takes the mean of its 2^d incident elements, so a node inside a
/// covered sub-cell gets beta, a face node beta/2, an edge node beta/4 and
/// (3D) a corner node beta/8.
inline CoefficientGrid coefficient_grid(const Realization& r) {
    const auto shape = r.config.shape();
    const std::size_t n = shape.n;
    const int d = shape.d;
    const auto field = element_field(r);
    CoefficientGrid g{shape, std::vector<double>(shape.size(), 0.0)};
    const double weight = 1.0 / static_cast<double>(1 << d);
    for (std::size_t lin = 0; lin < g.values.size(); ++lin) {
        const MultiIndex mu = unravel_index(lin, d, n);
        double acc = 0.0;
        for (int corner = 0; corner < (1 << d); ++corner) {
            MultiIndex e = mu;
            for (int l = 0; l < d; ++l)
                if (corner & (1 << l)) e[l] = (mu[l] + n - 1) % n;
            acc += field[multi_index(e, d, n)];
        }
        g.values[lin] = acc * weight;
    }
    return g;
}

/// Fraction of the unit cube occupied by covered sub-cells.
inline double covered_volume_fraction(const Realization& r) {
    const auto& c = r.config;
    const double side = static_cast<double>(c.subcell_intervals()) / c.n0;
    return static_cast<double>(r.K()) * std::pow(side, c.d) / static_cast<double>(c.num_cells());
}

}  // namespace kronhom
