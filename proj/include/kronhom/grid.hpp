#pragma once

#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kronhom/errors.hpp"

namespace kronhom {

/// Multi-index into a periodic n^d grid; only the first d entries are used.
using MultiIndex = std::array<std::size_t, 3>;

/// Cubic periodic grid with n points per axis, d in {1, 2, 3}.
struct GridShape {
    int d = 2;
    std::size_t n = 0;

    std::size_t size() const noexcept {
        std::size_t s = 1;
        for (int l = 0; l < d; ++l) s *= n;
        return s;
    }
    bool operator==(const GridShape&) const = default;
};

/// Big-endian linearization: the last axis runs fastest,
/// so in 3D (i, j, k) maps to k + j*n + i*n^2.
inline std::size_t multi_index(std::span<const std::size_t> mu, std::size_t n) {
    std::size_t lin = 0;
    for (std::size_t c : mu) {
        if (c >= n) throw SizeError("multi_index: component " + std::to_string(c) +
                                    " out of range for n = " + std::to_string(n));
        lin = lin * n + c;
    }
    return lin;
}

inline std::size_t multi_index(const MultiIndex& mu, int d, std::size_t n) {
    return multi_index(std::span<const std::size_t>(mu.data(), static_cast<std::size_t>(d)), n);
}

/// Inverse of multi_index.
inline MultiIndex unravel_index(std::size_t lin, int d, std::size_t n) {
    MultiIndex mu{0, 0, 0};
    for (int l = d - 1; l >= 0; --l) {
        mu[static_cast<std::size_t>(l)] = lin % n;
        lin /= n;
    }
    if (lin != 0) throw SizeError("unravel_index: linear index out of range");
    return mu;
}

inline std::size_t wrap(long long i, std::size_t n) noexcept {
    const auto m = static_cast<long long>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

inline void require_size(std::span<const double> x, std::size_t expected, const char* where) {
    if (x.size() != expected)
        throw SizeError(std::string(where) + ": vector has " + std::to_string(x.size()) +
                        " entries, expected " + std::to_string(expected));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace kronhom
