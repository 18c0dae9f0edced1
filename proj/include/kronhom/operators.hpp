#pragma once

// Discrete operators as sums of d-fold Kronecker products of small sparse 1D
// matrices: the periodic Laplacian A_lap, the stochastic part A_s and the
// stiffness A = lambda * A_lap + A_s. All 1D factors are positive
// semidefinite and unscaled (no powers of h).

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "kronhom/errors.hpp"
#include "kronhom/grid.hpp"
#include "kronhom/lattice.hpp"

namespace kronhom {

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Sorts by (row, col) and sums duplicates; exact zeros are kept.
inline std::vector<Triplet> coalesce(std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<Triplet> out;
    out.reserve(t.size());
    for (const auto& e : t) {
        if (!out.empty() && out.back().row == e.row && out.back().col == e.col)
            out.back().value += e.value;
        else
            out.push_back(e);
    }
    return out;
}

/// n x n sparse matrix acting on a window of the periodic index range.
/// Rows and columns outside `support` are zero. `support` lists the global
/// index of every local index; it may repeat an index when a window wraps
/// all the way around, in which case contributions add up.
class Sparse1D {
public:
    static Sparse1D identity(std::size_t n) {
        Sparse1D m;
        m.n_ = n;
        m.identity_ = true;
        return m;
    }

    /// From a dense m x m local block placed at global indices `support`.
    static Sparse1D from_block(std::size_t n, std::vector<std::size_t> support,
                               const std::vector<std::vector<double>>& block) {
        Sparse1D m;
        m.n_ = n;
        m.support_ = std::move(support);
        m.row_ptr_.push_back(0);
        for (std::size_t i = 0; i < block.size(); ++i) {
            for (std::size_t j = 0; j < block[i].size(); ++j) {
                if (block[i][j] != 0.0) {
                    m.cols_.push_back(j);
                    m.vals_.push_back(block[i][j]);
                }
            }
            m.row_ptr_.push_back(m.cols_.size());
        }
        m.validate();
        return m;
    }

    /// From global (row, col, value) triplets; duplicates are summed.
    static Sparse1D from_triplets(std::size_t n, std::vector<Triplet> entries) {
        entries = coalesce(std::move(entries));
        std::set<std::size_t> idx;
        for (const auto& e : entries) {
            if (e.row >= n || e.col >= n) throw SizeError("Sparse1D: triplet index out of range");
            idx.insert(e.row);
            idx.insert(e.col);
        }
        Sparse1D m;
        m.n_ = n;
        m.support_.assign(idx.begin(), idx.end());
        std::map<std::size_t, std::size_t> local;
        for (std::size_t i = 0; i < m.support_.size(); ++i) local[m.support_[i]] = i;
        m.row_ptr_.assign(m.support_.size() + 1, 0);
        for (const auto& e : entries) ++m.row_ptr_[local[e.row] + 1];
        for (std::size_t i = 0; i < m.support_.size(); ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
        m.cols_.resize(entries.size());
        m.vals_.resize(entries.size());
        auto fill = m.row_ptr_;
        for (const auto& e : entries) {
            const std::size_t pos = fill[local[e.row]]++;
            m.cols_[pos] = local[e.col];
            m.vals_[pos] = e.value;
        }
        return m;
    }

    std::size_t n() const noexcept { return n_; }
    bool is_identity() const noexcept { return identity_; }
    /// Local dimension: n for the identity, else the window length.
    std::size_t local_size() const noexcept { return identity_ ? n_ : support_.size(); }
    std::size_t global_index(std::size_t local) const noexcept { return identity_ ? local : support_[local]; }
    const std::vector<std::size_t>& support() const noexcept { return support_; }
    std::size_t nnz() const noexcept { return identity_ ? n_ : vals_.size(); }

    std::vector<Triplet> triplets() const {
        std::vector<Triplet> t;
        if (identity_) {
            for (std::size_t i = 0; i < n_; ++i) t.push_back({i, i, 1.0});
            return t;
        }
        for (std::size_t i = 0; i + 1 < row_ptr_.size(); ++i)
            for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
                t.push_back({support_[i], support_[cols_[p]], vals_[p]});
        return t;
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
        for (const auto& e : triplets())
            m(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) += e.value;
        return m;
    }

    /// out(o, i, s) = sum_j M(i, j) in(o, j, s) on a local block whose
    /// middle extent is local_size(); `inner` is the stride of that axis.
    void mode_product(const double* in, double* out, std::size_t outer, std::size_t inner) const {
        const std::size_t m = local_size();
        if (identity_) {
            std::copy(in, in + outer * m * inner, out);
            return;
        }
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = in + o * m * inner;
            double* dst = out + o * m * inner;
            for (std::size_t i = 0; i < m; ++i) {
                double* row = dst + i * inner;
                std::fill(row, row + inner, 0.0);
                for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
                    const double v = vals_[p];
                    const double* col = src + cols_[p] * inner;
                    for (std::size_t s = 0; s < inner; ++s) row[s] += v * col[s];
                }
            }
        }
    }

private:
    void validate() const {
        for (std::size_t g : support_)
            if (g >= n_) throw SizeError("Sparse1D: support index out of range");
        if (row_ptr_.size() != support_.size() + 1) throw SizeError("Sparse1D: block size does not match support");
    }

    std::size_t n_ = 0;
    bool identity_ = false;
    std::vector<std::size_t> support_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> cols_;
    std::vector<double> vals_;
};

using FactorPtr = std::shared_ptr<const Sparse1D>;

/// Circulant with first row (2, -1, 0, ..., 0, -1).
inline Sparse1D laplacian_1d_periodic(std::size_t n) {
    if (n < 3) throw SizeError("laplacian_1d_periodic: n must be >= 3");
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back({i, i, 2.0});
        t.push_back({i, (i + 1) % n, -1.0});
        t.push_back({i, (i + n - 1) % n, -1.0});
    }
    return Sparse1D::from_triplets(n, std::move(t));
}

/// Tridiagonal (-1, 2, -1) with corner diagonal entries 1 (local m x m block).
inline std::vector<std::vector<double>> neumann_block(std::size_t m) {
    std::vector<std::vector<double>> b(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i + 1 < m; ++i) {
        b[i][i] += 1.0;
        b[i + 1][i + 1] += 1.0;
        b[i][i + 1] -= 1.0;
        b[i + 1][i] -= 1.0;
    }
    return b;
}

/// diag{1/2, 1, ..., 1, 1/2} (local m x m block).
inline std::vector<std::vector<double>> lumped_mass_block(std::size_t m) {
    std::vector<std::vector<double>> b(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) b[i][i] = (i == 0 || i + 1 == m) ? 0.5 : 1.0;
    return b;
}

inline Sparse1D laplacian_1d_neumann(std::size_t n) {
    if (n < 2) throw SizeError("laplacian_1d_neumann: n must be >= 2");
    std::vector<std::size_t> support(n);
    std::iota(support.begin(), support.end(), std::size_t{0});
    return Sparse1D::from_block(n, std::move(support), neumann_block(n));
}

/// Global indices start, start+1, ..., start+len-1 taken mod n.
inline std::vector<std::size_t> window(std::size_t start, std::size_t len, std::size_t n) {
    std::vector<std::size_t> w(len);
    for (std::size_t i = 0; i < len; ++i) w[i] = (start + i) % n;
    return w;
}

struct KronTerm {
    double coeff = 1.0;
    std::array<FactorPtr, 3> factors;  ///< first d used
};

/// Sum over terms of coeff * F_1 (x) ... (x) F_d, acting on big-endian
/// n^d vectors (axis 0 slowest).
class KroneckerOperator {
public:
    KroneckerOperator() = default;
    KroneckerOperator(int d, std::size_t n) : d_(d), n_(n) {
        if (d < 1 || d > 3) throw SizeError("KroneckerOperator: d must be 1, 2 or 3");
    }

    int d() const noexcept { return d_; }
    std::size_t n() const noexcept { return n_; }
    GridShape shape() const noexcept { return {d_, n_}; }
    std::size_t size() const noexcept { return shape().size(); }
    const std::vector<KronTerm>& terms() const noexcept { return terms_; }

    void add_term(double coeff, std::span<const FactorPtr> factors) {
        if (static_cast<int>(factors.size()) != d_) throw SizeError("add_term: expected d factors");
        KronTerm t;
        t.coeff = coeff;
        for (int l = 0; l < d_; ++l) {
            if (!factors[l] || factors[l]->n() != n_) throw SizeError("add_term: factor size mismatch");
            t.factors[l] = factors[l];
        }
        terms_.push_back(std::move(t));
    }

    /// y += scale * (this) x, term by term on the supports of the factors.
    void apply_add(std::span<const double> x, std::span<double> y, double scale = 1.0) const {
        require_size(x, size(), "kron_matvec");
        require_size(y, size(), "kron_matvec");
        std::vector<double> a, b;
        for (const auto& t : terms_) apply_term(t, x, y, scale, a, b);
    }

    void apply(std::span<const double> x, std::span<double> y) const {
        require_size(y, size(), "kron_matvec");
        std::fill(y.begin(), y.end(), 0.0);
        apply_add(x, y);
    }

    std::vector<double> operator()(std::span<const double> x) const {
        std::vector<double> y(size());
        apply(x, y);
        return y;
    }

private:
    void apply_term(const KronTerm& t, std::span<const double> x, std::span<double> y, double scale,
                    std::vector<double>& a, std::vector<double>& b) const {
        std::array<std::size_t, 3> m{1, 1, 1};
        std::array<std::vector<std::size_t>, 3> off;
        std::array<std::size_t, 3> stride{0, 0, 0};
        std::size_t st = 1;
        for (int l = d_ - 1; l >= 0; --l) {
            stride[l] = st;
            st *= n_;
        }
        std::size_t block = 1;
        for (int l = 0; l < 3; ++l) {
            if (l < d_) {
                const auto& f = *t.factors[l];
                m[l] = f.local_size();
                off[l].resize(m[l]);
                for (std::size_t i = 0; i < m[l]; ++i) off[l][i] = f.global_index(i) * stride[l];
            } else {
                off[l].assign(1, 0);
            }
            block *= m[l];
        }
        a.resize(block);
        b.resize(block);
        std::size_t p = 0;
        for (std::size_t i = 0; i < m[0]; ++i)
            for (std::size_t j = 0; j < m[1]; ++j) {
                const std::size_t base = off[0][i] + off[1][j];
                for (std::size_t k = 0; k < m[2]; ++k) a[p++] = x[base + off[2][k]];
            }
        for (int l = 0; l < d_; ++l) {
            const auto& f = *t.factors[l];
            if (f.is_identity()) continue;
            std::size_t outer = 1, inner = 1;
            for (int q = 0; q < l; ++q) outer *= m[q];
            for (int q = l + 1; q < 3; ++q) inner *= m[q];
            f.mode_product(a.data(), b.data(), outer, inner);
            a.swap(b);
        }
        const double c = scale * t.coeff;
        p = 0;
        for (std::size_t i = 0; i < m[0]; ++i)
            for (std::size_t j = 0; j < m[1]; ++j) {
                const std::size_t base = off[0][i] + off[1][j];
                for (std::size_t k = 0; k < m[2]; ++k) y[base + off[2][k]] += c * a[p++];
            }
    }

    int d_ = 2;
    std::size_t n_ = 0;
    std::vector<KronTerm> terms_;
};

/// A_lap = sum_l I (x) .. (x) P_l (x) .. (x) I with P the periodic 1D Laplacian.
inline KroneckerOperator assemble_periodic_laplacian(int d, std::size_t n) {
    if (d != 2 && d != 3) throw SizeError("assemble_periodic_laplacian: d must be 2 or 3");
    const auto eye = std::make_shared<const Sparse1D>(Sparse1D::identity(n));
    const auto lap = std::make_shared<const Sparse1D>(laplacian_1d_periodic(n));
    KroneckerOperator op(d, n);
    for (int l = 0; l < d; ++l) {
        std::array<FactorPtr, 3> f{eye, eye, eye};
        f[l] = lap;
        op.add_term(1.0, std::span<const FactorPtr>(f.data(), static_cast<std::size_t>(d)));
    }
    return op;
}

/// A_s = sum over covered cells of beta_k * sum_l (I_k (x) .. Q_k (slot l) .. (x) I_k),
/// where Q_k, I_k are the Neumann Laplacian and lumped mass of size k+1
/// embedded at the sub-cell window (indices wrap mod n). Windows depend
/// only on the cell coordinate along an axis, so factors are shared.
inline KroneckerOperator assemble_stochastic_part(const Realization& r) {
    const auto& c = r.config;
    c.validate();
    const std::size_t n = c.n();
    const std::size_t len = static_cast<std::size_t>(c.subcell_intervals()) + 1;
    std::vector<FactorPtr> q(static_cast<std::size_t>(c.L)), m(static_cast<std::size_t>(c.L));
    const auto qb = neumann_block(len);
    const auto mb = lumped_mass_block(len);
    KroneckerOperator op(c.d, n);
    for (std::size_t k = 0; k < r.K(); ++k) {
        std::array<FactorPtr, 3> qf, mf;
        for (int l = 0; l < c.d; ++l) {
            const auto s = static_cast<std::size_t>(r.covered[k][l]);
            if (!q[s]) {
                const auto w = window(subcell_start(c, r.covered[k][l]), len, n);
                q[s] = std::make_shared<const Sparse1D>(Sparse1D::from_block(n, w, qb));
                m[s] = std::make_shared<const Sparse1D>(Sparse1D::from_block(n, w, mb));
            }
            qf[l] = q[s];
            mf[l] = m[s];
        }
        for (int slot = 0; slot < c.d; ++slot) {
            std::array<FactorPtr, 3> f = mf;
            f[slot] = qf[slot];
            op.add_term(r.cell_beta[k], std::span<const FactorPtr>(f.data(), static_cast<std::size_t>(c.d)));
        }
    }
    return op;
}

/// x -> lambda * A_lap x + A_s x.
class StiffnessOperator {
public:
    StiffnessOperator(KroneckerOperator laplacian, KroneckerOperator stochastic, double lambda)
        : laplacian_(std::move(laplacian)), stochastic_(std::move(stochastic)), lambda_(lambda) {
        if (laplacian_.shape() != stochastic_.shape()) throw SizeError("StiffnessOperator: shape mismatch");
    }

    const KroneckerOperator& laplacian_part() const noexcept { return laplacian_; }
    const KroneckerOperator& stochastic_part() const noexcept { return stochastic_; }
    double lambda() const noexcept { return lambda_; }
    GridShape shape() const noexcept { return laplacian_.shape(); }
    std::size_t size() const noexcept { return laplacian_.size(); }

    void apply(std::span<const double> x, std::span<double> y) const {
        require_size(y, size(), "kron_matvec");
        std::fill(y.begin(), y.end(), 0.0);
        laplacian_.apply_add(x, y, lambda_);
        stochastic_.apply_add(x, y);
    }

    std::vector<double> operator()(std::span<const double> x) const {
        std::vector<double> y(size());
        apply(x, y);
        return y;
    }

private:
    KroneckerOperator laplacian_;
    KroneckerOperator stochastic_;
    double lambda_;
};

inline StiffnessOperator assemble_stiffness(const Realization& r) {
    return StiffnessOperator(assemble_periodic_laplacian(r.config.d, r.config.n()),
                             assemble_stochastic_part(r), r.config.lambda);
}

template <class Op>
std::vector<double> kron_matvec(const Op& op, std::span<const double> x) {
    require_size(x, op.size(), "kron_matvec");
    std::vector<double> y(op.size());
    op.apply(x, y);
    return y;
}

/// Explicit entries of the operator from products of factor entries
/// (independent of the matvec path). Coalesced, sorted by (row, col).
inline std::vector<Triplet> expand_entries(const KroneckerOperator& op, double scale = 1.0) {
    const int d = op.d();
    const std::size_t n = op.n();
    std::vector<Triplet> out;
    for (const auto& t : op.terms()) {
        std::vector<Triplet> acc{{0, 0, scale * t.coeff}};
        for (int l = 0; l < d; ++l) {
            const auto f = t.factors[l]->triplets();
            std::vector<Triplet> next;
            next.reserve(acc.size() * f.size());
            for (const auto& a : acc)
                for (const auto& e : f) next.push_back({a.row * n + e.row, a.col * n + e.col, a.value * e.value});
            acc = std::move(next);
        }
        out.insert(out.end(), acc.begin(), acc.end());
    }
    return coalesce(std::move(out));
}

inline std::vector<Triplet> expand_entries(const StiffnessOperator& op) {
    auto a = expand_entries(op.laplacian_part(), op.lambda());
    auto b = expand_entries(op.stochastic_part());
    a.insert(a.end(), b.begin(), b.end());
    return coalesce(std::move(a));
}

inline constexpr std::size_t kDefaultDenseCap = 20000;

template <class Op>
Eigen::MatrixXd to_dense(const Op& op, std::size_t cap = kDefaultDenseCap) {
    const std::size_t N = op.size();
    if (N > cap)
        throw RefusalError("to_dense: " + std::to_string(N) + " unknowns exceed the cap of " + std::to_string(cap));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    for (const auto& e : expand_entries(op))
        m(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) += e.value;
    return m;
}

/// Groups terms whose factors on axes 0..d-2 coincide and sums their
/// last-axis factors (weighted by the term coefficients) into one factor.
/// For cell-centered sub-cells this merges every cell along a line of
/// cells parallel to the last axis.
inline KroneckerOperator agglomerate_strips(const KroneckerOperator& op) {
    const int d = op.d();
    using Key = std::array<const Sparse1D*, 2>;
    std::map<Key, std::vector<const KronTerm*>> groups;
    std::vector<Key> order;
    for (const auto& t : op.terms()) {
        Key key{nullptr, nullptr};
        for (int l = 0; l + 1 < d; ++l) key[l] = t.factors[l].get();
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(&t);
    }
    KroneckerOperator out(d, op.n());
    for (const auto& key : order) {
        const auto& members = groups[key];
        std::array<FactorPtr, 3> f = members.front()->factors;
        if (members.size() == 1) {
            out.add_term(members.front()->coeff, std::span<const FactorPtr>(f.data(), static_cast<std::size_t>(d)));
            continue;
        }
        std::vector<Triplet> merged;
        for (const auto* t : members)
            for (auto e : t->factors[d - 1]->triplets()) {
                e.value *= t->coeff;
                merged.push_back(e);
            }
        f[d - 1] = std::make_shared<const Sparse1D>(Sparse1D::from_triplets(op.n(), std::move(merged)));
        out.add_term(1.0, std::span<const FactorPtr>(f.data(), static_cast<std::size_t>(d)));
    }
    return out;
}

struct KroneckerRank {
    std::size_t raw = 0;           ///< terms as assembled
    std::size_t agglomerated = 0;  ///< terms after agglomerate_strips
    std::size_t strips = 0;        ///< distinct lines of cells (index windows on axes 0..d-2)
};

inline KroneckerRank kronecker_rank(const KroneckerOperator& op) {
    KroneckerRank r;
    r.raw = op.terms().size();
    r.agglomerated = agglomerate_strips(op).terms().size();
    std::set<std::vector<std::size_t>> strips;
    for (const auto& t : op.terms()) {
        std::vector<std::size_t> key;
        for (int l = 0; l + 1 < op.d(); ++l) {
            const auto& f = *t.factors[l];
            key.push_back(f.is_identity() ? op.n() : f.support().front());
            key.push_back(f.local_size());
        }
        strips.insert(key);
    }
    r.strips = strips.size();
    return r;
}

/// Stored nonzeros over distinct non-identity factors.
inline std::size_t stored_nonzeros(const KroneckerOperator& op) {
    std::set<const Sparse1D*> seen;
    std::size_t nnz = 0;
    for (const auto& t : op.terms())
        for (int l = 0; l < op.d(); ++l) {
            const auto* f = t.factors[l].get();
            if (f->is_identity() || !seen.insert(f).second) continue;
            nnz += f->nnz();
        }
    return nnz;
}

}  // namespace kronhom
