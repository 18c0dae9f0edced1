// Acceptance runner: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kronhom/cli.hpp"
#include "kronhom/kronhom.hpp"
#include "support/oracles.hpp"

using namespace kronhom;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

template <class... T>
std::string cat(const T&... parts) {
    std::ostringstream o;
    o.precision(4);
    (o << ... << parts);
    return o.str();
}

Outcome assembly_oracle() {
    oracle::Gen gen(1001);
    double worst = 0.0;
    int cases = 0;
    for (int d : {2, 3})
        for (int L : {2, 3})
            for (int n0 : {4, 8})
                for (int rep = 0; rep < 20; ++rep) {
                    const auto r = sample_realization(gen.lattice(d, L, n0), gen.u64());
                    const auto A = assemble_stiffness(r);
                    const auto ref = oracle::edge_stiffness(r);
                    double err = 0.0;
                    if (A.size() <= 1024) {
                        err = (to_dense(A) - oracle::to_dense(ref, A.size())).cwiseAbs().maxCoeff();
                    } else {
                        err = oracle::max_abs_difference(ref, expand_entries(A));
                    }
                    worst = std::max(worst, err);
                    ++cases;
                }
    return {worst <= 1e-12, cat(cases, " realizations, max |K - K_ref| = ", worst, " (limit 1e-12)")};
}

Outcome spectral_oracle() {
    double eig = 0.0;
    for (std::size_t n = 3; n <= 64; ++n) {
        const auto s = fourier_eigenvalues(n);
        for (std::size_t j = 0; j < n; ++j) eig = std::max(eig, std::abs(s.lambda[j] - oracle::eigenvalue(j, n)));
    }
    oracle::Gen gen(1002);
    double ident = 0.0;
    for (int d : {2, 3})
        for (std::size_t n : {3u, 8u, 16u, 17u, 32u}) {
            if (d == 3 && n > 17) continue;
            const auto A = assemble_periodic_laplacian(d, n);
            const auto P = FourierPreconditioner::exact(d, n);
            for (int rep = 0; rep < 5; ++rep) {
                const auto x = gen.mean_zero_vector(A.size());
                const auto y = P(A(x));
                double e = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) e += (y[i] - x[i]) * (y[i] - x[i]);
                ident = std::max(ident, std::sqrt(e) / norm2(x));
            }
        }
    return {eig <= 1e-12 && ident <= 1e-10,
            cat("eigenvalue error ", eig, " (limit 1e-12), P A x = x relative error ", ident, " (limit 1e-10)")};
}

Outcome lowrank_accuracy() {
    bool ok = true;
    std::string detail;
    for (std::size_t n : {16u, 32u}) {
        const auto s = fourier_eigenvalues(n);
        ExpSumQuadrature q;
        const auto t = dc_correction(canonical_reciprocal(s, 3, 1e-8, &q));
        const auto g = pseudoinverse_diag(eigensum_tensor(3, s));
        const double err = max_rel_error(t, g, n * n * n);
        const double limit = 1e-8 / q.a;
        std::vector<double> logs, ranks;
        for (int k = 2; k <= 10; ++k) {
            const double eps = std::pow(10.0, -k);
            logs.push_back(std::log(1.0 / eps));
            ranks.push_back(static_cast<double>(canonical_reciprocal(s, 3, eps).rank()));
        }
        const double rho = oracle::pearson(logs, ranks);
        ok = ok && err <= limit && rho >= 0.98;
        detail += cat("n=", n, ": R=", q.rank(), " rel err ", err, " (limit ", limit, "), corr ", rho, "; ");
    }
    return {ok, detail + "corr limit 0.98"};
}

Outcome iteration_robustness() {
    LatticeConfig c;
    c.d = 3;
    c.n0 = 4;
    c.alpha = {1, 4};
    c.lambda = 0.4;
    auto fourier = SolveOptions::for_dimension(3);
    fourier.tolerance = 1e-7;
    auto lkr = fourier;
    lkr.preconditioner = PreconditionerKind::lkr;
    lkr.eps_rank = 1e-8;
    int worst_f = 0, worst_l = 0;
    for (int L : {4, 8, 16}) {
        c.L = L;
        const auto Pf = Preconditioner::make(fourier, c.shape());
        const auto Pl = Preconditioner::make(lkr, c.shape());
        for (int s = 0; s < 10; ++s) {
            const auto r = sample_realization(c, derive_seed(4000 + L, s));
            const auto hf = homogenized_matrix(r, fourier, Pf);
            const auto hl = homogenized_matrix(r, lkr, Pl);
            for (int i = 0; i < 3; ++i) {
                worst_f = std::max(worst_f, hf.iterations[i]);
                worst_l = std::max(worst_l, hl.iterations[i]);
            }
        }
    }
    return {worst_f <= 20 && worst_l <= 22,
            cat("max iterations Fourier ", worst_f, " (limit 20), LKR(1e-8) ", worst_l, " (limit 22)")};
}

Outcome homogenization_exactness() {
    double zero_err = 0.0, full_err = 0.0, asym = 0.0;
    double full_tol = 0.0;
    for (int d : {2, 3}) {
        LatticeConfig c;
        c.d = d;
        c.L = 4;
        c.coverage_prob = 0.0;
        const auto o = SolveOptions::for_dimension(d);
        const auto h0 = homogenized_matrix(sample_realization(c, 1), o);
        c.alpha = {1, 2};
        c.coverage_prob = 1.0;
        const auto h1 = homogenized_matrix(sample_realization(c, 1), o);
        full_tol = std::max(full_tol, o.tolerance);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                zero_err = std::max(zero_err, std::abs(h0.a[i][j] - (i == j ? c.lambda : 0.0)));
                full_err = std::max(full_err, std::abs(h1.a[i][j] - (i == j ? 1.0 : 0.0)));
            }
    }
    LatticeConfig c;
    c.d = 2;
    c.L = 8;
    const auto o = SolveOptions::for_dimension(2);
    const auto P = Preconditioner::make(o, c.shape());
    for (int s = 0; s < 50; ++s) {
        const auto h = homogenized_matrix(sample_realization(c, derive_seed(5000, s)), o, P);
        asym = std::max(asym, h.asymmetry());
    }
    return {zero_err <= 1e-10 && full_err <= full_tol && asym <= 1e-6,
            cat("|A - lambda I| ", zero_err, " (limit 1e-10), |A - I| ", full_err, " (limit ", full_tol,
                "), max asymmetry ", asym, " (limit 1e-6)")};
}

Outcome deviation_law() {
    auto sweep = [](int d, std::vector<int> Ls, std::size_t M) {
        LatticeConfig c;
        c.d = d;
        c.lambda = 0.4;
        const auto o = SolveOptions::for_dimension(d);
        std::vector<EnsembleStats> all;
        for (int L : Ls) {
            c.L = L;
            all.push_back(ensemble_run(c, M, 6000 + static_cast<std::uint64_t>(d), o));
        }
        return deviation_slope(all, 0, 0);
    };
    const auto f2 = sweep(2, {4, 8, 16, 32}, 200);
    const auto f3 = sweep(3, {4, 8, 16}, 100);
    const bool ok = std::abs(f2.slope + 1.0) <= 0.3 && std::abs(f3.slope + 1.5) <= 0.4;
    return {ok, cat("2D slope ", f2.slope, " (target -1.0 +- 0.3), 3D slope ", f3.slope, " (target -1.5 +- 0.4)")};
}

Outcome scaling_trend() {
    LatticeConfig c;
    c.d = 2;
    auto o = SolveOptions::for_dimension(2);
    o.preconditioner = PreconditionerKind::lkr;
    std::vector<double> logN, logT;
    std::string detail;
    for (int L : {8, 16, 32, 64}) {
        c.L = L;
        const auto P = Preconditioner::make(o, c.shape());
        std::vector<double> t;
        for (int s = 0; s < 5; ++s) {
            const auto h = homogenized_matrix(sample_realization(c, derive_seed(7000, s)), o, P);
            t.push_back(h.times.assembly + h.times.solve);
        }
        std::sort(t.begin(), t.end());
        const double N = static_cast<double>(c.shape().size());
        logN.push_back(std::log(N));
        logT.push_back(std::log(t[t.size() / 2]));
        detail += cat("N=", N, ": ", t[t.size() / 2], " s; ");
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < logN.size(); ++i) {
        mx += logN[i];
        my += logT[i];
    }
    mx /= static_cast<double>(logN.size());
    my /= static_cast<double>(logN.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < logN.size(); ++i) {
        sxx += (logN[i] - mx) * (logN[i] - mx);
        sxy += (logN[i] - mx) * (logT[i] - my);
    }
    const double slope = sxy / sxx;
    return {slope <= 1.25, detail + cat("log-log slope ", slope, " (limit 1.25)")};
}

Outcome determinism() {
    namespace fs = std::filesystem;
    const auto base = fs::temp_directory_path() / "kronhom_acceptance";
    fs::remove_all(base);
    const auto a = base / "a", b = base / "b";
    std::ostringstream out, err;
    int code = cli::run({"sweep", "--d", "2", "--L", "4,8,16", "--M", "20", "--seed", "8080", "--out", a.string()},
                        out, err);
    if (code != 0) return {false, "first sweep failed: " + err.str()};
    code = cli::run({"sweep", "--config", (a / "config.toml").string(), "--out", b.string(), "--workers", "3"}, out,
                    err);
    if (code != 0) return {false, "re-run failed: " + err.str()};
    const auto ra = read_text(a / "records.csv"), rb = read_text(b / "records.csv");
    fs::remove_all(base);
    return {ra == rb && !ra.empty(), cat("records.csv ", ra.size(), " bytes, identical: ", ra == rb ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 assembly oracle equivalence", assembly_oracle},
        {"2 spectral oracle", spectral_oracle},
        {"3 low-rank preconditioner accuracy", lowrank_accuracy},
        {"4 iteration robustness", iteration_robustness},
        {"5 homogenization exactness", homogenization_exactness},
        {"6 deviation law", deviation_law},
        {"7 scaling trend", scaling_trend},
        {"8 determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %s: %s [%s]\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str(),
                    fmt("%.1f s", s).c_str());
        std::fflush(stdout);
        failed += r.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
