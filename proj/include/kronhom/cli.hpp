#pragma once

// Command-line front end: sample, solve, homogenize, sweep, precond-report.
// Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
// 1 anything else. Failures print one JSON object to the error stream.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kronhom/config.hpp"
#include "kronhom/errors.hpp"
#include "kronhom/homogenize.hpp"
#include "kronhom/io.hpp"
#include "kronhom/lattice.hpp"
#include "kronhom/lowrank.hpp"
#include "kronhom/operators.hpp"
#include "kronhom/solver.hpp"
#include "kronhom/spectral.hpp"

namespace kronhom::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Values given on the command line; applied over the config file.
struct Overrides {
    std::string config;
    std::uint64_t seed = 0;
    std::vector<int> L;
    double lambda = 0.0;
    int n0 = 0;
    std::string alpha;
    std::size_t M = 0;
    std::string precond;
    double eps = 0.0;
    double eps_rank = 0.0;
    std::string out;
    bool trace = false;
    unsigned workers = 0;
    bool skip_failed = false;
    int d = 0;
    int direction = 0;
    std::vector<double> eps_list;
    double coverage = 0.0;
    std::string contrast;
    std::vector<double> betas;
    double delta = 0.0;
    int max_iter = 0;
    int offset = 0;
    bool npy = false;
    std::size_t audit_sample = 0;
};

struct Context {
    RunConfig config;
    std::ostream& out;
};

namespace detail {

inline std::string config_header(const RunConfig& c) { return to_toml(c); }

inline json envelope(const std::string& command, const RunConfig& c) {
    return json{{"command", command}, {"config", to_json(c)}};
}

inline fs::path out_dir(const RunConfig& c) {
    fs::create_directories(c.out);
    return fs::path(c.out);
}

inline std::vector<std::string> matrix_columns(const std::string& prefix, int d) {
    std::vector<std::string> cols;
    for (int i = 1; i <= d; ++i)
        for (int j = 1; j <= d; ++j) cols.push_back(prefix + std::to_string(i) + std::to_string(j));
    return cols;
}

inline void append_matrix(std::vector<std::string>& row, const Matrix3& a, int d) {
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) row.push_back(format_double(a[i][j]));
}

inline std::vector<std::string> record_columns(int d) {
    std::vector<std::string> cols{"seed", "L", "lambda", "K"};
    for (const auto& c : matrix_columns("a", d)) cols.push_back(c);
    for (int i = 1; i <= d; ++i) cols.push_back("iterations" + std::to_string(i));
    return cols;
}

inline std::vector<std::string> record_row(const HomogenizedMatrix& h) {
    std::vector<std::string> row{std::to_string(h.seed), std::to_string(h.L), format_double(h.lambda),
                                 std::to_string(h.K)};
    append_matrix(row, h.a, h.d);
    for (int i = 0; i < h.d; ++i) row.push_back(std::to_string(h.iterations[i]));
    return row;
}

}  // namespace detail

inline int cmd_sample(Context& ctx) {
    const auto& c = ctx.config;
    const auto r = sample_realization(c.lattice, c.seed);
    const auto dir = detail::out_dir(c);
    auto doc = detail::envelope("sample", c);
    doc["realization"] = to_json(r);
    write_text(dir / "realization.json", doc.dump(2) + "\n");

    const auto g = coefficient_grid(r);
    const std::size_t n = g.shape.n;
    const int d = g.shape.d;
    std::vector<std::string> cols = d == 2 ? std::vector<std::string>{"i", "j", "x", "y", "value"}
                                           : std::vector<std::string>{"i", "j", "k", "x", "y", "z", "value"};
    CsvTable slice(cols, detail::config_header(c));
    const std::size_t mid = n / 2;
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (d == 2) {
                slice.row({std::to_string(a), std::to_string(b), format_double(a * h), format_double(b * h),
                           format_double(g.at({a, b, 0}))});
            } else {
                slice.row({std::to_string(mid), std::to_string(a), std::to_string(b), format_double(mid * h),
                           format_double(a * h), format_double(b * h), format_double(g.at({mid, a, b}))});
            }
        }
    slice.save(dir / "coefficient_slice.csv");
    std::vector<std::string> files{"realization.json", "coefficient_slice.csv"};
    if (c.npy) {
        write_npy(dir / "coefficient_grid.npy", g.values, std::vector<std::size_t>(static_cast<std::size_t>(d), n));
        files.push_back("coefficient_grid.npy");
    }
    ctx.out << json{{"command", "sample"}, {"seed", c.seed}, {"K", r.K()}, {"out", c.out}, {"files", files}}.dump()
            << "\n";
    return kExitOk;
}

inline int cmd_solve(Context& ctx) {
    const auto& c = ctx.config;
    const auto r = sample_realization(c.lattice, c.seed);
    const int d = c.lattice.d;
    const std::size_t n = c.lattice.n();

    auto t0 = std::chrono::steady_clock::now();
    const auto A = assemble_stiffness(r);
    const double t_assembly = kronhom::detail::seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto f = corrector_rhs(r, c.direction - 1);
    const double stiff_scale = std::pow(1.0 / static_cast<double>(n), d - 2);
    for (double& v : f) v /= stiff_scale;
    const double t_rhs = kronhom::detail::seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto P = Preconditioner::make(c.solver, c.lattice.shape());
    const double t_precond = kronhom::detail::seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto [u, rep] = pcg_solve(A, f, P, c.solver);
    const double t_solve = kronhom::detail::seconds_since(t0);

    const auto dir = detail::out_dir(c);
    auto doc = detail::envelope("solve", c);
    doc["K"] = r.K();
    doc["N"] = A.size();
    doc["direction"] = c.direction;
    doc["report"] = to_json(rep);
    doc["times"] = {{"assembly", t_assembly}, {"rhs", t_rhs}, {"preconditioner", t_precond}, {"solve", t_solve}};
    write_text(dir / "solve.json", doc.dump(2) + "\n");
    if (c.trace) {
        CsvTable trace({"iteration", "relative_residual"}, detail::config_header(c));
        for (std::size_t k = 0; k < rep.history.size(); ++k)
            trace.row({std::to_string(k), format_double(rep.history[k])});
        trace.save(dir / "trace.csv");
    }
    ctx.out << json{{"command", "solve"},
                    {"iterations", rep.iterations},
                    {"converged", rep.converged},
                    {"final_residual", rep.final_residual},
                    {"preconditioner", rep.preconditioner}}
                   .dump()
            << "\n";
    return rep.converged ? kExitOk : kExitNumerical;
}

inline int cmd_homogenize(Context& ctx) {
    const auto& c = ctx.config;
    const auto dir = detail::out_dir(c);
    auto doc = detail::envelope("homogenize", c);
    json results = json::array();
    CsvTable table(detail::record_columns(c.lattice.d), detail::config_header(c));
    for (int L : c.L_list) {
        const auto r = sample_realization(c.lattice_for(L), c.seed);
        const auto h = homogenized_matrix(r, c.solver);
        results.push_back(to_json(h));
        table.row(detail::record_row(h));
    }
    doc["results"] = results;
    write_text(dir / "homogenized.json", doc.dump(2) + "\n");
    table.save(dir / "homogenized.csv");
    json brief = json::array();
    for (const auto& r : results) brief.push_back(json{{"L", r["L"]}, {"a", r["a"]}, {"iterations", r["iterations"]}});
    ctx.out << json{{"command", "homogenize"}, {"results", brief}}.dump() << "\n";
    return kExitOk;
}

inline int cmd_sweep(Context& ctx) {
    const auto& c = ctx.config;
    const int d = c.lattice.d;
    std::vector<EnsembleStats> all;
    EnsembleOptions eo;
    eo.workers = c.workers;
    eo.skip_failed = c.skip_failed;
    for (int L : c.L_list) all.push_back(ensemble_run(c.lattice_for(L), c.M, c.seed, c.solver, eo));

    const auto dir = detail::out_dir(c);
    const auto header = detail::config_header(c);
    CsvTable records(detail::record_columns(d), header);
    CsvTable timings({"index", "seed", "L", "assembly_s", "rhs_s", "solve_s"}, header);
    CsvTable failures({"index", "seed", "L", "error"}, header);
    std::vector<std::string> stat_cols{"L", "M", "used", "lambda"};
    for (const auto& s : detail::matrix_columns("mean", d)) stat_cols.push_back(s);
    for (const auto& s : detail::matrix_columns("sigma", d)) stat_cols.push_back(s);
    CsvTable stats(stat_cols, header);
    std::size_t failed = 0;
    json levels = json::array();
    for (const auto& s : all) {
        for (const auto& rec : s.records) {
            if (rec.failed) {
                ++failed;
                std::string msg = rec.error;
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                failures.row({std::to_string(rec.index), std::to_string(rec.seed), std::to_string(s.L), msg});
                continue;
            }
            records.row(detail::record_row(rec.result));
            const auto& t = rec.result.times;
            timings.row({std::to_string(rec.index), std::to_string(rec.seed), std::to_string(s.L),
                         format_double(t.assembly), format_double(t.rhs), format_double(t.solve)});
        }
        std::vector<std::string> row{std::to_string(s.L), std::to_string(s.M), std::to_string(s.used),
                                     format_double(s.lambda)};
        detail::append_matrix(row, s.mean, d);
        detail::append_matrix(row, s.sigma, d);
        stats.row(row);
        levels.push_back(json{{"L", s.L}, {"M", s.M}, {"used", s.used}, {"mean", to_json(s.mean, d)},
                              {"sigma", to_json(s.sigma, d)}});
    }
    records.save(dir / "records.csv");
    stats.save(dir / "stats.csv");
    timings.save(dir / "timings.csv");
    if (failed > 0) failures.save(dir / "failures.csv");
    write_text(dir / "config.toml", header);

    auto slope = detail::envelope("sweep", c);
    json fits = json::object();
    if (all.size() >= 3) {
        for (int i = 0; i < d; ++i) {
            const std::string name = "a" + std::to_string(i + 1) + std::to_string(i + 1);
            try {
                fits[name] = to_json(deviation_slope(all, i, i));
            } catch (const InsufficientData& e) {
                fits[name] = json{{"error", e.what()}};
            }
        }
        slope["fit"] = fits.contains("a11") ? fits["a11"] : json(nullptr);
    } else {
        slope["fit"] = nullptr;
        slope["note"] = "slope fit needs at least three distinct L values";
    }
    slope["fits"] = fits;
    write_text(dir / "slope.json", slope.dump(2) + "\n");

    auto summary = detail::envelope("sweep", c);
    summary["levels"] = levels;
    summary["fits"] = fits;
    summary["failed"] = failed;
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    json out{{"command", "sweep"}, {"levels", c.L_list.size()}, {"failed", failed}, {"out", c.out}};
    if (fits.contains("a11") && fits["a11"].contains("slope")) out["slope_a11"] = fits["a11"]["slope"];
    ctx.out << out.dump() << "\n";
    return kExitOk;
}

inline int cmd_precond_report(Context& ctx) {
    const auto& c = ctx.config;
    const int d = c.lattice.d;
    const std::size_t n = c.lattice.n();
    const auto spectrum = fourier_eigenvalues(n);
    const auto g_plus = pseudoinverse_diag(eigensum_tensor(d, spectrum));
    std::vector<double> eps = c.eps_list;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());

    CsvTable audit({"eps", "rank", "canonical_rank", "a", "b", "quadrature_error", "max_rel_entry_error",
                    "abs_bound"},
                   detail::config_header(c));
    json rows = json::array();
    for (double e : eps) {
        ExpSumQuadrature q;
        const auto t = dc_correction(canonical_reciprocal(spectrum, d, e, &q));
        const double err = max_rel_error(t, g_plus, c.audit_sample);
        audit.row({format_double(e), std::to_string(q.rank()), std::to_string(t.rank()), format_double(q.a),
                   format_double(q.b), format_double(q.achieved), format_double(err), format_double(e / q.a)});
        rows.push_back(json{{"eps", e}, {"rank", q.rank()}, {"max_rel_entry_error", err}});
    }
    const auto dir = detail::out_dir(c);
    audit.save(dir / "precond_audit.csv");
    ctx.out << json{{"command", "precond-report"}, {"d", d}, {"n", n}, {"rows", rows}}.dump() << "\n";
    return kExitOk;
}

inline json error_json(const std::string& kind, const std::string& type, const std::string& message) {
    return json{{"error", {{"kind", kind}, {"type", type}, {"message", message}}}};
}

/// Runs one subcommand. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Random checkerboard homogenization with Kronecker-structured PCG"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides ov;
    auto* o_config = app.add_option("--config", ov.config, "TOML config file");
    auto* o_seed = app.add_option("--seed", ov.seed, "master seed");
    auto* o_L = app.add_option("--L", ov.L, "lattice size(s), comma separated")->delimiter(',');
    auto* o_lambda = app.add_option("--lambda", ov.lambda, "background coefficient");
    auto* o_n0 = app.add_option("--n0", ov.n0, "grid intervals per cell");
    auto* o_alpha = app.add_option("--alpha", ov.alpha, "overlap factor, e.g. 1/4");
    auto* o_M = app.add_option("--M", ov.M, "realizations per lattice size");
    auto* o_precond = app.add_option("--precond", ov.precond, "fourier | lkr | rp");
    auto* o_eps = app.add_option("--eps", ov.eps, "relative residual tolerance");
    auto* o_eps_rank = app.add_option("--eps-rank", ov.eps_rank, "low-rank tolerance");
    auto* o_out = app.add_option("--out", ov.out, "output directory");
    auto* o_trace = app.add_flag("--trace", ov.trace, "write residual histories");
    auto* o_workers = app.add_option("--workers", ov.workers, "worker threads");
    auto* o_skip = app.add_flag("--skip-failed", ov.skip_failed, "exclude failed realizations");
    auto* o_d = app.add_option("--d", ov.d, "dimension (2 or 3)");
    auto* o_dir = app.add_option("--direction", ov.direction, "corrector direction (1..d)");
    auto* o_eps_list = app.add_option("--eps-list", ov.eps_list, "low-rank tolerances to audit")->delimiter(',');
    auto* o_cov = app.add_option("--coverage", ov.coverage, "cell coverage probability");
    auto* o_contrast = app.add_option("--contrast", ov.contrast, "fixed | two_value | layered");
    auto* o_betas = app.add_option("--betas", ov.betas, "contrast values")->delimiter(',');
    auto* o_delta = app.add_option("--delta", ov.delta, "shift of the rp preconditioner");
    auto* o_max_iter = app.add_option("--max-iter", ov.max_iter, "PCG iteration cap");
    auto* o_offset = app.add_option("--offset", ov.offset, "sub-cell offset inside its cell");
    auto* o_npy = app.add_flag("--npy", ov.npy, "also dump the coefficient grid as .npy");
    auto* o_sample = app.add_option("--audit-sample", ov.audit_sample, "entries checked by precond-report");

    auto* s_sample = app.add_subcommand("sample", "draw a realization and dump its coefficient");
    auto* s_solve = app.add_subcommand("solve", "solve one corrector problem");
    auto* s_hom = app.add_subcommand("homogenize", "homogenized matrix of one realization");
    auto* s_sweep = app.add_subcommand("sweep", "Monte-Carlo ensembles over the L list");
    auto* s_report = app.add_subcommand("precond-report", "low-rank tolerance vs rank table");

    std::vector<std::string> argv_store{"kronhom"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());

    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            err << error_json("config", "ParseError", e.what()).dump() << "\n";
            return kExitConfig;
        }

        RunConfig cfg = o_config->count() ? read_config_file(ov.config) : RunConfig{};
        if (o_seed->count()) cfg.seed = ov.seed;
        if (o_L->count()) cfg.L_list = ov.L;
        if (o_lambda->count()) cfg.lattice.lambda = ov.lambda;
        if (o_n0->count()) cfg.lattice.n0 = ov.n0;
        if (o_alpha->count()) cfg.lattice.alpha = parse_rational(ov.alpha, "alpha");
        if (o_M->count()) cfg.M = ov.M;
        if (o_precond->count()) cfg.solver.preconditioner = parse_preconditioner_kind(ov.precond);
        if (o_eps->count()) {
            cfg.solver.tolerance = ov.eps;
            cfg.eps_explicit = true;
        }
        if (o_eps_rank->count()) cfg.solver.eps_rank = ov.eps_rank;
        if (o_out->count()) cfg.out = ov.out;
        if (o_trace->count()) cfg.trace = true;
        if (o_workers->count()) cfg.workers = ov.workers;
        if (o_skip->count()) cfg.skip_failed = true;
        if (o_d->count()) cfg.lattice.d = ov.d;
        if (o_dir->count()) cfg.direction = ov.direction;
        if (o_eps_list->count()) cfg.eps_list = ov.eps_list;
        if (o_cov->count()) cfg.lattice.coverage_prob = ov.coverage;
        if (o_contrast->count()) cfg.lattice.contrast.kind = parse_contrast_kind(ov.contrast);
        if (o_betas->count()) cfg.lattice.contrast.betas = ov.betas;
        if (o_delta->count()) cfg.solver.delta = ov.delta;
        if (o_max_iter->count()) cfg.solver.max_iter = ov.max_iter;
        if (o_offset->count()) cfg.lattice.offset = ov.offset;
        if (o_npy->count()) cfg.npy = true;
        if (o_sample->count()) cfg.audit_sample = ov.audit_sample;
        cfg.resolve();
        for (const auto& w : cfg.warnings) err << json{{"warning", w}}.dump() << "\n";

        Context ctx{std::move(cfg), out};
        if (s_sample->parsed()) return cmd_sample(ctx);
        if (s_solve->parsed()) return cmd_solve(ctx);
        if (s_hom->parsed()) return cmd_homogenize(ctx);
        if (s_sweep->parsed()) return cmd_sweep(ctx);
        if (s_report->parsed()) return cmd_precond_report(ctx);
        return kExitConfig;
    } catch (const ConfigError& e) {
        auto j = error_json("config", "ConfigError", e.what());
        j["error"]["key"] = e.key();
        err << j.dump() << "\n";
        return kExitConfig;
    } catch (const SizeError& e) {
        err << error_json("config", "SizeError", e.what()).dump() << "\n";
        return kExitConfig;
    } catch (const RefusalError& e) {
        err << error_json("config", "RefusalError", e.what()).dump() << "\n";
        return kExitConfig;
    } catch (const SolveFailure& e) {
        auto j = error_json("numerical", "SolveFailure", e.what());
        j["error"]["seed"] = e.seed();
        j["error"]["L"] = e.L();
        err << j.dump() << "\n";
        return kExitNumerical;
    } catch (const ApproximationError& e) {
        auto j = error_json("numerical", "ApproximationError", e.what());
        j["error"]["best_error"] = e.best_error();
        err << j.dump() << "\n";
        return kExitNumerical;
    } catch (const NumericalBreakdown& e) {
        err << error_json("numerical", "NumericalBreakdown", e.what()).dump() << "\n";
        return kExitNumerical;
    } catch (const InsufficientData& e) {
        err << error_json("numerical", "InsufficientData", e.what()).dump() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << error_json("other", "Error", e.what()).dump() << "\n";
        return kExitOther;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace kronhom::cli
