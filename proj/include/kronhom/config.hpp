#pragma once

// Run configuration: a flat TOML key/value document plus command-line
// overrides, resolved and validated before any computation.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "kronhom/errors.hpp"
#include "kronhom/lattice.hpp"
#include "kronhom/solver.hpp"

namespace kronhom {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace toml {

struct Value {
    enum class Kind { string, integer, real, boolean, array } kind = Kind::string;
    std::string text;  ///< raw token (unquoted for strings)
    std::vector<Value> items;

    bool is_number() const noexcept { return kind == Kind::integer || kind == Kind::real; }
};

using Table = std::map<std::string, Value>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Drops a trailing '#' comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

inline Value parse_scalar(const std::string& tok, const std::string& key) {
    Value v;
    if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
        v.kind = Value::Kind::string;
        for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
            if (tok[i] == '\\' && i + 2 < tok.size()) ++i;
            v.text += tok[i];
        }
        return v;
    }
    if (tok == "true" || tok == "false") {
        v.kind = Value::Kind::boolean;
        v.text = tok;
        return v;
    }
    std::string t;
    for (char c : tok)
        if (c != '_') t += c;
    if (t.empty()) throw ConfigError(key, "missing value");
    long long iv = 0;
    auto ri = std::from_chars(t.data() + (t[0] == '+' ? 1 : 0), t.data() + t.size(), iv);
    std::uint64_t uv = 0;
    const bool big = ri.ec == std::errc::result_out_of_range &&
                     std::from_chars(t.data() + (t[0] == '+' ? 1 : 0), t.data() + t.size(), uv).ec == std::errc();
    if ((ri.ec == std::errc() && ri.ptr == t.data() + t.size()) || big) {
        v.kind = Value::Kind::integer;
        v.text = t[0] == '+' ? t.substr(1) : t;
        return v;
    }
    double dv = 0.0;
    auto rd = std::from_chars(t.data() + (t[0] == '+' ? 1 : 0), t.data() + t.size(), dv);
    if (rd.ec == std::errc() && rd.ptr == t.data() + t.size()) {
        v.kind = Value::Kind::real;
        v.text = t[0] == '+' ? t.substr(1) : t;
        return v;
    }
    throw ConfigError(key, "cannot parse value '" + tok + "'");
}

inline std::vector<std::string> split_array(const std::string& body, const std::string& key) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ConfigError(key, "unterminated string");
    const auto last = trim(cur);
    if (!last.empty()) out.push_back(last);
    for (const auto& s : out)
        if (s.empty()) throw ConfigError(key, "empty array element");
    return out;
}

}  // namespace detail

inline Value parse_value(const std::string& raw, const std::string& key) {
    const auto tok = detail::trim(raw);
    if (!tok.empty() && tok.front() == '[') {
        if (tok.back() != ']') throw ConfigError(key, "unterminated array");
        Value v;
        v.kind = Value::Kind::array;
        for (const auto& item : detail::split_array(tok.substr(1, tok.size() - 2), key)) {
            auto e = detail::parse_scalar(item, key);
            v.items.push_back(std::move(e));
        }
        return v;
    }
    return detail::parse_scalar(tok, key);
}

/// Flat `key = value` lines; comments with '#'; single-line arrays.
/// Table headers are not supported.
inline Table parse(std::istream& in) {
    Table t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[')
            throw ConfigError(s, "line " + std::to_string(lineno) + ": table headers are not supported");
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno), "expected key = value");
        auto key = detail::trim(s.substr(0, eq));
        if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
        if (t.count(key)) throw ConfigError(key, "duplicate key");
        t[key] = parse_value(s.substr(eq + 1), key);
    }
    return t;
}

inline Table parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

}  // namespace toml

struct RunConfig {
    LatticeConfig lattice;  ///< lattice.L is the first entry of L_list
    std::vector<int> L_list{4};
    SolveOptions solver;
    bool eps_explicit = false;
    std::size_t M = 100;
    std::uint64_t seed = 1;
    int direction = 1;  ///< 1-based, for `solve`
    std::vector<double> eps_list{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10};
    std::size_t audit_sample = 20000;
    bool skip_failed = false;
    bool trace = false;
    bool npy = false;
    // Not part of the embedded config: they do not affect results.
    std::string out = "out";
    unsigned workers = 1;

    std::vector<std::string> warnings;

    LatticeConfig lattice_for(int L) const {
        LatticeConfig c = lattice;
        c.L = L;
        return c;
    }

    /// Fills dimension-dependent defaults, deduplicates L_list and validates
    /// every parameter.
    void resolve() {
        if (L_list.empty()) throw ConfigError("L", "at least one lattice size required");
        std::vector<int> uniq;
        for (int L : L_list) {
            if (std::find(uniq.begin(), uniq.end(), L) == uniq.end()) {
                uniq.push_back(L);
            } else {
                warnings.push_back("duplicate L value " + std::to_string(L) + " removed");
            }
        }
        L_list = std::move(uniq);
        lattice.L = L_list.front();
        if (!eps_explicit) solver.tolerance = SolveOptions::for_dimension(lattice.d).tolerance;
        for (int L : L_list) lattice_for(L).validate();
        solver.validate();
        if (M < 2) throw ConfigError("M", "ensemble needs at least two realizations");
        if (direction < 1 || direction > lattice.d) throw ConfigError("direction", "must lie in 1..d");
        if (eps_list.empty()) throw ConfigError("eps_list", "at least one tolerance required");
        for (double e : eps_list)
            if (!(e > 0.0 && e < 1.0)) throw ConfigError("eps_list", "tolerances must lie in (0, 1)");
        if (audit_sample == 0) throw ConfigError("audit_sample", "must be positive");
        if (workers == 0) throw ConfigError("workers", "must be positive");
    }
};

namespace detail {

inline double as_double(const toml::Value& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    double d = 0.0;
    std::from_chars(v.text.data(), v.text.data() + v.text.size(), d);
    return d;
}

inline long long as_int(const toml::Value& v, const std::string& key) {
    if (v.kind != toml::Value::Kind::integer) throw ConfigError(key, "expected an integer");
    long long x = 0;
    if (std::from_chars(v.text.data(), v.text.data() + v.text.size(), x).ec != std::errc())
        throw ConfigError(key, "integer out of range");
    return x;
}

inline std::uint64_t as_u64(const toml::Value& v, const std::string& key) {
    if (v.kind != toml::Value::Kind::integer || v.text.front() == '-')
        throw ConfigError(key, "expected a non-negative integer");
    std::uint64_t u = 0;
    const auto r = std::from_chars(v.text.data(), v.text.data() + v.text.size(), u);
    if (r.ec != std::errc()) throw ConfigError(key, "integer out of range");
    return u;
}

inline bool as_bool(const toml::Value& v, const std::string& key) {
    if (v.kind != toml::Value::Kind::boolean) throw ConfigError(key, "expected true or false");
    return v.text == "true";
}

inline std::string as_string(const toml::Value& v, const std::string& key) {
    if (v.kind != toml::Value::Kind::string) throw ConfigError(key, "expected a string");
    return v.text;
}

inline int as_small_int(const toml::Value& v, const std::string& key) {
    const long long x = as_int(v, key);
    if (x < -1000000000LL || x > 1000000000LL) throw ConfigError(key, "integer out of range");
    return static_cast<int>(x);
}

inline std::vector<double> as_double_list(const toml::Value& v, const std::string& key) {
    if (v.kind != toml::Value::Kind::array) return {as_double(v, key)};
    std::vector<double> out;
    for (const auto& e : v.items) out.push_back(as_double(e, key));
    return out;
}

inline Rational as_rational(const toml::Value& v, const std::string& key) {
    if (v.kind == toml::Value::Kind::string) return parse_rational(v.text, key);
    if (v.is_number()) return parse_rational(v.text, key);
    throw ConfigError(key, "expected a fraction such as \"1/4\"");
}

}  // namespace detail

/// Applies the entries of a parsed document; unknown keys are rejected.
inline void apply_table(RunConfig& c, const toml::Table& t) {
    using namespace detail;
    for (const auto& [key, v] : t) {
        if (key == "d") {
            c.lattice.d = as_small_int(v, key);
        } else if (key == "L") {
            c.L_list.clear();
            if (v.kind == toml::Value::Kind::array) {
                for (const auto& e : v.items) c.L_list.push_back(as_small_int(e, key));
            } else {
                c.L_list.push_back(as_small_int(v, key));
            }
        } else if (key == "n0") {
            c.lattice.n0 = as_small_int(v, key);
        } else if (key == "alpha") {
            c.lattice.alpha = as_rational(v, key);
        } else if (key == "lambda") {
            c.lattice.lambda = as_double(v, key);
        } else if (key == "contrast") {
            c.lattice.contrast.kind = parse_contrast_kind(as_string(v, key));
        } else if (key == "betas") {
            c.lattice.contrast.betas = as_double_list(v, key);
        } else if (key == "coverage_prob") {
            c.lattice.coverage_prob = as_double(v, key);
        } else if (key == "offset") {
            c.lattice.offset = as_small_int(v, key);
        } else if (key == "eps") {
            c.solver.tolerance = as_double(v, key);
            c.eps_explicit = true;
        } else if (key == "eps_rank") {
            c.solver.eps_rank = as_double(v, key);
        } else if (key == "precond") {
            c.solver.preconditioner = parse_preconditioner_kind(as_string(v, key));
        } else if (key == "max_iter") {
            c.solver.max_iter = as_small_int(v, key);
        } else if (key == "delta") {
            c.solver.delta = as_double(v, key);
        } else if (key == "preconditioned_stop") {
            c.solver.preconditioned_stop = as_bool(v, key);
        } else if (key == "M") {
            const long long m = as_int(v, key);
            if (m < 0) throw ConfigError(key, "must be non-negative");
            c.M = static_cast<std::size_t>(m);
        } else if (key == "seed") {
            c.seed = as_u64(v, key);
        } else if (key == "direction") {
            c.direction = as_small_int(v, key);
        } else if (key == "eps_list") {
            c.eps_list = as_double_list(v, key);
        } else if (key == "audit_sample") {
            c.audit_sample = static_cast<std::size_t>(as_u64(v, key));
        } else if (key == "skip_failed") {
            c.skip_failed = as_bool(v, key);
        } else if (key == "trace") {
            c.trace = as_bool(v, key);
        } else if (key == "npy") {
            c.npy = as_bool(v, key);
        } else if (key == "out") {
            c.out = as_string(v, key);
        } else if (key == "workers") {
            const long long w = as_int(v, key);
            if (w < 1) throw ConfigError(key, "must be positive");
            c.workers = static_cast<unsigned>(w);
        } else {
            throw ConfigError(key, "unknown configuration key");
        }
    }
}

/// Parses a config document without resolving it (CLI overrides come next).
inline RunConfig parse_config_text(const std::string& text) {
    RunConfig c;
    apply_table(c, toml::parse(text));
    return c;
}

inline RunConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    RunConfig c;
    apply_table(c, toml::parse(in));
    return c;
}

/// Reads, resolves and validates a config file.
inline RunConfig load_config(const std::string& path) {
    auto c = read_config_file(path);
    c.resolve();
    return c;
}

/// Resolved configuration as a TOML document that reproduces the run.
inline std::string to_toml(const RunConfig& c) {
    std::ostringstream o;
    auto list_d = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
        return s + "]";
    };
    const auto& l = c.lattice;
    o << "d = " << l.d << "\n";
    o << "L = [";
    for (std::size_t i = 0; i < c.L_list.size(); ++i) o << (i ? ", " : "") << c.L_list[i];
    o << "]\n";
    o << "n0 = " << l.n0 << "\n";
    o << "alpha = \"" << l.alpha.str() << "\"\n";
    o << "lambda = " << format_double(l.lambda) << "\n";
    o << "contrast = \"" << to_string(l.contrast.kind) << "\"\n";
    o << "betas = " << list_d(l.contrast.betas) << "\n";
    o << "coverage_prob = " << format_double(l.coverage_prob) << "\n";
    o << "offset = " << l.offset << "\n";
    o << "eps = " << format_double(c.solver.tolerance) << "\n";
    o << "eps_rank = " << format_double(c.solver.eps_rank) << "\n";
    o << "precond = \"" << to_string(c.solver.preconditioner) << "\"\n";
    o << "max_iter = " << c.solver.max_iter << "\n";
    o << "delta = " << format_double(c.solver.delta) << "\n";
    o << "preconditioned_stop = " << (c.solver.preconditioned_stop ? "true" : "false") << "\n";
    o << "M = " << c.M << "\n";
    o << "seed = " << c.seed << "\n";
    o << "direction = " << c.direction << "\n";
    o << "eps_list = " << list_d(c.eps_list) << "\n";
    o << "audit_sample = " << c.audit_sample << "\n";
    o << "skip_failed = " << (c.skip_failed ? "true" : "false") << "\n";
    o << "trace = " << (c.trace ? "true" : "false") << "\n";
    o << "npy = " << (c.npy ? "true" : "false") << "\n";
    return o.str();
}

}  // namespace kronhom
