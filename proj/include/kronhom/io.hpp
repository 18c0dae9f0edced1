#pragma once

// Serialization of realizations, configs and result tables.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kronhom/config.hpp"
#include "kronhom/errors.hpp"
#include "kronhom/homogenize.hpp"
#include "kronhom/lattice.hpp"

namespace kronhom {

using json = nlohmann::ordered_json;

inline json to_json(const LatticeConfig& c) {
    return json{{"d", c.d},
                {"L", c.L},
                {"n0", c.n0},
                {"alpha", c.alpha.str()},
                {"lambda", c.lambda},
                {"contrast", to_string(c.contrast.kind)},
                {"betas", c.contrast.betas},
                {"coverage_prob", c.coverage_prob},
                {"offset", c.offset}};
}

inline LatticeConfig lattice_from_json(const json& j) {
    LatticeConfig c;
    try {
        c.d = j.at("d").get<int>();
        c.L = j.at("L").get<int>();
        c.n0 = j.at("n0").get<int>();
        c.alpha = parse_rational(j.at("alpha").get<std::string>());
        c.lambda = j.at("lambda").get<double>();
        c.contrast.kind = parse_contrast_kind(j.at("contrast").get<std::string>());
        c.contrast.betas = j.at("betas").get<std::vector<double>>();
        c.coverage_prob = j.at("coverage_prob").get<double>();
        c.offset = j.at("offset").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError("config", std::string("malformed lattice config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json to_json(const Realization& r) {
    json cells = json::array();
    for (std::size_t k = 0; k < r.K(); ++k) {
        json s = json::array();
        for (int l = 0; l < r.config.d; ++l) s.push_back(r.covered[k][l]);
        cells.push_back(json{{"cell", s}, {"beta", r.cell_beta[k]}});
    }
    return json{{"config", to_json(r.config)},
                {"seed", r.seed},
                {"K", r.K()},
                {"covered_volume_fraction", covered_volume_fraction(r)},
                {"covered", cells}};
}

inline Realization realization_from_json(const json& j) {
    Realization r;
    r.config = lattice_from_json(j.at("config"));
    try {
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("covered")) {
            CellIndex s{0, 0, 0};
            const auto& cell = e.at("cell");
            if (static_cast<int>(cell.size()) != r.config.d) throw ConfigError("covered", "cell has wrong rank");
            for (int l = 0; l < r.config.d; ++l) {
                s[l] = cell.at(static_cast<std::size_t>(l)).get<int>();
                if (s[l] < 0 || s[l] >= r.config.L) throw ConfigError("covered", "cell index out of range");
            }
            r.covered.push_back(s);
            r.cell_beta.push_back(e.at("beta").get<double>());
        }
    } catch (const json::exception& e) {
        throw ConfigError("realization", std::string("malformed realization: ") + e.what());
    }
    return r;
}

inline json to_json(const RunConfig& c) {
    json j = to_json(c.lattice);
    j.erase("L");
    j["L"] = c.L_list;
    j["eps"] = c.solver.tolerance;
    j["eps_rank"] = c.solver.eps_rank;
    j["precond"] = to_string(c.solver.preconditioner);
    j["max_iter"] = c.solver.max_iter;
    j["delta"] = c.solver.delta;
    j["preconditioned_stop"] = c.solver.preconditioned_stop;
    j["M"] = c.M;
    j["seed"] = c.seed;
    j["direction"] = c.direction;
    j["eps_list"] = c.eps_list;
    j["audit_sample"] = c.audit_sample;
    j["skip_failed"] = c.skip_failed;
    j["trace"] = c.trace;
    j["npy"] = c.npy;
    return j;
}

inline json to_json(const Matrix3& a, int d) {
    json m = json::array();
    for (int i = 0; i < d; ++i) {
        json row = json::array();
        for (int j = 0; j < d; ++j) row.push_back(a[i][j]);
        m.push_back(row);
    }
    return m;
}

inline json to_json(const HomogenizedMatrix& h) {
    return json{{"seed", h.seed},
                {"L", h.L},
                {"lambda", h.lambda},
                {"K", h.K},
                {"a", to_json(h.a, h.d)},
                {"iterations", std::vector<int>(h.iterations.begin(), h.iterations.begin() + h.d)},
                {"mean_coefficient", h.mean_coefficient},
                {"asymmetry", h.asymmetry()},
                {"times", {{"assembly", h.times.assembly}, {"rhs", h.times.rhs}, {"solve", h.times.solve}}}};
}

inline json to_json(const DeviationFit& f) {
    return json{{"L", f.L},
                {"sigma", f.sigma},
                {"slope", f.slope},
                {"intercept", f.intercept},
                {"slope_stderr", f.slope_stderr},
                {"expected_slope", f.expected_slope}};
}

inline json to_json(const PcgReport& r) {
    return json{{"iterations", r.iterations},
                {"converged", r.converged},
                {"final_residual", r.final_residual},
                {"true_residual", r.true_residual},
                {"preconditioner", r.preconditioner},
                {"warnings", r.warnings}};
}

/// Writes `text` to `path`, creating parent directories.
inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("path", "cannot open '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// CSV with the resolved config as leading '#' comment lines.
class CsvTable {
public:
    CsvTable(std::vector<std::string> columns, const std::string& config_toml = {}) : ncols_(columns.size()) {
        if (!config_toml.empty()) {
            std::istringstream in(config_toml);
            std::string line;
            while (std::getline(in, line)) text_ << "# " << line << "\n";
        }
        for (std::size_t i = 0; i < columns.size(); ++i) text_ << (i ? "," : "") << columns[i];
        text_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != ncols_) throw SizeError("CsvTable: row has wrong number of cells");
        for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
        text_ << "\n";
    }

    std::string str() const { return text_.str(); }
    void save(const std::filesystem::path& path) const { write_text(path, str()); }

private:
    std::size_t ncols_;
    std::ostringstream text_;
};

/// NumPy .npy (format 1.0, little-endian float64, C order).
inline void write_npy(const std::filesystem::path& path, const std::vector<double>& values,
                      const std::vector<std::size_t>& shape) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    if (count != values.size()) throw SizeError("write_npy: shape does not match data");
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i) dims += std::to_string(shape[i]) + (shape.size() == 1 || i + 1 < shape.size() ? "," : "");
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + dims + "), }";
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header += '\n';
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    const unsigned char magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    out.write(reinterpret_cast<const char*>(magic), 8);
    const auto hl = static_cast<std::uint16_t>(header.size());
    const unsigned char len[2] = {static_cast<unsigned char>(hl & 0xff), static_cast<unsigned char>(hl >> 8)};
    out.write(reinterpret_cast<const char*>(len), 2);
    out << header;
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace kronhom
