#include "ipwsel/io.hpp"

#include "ipwsel/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ipwsel {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (const std::string& f : split_fields(s)) {
        if (!f.empty()) out.push_back(f);
    }
    return out;
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "' for reading");
    return in;
}

// Iterates over key=value lines, skipping blanks and '#' comments.
template <class F>
void for_each_key_value(std::istream& in, const char* what, F&& f) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::ConfigError, std::string(what) + " line " + std::to_string(lineno) +
                                             ": expected key=value");
        }
        f(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)), lineno);
    }
}

std::size_t require_column(const CsvTable& table, const std::string& name) {
    const auto c = table.column(name);
    if (!c) fail(ErrorKind::MissingColumn, "column '" + name + "' not found");
    return *c;
}

std::vector<double> indicator_column(const CsvTable& table, const std::string& name,
                                     const std::vector<std::size_t>& rows) {
    std::vector<double> v = numeric_column(table, name, rows);
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (v[k] != 0.0 && v[k] != 1.0) {
            fail(ErrorKind::NonBinaryIndicator, "row " + std::to_string(rows[k] + 1) + ", column '" + name +
                                                    "': value " + format_number(v[k]) + " is not 0 or 1");
        }
    }
    return v;
}

std::vector<std::size_t> all_rows(const CsvTable& table) {
    std::vector<std::size_t> r(table.rows.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
}

std::vector<std::size_t> rows_where(const CsvTable& table, const std::optional<std::string>& indicator) {
    std::vector<std::size_t> rows = all_rows(table);
    if (!indicator) return rows;
    const std::vector<double> flag = indicator_column(table, *indicator, rows);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (flag[i] == 1.0) kept.push_back(rows[i]);
    }
    return kept;
}

DesignMatrix design_of(const CsvTable& table, const std::vector<std::string>& names,
                       const std::vector<std::size_t>& rows) {
    Matrix cov(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const std::vector<double> v = numeric_column(table, names[j], rows);
        for (std::size_t i = 0; i < v.size(); ++i) {
            cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
        }
    }
    return DesignMatrix::with_intercept(cov, names);
}

std::vector<std::string> id_column(const CsvTable& table, const std::optional<std::string>& id,
                                   const std::vector<std::size_t>& rows) {
    std::vector<std::string> out;
    if (!id) return out;
    const std::size_t c = require_column(table, *id);
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(table.rows[r][c]);
    return out;
}

void append_json_string(std::string& out, const std::string& s) {
    out += '"';
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

}  // namespace

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return j;
    }
    return std::nullopt;
}

CsvTable parse_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (!have_header) {
            // Tolerate a UTF-8 byte order mark.
            if (fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
            std::set<std::string> seen;
            for (const std::string& h : fields) {
                if (h.empty()) fail(ErrorKind::MissingColumn, "empty column name in header");
                if (!seen.insert(h).second) fail(ErrorKind::DuplicateCell, "duplicate column '" + h + "' in header");
            }
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            std::ostringstream msg;
            msg << "line " << lineno << " has " << fields.size() << " fields, header has " << t.header.size();
            fail(ErrorKind::NonNumericCell, msg.str());
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) fail(ErrorKind::MissingColumn, "input has no header row");
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    return parse_csv(in);
}

std::vector<double> numeric_column(const CsvTable& table, const std::string& name,
                                   const std::vector<std::size_t>& rows) {
    const std::size_t c = require_column(table, name);
    std::vector<double> out;
    out.reserve(rows.size());
    std::size_t bad = 0;
    std::optional<std::size_t> first_bad;
    for (std::size_t r : rows) {
        const auto v = to_double(table.rows.at(r)[c]);
        if (!v) {
            ++bad;
            if (!first_bad) first_bad = r;
            out.push_back(0.0);
        } else {
            out.push_back(*v);
        }
    }
    if (first_bad) {
        std::ostringstream msg;
        msg << "row " << *first_bad + 1 << ", column '" << name << "': '" << table.rows[*first_bad][c]
            << "' is not a finite number (" << bad << " such cell" << (bad == 1 ? "" : "s") << " in this column)";
        fail(ErrorKind::NonNumericCell, msg.str());
    }
    return out;
}

void ColumnRoleMap::validate() const {
    if (outcome.empty()) fail(ErrorKind::ConfigError, "roles: outcome is required");
    if (disease_covariates.empty()) fail(ErrorKind::ConfigError, "roles: disease_covariates is required");
    std::set<std::string> seen{outcome};
    for (const auto& n : disease_covariates) {
        if (!seen.insert(n).second) fail(ErrorKind::ConfigError, "roles: '" + n + "' listed twice");
    }
    std::set<std::string> sel{outcome};
    for (const auto& n : selection_covariates) {
        if (!sel.insert(n).second) fail(ErrorKind::ConfigError, "roles: '" + n + "' listed twice");
    }
    std::set<std::string> other;
    for (const auto* o : {&selection_indicator, &external_indicator, &external_prob, &id}) {
        if (!*o) continue;
        if (seen.count(**o) || sel.count(**o) || !other.insert(**o).second) {
            fail(ErrorKind::ConfigError, "roles: column '" + **o + "' has more than one role");
        }
    }
}

ColumnRoleMap parse_roles(std::istream& in) {
    ColumnRoleMap r;
    std::set<std::string> given;
    for_each_key_value(in, "roles", [&](const std::string& key, const std::string& value, int lineno) {
        if (!given.insert(key).second) {
            fail(ErrorKind::ConfigError, "roles line " + std::to_string(lineno) + ": key '" + key + "' repeated");
        }
        if (key == "outcome") r.outcome = value;
        else if (key == "disease_covariates") r.disease_covariates = split_list(value);
        else if (key == "selection_covariates") r.selection_covariates = split_list(value);
        else if (key == "selection_indicator") r.selection_indicator = value;
        else if (key == "external_indicator") r.external_indicator = value;
        else if (key == "external_prob") r.external_prob = value;
        else if (key == "id") r.id = value;
        else fail(ErrorKind::ConfigError, "roles line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    });
    r.validate();
    return r;
}

ColumnRoleMap load_roles(const std::string& path) {
    std::ifstream in = open_input(path);
    return parse_roles(in);
}

AnalysisSample internal_sample(const CsvTable& table, const ColumnRoleMap& roles) {
    roles.validate();
    AnalysisSample s;
    s.rows = rows_where(table, roles.selection_indicator);
    if (s.rows.empty()) fail(ErrorKind::InvalidArgument, "internal sample is empty");
    const std::vector<double> d = indicator_column(table, roles.outcome, s.rows);
    s.outcome = Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
    s.disease = design_of(table, roles.disease_covariates, s.rows);
    std::vector<std::string> sel{roles.outcome};
    sel.insert(sel.end(), roles.selection_covariates.begin(), roles.selection_covariates.end());
    s.selection = design_of(table, sel, s.rows);
    s.ids = id_column(table, roles.id, s.rows);
    return s;
}

ExternalSample external_sample(const CsvTable& table, const ColumnRoleMap& roles) {
    roles.validate();
    if (!roles.external_prob) fail(ErrorKind::ConfigError, "roles: external_prob is required for external data");
    ExternalSample s;
    s.rows = rows_where(table, roles.external_indicator);
    if (s.rows.empty()) fail(ErrorKind::InvalidArgument, "external sample is empty");
    indicator_column(table, roles.outcome, s.rows);
    std::vector<std::string> sel{roles.outcome};
    sel.insert(sel.end(), roles.selection_covariates.begin(), roles.selection_covariates.end());
    s.selection = design_of(table, sel, s.rows);
    const std::vector<double> p = numeric_column(table, *roles.external_prob, s.rows);
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (!(p[k] > 0.0 && p[k] <= 1.0)) {
            fail(ErrorKind::InvalidArgument, "row " + std::to_string(s.rows[k] + 1) + ", column '" +
                                                 *roles.external_prob + "': probability must lie in (0,1]");
        }
    }
    s.pi_ext = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    s.ids = id_column(table, roles.id, s.rows);
    return s;
}

std::vector<OverlapPair> match_overlap(const std::vector<std::string>& internal_ids,
                                       const std::vector<std::string>& external_ids) {
    std::map<std::string, Eigen::Index> ext;
    for (std::size_t j = 0; j < external_ids.size(); ++j) {
        if (!ext.emplace(external_ids[j], static_cast<Eigen::Index>(j)).second) {
            fail(ErrorKind::DuplicateCell, "external id '" + external_ids[j] + "' appears more than once");
        }
    }
    std::set<std::string> seen;
    std::vector<OverlapPair> out;
    for (std::size_t i = 0; i < internal_ids.size(); ++i) {
        if (!seen.insert(internal_ids[i]).second) {
            fail(ErrorKind::DuplicateCell, "internal id '" + internal_ids[i] + "' appears more than once");
        }
        const auto it = ext.find(internal_ids[i]);
        if (it != ext.end()) out.push_back({static_cast<Eigen::Index>(i), it->second});
    }
    return out;
}

PopulationSummary parse_population_summary(std::istream& in, PopulationSummary::Kind kind) {
    PopulationSummary s;
    s.kind = kind;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    std::set<std::string> names;
    std::vector<double> means;
    auto number = [&](const std::string& text) {
        const auto v = to_double(text);
        if (!v) {
            fail(ErrorKind::NonNumericCell, "summary line " + std::to_string(lineno) + ": '" + text +
                                                "' is not a finite number");
        }
        return *v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::vector<std::string> f = split_fields(t);
        if (!have_header) {
            have_header = true;
            if (kind == PopulationSummary::Kind::joint_cells) {
                if (f.size() < 2 || f.back() != "probability") {
                    fail(ErrorKind::MissingColumn, "joint-cells header must end with a 'probability' column");
                }
                s.variables.assign(f.begin(), f.end() - 1);
            } else if (f.size() != 2 || f[0] != "name" || f[1] != "value") {
                fail(ErrorKind::MissingColumn, "marginal-means header must be 'name,value'");
            }
            continue;
        }
        if (f[0] == "N") {
            if (f.size() < 2) fail(ErrorKind::MissingN, "summary line " + std::to_string(lineno) + ": N row has no value");
            if (s.N) fail(ErrorKind::DuplicateCell, "summary line " + std::to_string(lineno) + ": N given twice");
            s.N = number(f[1]);
            if (!(*s.N > 0.0)) fail(ErrorKind::MissingN, "summary: N must be positive");
            continue;
        }
        if (kind == PopulationSummary::Kind::joint_cells) {
            if (f.size() != s.variables.size() + 1) {
                fail(ErrorKind::NonNumericCell, "summary line " + std::to_string(lineno) + ": wrong number of fields");
            }
            std::vector<long> key;
            for (std::size_t j = 0; j + 1 < f.size(); ++j) {
                const double v = number(f[j]);
                if (v != std::floor(v)) {
                    fail(ErrorKind::NonNumericCell, "summary line " + std::to_string(lineno) +
                                                        ": cell level '" + f[j] + "' is not an integer");
                }
                key.push_back(static_cast<long>(v));
            }
            const double p = number(f.back());
            if (p < 0.0 || p > 1.0) {
                fail(ErrorKind::ProbabilitySumOutOfRange,
                     "summary line " + std::to_string(lineno) + ": cell probability outside [0,1]");
            }
            if (!s.cells.emplace(key, p).second) {
                fail(ErrorKind::DuplicateCell, "summary line " + std::to_string(lineno) + ": cell repeated");
            }
        } else {
            if (f.size() != 2) fail(ErrorKind::NonNumericCell, "summary line " + std::to_string(lineno) + ": expected name,value");
            if (!names.insert(f[0]).second) {
                fail(ErrorKind::DuplicateCell, "summary line " + std::to_string(lineno) + ": '" + f[0] + "' repeated");
            }
            s.variables.push_back(f[0]);
            means.push_back(number(f[1]));
        }
    }
    if (!have_header) fail(ErrorKind::MissingColumn, "summary has no header row");

    if (kind == PopulationSummary::Kind::joint_cells) {
        if (s.cells.empty()) fail(ErrorKind::ProbabilitySumOutOfRange, "summary has no cells");
        double total = 0.0;
        for (const auto& [k, p] : s.cells) total += p;
        if (std::abs(total - 1.0) > 1e-3) {
            fail(ErrorKind::ProbabilitySumOutOfRange,
                 "cell probabilities sum to " + format_number(total) + ", outside [0.999, 1.001]");
        }
        if (total != 1.0) {
            for (auto& [k, p] : s.cells) p /= total;
            if (std::abs(total - 1.0) > 1e-12) {
                s.warnings.push_back("cell probabilities summed to " + format_number(total) + "; renormalized");
            }
        }
    } else {
        if (!s.N) fail(ErrorKind::MissingN, "marginal-means summary requires an N row");
        s.means = Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size()));
    }
    s.validate();
    return s;
}

PopulationSummary load_population_summary(const std::string& path, PopulationSummary::Kind kind) {
    std::ifstream in = open_input(path);
    return parse_population_summary(in, kind);
}

SimulationConfig parse_simulation_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    for_each_key_value(in, "config", [&](const std::string& key, const std::string& value, int lineno) {
        static const std::set<std::string> known{"dag",   "setup", "N",  "theta",          "gamma",
                                                 "alpha", "setup2_scale", "nu", "external_scale",
                                                 "z_correlation", "seed", "R"};
        if (!known.count(key)) {
            fail(ErrorKind::ConfigError, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (!kv.emplace(key, value).second) {
            fail(ErrorKind::ConfigError, "config line " + std::to_string(lineno) + ": key '" + key + "' repeated");
        }
    });
    auto scalar = [&](const std::string& key) {
        const auto v = to_double(kv.at(key));
        if (!v) fail(ErrorKind::ConfigError, "config: " + key + " must be a number");
        return *v;
    };
    auto integer = [&](const std::string& key) {
        const double v = scalar(key);
        if (v != std::floor(v) || std::abs(v) > 9.0e15) fail(ErrorKind::ConfigError, "config: " + key + " must be an integer");
        return static_cast<long long>(v);
    };
    auto list = [&](const std::string& key, double* dst, std::size_t n, std::size_t min_n) {
        const std::vector<std::string> parts = split_list(kv.at(key));
        if (parts.size() < min_n || parts.size() > n) {
            fail(ErrorKind::ConfigError, "config: " + key + " expects " + std::to_string(n) + " comma-separated values");
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto v = to_double(parts[k]);
            if (!v) fail(ErrorKind::ConfigError, "config: " + key + " has a non-numeric entry");
            dst[k] = *v;
        }
    };

    const int dag = kv.count("dag") ? static_cast<int>(integer("dag")) : 1;
    const int setup = kv.count("setup") ? static_cast<int>(integer("setup")) : 1;
    SimulationConfig c = SimulationConfig::standard(dag, setup);
    if (kv.count("N")) c.N = static_cast<long>(integer("N"));
    if (kv.count("theta")) list("theta", c.theta.data(), 3, 3);
    if (kv.count("gamma")) list("gamma", c.gamma.data(), 3, 3);
    if (kv.count("alpha")) list("alpha", c.alpha.data(), 6, 4);
    if (kv.count("setup2_scale")) c.setup2_scale = scalar("setup2_scale");
    if (kv.count("nu")) list("nu", c.nu.data(), 4, 4);
    if (kv.count("external_scale")) c.external_scale = scalar("external_scale");
    if (kv.count("z_correlation")) c.z_correlation = scalar("z_correlation");
    if (kv.count("seed")) {
        const long long s = integer("seed");
        if (s < 0) fail(ErrorKind::ConfigError, "config: seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (kv.count("R")) c.R = static_cast<int>(integer("R"));
    c.validate();
    return c;
}

SimulationConfig load_simulation_config(const std::string& path) {
    std::ifstream in = open_input(path);
    return parse_simulation_config(in);
}

std::optional<OutputFormat> parse_format(std::string_view name) {
    if (name == "csv") return OutputFormat::csv;
    if (name == "json") return OutputFormat::json;
    return std::nullopt;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_records(std::ostream& out, const RecordTable& table, OutputFormat format) {
    for (const auto& row : table.rows) {
        require(row.size() == table.columns.size(), "write_records: row width differs from columns");
    }
    std::string buf;
    if (format == OutputFormat::csv) {
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            buf += (j ? "," : "") + csv_field(table.columns[j]);
        }
        buf += '\n';
        for (const auto& row : table.rows) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) buf += ',';
                if (const auto* s = std::get_if<std::string>(&row[j])) buf += csv_field(*s);
                else if (const auto* d = std::get_if<double>(&row[j])) buf += format_number(*d);
                else buf += std::to_string(std::get<long>(row[j]));
            }
            buf += '\n';
        }
    } else {
        buf += "[\n";
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            buf += '{';
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) buf += ',';
                append_json_string(buf, table.columns[j]);
                buf += ':';
                if (const auto* s = std::get_if<std::string>(&row[j])) append_json_string(buf, *s);
                else if (const auto* d = std::get_if<double>(&row[j])) buf += std::isfinite(*d) ? format_number(*d) : "null";
                else buf += std::to_string(std::get<long>(row[j]));
            }
            buf += i + 1 < table.rows.size() ? "},\n" : "}\n";
        }
        buf += "]\n";
    }
    out << buf;
}

RecordTable fit_table(const std::vector<FitRow>& rows) {
    RecordTable t;
    t.columns = {"method", "parameter", "estimate", "std_error", "ci_lower", "ci_upper"};
    for (const FitRow& r : rows) {
        t.rows.push_back({r.method, r.parameter, r.estimate, r.std_error, r.ci_lower, r.ci_upper});
    }
    return t;
}

RecordTable weights_table(const WeightSet& ws, const std::vector<std::string>& ids) {
    require(ids.empty() || ids.size() == static_cast<std::size_t>(ws.pi_hat.size()),
            "weights_table: ids length differs from weights");
    RecordTable t;
    t.columns = {"row", "id", "method", "pi_hat", "weight"};
    const std::string method(to_string(ws.method));
    for (Eigen::Index i = 0; i < ws.pi_hat.size(); ++i) {
        t.rows.push_back({static_cast<long>(i + 1), ids.empty() ? std::string() : ids[static_cast<std::size_t>(i)],
                          method, ws.pi_hat[i], 1.0 / ws.pi_hat[i]});
    }
    return t;
}

RecordTable study_table(const StudyResult& study) {
    RecordTable t;
    t.columns = {"dag",  "setup",    "replications", "method",   "parameter",    "truth",
                 "mean_estimate", "bias", "relative_bias_pct", "mse", "rmse_relative", "coverage",
                 "mean_est_var", "mc_var", "n_ok", "failures"};
    for (const MetricRow& r : study.rows) {
        t.rows.push_back({static_cast<long>(study.config.dag), static_cast<long>(study.config.setup),
                          static_cast<long>(study.config.R), std::string(to_string(r.method)),
                          "theta" + std::to_string(r.parameter), r.truth, r.mean_estimate, r.bias,
                          r.relative_bias_pct, r.mse, r.rmse_relative, r.coverage, r.mean_est_var, r.mc_var,
                          static_cast<long>(r.n_ok), static_cast<long>(r.failures)});
    }
    return t;
}

void write_population(std::ostream& out, const Population& pop) {
    std::string buf = "id,Z1,Z2,W,D,S,S_ext,pi_true,pi_ext\n";
    for (std::size_t i = 0; i < pop.size(); ++i) {
        buf += std::to_string(i + 1);
        for (double v : {pop.z1[i], pop.z2[i], pop.w[i]}) buf += ',' + format_number(v);
        for (double v : {pop.d[i], pop.s[i], pop.s_ext[i]}) buf += v == 1.0 ? ",1" : ",0";
        for (double v : {pop.pi_true[i], pop.pi_ext[i]}) buf += ',' + format_number(v);
        buf += '\n';
    }
    out << buf;
}

void write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::IoError, "cannot open '" + tmp + "' for writing");
        out << contents;
        out.flush();
        if (!out) fail(ErrorKind::IoError, "write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::IoError, "cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace ipwsel
