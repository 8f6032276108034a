#include "pecusum/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pecusum {

namespace {

constexpr int kSchemaVersion = 1;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string::size_type pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        pos = nl + 1;
    }
    // The final implicit empty segment after a trailing newline is noise.
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string::size_type pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(pos));
            break;
        }
        cells.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, int row) {
    const std::string t = trim(cell);
    if (t.empty())
        throw std::runtime_error("row " + std::to_string(row) + ": empty cell");
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("row " + std::to_string(row) +
                                 ": not a number: '" + t + "'");
    }
}

// Dense 0-based index for each distinct label, labels sorted ascending so row
// order in the file never matters.
std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

int index_of(const std::vector<double>& labels, double x) {
    return static_cast<int>(std::lower_bound(labels.begin(), labels.end(), x) -
                            labels.begin());
}

std::string label_str(double x) {
    if (x == std::floor(x) && std::abs(x) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(x));
        return buf;
    }
    return format_double(x);
}

Grid grid_for(const PanelSource& src, int g) {
    if (src.grid_points.has_value()) {
        if (src.grid_points->size() != g)
            throw std::runtime_error(
                "explicit grid has " + std::to_string(src.grid_points->size()) +
                " points but the file carries " + std::to_string(g));
        return make_grid(*src.grid_points);
    }
    return make_uniform_grid(g);
}

void completeness_error(const std::vector<double>& subjects,
                        const std::vector<double>& times,
                        const std::vector<double>& grids,
                        const std::vector<char>& seen) {
    std::ostringstream msg;
    msg << "incomplete panel; missing cells:";
    int listed = 0;
    const std::size_t nt = times.size();
    const std::size_t ng = grids.size();
    for (std::size_t i = 0; i < subjects.size() && listed < 10; ++i)
        for (std::size_t t = 0; t < nt && listed < 10; ++t)
            for (std::size_t g = 0; g < ng && listed < 10; ++g)
                if (!seen[(i * nt + t) * ng + g]) {
                    msg << " (" << label_str(subjects[i]) << ","
                        << label_str(times[t]) << "," << label_str(grids[g])
                        << ")";
                    ++listed;
                }
    throw std::runtime_error(msg.str());
}

FunctionalPanel load_long(const std::vector<std::string>& lines,
                          const PanelSource& src) {
    if (lines.empty() || trim(lines[0]) != "subject,time,gridpoint,value")
        throw std::runtime_error(
            "row 1: expected header 'subject,time,gridpoint,value'");

    struct Row {
        double subject, time, gridpoint, value;
    };
    std::vector<Row> rows;
    std::vector<double> subjects, times, grids;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (trim(lines[r]).empty()) continue;
        const auto cells = split_csv(lines[r]);
        const int row_no = static_cast<int>(r + 1);
        if (cells.size() != 4)
            throw std::runtime_error("row " + std::to_string(row_no) +
                                     ": expected 4 cells, got " +
                                     std::to_string(cells.size()));
        Row row{parse_number(cells[0], row_no), parse_number(cells[1], row_no),
                parse_number(cells[2], row_no), parse_number(cells[3], row_no)};
        subjects.push_back(row.subject);
        times.push_back(row.time);
        grids.push_back(row.gridpoint);
        rows.push_back(row);
    }
    if (rows.empty()) throw std::runtime_error("no data rows");

    subjects = sorted_unique(std::move(subjects));
    times = sorted_unique(std::move(times));
    grids = sorted_unique(std::move(grids));
    const std::size_t nt = times.size();
    const std::size_t ng = grids.size();

    FunctionalPanel panel(static_cast<int>(subjects.size()),
                          static_cast<int>(nt),
                          grid_for(src, static_cast<int>(ng)));
    std::vector<char> seen(subjects.size() * nt * ng, 0);
    for (const Row& row : rows) {
        const std::size_t i = index_of(subjects, row.subject);
        const std::size_t t = index_of(times, row.time);
        const std::size_t g = index_of(grids, row.gridpoint);
        const std::size_t cell = (i * nt + t) * ng + g;
        if (seen[cell])
            throw std::runtime_error(
                "duplicate cell (" + label_str(row.subject) + "," +
                label_str(row.time) + "," + label_str(row.gridpoint) + ")");
        seen[cell] = 1;
        panel.curve(static_cast<int>(i), static_cast<int>(t))(
            static_cast<int>(g)) = row.value;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        completeness_error(subjects, times, grids, seen);
    return panel;
}

FunctionalPanel load_wide(const std::vector<std::string>& lines,
                          const PanelSource& src) {
    if (lines.empty())
        throw std::runtime_error("row 1: expected header 'subject,time,g1..gG'");
    const auto header = split_csv(trim(lines[0]));
    if (header.size() < 3 || trim(header[0]) != "subject" ||
        trim(header[1]) != "time")
        throw std::runtime_error("row 1: expected header 'subject,time,g1..gG'");
    const int g = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < g; ++j)
        if (trim(header[j + 2]) != "g" + std::to_string(j + 1))
            throw std::runtime_error("row 1: grid column " + std::to_string(j + 3) +
                                     " must be named g" + std::to_string(j + 1));

    struct Row {
        double subject, time;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    std::vector<double> subjects, times;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (trim(lines[r]).empty()) continue;
        const auto cells = split_csv(lines[r]);
        const int row_no = static_cast<int>(r + 1);
        if (cells.size() != header.size())
            throw std::runtime_error("row " + std::to_string(row_no) +
                                     ": expected " + std::to_string(header.size()) +
                                     " cells, got " + std::to_string(cells.size()));
        Row row;
        row.subject = parse_number(cells[0], row_no);
        row.time = parse_number(cells[1], row_no);
        row.values.reserve(g);
        for (int j = 0; j < g; ++j)
            row.values.push_back(parse_number(cells[j + 2], row_no));
        subjects.push_back(row.subject);
        times.push_back(row.time);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("no data rows");

    subjects = sorted_unique(std::move(subjects));
    times = sorted_unique(std::move(times));
    const std::size_t nt = times.size();

    FunctionalPanel panel(static_cast<int>(subjects.size()),
                          static_cast<int>(nt), grid_for(src, g));
    std::vector<char> seen(subjects.size() * nt, 0);
    for (const Row& row : rows) {
        const std::size_t i = index_of(subjects, row.subject);
        const std::size_t t = index_of(times, row.time);
        if (seen[i * nt + t])
            throw std::runtime_error("duplicate row (" + label_str(row.subject) +
                                     "," + label_str(row.time) + ")");
        seen[i * nt + t] = 1;
        for (int j = 0; j < g; ++j)
            panel.curve(static_cast<int>(i), static_cast<int>(t))(j) =
                row.values[j];
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        std::ostringstream msg;
        msg << "incomplete panel; missing rows:";
        int listed = 0;
        for (std::size_t i = 0; i < subjects.size() && listed < 10; ++i)
            for (std::size_t t = 0; t < nt && listed < 10; ++t)
                if (!seen[i * nt + t]) {
                    msg << " (" << label_str(subjects[i]) << ","
                        << label_str(times[t]) << ")";
                    ++listed;
                }
        throw std::runtime_error(msg.str());
    }
    return panel;
}

}  // namespace

FunctionalPanel load_panel(const PanelSource& src) {
    const auto lines = split_lines(read_file(src.path));
    return src.layout == PanelLayout::Long ? load_long(lines, src)
                                           : load_wide(lines, src);
}

void save_panel(const FunctionalPanel& panel, const std::string& path,
                PanelLayout layout) {
    std::ostringstream out;
    const int n = panel.n_subjects();
    const int t_len = panel.n_times();
    const int g = panel.grid().size();
    if (layout == PanelLayout::Long) {
        out << "subject,time,gridpoint,value\n";
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < t_len; ++t)
                for (int j = 0; j < g; ++j)
                    out << (i + 1) << ',' << (t + 1) << ',' << (j + 1) << ','
                        << format_double(panel.curve(i, t)(j)) << '\n';
    } else {
        out << "subject,time";
        for (int j = 0; j < g; ++j) out << ",g" << (j + 1);
        out << '\n';
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < t_len; ++t) {
                out << (i + 1) << ',' << (t + 1);
                for (int j = 0; j < g; ++j)
                    out << ',' << format_double(panel.curve(i, t)(j));
                out << '\n';
            }
    }
    atomic_write(path, out.str());
}

MatRM cidr_transform(const MatRM& prices) {
    if (prices.rows() < 1 || prices.cols() < 1)
        throw std::invalid_argument("cidr_transform: empty input");
    MatRM out(prices.rows(), prices.cols());
    for (Eigen::Index t = 0; t < prices.rows(); ++t) {
        for (Eigen::Index j = 0; j < prices.cols(); ++j)
            if (!(prices(t, j) > 0.0))
                throw std::domain_error(
                    "cidr_transform: nonpositive price at (t=" +
                    std::to_string(t + 1) + ", j=" + std::to_string(j + 1) + ")");
        const double anchor = std::log(prices(t, 0));
        out(t, 0) = 0.0;
        for (Eigen::Index j = 1; j < prices.cols(); ++j)
            out(t, j) = 100.0 * (std::log(prices(t, j)) - anchor);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

nlohmann::json to_json(const NullSpec& spec) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["eigenvalues"] = std::vector<double>(
        spec.eigenvalues.data(), spec.eigenvalues.data() + spec.eigenvalues.size());
    j["n_bridges"] = spec.n_bridges;
    j["bridge_grid"] = spec.bridge_grid;
    j["n_draws"] = spec.n_draws;
    j["seed"] = spec.seed;
    return j;
}

NullSpec null_spec_from_json(const nlohmann::json& j) {
    NullSpec spec;
    const auto eigs = j.at("eigenvalues").get<std::vector<double>>();
    spec.eigenvalues = Eigen::Map<const Vec>(eigs.data(),
                                             static_cast<Eigen::Index>(eigs.size()));
    spec.n_bridges = j.at("n_bridges").get<int>();
    spec.bridge_grid = j.at("bridge_grid").get<int>();
    spec.n_draws = j.at("n_draws").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

namespace {

std::vector<int> to_one_based(const std::vector<int>& v) {
    std::vector<int> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + 1;
    return out;
}

}  // namespace

nlohmann::json to_json(const BreakReport& report) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["xi"] = report.xi;
    j["with_breaks"] = to_one_based(report.with_breaks);
    j["without_breaks"] = to_one_based(report.without_breaks);
    j["tau_hat"] = report.tau_hat;
    j["sup_stats"] = std::vector<double>(
        report.sup_stats.data(), report.sup_stats.data() + report.sup_stats.size());
    return j;
}

nlohmann::json to_json(const ClusterModel& model) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["k_hat"] = model.k;
    j["members"] = nlohmann::json::array();
    for (const auto& group : model.members)
        j["members"].push_back(to_one_based(group));
    j["group_tau"] = model.group_tau;
    j["pooled_b"] = model.pooled_b;
    j["ic"] = nlohmann::json::array();
    for (const auto& [k, ic] : model.ic_values)
        j["ic"].push_back({{"k", k}, {"value", ic}});
    return j;
}

nlohmann::json test_result_json(const TestResult& result,
                                const std::vector<double>& alphas,
                                const std::vector<double>& crits) {
    if (alphas.size() != crits.size())
        throw std::invalid_argument("test_result_json: alphas/crits mismatch");
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["z_nt"] = result.z_nt;
    j["z_pe"] = result.z_pe;
    j["z_hat"] = result.z_hat;
    j["threshold"] = result.threshold;
    if (result.p_value.has_value())
        j["p_value"] = *result.p_value;
    else
        j["p_value"] = nullptr;
    j["alphas"] = alphas;
    j["critical_values"] = crits;
    nlohmann::json rejects = nlohmann::json::array();
    for (double c : crits) rejects.push_back(result.z_hat > c);
    j["reject"] = rejects;
    j["subject_sups"] = std::vector<double>(
        result.subject_sups.data(),
        result.subject_sups.data() + result.subject_sups.size());
    return j;
}

// ---------------------------------------------------------------------------
// TOML subset
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void toml_error(int line, const std::string& what) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + what);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

bool is_bare_key(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
              c == '.'))
            return false;
    return true;
}

TomlValue parse_scalar(const std::string& raw, int line) {
    const std::string s = trim(raw);
    if (s.empty()) toml_error(line, "missing value");
    if (s == "true") return true;
    if (s == "false") return false;
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            toml_error(line, "unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '\\' && i + 2 < s.size() &&
                (s[i + 1] == '"' || s[i + 1] == '\\')) {
                out.push_back(s[i + 1]);
                ++i;
            } else if (s[i] == '"') {
                toml_error(line, "stray quote in string");
            } else {
                out.push_back(s[i]);
            }
        }
        return out;
    }
    // Integer first (no '.', 'e', or inf/nan marker), double otherwise.
    const bool looks_integral =
        s.find_first_of(".eEnN") == std::string::npos &&
        !(s.find_first_of("iI") != std::string::npos);
    try {
        std::size_t used = 0;
        if (looks_integral) {
            const std::int64_t v = std::stoll(s, &used);
            if (used == s.size()) return v;
        } else {
            const double v = std::stod(s, &used);
            if (used == s.size()) return v;
        }
    } catch (const std::exception&) {
    }
    toml_error(line, "cannot parse value '" + s + "'");
}

TomlValue parse_array(const std::string& raw, int line) {
    const std::string s = trim(raw);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        toml_error(line, "array must be a single-line [ ... ]");
    const std::string body = trim(s.substr(1, s.size() - 2));
    std::vector<TomlValue> items;
    if (!body.empty()) {
        std::size_t pos = 0;
        bool in_string = false;
        std::size_t start = 0;
        for (pos = 0; pos <= body.size(); ++pos) {
            if (pos < body.size() && body[pos] == '"') in_string = !in_string;
            if (pos == body.size() || (body[pos] == ',' && !in_string)) {
                items.push_back(parse_scalar(body.substr(start, pos - start), line));
                start = pos + 1;
            }
        }
    }
    if (items.empty()) return std::vector<double>{};
    if (std::holds_alternative<std::string>(items[0])) {
        std::vector<std::string> out;
        for (auto& item : items) {
            if (!std::holds_alternative<std::string>(item))
                toml_error(line, "mixed array element types");
            out.push_back(std::get<std::string>(item));
        }
        return out;
    }
    std::vector<double> out;
    for (auto& item : items) {
        if (std::holds_alternative<double>(item))
            out.push_back(std::get<double>(item));
        else if (std::holds_alternative<std::int64_t>(item))
            out.push_back(static_cast<double>(std::get<std::int64_t>(item)));
        else
            toml_error(line, "mixed array element types");
    }
    return out;
}

}  // namespace

std::map<std::string, TomlValue> parse_toml(const std::string& text) {
    std::map<std::string, TomlValue> kv;
    std::string section;
    const auto lines = split_lines(text);
    for (std::size_t idx = 0; idx < lines.size(); ++idx) {
        const int line_no = static_cast<int>(idx + 1);
        const std::string line = trim(strip_comment(lines[idx]));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') toml_error(line_no, "unterminated [section]");
            section = trim(line.substr(1, line.size() - 2));
            if (!is_bare_key(section)) toml_error(line_no, "bad section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) toml_error(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!is_bare_key(key)) toml_error(line_no, "bad key '" + key + "'");
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full)) toml_error(line_no, "duplicate key '" + full + "'");
        kv[full] = value.empty() || value.front() != '['
                       ? parse_scalar(value, line_no)
                       : parse_array(value, line_no);
    }
    return kv;
}

std::map<std::string, TomlValue> parse_toml_file(const std::string& path) {
    return parse_toml(read_file(path));
}

namespace {

[[noreturn]] void key_error(const std::string& key, const std::string& want) {
    throw std::runtime_error("config key '" + key + "': expected " + want);
}

double as_double(const std::string& key, const TomlValue& v) {
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    if (std::holds_alternative<std::int64_t>(v))
        return static_cast<double>(std::get<std::int64_t>(v));
    key_error(key, "a number");
}

std::int64_t as_int(const std::string& key, const TomlValue& v) {
    if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
    key_error(key, "an integer");
}

bool as_bool(const std::string& key, const TomlValue& v) {
    if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
    key_error(key, "true or false");
}

std::string as_string(const std::string& key, const TomlValue& v) {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    key_error(key, "a string");
}

std::vector<double> as_double_array(const std::string& key, const TomlValue& v) {
    if (std::holds_alternative<std::vector<double>>(v))
        return std::get<std::vector<double>>(v);
    key_error(key, "an array of numbers");
}

}  // namespace

RunConfig run_config_from_toml(const std::map<std::string, TomlValue>& kv) {
    RunConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "dgp.n") cfg.dgp.n = static_cast<int>(as_int(key, value));
        else if (key == "dgp.t") cfg.dgp.t = static_cast<int>(as_int(key, value));
        else if (key == "dgp.grid_size")
            cfg.dgp.grid_size = static_cast<int>(as_int(key, value));
        else if (key == "dgp.j_basis")
            cfg.dgp.j_basis = static_cast<int>(as_int(key, value));
        else if (key == "dgp.var_band")
            cfg.dgp.var_band = static_cast<int>(as_int(key, value));
        else if (key == "dgp.var_coef_lo")
            cfg.dgp.var_coef_lo = as_double(key, value);
        else if (key == "dgp.var_coef_hi")
            cfg.dgp.var_coef_hi = as_double(key, value);
        else if (key == "dgp.burn_in")
            cfg.dgp.burn_in = static_cast<int>(as_int(key, value));
        else if (key == "dgp.sdr") cfg.dgp.sdr = as_double(key, value);
        else if (key == "dgp.snr") cfg.dgp.snr = as_double(key, value);
        else if (key == "dgp.m") cfg.dgp.m = static_cast<int>(as_int(key, value));
        else if (key == "dgp.window_lo") cfg.dgp.window_lo = as_double(key, value);
        else if (key == "dgp.window_hi") cfg.dgp.window_hi = as_double(key, value);
        else if (key == "dgp.k0_break_fracs")
            cfg.dgp.k0_break_fracs = as_double_array(key, value);
        else if (key == "dgp.seed")
            cfg.dgp.seed = static_cast<std::uint64_t>(as_int(key, value));
        else if (key == "run.reps")
            cfg.reps = static_cast<int>(as_int(key, value));
        else if (key == "run.out_dir") cfg.out_dir = as_string(key, value);
        else if (key == "run.critical_values")
            cfg.flags.critical_values = as_bool(key, value);
        else if (key == "run.classify") cfg.flags.classify = as_bool(key, value);
        else if (key == "run.cluster") cfg.flags.cluster = as_bool(key, value);
        else if (key == "run.realized_snr")
            cfg.flags.realized_snr = as_bool(key, value);
        else if (key == "run.share_null_across_reps")
            cfg.flags.share_null_across_reps = as_bool(key, value);
        else if (key == "run.remove_step_means")
            cfg.flags.remove_step_means = as_bool(key, value);
        else if (key == "run.alphas")
            cfg.flags.alphas = as_double_array(key, value);
        else if (key == "run.rho") cfg.flags.rho = as_double(key, value);
        else if (key == "run.k_bar")
            cfg.flags.k_bar = static_cast<int>(as_int(key, value));
        else if (key == "run.n_draws")
            cfg.flags.n_draws = static_cast<int>(as_int(key, value));
        else if (key == "run.bridge_grid")
            cfg.flags.bridge_grid = static_cast<int>(as_int(key, value));
        else if (key == "run.lrc_bandwidth")
            cfg.flags.lrc_bandwidth = static_cast<int>(as_int(key, value));
        else if (key == "run.kernel") {
            const std::string name = as_string(key, value);
            if (name == "bartlett") cfg.flags.kernel_name = TaperKernel::Bartlett;
            else if (name == "flattop") cfg.flags.kernel_name = TaperKernel::FlatTop;
            else throw std::runtime_error(
                "config key 'run.kernel': unknown kernel '" + name + "'");
        } else if (key == "run.threads")
            cfg.flags.threads = static_cast<int>(as_int(key, value));
        else if (key == "test.variant") {
            const std::string name = as_string(key, value);
            if (name == "xi1") cfg.variant = XiVariant::Xi1;
            else if (name == "xi2") cfg.variant = XiVariant::Xi2;
            else throw std::runtime_error(
                "config key 'test.variant': unknown variant '" + name + "'");
        } else if (key == "test.c_xi")
            cfg.c_xi = as_double(key, value);
        else
            throw std::runtime_error("unknown config key '" + key + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + tmp + " -> " + path);
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string join_doubles(const std::vector<double>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(sep);
        out += format_double(v[i]);
    }
    return out;
}

// Mean over finite entries; returns NaN when none qualify.
std::pair<double, int> finite_mean(const std::vector<double>& v) {
    double acc = 0.0;
    int count = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            acc += x;
            ++count;
        }
    if (count == 0) return {std::numeric_limits<double>::quiet_NaN(), 0};
    return {acc / count, count};
}

}  // namespace

std::string records_csv(const std::vector<RepRecord>& records,
                        const RunFlags& flags) {
    std::ostringstream out;
    out << "rep,seed,lambda1,z_nt,xi1,xi2,z_pe_xi1,z_pe_xi2,z_hat_xi1,z_hat_xi2";
    for (double alpha : flags.alphas) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", alpha);
        out << ",crit_" << buf;
    }
    out << ",tp_rate_xi1,recall_xi1,f1_xi1,tp_rate_xi2,recall_xi2,f1_xi2"
        << ",k_hat,purity,nmi,msd_pre,msd_post,ic,realized_snr,error\n";

    for (const RepRecord& rec : records) {
        out << rec.rep << ',' << rec.seed << ',' << format_double(rec.lambda1)
            << ',' << format_double(rec.z_nt) << ',' << format_double(rec.xi1)
            << ',' << format_double(rec.xi2) << ','
            << format_double(rec.z_pe_xi1) << ',' << format_double(rec.z_pe_xi2)
            << ',' << format_double(rec.z_nt + rec.z_pe_xi1) << ','
            << format_double(rec.z_nt + rec.z_pe_xi2);
        for (std::size_t a = 0; a < flags.alphas.size(); ++a)
            out << ','
                << (a < rec.crit.size() ? format_double(rec.crit[a]) : "nan");
        for (const ClassificationMetrics* cls : {&rec.cls_xi1, &rec.cls_xi2})
            out << ',' << format_double(cls->tp_rate) << ','
                << format_double(cls->recall) << ',' << format_double(cls->f1);
        out << ',' << rec.k_hat << ',' << format_double(rec.purity) << ','
            << format_double(rec.nmi) << ',' << format_double(rec.msd_pre) << ','
            << format_double(rec.msd_post) << ','
            << csv_quote(join_doubles(rec.ic, ';')) << ','
            << format_double(rec.realized_snr) << ',' << csv_quote(rec.error)
            << '\n';
    }
    return out.str();
}

nlohmann::json summarize_records(const std::vector<RepRecord>& records,
                                 const RunConfig& config) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;

    nlohmann::json cfg;
    cfg["n"] = config.dgp.n;
    cfg["t"] = config.dgp.t;
    cfg["grid_size"] = config.dgp.grid_size;
    cfg["j_basis"] = config.dgp.j_basis;
    cfg["var_band"] = config.dgp.var_band;
    cfg["burn_in"] = config.dgp.burn_in;
    cfg["sdr"] = config.dgp.sdr;
    cfg["snr"] = config.dgp.snr;
    cfg["m"] = config.dgp.m;
    cfg["window_lo"] = config.dgp.window_lo;
    cfg["window_hi"] = config.dgp.window_hi;
    cfg["k0_break_fracs"] = config.dgp.k0_break_fracs;
    cfg["seed"] = config.dgp.seed;
    cfg["reps"] = config.reps;
    cfg["variant"] = config.variant == XiVariant::Xi1 ? "xi1" : "xi2";
    if (config.c_xi.has_value()) cfg["c_xi"] = *config.c_xi;
    else cfg["c_xi"] = nullptr;
    cfg["alphas"] = config.flags.alphas;
    cfg["rho"] = config.flags.rho < 0.0
                     ? default_rho(config.dgp.n, config.dgp.t)
                     : config.flags.rho;
    cfg["k_bar"] = config.flags.k_bar;
    cfg["n_draws"] = config.flags.n_draws;
    cfg["bridge_grid"] = config.flags.bridge_grid;
    cfg["lrc_bandwidth"] = config.flags.lrc_bandwidth;
    cfg["kernel"] =
        config.flags.kernel_name == TaperKernel::Bartlett ? "bartlett" : "flattop";
    cfg["remove_step_means"] = config.flags.remove_step_means;
    cfg["share_null_across_reps"] = config.flags.share_null_across_reps;
    cfg["threads"] = config.flags.threads;
    cfg["out_dir"] = config.out_dir;
    j["config"] = cfg;

    std::vector<const RepRecord*> ok;
    for (const RepRecord& rec : records)
        if (rec.error.empty()) ok.push_back(&rec);
    j["n_reps"] = records.size();
    j["n_failed"] = records.size() - ok.size();

    // Rejection rates per alpha: plain CUSUM and both enhanced variants
    // against the same simulated critical value.
    nlohmann::json rejection = nlohmann::json::array();
    for (std::size_t a = 0; a < config.flags.alphas.size(); ++a) {
        int total = 0, cusum = 0, pe1 = 0, pe2 = 0;
        for (const RepRecord* rec : ok) {
            if (a >= rec->crit.size()) continue;
            const double crit = rec->crit[a];
            ++total;
            if (rec->z_nt > crit) ++cusum;
            if (std::isfinite(rec->z_pe_xi1) && rec->z_nt + rec->z_pe_xi1 > crit)
                ++pe1;
            if (std::isfinite(rec->z_pe_xi2) && rec->z_nt + rec->z_pe_xi2 > crit)
                ++pe2;
        }
        nlohmann::json row;
        row["alpha"] = config.flags.alphas[a];
        row["n"] = total;
        auto rate = [total](int count) -> nlohmann::json {
            if (total == 0) return nullptr;
            return static_cast<double>(count) / total;
        };
        row["cusum"] = rate(cusum);
        row["pe_xi1"] = rate(pe1);
        row["pe_xi2"] = rate(pe2);
        rejection.push_back(row);
    }
    j["rejection"] = rejection;

    auto collect = [&ok](auto getter) {
        std::vector<double> v;
        v.reserve(ok.size());
        for (const RepRecord* rec : ok) v.push_back(getter(*rec));
        return v;
    };
    auto mean_json = [&](const std::vector<double>& v) -> nlohmann::json {
        const auto [m, c] = finite_mean(v);
        nlohmann::json out;
        out["mean"] = c ? nlohmann::json(m) : nlohmann::json(nullptr);
        out["n"] = c;
        return out;
    };

    nlohmann::json cls;
    cls["xi1"] = {
        {"tp_rate", mean_json(collect([](const RepRecord& r) { return r.cls_xi1.tp_rate; }))},
        {"recall", mean_json(collect([](const RepRecord& r) { return r.cls_xi1.recall; }))},
        {"f1", mean_json(collect([](const RepRecord& r) { return r.cls_xi1.f1; }))}};
    cls["xi2"] = {
        {"tp_rate", mean_json(collect([](const RepRecord& r) { return r.cls_xi2.tp_rate; }))},
        {"recall", mean_json(collect([](const RepRecord& r) { return r.cls_xi2.recall; }))},
        {"f1", mean_json(collect([](const RepRecord& r) { return r.cls_xi2.f1; }))}};
    j["classification"] = cls;

    nlohmann::json clu;
    std::map<int, int> k_dist;
    for (const RepRecord* rec : ok) ++k_dist[rec->k_hat];
    nlohmann::json dist = nlohmann::json::object();
    for (const auto& [k, count] : k_dist) dist[std::to_string(k)] = count;
    clu["k_hat_distribution"] = dist;
    clu["purity"] = mean_json(collect([](const RepRecord& r) { return r.purity; }));
    clu["nmi"] = mean_json(collect([](const RepRecord& r) { return r.nmi; }));
    clu["msd_pre"] =
        mean_json(collect([](const RepRecord& r) { return r.msd_pre; }));
    clu["msd_post"] =
        mean_json(collect([](const RepRecord& r) { return r.msd_post; }));
    j["clustering"] = clu;

    j["lambda1"] = mean_json(collect([](const RepRecord& r) { return r.lambda1; }));
    j["realized_snr"] =
        mean_json(collect([](const RepRecord& r) { return r.realized_snr; }));
    return j;
}

}  // namespace pecusum
