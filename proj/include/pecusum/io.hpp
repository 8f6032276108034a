// =============================================================================
// Dataset ingestion, CIDR construction, JSON/CSV serialization, and the
// TOML-subset run configuration.
//
// CSV layouts:
//   long: header subject,time,gridpoint,value; one cell per row.
//   wide: header subject,time,g1..gG; one (subject,time) per row.
// Subject labels are 1-based on disk and in JSON; rows may arrive in any order
// but must form a complete N x T x G lattice. Floats serialize with 17
// significant digits; files are written atomically (temp + rename).
// =============================================================================
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pecusum/breaks.hpp"
#include "pecusum/cusum.hpp"
#include "pecusum/nulldist.hpp"
#include "pecusum/panel.hpp"
#include "pecusum/simulate.hpp"

namespace pecusum {

enum class PanelLayout { Long, Wide };

struct PanelSource {
    std::string path;
    PanelLayout layout = PanelLayout::Long;
    // Explicit grid points; absent infers a uniform grid over [0,1].
    std::optional<Vec> grid_points;
};

// Throws std::runtime_error with row numbers on parse errors and a
// completeness error listing the first 10 missing (subject,time,grid) cells.
FunctionalPanel load_panel(const PanelSource& src);

void save_panel(const FunctionalPanel& panel, const std::string& path,
                PanelLayout layout);

// Cumulative intraday log-return curves from positive prices (rows = t):
// value(t, j) = 100 * (ln P(t, j) - ln P(t, 0)); column 0 identically zero.
// Throws std::domain_error naming (t, j) on a nonpositive price.
MatRM cidr_transform(const MatRM& prices);

// --------------------------------------------------------------------------
// JSON (schema_version-stamped)
// --------------------------------------------------------------------------

nlohmann::json to_json(const NullSpec& spec);
NullSpec null_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BreakReport& report);
nlohmann::json to_json(const ClusterModel& model);

// Test report assembled for the CLI: statistics, threshold, critical values
// per alpha, p-value when present.
nlohmann::json test_result_json(const TestResult& result,
                                const std::vector<double>& alphas,
                                const std::vector<double>& crits);

// --------------------------------------------------------------------------
// TOML subset
// --------------------------------------------------------------------------

using TomlValue = std::variant<bool, std::int64_t, double, std::string,
                               std::vector<double>, std::vector<std::string>>;

// Accepts [section] headers, key = scalar, and flat arrays. Keys flatten to
// "section.key". Throws std::runtime_error with the offending line number.
std::map<std::string, TomlValue> parse_toml(const std::string& text);
std::map<std::string, TomlValue> parse_toml_file(const std::string& path);

struct RunConfig {
    DgpConfig dgp;
    RunFlags flags;
    XiVariant variant = XiVariant::Xi2;
    std::optional<double> c_xi;  // unset selects data-driven sqrt(lambda1)
    int reps = 200;
    std::string out_dir = ".";
};

// Applies recognized "dgp.*", "run.*", "test.*" keys over the defaults;
// unknown keys are an error (catches typos).
RunConfig run_config_from_toml(const std::map<std::string, TomlValue>& kv);

// --------------------------------------------------------------------------
// Output files
// --------------------------------------------------------------------------

void atomic_write(const std::string& path, const std::string& content);

std::string records_csv(const std::vector<RepRecord>& records,
                        const RunFlags& flags);

// Aggregate summary keyed by the run configuration: rejection rates per alpha
// and variant, metric means, K-hat distribution.
nlohmann::json summarize_records(const std::vector<RepRecord>& records,
                                 const RunConfig& config);

// 17-significant-digit float formatting used by all writers.
std::string format_double(double x);

}  // namespace pecusum
