#pragma once

#include "ipwsel/simulation.hpp"
#include "ipwsel/weights.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ipwsel {

// Comma-delimited text with a header row. Cells are kept as trimmed strings;
// typed access goes through the loaders below.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

// Values of `name` at the given data rows (0-based). Errors name the 1-based
// data row and the column.
std::vector<double> numeric_column(const CsvTable& table, const std::string& name,
                                   const std::vector<std::size_t>& rows);

struct ColumnRoleMap {
    std::string outcome;
    std::vector<std::string> disease_covariates;
    // Selection covariates besides the outcome, which always enters first.
    std::vector<std::string> selection_covariates;
    std::optional<std::string> selection_indicator;
    std::optional<std::string> external_indicator;
    std::optional<std::string> external_prob;
    // Unit identifier; units sharing an id across internal and external files
    // are the overlap.
    std::optional<std::string> id;

    void validate() const;
};

ColumnRoleMap parse_roles(std::istream& in);
ColumnRoleMap load_roles(const std::string& path);

struct AnalysisSample {
    DesignMatrix disease;
    DesignMatrix selection;
    Vector outcome;
    std::vector<std::string> ids;     // empty when no id role
    std::vector<std::size_t> rows;    // data rows of the source table
};

struct ExternalSample {
    DesignMatrix selection;
    Vector pi_ext;
    std::vector<std::string> ids;
    std::vector<std::size_t> rows;
};

// Rows with selection_indicator = 1 (all rows when the role is absent).
AnalysisSample internal_sample(const CsvTable& table, const ColumnRoleMap& roles);
// Rows with external_indicator = 1 (all rows when absent); external_prob is required.
ExternalSample external_sample(const CsvTable& table, const ColumnRoleMap& roles);

std::vector<OverlapPair> match_overlap(const std::vector<std::string>& internal_ids,
                                       const std::vector<std::string>& external_ids);

PopulationSummary parse_population_summary(std::istream& in, PopulationSummary::Kind kind);
PopulationSummary load_population_summary(const std::string& path, PopulationSummary::Kind kind);

// key=value lines; dag/setup select the standard table, other keys override it.
SimulationConfig parse_simulation_config(std::istream& in);
SimulationConfig load_simulation_config(const std::string& path);

// Output

enum class OutputFormat { csv, json };
std::optional<OutputFormat> parse_format(std::string_view name);

using Field = std::variant<std::string, double, long>;

struct RecordTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Field>> rows;
};

// Doubles use 17 significant digits. CSV writes non-finite values as inf/nan,
// JSON as null. JSON is an array with one flat object per line.
void write_records(std::ostream& out, const RecordTable& table, OutputFormat format);

std::string format_number(double x);

struct FitRow {
    std::string method;
    std::string parameter;
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
};

RecordTable fit_table(const std::vector<FitRow>& rows);
RecordTable weights_table(const WeightSet& ws, const std::vector<std::string>& ids);
RecordTable study_table(const StudyResult& study);

void write_population(std::ostream& out, const Population& pop);

// Writes via a temporary file renamed into place.
void write_file(const std::string& path, const std::string& contents);

}  // namespace ipwsel
