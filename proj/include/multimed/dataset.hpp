#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace multimed {

/// Rectangular observational data: covariates L (n x p), binary exposure A,
/// binary mediators M (n x K, DAG topological order) and outcome Y.
struct Dataset {
    Eigen::MatrixXd covariates;
    Eigen::VectorXd exposure;
    Eigen::MatrixXd mediators;
    Eigen::VectorXd outcome;

    std::vector<std::string> covariate_names;
    std::string exposure_name;
    std::vector<std::string> mediator_names;
    std::string outcome_name;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(exposure.size()); }
    std::size_t mediator_count() const noexcept { return static_cast<std::size_t>(mediators.cols()); }

    /// Throws AnalysisError when shapes disagree, values are non-finite, or
    /// A / M leave {0, 1}.
    void validate() const;

    /// Rows selected by index (duplicates allowed), used for resampling.
    Dataset subset(const std::vector<std::size_t>& rows) const;

    /// Column names in CSV order: covariates, exposure, mediators, outcome.
    std::vector<std::string> column_names() const;
};

/// A parsed CSV table of numeric columns.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;  // column-major

    std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
    /// Index of a column by name; throws AnalysisError naming the column if absent.
    std::size_t column(std::string_view name) const;
};

/// Parse comma-separated text with a header row. Fields may be wrapped in
/// double quotes. Empty fields and "NA" read as NaN; anything else that is
/// not a number is an InputError with row and column.
Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);

/// Dataset CSV: header, binary columns as 0/1, floats with 17 significant digits.
std::string to_csv(const Dataset& data);

/// Format a double with 17 significant digits (round-trips exactly).
std::string format_double(double x);

}  // namespace multimed
