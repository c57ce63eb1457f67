#include "multimed/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "multimed/error.hpp"

namespace multimed {

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
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
            out.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.emplace_back(trim(cur));
    return out;
}

}  // namespace

void Dataset::validate() const {
    const auto n = exposure.size();
    if (n < 1) throw AnalysisError("dataset has no rows");
    if (covariates.rows() != n || mediators.rows() != n || outcome.size() != n)
        throw AnalysisError("dataset columns have different lengths");
    if (static_cast<std::size_t>(covariates.cols()) != covariate_names.size() ||
        static_cast<std::size_t>(mediators.cols()) != mediator_names.size())
        throw AnalysisError("dataset column names do not match its shape");
    auto check_finite = [](const auto& m, const std::string& what) {
        if (!m.allFinite()) throw AnalysisError("missing or non-finite values in " + what);
    };
    for (Eigen::Index j = 0; j < covariates.cols(); ++j)
        check_finite(covariates.col(j), "column '" + covariate_names[j] + "'");
    check_finite(exposure, "column '" + exposure_name + "'");
    for (Eigen::Index j = 0; j < mediators.cols(); ++j)
        check_finite(mediators.col(j), "column '" + mediator_names[j] + "'");
    check_finite(outcome, "column '" + outcome_name + "'");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!is_binary(exposure[i]))
            throw AnalysisError("exposure column '" + exposure_name + "' is not binary at row " +
                                std::to_string(i + 1));
        for (Eigen::Index j = 0; j < mediators.cols(); ++j)
            if (!is_binary(mediators(i, j)))
                throw AnalysisError("mediator column '" + mediator_names[j] +
                                    "' is not binary at row " + std::to_string(i + 1));
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.covariates.resize(n, covariates.cols());
    out.exposure.resize(n);
    out.mediators.resize(n, mediators.cols());
    out.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        out.covariates.row(i) = covariates.row(r);
        out.exposure[i] = exposure[r];
        out.mediators.row(i) = mediators.row(r);
        out.outcome[i] = outcome[r];
    }
    out.covariate_names = covariate_names;
    out.exposure_name = exposure_name;
    out.mediator_names = mediator_names;
    out.outcome_name = outcome_name;
    return out;
}

std::vector<std::string> Dataset::column_names() const {
    std::vector<std::string> names = covariate_names;
    names.push_back(exposure_name);
    names.insert(names.end(), mediator_names.begin(), mediator_names.end());
    names.push_back(outcome_name);
    return names;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return j;
    throw AnalysisError("unknown column '" + std::string(name) + "'");
}

Table read_csv(std::istream& in) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (!have_header) {
            t.header = fields;
            t.columns.assign(fields.size(), {});
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw InputError("CSV line " + std::to_string(line_no) + ": expected " +
                             std::to_string(t.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const std::string& f = fields[j];
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!f.empty() && f != "NA") {
                const char* first = f.data();
                const char* last = f.data() + f.size();
                if (*first == '+') ++first;
                auto [ptr, ec] = std::from_chars(first, last, v);
                if (ec != std::errc() || ptr != last)
                    throw InputError("CSV line " + std::to_string(line_no) + ", column '" +
                                     t.header[j] + "': not a number: '" + f + "'");
            }
            t.columns[j].push_back(v);
        }
    }
    if (!have_header) throw InputError("CSV input is empty");
    return t;
}

Table read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_csv(in);
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

std::string to_csv(const Dataset& data) {
    std::ostringstream os;
    const auto names = data.column_names();
    for (std::size_t j = 0; j < names.size(); ++j) os << (j ? "," : "") << names[j];
    os << '\n';
    auto bin = [](double v) { return v != 0.0 ? '1' : '0'; };
    for (Eigen::Index i = 0; i < data.exposure.size(); ++i) {
        for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) os << format_double(data.covariates(i, j)) << ',';
        os << bin(data.exposure[i]);
        for (Eigen::Index j = 0; j < data.mediators.cols(); ++j) os << ',' << bin(data.mediators(i, j));
        os << ',' << format_double(data.outcome[i]) << '\n';
    }
    return os.str();
}

}  // namespace multimed
