#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multimed/dag.hpp"
#include "multimed/dataset.hpp"
#include "multimed/estimator.hpp"
#include "multimed/nuisance.hpp"

namespace multimed {

/// One candidate (outcome spec, propensity spec) pair. The outcome spec
/// drives f_Y (its family) and f_M (always logistic); the propensity spec
/// drives g_M and the mediator factor of g_Y. Without a family the outcome
/// model is logistic for a binary outcome and linear otherwise.
struct CandidateConfig {
    std::string name;
    std::optional<Family> outcome_family;
    FeatureMap outcome_features;
    FeatureMap propensity_features;

    bool operator==(const CandidateConfig&) const = default;
};

struct OracleConfig {
    std::string spec_path;
    std::size_t n_mc = 1'000'000;
    std::uint64_t seed = 0;
};

/// Analysis configuration, a `key = value` document:
///
///     [input]       data, dag
///     [roles]       NODE = column[, column ...]   (default: node name = column)
///     [binarize]    column = threshold            (value >= threshold -> 1)
///     [estimation]  estimator, penalty_grid, outer_folds, inner_folds,
///                   standardize, allow_unidentified
///     [candidate.NAME]  outcome_family, outcome_drop, outcome_interactions,
///                       propensity_drop, propensity_interactions
///     [bootstrap]   replicates, level
///     [run]         seed, threads
///     [oracle]      spec, n_mc, seed
///     [output]      report
///
/// Relative paths resolve against the directory of the config file.
struct AnalysisConfig {
    std::string data_path;
    std::string dag_path;
    std::map<std::string, std::vector<std::string>> roles;
    std::map<std::string, double> binarize;
    EstimatorKind estimator = EstimatorKind::doubly_robust;
    std::vector<double> penalty_grid = default_penalty_grid();
    std::size_t outer_folds = 5;
    std::size_t inner_folds = 3;
    bool standardize = true;
    bool allow_unidentified = false;
    std::vector<CandidateConfig> candidates;
    std::size_t bootstrap = 1000;  // 0 skips confidence intervals
    double level = 0.95;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::optional<OracleConfig> oracle;
    std::string report_path;

    /// Candidates with the default single main-effects pair filled in.
    std::vector<CandidateConfig> resolved_candidates() const;
    /// Throws InputError on out-of-range values or a missing seed.
    void validate() const;
};

AnalysisConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
AnalysisConfig load_config(const std::filesystem::path& path);

/// "A*M1" -> ("A", "M1").
std::pair<std::string, std::string> parse_interaction(std::string_view text);

/// Build the analysis dataset from a CSV table: apply thresholds, then map
/// DAG nodes to columns (covariates in DAG order, mediators in topological
/// order). An unknown column is an AnalysisError naming it.
Dataset load_dataset(const AnalysisConfig& config, const CausalDag& dag, const Table& table);

}  // namespace multimed
