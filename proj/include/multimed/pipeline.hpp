#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "multimed/config.hpp"
#include "multimed/dag.hpp"
#include "multimed/dataset.hpp"
#include "multimed/estimator.hpp"
#include "multimed/io.hpp"
#include "multimed/nuisance.hpp"
#include "multimed/scm.hpp"

namespace multimed {

/// Model specifications of one candidate as used for mediator k.
struct CandidateSpecs {
    std::string name;
    ModelSpec outcome;       // f_Y
    ModelSpec mediator;      // f_M: outcome features, logistic
    ModelSpec propensity;    // g_M and the mediator factor of g_Y
};

CandidateSpecs candidate_specs(const CandidateConfig& c, const AnalysisConfig& config, bool binary_outcome);

struct ChosenPenalties {
    double f_m = 0.0;
    double f_y = 0.0;
    double g_a = 0.0;  // 0 for the g-formula
    double g_m = 0.0;
};

struct MediatorAnalysis {
    Selection selection;
    CandidateSpecs chosen;
    ChosenPenalties penalties;
    Decomposition decomposition;
    std::optional<TrueEffects> oracle;
};

struct AnalysisResult {
    AnalysisConfig config;
    std::vector<IgnorabilityReport> ignorability;
    std::vector<MediatorAnalysis> mediators;
    AverageDecomposition average;
    /// Statistic layout: effect_vector of every mediator, then average CDE, sCIE, TE.
    std::optional<BootstrapResult> bootstrap;
    std::optional<OracleResult> oracle;
    std::vector<std::string> warnings;
};

/// Names of the selection target components per mediator.
inline constexpr std::string_view selection_target[] = {"TE", "CIE0", "CIE1"};

/// Check ignorability, select a candidate per mediator by minmax pseudo-risk,
/// fit the nuisances by nested cross-validation, decompose each mediator,
/// average, and bootstrap. `oracle_scm` adds ground-truth effects.
AnalysisResult run_analysis(const AnalysisConfig& config, const CausalDag& dag, const Dataset& data,
                            const std::optional<ScmSpec>& oracle_scm = std::nullopt);

/// Digests and timestamp recorded in the report diagnostics.
struct ReportContext {
    std::string data_sha256;
    std::string dag_sha256;
    std::string config_sha256;       // empty without a config file
    std::string oracle_spec_sha256;  // empty without an oracle
    std::string timestamp;
};

Json config_echo(const AnalysisConfig& config, const CausalDag& dag);
Json ignorability_json(const IgnorabilityReport& r);
Json build_report(const AnalysisResult& result, const CausalDag& dag, const ReportContext& context);

/// Aligned text table: effects as rows, mediators as columns.
std::string render_table(const AnalysisResult& result);

/// Per-mediator maximum residuals of the assembled identities.
struct IdentityResiduals {
    double te = 0.0;        // |TE_k - CDE_k - sCIE_k|
    double pct = 0.0;       // |pctCDE + pctsCIE - 100|
    double scie = 0.0;      // |sCIE - dC M(0) - dM CIE(1)|
    double average = 0.0;   // |avg TE - avg CDE - avg sCIE|
};

IdentityResiduals identity_residuals(const AnalysisResult& result);

Json true_effects_json(const TrueEffects& t);
Json oracle_json(const OracleResult& r);

}  // namespace multimed
