#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multimed/dag.hpp"
#include "multimed/dataset.hpp"

namespace multimed {

enum class Link { identity, sigmoid_threshold };

std::string_view to_string(Link link) noexcept;

/// Product term between two parents of the same node (positions into
/// CausalDag::parents of that node).
struct InteractionTerm {
    std::size_t first = 0;
    std::size_t second = 0;
    double coefficient = 0.0;
};

/// Structural equation of one node:
///   eta = intercept + coefficients . parents + sum(interactions) + noise_sd * N(0, 1)
/// identity link: value = eta; sigmoid-threshold: value = [sigmoid(eta) >= threshold].
struct NodeModel {
    std::vector<double> coefficients;
    double intercept = 0.0;
    double noise_sd = 1.0;
    Link link = Link::identity;
    double threshold = 0.5;
    std::vector<InteractionTerm> interactions;
};

/// Parameters of the synthetic data generator. `models[v]` belongs to DAG
/// node v. Exposure and mediators use the sigmoid-threshold link, all other
/// nodes the identity link.
struct ScmSpec {
    CausalDag dag;
    std::vector<NodeModel> models;
    std::uint64_t seed = 0;
    double scale = 1.0;

    /// Throws InputError if a model does not fit its node.
    void validate() const;
};

/// Number of draws used to calibrate intercepts.
inline constexpr std::size_t calibration_draws = 100'000;

/// Coefficients i.i.d. N(0, 1) * scale; intercepts chosen so the mean linear
/// predictor over a seeded calibration sample is zero.
ScmSpec generate_scm(const CausalDag& dag, std::uint64_t seed, double scale = 1.0);

/// Draw n units in topological order. Columns: covariates, exposure,
/// mediators (topological order), outcome; latent nodes are not emitted.
Dataset simulate_dataset(const ScmSpec& scm, std::size_t n, std::uint64_t seed);

/// Evaluate every node for one unit from its exogenous noise draws; nodes
/// with a value in `forced` are held at it (do-intervention).
std::vector<double> evaluate_unit(const ScmSpec& scm, const std::vector<double>& noise,
                                  const std::vector<std::optional<double>>& forced);

struct McEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Ground-truth effects of one mediator by direct manipulation.
struct TrueEffects {
    std::size_t k = 0;
    std::string mediator;
    McEstimate te;
    McEstimate cde;   // Y_k(1,0) - Y_k(0,0)
    McEstimate cie0;  // Y_k(0,1) - Y_k(0,0)
    McEstimate cie1;  // Y_k(1,1) - Y_k(1,0)
    McEstimate scie;  // M_k(1) CIE_k(1) - M_k(0) CIE_k(0)
    McEstimate m0;
    McEstimate m1;
    McEstimate y[2][2];  // Y_k(a, m)
    /// TE - CDE_k(0) - sCIE_k with its delta-method standard error.
    McEstimate gap;
};

struct OracleResult {
    std::size_t n_mc = 0;
    std::uint64_t seed = 0;
    McEstimate te;
    std::vector<TrueEffects> mediators;
    McEstimate average_cde;
    McEstimate average_scie;
    /// TE - mean_k CDE_k(0) - mean_k sCIE_k.
    McEstimate average_gap;
};

inline constexpr std::size_t min_oracle_draws = 10'000;

/// Monte Carlo ground truth for every mediator from the same draws (common
/// random numbers across all arms).
OracleResult oracle_effects(const ScmSpec& scm, std::size_t n_mc, std::uint64_t seed);
/// Single mediator (1-based k).
TrueEffects oracle_effects(const ScmSpec& scm, std::size_t k, std::size_t n_mc, std::uint64_t seed);

std::string serialize_scm(const ScmSpec& scm);
ScmSpec parse_scm(std::string_view text);

}  // namespace multimed
