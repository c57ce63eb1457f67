#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "multimed/dataset.hpp"

namespace multimed {

enum class Family { ridge_linear, ridge_logistic };

std::string_view to_string(Family f) noexcept;

/// Which columns enter a design matrix. Every input of the nuisance role is
/// used except those listed in `drop`; `interactions` adds pairwise
/// products. Names are dataset column names, or the placeholders "@A" (the
/// exposure) and "@M" (the focal mediator). Interactions that mention a
/// column the role does not use are skipped.
struct FeatureMap {
    std::vector<std::string> drop;
    std::vector<std::pair<std::string, std::string>> interactions;

    bool operator==(const FeatureMap&) const = default;
};

struct ModelSpec {
    Family family = Family::ridge_linear;
    std::vector<double> penalty_grid;  // C values, strictly positive, ascending
    FeatureMap features;
    bool standardize = true;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

/// Seven points log-spaced over [1e-3, 1e3].
std::vector<double> default_penalty_grid();

/// The four nuisance functions of the doubly robust estimators.
enum class NuisanceRole {
    mediator_outcome,     // f_M,k = E[M_k | A, L]
    outcome,              // f_Y,k = E[Y | A, M_k, L]
    exposure_propensity,  // g_M   = P(A = 1 | L)
    mediator_propensity,  // factor P(M_k = 1 | L, A) of g_Y,k
};

std::string_view to_string(NuisanceRole r) noexcept;

/// Values substituted for the exposure / focal mediator when building a
/// design (predictions under A = a, M_k = m).
struct DesignOverride {
    std::optional<double> exposure;
    std::optional<double> mediator;
};

/// Input columns of a role (before drops), `k` is the 0-based mediator column.
std::vector<std::string> role_inputs(const Dataset& data, NuisanceRole role, std::size_t k);
std::vector<std::string> design_columns(const Dataset& data, NuisanceRole role, std::size_t k,
                                        const FeatureMap& features);
Eigen::MatrixXd build_design(const Dataset& data, NuisanceRole role, std::size_t k,
                             const FeatureMap& features, const DesignOverride& override = {});
Eigen::VectorXd role_target(const Dataset& data, NuisanceRole role, std::size_t k);

/// A fitted ridge GLM. Features are standardized with the training split's
/// mean and standard deviation when requested; the intercept is unpenalized.
struct FittedGlm {
    Family family = Family::ridge_linear;
    double penalty = 0.0;
    double intercept = 0.0;
    Eigen::VectorXd coefficients;  // on the standardized scale
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    std::size_t iterations = 0;
    bool converged = true;
    /// Penalized objective after each accepted IRLS step (logistic only).
    std::vector<double> objective_trace;

    /// Linear predictor for each row of X (raw, unstandardized features).
    Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const;
    /// Mean response: the linear predictor, or a probability in (0, 1).
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

inline constexpr double irls_tolerance = 1e-8;
inline constexpr std::size_t irls_max_iterations = 100;

/// Ridge-linear: closed-form penalized least squares.
/// Ridge-logistic: IRLS (Newton) on  sum log(1 + e^eta) - y eta + C/2 |beta|^2
/// to gradient norm 1e-8 or 100 iterations, halving the step whenever the
/// objective would increase.
FittedGlm fit_regularized_glm(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double penalty, bool standardize = true);

/// Gradient of the penalized objective at a fitted model, on the
/// (standardized) scale the model was fitted on; intercept first.
Eigen::VectorXd penalized_gradient(const FittedGlm& model, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& y);

/// Squared error (linear) or log loss (logistic), averaged over rows.
double validation_loss(Family family, const Eigen::VectorXd& y, const Eigen::VectorXd& prediction);

struct FittedNuisance {
    ModelSpec spec;
    NuisanceRole role = NuisanceRole::outcome;
    std::size_t mediator = 0;  // 0-based mediator column where applicable
    FittedGlm model;
    /// Mean inner-fold validation loss per grid point (empty when C was fixed).
    std::vector<double> validation_losses;
};

/// Seeded fold labels in [0, folds). With `strata` (a binary vector) each
/// class is dealt round-robin over the folds after its own permutation.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed,
                                      const Eigen::VectorXd* strata = nullptr);

/// One model per outer fold; row i is only ever predicted by the model of
/// its own fold, which never saw it.
struct CrossFit {
    std::vector<std::size_t> fold_of_row;
    std::vector<FittedNuisance> models;
    /// Penalty chosen most often across outer folds (ties: smaller C).
    double chosen_penalty = 0.0;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct CvOptions {
    std::size_t outer_folds = 5;
    std::size_t inner_folds = 3;
    std::uint64_t seed = 0;
};

/// Nested cross-validation: for each outer fold, inner CV over the penalty
/// grid picks the C with the lowest mean validation loss (ties: lower grid
/// index), which is refit on the whole outer-training set. Folds are
/// stratified by class for logistic targets. `target_name` labels errors.
CrossFit nested_cv_select(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const CvOptions& options, const std::string& target_name = "target");

/// Cross-fitting with a fixed penalty (no inner loop).
CrossFit cross_fit(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double penalty, std::size_t folds, std::uint64_t seed,
                   const std::string& target_name = "target");

// --- minmax model selection --------------------------------------------------

/// An outcome model specification paired with a propensity specification.
struct CandidatePair {
    std::string name;
    ModelSpec outcome;
    ModelSpec propensity;
};

struct PseudoRiskRow {
    std::size_t candidate = 0;
    std::string name;
    double pseudo_risk = 0.0;
    std::vector<double> estimate;  // target functional at (f, g)
};

struct Selection {
    std::size_t chosen = 0;
    std::vector<PseudoRiskRow> table;
};

/// Doubly robust estimate of the target functional (possibly vector valued)
/// for an outcome specification paired with a propensity specification.
using TargetEstimator = std::function<std::vector<double>(const ModelSpec& outcome, const ModelSpec& propensity)>;

/// Mixed minmax selection. For a pair (f, g) the pseudo-risk is
///   max( max_{g' in G} |psi(f, g') - psi(f, g)|, max_{f' in F} |psi(f', g) - psi(f, g)| )
/// with F and G the distinct outcome and propensity specifications among the
/// candidates and |.| the largest absolute component. The pair with the
/// smallest pseudo-risk wins; ties go to the earlier candidate.
Selection minmax_select_models(const std::vector<CandidatePair>& candidates, const TargetEstimator& estimate);

}  // namespace multimed
