#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "multimed/dataset.hpp"

namespace multimed {

enum class EstimatorKind { doubly_robust, gformula };

/// "dr" or "gformula".
std::string_view to_string(EstimatorKind kind) noexcept;
EstimatorKind parse_estimator(std::string_view text);

/// Propensities are clipped to this range before weighting; a product
/// propensity is clipped factor-wise.
inline constexpr double propensity_lower = 0.01;
inline constexpr double propensity_upper = 0.99;

double clip_propensity(double p) noexcept;

struct PotentialEstimate {
    enum class Kind { mediator, outcome };

    Kind kind = Kind::mediator;
    std::size_t k = 0;  // 0-based mediator column
    int a = 0;
    int m = -1;         // -1 for M_k(a)
    EstimatorKind estimator = EstimatorKind::doubly_robust;
    double value = 0.0;
    /// Rows in the weighting stratum: A = a for M_k(a), (A = a, M_k = m) for Y_k(a, m).
    std::size_t stratum_count = 0;
};

/// mean_i [ f_i + 1(A_i = a) / g_i * (M_k,i - f_i) ] with g_i = P(A = a | L_i),
/// where `exposure_propensity` holds P(A = 1 | L). Throws EmptyStratumError
/// when no row has A = a.
PotentialEstimate dr_estimate_m(const Dataset& data, std::size_t k, int a, const Eigen::VectorXd& f,
                                const Eigen::VectorXd& exposure_propensity);

/// mean_i [ f_i + 1(A_i = a, M_k,i = m) / g_i * (Y_i - f_i) ] with
/// g_i = P(M_k = m | L_i, A = a) * P(A = a | L_i); `mediator_propensity`
/// holds P(M_k = 1 | L, A = a).
PotentialEstimate dr_estimate_y(const Dataset& data, std::size_t k, int a, int m, const Eigen::VectorXd& f,
                                const Eigen::VectorXd& exposure_propensity,
                                const Eigen::VectorXd& mediator_propensity);

/// Plug-in mean of f over all rows.
PotentialEstimate gformula_estimate(PotentialEstimate::Kind kind, std::size_t k, int a, int m,
                                    const Eigen::VectorXd& f);

/// Out-of-fold nuisance predictions for one mediator, one entry per row.
struct NuisancePredictions {
    Eigen::VectorXd f_m[2];     // E[M_k | A = a, L]
    Eigen::VectorXd f_y[2][2];  // E[Y | A = a, M_k = m, L]
    Eigen::VectorXd g_a;        // P(A = 1 | L)
    Eigen::VectorXd g_m[2];     // P(M_k = 1 | L, A = a)
};

struct Decomposition {
    std::size_t k = 0;
    std::string mediator;
    double m[2] = {0.0, 0.0};              // M_k(a)
    double y[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // Y_k(a, m)
    double cde = 0.0;
    double cie0 = 0.0;
    double cie1 = 0.0;
    double scie = 0.0;
    double te = 0.0;
    double delta_m = 0.0;  // M_k(1) - M_k(0)
    double delta_c = 0.0;  // CIE_k(1) - CIE_k(0)
    /// Undefined when |TE_k| < 1e-12.
    std::optional<double> pct_cde;
    std::optional<double> pct_scie;
    /// Some M_k(a) estimate fell outside [0, 1] (possible for DR; not clamped).
    bool mediator_out_of_range = false;
};

inline constexpr double te_zero_tolerance = 1e-12;

/// Assemble the decomposition from estimated potential means.
Decomposition assemble_decomposition(std::size_t k, std::string mediator, const double m[2], const double y[2][2]);

/// Estimate the six potential means of mediator k and assemble them.
Decomposition decompose_mediator(const Dataset& data, std::size_t k, EstimatorKind kind,
                                 const NuisancePredictions& predictions);

struct AverageDecomposition {
    double cde = 0.0;
    double scie = 0.0;
    double te = 0.0;
};

/// Means of CDE_k(0) and sCIE_k over mediators; TE is their sum.
AverageDecomposition average_decomposition(const std::vector<Decomposition>& slices);

/// The named effects reported per mediator, in report order.
inline constexpr std::string_view effect_names[] = {"pctCDE", "pctsCIE", "CDE", "sCIE", "TE", "CIE0", "CIE1",
                                                    "M0", "M1", "deltaM", "deltaC"};
inline constexpr std::size_t effect_count = std::size(effect_names);

/// Effect values of a slice in `effect_names` order (undefined percentages as NaN).
std::vector<double> effect_vector(const Decomposition& d);

// --- bootstrap ---------------------------------------------------------------

/// Statistic recomputed on a resample. Throwing EmptyStratumError drops the
/// replicate; any other exception aborts the bootstrap.
using BootstrapStatistic = std::function<std::vector<double>(const Dataset& resample, std::size_t replicate)>;

struct BootstrapOptions {
    std::size_t replicates = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

inline constexpr std::size_t min_bootstrap_replicates = 100;
inline constexpr double max_dropped_fraction = 0.2;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct BootstrapResult {
    std::vector<Interval> intervals;  // one per statistic component
    std::size_t kept = 0;
    std::size_t dropped = 0;
    /// Kept replicate values in replicate order.
    std::vector<std::vector<double>> values;
};

/// Quantile of sorted values by linear interpolation of the empirical CDF:
/// h = n p, result x_(floor h) + (h - floor h)(x_(floor h + 1) - x_(floor h))
/// with 1-based order statistics clamped to [x_(1), x_(n)]. NaNs are ignored.
double percentile(std::vector<double> values, double p);

/// Row resample of replicate b: n draws with replacement from a stream
/// derived from (seed, b).
std::vector<std::size_t> resample_rows(std::size_t n, std::uint64_t seed, std::size_t replicate);

/// Nonparametric percentile bootstrap. Results are ordered by replicate
/// index, so intervals do not depend on the thread count. More than 20%
/// dropped replicates is an AnalysisError.
BootstrapResult bootstrap_ci(const Dataset& data, const BootstrapStatistic& statistic, const BootstrapOptions& options);

}  // namespace multimed
