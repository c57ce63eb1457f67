#include "multimed/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>

#include "multimed/error.hpp"
#include "multimed/rng.hpp"

namespace multimed {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

bool is_binary(const Eigen::VectorXd& v) {
    return (v.array() == 0.0 || v.array() == 1.0).all();
}

std::size_t role_index(NuisanceRole r) { return static_cast<std::size_t>(r); }

/// Exposure propensity models never depend on the mediator index.
std::size_t cache_k(NuisanceRole role, std::size_t k) {
    return role == NuisanceRole::exposure_propensity ? 0 : k;
}

std::string target_name(const Dataset& data, NuisanceRole role, std::size_t k) {
    switch (role) {
        case NuisanceRole::exposure_propensity: return data.exposure_name;
        case NuisanceRole::outcome: return data.outcome_name;
        default: return data.mediator_names[k];
    }
}

struct CacheEntry {
    NuisanceRole role;
    std::size_t k;
    ModelSpec spec;
    CrossFit fit;
};

const CacheEntry* find_entry(const std::deque<CacheEntry>& cache, NuisanceRole role, std::size_t k, const ModelSpec& spec) {
    for (const auto& e : cache)
        if (e.role == role && e.k == k && e.spec == spec) return &e;
    return nullptr;
}

using Fitter = std::function<const CrossFit&(NuisanceRole, std::size_t, const ModelSpec&)>;

NuisancePredictions predict_all(const Dataset& data, std::size_t k, const CandidateSpecs& specs, EstimatorKind kind,
                                const Fitter& fit) {
    NuisancePredictions p;
    const CrossFit& fm = fit(NuisanceRole::mediator_outcome, k, specs.mediator);
    const CrossFit& fy = fit(NuisanceRole::outcome, k, specs.outcome);
    for (int a = 0; a < 2; ++a) {
        p.f_m[a] = fm.predict(build_design(data, NuisanceRole::mediator_outcome, k, specs.mediator.features, {a, {}}));
        for (int m = 0; m < 2; ++m)
            p.f_y[a][m] = fy.predict(build_design(data, NuisanceRole::outcome, k, specs.outcome.features, {a, m}));
    }
    if (kind == EstimatorKind::doubly_robust) {
        const CrossFit& ga = fit(NuisanceRole::exposure_propensity, 0, specs.propensity);
        p.g_a = ga.predict(build_design(data, NuisanceRole::exposure_propensity, 0, specs.propensity.features));
        const CrossFit& gm = fit(NuisanceRole::mediator_propensity, k, specs.propensity);
        for (int a = 0; a < 2; ++a)
            p.g_m[a] = gm.predict(
                build_design(data, NuisanceRole::mediator_propensity, k, specs.propensity.features, {a, {}}));
    }
    return p;
}

std::vector<double> oracle_vector(const TrueEffects& t) {
    double pct = std::abs(t.te.value) >= te_zero_tolerance ? 100.0 * t.cde.value / t.te.value : nan;
    return {pct, std::isnan(pct) ? nan : 100.0 - pct, t.cde.value, t.scie.value, t.te.value, t.cie0.value,
            t.cie1.value, t.m0.value, t.m1.value, t.m1.value - t.m0.value, t.cie1.value - t.cie0.value};
}

std::string witness_text(const std::vector<std::string>& path) {
    std::string s;
    for (std::size_t i = 0; i < path.size(); ++i) s += (i ? " - " : "") + path[i];
    return s;
}

std::string interaction_text(const std::pair<std::string, std::string>& p) { return p.first + "*" + p.second; }

Json feature_json(const FeatureMap& f) {
    Json inter = Json::array();
    for (const auto& p : f.interactions) inter.push_back(interaction_text(p));
    return Json{{"drop", f.drop}, {"interactions", inter}};
}

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

CandidateSpecs candidate_specs(const CandidateConfig& c, const AnalysisConfig& config, bool binary_outcome) {
    CandidateSpecs s;
    s.name = c.name;
    auto base = [&](Family f, const FeatureMap& fm) {
        ModelSpec m;
        m.family = f;
        m.penalty_grid = config.penalty_grid;
        m.features = fm;
        m.standardize = config.standardize;
        return m;
    };
    Family outcome_family = c.outcome_family.value_or(binary_outcome ? Family::ridge_logistic : Family::ridge_linear);
    s.outcome = base(outcome_family, c.outcome_features);
    s.mediator = base(Family::ridge_logistic, c.outcome_features);
    s.propensity = base(Family::ridge_logistic, c.propensity_features);
    return s;
}

AnalysisResult run_analysis(const AnalysisConfig& config, const CausalDag& dag, const Dataset& data,
                            const std::optional<ScmSpec>& oracle_scm) {
    config.validate();
    data.validate();
    const std::size_t K = data.mediator_count();
    if (K != dag.mediator_count()) throw InputError("dataset and DAG disagree on the number of mediators");
    const std::uint64_t seed = *config.seed;

    AnalysisResult result;
    result.config = config;

    for (std::size_t k = 1; k <= K; ++k) {
        IgnorabilityReport r = check_ignorability(dag, k);
        if (!r.holds()) {
            std::string msg = "mediator " + r.mediator + " is not identified:";
            if (!r.condition_m) msg += " M(a) _||_ A | L fails via " + witness_text(*r.witness_m) + ";";
            if (!r.condition_y) msg += " Y(a,m) _||_ {A, M} | L fails via " + witness_text(*r.witness_y) + ";";
            msg.pop_back();
            if (!config.allow_unidentified) throw AnalysisError(msg);
            result.warnings.push_back(msg + " (continuing: allow_unidentified)");
        }
        result.ignorability.push_back(std::move(r));
    }

    const bool binary_outcome = is_binary(data.outcome);
    const auto candidates = config.resolved_candidates();
    std::vector<CandidateSpecs> specs;
    for (const auto& c : candidates) specs.push_back(candidate_specs(c, config, binary_outcome));

    std::deque<CacheEntry> cache;
    Fitter nested = [&](NuisanceRole role, std::size_t k, const ModelSpec& spec) -> const CrossFit& {
        k = cache_k(role, k);
        if (const CacheEntry* e = find_entry(cache, role, k, spec)) return e->fit;
        Eigen::MatrixXd X = build_design(data, role, k, spec.features);
        Eigen::VectorXd y = role_target(data, role, k);
        CvOptions cv{config.outer_folds, config.inner_folds, rng::derive(seed, {rng::tag::folds, role_index(role), k})};
        cache.push_back({role, k, spec, nested_cv_select(spec, X, y, cv, target_name(data, role, k))});
        return cache.back().fit;
    };

    for (std::size_t k = 0; k < K; ++k) {
        MediatorAnalysis ma;
        auto decompose_with = [&](const CandidateSpecs& s) {
            return decompose_mediator(data, k, config.estimator, predict_all(data, k, s, config.estimator, nested));
        };
        if (specs.size() >= 2) {
            std::vector<CandidatePair> pairs;
            for (const auto& s : specs) pairs.push_back({s.name, s.outcome, s.propensity});
            ma.selection = minmax_select_models(pairs, [&](const ModelSpec& f, const ModelSpec& g) {
                CandidateSpecs s{"", f, f, g};
                s.mediator.family = Family::ridge_logistic;
                Decomposition d = decompose_with(s);
                return std::vector<double>{d.te, d.cie0, d.cie1};
            });
        } else {
            Decomposition d = decompose_with(specs.front());
            ma.selection.table.push_back({0, specs.front().name, 0.0, {d.te, d.cie0, d.cie1}});
        }
        ma.chosen = specs[ma.selection.chosen];
        ma.decomposition = decompose_with(ma.chosen);
        ma.penalties.f_m = nested(NuisanceRole::mediator_outcome, k, ma.chosen.mediator).chosen_penalty;
        ma.penalties.f_y = nested(NuisanceRole::outcome, k, ma.chosen.outcome).chosen_penalty;
        if (config.estimator == EstimatorKind::doubly_robust) {
            ma.penalties.g_a = nested(NuisanceRole::exposure_propensity, k, ma.chosen.propensity).chosen_penalty;
            ma.penalties.g_m = nested(NuisanceRole::mediator_propensity, k, ma.chosen.propensity).chosen_penalty;
        }
        const Decomposition& d = ma.decomposition;
        if (d.mediator_out_of_range)
            result.warnings.push_back("estimated M(a) for " + d.mediator + " lies outside [0, 1] (not clamped)");
        if (!d.pct_cde)
            result.warnings.push_back("TE for " + d.mediator + " is within 1e-12 of 0; percentages are undefined");
        result.mediators.push_back(std::move(ma));
    }
    std::size_t unconverged = 0;
    for (const auto& e : cache)
        for (const auto& m : e.fit.models) unconverged += m.model.converged ? 0 : 1;
    if (unconverged > 0)
        result.warnings.push_back(std::to_string(unconverged) + " logistic fits stopped at the iteration limit");

    std::vector<Decomposition> slices;
    for (const auto& m : result.mediators) slices.push_back(m.decomposition);
    result.average = average_decomposition(slices);

    if (config.bootstrap > 0) {
        BootstrapStatistic statistic = [&](const Dataset& resample, std::size_t b) {
            std::deque<CacheEntry> local;
            Fitter frozen = [&](NuisanceRole role, std::size_t k, const ModelSpec& spec) -> const CrossFit& {
                k = cache_k(role, k);
                if (const CacheEntry* e = find_entry(local, role, k, spec)) return e->fit;
                const CacheEntry* original = find_entry(cache, role, k, spec);
                if (!original) throw std::logic_error("bootstrap needs a model that was never fitted");
                Eigen::MatrixXd X = build_design(resample, role, k, spec.features);
                Eigen::VectorXd y = role_target(resample, role, k);
                local.push_back({role, k, spec,
                                 cross_fit(spec, X, y, original->fit.chosen_penalty, config.outer_folds,
                                           rng::derive(seed, {rng::tag::bootstrap, b, role_index(role), k}),
                                           target_name(resample, role, k))});
                return local.back().fit;
            };
            std::vector<double> out;
            std::vector<Decomposition> rep;
            for (std::size_t k = 0; k < K; ++k) {
                const CandidateSpecs& s = result.mediators[k].chosen;
                rep.push_back(decompose_mediator(resample, k, config.estimator,
                                                 predict_all(resample, k, s, config.estimator, frozen)));
                auto v = effect_vector(rep.back());
                out.insert(out.end(), v.begin(), v.end());
            }
            AverageDecomposition avg = average_decomposition(rep);
            out.insert(out.end(), {avg.cde, avg.scie, avg.te});
            return out;
        };
        BootstrapOptions opts{config.bootstrap, config.level, rng::derive(seed, {rng::tag::bootstrap}), config.threads};
        result.bootstrap = bootstrap_ci(data, statistic, opts);
        if (result.bootstrap->dropped > 0)
            result.warnings.push_back(std::to_string(result.bootstrap->dropped) +
                                      " bootstrap replicates dropped for an empty stratum");
    }

    if (oracle_scm) {
        result.oracle = oracle_effects(*oracle_scm, config.oracle ? config.oracle->n_mc : 1'000'000,
                                       config.oracle ? config.oracle->seed : 0);
        for (std::size_t k = 0; k < K; ++k) {
            const std::string& node = dag.node(dag.mediators()[k]).name;
            auto it = std::find_if(result.oracle->mediators.begin(), result.oracle->mediators.end(),
                                   [&](const TrueEffects& t) { return t.mediator == node; });
            if (it == result.oracle->mediators.end())
                throw InputError("oracle SCM has no mediator named '" + node + "'");
            result.mediators[k].oracle = *it;
        }
    }
    return result;
}

IdentityResiduals identity_residuals(const AnalysisResult& result) {
    IdentityResiduals r;
    for (const auto& m : result.mediators) {
        const Decomposition& d = m.decomposition;
        r.te = std::max(r.te, std::abs(d.te - d.cde - d.scie));
        if (d.pct_cde) r.pct = std::max(r.pct, std::abs(*d.pct_cde + *d.pct_scie - 100.0));
        r.scie = std::max(r.scie, std::abs(d.scie - d.delta_c * d.m[0] - d.delta_m * d.cie1));
    }
    r.average = std::abs(result.average.te - result.average.cde - result.average.scie);
    return r;
}

// --- report --------------------------------------------------------------------

Json config_echo(const AnalysisConfig& config, const CausalDag& dag) {
    Json roles = Json::object();
    for (const auto& node : dag.nodes()) {
        if (node.role == Role::latent) continue;
        auto it = config.roles.find(node.name);
        roles[node.name] = it == config.roles.end() ? std::vector<std::string>{node.name} : it->second;
    }
    Json binarize = Json::object();
    for (const auto& [col, t] : config.binarize) binarize[col] = t;
    Json candidates = Json::array();
    for (const auto& c : config.resolved_candidates())
        candidates.push_back({{"name", c.name},
                              {"outcome_family", c.outcome_family ? std::string(to_string(*c.outcome_family)) : "auto"},
                              {"outcome_features", feature_json(c.outcome_features)},
                              {"propensity_features", feature_json(c.propensity_features)}});
    Json oracle = nullptr;
    if (config.oracle)
        oracle = {{"spec", config.oracle->spec_path}, {"n_mc", config.oracle->n_mc}, {"seed", config.oracle->seed}};
    return {{"input", {{"data", config.data_path}, {"dag", config.dag_path}}},
            {"roles", roles},
            {"binarize", binarize},
            {"estimation",
             {{"estimator", std::string(to_string(config.estimator))},
              {"penalty_grid", config.penalty_grid},
              {"outer_folds", config.outer_folds},
              {"inner_folds", config.inner_folds},
              {"standardize", config.standardize},
              {"allow_unidentified", config.allow_unidentified},
              {"propensity_clip", {propensity_lower, propensity_upper}}}},
            {"candidates", candidates},
            {"bootstrap", {{"replicates", config.bootstrap}, {"level", config.level}, {"quantile", "linear-cdf (h = n p)"}}},
            {"run", {{"seed", config.seed ? Json(*config.seed) : Json(nullptr)}}},
            {"oracle", oracle}};
}

Json ignorability_json(const IgnorabilityReport& r) {
    auto cond = [](bool holds, const std::optional<std::vector<std::string>>& w) {
        return Json{{"holds", holds}, {"witness", w ? Json(*w) : Json(nullptr)}};
    };
    return {{"mediator", r.mediator},
            {"k", r.k},
            {"holds", r.holds()},
            {"mediator_condition", cond(r.condition_m, r.witness_m)},
            {"outcome_condition", cond(r.condition_y, r.witness_y)}};
}

Json build_report(const AnalysisResult& result, const CausalDag& dag, const ReportContext& ctx) {
    Json report;
    report["config"] = config_echo(result.config, dag);

    Json ign = Json::array();
    for (const auto& r : result.ignorability) ign.push_back(ignorability_json(r));
    report["ignorability"] = ign;

    Json selection = Json::array();
    for (const auto& m : result.mediators) {
        Json table = Json::array();
        for (const auto& row : m.selection.table) {
            Json est = Json::array();
            for (double v : row.estimate) est.push_back(number(v));
            table.push_back({{"candidate", row.name}, {"pseudo_risk", row.pseudo_risk}, {"estimate", est}});
        }
        selection.push_back({{"mediator", m.decomposition.mediator},
                             {"target", {"TE", "CIE0", "CIE1"}},
                             {"pseudo_risk", "mixed minmax: max over single-model perturbations of the largest |change| in the target"},
                             {"chosen", m.chosen.name},
                             {"candidates", table},
                             {"penalties",
                              {{"f_M", m.penalties.f_m},
                               {"f_Y", m.penalties.f_y},
                               {"g_A", number(m.penalties.g_a)},
                               {"g_M", number(m.penalties.g_m)}}},
                             {"outcome_family", std::string(to_string(m.chosen.outcome.family))}});
    }
    report["selection"] = selection;

    const std::size_t K = result.mediators.size();
    auto interval = [&](std::size_t index) -> std::pair<Json, Json> {
        if (!result.bootstrap) return {nullptr, nullptr};
        const Interval& iv = result.bootstrap->intervals[index];
        return {number(iv.lower), number(iv.upper)};
    };
    Json effects = Json::array();
    for (std::size_t k = 0; k < K; ++k) {
        const auto& m = result.mediators[k];
        auto values = effect_vector(m.decomposition);
        std::vector<double> truth = m.oracle ? oracle_vector(*m.oracle) : std::vector<double>{};
        for (std::size_t j = 0; j < effect_count; ++j) {
            auto [lo, hi] = interval(k * effect_count + j);
            Json row{{"mediator", m.decomposition.mediator},
                     {"effect", std::string(effect_names[j])},
                     {"estimate", number(values[j])},
                     {"ci_lower", lo},
                     {"ci_upper", hi}};
            if (m.oracle) row["oracle"] = number(truth[j]);
            effects.push_back(row);
        }
    }
    report["effects"] = effects;

    Json average = Json::array();
    const double avg_values[] = {result.average.cde, result.average.scie, result.average.te};
    const char* avg_names[] = {"CDE", "sCIE", "TE"};
    for (std::size_t j = 0; j < 3; ++j) {
        auto [lo, hi] = interval(K * effect_count + j);
        Json row{{"effect", avg_names[j]}, {"estimate", number(avg_values[j])}, {"ci_lower", lo}, {"ci_upper", hi}};
        if (result.oracle) {
            const double truth[] = {result.oracle->average_cde.value, result.oracle->average_scie.value,
                                    result.oracle->te.value};
            row["oracle"] = number(truth[j]);
        }
        average.push_back(row);
    }
    report["average"] = average;

    IdentityResiduals res = identity_residuals(result);
    Json diag;
    diag["software"] = "multimed";
    diag["version"] = MULTIMED_VERSION;
    diag["timestamp"] = ctx.timestamp;
    Json digests{{"data_sha256", ctx.data_sha256}, {"dag_sha256", ctx.dag_sha256}};
    if (!ctx.config_sha256.empty()) digests["config_sha256"] = ctx.config_sha256;
    if (!ctx.oracle_spec_sha256.empty()) digests["oracle_spec_sha256"] = ctx.oracle_spec_sha256;
    diag["digests"] = digests;
    if (result.bootstrap)
        diag["bootstrap"] = {{"replicates", result.config.bootstrap},
                             {"kept", result.bootstrap->kept},
                             {"dropped", result.bootstrap->dropped},
                             {"level", result.config.level}};
    else
        diag["bootstrap"] = nullptr;
    diag["identity_residuals"] = {{"te", res.te}, {"pct", res.pct}, {"scie", res.scie}, {"average", res.average}};
    Json flags = Json::array();
    for (const auto& m : result.mediators)
        flags.push_back({{"mediator", m.decomposition.mediator},
                         {"mediator_estimate_out_of_range", m.decomposition.mediator_out_of_range},
                         {"percentages_undefined", !m.decomposition.pct_cde.has_value()}});
    diag["flags"] = flags;
    diag["warnings"] = result.warnings;
    if (result.oracle)
        diag["oracle"] = {{"n_mc", result.oracle->n_mc}, {"seed", result.oracle->seed}};
    report["diagnostics"] = diag;
    return report;
}

std::string render_table(const AnalysisResult& result) {
    auto fmt = [](double v, bool pct) {
        if (!std::isfinite(v)) return std::string("undefined");
        char buf[64];
        std::snprintf(buf, sizeof buf, pct ? "%.1f" : "%.3f", v);
        return std::string(buf);
    };
    auto cell = [&](double v, std::optional<Interval> iv, bool pct) {
        std::string s = fmt(v, pct);
        if (iv) s += " [" + fmt(iv->lower, pct) + ", " + fmt(iv->upper, pct) + "]";
        return s;
    };
    const std::size_t K = result.mediators.size();
    const std::size_t shown = 7;  // pctCDE .. CIE1
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"effect"};
    for (const auto& m : result.mediators) {
        header.push_back(m.decomposition.mediator);
        if (m.oracle) header.push_back(m.decomposition.mediator + " (true)");
    }
    rows.push_back(header);
    for (std::size_t j = 0; j < shown; ++j) {
        const bool pct = j < 2;
        std::vector<std::string> row{std::string(effect_names[j])};
        for (std::size_t k = 0; k < K; ++k) {
            const auto& m = result.mediators[k];
            std::optional<Interval> iv;
            if (result.bootstrap) iv = result.bootstrap->intervals[k * effect_count + j];
            row.push_back(cell(effect_vector(m.decomposition)[j], iv, pct));
            if (m.oracle) row.push_back(fmt(oracle_vector(*m.oracle)[j], pct));
        }
        rows.push_back(row);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream os;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            os << r[c];
            if (c + 1 < r.size()) os << std::string(width[c] - r[c].size() + 2, ' ');
        }
        os << '\n';
    }
    os << "\naverage over mediators\n";
    const double avg[] = {result.average.cde, result.average.scie, result.average.te};
    const char* names[] = {"CDE", "sCIE", "TE"};
    for (std::size_t j = 0; j < 3; ++j) {
        std::optional<Interval> iv;
        if (result.bootstrap) iv = result.bootstrap->intervals[K * effect_count + j];
        os << names[j] << std::string(6 - std::string(names[j]).size(), ' ') << cell(avg[j], iv, false);
        if (result.oracle) {
            const double truth[] = {result.oracle->average_cde.value, result.oracle->average_scie.value,
                                    result.oracle->te.value};
            os << "  (true " << fmt(truth[j], false) << ")";
        }
        os << '\n';
    }
    return os.str();
}

namespace {

Json mc_json(const McEstimate& e) { return {{"value", e.value}, {"se", e.se}}; }

}  // namespace

Json true_effects_json(const TrueEffects& t) {
    return {{"k", t.k},
            {"mediator", t.mediator},
            {"TE", mc_json(t.te)},
            {"CDE", mc_json(t.cde)},
            {"CIE0", mc_json(t.cie0)},
            {"CIE1", mc_json(t.cie1)},
            {"sCIE", mc_json(t.scie)},
            {"M0", mc_json(t.m0)},
            {"M1", mc_json(t.m1)},
            {"Y00", mc_json(t.y[0][0])},
            {"Y01", mc_json(t.y[0][1])},
            {"Y10", mc_json(t.y[1][0])},
            {"Y11", mc_json(t.y[1][1])},
            {"gap", mc_json(t.gap)}};
}

Json oracle_json(const OracleResult& r) {
    Json mediators = Json::array();
    for (const auto& t : r.mediators) mediators.push_back(true_effects_json(t));
    return {{"n_mc", r.n_mc},
            {"seed", r.seed},
            {"TE", mc_json(r.te)},
            {"mediators", mediators},
            {"average", {{"CDE", mc_json(r.average_cde)}, {"sCIE", mc_json(r.average_scie)}, {"gap", mc_json(r.average_gap)}}}};
}

}  // namespace multimed
