#include "multimed/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "multimed/error.hpp"
#include "multimed/rng.hpp"

namespace multimed {

std::string_view to_string(Family f) noexcept {
    return f == Family::ridge_linear ? "ridge-linear" : "ridge-logistic";
}

std::string_view to_string(NuisanceRole r) noexcept {
    switch (r) {
        case NuisanceRole::mediator_outcome: return "f_M";
        case NuisanceRole::outcome: return "f_Y";
        case NuisanceRole::exposure_propensity: return "g_M";
        case NuisanceRole::mediator_propensity: return "g_Y";
    }
    return "?";
}

void ModelSpec::validate() const {
    if (penalty_grid.empty()) throw InputError("penalty grid is empty");
    for (std::size_t i = 0; i < penalty_grid.size(); ++i) {
        if (!(penalty_grid[i] > 0.0) || !std::isfinite(penalty_grid[i]))
            throw InputError("penalty grid values must be positive and finite");
        if (i > 0 && !(penalty_grid[i] > penalty_grid[i - 1]))
            throw InputError("penalty grid must be strictly ascending");
    }
}

std::vector<double> default_penalty_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

// --- design matrices ---------------------------------------------------------

namespace {

std::string resolve_name(const Dataset& data, std::size_t k, const std::string& name) {
    if (name == "@A") return data.exposure_name;
    if (name == "@M") {
        if (k >= data.mediator_count()) throw InputError("mediator index out of range");
        return data.mediator_names[k];
    }
    return name;
}

bool uses_mediator(NuisanceRole r) { return r == NuisanceRole::outcome; }
bool uses_exposure(NuisanceRole r) { return r != NuisanceRole::exposure_propensity; }

Eigen::VectorXd column_by_name(const Dataset& data, std::size_t k, const std::string& name,
                               const DesignOverride& ov) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    if (name == data.exposure_name)
        return ov.exposure ? Eigen::VectorXd::Constant(n, *ov.exposure) : data.exposure;
    if (k < data.mediator_count() && name == data.mediator_names[k])
        return ov.mediator ? Eigen::VectorXd::Constant(n, *ov.mediator)
                           : Eigen::VectorXd(data.mediators.col(static_cast<Eigen::Index>(k)));
    for (std::size_t j = 0; j < data.covariate_names.size(); ++j)
        if (data.covariate_names[j] == name) return data.covariates.col(static_cast<Eigen::Index>(j));
    throw InputError("unknown design column '" + name + "'");
}

struct DesignPlan {
    std::vector<std::string> main;
    std::vector<std::pair<std::string, std::string>> products;
};

DesignPlan plan_design(const Dataset& data, NuisanceRole role, std::size_t k, const FeatureMap& fm) {
    auto all_columns = data.column_names();
    std::vector<std::string> drop;
    for (const auto& d : fm.drop) {
        std::string name = resolve_name(data, k, d);
        if (std::find(all_columns.begin(), all_columns.end(), name) == all_columns.end())
            throw InputError("feature map drops unknown column '" + d + "'");
        drop.push_back(name);
    }
    DesignPlan plan;
    for (const auto& c : role_inputs(data, role, k))
        if (std::find(drop.begin(), drop.end(), c) == drop.end()) plan.main.push_back(c);
    for (const auto& [a, b] : fm.interactions) {
        std::string x = resolve_name(data, k, a), y = resolve_name(data, k, b);
        for (const auto& name : {x, y})
            if (std::find(all_columns.begin(), all_columns.end(), name) == all_columns.end())
                throw InputError("feature map interaction uses unknown column '" + name + "'");
        bool present = std::find(plan.main.begin(), plan.main.end(), x) != plan.main.end() &&
                       std::find(plan.main.begin(), plan.main.end(), y) != plan.main.end();
        if (present) plan.products.emplace_back(x, y);
    }
    return plan;
}

}  // namespace

std::vector<std::string> role_inputs(const Dataset& data, NuisanceRole role, std::size_t k) {
    std::vector<std::string> cols = data.covariate_names;
    if (uses_exposure(role)) cols.push_back(data.exposure_name);
    if (uses_mediator(role)) {
        if (k >= data.mediator_count()) throw InputError("mediator index out of range");
        cols.push_back(data.mediator_names[k]);
    }
    return cols;
}

std::vector<std::string> design_columns(const Dataset& data, NuisanceRole role, std::size_t k,
                                        const FeatureMap& features) {
    DesignPlan plan = plan_design(data, role, k, features);
    std::vector<std::string> out = plan.main;
    for (const auto& [a, b] : plan.products) out.push_back(a + "*" + b);
    return out;
}

Eigen::MatrixXd build_design(const Dataset& data, NuisanceRole role, std::size_t k,
                             const FeatureMap& features, const DesignOverride& ov) {
    DesignPlan plan = plan_design(data, role, k, features);
    const auto n = static_cast<Eigen::Index>(data.rows());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(plan.main.size() + plan.products.size()));
    Eigen::Index j = 0;
    for (const auto& c : plan.main) X.col(j++) = column_by_name(data, k, c, ov);
    for (const auto& [a, b] : plan.products)
        X.col(j++) = column_by_name(data, k, a, ov).cwiseProduct(column_by_name(data, k, b, ov));
    return X;
}

Eigen::VectorXd role_target(const Dataset& data, NuisanceRole role, std::size_t k) {
    switch (role) {
        case NuisanceRole::exposure_propensity: return data.exposure;
        case NuisanceRole::outcome: return data.outcome;
        case NuisanceRole::mediator_outcome:
        case NuisanceRole::mediator_propensity:
            if (k >= data.mediator_count()) throw InputError("mediator index out of range");
            return data.mediators.col(static_cast<Eigen::Index>(k));
    }
    return {};
}

// --- GLM fitting -------------------------------------------------------------

namespace {

constexpr double prob_floor = std::numeric_limits<double>::epsilon();

double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double sigmoid(double eta) {
    double p = eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    return std::clamp(p, prob_floor, 1.0 - prob_floor);
}

// Intercept column followed by standardized features.
Eigen::MatrixXd augmented(const FittedGlm& m, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
    Z.col(0).setOnes();
    Z.rightCols(X.cols()) = (X.rowwise() - m.center.transpose()).array().rowwise() / m.scale.transpose().array();
    return Z;
}

double logistic_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                          double penalty) {
    Eigen::VectorXd eta = Z * beta;
    double obj = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) obj += softplus(eta[i]) - y[i] * eta[i];
    return obj + 0.5 * penalty * beta.tail(beta.size() - 1).squaredNorm();
}

}  // namespace

Eigen::VectorXd FittedGlm::linear_predictor(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Xs = (X.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
    return (Xs * coefficients).array() + intercept;
}

Eigen::VectorXd FittedGlm::predict(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd eta = linear_predictor(X);
    if (family == Family::ridge_logistic) eta = eta.unaryExpr([](double e) { return sigmoid(e); });
    return eta;
}

FittedGlm fit_regularized_glm(Family family, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double penalty, bool standardize) {
    if (X.rows() != y.size()) throw InputError("design and response lengths differ");
    if (X.rows() < 2) throw InputError("need at least 2 rows to fit a model");
    if (!(penalty > 0.0) || !std::isfinite(penalty)) throw InputError("penalty C must be positive");
    if (!X.allFinite() || !y.allFinite()) throw InputError("non-finite values in model inputs");
    if (family == Family::ridge_logistic)
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0) throw InputError("logistic response must be 0/1");

    const Eigen::Index p = X.cols();
    FittedGlm m;
    m.family = family;
    m.penalty = penalty;
    m.center = Eigen::VectorXd::Zero(p);
    m.scale = Eigen::VectorXd::Ones(p);
    if (standardize) {
        m.center = X.colwise().mean();
        for (Eigen::Index j = 0; j < p; ++j) {
            double sd = std::sqrt((X.col(j).array() - m.center[j]).square().mean());
            if (sd > 1e-12) m.scale[j] = sd;
        }
    }
    const Eigen::MatrixXd Z = augmented(m, X);
    Eigen::VectorXd pen = Eigen::VectorXd::Constant(p + 1, penalty);
    pen[0] = 0.0;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    if (family == Family::ridge_linear) {
        Eigen::MatrixXd H = Z.transpose() * Z;
        H.diagonal() += pen;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success) throw std::logic_error("ridge system is singular");
        beta = ldlt.solve(Z.transpose() * y);
        m.iterations = 1;
    } else {
        double obj = logistic_objective(Z, y, beta, penalty);
        m.objective_trace.push_back(obj);
        m.converged = false;
        for (std::size_t it = 0; it < irls_max_iterations; ++it) {
            Eigen::VectorXd eta = Z * beta;
            Eigen::VectorXd prob = eta.unaryExpr([](double e) { return sigmoid(e); });
            Eigen::VectorXd grad = Z.transpose() * (prob - y) + pen.cwiseProduct(beta);
            m.iterations = it;
            if (grad.norm() <= irls_tolerance) {
                m.converged = true;
                break;
            }
            Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
            Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
            H.diagonal() += pen;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            Eigen::VectorXd step = ldlt.solve(grad);
            double t = 1.0;
            Eigen::VectorXd next = beta - step;
            double next_obj = logistic_objective(Z, y, next, penalty);
            for (int halvings = 0; next_obj > obj + 1e-12 * std::abs(obj) && halvings < 40; ++halvings) {
                t *= 0.5;
                next = beta - t * step;
                next_obj = logistic_objective(Z, y, next, penalty);
            }
            beta = next;
            obj = std::min(obj, next_obj);
            m.objective_trace.push_back(next_obj);
        }
        if (!m.converged) {
            Eigen::VectorXd prob = (Z * beta).unaryExpr([](double e) { return sigmoid(e); });
            m.converged = (Z.transpose() * (prob - y) + pen.cwiseProduct(beta)).norm() <= irls_tolerance;
            m.iterations = irls_max_iterations;
        }
    }
    m.intercept = beta[0];
    m.coefficients = beta.tail(p);
    return m;
}

Eigen::VectorXd penalized_gradient(const FittedGlm& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::MatrixXd Z = augmented(m, X);
    Eigen::VectorXd beta(m.coefficients.size() + 1);
    beta << m.intercept, m.coefficients;
    Eigen::VectorXd fitted = Z * beta;
    if (m.family == Family::ridge_logistic) fitted = fitted.unaryExpr([](double e) { return sigmoid(e); });
    Eigen::VectorXd pen = Eigen::VectorXd::Constant(beta.size(), m.penalty);
    pen[0] = 0.0;
    return Z.transpose() * (fitted - y) + pen.cwiseProduct(beta);
}

double validation_loss(Family family, const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
    if (family == Family::ridge_linear) return (y - pred).squaredNorm() / static_cast<double>(y.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double p = std::clamp(pred[i], 1e-12, 1.0 - 1e-12);
        loss -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return loss / static_cast<double>(y.size());
}

// --- folds and cross-validation ---------------------------------------------------

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed,
                                      const Eigen::VectorXd* strata) {
    if (folds < 1) throw InputError("fold count must be positive");
    std::vector<std::size_t> out(n, 0);
    if (!strata) {
        rng::Stream s(rng::derive(seed, {rng::tag::folds}));
        auto perm = s.permutation(n);
        for (std::size_t pos = 0; pos < n; ++pos) out[perm[pos]] = pos % folds;
        return out;
    }
    std::size_t next = 0;
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (((*strata)[static_cast<Eigen::Index>(i)] != 0.0) == (cls == 1)) members.push_back(i);
        rng::Stream s(rng::derive(seed, {rng::tag::folds, static_cast<std::uint64_t>(cls)}));
        auto perm = s.permutation(members.size());
        for (std::size_t pos : perm) out[members[pos]] = next++ % folds;
    }
    return out;
}

namespace {

struct Split {
    std::vector<std::size_t> train, test;
};

Split split_of(const std::vector<std::size_t>& fold_of_row, std::size_t f) {
    Split s;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i) (fold_of_row[i] == f ? s.test : s.train).push_back(i);
    return s;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& y, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(idx[i])];
    return out;
}

// Both classes present in a logistic training set, otherwise a named empty stratum.
void require_classes(const Eigen::VectorXd& y, const std::string& target, const std::string& where) {
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < y.size(); ++i) (y[i] != 0.0 ? has1 : has0) = true;
    if (!has0) throw EmptyStratumError(target + "=0 in " + where);
    if (!has1) throw EmptyStratumError(target + "=1 in " + where);
}

void check_inputs(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::size_t folds) {
    spec.validate();
    if (X.rows() != y.size()) throw InputError("design and response lengths differ");
    if (folds < 2) throw InputError("fold counts must be >= 2");
    if (static_cast<std::size_t>(y.size()) < folds)
        throw AnalysisError("fewer rows (" + std::to_string(y.size()) + ") than folds (" + std::to_string(folds) + ")");
}

double mode_penalty(const std::vector<FittedNuisance>& models) {
    std::map<double, int> count;
    for (const auto& m : models) ++count[m.model.penalty];
    double best = 0.0;
    int best_count = -1;
    for (const auto& [c, k] : count)  // ascending C, so ties keep the smaller
        if (k > best_count) best = c, best_count = k;
    return best;
}

}  // namespace

Eigen::VectorXd CrossFit::predict(const Eigen::MatrixXd& X) const {
    if (static_cast<std::size_t>(X.rows()) != fold_of_row.size())
        throw InputError("prediction rows do not match the cross-fitted data");
    Eigen::VectorXd out(X.rows());
    for (std::size_t f = 0; f < models.size(); ++f) {
        Split s = split_of(fold_of_row, f);
        if (s.test.empty()) continue;
        Eigen::VectorXd p = models[f].model.predict(rows_of(X, s.test));
        for (std::size_t i = 0; i < s.test.size(); ++i) out[static_cast<Eigen::Index>(s.test[i])] = p[static_cast<Eigen::Index>(i)];
    }
    return out;
}

CrossFit nested_cv_select(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const CvOptions& options, const std::string& target_name) {
    check_inputs(spec, X, y, options.outer_folds);
    if (options.inner_folds < 2) throw InputError("fold counts must be >= 2");
    const bool binary = spec.family == Family::ridge_logistic;
    if (binary) require_classes(y, target_name, "the data");

    CrossFit cf;
    cf.fold_of_row = assign_folds(static_cast<std::size_t>(y.size()), options.outer_folds,
                                  rng::derive(options.seed, {1}), binary ? &y : nullptr);
    for (std::size_t o = 0; o < options.outer_folds; ++o) {
        Split outer = split_of(cf.fold_of_row, o);
        if (outer.test.empty()) throw AnalysisError("outer fold " + std::to_string(o + 1) + " is empty");
        Eigen::MatrixXd Xtr = rows_of(X, outer.train);
        Eigen::VectorXd ytr = rows_of(y, outer.train);
        const std::string where = "outer fold " + std::to_string(o + 1);
        if (binary) require_classes(ytr, target_name, "training data of " + where);
        if (static_cast<std::size_t>(ytr.size()) < options.inner_folds)
            throw AnalysisError("too few rows for inner folds in " + where);

        auto inner_folds = assign_folds(static_cast<std::size_t>(ytr.size()), options.inner_folds,
                                        rng::derive(options.seed, {2, o}), binary ? &ytr : nullptr);
        std::vector<double> losses(spec.penalty_grid.size(), 0.0);
        for (std::size_t j = 0; j < options.inner_folds; ++j) {
            Split inner = split_of(inner_folds, j);
            Eigen::MatrixXd Xi = rows_of(Xtr, inner.train);
            Eigen::VectorXd yi = rows_of(ytr, inner.train);
            if (binary)
                require_classes(yi, target_name, "inner fold " + std::to_string(j + 1) + " of " + where);
            Eigen::MatrixXd Xv = rows_of(Xtr, inner.test);
            Eigen::VectorXd yv = rows_of(ytr, inner.test);
            for (std::size_t c = 0; c < spec.penalty_grid.size(); ++c) {
                FittedGlm fit = fit_regularized_glm(spec.family, Xi, yi, spec.penalty_grid[c], spec.standardize);
                losses[c] += validation_loss(spec.family, yv, fit.predict(Xv)) / static_cast<double>(options.inner_folds);
            }
        }
        std::size_t best = static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
        FittedNuisance fn;
        fn.spec = spec;
        fn.model = fit_regularized_glm(spec.family, Xtr, ytr, spec.penalty_grid[best], spec.standardize);
        fn.validation_losses = losses;
        cf.models.push_back(std::move(fn));
    }
    cf.chosen_penalty = mode_penalty(cf.models);
    return cf;
}

CrossFit cross_fit(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double penalty,
                   std::size_t folds, std::uint64_t seed, const std::string& target_name) {
    check_inputs(spec, X, y, folds);
    const bool binary = spec.family == Family::ridge_logistic;
    CrossFit cf;
    cf.fold_of_row = assign_folds(static_cast<std::size_t>(y.size()), folds, rng::derive(seed, {1}),
                                  binary ? &y : nullptr);
    for (std::size_t f = 0; f < folds; ++f) {
        Split s = split_of(cf.fold_of_row, f);
        if (s.test.empty()) throw AnalysisError("fold " + std::to_string(f + 1) + " is empty");
        Eigen::VectorXd ytr = rows_of(y, s.train);
        if (binary) require_classes(ytr, target_name, "training data of fold " + std::to_string(f + 1));
        FittedNuisance fn;
        fn.spec = spec;
        fn.model = fit_regularized_glm(spec.family, rows_of(X, s.train), ytr, penalty, spec.standardize);
        cf.models.push_back(std::move(fn));
    }
    cf.chosen_penalty = penalty;
    return cf;
}

// --- minmax selection ----------------------------------------------------------

Selection minmax_select_models(const std::vector<CandidatePair>& candidates, const TargetEstimator& estimate) {
    if (candidates.size() < 2) throw InputError("model selection needs at least 2 candidate pairs");
    std::vector<ModelSpec> F, G;
    auto intern = [](std::vector<ModelSpec>& set, const ModelSpec& s) {
        auto it = std::find(set.begin(), set.end(), s);
        if (it != set.end()) return static_cast<std::size_t>(it - set.begin());
        set.push_back(s);
        return set.size() - 1;
    };
    std::vector<std::pair<std::size_t, std::size_t>> pair_idx;
    for (const auto& c : candidates) pair_idx.emplace_back(intern(F, c.outcome), intern(G, c.propensity));

    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> memo;
    auto psi = [&](std::size_t f, std::size_t g) -> const std::vector<double>& {
        auto it = memo.find({f, g});
        if (it == memo.end()) it = memo.emplace(std::make_pair(f, g), estimate(F[f], G[g])).first;
        return it->second;
    };
    auto distance = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) throw std::logic_error("target functional changed dimension");
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
        return d;
    };

    Selection sel;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        auto [f, g] = pair_idx[c];
        const std::vector<double> base = psi(f, g);
        double risk = 0.0;
        for (std::size_t g2 = 0; g2 < G.size(); ++g2) risk = std::max(risk, distance(psi(f, g2), base));
        for (std::size_t f2 = 0; f2 < F.size(); ++f2) risk = std::max(risk, distance(psi(f2, g), base));
        sel.table.push_back({c, candidates[c].name, risk, base});
        if (risk < sel.table[sel.chosen].pseudo_risk) sel.chosen = c;
    }
    return sel;
}

}  // namespace multimed
