#include <doctest.h>

#include <cmath>
#include <set>

#include "multimed/error.hpp"
#include "multimed/nuisance.hpp"
#include "multimed/rng.hpp"

using namespace multimed;

namespace {

Eigen::MatrixXd random_matrix(rng::Stream& s, Eigen::Index n, Eigen::Index p) {
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = s.normal();
    return X;
}

Eigen::VectorXd logistic_draws(rng::Stream& s, const Eigen::VectorXd& eta) {
    Eigen::VectorXd y(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) y[i] = s.uniform() < 1.0 / (1.0 + std::exp(-eta[i])) ? 1.0 : 0.0;
    return y;
}

ModelSpec spec_of(Family f) {
    ModelSpec s;
    s.family = f;
    s.penalty_grid = default_penalty_grid();
    return s;
}

Dataset small_dataset() {
    Dataset d;
    d.covariates.resize(4, 2);
    d.covariates << 1, 2, 3, 4, 5, 6, 7, 8;
    d.exposure = Eigen::Vector4d(1, 0, 1, 0);
    d.mediators.resize(4, 2);
    d.mediators << 1, 0, 0, 1, 1, 1, 0, 0;
    d.outcome = Eigen::Vector4d(0.5, 1.5, 2.5, 3.5);
    d.covariate_names = {"L1", "L2"};
    d.exposure_name = "A";
    d.mediator_names = {"M1", "M2"};
    d.outcome_name = "Y";
    return d;
}

}  // namespace

TEST_SUITE("nuisance") {

TEST_CASE("ridge-linear matches the closed form on a hand dataset") {
    // Five points, no standardization: the intercept is unpenalized, so the
    // oracle solves the augmented system [n, 1'X; X'1, X'X + C I] directly.
    Eigen::MatrixXd X(5, 2);
    X << 1, 0, 2, 1, 3, 1, 4, 3, 5, 2;
    Eigen::VectorXd y(5);
    y << 1.0, 2.5, 2.0, 4.5, 5.0;
    const double C = 1.0;
    Eigen::MatrixXd Z(5, 3);
    Z << Eigen::VectorXd::Ones(5), X;
    Eigen::MatrixXd H = Z.transpose() * Z;
    H(1, 1) += C;
    H(2, 2) += C;
    Eigen::VectorXd beta = H.inverse() * (Z.transpose() * y);

    FittedGlm m = fit_regularized_glm(Family::ridge_linear, X, y, C, false);
    CHECK(m.intercept == doctest::Approx(beta[0]).epsilon(1e-12));
    CHECK(m.coefficients[0] == doctest::Approx(beta[1]).epsilon(1e-12));
    CHECK(m.coefficients[1] == doctest::Approx(beta[2]).epsilon(1e-12));
    CHECK(penalized_gradient(m, X, y).norm() < 1e-10);
}

TEST_CASE("ridge-linear recovers noiseless coefficients at the smallest penalty") {
    rng::Stream s(11);
    Eigen::MatrixXd X = random_matrix(s, 200, 3);
    Eigen::Vector3d truth(1.5, -2.0, 0.25);
    Eigen::VectorXd y = (X * truth).array() + 0.7;
    FittedGlm m = fit_regularized_glm(Family::ridge_linear, X, y, 1e-3, true);
    Eigen::VectorXd raw = m.coefficients.cwiseQuotient(m.scale);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(raw[j] - truth[j]) < 1e-4);
    Eigen::VectorXd pred = m.predict(X);
    CHECK((pred - y).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("ridge-linear satisfies its normal equations") {
    rng::Stream s(12);
    Eigen::MatrixXd X = random_matrix(s, 300, 4);
    Eigen::VectorXd y = X.rowwise().sum() + random_matrix(s, 300, 1);
    for (double C : default_penalty_grid()) {
        FittedGlm m = fit_regularized_glm(Family::ridge_linear, X, y, C, true);
        Eigen::VectorXd g = penalized_gradient(m, X, y);
        CHECK(g.norm() <= 1e-8 * std::max(1.0, y.norm() * std::sqrt(300.0)));
    }
}

TEST_CASE("ridge-logistic converges with a small gradient and a non-increasing objective") {
    rng::Stream s(13);
    Eigen::MatrixXd X = random_matrix(s, 500, 3);
    Eigen::VectorXd y = logistic_draws(s, X * Eigen::Vector3d(1.0, -1.0, 0.5));
    for (double C : default_penalty_grid()) {
        FittedGlm m = fit_regularized_glm(Family::ridge_logistic, X, y, C, true);
        CHECK(m.converged);
        CHECK(penalized_gradient(m, X, y).norm() <= 1e-6);
        for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
            CHECK(m.objective_trace[i] <= m.objective_trace[i - 1] * (1.0 + 1e-12));
        Eigen::VectorXd p = m.predict(X);
        CHECK(p.minCoeff() > 0.0);
        CHECK(p.maxCoeff() < 1.0);
    }
}

TEST_CASE("ridge-logistic stays finite on separated data") {
    Eigen::MatrixXd X(6, 1);
    X << -3, -2, -1, 1, 2, 3;
    Eigen::VectorXd y(6);
    y << 0, 0, 0, 1, 1, 1;
    FittedGlm m = fit_regularized_glm(Family::ridge_logistic, X, y, 1.0, true);
    CHECK(std::isfinite(m.coefficients[0]));
    CHECK(m.converged);
    Eigen::VectorXd p = m.predict(X);
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.maxCoeff() < 1.0);
}

TEST_CASE("property: a larger penalty never grows the coefficient norm") {
    rng::Stream s(14);
    for (Family f : {Family::ridge_linear, Family::ridge_logistic}) {
        Eigen::MatrixXd X = random_matrix(s, 250, 4);
        Eigen::VectorXd eta = X * Eigen::Vector4d(0.8, -0.5, 0.3, 0.0);
        Eigen::VectorXd y = f == Family::ridge_linear ? Eigen::VectorXd(eta + random_matrix(s, 250, 1))
                                                      : logistic_draws(s, eta);
        double previous = INFINITY;
        for (double C : default_penalty_grid()) {
            double norm = fit_regularized_glm(f, X, y, C, true).coefficients.norm();
            CHECK(norm <= previous + 1e-12);
            previous = norm;
        }
    }
}

TEST_CASE("fit input errors") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    CHECK_THROWS_AS(fit_regularized_glm(Family::ridge_logistic, X, Eigen::Vector3d(0, 2, 1), 1.0), InputError);
    CHECK_THROWS_AS(fit_regularized_glm(Family::ridge_linear, X, Eigen::Vector3d(0, NAN, 1), 1.0), InputError);
    CHECK_THROWS_AS(fit_regularized_glm(Family::ridge_linear, X, Eigen::Vector3d(0, 1, 1), 0.0), InputError);
    CHECK_THROWS_AS(fit_regularized_glm(Family::ridge_linear, X.topRows(1), Eigen::VectorXd::Ones(1), 1.0), InputError);
    ModelSpec bad = spec_of(Family::ridge_linear);
    bad.penalty_grid = {1.0, 0.1};
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad.penalty_grid = {};
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("design matrices follow the role and feature map") {
    Dataset d = small_dataset();
    CHECK(role_inputs(d, NuisanceRole::exposure_propensity, 0) == std::vector<std::string>{"L1", "L2"});
    CHECK(role_inputs(d, NuisanceRole::mediator_outcome, 1) == std::vector<std::string>{"L1", "L2", "A"});
    CHECK(role_inputs(d, NuisanceRole::outcome, 1) == std::vector<std::string>{"L1", "L2", "A", "M2"});
    FeatureMap fm;
    fm.drop = {"L2"};
    fm.interactions = {{"@A", "@M"}, {"L2", "A"}};
    CHECK(design_columns(d, NuisanceRole::outcome, 0, fm) == std::vector<std::string>{"L1", "A", "M1", "A*M1"});
    Eigen::MatrixXd X = build_design(d, NuisanceRole::outcome, 0, fm, {1.0, 0.0});
    CHECK(X.cols() == 4);
    CHECK(X.col(1).isConstant(1.0));
    CHECK(X.col(2).isConstant(0.0));
    CHECK(X.col(3).isConstant(0.0));
    CHECK(X(2, 0) == 5.0);
    fm.drop = {"Nope"};
    CHECK_THROWS_AS(build_design(d, NuisanceRole::outcome, 0, fm), InputError);
    CHECK(role_target(d, NuisanceRole::mediator_propensity, 1) == d.mediators.col(1));
}

TEST_CASE("folds partition the rows and stratify by class") {
    Eigen::VectorXd y(103);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = i % 4 == 0 ? 1.0 : 0.0;
    auto folds = assign_folds(103, 5, 99, &y);
    std::vector<int> size(5, 0), ones(5, 0);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        REQUIRE(folds[i] < 5);
        ++size[folds[i]];
        ones[folds[i]] += static_cast<int>(y[i]);
    }
    for (int f = 0; f < 5; ++f) {
        CHECK(std::abs(size[f] - 103 / 5) <= 1);
        CHECK(std::abs(ones[f] - 26 / 5) <= 1);
    }
    CHECK(assign_folds(103, 5, 99, &y) == folds);
    CHECK(assign_folds(103, 5, 100, &y) != folds);
}

TEST_CASE("nested cross-validation gives one out-of-fold prediction per row") {
    rng::Stream s(15);
    Eigen::MatrixXd X = random_matrix(s, 1000, 2);
    Eigen::VectorXd y = logistic_draws(s, X * Eigen::Vector2d(1.0, -0.5));
    CrossFit cf = nested_cv_select(spec_of(Family::ridge_logistic), X, y, {5, 3, 42});
    REQUIRE(cf.models.size() == 5);
    REQUIRE(cf.fold_of_row.size() == 1000);
    std::vector<int> count(5, 0);
    for (auto f : cf.fold_of_row) ++count[f];
    for (int c : count) CHECK(c == 200);
    for (const auto& m : cf.models) CHECK(m.validation_losses.size() == 7);
    const auto grid = default_penalty_grid();
    CHECK(std::find(grid.begin(), grid.end(), cf.chosen_penalty) != grid.end());

    // Each row is predicted by the model of its own fold.
    Eigen::VectorXd p = cf.predict(X);
    for (Eigen::Index i = 0; i < 1000; i += 97) {
        const auto& model = cf.models[cf.fold_of_row[static_cast<std::size_t>(i)]].model;
        CHECK(p[i] == doctest::Approx(model.predict(X.row(i))[0]).epsilon(1e-15));
    }

    CrossFit again = nested_cv_select(spec_of(Family::ridge_logistic), X, y, {5, 3, 42});
    CHECK(again.fold_of_row == cf.fold_of_row);
    CHECK(again.chosen_penalty == cf.chosen_penalty);
    CHECK(again.predict(X) == p);
}

TEST_CASE("out-of-fold predictions do not depend on the row's own label") {
    // Leakage check: changing the labels of one fold leaves that fold's
    // predictions unchanged with the penalty fixed.
    rng::Stream s(16);
    Eigen::MatrixXd X = random_matrix(s, 200, 2);
    Eigen::VectorXd y = X.col(0) + random_matrix(s, 200, 1);
    ModelSpec spec = spec_of(Family::ridge_linear);
    CrossFit a = cross_fit(spec, X, y, 1.0, 5, 7);
    Eigen::VectorXd y2 = y;
    for (std::size_t i = 0; i < 200; ++i)
        if (a.fold_of_row[i] == 2) y2[static_cast<Eigen::Index>(i)] += 100.0;
    CrossFit b = cross_fit(spec, X, y2, 1.0, 5, 7);
    REQUIRE(a.fold_of_row == b.fold_of_row);
    Eigen::VectorXd pa = a.predict(X), pb = b.predict(X);
    for (std::size_t i = 0; i < 200; ++i)
        if (a.fold_of_row[i] == 2) CHECK(pa[static_cast<Eigen::Index>(i)] == pb[static_cast<Eigen::Index>(i)]);
}

TEST_CASE("penalty chosen by nested CV is usually interior on noisy data") {
    int interior = 0;
    const auto grid = default_penalty_grid();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        rng::Stream s(rng::derive(seed, {77}));
        Eigen::MatrixXd X = random_matrix(s, 300, 8);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(8);
        beta[0] = 0.3;
        beta[1] = -0.2;
        Eigen::VectorXd y = X * beta + random_matrix(s, 300, 1);
        CrossFit cf = nested_cv_select(spec_of(Family::ridge_linear), X, y, {5, 3, seed});
        if (cf.chosen_penalty != grid.front() && cf.chosen_penalty != grid.back()) ++interior;
    }
    CHECK(interior >= 8);
}

TEST_CASE("a training split without one class is a named empty stratum") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(20, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(20);
    y[3] = 1.0;
    CHECK_THROWS_AS(nested_cv_select(spec_of(Family::ridge_logistic), X, y, {5, 3, 1}, "M1"), EmptyStratumError);
    try {
        nested_cv_select(spec_of(Family::ridge_logistic), X, y, {5, 3, 1}, "M1");
    } catch (const EmptyStratumError& e) {
        CHECK(e.stratum().find("M1=1") != std::string::npos);
    }
}

TEST_CASE("minmax selection") {
    ModelSpec f1 = spec_of(Family::ridge_linear), f2 = f1;
    f2.features.drop = {"L1"};
    ModelSpec g1 = spec_of(Family::ridge_logistic), g2 = g1;
    g2.features.drop = {"L1"};
    // psi(f, g): the good pair is stable under either perturbation.
    auto psi = [&](const ModelSpec& f, const ModelSpec& g) {
        double v = 1.0;
        if (f == f2) v += 0.5;
        if (g == g2) v += 0.2;
        if (f == f2 && g == g2) v += 0.3;
        return std::vector<double>{v, 2.0 * v};
    };
    std::vector<CandidatePair> c{{"bad", f2, g2}, {"good", f1, g1}, {"mixed", f1, g2}};
    Selection sel = minmax_select_models(c, psi);
    REQUIRE(sel.table.size() == 3);
    for (const auto& row : sel.table) CHECK(sel.table[sel.chosen].pseudo_risk <= row.pseudo_risk);
    // good: g -> g2 moves psi by 0.2 (x2 = 0.4), f -> f2 by 0.5 (x2 = 1.0).
    CHECK(sel.table[1].pseudo_risk == doctest::Approx(1.0));
    // bad: to g1 moves by 0.5 (x2 = 1.0); to f1 by 0.8 (x2 = 1.6).
    CHECK(sel.table[0].pseudo_risk == doctest::Approx(1.6));

    std::vector<CandidatePair> dup{{"one", f1, g1}, {"two", f1, g1}};
    Selection d = minmax_select_models(dup, psi);
    CHECK(d.chosen == 0);
    CHECK(d.table[0].pseudo_risk == 0.0);
    CHECK(d.table[1].pseudo_risk == 0.0);
    CHECK_THROWS_AS(minmax_select_models({c.front()}, psi), InputError);

    // Each distinct (f, g) is evaluated once.
    int calls = 0;
    minmax_select_models(c, [&](const ModelSpec& f, const ModelSpec& g) {
        ++calls;
        return psi(f, g);
    });
    CHECK(calls == 4);
}

}  // TEST_SUITE
