#include <doctest.h>

#include <cmath>

#include "multimed/error.hpp"
#include "multimed/estimator.hpp"
#include "multimed/rng.hpp"

using namespace multimed;

namespace {

Dataset hand_dataset() {
    Dataset d;
    d.covariates = Eigen::MatrixXd::Zero(4, 1);
    d.exposure = Eigen::Vector4d(1, 1, 0, 0);
    d.mediators.resize(4, 1);
    d.mediators << 1, 0, 1, 0;
    d.outcome = Eigen::Vector4d(2, 0, 1, 1);
    d.covariate_names = {"L"};
    d.exposure_name = "A";
    d.mediator_names = {"M"};
    d.outcome_name = "Y";
    return d;
}

Eigen::VectorXd constant(double v, Eigen::Index n = 4) { return Eigen::VectorXd::Constant(n, v); }

Dataset random_dataset(std::uint64_t seed, Eigen::Index n) {
    rng::Stream s(seed);
    Dataset d;
    d.covariates.resize(n, 1);
    d.exposure.resize(n);
    d.mediators.resize(n, 1);
    d.outcome.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.covariates(i, 0) = s.normal();
        d.exposure[i] = s.uniform() < 0.5 ? 1.0 : 0.0;
        d.mediators(i, 0) = s.uniform() < 0.4 ? 1.0 : 0.0;
        d.outcome[i] = d.exposure[i] + d.mediators(i, 0) + s.normal();
    }
    d.covariate_names = {"L"};
    d.exposure_name = "A";
    d.mediator_names = {"M"};
    d.outcome_name = "Y";
    return d;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("doubly robust mediator mean on the hand dataset") {
    Dataset d = hand_dataset();
    // 0.5 + (1/4) [ (1 - 0.5)/0.5 + (0 - 0.5)/0.5 ] = 0.5
    PotentialEstimate e = dr_estimate_m(d, 0, 1, constant(0.5), constant(0.5));
    CHECK(e.value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(e.stratum_count == 2);
    CHECK(e.kind == PotentialEstimate::Kind::mediator);
    // a = 0 with P(A=1|L) = 0.8: rows 3, 4 weigh 1/0.2.
    // 0.5 + (1/4) [ (1 - 0.5)/0.2 + (0 - 0.5)/0.2 ] = 0.5
    CHECK(dr_estimate_m(d, 0, 0, constant(0.5), constant(0.8)).value == doctest::Approx(0.5));
    // f = 0.25: 0.25 + (1/4) [ 0.75/0.5 - 0.25/0.5 ] = 0.5
    CHECK(dr_estimate_m(d, 0, 1, constant(0.25), constant(0.5)).value == doctest::Approx(0.5));
}

TEST_CASE("doubly robust outcome mean on the hand dataset") {
    Dataset d = hand_dataset();
    Eigen::VectorXd f = constant(1.0), ga = constant(0.5), gm = constant(0.25);
    // Stratum A=1, M=1 is row 1 (Y = 2), weight 1 / (0.25 * 0.5) = 8.
    CHECK(dr_estimate_y(d, 0, 1, 1, f, ga, gm).value == doctest::Approx((4.0 + 8.0) / 4.0));
    // Stratum A=1, M=0 is row 2 (Y = 0), weight 1 / (0.75 * 0.5).
    CHECK(dr_estimate_y(d, 0, 1, 0, f, ga, gm).value == doctest::Approx((4.0 - 1.0 / 0.375) / 4.0));
    // Stratum A=0, M=0 is row 4 (Y = 1): zero correction.
    CHECK(dr_estimate_y(d, 0, 0, 0, f, ga, gm).value == doctest::Approx(1.0));
    // Stratum A=0, M=1 is row 3 (Y = 1): zero correction.
    CHECK(dr_estimate_y(d, 0, 0, 1, f, ga, gm).value == doctest::Approx(1.0));
}

TEST_CASE("propensities are clipped factor-wise") {
    Dataset d = hand_dataset();
    // P(M=1) = 1e-4 clips to 0.01; P(A=1) = 0.999 clips to 0.99.
    double v = dr_estimate_y(d, 0, 1, 1, constant(0.0), constant(0.999), constant(1e-4)).value;
    CHECK(v == doctest::Approx(2.0 / (0.01 * 0.99) / 4.0));
    CHECK(clip_propensity(-1.0) == propensity_lower);
    CHECK(clip_propensity(2.0) == propensity_upper);
}

TEST_CASE("perfect outcome model makes the correction vanish") {
    Dataset d = random_dataset(5, 200);
    Eigen::VectorXd f = d.mediators.col(0);
    rng::Stream s(6);
    Eigen::VectorXd g(200);
    for (auto& x : g) x = 0.05 + 0.9 * s.uniform();
    CHECK(dr_estimate_m(d, 0, 1, f, g).value == doctest::Approx(f.mean()).epsilon(1e-13));
}

TEST_CASE("empty strata and misaligned predictions are errors") {
    Dataset d = hand_dataset();
    d.mediators << 1, 1, 1, 0;
    CHECK_THROWS_AS(dr_estimate_y(d, 0, 1, 0, constant(0), constant(0.5), constant(0.5)), EmptyStratumError);
    try {
        dr_estimate_y(d, 0, 1, 0, constant(0), constant(0.5), constant(0.5));
    } catch (const EmptyStratumError& e) {
        CHECK(e.stratum() == "A=1, M=0");
    }
    d.exposure.setOnes();
    CHECK_THROWS_AS(dr_estimate_m(d, 0, 0, constant(0), constant(0.5)), EmptyStratumError);
    CHECK_THROWS_AS(dr_estimate_m(d, 0, 1, constant(0, 3), constant(0.5)), InputError);
}

TEST_CASE("g-formula averages the predictions") {
    CHECK(gformula_estimate(PotentialEstimate::Kind::outcome, 0, 1, 0, constant(3.25)).value == 3.25);
    // Stratified means over a discrete covariate, standardized to its empirical distribution.
    Dataset d = random_dataset(7, 400);
    for (Eigen::Index i = 0; i < 400; ++i) d.covariates(i, 0) = d.covariates(i, 0) > 0 ? 1.0 : 0.0;
    double sum[2] = {0, 0}, count[2] = {0, 0}, share[2] = {0, 0};
    for (Eigen::Index i = 0; i < 400; ++i) {
        int l = static_cast<int>(d.covariates(i, 0));
        share[l] += 1.0 / 400.0;
        if (d.exposure[i] == 1 && d.mediators(i, 0) == 0) sum[l] += d.outcome[i], count[l] += 1;
    }
    Eigen::VectorXd f(400);
    for (Eigen::Index i = 0; i < 400; ++i) {
        int l = static_cast<int>(d.covariates(i, 0));
        f[i] = sum[l] / count[l];
    }
    double expected = share[0] * sum[0] / count[0] + share[1] * sum[1] / count[1];
    CHECK(gformula_estimate(PotentialEstimate::Kind::outcome, 0, 1, 0, f).value == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("property: assembled identities hold to machine precision") {
    rng::Stream s(8);
    for (int trial = 0; trial < 2000; ++trial) {
        double m[2] = {s.uniform(), s.uniform()};
        double y[2][2];
        for (auto& row : y)
            for (auto& v : row) v = 10.0 * s.normal();
        Decomposition d = assemble_decomposition(0, "M", m, y);
        REQUIRE(std::abs(d.te - d.cde - d.scie) <= 1e-12);
        REQUIRE(std::abs(d.scie - (d.delta_c * d.m[0] + d.delta_m * d.cie1)) <= 1e-12);
        if (d.pct_cde) REQUIRE(std::abs(*d.pct_cde + *d.pct_scie - 100.0) <= 1e-12);
        REQUIRE(d.cde == y[1][0] - y[0][0]);
        REQUIRE(d.cie0 == y[0][1] - y[0][0]);
        REQUIRE(d.cie1 == y[1][1] - y[1][0]);
    }
}

TEST_CASE("percentages are undefined for a zero total effect") {
    double m[2] = {0.5, 0.5};
    double y[2][2] = {{1.0, 1.0}, {1.0, 1.0}};
    Decomposition d = assemble_decomposition(0, "M", m, y);
    CHECK_FALSE(d.pct_cde);
    CHECK(std::isnan(effect_vector(d)[0]));
    double m2[2] = {-0.1, 0.5};
    CHECK(assemble_decomposition(0, "M", m2, y).mediator_out_of_range);
}

TEST_CASE("average decomposition") {
    double m[2] = {0.0, 0.0};
    double y1[2][2] = {{0.0, 0.0}, {1.0, 0.0}};
    Decomposition a = assemble_decomposition(0, "M1", m, y1);
    a.scie = 0.2;
    Decomposition b = a;
    b.cde = 0.8;
    b.scie = 0.4;
    AverageDecomposition avg = average_decomposition({a, b});
    CHECK(avg.cde == doctest::Approx(0.9));
    CHECK(avg.scie == doctest::Approx(0.3));
    CHECK(avg.te == doctest::Approx(1.2));
    CHECK(std::abs(avg.te - avg.cde - avg.scie) <= 1e-12);
    AverageDecomposition single = average_decomposition({a});
    CHECK(single.cde == a.cde);
    CHECK(single.scie == a.scie);
    CHECK_THROWS_AS(average_decomposition({}), InputError);
}

TEST_CASE("percentile rule") {
    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(1000 - i);
    CHECK(percentile(v, 0.025) == 25.0);
    CHECK(percentile(v, 0.975) == 975.0);
    CHECK(percentile({1, 2, 3, 4}, 0.3) == doctest::Approx(1.2));
    CHECK(percentile({1, 2, 3, 4}, 0.1) == 1.0);
    CHECK(percentile({1, 2, 3, 4}, 1.0) == 4.0);
    CHECK(percentile({NAN, 5.0}, 0.5) == 5.0);
}

TEST_CASE("bootstrap of a constant statistic has zero width") {
    Dataset d = random_dataset(9, 50);
    BootstrapResult r = bootstrap_ci(d, [](const Dataset&, std::size_t) { return std::vector<double>{3.5}; },
                                     {100, 0.95, 1, 1});
    CHECK(r.kept == 100);
    CHECK(r.intervals[0].lower == 3.5);
    CHECK(r.intervals[0].upper == 3.5);
}

TEST_CASE("bootstrap is reproducible and independent of the thread count") {
    Dataset d = random_dataset(10, 300);
    auto mean_y = [](const Dataset& r, std::size_t) { return std::vector<double>{r.outcome.mean(), r.exposure.mean()}; };
    BootstrapResult one = bootstrap_ci(d, mean_y, {200, 0.9, 5, 1});
    BootstrapResult four = bootstrap_ci(d, mean_y, {200, 0.9, 5, 4});
    BootstrapResult again = bootstrap_ci(d, mean_y, {200, 0.9, 5, 1});
    CHECK(one.values == four.values);
    CHECK(one.values == again.values);
    CHECK(one.intervals[0].lower == four.intervals[0].lower);
    CHECK(one.intervals[0].lower < d.outcome.mean());
    CHECK(one.intervals[0].upper > d.outcome.mean());
    BootstrapResult other = bootstrap_ci(d, mean_y, {200, 0.9, 6, 1});
    CHECK(other.values != one.values);
}

TEST_CASE("bootstrap drops and counts empty strata") {
    Dataset d = random_dataset(11, 100);
    auto sometimes = [](const Dataset&, std::size_t b) {
        if (b % 10 == 0) throw EmptyStratumError("A=1");
        return std::vector<double>{1.0};
    };
    BootstrapResult r = bootstrap_ci(d, sometimes, {100, 0.95, 1, 2});
    CHECK(r.dropped == 10);
    CHECK(r.kept == 90);
    auto often = [](const Dataset&, std::size_t b) {
        if (b % 4 == 0) throw EmptyStratumError("A=1");
        return std::vector<double>{1.0};
    };
    CHECK_THROWS_AS(bootstrap_ci(d, often, {100, 0.95, 1, 2}), AnalysisError);
    auto broken = [](const Dataset&, std::size_t) -> std::vector<double> { throw std::runtime_error("boom"); };
    CHECK_THROWS_AS(bootstrap_ci(d, broken, {100, 0.95, 1, 3}), std::runtime_error);
    CHECK_THROWS_AS(bootstrap_ci(d, sometimes, {99, 0.95, 1, 1}), InputError);
    CHECK_THROWS_AS(bootstrap_ci(d, sometimes, {100, 1.0, 1, 1}), InputError);
}

TEST_CASE("resamples draw rows with replacement") {
    auto rows = resample_rows(50, 3, 0);
    CHECK(rows.size() == 50);
    for (auto r : rows) CHECK(r < 50);
    CHECK(resample_rows(50, 3, 0) == rows);
    CHECK(resample_rows(50, 3, 1) != rows);
}

}  // TEST_SUITE
