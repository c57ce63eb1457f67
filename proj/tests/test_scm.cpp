#include <doctest.h>

#include <cmath>

#include "multimed/error.hpp"
#include "multimed/scm.hpp"
#include "support.hpp"

using namespace multimed;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::size_t parent_position(const CausalDag& dag, const std::string& child, const std::string& parent) {
    const auto& ps = dag.parents(dag.index(child));
    return static_cast<std::size_t>(std::find(ps.begin(), ps.end(), dag.index(parent)) - ps.begin());
}

// A -> M1 -> M2 -> Y, A -> M2, M1 -> Y, A -> Y with Y = c * M1 * M2 and
// probit-like mediators: M = [eta + Z >= 0], so P(M = 1) = Phi(eta).
struct Chain {
    double mu = -0.3, delta = 1.1;                 // M1
    double alpha = -0.5, beta = 0.6, gamma = 1.3;  // M2
    double c = 2.0;
    ScmSpec scm{CausalDag({{"A", Role::exposure}, {"M1", Role::mediator}, {"M2", Role::mediator}, {"Y", Role::outcome}},
                          {{"A", "M1"}, {"A", "M2"}, {"M1", "M2"}, {"M1", "Y"}, {"M2", "Y"}, {"A", "Y"}}),
                std::vector<NodeModel>(4), 0, 1.0};

    Chain() {
        const CausalDag& dag = scm.dag;
        auto& a = scm.models[dag.index("A")];
        a.link = Link::sigmoid_threshold;
        auto& m1 = scm.models[dag.index("M1")];
        m1.link = Link::sigmoid_threshold;
        m1.coefficients = {delta};
        m1.intercept = mu;
        auto& m2 = scm.models[dag.index("M2")];
        m2.link = Link::sigmoid_threshold;
        m2.coefficients.assign(2, 0.0);
        m2.coefficients[parent_position(dag, "M2", "A")] = beta;
        m2.coefficients[parent_position(dag, "M2", "M1")] = gamma;
        m2.intercept = alpha;
        auto& y = scm.models[dag.index("Y")];
        y.coefficients.assign(3, 0.0);
        y.noise_sd = 0.0;
        y.interactions.push_back({parent_position(dag, "Y", "M1"), parent_position(dag, "Y", "M2"), c});
        scm.validate();
    }

    double p1(int a) const { return phi(mu + delta * a); }
    double q(int a, int m1) const { return phi(alpha + beta * a + gamma * m1); }
    double p2(int a) const { return p1(a) * q(a, 1) + (1 - p1(a)) * q(a, 0); }
    double te() const { return c * (p1(1) * q(1, 1) - p1(0) * q(0, 1)); }
};

}  // namespace

TEST_SUITE("scm") {

TEST_CASE("spec round trip") {
    ScmSpec scm = generate_scm(testing::load_dag("dependent.dag"), 3, 0.7);
    std::string text = serialize_scm(scm);
    ScmSpec back = parse_scm(text);
    CHECK(serialize_scm(back) == text);
    CHECK(back.seed == 3);
    CHECK(back.scale == 0.7);
    for (std::size_t v = 0; v < scm.models.size(); ++v) {
        CHECK(back.models[v].coefficients == scm.models[v].coefficients);
        CHECK(back.models[v].intercept == scm.models[v].intercept);
    }
    CHECK_THROWS_AS(parse_scm("garbage"), std::exception);
}

TEST_CASE("generation and simulation are deterministic") {
    CausalDag dag = testing::load_dag("independent.dag");
    ScmSpec a = generate_scm(dag, 5), b = generate_scm(dag, 5), c = generate_scm(dag, 6);
    CHECK(serialize_scm(a) == serialize_scm(b));
    CHECK(serialize_scm(a) != serialize_scm(c));
    Dataset d1 = simulate_dataset(a, 300, 9), d2 = simulate_dataset(a, 300, 9), d3 = simulate_dataset(a, 300, 10);
    CHECK(to_csv(d1) == to_csv(d2));
    CHECK(to_csv(d1) != to_csv(d3));
    CHECK(d1.column_names() == std::vector<std::string>{"L1", "L2", "A", "M1", "M2", "Y"});
    CHECK_NOTHROW(d1.validate());
    // A prefix of a larger draw equals the smaller draw.
    Dataset big = simulate_dataset(a, 600, 9);
    CHECK(big.outcome.head(300) == d1.outcome);
}

TEST_CASE("latent nodes are not emitted") {
    ScmSpec scm = generate_scm(testing::load_dag("independent_latent.dag"), 1);
    Dataset d = simulate_dataset(scm, 10, 1);
    CHECK(d.covariate_names == std::vector<std::string>{"L2"});
}

TEST_CASE("n must be at least one") {
    ScmSpec scm = generate_scm(testing::load_dag("independent.dag"), 1);
    try {
        simulate_dataset(scm, 0, 1);
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()) == "n must be ≥ 1");
    }
}

TEST_CASE("intercepts centre the continuous outcome") {
    ScmSpec scm = generate_scm(testing::load_dag("independent.dag"), 21);
    Dataset d = simulate_dataset(scm, 200000, 22);
    const double sd = std::sqrt((d.outcome.array() - d.outcome.mean()).square().mean());
    CHECK(std::abs(d.outcome.mean()) < 5.0 * sd / std::sqrt(200000.0) + 0.01 * sd);
    // Binary nodes are neither always on nor always off.
    CHECK(d.exposure.mean() > 0.05);
    CHECK(d.exposure.mean() < 0.95);
}

TEST_CASE("validate rejects mismatched models") {
    ScmSpec scm = generate_scm(testing::load_dag("independent.dag"), 1);
    ScmSpec bad = scm;
    bad.models[bad.dag.outcome()].coefficients.pop_back();
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = scm;
    bad.models[bad.dag.exposure()].link = Link::identity;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = scm;
    bad.models[0].noise_sd = -1.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    CHECK_THROWS_AS(oracle_effects(scm, 100, 1), InputError);
    CHECK_THROWS_AS(oracle_effects(scm, 5, 20000, 1), InputError);
}

TEST_CASE("forced nodes hold their value") {
    Chain ch;
    std::vector<double> noise{0.0, -5.0, -5.0, 0.0};
    std::vector<std::optional<double>> forced(4);
    forced[ch.scm.dag.index("M1")] = 1.0;
    forced[ch.scm.dag.index("M2")] = 1.0;
    CHECK(evaluate_unit(ch.scm, noise, forced)[ch.scm.dag.index("Y")] == ch.c);
    forced[ch.scm.dag.index("M2")] = std::nullopt;
    CHECK(evaluate_unit(ch.scm, noise, forced)[ch.scm.dag.index("Y")] == 0.0);
}

TEST_CASE("oracle matches closed form, including the downstream gap") {
    Chain ch;
    OracleResult r = oracle_effects(ch.scm, 400000, 31);
    auto near = [](const McEstimate& e, double truth) { return std::abs(e.value - truth) <= 4.0 * e.se + 1e-12; };
    CHECK(near(r.te, ch.te()));

    const TrueEffects& up = r.mediators[0];
    CHECK(up.mediator == "M1");
    CHECK(near(up.m0, ch.p1(0)));
    CHECK(near(up.m1, ch.p1(1)));
    CHECK(near(up.cde, 0.0));
    CHECK(near(up.cie0, ch.c * ch.q(0, 1)));
    CHECK(near(up.cie1, ch.c * ch.q(1, 1)));
    CHECK(near(up.gap, 0.0));

    const TrueEffects& down = r.mediators[1];
    CHECK(near(down.m0, ch.p2(0)));
    CHECK(near(down.m1, ch.p2(1)));
    CHECK(near(down.cie0, ch.c * ch.p1(0)));
    CHECK(near(down.cie1, ch.c * ch.p1(1)));
    auto cov = [&](int a) { return ch.p1(a) * ch.q(a, 1) - ch.p1(a) * ch.p2(a); };
    const double gap = ch.c * (cov(1) - cov(0));
    CHECK(std::abs(gap) > 0.05);
    CHECK(near(down.gap, gap));
    CHECK(std::abs(down.gap.value) > 4.0 * down.gap.se);
}

TEST_CASE("oracle is reproducible and the independent design has no gap") {
    ScmSpec scm = generate_scm(testing::load_dag("independent.dag"), 41);
    OracleResult a = oracle_effects(scm, 50000, 42), b = oracle_effects(scm, 50000, 42);
    CHECK(a.te.value == b.te.value);
    CHECK(a.mediators[1].scie.value == b.mediators[1].scie.value);
    for (const auto& t : a.mediators) {
        CHECK(std::abs(t.gap.value) <= 4.0 * t.gap.se + 1e-12);
        CHECK(t.te.value == a.te.value);
    }
    TrueEffects single = oracle_effects(scm, 2, 50000, 42);
    CHECK(single.cde.value == a.mediators[1].cde.value);
}

}  // TEST_SUITE
