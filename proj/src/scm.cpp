#include "multimed/scm.hpp"

#include <cmath>
#include <sstream>

#include "multimed/keyvalue.hpp"
#include "multimed/rng.hpp"

namespace multimed {

std::string_view to_string(Link link) noexcept {
    return link == Link::identity ? "identity" : "sigmoid-threshold";
}

namespace {

Link default_link(Role r) {
    return (r == Role::exposure || r == Role::mediator) ? Link::sigmoid_threshold : Link::identity;
}

double linear_part(const NodeModel& m, const std::vector<std::size_t>& parents,
                   const std::vector<double>& values) {
    double eta = 0.0;
    for (std::size_t j = 0; j < parents.size(); ++j) eta += m.coefficients[j] * values[parents[j]];
    for (const auto& t : m.interactions)
        eta += t.coefficient * values[parents[t.first]] * values[parents[t.second]];
    return eta;
}

double apply_link(const NodeModel& m, double eta) {
    if (m.link == Link::identity) return eta;
    const double p = 1.0 / (1.0 + std::exp(-eta));
    return p >= m.threshold ? 1.0 : 0.0;
}

}  // namespace

void ScmSpec::validate() const {
    if (models.size() != dag.size()) throw InputError("SCM has " + std::to_string(models.size()) +
                                                      " node models for " + std::to_string(dag.size()) + " nodes");
    for (std::size_t v = 0; v < dag.size(); ++v) {
        const auto& m = models[v];
        const auto& name = dag.node(v).name;
        if (m.coefficients.size() != dag.parents(v).size())
            throw InputError("node '" + name + "': coefficient count does not match parent count");
        if (m.link != default_link(dag.node(v).role))
            throw InputError("node '" + name + "': link must be " + std::string(to_string(default_link(dag.node(v).role))));
        if (!(m.noise_sd >= 0.0) || !std::isfinite(m.noise_sd))
            throw InputError("node '" + name + "': noise_sd must be finite and non-negative");
        if (!(m.threshold > 0.0 && m.threshold < 1.0))
            throw InputError("node '" + name + "': threshold must lie in (0, 1)");
        for (const auto& t : m.interactions)
            if (t.first >= m.coefficients.size() || t.second >= m.coefficients.size())
                throw InputError("node '" + name + "': interaction references a non-parent");
    }
}

ScmSpec generate_scm(const CausalDag& dag, std::uint64_t seed, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("coefficient scale must be positive and finite");
    ScmSpec scm{dag, std::vector<NodeModel>(dag.size()), seed, scale};

    rng::Stream coef(rng::derive(seed, {rng::tag::coefficients}));
    for (std::size_t v = 0; v < dag.size(); ++v) {
        auto& m = scm.models[v];
        m.link = default_link(dag.node(v).role);
        for (std::size_t j = 0; j < dag.parents(v).size(); ++j) m.coefficients.push_back(coef.normal() * scale);
    }

    // Calibrate intercepts in topological order on a dedicated sample.
    const std::size_t n = calibration_draws;
    std::vector<std::vector<double>> sample(dag.size(), std::vector<double>(n));
    std::vector<double> unit(dag.size());
    for (std::size_t v : dag.topological_order()) {
        auto& m = scm.models[v];
        const auto& parents = dag.parents(v);
        double sum = 0.0;
        std::vector<double> eta(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p : parents) unit[p] = sample[p][i];
            eta[i] = linear_part(m, parents, unit);
            sum += eta[i];
        }
        m.intercept = parents.empty() ? 0.0 : -sum / static_cast<double>(n);
        rng::Stream noise(rng::derive(seed, {rng::tag::calibration, v}));
        for (std::size_t i = 0; i < n; ++i)
            sample[v][i] = apply_link(m, eta[i] + m.intercept + m.noise_sd * noise.normal());
    }
    return scm;
}

std::vector<double> evaluate_unit(const ScmSpec& scm, const std::vector<double>& noise,
                                  const std::vector<std::optional<double>>& forced) {
    const auto& dag = scm.dag;
    std::vector<double> values(dag.size(), 0.0);
    for (std::size_t v : dag.topological_order()) {
        if (forced[v]) {
            values[v] = *forced[v];
            continue;
        }
        const auto& m = scm.models[v];
        values[v] = apply_link(m, m.intercept + linear_part(m, dag.parents(v), values) + m.noise_sd * noise[v]);
    }
    return values;
}

Dataset simulate_dataset(const ScmSpec& scm, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw InputError("n must be ≥ 1");
    scm.validate();
    const auto& dag = scm.dag;
    std::vector<std::vector<double>> cols(dag.size(), std::vector<double>(n));
    std::vector<double> unit(dag.size());
    for (std::size_t v : dag.topological_order()) {
        const auto& m = scm.models[v];
        const auto& parents = dag.parents(v);
        rng::Stream noise(rng::derive(seed, {rng::tag::simulation, v}));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p : parents) unit[p] = cols[p][i];
            cols[v][i] = apply_link(m, m.intercept + linear_part(m, parents, unit) + m.noise_sd * noise.normal());
        }
    }

    Dataset d;
    const auto rows = static_cast<Eigen::Index>(n);
    const auto& covs = dag.covariates();
    d.covariates.resize(rows, static_cast<Eigen::Index>(covs.size()));
    for (std::size_t j = 0; j < covs.size(); ++j) {
        d.covariate_names.push_back(dag.node(covs[j]).name);
        d.covariates.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(cols[covs[j]].data(), rows);
    }
    d.exposure_name = dag.node(dag.exposure()).name;
    d.exposure = Eigen::Map<const Eigen::VectorXd>(cols[dag.exposure()].data(), rows);
    const auto& meds = dag.mediators();
    d.mediators.resize(rows, static_cast<Eigen::Index>(meds.size()));
    for (std::size_t j = 0; j < meds.size(); ++j) {
        d.mediator_names.push_back(dag.node(meds[j]).name);
        d.mediators.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(cols[meds[j]].data(), rows);
    }
    d.outcome_name = dag.node(dag.outcome()).name;
    d.outcome = Eigen::Map<const Eigen::VectorXd>(cols[dag.outcome()].data(), rows);
    return d;
}

// --- oracle ------------------------------------------------------------------

OracleResult oracle_effects(const ScmSpec& scm, std::size_t n_mc, std::uint64_t seed) {
    if (n_mc < min_oracle_draws)
        throw InputError("n_mc must be >= " + std::to_string(min_oracle_draws));
    scm.validate();
    const auto& dag = scm.dag;
    const std::size_t K = dag.mediator_count();
    const std::size_t A = dag.exposure();
    const std::size_t Y = dag.outcome();

    // Per-unit vector: Y(1), Y(0), then per k: M_k(0), M_k(1), Y_k(0,0), Y_k(0,1), Y_k(1,0), Y_k(1,1).
    const auto D = static_cast<Eigen::Index>(2 + 6 * K);
    auto base = [](std::size_t k) { return static_cast<Eigen::Index>(2 + 6 * k); };

    std::vector<rng::Stream> streams;
    for (std::size_t v = 0; v < dag.size(); ++v) streams.emplace_back(rng::derive(seed, {rng::tag::oracle, v}));

    Eigen::VectorXd shift(D), sum = Eigen::VectorXd::Zero(D), x(D);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(D, D);
    std::vector<double> noise(dag.size());
    std::vector<std::optional<double>> forced(dag.size());

    for (std::size_t i = 0; i < n_mc; ++i) {
        for (std::size_t v = 0; v < dag.size(); ++v) noise[v] = streams[v].normal();
        for (int a = 0; a <= 1; ++a) {
            std::fill(forced.begin(), forced.end(), std::nullopt);
            forced[A] = a;
            auto vals = evaluate_unit(scm, noise, forced);
            x[1 - a] = vals[Y];
            for (std::size_t k = 0; k < K; ++k) x[base(k) + a] = vals[dag.mediators()[k]];
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t mk = dag.mediators()[k];
                for (int m = 0; m <= 1; ++m) {
                    forced[mk] = m;
                    x[base(k) + 2 + 2 * a + m] = evaluate_unit(scm, noise, forced)[Y];
                }
                forced[mk] = std::nullopt;
            }
        }
        if (i == 0) shift = x;
        Eigen::VectorXd d = x - shift;
        sum += d;
        cross.selfadjointView<Eigen::Lower>().rankUpdate(d);
    }

    const double n = static_cast<double>(n_mc);
    Eigen::VectorXd mean_d = sum / n;
    Eigen::VectorXd mu = shift + mean_d;
    Eigen::MatrixXd cov = cross.selfadjointView<Eigen::Lower>();
    cov = (cov - n * mean_d * mean_d.transpose()) / (n - 1.0);

    auto estimate = [&](double value, const Eigen::VectorXd& grad) {
        return McEstimate{value, std::sqrt(std::max(0.0, grad.dot(cov * grad)) / n)};
    };
    auto unit_grad = [&](std::initializer_list<std::pair<Eigen::Index, double>> terms) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(D);
        for (auto [i, w] : terms) g[i] += w;
        return g;
    };

    OracleResult out;
    out.n_mc = n_mc;
    out.seed = seed;
    Eigen::VectorXd g_te = unit_grad({{0, 1.0}, {1, -1.0}});
    out.te = estimate(mu[0] - mu[1], g_te);

    Eigen::VectorXd g_avg_cde = Eigen::VectorXd::Zero(D), g_avg_scie = Eigen::VectorXd::Zero(D);
    double avg_cde = 0.0, avg_scie = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const Eigen::Index b = base(k);
        const Eigen::Index M0 = b, M1 = b + 1, Y00 = b + 2, Y01 = b + 3, Y10 = b + 4, Y11 = b + 5;
        TrueEffects t;
        t.k = k + 1;
        t.mediator = dag.node(dag.mediators()[k]).name;
        t.te = out.te;
        t.m0 = estimate(mu[M0], unit_grad({{M0, 1.0}}));
        t.m1 = estimate(mu[M1], unit_grad({{M1, 1.0}}));
        t.y[0][0] = estimate(mu[Y00], unit_grad({{Y00, 1.0}}));
        t.y[0][1] = estimate(mu[Y01], unit_grad({{Y01, 1.0}}));
        t.y[1][0] = estimate(mu[Y10], unit_grad({{Y10, 1.0}}));
        t.y[1][1] = estimate(mu[Y11], unit_grad({{Y11, 1.0}}));
        Eigen::VectorXd g_cde = unit_grad({{Y10, 1.0}, {Y00, -1.0}});
        const double cde = mu[Y10] - mu[Y00];
        const double cie0 = mu[Y01] - mu[Y00];
        const double cie1 = mu[Y11] - mu[Y10];
        t.cde = estimate(cde, g_cde);
        t.cie0 = estimate(cie0, unit_grad({{Y01, 1.0}, {Y00, -1.0}}));
        t.cie1 = estimate(cie1, unit_grad({{Y11, 1.0}, {Y10, -1.0}}));
        const double scie = mu[M1] * cie1 - mu[M0] * cie0;
        Eigen::VectorXd g_scie = unit_grad({{M1, cie1}, {M0, -cie0}, {Y11, mu[M1]}, {Y10, -mu[M1]},
                                            {Y01, -mu[M0]}, {Y00, mu[M0]}});
        t.scie = estimate(scie, g_scie);
        t.gap = estimate(out.te.value - cde - scie, g_te - g_cde - g_scie);
        out.mediators.push_back(t);

        avg_cde += cde / static_cast<double>(K);
        avg_scie += scie / static_cast<double>(K);
        g_avg_cde += g_cde / static_cast<double>(K);
        g_avg_scie += g_scie / static_cast<double>(K);
    }
    out.average_cde = estimate(avg_cde, g_avg_cde);
    out.average_scie = estimate(avg_scie, g_avg_scie);
    out.average_gap = estimate(out.te.value - avg_cde - avg_scie, g_te - g_avg_cde - g_avg_scie);
    return out;
}

TrueEffects oracle_effects(const ScmSpec& scm, std::size_t k, std::size_t n_mc, std::uint64_t seed) {
    if (k < 1 || k > scm.dag.mediator_count())
        throw InputError("mediator index " + std::to_string(k) + " out of range 1.." +
                         std::to_string(scm.dag.mediator_count()));
    return oracle_effects(scm, n_mc, seed).mediators[k - 1];
}

// --- archival format -----------------------------------------------------------

std::string serialize_scm(const ScmSpec& scm) {
    std::ostringstream os;
    os << "# structural causal model\n[scm]\n";
    os << "seed = " << scm.seed << '\n';
    os << "scale = " << format_double(scm.scale) << "\n\n[dag]\n" << serialize_dag(scm.dag);
    for (std::size_t v = 0; v < scm.dag.size(); ++v) {
        const auto& m = scm.models[v];
        const auto& parents = scm.dag.parents(v);
        os << "\n[node." << scm.dag.node(v).name << "]\n";
        os << "link = " << to_string(m.link) << '\n';
        os << "intercept = " << format_double(m.intercept) << '\n';
        os << "noise_sd = " << format_double(m.noise_sd) << '\n';
        if (m.link == Link::sigmoid_threshold) os << "threshold = " << format_double(m.threshold) << '\n';
        for (std::size_t j = 0; j < parents.size(); ++j)
            os << "coef." << scm.dag.node(parents[j]).name << " = " << format_double(m.coefficients[j]) << '\n';
        for (const auto& t : m.interactions)
            os << "interaction." << scm.dag.node(parents[t.first]).name << '.'
               << scm.dag.node(parents[t.second]).name << " = " << format_double(t.coefficient) << '\n';
    }
    return os.str();
}

ScmSpec parse_scm(std::string_view text) {
    KvDocument doc = KvDocument::parse(text, {"dag"});
    const KvSection* head = doc.find("scm");
    const KvSection* dag_sec = doc.find("dag");
    if (!head || !dag_sec) throw InputError("SCM document needs [scm] and [dag] sections");
    CausalDag dag = parse_dag(dag_sec->raw);
    ScmSpec scm{dag, std::vector<NodeModel>(dag.size()), 0, 1.0};
    if (auto* e = head->find("seed")) scm.seed = static_cast<std::uint64_t>(parse_integer(e->value, "seed"));
    if (auto* e = head->find("scale")) scm.scale = parse_real(e->value, "scale");

    std::vector<bool> seen(dag.size(), false);
    for (const KvSection* sec : doc.with_prefix("node.")) {
        const std::string name = sec->name.substr(5);
        const std::size_t v = dag.index(name);
        seen[v] = true;
        const auto& parents = dag.parents(v);
        auto parent_pos = [&](const std::string& p) {
            const std::size_t idx = dag.index(p);
            for (std::size_t j = 0; j < parents.size(); ++j)
                if (parents[j] == idx) return j;
            throw InputError("node '" + name + "': '" + p + "' is not a parent");
        };
        NodeModel& m = scm.models[v];
        m.coefficients.assign(parents.size(), 0.0);
        std::vector<bool> have(parents.size(), false);
        for (const auto& e : sec->entries) {
            const std::string what = "[" + sec->name + "] " + e.key;
            if (e.key == "link") {
                if (e.value == "identity") m.link = Link::identity;
                else if (e.value == "sigmoid-threshold") m.link = Link::sigmoid_threshold;
                else throw InputError(what + ": unknown link '" + e.value + "'");
            } else if (e.key == "intercept") {
                m.intercept = parse_real(e.value, what);
            } else if (e.key == "noise_sd") {
                m.noise_sd = parse_real(e.value, what);
            } else if (e.key == "threshold") {
                m.threshold = parse_real(e.value, what);
            } else if (e.key.rfind("coef.", 0) == 0) {
                std::size_t j = parent_pos(e.key.substr(5));
                m.coefficients[j] = parse_real(e.value, what);
                have[j] = true;
            } else if (e.key.rfind("interaction.", 0) == 0) {
                auto parts = split_list(e.key.substr(12), '.');
                if (parts.size() != 2) throw InputError(what + ": expected interaction.<parent>.<parent>");
                m.interactions.push_back({parent_pos(parts[0]), parent_pos(parts[1]), parse_real(e.value, what)});
            } else {
                throw InputError(what + ": unknown key");
            }
        }
        for (std::size_t j = 0; j < parents.size(); ++j)
            if (!have[j]) throw InputError("node '" + name + "': missing coef." + dag.node(parents[j]).name);
    }
    for (std::size_t v = 0; v < dag.size(); ++v)
        if (!seen[v]) throw InputError("SCM document lacks [node." + dag.node(v).name + "]");
    scm.validate();
    return scm;
}

}  // namespace multimed
