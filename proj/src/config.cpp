#include "multimed/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "multimed/error.hpp"
#include "multimed/keyvalue.hpp"

namespace multimed {

namespace {

std::string where(const KvEntry& e) { return "config line " + std::to_string(e.line) + " (" + e.key + ")"; }

std::size_t parse_count(const KvEntry& e) {
    long long v = parse_integer(e.value, where(e));
    if (v < 0) throw InputError(where(e) + ": must be >= 0");
    return static_cast<std::size_t>(v);
}

std::string resolve_path(const std::string& value, const std::filesystem::path& base) {
    std::filesystem::path p(value);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal().string();
}

Family parse_family(const KvEntry& e) {
    if (e.value == "ridge-linear") return Family::ridge_linear;
    if (e.value == "ridge-logistic") return Family::ridge_logistic;
    throw InputError(where(e) + ": family must be ridge-linear, ridge-logistic or auto");
}

void check_keys(const KvSection& s, std::initializer_list<std::string_view> allowed) {
    for (const auto& e : s.entries)
        if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end())
            throw InputError("config line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.name + "]");
}

CandidateConfig parse_candidate(const KvSection& s) {
    check_keys(s, {"outcome_family", "outcome_drop", "outcome_interactions", "propensity_drop",
                   "propensity_interactions"});
    CandidateConfig c;
    c.name = s.name.substr(std::string_view("candidate.").size());
    if (c.name.empty()) throw InputError("config line " + std::to_string(s.line) + ": candidate needs a name");
    for (const auto& e : s.entries) {
        if (e.key == "outcome_family") {
            if (e.value != "auto") c.outcome_family = parse_family(e);
        } else {
            FeatureMap& fm = e.key.starts_with("outcome") ? c.outcome_features : c.propensity_features;
            if (e.key.ends_with("_drop")) {
                fm.drop = split_list(e.value);
            } else {
                for (const auto& item : split_list(e.value)) fm.interactions.push_back(parse_interaction(item));
            }
        }
    }
    return c;
}

}  // namespace

std::pair<std::string, std::string> parse_interaction(std::string_view text) {
    auto star = text.find('*');
    auto trim = [](std::string_view s) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        return std::string(s);
    };
    if (star == std::string_view::npos) throw InputError("interaction must look like 'X*Y': '" + std::string(text) + "'");
    std::string a = trim(text.substr(0, star)), b = trim(text.substr(star + 1));
    if (a.empty() || b.empty() || b.find('*') != std::string::npos)
        throw InputError("interaction must look like 'X*Y': '" + std::string(text) + "'");
    return {a, b};
}

std::vector<CandidateConfig> AnalysisConfig::resolved_candidates() const {
    if (!candidates.empty()) return candidates;
    CandidateConfig c;
    c.name = "glm";
    return {c};
}

void AnalysisConfig::validate() const {
    if (data_path.empty()) throw InputError("config: [input] data is required");
    if (dag_path.empty()) throw InputError("config: [input] dag is required");
    if (!seed) throw InputError("a seed is required ([run] seed or --seed)");
    ModelSpec probe;
    probe.penalty_grid = penalty_grid;
    probe.validate();
    if (outer_folds < 2 || inner_folds < 2) throw InputError("fold counts must be >= 2");
    if (bootstrap != 0 && bootstrap < min_bootstrap_replicates)
        throw InputError("bootstrap replicates must be 0 or >= " + std::to_string(min_bootstrap_replicates));
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must be in (0, 1)");
    if (threads < 1) throw InputError("threads must be >= 1");
    if (oracle && oracle->n_mc < 1) throw InputError("oracle n_mc must be positive");
    std::set<std::string> names;
    for (const auto& c : candidates)
        if (!names.insert(c.name).second) throw InputError("duplicate candidate '" + c.name + "'");
}

AnalysisConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    KvDocument doc = KvDocument::parse(text);
    AnalysisConfig cfg;
    for (const auto& s : doc.sections()) {
        if (s.name.empty()) {
            if (!s.entries.empty())
                throw InputError("config line " + std::to_string(s.entries.front().line) + ": key outside a section");
        } else if (s.name == "input") {
            check_keys(s, {"data", "dag"});
            if (auto e = s.find("data")) cfg.data_path = resolve_path(e->value, base_dir);
            if (auto e = s.find("dag")) cfg.dag_path = resolve_path(e->value, base_dir);
        } else if (s.name == "roles") {
            for (const auto& e : s.entries) {
                auto cols = split_list(e.value);
                if (cols.empty()) throw InputError(where(e) + ": no columns");
                cfg.roles[e.key] = cols;
            }
        } else if (s.name == "binarize") {
            for (const auto& e : s.entries) cfg.binarize[e.key] = parse_real(e.value, where(e));
        } else if (s.name == "estimation") {
            check_keys(s, {"estimator", "penalty_grid", "outer_folds", "inner_folds", "standardize",
                           "allow_unidentified"});
            for (const auto& e : s.entries) {
                if (e.key == "estimator") cfg.estimator = parse_estimator(e.value);
                else if (e.key == "penalty_grid") {
                    cfg.penalty_grid.clear();
                    for (const auto& v : split_list(e.value)) cfg.penalty_grid.push_back(parse_real(v, where(e)));
                } else if (e.key == "outer_folds") cfg.outer_folds = parse_count(e);
                else if (e.key == "inner_folds") cfg.inner_folds = parse_count(e);
                else if (e.key == "standardize") cfg.standardize = parse_bool(e.value, where(e));
                else cfg.allow_unidentified = parse_bool(e.value, where(e));
            }
        } else if (s.name.starts_with("candidate.")) {
            cfg.candidates.push_back(parse_candidate(s));
        } else if (s.name == "bootstrap") {
            check_keys(s, {"replicates", "level"});
            if (auto e = s.find("replicates")) cfg.bootstrap = parse_count(*e);
            if (auto e = s.find("level")) cfg.level = parse_real(e->value, where(*e));
        } else if (s.name == "run") {
            check_keys(s, {"seed", "threads"});
            if (auto e = s.find("seed")) cfg.seed = parse_count(*e);
            if (auto e = s.find("threads")) cfg.threads = parse_count(*e);
        } else if (s.name == "oracle") {
            check_keys(s, {"spec", "n_mc", "seed"});
            OracleConfig o;
            auto spec = s.find("spec");
            if (!spec) throw InputError("config: [oracle] needs spec");
            o.spec_path = resolve_path(spec->value, base_dir);
            if (auto e = s.find("n_mc")) o.n_mc = parse_count(*e);
            if (auto e = s.find("seed")) o.seed = parse_count(*e);
            cfg.oracle = o;
        } else if (s.name == "output") {
            check_keys(s, {"report"});
            if (auto e = s.find("report")) cfg.report_path = resolve_path(e->value, base_dir);
        } else {
            throw InputError("config line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
        }
    }
    return cfg;
}

AnalysisConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

Dataset load_dataset(const AnalysisConfig& config, const CausalDag& dag, const Table& table) {
    Table t = table;
    for (const auto& [name, threshold] : config.binarize) {
        auto& col = t.columns[t.column(name)];
        for (double& v : col)
            if (!std::isnan(v)) v = v >= threshold ? 1.0 : 0.0;
    }
    for (const auto& [node, cols] : config.roles) {
        auto idx = dag.find(node);
        if (!idx) throw InputError("role map names unknown DAG node '" + node + "'");
        if (dag.node(*idx).role == Role::latent) throw InputError("latent node '" + node + "' cannot map to a column");
        if (dag.node(*idx).role != Role::covariate && cols.size() != 1)
            throw InputError("node '" + node + "' must map to exactly one column");
    }
    auto columns_of = [&](std::size_t v) {
        const std::string& name = dag.node(v).name;
        auto it = config.roles.find(name);
        return it == config.roles.end() ? std::vector<std::string>{name} : it->second;
    };
    auto vec = [&](const std::string& col) {
        const auto& c = t.columns[t.column(col)];
        return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())).eval();
    };
    const auto n = static_cast<Eigen::Index>(t.rows());

    Dataset d;
    for (std::size_t v : dag.covariates())
        for (const auto& c : columns_of(v)) d.covariate_names.push_back(c);
    d.covariates.resize(n, static_cast<Eigen::Index>(d.covariate_names.size()));
    for (std::size_t j = 0; j < d.covariate_names.size(); ++j)
        d.covariates.col(static_cast<Eigen::Index>(j)) = vec(d.covariate_names[j]);
    d.exposure_name = columns_of(dag.exposure()).front();
    d.exposure = vec(d.exposure_name);
    for (std::size_t v : dag.mediators()) d.mediator_names.push_back(columns_of(v).front());
    d.mediators.resize(n, static_cast<Eigen::Index>(d.mediator_names.size()));
    for (std::size_t j = 0; j < d.mediator_names.size(); ++j)
        d.mediators.col(static_cast<Eigen::Index>(j)) = vec(d.mediator_names[j]);
    d.outcome_name = columns_of(dag.outcome()).front();
    d.outcome = vec(d.outcome_name);

    auto names = d.column_names();
    std::set<std::string> unique(names.begin(), names.end());
    if (unique.size() != names.size()) throw InputError("a column is mapped to more than one DAG node");
    d.validate();
    return d;
}

}  // namespace multimed
