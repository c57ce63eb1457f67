#include <chrono>
#include <ctime>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "multimed/config.hpp"
#include "multimed/dag.hpp"
#include "multimed/error.hpp"
#include "multimed/io.hpp"
#include "multimed/keyvalue.hpp"
#include "multimed/pipeline.hpp"
#include "multimed/scm.hpp"

using namespace multimed;

namespace {

struct SimulateArgs {
    std::string dag, from_spec, out, spec, oracle, oracle_out;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    double scale = 1.0;
    std::size_t n_mc = 1'000'000;
};

struct CheckArgs {
    std::string dag, json;
};

struct AnalyzeArgs {
    std::string config, dag, data, spec, out, estimator;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> bootstrap, threads, n_mc;
    std::optional<double> level;
    bool allow_unidentified = false;
    bool quiet = false;
};

std::string utc_timestamp() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int run_simulate(const SimulateArgs& a) {
    ScmSpec scm = [&] {
        if (!a.from_spec.empty()) return parse_scm(read_file(a.from_spec));
        if (a.dag.empty()) throw InputError("simulate needs --dag or --from-spec");
        return generate_scm(parse_dag(read_file(a.dag)), a.seed, a.scale);
    }();
    if (a.n < 1) throw InputError("n must be ≥ 1");
    std::optional<Json> oracle;
    if (!a.oracle.empty()) {
        OracleResult r = oracle_effects(scm, a.n_mc, a.seed);
        if (a.oracle == "all") {
            oracle = oracle_json(r);
        } else {
            long long k = parse_integer(a.oracle, "--oracle");
            if (k < 1 || static_cast<std::size_t>(k) > r.mediators.size())
                throw InputError("--oracle must be 'all' or a mediator index 1.." + std::to_string(r.mediators.size()));
            oracle = true_effects_json(r.mediators[static_cast<std::size_t>(k) - 1]);
        }
    }
    Dataset data = simulate_dataset(scm, a.n, a.seed);
    std::string csv = to_csv(data);
    if (!a.out.empty()) atomic_write(a.out, csv);
    else std::cout << csv;
    if (!a.spec.empty()) atomic_write(a.spec, serialize_scm(scm));
    if (oracle) {
        if (!a.oracle_out.empty()) atomic_write(a.oracle_out, dump_json(*oracle));
        else std::cerr << dump_json(*oracle);
    }
    return 0;
}

int run_checkdag(const CheckArgs& a) {
    CausalDag dag = parse_dag(read_file(a.dag));
    Json all = Json::array();
    bool ok = true;
    for (std::size_t k = 1; k <= dag.mediator_count(); ++k) {
        IgnorabilityReport r = check_ignorability(dag, k);
        ok = ok && r.holds();
        auto line = [](const char* what, bool holds, const std::optional<std::vector<std::string>>& w) {
            std::string s = std::string("  ") + what + ": " + (holds ? "pass" : "FAIL");
            if (w) {
                s += "  witness:";
                for (const auto& n : *w) s += " " + n;
            }
            return s;
        };
        std::cout << r.mediator << ": " << (r.holds() ? "identified" : "NOT identified") << '\n'
                  << line("M(a) _||_ A | L        ", r.condition_m, r.witness_m) << '\n'
                  << line("Y(a,m) _||_ {A, M} | L ", r.condition_y, r.witness_y) << '\n';
        all.push_back(ignorability_json(r));
    }
    if (!a.json.empty()) atomic_write(a.json, dump_json(Json{{"dag", a.dag}, {"mediators", all}, {"identified", ok}}));
    return ok ? 0 : 1;
}

int run_analyze(const AnalyzeArgs& a) {
    AnalysisConfig cfg;
    std::string config_digest;
    if (!a.config.empty()) {
        config_digest = sha256_hex(read_file(a.config));
        cfg = load_config(a.config);
    }
    if (!a.dag.empty()) cfg.dag_path = a.dag;
    if (!a.data.empty()) cfg.data_path = a.data;
    if (a.seed) cfg.seed = *a.seed;
    if (a.bootstrap) cfg.bootstrap = *a.bootstrap;
    if (a.level) cfg.level = *a.level;
    if (a.threads) cfg.threads = *a.threads;
    if (!a.estimator.empty()) cfg.estimator = parse_estimator(a.estimator);
    if (a.allow_unidentified) cfg.allow_unidentified = true;
    if (!a.spec.empty()) {
        if (!cfg.oracle) cfg.oracle = OracleConfig{};
        cfg.oracle->spec_path = a.spec;
    }
    if (a.n_mc) {
        if (!cfg.oracle) throw InputError("--n-mc needs an oracle spec (--spec or [oracle])");
        cfg.oracle->n_mc = *a.n_mc;
    }
    if (!a.out.empty()) cfg.report_path = a.out;
    cfg.validate();

    const std::string dag_text = read_file(cfg.dag_path);
    const std::string data_text = read_file(cfg.data_path);
    CausalDag dag = parse_dag(dag_text);
    std::istringstream data_stream(data_text);
    Dataset data = load_dataset(cfg, dag, read_csv(data_stream));

    ReportContext ctx;
    ctx.data_sha256 = sha256_hex(data_text);
    ctx.dag_sha256 = sha256_hex(dag_text);
    ctx.config_sha256 = config_digest;
    std::optional<ScmSpec> scm;
    if (cfg.oracle) {
        std::string spec_text = read_file(cfg.oracle->spec_path);
        ctx.oracle_spec_sha256 = sha256_hex(spec_text);
        scm = parse_scm(spec_text);
    }

    AnalysisResult result = run_analysis(cfg, dag, data, scm);
    ctx.timestamp = utc_timestamp();
    Json report = build_report(result, dag, ctx);
    if (!cfg.report_path.empty()) atomic_write(cfg.report_path, dump_json(report));
    if (!a.quiet) std::cout << render_table(result);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-mediator causal mediation analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MULTIMED_VERSION);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Draw a dataset from a random linear SCM over a DAG");
    s->add_option("--dag", sim.dag, "DAG file");
    s->add_option("--from-spec", sim.from_spec, "Reuse an archived SCM instead of generating one");
    s->add_option("--n", sim.n, "Number of rows");
    s->add_option("--seed", sim.seed, "Master seed");
    s->add_option("--scale", sim.scale, "Coefficient scale");
    s->add_option("--out", sim.out, "Dataset CSV (default: stdout)");
    s->add_option("--spec", sim.spec, "Write the SCM spec here");
    s->add_option("--oracle", sim.oracle, "Ground-truth effects for mediator K (1-based) or 'all'");
    s->add_option("--oracle-out", sim.oracle_out, "Oracle JSON path (default: stderr)");
    s->add_option("--n-mc", sim.n_mc, "Monte Carlo draws for the oracle");

    CheckArgs chk;
    auto* c = app.add_subcommand("checkdag", "Check both ignorability conditions for every mediator");
    c->add_option("--dag", chk.dag, "DAG file")->required();
    c->add_option("--json", chk.json, "Also write the report as JSON");

    AnalyzeArgs an;
    auto* a = app.add_subcommand("analyze", "Decompose the total effect for every mediator");
    a->add_option("--config", an.config, "Analysis config");
    a->add_option("--dag", an.dag, "DAG file (overrides the config)");
    a->add_option("--data", an.data, "Dataset CSV (overrides the config)");
    a->add_option("--seed", an.seed, "Master seed");
    a->add_option("--bootstrap", an.bootstrap, "Bootstrap replicates B (0 disables intervals)");
    a->add_option("--level", an.level, "Confidence level");
    a->add_option("--estimator", an.estimator, "dr or gformula")->check(CLI::IsMember({"dr", "gformula"}));
    a->add_flag("--allow-unidentified", an.allow_unidentified, "Continue when ignorability fails");
    a->add_option("--spec", an.spec, "SCM spec for oracle columns");
    a->add_option("--n-mc", an.n_mc, "Monte Carlo draws for the oracle");
    a->add_option("--threads", an.threads, "Bootstrap worker threads");
    a->add_option("--out", an.out, "JSON report path");
    a->add_flag("--quiet", an.quiet, "Do not print the table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*s) return run_simulate(sim);
        if (*c) return run_checkdag(chk);
        return run_analyze(an);
    } catch (const DagParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const AnalysisError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
