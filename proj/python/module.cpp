#include <sstream>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "multimed/config.hpp"
#include "multimed/dag.hpp"
#include "multimed/error.hpp"
#include "multimed/io.hpp"
#include "multimed/pipeline.hpp"
#include "multimed/scm.hpp"

namespace py = pybind11;
using namespace multimed;

namespace {

py::dict columns_of(const Dataset& d) {
    py::dict out;
    for (std::size_t j = 0; j < d.covariate_names.size(); ++j)
        out[py::str(d.covariate_names[j])] = Eigen::VectorXd(d.covariates.col(static_cast<Eigen::Index>(j)));
    out[py::str(d.exposure_name)] = d.exposure;
    for (std::size_t j = 0; j < d.mediator_names.size(); ++j)
        out[py::str(d.mediator_names[j])] = Eigen::VectorXd(d.mediators.col(static_cast<Eigen::Index>(j)));
    out[py::str(d.outcome_name)] = d.outcome;
    return out;
}

py::tuple simulate(const std::string& dag_text, std::size_t n, std::uint64_t seed, double scale) {
    ScmSpec scm = generate_scm(parse_dag(dag_text), seed, scale);
    Dataset d = simulate_dataset(scm, n, seed);
    return py::make_tuple(columns_of(d), to_csv(d), serialize_scm(scm));
}

std::string check_dag(const std::string& dag_text) {
    CausalDag dag = parse_dag(dag_text);
    Json all = Json::array();
    for (std::size_t k = 1; k <= dag.mediator_count(); ++k) all.push_back(ignorability_json(check_ignorability(dag, k)));
    return dump_json(all);
}

std::string oracle(const std::string& spec_text, std::size_t n_mc, std::uint64_t seed) {
    return dump_json(oracle_json(oracle_effects(parse_scm(spec_text), n_mc, seed)));
}

std::string analyze(const std::string& dag_path, const std::string& data_path, std::uint64_t seed,
                    std::size_t bootstrap, const std::string& estimator, double level, std::size_t threads,
                    bool allow_unidentified, const std::string& spec_path, std::size_t n_mc) {
    AnalysisConfig cfg;
    cfg.dag_path = dag_path;
    cfg.data_path = data_path;
    cfg.seed = seed;
    cfg.bootstrap = bootstrap;
    cfg.estimator = parse_estimator(estimator);
    cfg.level = level;
    cfg.threads = threads;
    cfg.allow_unidentified = allow_unidentified;
    std::optional<ScmSpec> scm;
    ReportContext ctx;
    if (!spec_path.empty()) {
        cfg.oracle = OracleConfig{spec_path, n_mc, 0};
        const std::string spec_text = read_file(spec_path);
        ctx.oracle_spec_sha256 = sha256_hex(spec_text);
        scm = parse_scm(spec_text);
    }
    cfg.validate();
    const std::string dag_text = read_file(dag_path), data_text = read_file(data_path);
    CausalDag dag = parse_dag(dag_text);
    std::istringstream in(data_text);
    Dataset data = load_dataset(cfg, dag, read_csv(in));
    ctx.dag_sha256 = sha256_hex(dag_text);
    ctx.data_sha256 = sha256_hex(data_text);
    AnalysisResult result;
    {
        py::gil_scoped_release release;
        result = run_analysis(cfg, dag, data, scm);
    }
    return dump_json(build_report(result, dag, ctx));
}

}  // namespace

PYBIND11_MODULE(_multimed, m) {
    m.doc() = "Multiple-mediator causal mediation analysis";
    m.attr("__version__") = MULTIMED_VERSION;

    static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
    static py::exception<AnalysisError> analysis_error(m, "AnalysisError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const AnalysisError& e) {
            py::set_error(analysis_error, e.what());
        } catch (const InputError& e) {
            py::set_error(input_error, e.what());
        }
    });

    m.def("simulate", &simulate, py::arg("dag_text"), py::arg("n"), py::arg("seed"), py::arg("scale") = 1.0,
          "Draw n rows from a random SCM over the DAG; returns (columns, csv_text, spec_text).");
    m.def("check_dag", &check_dag, py::arg("dag_text"), "Ignorability report per mediator as JSON text.");
    m.def("oracle", &oracle, py::arg("spec_text"), py::arg("n_mc") = 1'000'000, py::arg("seed") = 0,
          "Monte Carlo ground-truth effects of an archived SCM as JSON text.");
    m.def("analyze", &analyze, py::arg("dag_path"), py::arg("data_path"), py::arg("seed"),
          py::arg("bootstrap") = 1000, py::arg("estimator") = "dr", py::arg("level") = 0.95, py::arg("threads") = 1,
          py::arg("allow_unidentified") = false, py::arg("spec_path") = "", py::arg("n_mc") = 1'000'000,
          "Run the full analysis and return the JSON report text.");
}
