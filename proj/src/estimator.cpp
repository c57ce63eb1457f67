#include "multimed/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "multimed/error.hpp"
#include "multimed/rng.hpp"

namespace multimed {

std::string_view to_string(EstimatorKind kind) noexcept {
    return kind == EstimatorKind::doubly_robust ? "dr" : "gformula";
}

EstimatorKind parse_estimator(std::string_view text) {
    if (text == "dr") return EstimatorKind::doubly_robust;
    if (text == "gformula") return EstimatorKind::gformula;
    throw InputError("estimator must be 'dr' or 'gformula', got '" + std::string(text) + "'");
}

double clip_propensity(double p) noexcept { return std::clamp(p, propensity_lower, propensity_upper); }

namespace {

void check_length(const Eigen::VectorXd& v, const Dataset& data, const char* what) {
    if (static_cast<std::size_t>(v.size()) != data.rows())
        throw InputError(std::string(what) + " has " + std::to_string(v.size()) + " predictions for " +
                         std::to_string(data.rows()) + " rows");
}

void check_levels(int a, int m) {
    if (a != 0 && a != 1) throw InputError("exposure level must be 0 or 1");
    if (m != 0 && m != 1) throw InputError("mediator level must be 0 or 1");
}

std::string stratum_label(const Dataset& data, std::size_t k, int a, int m) {
    std::string s = data.exposure_name + "=" + std::to_string(a);
    if (m >= 0) s += ", " + data.mediator_names[k] + "=" + std::to_string(m);
    return s;
}

}  // namespace

PotentialEstimate dr_estimate_m(const Dataset& data, std::size_t k, int a, const Eigen::VectorXd& f,
                                const Eigen::VectorXd& exposure_propensity) {
    check_levels(a, 0);
    if (k >= data.mediator_count()) throw InputError("mediator index out of range");
    check_length(f, data, "mediator model");
    check_length(exposure_propensity, data, "exposure propensity");
    PotentialEstimate est{PotentialEstimate::Kind::mediator, k, a, -1, EstimatorKind::doubly_robust};
    const auto n = static_cast<Eigen::Index>(data.rows());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double term = f[i];
        if (data.exposure[i] == a) {
            double g = clip_propensity(a == 1 ? exposure_propensity[i] : 1.0 - exposure_propensity[i]);
            term += (data.mediators(i, static_cast<Eigen::Index>(k)) - f[i]) / g;
            ++est.stratum_count;
        }
        sum += term;
    }
    if (est.stratum_count == 0) throw EmptyStratumError(stratum_label(data, k, a, -1));
    est.value = sum / static_cast<double>(n);
    return est;
}

PotentialEstimate dr_estimate_y(const Dataset& data, std::size_t k, int a, int m, const Eigen::VectorXd& f,
                                const Eigen::VectorXd& exposure_propensity,
                                const Eigen::VectorXd& mediator_propensity) {
    check_levels(a, m);
    if (k >= data.mediator_count()) throw InputError("mediator index out of range");
    check_length(f, data, "outcome model");
    check_length(exposure_propensity, data, "exposure propensity");
    check_length(mediator_propensity, data, "mediator propensity");
    PotentialEstimate est{PotentialEstimate::Kind::outcome, k, a, m, EstimatorKind::doubly_robust};
    const auto n = static_cast<Eigen::Index>(data.rows());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double term = f[i];
        if (data.exposure[i] == a && data.mediators(i, static_cast<Eigen::Index>(k)) == m) {
            double ga = clip_propensity(a == 1 ? exposure_propensity[i] : 1.0 - exposure_propensity[i]);
            double gm = clip_propensity(m == 1 ? mediator_propensity[i] : 1.0 - mediator_propensity[i]);
            term += (data.outcome[i] - f[i]) / (ga * gm);
            ++est.stratum_count;
        }
        sum += term;
    }
    if (est.stratum_count == 0) throw EmptyStratumError(stratum_label(data, k, a, m));
    est.value = sum / static_cast<double>(n);
    return est;
}

PotentialEstimate gformula_estimate(PotentialEstimate::Kind kind, std::size_t k, int a, int m,
                                    const Eigen::VectorXd& f) {
    check_levels(a, kind == PotentialEstimate::Kind::mediator ? 0 : m);
    if (f.size() == 0) throw InputError("no predictions to average");
    PotentialEstimate est{kind, k, a, kind == PotentialEstimate::Kind::mediator ? -1 : m, EstimatorKind::gformula};
    est.value = f.mean();
    est.stratum_count = static_cast<std::size_t>(f.size());
    return est;
}

Decomposition assemble_decomposition(std::size_t k, std::string mediator, const double m[2], const double y[2][2]) {
    Decomposition d;
    d.k = k;
    d.mediator = std::move(mediator);
    for (int a = 0; a < 2; ++a) {
        d.m[a] = m[a];
        for (int j = 0; j < 2; ++j) d.y[a][j] = y[a][j];
    }
    d.cde = y[1][0] - y[0][0];
    d.cie0 = y[0][1] - y[0][0];
    d.cie1 = y[1][1] - y[1][0];
    d.scie = m[1] * d.cie1 - m[0] * d.cie0;
    d.te = d.cde + d.scie;
    d.delta_m = m[1] - m[0];
    d.delta_c = d.cie1 - d.cie0;
    if (std::abs(d.te) >= te_zero_tolerance) {
        d.pct_cde = 100.0 * d.cde / d.te;
        d.pct_scie = 100.0 - *d.pct_cde;
    }
    d.mediator_out_of_range = m[0] < 0.0 || m[0] > 1.0 || m[1] < 0.0 || m[1] > 1.0;
    return d;
}

Decomposition decompose_mediator(const Dataset& data, std::size_t k, EstimatorKind kind,
                                 const NuisancePredictions& p) {
    if (k >= data.mediator_count()) throw InputError("mediator index out of range");
    double m[2];
    double y[2][2];
    for (int a = 0; a < 2; ++a) {
        if (kind == EstimatorKind::doubly_robust) {
            m[a] = dr_estimate_m(data, k, a, p.f_m[a], p.g_a).value;
            for (int j = 0; j < 2; ++j)
                y[a][j] = dr_estimate_y(data, k, a, j, p.f_y[a][j], p.g_a, p.g_m[a]).value;
        } else {
            check_length(p.f_m[a], data, "mediator model");
            m[a] = gformula_estimate(PotentialEstimate::Kind::mediator, k, a, -1, p.f_m[a]).value;
            for (int j = 0; j < 2; ++j) {
                check_length(p.f_y[a][j], data, "outcome model");
                y[a][j] = gformula_estimate(PotentialEstimate::Kind::outcome, k, a, j, p.f_y[a][j]).value;
            }
        }
    }
    return assemble_decomposition(k, data.mediator_names[k], m, y);
}

AverageDecomposition average_decomposition(const std::vector<Decomposition>& slices) {
    if (slices.empty()) throw InputError("no mediators to average");
    AverageDecomposition avg;
    for (const auto& s : slices) {
        avg.cde += s.cde;
        avg.scie += s.scie;
    }
    avg.cde /= static_cast<double>(slices.size());
    avg.scie /= static_cast<double>(slices.size());
    avg.te = avg.cde + avg.scie;
    return avg;
}

std::vector<double> effect_vector(const Decomposition& d) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {d.pct_cde.value_or(nan), d.pct_scie.value_or(nan), d.cde, d.scie, d.te, d.cie0, d.cie1,
            d.m[0], d.m[1], d.delta_m, d.delta_c};
}

// --- bootstrap ---------------------------------------------------------------

double percentile(std::vector<double> values, double p) {
    std::erase_if(values, [](double v) { return std::isnan(v); });
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    const double h = n * p;
    if (h <= 1.0) return values.front();
    if (h >= n) return values.back();
    const auto lo = static_cast<std::size_t>(std::floor(h));  // 1-based
    const double frac = h - static_cast<double>(lo);
    const double x0 = values[lo - 1];
    return frac == 0.0 ? x0 : x0 + frac * (values[lo] - x0);
}

std::vector<std::size_t> resample_rows(std::size_t n, std::uint64_t seed, std::size_t replicate) {
    rng::Stream s(rng::derive(seed, {rng::tag::bootstrap, replicate}));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = static_cast<std::size_t>(s.below(n));
    return rows;
}

BootstrapResult bootstrap_ci(const Dataset& data, const BootstrapStatistic& statistic, const BootstrapOptions& options) {
    if (options.replicates < min_bootstrap_replicates)
        throw InputError("bootstrap needs at least " + std::to_string(min_bootstrap_replicates) + " replicates");
    if (!(options.level > 0.0 && options.level < 1.0)) throw InputError("confidence level must be in (0, 1)");
    if (data.rows() == 0) throw AnalysisError("cannot bootstrap an empty dataset");

    const std::size_t B = options.replicates;
    std::vector<std::optional<std::vector<double>>> results(B);
    std::vector<std::exception_ptr> failures(B);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b = next++; b < B; b = next++) {
            try {
                results[b] = statistic(data.subset(resample_rows(data.rows(), options.seed, b)), b);
            } catch (const EmptyStratumError&) {
                // dropped
            } catch (...) {
                failures[b] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, B);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);

    BootstrapResult out;
    for (auto& r : results) {
        if (!r) {
            ++out.dropped;
            continue;
        }
        if (!out.values.empty() && r->size() != out.values.front().size())
            throw std::logic_error("bootstrap statistic changed dimension");
        out.values.push_back(std::move(*r));
    }
    out.kept = out.values.size();
    if (static_cast<double>(out.dropped) > max_dropped_fraction * static_cast<double>(B))
        throw AnalysisError(std::to_string(out.dropped) + " of " + std::to_string(B) +
                            " bootstrap replicates had an empty stratum; the sample is too small for this analysis");

    const std::size_t dim = out.values.empty() ? 0 : out.values.front().size();
    const double tail = (1.0 - options.level) / 2.0;
    for (std::size_t j = 0; j < dim; ++j) {
        std::vector<double> column;
        column.reserve(out.kept);
        for (const auto& v : out.values) column.push_back(v[j]);
        out.intervals.push_back({percentile(column, tail), percentile(column, 1.0 - tail)});
    }
    return out;
}

}  // namespace multimed
