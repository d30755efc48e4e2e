#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "splines.hpp"

/// Simulation designs, selection metrics and the replication harness.
namespace mdlselect::simlab {

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum class StreamTag : std::uint64_t { covariates = 1, errors = 2 };

using Rng = std::mt19937_64;

/// Generator keyed by (seed, replication, purpose) only, so a replication
/// draws the same numbers regardless of which worker runs it.
inline Rng make_stream(std::uint64_t seed, std::uint64_t rep, StreamTag tag) {
    const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ rep) ^ static_cast<std::uint64_t>(tag));
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(tag)};
    return Rng(seq);
}

// ---------------------------------------------------------------------------
// Error laws
// ---------------------------------------------------------------------------

struct ErrorLaw {
    enum class Kind { gaussian, laplace, student_t, mixture };
    Kind kind = Kind::gaussian;
    double df = 3.0;      // student_t
    double weight = 0.05;  // mixture: probability of the wide component
    double sd = 7.0;       // mixture: standard deviation of the wide component

    static ErrorLaw gaussian() { return {}; }
    static ErrorLaw laplace() { return {Kind::laplace}; }
    static ErrorLaw student_t(double df) { return {Kind::student_t, df}; }
    static ErrorLaw mixture(double weight, double sd) { return {Kind::mixture, 3.0, weight, sd}; }

    void validate() const {
        if (kind == Kind::student_t && !(df > 0.0)) throw InputError("student_t degrees of freedom must be positive");
        if (kind == Kind::mixture) {
            if (!(weight >= 0.0 && weight < 1.0)) throw InputError("mixture weight must lie in [0, 1)");
            if (!(sd > 0.0)) throw InputError("mixture standard deviation must be positive");
        }
    }
};

inline std::string to_string(ErrorLaw::Kind k) {
    switch (k) {
        case ErrorLaw::Kind::gaussian: return "gaussian";
        case ErrorLaw::Kind::laplace: return "laplace";
        case ErrorLaw::Kind::student_t: return "student_t";
        case ErrorLaw::Kind::mixture: return "mixture";
    }
    return "unknown";
}

/// n independent draws. Laplace(0, 1) uses the inverse CDF; the mixture
/// draws N(0, sd^2) with probability `weight` and N(0, 1) otherwise.
inline Vector draw_errors(const ErrorLaw& law, Index n, Rng& rng) {
    law.validate();
    Vector e(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    switch (law.kind) {
        case ErrorLaw::Kind::gaussian:
            for (Index i = 0; i < n; ++i) e(i) = normal(rng);
            break;
        case ErrorLaw::Kind::laplace:
            for (Index i = 0; i < n; ++i) {
                double u = unif(rng) - 0.5;
                while (u == -0.5) u = unif(rng) - 0.5;
                e(i) = (u < 0.0 ? 1.0 : -1.0) * std::log1p(-2.0 * std::abs(u));
            }
            break;
        case ErrorLaw::Kind::student_t: {
            std::student_t_distribution<double> t(law.df);
            for (Index i = 0; i < n; ++i) e(i) = t(rng);
            break;
        }
        case ErrorLaw::Kind::mixture:
            for (Index i = 0; i < n; ++i) {
                const bool wide = unif(rng) < law.weight;
                e(i) = (wide ? law.sd : 1.0) * normal(rng);
            }
            break;
    }
    return e;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Design { linear, additive };

enum class Method { mdl, robust_mdl, mdl_additive, robust_mdl_additive };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::mdl: return "mdl";
        case Method::robust_mdl: return "robust-mdl";
        case Method::mdl_additive: return "mdl-additive";
        case Method::robust_mdl_additive: return "robust-mdl-additive";
    }
    return "unknown";
}

inline Method method_from_string(const std::string& s) {
    for (auto m : {Method::mdl, Method::robust_mdl, Method::mdl_additive, Method::robust_mdl_additive})
        if (to_string(m) == s) return m;
    throw InputError("unknown method '" + s + "'");
}

/// Number of significant functions in the additive design.
inline constexpr Index kAdditiveSignals = 4;

struct SimConfig {
    Design design = Design::linear;
    Index n = 100;
    Index p = 1000;
    Index d = 3;
    double b = 1.0;
    double rho = 0.5;
    ErrorLaw error_law;
    double t_corr = 0.0;
    Index replications = 50;
    std::uint64_t seed = 0;
    std::vector<Method> methods{Method::mdl, Method::robust_mdl};
    splines::SplineBasisSpec spline;

    void validate() const {
        if (n < 3) throw InputError("n must be at least 3");
        if (p < 1) throw InputError("p must be positive");
        if (replications < 1) throw InputError("replications must be at least 1");
        if (d < 0 || d > p) throw InputError("d must lie in [0, p]");
        if (!(std::abs(rho) < 1.0)) throw InputError("rho must lie in (-1, 1)");
        if (!(t_corr >= 0.0)) throw InputError("t_corr must be nonnegative");
        if (methods.empty()) throw InputError("no methods configured");
        error_law.validate();
        if (design == Design::additive) {
            if (d != kAdditiveSignals) throw InputError("the additive design has exactly 4 significant functions");
            spline.validate();
        }
        for (auto m : methods) {
            const bool additive_method = m == Method::mdl_additive || m == Method::robust_mdl_additive;
            if (additive_method != (design == Design::additive))
                throw InputError("method '" + to_string(m) + "' does not match the design");
        }
    }

    ModelSubset true_support() const {
        std::vector<Index> s(static_cast<std::size_t>(d));
        for (Index j = 0; j < d; ++j) s[static_cast<std::size_t>(j)] = j;
        return ModelSubset(s, p, design == Design::additive ? SubsetKind::additive_group : SubsetKind::linear_predictor);
    }
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

struct Sample {
    Dataset data;
    /// Noise-free mean of y at the observed rows.
    Vector signal;
    /// Linear: the true coefficients. Additive: empty.
    Vector beta;
    /// Additive: column j holds f_{j+1} at the observed x_{j+1}. Linear: empty.
    Matrix function_values;
};

/// Rows of X are Gaussian AR(1) sequences with corr(x_j, x_k) = rho^|j-k|;
/// the first d coefficients equal b and the rest are zero.
inline Sample generate_linear(const SimConfig& cfg, Index rep_index) {
    if (cfg.design != Design::linear) throw InputError("generate_linear needs a linear design");
    cfg.validate();
    auto xs = make_stream(cfg.seed, static_cast<std::uint64_t>(rep_index), StreamTag::covariates);
    auto es = make_stream(cfg.seed, static_cast<std::uint64_t>(rep_index), StreamTag::errors);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
    Matrix X(cfg.n, cfg.p);
    for (Index i = 0; i < cfg.n; ++i) {
        double prev = normal(xs);
        X(i, 0) = prev;
        for (Index j = 1; j < cfg.p; ++j) {
            prev = cfg.rho * prev + innov * normal(xs);
            X(i, j) = prev;
        }
    }
    Vector beta = Vector::Zero(cfg.p);
    beta.head(cfg.d).setConstant(cfg.b);
    Vector signal = X.leftCols(cfg.d) * beta.head(cfg.d);
    Vector y = signal + draw_errors(cfg.error_law, cfg.n, es);
    return {Dataset(std::move(y), std::move(X)), std::move(signal), std::move(beta), Matrix()};
}

/// The four significant functions of the additive design, j = 1..4.
inline double additive_truth(Index j, double x) {
    constexpr double two_pi = 2.0 * M_PI;
    const double s = std::sin(two_pi * x);
    const double c = std::cos(two_pi * x);
    switch (j) {
        case 1: return 5.0 * x;
        case 2: return 3.0 * (2.0 * x - 1.0) * (2.0 * x - 1.0);
        case 3: return 4.0 * s / (2.0 - s);
        case 4: return 6.0 * (0.1 * s + 0.2 * c + 0.3 * s * s + 0.4 * c * c * c + 0.5 * s * s * s);
        default: return 0.0;
    }
}

/// Covariates (w_ij + t u_i)/(1 + t) for the four signal columns and
/// (w_ij + t k_i)/(1 + t) for the rest, all sources Uniform(0, 1);
/// y = f_1(x_1) + ... + f_4(x_4) + error.
inline Sample generate_additive(const SimConfig& cfg, Index rep_index) {
    if (cfg.design != Design::additive) throw InputError("generate_additive needs an additive design");
    cfg.validate();
    if (cfg.p < kAdditiveSignals) throw InputError("additive design needs p >= 4");
    auto xs = make_stream(cfg.seed, static_cast<std::uint64_t>(rep_index), StreamTag::covariates);
    auto es = make_stream(cfg.seed, static_cast<std::uint64_t>(rep_index), StreamTag::errors);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double t = cfg.t_corr;
    Matrix X(cfg.n, cfg.p);
    for (Index i = 0; i < cfg.n; ++i) {
        const double u = unif(xs);
        const double k = unif(xs);
        for (Index j = 0; j < cfg.p; ++j) {
            const double shared = j < kAdditiveSignals ? u : k;
            X(i, j) = (unif(xs) + t * shared) / (1.0 + t);
        }
    }
    Matrix F(cfg.n, kAdditiveSignals);
    for (Index i = 0; i < cfg.n; ++i)
        for (Index j = 0; j < kAdditiveSignals; ++j) F(i, j) = additive_truth(j + 1, X(i, j));
    Vector signal = F.rowwise().sum();
    Vector y = signal + draw_errors(cfg.error_law, cfg.n, es);
    return {Dataset(std::move(y), std::move(X)), std::move(signal), Vector(), std::move(F)};
}

inline Sample generate(const SimConfig& cfg, Index rep_index) {
    return cfg.design == Design::linear ? generate_linear(cfg, rep_index) : generate_additive(cfg, rep_index);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct SelectionScore {
    Index fn = 0;
    Index fp = 0;
    Index tp = 0;
    double f1 = 0.0;
};

inline SelectionScore score_selection(const ModelSubset& truth, const ModelSubset& selected, Index p) {
    for (const auto* s : {&truth, &selected})
        if (!s->is_empty() && s->indices().back() >= p) throw InputError("subset index exceeds p");
    SelectionScore out;
    for (const auto j : truth.indices()) (selected.contains(j) ? out.tp : out.fn)++;
    out.fp = selected.size() - out.tp;
    if (truth.is_empty() && selected.is_empty()) out.f1 = 1.0;
    else if (out.tp == 0) out.f1 = 0.0;
    else out.f1 = 2.0 * static_cast<double>(out.tp) / static_cast<double>(2 * out.tp + out.fp + out.fn);
    return out;
}

/// Per-observation mean squared distance between fitted and true signal.
inline double score_signal_mse(const Vector& truth, const Vector& fitted) {
    if (truth.size() != fitted.size() || truth.size() == 0) throw InputError("signal vectors must have equal, nonzero length");
    return (fitted - truth).squaredNorm() / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct ReplicationRow {
    Index rep = 0;
    Method method = Method::mdl;
    bool failed = false;
    std::string error;
    Index fn = 0;
    Index fp = 0;
    double f1 = 0.0;
    double mse = 0.0;
    double seconds = 0.0;
    ModelSubset selected;
};

struct MethodSummary {
    Method method = Method::mdl;
    Index successes = 0;
    Index failures = 0;
    double mean_fn = 0.0;
    double mean_fp = 0.0;
    double mean_f1 = 0.0;
    double mean_mse = 0.0;
    double mean_seconds = 0.0;
};

struct SimReport {
    SimConfig config;
    std::vector<MethodSummary> methods;
    std::vector<ReplicationRow> rows;  // rep-major, methods in config order
    Index replications = 0;
    Index failures = 0;

    const MethodSummary& summary(Method m) const {
        for (const auto& s : methods)
            if (s.method == m) return s;
        throw InputError("method '" + to_string(m) + "' not in report");
    }
};

inline pipeline::FitReport run_method(Method m, const Dataset& data, const SimConfig& cfg) {
    switch (m) {
        case Method::mdl: return pipeline::fit_linear(data);
        case Method::robust_mdl: return pipeline::fit_robust(data);
        case Method::mdl_additive: return pipeline::fit_additive(data, cfg.spline, std::nullopt, false);
        case Method::robust_mdl_additive: return pipeline::fit_additive(data, cfg.spline, std::nullopt, true);
    }
    throw InputError("unknown method");
}

/// Worker count from MDLSELECT_THREADS (0 or unset = hardware concurrency).
inline unsigned default_threads() {
    unsigned threads = 0;
    if (const char* env = std::getenv("MDLSELECT_THREADS")) {
        try {
            threads = static_cast<unsigned>(std::stoul(env));
        } catch (const std::exception&) {
            throw InputError(std::string("MDLSELECT_THREADS is not a number: '") + env + "'");
        }
    }
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    return threads;
}

/// Runs one replication: generate, fit with every method, score.
inline std::vector<ReplicationRow> run_replication(const SimConfig& cfg, Index rep) {
    std::vector<ReplicationRow> rows;
    const auto truth = cfg.true_support();
    std::optional<Sample> sample;
    std::string gen_error;
    try {
        sample = generate(cfg, rep);
    } catch (const std::exception& e) {
        gen_error = e.what();
    }
    for (const auto m : cfg.methods) {
        ReplicationRow row;
        row.rep = rep;
        row.method = m;
        if (!sample) {
            row.failed = true;
            row.error = "generation failed: " + gen_error;
            rows.push_back(std::move(row));
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto fit = run_method(m, sample->data, cfg);
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const auto sel = ModelSubset(fit.selected.indices(), cfg.p, truth.kind());
            const auto score = score_selection(truth, sel, cfg.p);
            row.fn = score.fn;
            row.fp = score.fp;
            row.f1 = score.f1;
            row.mse = score_signal_mse(sample->signal, fit.fitted);
            row.selected = sel;
        } catch (const std::exception& e) {
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Runs all replications (concurrently when threads > 1) and aggregates
/// per-method means over successful runs in replication order.
inline SimReport run_bench(const SimConfig& cfg, unsigned threads = 0) {
    cfg.validate();
    if (threads == 0) threads = default_threads();
    const auto reps = static_cast<std::size_t>(cfg.replications);
    std::vector<std::vector<ReplicationRow>> per_rep(reps);

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < reps; r = next++) per_rep[r] = run_replication(cfg, static_cast<Index>(r));
    };
    const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
    if (count <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    }

    SimReport rep;
    rep.config = cfg;
    rep.replications = cfg.replications;
    for (const auto m : cfg.methods) rep.methods.push_back({m});
    for (auto& rows : per_rep) {
        for (auto& row : rows) {
            auto& s = *std::find_if(rep.methods.begin(), rep.methods.end(),
                                    [&](const MethodSummary& ms) { return ms.method == row.method; });
            if (row.failed) {
                ++s.failures;
                ++rep.failures;
            } else {
                ++s.successes;
                s.mean_fn += static_cast<double>(row.fn);
                s.mean_fp += static_cast<double>(row.fp);
                s.mean_f1 += row.f1;
                s.mean_mse += row.mse;
                s.mean_seconds += row.seconds;
            }
            rep.rows.push_back(std::move(row));
        }
    }
    for (auto& s : rep.methods) {
        if (s.successes == 0) continue;
        const double k = static_cast<double>(s.successes);
        s.mean_fn /= k;
        s.mean_fp /= k;
        s.mean_f1 /= k;
        s.mean_mse /= k;
        s.mean_seconds /= k;
    }
    return rep;
}

}  // namespace mdlselect::simlab
