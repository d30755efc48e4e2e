#pragma once

#include <fstream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "criteria.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "simlab.hpp"

/// JSON forms of fit reports, simulation configs and simulation reports.
/// Field order is fixed; indices are 1-based.
namespace mdlselect::json_io {

using Json = nlohmann::ordered_json;

inline Json indices_1based(const std::vector<Index>& idx) {
    Json out = Json::array();
    for (const auto j : idx) out.push_back(j + 1);
    return out;
}

inline Json vector_json(const Vector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

/// Fit report; timings go under "timings_ms" when `with_timings`.
inline Json fit_report(const pipeline::FitReport& rep, const std::vector<std::string>& names,
                       bool with_timings = true) {
    Json j;
    j["method"] = std::string(criteria::to_string(rep.method));
    Json selected = Json::array();
    for (const auto idx : rep.selected.indices()) {
        Json item;
        item["index"] = idx + 1;
        item["name"] = names.at(static_cast<std::size_t>(idx));
        selected.push_back(std::move(item));
    }
    j["selected"] = std::move(selected);
    j["intercept"] = rep.intercept;
    if (rep.spec) {
        Json groups = Json::array();
        for (const auto& c : rep.components) {
            Json g;
            g["index"] = c.basis.covariate + 1;
            g["name"] = names.at(static_cast<std::size_t>(c.basis.covariate));
            g["domain"] = Json::array({c.basis.lower, c.basis.upper});
            g["coefficients"] = vector_json(c.coefficients);
            groups.push_back(std::move(g));
        }
        j["components"] = std::move(groups);
        j["basis"] = {{"degree", rep.spec->degree}, {"basis_dim", rep.spec->basis_dim}};
    } else {
        j["coefficients"] = vector_json(rep.coefficients);
    }
    Json curve = Json::array();
    for (const auto& pt : rep.criterion_curve) {
        Json c;
        c["size"] = pt.size;
        if (pt.skipped) {
            c["skipped"] = true;
        } else {
            c["total"] = pt.value.total;
            c["fidelity"] = pt.value.fidelity_term;
            c["param_code"] = pt.value.param_code_term;
            c["index_code"] = pt.value.index_code_term;
        }
        curve.push_back(std::move(c));
    }
    j["criterion_curve"] = std::move(curve);
    j["m"] = rep.screen_size;
    j["path_length"] = rep.path_length;
    j["path"] = indices_1based(rep.path);
    j["warnings"] = rep.warnings;
    if (with_timings)
        j["timings_ms"] = {{"screen", rep.timings.screen_ms}, {"path", rep.timings.path_ms}, {"refit", rep.timings.refit_ms}};
    return j;
}

// ---------------------------------------------------------------------------
// Simulation config
// ---------------------------------------------------------------------------

inline Json error_law_json(const simlab::ErrorLaw& law) {
    Json j;
    j["type"] = simlab::to_string(law.kind);
    if (law.kind == simlab::ErrorLaw::Kind::student_t) j["df"] = law.df;
    if (law.kind == simlab::ErrorLaw::Kind::mixture) {
        j["weight"] = law.weight;
        j["sd"] = law.sd;
    }
    return j;
}

inline simlab::ErrorLaw error_law_from_json(const Json& j) {
    using simlab::ErrorLaw;
    const std::string type = j.is_string() ? j.get<std::string>() : j.at("type").get<std::string>();
    ErrorLaw law;
    if (type == "gaussian") law = ErrorLaw::gaussian();
    else if (type == "laplace") law = ErrorLaw::laplace();
    else if (type == "student_t") law = ErrorLaw::student_t(j.is_object() ? j.value("df", 3.0) : 3.0);
    else if (type == "mixture")
        law = ErrorLaw::mixture(j.is_object() ? j.value("weight", 0.05) : 0.05, j.is_object() ? j.value("sd", 7.0) : 7.0);
    else throw InputError("unknown error law '" + type + "'");
    law.validate();
    return law;
}

inline Json config_json(const simlab::SimConfig& cfg) {
    Json j;
    j["design"] = cfg.design == simlab::Design::linear ? "linear" : "additive";
    j["n"] = cfg.n;
    j["p"] = cfg.p;
    j["d"] = cfg.d;
    j["b"] = cfg.b;
    j["rho"] = cfg.rho;
    j["error_law"] = error_law_json(cfg.error_law);
    j["t_corr"] = cfg.t_corr;
    j["replications"] = cfg.replications;
    j["seed"] = cfg.seed;
    Json methods = Json::array();
    for (const auto m : cfg.methods) methods.push_back(simlab::to_string(m));
    j["methods"] = std::move(methods);
    if (cfg.design == simlab::Design::additive) {
        j["degree"] = cfg.spline.degree;
        j["basis_dim"] = cfg.spline.basis_dim;
    }
    return j;
}

inline simlab::SimConfig config_from_json(const Json& j) {
    static const std::vector<std::string> known{"design", "n",     "p",     "d",    "b",        "rho",    "error_law",
                                                "t_corr", "replications", "seed", "methods", "degree", "basis_dim"};
    if (!j.is_object()) throw InputError("simulation config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw InputError("unknown config field '" + key + "'");
    try {
        simlab::SimConfig cfg;
        const std::string design = j.value("design", std::string("linear"));
        if (design == "linear") cfg.design = simlab::Design::linear;
        else if (design == "additive") cfg.design = simlab::Design::additive;
        else throw InputError("unknown design '" + design + "'");
        if (cfg.design == simlab::Design::additive) {
            cfg.n = 400;
            cfg.p = 1000;
            cfg.d = simlab::kAdditiveSignals;
            cfg.methods = {simlab::Method::mdl_additive, simlab::Method::robust_mdl_additive};
        }
        cfg.n = j.value("n", cfg.n);
        cfg.p = j.value("p", cfg.p);
        cfg.d = j.value("d", cfg.d);
        cfg.b = j.value("b", cfg.b);
        cfg.rho = j.value("rho", cfg.rho);
        if (j.contains("error_law")) cfg.error_law = error_law_from_json(j.at("error_law"));
        cfg.t_corr = j.value("t_corr", cfg.t_corr);
        cfg.replications = j.value("replications", cfg.replications);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& m : j.at("methods")) cfg.methods.push_back(simlab::method_from_string(m.get<std::string>()));
        }
        cfg.spline.degree = j.value("degree", cfg.spline.degree);
        cfg.spline.basis_dim = j.value("basis_dim", cfg.spline.basis_dim);
        cfg.validate();
        return cfg;
    } catch (const Json::exception& e) {
        throw InputError(std::string("bad simulation config: ") + e.what());
    }
}

inline simlab::SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw InputError("cannot parse '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Simulation report
// ---------------------------------------------------------------------------

/// Per-method means plus run metadata; `with_timings` adds mean seconds.
inline Json sim_report(const simlab::SimReport& rep, bool with_timings = true) {
    Json j;
    j["config"] = config_json(rep.config);
    j["replications"] = rep.replications;
    j["failures"] = rep.failures;
    j["mse_normalization"] = "per-observation";
    Json methods = Json::array();
    for (const auto& s : rep.methods) {
        Json m;
        m["method"] = simlab::to_string(s.method);
        m["successes"] = s.successes;
        m["failures"] = s.failures;
        m["mean_fn"] = s.mean_fn;
        m["mean_fp"] = s.mean_fp;
        m["mean_f1"] = s.mean_f1;
        m["mean_mse"] = s.mean_mse;
        if (with_timings) m["mean_seconds"] = s.mean_seconds;
        methods.push_back(std::move(m));
    }
    j["methods"] = std::move(methods);
    Json errors = Json::array();
    for (const auto& row : rep.rows)
        if (row.failed) errors.push_back({{"rep", row.rep + 1}, {"method", simlab::to_string(row.method)}, {"error", row.error}});
    j["errors"] = std::move(errors);
    return j;
}

/// One line per (replication, method): rep,method,FN,FP,F1,MSE,seconds.
inline void write_rows_csv(std::ostream& out, const simlab::SimReport& rep) {
    out << "rep,method,FN,FP,F1,MSE,seconds\n";
    for (const auto& row : rep.rows) {
        out << row.rep + 1 << ',' << simlab::to_string(row.method) << ',';
        if (row.failed) {
            out << ",,,,\n";
            continue;
        }
        out << row.fn << ',' << row.fp << ',' << detail::format_double(row.f1) << ','
            << detail::format_double(row.mse) << ',' << detail::format_double(row.seconds) << '\n';
    }
}

}  // namespace mdlselect::json_io
