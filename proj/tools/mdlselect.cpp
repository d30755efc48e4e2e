// mdlselect: command-line front end for MDL variable selection.
//
//   mdlselect fit          --input data.csv --response y [--method mdl|robust-mdl]
//   mdlselect fit-additive --input data.csv --response y [--robust] [--basis-dim 9] [--degree 3]
//   mdlselect simulate     --config sim.json --output data.csv [--rep 1]
//   mdlselect bench        --config sim.json [--output report.json] [--dump-reps reps.csv] [--strict]
//   mdlselect oracle       --input data.csv --response y --max-size 3 [--criterion mdl]
//
// Exit status: 0 success, 2 input error, 3 numerical failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <mdlselect/dataset.hpp>
#include <mdlselect/error.hpp>
#include <mdlselect/json_io.hpp>
#include <mdlselect/pipeline.hpp>
#include <mdlselect/simlab.hpp>

namespace {

using namespace mdlselect;
using json_io::Json;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

void emit(const Json& j, const std::string& path) {
    const std::string text = j.dump(2) + "\n";
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

struct FitFlags {
    std::string input;
    std::string response;
    std::string method = "mdl";
    std::optional<long> screen_size;
    std::string output;
    long seed = 0;
    bool no_timings = false;
    // additive
    int basis_dim = 9;
    int degree = 3;
    bool robust = false;
};

void add_common_fit_flags(CLI::App* cmd, FitFlags& f) {
    cmd->add_option("--input", f.input, "CSV file with a header row")->required();
    cmd->add_option("--response", f.response, "name of the response column")->required();
    cmd->add_option("--screen-size", f.screen_size, "number of screening survivors m")->check(CLI::PositiveNumber);
    cmd->add_option("--output", f.output, "JSON output path (default: stdout)");
    cmd->add_option("--seed", f.seed, "seed (the fit itself is deterministic)");
    cmd->add_flag("--no-timings", f.no_timings, "omit stage timings from the output");
}

int run_fit(const FitFlags& f) {
    const auto data = load_csv(f.input, f.response);
    std::optional<Index> m;
    if (f.screen_size) m = static_cast<Index>(*f.screen_size);
    pipeline::FitReport rep;
    if (f.method == "mdl") rep = pipeline::fit_linear(data, m);
    else if (f.method == "robust-mdl") rep = pipeline::fit_robust(data, m);
    else throw InputError("--method must be 'mdl' or 'robust-mdl'");
    emit(json_io::fit_report(rep, data.names(), !f.no_timings), f.output);
    return 0;
}

int run_fit_additive(const FitFlags& f) {
    const auto data = load_csv(f.input, f.response);
    splines::SplineBasisSpec spec{f.degree, f.basis_dim};
    spec.validate();
    std::optional<Index> m;
    if (f.screen_size) m = static_cast<Index>(*f.screen_size);
    const auto rep = pipeline::fit_additive(data, spec, m, f.robust);
    Json j = json_io::fit_report(rep, data.names(), !f.no_timings);
    // each selected function on a 100-point grid over its observed range
    for (std::size_t k = 0; k < rep.components.size(); ++k) {
        const auto& c = rep.components[k];
        const Vector grid = Vector::LinSpaced(100, c.basis.lower, c.basis.upper);
        const Vector values = c.evaluate(spec, grid);
        j["components"][k]["grid"] = json_io::vector_json(grid);
        j["components"][k]["values"] = json_io::vector_json(values);
    }
    emit(j, f.output);
    return 0;
}

struct SimulateFlags {
    std::string config;
    std::string output;
    long rep = 1;
};

int run_simulate(const SimulateFlags& f) {
    const auto cfg = json_io::load_config(f.config);
    if (f.rep < 1) throw InputError("--rep must be at least 1");
    const auto sample = simlab::generate(cfg, static_cast<Index>(f.rep - 1));
    save_csv(f.output, sample.data, "y");
    return 0;
}

struct BenchFlags {
    std::string config;
    std::string output;
    std::string dump_reps;
    bool strict = false;
    bool no_timings = false;
};

int run_bench(const BenchFlags& f) {
    const auto cfg = json_io::load_config(f.config);
    const auto rep = simlab::run_bench(cfg);
    emit(json_io::sim_report(rep, !f.no_timings), f.output);
    if (!f.dump_reps.empty()) {
        std::ofstream out(f.dump_reps);
        if (!out) throw InputError("cannot write '" + f.dump_reps + "'");
        json_io::write_rows_csv(out, rep);
    }
    if (rep.failures > 0) {
        std::cerr << "warning: " << rep.failures << " replication runs failed\n";
        if (f.strict) return kExitNumerical;
    }
    return 0;
}

struct OracleFlags {
    std::string input;
    std::string response;
    long max_size = 0;
    std::string criterion = "mdl";
    int basis_dim = 9;
    int degree = 3;
    std::string output;
    bool no_timings = false;
};

int run_oracle(const OracleFlags& f) {
    const auto data = load_csv(f.input, f.response);
    criteria::Criterion c;
    if (f.criterion == "mdl") c = criteria::Criterion::linear;
    else if (f.criterion == "robust-mdl") c = criteria::Criterion::robust;
    else if (f.criterion == "mdl-additive") c = criteria::Criterion::additive;
    else if (f.criterion == "robust-mdl-additive") c = criteria::Criterion::additive_robust;
    else throw InputError("unknown --criterion '" + f.criterion + "'");
    const auto rep = pipeline::exhaustive_oracle(data, static_cast<Index>(f.max_size), c,
                                                 splines::SplineBasisSpec{f.degree, f.basis_dim});
    Json j = json_io::fit_report(rep, data.names(), !f.no_timings);
    j["candidates_evaluated"] = rep.candidates_evaluated;
    emit(j, f.output);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MDL variable selection for high-dimensional linear and additive models"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand help for all subcommands");

    FitFlags fit_flags;
    auto* fit = app.add_subcommand("fit", "three-stage linear selection on a CSV file");
    add_common_fit_flags(fit, fit_flags);
    fit->add_option("--method", fit_flags.method, "mdl or robust-mdl")->check(CLI::IsMember({"mdl", "robust-mdl"}));

    FitFlags add_flags;
    auto* fit_add = app.add_subcommand("fit-additive", "three-stage additive-model selection on a CSV file");
    add_common_fit_flags(fit_add, add_flags);
    fit_add->add_option("--basis-dim", add_flags.basis_dim, "B-spline basis functions per covariate")->check(CLI::PositiveNumber);
    fit_add->add_option("--degree", add_flags.degree, "B-spline degree")->check(CLI::NonNegativeNumber);
    fit_add->add_flag("--robust", add_flags.robust, "Laplace-error criterion with LAD refits");

    SimulateFlags sim_flags;
    auto* simulate = app.add_subcommand("simulate", "write one simulated dataset as CSV");
    simulate->add_option("--config", sim_flags.config, "simulation config JSON")->required();
    simulate->add_option("--output", sim_flags.output, "CSV output path")->required();
    simulate->add_option("--rep", sim_flags.rep, "replication number (1-based)");

    BenchFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "run a simulation benchmark");
    bench->add_option("--config", bench_flags.config, "simulation config JSON")->required();
    bench->add_option("--output", bench_flags.output, "report JSON path (default: stdout)");
    bench->add_option("--dump-reps", bench_flags.dump_reps, "per-replication CSV path");
    bench->add_flag("--strict", bench_flags.strict, "exit nonzero if any replication failed");
    bench->add_flag("--no-timings", bench_flags.no_timings, "omit timings from the report");

    OracleFlags oracle_flags;
    auto* oracle = app.add_subcommand("oracle", "exhaustive search over all small subsets");
    oracle->add_option("--input", oracle_flags.input, "CSV file with a header row")->required();
    oracle->add_option("--response", oracle_flags.response, "name of the response column")->required();
    oracle->add_option("--max-size", oracle_flags.max_size, "largest subset size")->required()->check(CLI::NonNegativeNumber);
    oracle->add_option("--criterion", oracle_flags.criterion, "mdl, robust-mdl, mdl-additive or robust-mdl-additive");
    oracle->add_option("--basis-dim", oracle_flags.basis_dim, "B-spline basis functions (additive criteria)");
    oracle->add_option("--degree", oracle_flags.degree, "B-spline degree (additive criteria)");
    oracle->add_option("--output", oracle_flags.output, "JSON output path (default: stdout)");
    oracle->add_flag("--no-timings", oracle_flags.no_timings, "omit timings from the output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (*fit) return run_fit(fit_flags);
        if (*fit_add) return run_fit_additive(add_flags);
        if (*simulate) return run_simulate(sim_flags);
        if (*bench) return run_bench(bench_flags);
        if (*oracle) return run_oracle(oracle_flags);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitInput;
}
