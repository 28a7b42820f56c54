// Command-line front end: simulation studies, two-sample CSV analysis, the
// outcome-consistency diagnostic, and Monte Carlo rule evaluation.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coda/coda.hpp"

namespace {

using nlohmann::json;

coda::Mode parse_mode(const std::string& s) {
    if (s == "ho" || s == "HO") return coda::Mode::HO;
    if (s == "he" || s == "HE") return coda::Mode::HE;
    if (s == "auto") return coda::Mode::Auto;
    throw coda::ValidationError("unknown mode '" + s + "', expected ho, he or auto");
}

coda::SamplingModelKind parse_sampling(const std::string& s) {
    if (s == "forest") return coda::SamplingModelKind::Forest;
    if (s == "logistic") return coda::SamplingModelKind::Logistic;
    if (s == "frozen") return coda::SamplingModelKind::Frozen;
    throw coda::ValidationError("unknown sampling_model '" + s +
                                "', expected forest, logistic or frozen");
}

// JSON config file: any subset of the Config fields; unknown keys rejected.
coda::Config config_from_json(const json& j, const std::string& where) {
    coda::Config cfg;
    for (const auto& [key, val] : j.items()) {
        try {
            if (key == "depth") cfg.depth = val.get<int>();
            else if (key == "max_iterations") cfg.max_iterations = val.get<int>();
            else if (key == "param_tol") cfg.param_tol = val.get<double>();
            else if (key == "clip_lo") cfg.clip_lo = val.get<double>();
            else if (key == "clip_hi") cfg.clip_hi = val.get<double>();
            else if (key == "ridge_eps") cfg.ridge_eps = val.get<double>();
            else if (key == "alpha") cfg.alpha = val.get<double>();
            else if (key == "mode") cfg.mode = parse_mode(val.get<std::string>());
            else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
            else if (key == "sampling_model")
                cfg.sampling_model = parse_sampling(val.get<std::string>());
            else if (key == "frozen_r") cfg.frozen_r = val.get<double>();
            else if (key == "forest_trees") cfg.forest_trees = val.get<int>();
            else if (key == "threads") cfg.threads = val.get<int>();
            else if (key == "basis") {
                for (const auto& [bk, bv] : val.items()) {
                    if (bk == "linear") cfg.basis.linear = bv.get<bool>();
                    else if (bk == "pairwise") cfg.basis.pairwise = bv.get<bool>();
                    else if (bk == "squares") cfg.basis.squares = bv.get<bool>();
                    else
                        throw coda::ValidationError(where + ": unknown basis key '" + bk + "'");
                }
            } else {
                throw coda::ValidationError(where + ": unknown config key '" + key + "'");
            }
        } catch (const json::exception& ex) {
            throw coda::ValidationError(where + ": bad value for '" + key + "': " + ex.what());
        }
    }
    return cfg;
}

coda::Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw coda::ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw coda::ValidationError(std::string("config file ") + path + ": " + ex.what());
    }
    if (!j.is_object()) throw coda::ValidationError("config file " + path + ": expected an object");
    return config_from_json(j, "config file " + path);
}

// Flags shared by every subcommand. Each field records whether it was given
// on the command line so explicit flags win over the config file.
struct CommonFlags {
    std::string config_path;
    std::string format = "json";
    std::string mode = "auto";
    std::uint64_t seed = 0;
    int threads = 1;
    int depth = 2;
    int iterations = 1;
    double alpha = 0.05;
    std::string sampling = "forest";

    CLI::App* sub = nullptr;

    void attach(CLI::App* s, bool with_model_flags) {
        sub = s;
        s->add_option("--config", config_path, "JSON config file overriding defaults")
            ->check(CLI::ExistingFile);
        s->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"json", "csv", "table"}));
        s->add_option("--seed", seed, "RNG seed");
        s->add_option("--threads", threads, "worker threads (env CODA_THREADS overrides)");
        if (with_model_flags) {
            s->add_option("--mode", mode, "estimation mode: ho, he or auto");
            s->add_option("--depth", depth, "policy tree depth, 0 to 4");
            s->add_option("--iterations", iterations, "calibrated search iterations K");
            s->add_option("--alpha", alpha, "two-sided CI level is 1 - alpha");
            s->add_option("--sampling-model", sampling,
                          "sampling probability estimator: forest, logistic or frozen");
        }
    }

    // defaults < config file < explicit flags < CODA_THREADS. Some
    // subcommands attach only a subset of the flags, so look options up
    // without throwing.
    bool given(const std::string& name) const {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    }

    coda::Config resolve() const {
        coda::Config cfg;
        if (given("--config")) cfg = load_config_file(config_path);
        if (given("--seed")) cfg.seed = seed;
        if (given("--threads")) cfg.threads = threads;
        if (given("--mode")) cfg.mode = parse_mode(mode);
        if (given("--depth")) cfg.depth = depth;
        if (given("--iterations")) cfg.max_iterations = iterations;
        if (given("--alpha")) cfg.alpha = alpha;
        if (given("--sampling-model")) cfg.sampling_model = parse_sampling(sampling);
        if (const char* env = std::getenv("CODA_THREADS")) {
            char* end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end == env || *end != '\0' || v < 1)
                throw coda::ValidationError("CODA_THREADS must be a positive integer");
            cfg.threads = int(v);
        }
        cfg.validate();
        return cfg;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void print_study_table(const coda::StudySummary& s) {
    std::cout << "scenario " << s.scenario << "  mode " << to_string(s.mode) << "  n_e " << s.n_e
              << "  n_u " << s.n_u << "  reps " << s.reps << "  seed " << s.seed << "\n";
    std::cout << "true optimal value " << fmt(s.true_value_opt) << " (mc se "
              << fmt(s.true_value_opt_se) << ")\n\n";
    std::printf("%-14s %12s %12s %12s %12s %10s\n", "cell", "true_value", "estimate", "sd",
                "mean_sigma", "coverage");
    for (const auto& c : s.cells)
        std::printf("%-14s %12.4f %12.4f %12.4f %12.4f %9.1f%%\n", c.name.c_str(),
                    c.mean_true_value, c.mean_estimate, c.sd_estimate, c.mean_sigma,
                    100.0 * c.coverage);
    std::cout << "\nimproved efficiency (learned rules) " << fmt(s.improved_efficiency)
              << "%  (fixed optimal rule) " << fmt(s.improved_efficiency_opt) << "%\n";
    if (s.failures > 0) std::cout << "failed replications " << s.failures << "\n";
    if (s.variance_bound_violations > 0)
        std::cout << "variance bound violations " << s.variance_bound_violations << "\n";
}

int cmd_simulate(const CommonFlags& common, int scenario, bool het, long n_e, long n_u, int reps,
                 long truth_draws, long opt_draws) {
    const coda::Config cfg = common.resolve();
    const coda::ScenarioSpec spec = coda::make_scenario(scenario, het);
    const coda::StudySummary s =
        coda::run_study(spec, n_e, n_u, reps, cfg, cfg.seed, truth_draws, opt_draws);
    if (common.format == "json")
        std::cout << coda::to_json(s).dump(2) << "\n";
    else if (common.format == "csv")
        std::cout << coda::to_csv(s);
    else
        print_study_table(s);
    return 0;
}

int cmd_fit(const CommonFlags& common, const std::string& primary_path,
            const std::string& auxiliary_path) {
    coda::Config cfg = common.resolve();
    const coda::PrimarySample e = coda::read_primary_csv(primary_path);
    const coda::AuxiliarySample u = coda::read_auxiliary_csv(auxiliary_path);

    const coda::ValidationReport vr = coda::validate_pair(e, u);
    if (!vr.ok) {
        std::string msg = "input validation failed:";
        for (const auto& issue : vr.issues) msg += "\n  " + issue;
        throw coda::ValidationError(msg);
    }
    if (cfg.mode == coda::Mode::Auto) cfg.mode = vr.suggested_mode;

    const coda::NuisanceSet nuis = coda::fit_all(e, u, cfg);
    const coda::CodaSearchResult res = coda::coda_search(e, u, nuis, cfg);

    json out;
    out["report"] = coda::to_json(res.report);
    out["rule"] = coda::to_json(res.report.rule);
    out["suggested_mode"] = to_string(vr.suggested_mode);
    out["baseline"] = {{"value", res.initial_report.value},
                       {"sigma_y2", res.initial_report.stats.sigma_y2}};

    if (common.format == "json") {
        std::cout << out.dump(2) << "\n";
    } else if (common.format == "csv") {
        const auto& r = res.report;
        std::cout << "key,value\n";
        std::cout << "mode," << to_string(cfg.mode) << "\n";
        std::cout << "value," << fmt(r.value) << "\n";
        std::cout << "variance," << fmt(r.variance) << "\n";
        std::cout << "ci_lo," << fmt(r.ci_lo) << "\n";
        std::cout << "ci_hi," << fmt(r.ci_hi) << "\n";
        std::cout << "sigma_y2," << fmt(r.stats.sigma_y2) << "\n";
        std::cout << "baseline_value," << fmt(res.initial_report.value) << "\n";
    } else {
        const auto& r = res.report;
        std::cout << "mode            " << to_string(cfg.mode) << " (suggested "
                  << to_string(vr.suggested_mode) << ")\n";
        std::cout << "value           " << fmt(r.value) << "\n";
        std::cout << "std error       " << fmt(std::sqrt(r.variance / double(r.n_e))) << "\n";
        std::cout << "ci              [" << fmt(r.ci_lo) << ", " << fmt(r.ci_hi) << "]\n";
        std::cout << "baseline value  " << fmt(res.initial_report.value) << "\n";
        std::cout << "rule            " << coda::to_json(res.report.rule).dump() << "\n";
    }
    return 0;
}

int cmd_cio_check(const CommonFlags& common, const std::string& primary_path,
                  const std::string& auxiliary_path) {
    const coda::Config cfg = common.resolve();
    const coda::PrimarySample e = coda::read_primary_csv(primary_path);
    const coda::AuxiliarySample u = coda::read_auxiliary_csv(auxiliary_path);
    const coda::ValidationReport vr = coda::validate_pair(e, u);
    if (!vr.ok) {
        std::string msg = "input validation failed:";
        for (const auto& issue : vr.issues) msg += "\n  " + issue;
        throw coda::ValidationError(msg);
    }
    const coda::Vector d = coda::cio_diagnostic(e, u, cfg);

    if (common.format == "json") {
        json out;
        out["relative_mse"] = std::vector<double>(d.data(), d.data() + d.size());
        out["suggested_mode"] = to_string(vr.suggested_mode);
        std::cout << out.dump(2) << "\n";
    } else if (common.format == "csv") {
        std::cout << "outcome,relative_mse\n";
        for (Eigen::Index k = 0; k < d.size(); ++k)
            std::cout << "m" << (k + 1) << "," << fmt(d[k]) << "\n";
    } else {
        for (Eigen::Index k = 0; k < d.size(); ++k)
            std::cout << "intermediate outcome m" << (k + 1) << ": relative mse " << fmt(d[k])
                      << "\n";
        std::cout << "suggested mode " << to_string(vr.suggested_mode) << "\n";
    }
    return 0;
}

int cmd_true_value(const CommonFlags& common, int scenario, bool het, const std::string& rule_path,
                   long draws) {
    const coda::Config cfg = common.resolve();
    const coda::ScenarioSpec spec = coda::make_scenario(scenario, het);
    coda::DecisionRule rule = spec.optimal_rule();
    if (!rule_path.empty()) {
        std::ifstream in(rule_path);
        if (!in) throw coda::ValidationError("cannot open rule file: " + rule_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& ex) {
            throw coda::ValidationError("rule file " + rule_path + ": " + ex.what());
        }
        rule = coda::rule_from_json(j);
    }
    const coda::McValue v = coda::mc_true_value(spec, rule, draws, cfg.seed == 0 ? 1 : cfg.seed);

    if (common.format == "json") {
        json out;
        out["value"] = v.value;
        out["se"] = v.se;
        out["scenario"] = scenario;
        out["rule"] = coda::to_json(rule);
        std::cout << out.dump(2) << "\n";
    } else if (common.format == "csv") {
        std::cout << "key,value\nvalue," << fmt(v.value) << "\nse," << fmt(v.se) << "\n";
    } else {
        std::cout << "scenario " << scenario << (het ? " (covariate shift)" : "") << "\n";
        std::cout << "rule  " << coda::to_json(rule).dump() << "\n";
        std::cout << "value " << fmt(v.value) << "  (mc se " << fmt(v.se) << ")\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coda: calibrated policy value estimation and search with auxiliary data"};
    app.require_subcommand(1);

    CommonFlags sim_common, fit_common, cio_common, tv_common;

    auto* sim = app.add_subcommand("simulate", "run a replication study on a built-in scenario");
    int sim_scenario = 1;
    bool sim_het = false;
    long sim_ne = 1000, sim_nu = 2000;
    int sim_reps = 100;
    long sim_truth = 100000, sim_opt_truth = 2000000;
    sim->add_option("--scenario", sim_scenario, "scenario id")->required()->check(CLI::Range(1, 5));
    sim->add_flag("--het", sim_het, "covariate shift between the samples");
    sim->add_option("--ne", sim_ne, "primary sample size")->check(CLI::PositiveNumber);
    sim->add_option("--nu", sim_nu, "auxiliary sample size")->check(CLI::PositiveNumber);
    sim->add_option("--reps", sim_reps, "replications")->check(CLI::PositiveNumber);
    sim->add_option("--truth-draws", sim_truth, "MC draws per learned-rule evaluation")
        ->check(CLI::PositiveNumber);
    sim->add_option("--opt-truth-draws", sim_opt_truth, "MC draws for the optimal value")
        ->check(CLI::PositiveNumber);
    sim_common.attach(sim, true);

    auto* fit = app.add_subcommand("fit", "estimate a calibrated rule from two CSV samples");
    std::string fit_primary, fit_auxiliary;
    fit->add_option("--primary", fit_primary, "primary sample CSV (x1..xr,a,m1..ms,y)")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--auxiliary", fit_auxiliary, "auxiliary sample CSV (x1..xr,a,m1..ms)")
        ->required()
        ->check(CLI::ExistingFile);
    fit_common.attach(fit, true);

    auto* cio = app.add_subcommand(
        "cio-check", "diagnostic for a shared intermediate-outcome model across samples");
    std::string cio_primary, cio_auxiliary;
    cio->add_option("--primary", cio_primary, "primary sample CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cio->add_option("--auxiliary", cio_auxiliary, "auxiliary sample CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cio_common.attach(cio, false);

    auto* tv = app.add_subcommand("true-value", "Monte Carlo value of a rule under a scenario");
    int tv_scenario = 1;
    bool tv_het = false;
    std::string tv_rule;
    long tv_draws = 1000000;
    tv->add_option("--scenario", tv_scenario, "scenario id")->required()->check(CLI::Range(1, 5));
    tv->add_flag("--het", tv_het, "covariate shift between the samples");
    tv->add_option("--rule", tv_rule, "rule JSON file (default: the scenario's optimal rule)")
        ->check(CLI::ExistingFile);
    tv->add_option("--draws", tv_draws, "MC draws")->check(CLI::PositiveNumber);
    tv_common.attach(tv, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(sim_common, sim_scenario, sim_het, sim_ne, sim_nu, sim_reps,
                                sim_truth, sim_opt_truth);
        if (fit->parsed()) return cmd_fit(fit_common, fit_primary, fit_auxiliary);
        if (cio->parsed()) return cmd_cio_check(cio_common, cio_primary, cio_auxiliary);
        if (tv->parsed()) return cmd_true_value(tv_common, tv_scenario, tv_het, tv_rule, tv_draws);
    } catch (const coda::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const coda::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
