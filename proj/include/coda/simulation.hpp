#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "coda/policy_search.hpp"
#include "coda/rng.hpp"
#include "coda/stats.hpp"
#include "coda/types.hpp"

namespace coda {

// One of the five benchmark data-generating processes. Intermediate outcomes
// follow M = UM(x) + a CM(x) + eps, the outcome Y = UY(x) + a CY(x) + epsY.
// Primary covariates are Uniform[-2,2]^r; the heterogeneous variant draws
// auxiliary covariates from Uniform[-1,1.5]^r instead. Primary intermediate
// noise and outcome noise are bivariate normal with standard deviations
// (sd_e, sd_y) and the stated correlation; auxiliary noise is Uniform[-1,1].
// When s > 1 the outcome noise is coupled with the FIRST intermediate
// component; the remaining components get independent normal noise (sd_extra).
struct ScenarioSpec {
    int id = 1;
    Eigen::Index r = 2, s = 1;
    bool het = false;
    BasisSpec basis;  // regression basis adequate for the scenario's mean functions

    std::function<Vector(const Vector&)> um, cm;  // R^r -> R^s
    std::function<double(const Vector&)> uy, cy;  // R^r -> R

    double sd_e = 2.0;
    double sd_y = 1.5;
    double corr = 0.7;
    double sd_extra = 2.0;

    double propensity(const Eigen::Ref<const Vector>& x) const {
        return detail::plogis(0.4 + 0.2 * x[0] - 0.2 * x[1]);
    }

    // the true optimal rule: I{x1 x2 > 0} for scenarios 1 and 3-5 (a depth-2
    // tree), I{x2 - x1 > 0} for scenario 2 (linear)
    DecisionRule optimal_rule() const {
        if (id == 2) {
            Vector beta(Eigen::Index(3) + (r - 2));
            beta.setZero();
            beta[1] = -1.0;
            beta[2] = 1.0;
            BasisSpec linear_only;
            linear_only.pairwise = false;
            return LinearRule{beta, linear_only};
        }
        PolicyTree t;
        t.nodes.clear();
        t.nodes.push_back({0, 0.0, 1, 4, 0});
        t.nodes.push_back({1, 0.0, 2, 3, 0});
        t.nodes.push_back({-1, 0.0, -1, -1, 1});
        t.nodes.push_back({-1, 0.0, -1, -1, 0});
        t.nodes.push_back({1, 0.0, 5, 6, 0});
        t.nodes.push_back({-1, 0.0, -1, -1, 0});
        t.nodes.push_back({-1, 0.0, -1, -1, 1});
        return t;
    }
};

inline ScenarioSpec make_scenario(int id, bool het = false) {
    ScenarioSpec sp;
    sp.id = id;
    sp.het = het;
    switch (id) {
        case 1:
            sp.r = 2;
            sp.s = 1;
            sp.um = [](const Vector& x) { return Vector::Constant(1, x[0] + 2.0 * x[1]); };
            sp.cm = [](const Vector& x) { return Vector::Constant(1, x[0] * x[1]); };
            sp.uy = [](const Vector& x) { return 2.0 * x[0] + x[1]; };
            sp.cy = [](const Vector& x) { return 2.0 * x[0] * x[1]; };
            break;
        case 2:
            sp.r = 2;
            sp.s = 1;
            sp.um = [](const Vector& x) { return Vector::Constant(1, x[0] + 2.0 * x[1]); };
            sp.cm = [](const Vector& x) { return Vector::Constant(1, x[0] - x[1]); };
            sp.uy = [](const Vector& x) { return 2.0 * x[0] + x[1]; };
            sp.cy = [](const Vector& x) { return 2.0 * (x[1] - x[0]); };
            break;
        case 3:
            sp.r = 10;
            sp.s = 2;
            sp.um = [](const Vector& x) {
                Vector m(2);
                m << x[0] + 2.0 * x[1], 0.0;
                return m;
            };
            sp.cm = [](const Vector& x) {
                Vector m(2);
                m << x[0] * x[1], 0.0;
                return m;
            };
            sp.uy = [](const Vector& x) { return 2.0 * x[0] + x[1]; };
            sp.cy = [](const Vector& x) { return 2.0 * x[0] * x[1]; };
            break;
        case 4:
            sp.r = 10;
            sp.s = 2;
            sp.um = [](const Vector& x) {
                Vector m(2);
                m << 0.5 * x[0] * x[0] + 2.0 * x[1], 0.0;
                return m;
            };
            sp.cm = [](const Vector& x) {
                Vector m(2);
                m << x[0] * x[1], 0.0;
                return m;
            };
            sp.uy = [](const Vector& x) { return 2.0 * x[0] + x[1]; };
            sp.cy = [](const Vector& x) { return 2.0 * x[0] * x[1]; };
            break;
        case 5:
            sp.r = 10;
            sp.s = 2;
            sp.um = [](const Vector& x) {
                Vector m(2);
                m << x[0] + 2.0 * x[1], 0.5 * x[0] * x[0] + 2.0 * x[1];
                return m;
            };
            sp.cm = [](const Vector& x) {
                Vector m(2);
                m << x[0] * x[1], x[0] * x[1];
                return m;
            };
            sp.uy = [](const Vector& x) { return 2.0 * std::cos(x[0]) + x[1]; };
            sp.cy = [](const Vector& x) { return 2.0 * x[0] * x[1]; };
            break;
        default:
            throw ValidationError("make_scenario: id must be in 1..5");
    }
    // quadratic intermediate-outcome means need the squared terms
    sp.basis.squares = (id == 4 || id == 5);
    return sp;
}

// Documented seed-splitting scheme: the master seed and replication index are
// mixed into a per-replication key, then a lane index separates independent
// uses inside one replication (0 data, 1 nuisance fitting, 2 spare,
// 3/4 truth evaluation of learned rules).
inline std::uint64_t rep_seed(std::uint64_t master, std::uint64_t rep, std::uint64_t lane) {
    std::uint64_t state = master ^ (0x9E3779B97F4A7C15ULL * (rep + 1));
    std::uint64_t key = splitmix64(state);
    state = key ^ (0xD1B54A32D192ED03ULL * (lane + 1));
    return splitmix64(state);
}

inline std::pair<PrimarySample, AuxiliarySample> generate(const ScenarioSpec& spec,
                                                          Eigen::Index n_e, Eigen::Index n_u,
                                                          std::uint64_t seed) {
    if (n_e < 1 || n_u < 1) throw ValidationError("generate: sample sizes must be positive");
    PrimarySample e;
    AuxiliarySample u;
    const Eigen::Index r = spec.r, s = spec.s;
    const double cc = std::sqrt(1.0 - spec.corr * spec.corr);

    Rng rng_e = Rng::stream(seed, 0);
    e.X.resize(n_e, r);
    e.A.resize(n_e);
    e.M.resize(n_e, s);
    e.Y.resize(n_e);
    for (Eigen::Index i = 0; i < n_e; ++i) {
        for (Eigen::Index j = 0; j < r; ++j) e.X(i, j) = rng_e.uniform(-2.0, 2.0);
        const Vector x = e.X.row(i);
        const double a = rng_e.uniform() < spec.propensity(x) ? 1.0 : 0.0;
        e.A[i] = a;
        const double z1 = rng_e.normal();
        const double z2 = rng_e.normal();
        const double eps_m1 = spec.sd_e * z1;
        const double eps_y = spec.sd_y * (spec.corr * z1 + cc * z2);
        const Vector base = spec.um(x) + a * spec.cm(x);
        e.M(i, 0) = base[0] + eps_m1;
        for (Eigen::Index k = 1; k < s; ++k) e.M(i, k) = base[k] + spec.sd_extra * rng_e.normal();
        e.Y[i] = spec.uy(x) + a * spec.cy(x) + eps_y;
    }

    Rng rng_u = Rng::stream(seed, 1);
    const double lo = spec.het ? -1.0 : -2.0;
    const double hi = spec.het ? 1.5 : 2.0;
    u.X.resize(n_u, r);
    u.A.resize(n_u);
    u.M.resize(n_u, s);
    for (Eigen::Index i = 0; i < n_u; ++i) {
        for (Eigen::Index j = 0; j < r; ++j) u.X(i, j) = rng_u.uniform(lo, hi);
        const Vector x = u.X.row(i);
        const double a = rng_u.uniform() < spec.propensity(x) ? 1.0 : 0.0;
        u.A[i] = a;
        const Vector base = spec.um(x) + a * spec.cm(x);
        for (Eigen::Index k = 0; k < s; ++k) u.M(i, k) = base[k] + rng_u.uniform(-1.0, 1.0);
    }
    return {std::move(e), std::move(u)};
}

struct McValue {
    double value = 0.0;
    double se = 0.0;
};

// True value of a rule under the primary covariate law. The mean-zero noise
// is dropped analytically, so only UY + d(x) CY is averaged.
inline McValue mc_true_value(const ScenarioSpec& spec, const DecisionRule& rule,
                             Eigen::Index n_mc = 1000000, std::uint64_t seed = 1) {
    Rng rng(seed);
    KahanSum acc, acc2;
    Vector x(spec.r);
    for (Eigen::Index i = 0; i < n_mc; ++i) {
        for (Eigen::Index j = 0; j < spec.r; ++j) x[j] = rng.uniform(-2.0, 2.0);
        const double val = spec.uy(x) + (apply_rule(rule, x) == 1 ? spec.cy(x) : 0.0);
        acc.add(val);
        acc2.add(val * val);
    }
    McValue out;
    out.value = acc.value() / double(n_mc);
    const double var = acc2.value() / double(n_mc) - out.value * out.value;
    out.se = std::sqrt(std::max(var, 0.0) / double(n_mc));
    return out;
}

struct BestTreeValue {
    double value = 0.0;
    double se = 0.0;
    PolicyTree rule;
};

// Best attainable true value within depth-L trees: exact search on one large
// noiseless reward draw, then re-evaluation on fresh draws.
inline BestTreeValue best_tree_value(const ScenarioSpec& spec, int depth,
                                     std::uint64_t seed = 1, Eigen::Index n_search = 200000,
                                     Eigen::Index n_eval = 1000000) {
    Rng rng = Rng::stream(seed, 0);
    Matrix X(n_search, spec.r);
    Matrix rewards(n_search, 2);
    Vector x(spec.r);
    for (Eigen::Index i = 0; i < n_search; ++i) {
        for (Eigen::Index j = 0; j < spec.r; ++j) x[j] = rng.uniform(-2.0, 2.0);
        X.row(i) = x;
        const double base = spec.uy(x);
        rewards(i, 0) = base;
        rewards(i, 1) = base + spec.cy(x);
    }
    const SearchResult sr = exact_tree_search(rewards, X, depth);
    BestTreeValue out;
    out.rule = std::get<PolicyTree>(sr.rule);
    const McValue mv = mc_true_value(spec, sr.rule, n_eval, rep_seed(seed, 0, 1));
    out.value = mv.value;
    out.se = mv.se;
    return out;
}

// === replication studies ===

struct CellSummary {
    std::string name;           // coda_opt, coda_learned, odr_opt, odr_learned
    double mean_true_value = 0.0;  // truth of the rule the cell evaluates
    double mean_estimate = 0.0;
    double sd_estimate = 0.0;      // NaN when reps == 1
    double mean_sigma = 0.0;       // mean plug-in standard error
    double coverage = 0.0;         // CI covering the true optimal value
    Vector mean_rho;               // empty for the baseline cells
    Matrix mean_sigma_m;
};

struct StudySummary {
    int scenario = 1;
    Mode mode = Mode::HO;
    Eigen::Index n_e = 0, n_u = 0;
    int reps = 0;
    std::uint64_t seed = 0;
    double true_value_opt = 0.0;
    double true_value_opt_se = 0.0;
    CellSummary cells[4];
    double improved_efficiency = 0.0;      // learned-rule cells, mean-sigma based
    double improved_efficiency_opt = 0.0;  // fixed-rule cells
    double improved_efficiency_sd = 0.0;   // learned-rule cells, SD-of-estimates based
    int failures = 0;
    int variance_bound_violations = 0;  // calibrated variance > sigma_y2 events
};

namespace detail {

struct RepOutcome {
    bool ok = false;
    // cells: 0 coda_opt, 1 coda_learned, 2 odr_opt, 3 odr_learned
    double est[4] = {0, 0, 0, 0};
    double sigma[4] = {0, 0, 0, 0};
    bool cover[4] = {false, false, false, false};
    double tv_coda = 0.0, tv_odr = 0.0;
    Vector rho_opt, rho_learned;
    Matrix sig_opt, sig_learned;
    int var_violations = 0;
};

inline RepOutcome run_one_rep(const ScenarioSpec& spec, Eigen::Index n_e, Eigen::Index n_u,
                              const Config& cfg, std::uint64_t master, std::uint64_t rep,
                              const DecisionRule& d_opt, double v_opt,
                              Eigen::Index truth_draws) {
    RepOutcome out;
    auto [e, u] = generate(spec, n_e, n_u, rep_seed(master, rep, 0));
    Config rcfg = cfg;
    rcfg.seed = rep_seed(master, rep, 1);

    const NuisanceSet nuis = fit_all_impl(e, u, rcfg, rcfg.mode == Mode::HE);
    const RewardTable tbl = build_rewards(e, u, nuis, rcfg);

    const CodaSearchResult cs = coda_search_table(tbl, rcfg);

    const CalibStats st_opt = stats_at(tbl, d_opt);
    const CalibrationReport rep_opt = calibrated_value(tbl, d_opt, st_opt, rcfg);
    const CalibrationReport odr_opt = baseline_report(tbl, d_opt, rcfg);

    const CalibrationReport& rep_learned = cs.report;
    const CalibrationReport& odr_learned = cs.initial_report;

    const CalibrationReport* reports[4] = {&rep_opt, &rep_learned, &odr_opt, &odr_learned};
    for (int c = 0; c < 4; ++c) {
        out.est[c] = reports[c]->value;
        out.sigma[c] = std::sqrt(reports[c]->variance / double(n_e));
        out.cover[c] = reports[c]->ci_lo <= v_opt && v_opt <= reports[c]->ci_hi;
    }
    const bool he = rcfg.mode == Mode::HE;
    out.rho_opt = he ? st_opt.rho_r : st_opt.rho;
    out.sig_opt = he ? st_opt.sigma_r : st_opt.sigma_m;
    out.rho_learned = he ? rep_learned.stats.rho_r : rep_learned.stats.rho;
    out.sig_learned = he ? rep_learned.stats.sigma_r : rep_learned.stats.sigma_m;

    out.var_violations += rep_opt.variance > rep_opt.stats.sigma_y2 + 1e-12;
    out.var_violations += rep_learned.variance > rep_learned.stats.sigma_y2 + 1e-12;

    out.tv_coda = mc_true_value(spec, cs.search.rule, truth_draws,
                                rep_seed(master, rep, 3)).value;
    out.tv_odr = mc_true_value(spec, cs.initial.rule, truth_draws,
                               rep_seed(master, rep, 4)).value;
    out.ok = true;
    return out;
}

}  // namespace detail

// Full replication study for one scenario: per replication, generate both
// samples, fit nuisances, run the calibrated and baseline searches, and
// evaluate the four method/rule cells. Replications are independent and may
// run on cfg.threads workers; aggregation is by replication index, so the
// result does not depend on scheduling.
inline StudySummary run_study(const ScenarioSpec& spec, Eigen::Index n_e, Eigen::Index n_u,
                              int reps, const Config& cfg, std::uint64_t seed,
                              Eigen::Index truth_draws = 100000,
                              Eigen::Index opt_truth_draws = 2000000) {
    if (reps < 1) throw ValidationError("run_study: reps must be >= 1");
    Config scfg = cfg;
    if (scfg.mode == Mode::Auto) scfg.mode = spec.het ? Mode::HE : Mode::HO;
    scfg.basis = spec.basis;  // the scenario dictates the adequate regression basis
    scfg.validate();

    const DecisionRule d_opt = spec.optimal_rule();
    const McValue vopt = mc_true_value(spec, d_opt, opt_truth_draws, rep_seed(seed, 0, 7));

    std::vector<detail::RepOutcome> outcomes(static_cast<std::size_t>(reps));
    const int workers = std::max(1, std::min(scfg.threads, reps));
    if (workers == 1) {
        for (int j = 0; j < reps; ++j) {
            try {
                outcomes[std::size_t(j)] =
                    detail::run_one_rep(spec, n_e, n_u, scfg, seed, std::uint64_t(j), d_opt,
                                        vopt.value, truth_draws);
            } catch (const std::exception&) {
                outcomes[std::size_t(j)].ok = false;
            }
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(std::size_t(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int j = next.fetch_add(1); j < reps; j = next.fetch_add(1)) {
                    try {
                        outcomes[std::size_t(j)] =
                            detail::run_one_rep(spec, n_e, n_u, scfg, seed, std::uint64_t(j),
                                                d_opt, vopt.value, truth_draws);
                    } catch (const std::exception&) {
                        outcomes[std::size_t(j)].ok = false;
                    }
                }
            });
        for (auto& th : pool) th.join();
    }

    StudySummary sum;
    sum.scenario = spec.id;
    sum.mode = scfg.mode;
    sum.n_e = n_e;
    sum.n_u = n_u;
    sum.reps = reps;
    sum.seed = seed;
    sum.true_value_opt = vopt.value;
    sum.true_value_opt_se = vopt.se;

    const char* names[4] = {"coda_opt", "coda_learned", "odr_opt", "odr_learned"};
    int ok_count = 0;
    for (const auto& oc : outcomes) ok_count += oc.ok;
    sum.failures = reps - ok_count;
    if (ok_count == 0) throw NumericError("run_study: every replication failed");

    for (int c = 0; c < 4; ++c) {
        CellSummary& cell = sum.cells[c];
        cell.name = names[c];
        KahanSum est, est2, sig, cov;
        for (const auto& oc : outcomes) {
            if (!oc.ok) continue;
            est.add(oc.est[c]);
            est2.add(oc.est[c] * oc.est[c]);
            sig.add(oc.sigma[c]);
            cov.add(oc.cover[c] ? 1.0 : 0.0);
        }
        cell.mean_estimate = est.value() / double(ok_count);
        const double var =
            est2.value() / double(ok_count) - cell.mean_estimate * cell.mean_estimate;
        cell.sd_estimate = ok_count > 1 ? std::sqrt(std::max(var, 0.0))
                                        : std::numeric_limits<double>::quiet_NaN();
        cell.mean_sigma = sig.value() / double(ok_count);
        cell.coverage = cov.value() / double(ok_count);
    }
    sum.cells[0].mean_true_value = vopt.value;
    sum.cells[2].mean_true_value = vopt.value;
    {
        KahanSum tvc, tvo;
        for (const auto& oc : outcomes) {
            if (!oc.ok) continue;
            tvc.add(oc.tv_coda);
            tvo.add(oc.tv_odr);
        }
        sum.cells[1].mean_true_value = tvc.value() / double(ok_count);
        sum.cells[3].mean_true_value = tvo.value() / double(ok_count);
    }

    // mean calibration statistics for the two calibrated cells
    const Eigen::Index s = spec.s;
    Vector rho_acc[2] = {Vector::Zero(s), Vector::Zero(s)};
    Matrix sig_acc[2] = {Matrix::Zero(s, s), Matrix::Zero(s, s)};
    for (const auto& oc : outcomes) {
        if (!oc.ok) continue;
        rho_acc[0] += oc.rho_opt;
        rho_acc[1] += oc.rho_learned;
        sig_acc[0] += oc.sig_opt;
        sig_acc[1] += oc.sig_learned;
        sum.variance_bound_violations += oc.var_violations;
    }
    sum.cells[0].mean_rho = rho_acc[0] / double(ok_count);
    sum.cells[1].mean_rho = rho_acc[1] / double(ok_count);
    sum.cells[0].mean_sigma_m = sig_acc[0] / double(ok_count);
    sum.cells[1].mean_sigma_m = sig_acc[1] / double(ok_count);

    sum.improved_efficiency =
        100.0 * (1.0 - sum.cells[1].mean_sigma / sum.cells[3].mean_sigma);
    sum.improved_efficiency_opt =
        100.0 * (1.0 - sum.cells[0].mean_sigma / sum.cells[2].mean_sigma);
    if (ok_count > 1)
        sum.improved_efficiency_sd =
            100.0 * (1.0 - sum.cells[1].sd_estimate / sum.cells[3].sd_estimate);
    else
        sum.improved_efficiency_sd = std::numeric_limits<double>::quiet_NaN();
    return sum;
}

namespace detail {
inline nlohmann::json cell_json(const CellSummary& c) {
    nlohmann::json j{{"name", c.name},
                     {"mean_true_value", c.mean_true_value},
                     {"mean_estimate", c.mean_estimate},
                     {"mean_sigma", c.mean_sigma},
                     {"coverage", c.coverage}};
    if (std::isnan(c.sd_estimate))
        j["sd_estimate"] = nullptr;
    else
        j["sd_estimate"] = c.sd_estimate;
    if (c.mean_rho.size() > 0) {
        j["mean_rho"] = vector_json(c.mean_rho);
        j["mean_sigma_m"] = matrix_json(c.mean_sigma_m);
    }
    return j;
}
}  // namespace detail

inline nlohmann::json to_json(const StudySummary& s) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : s.cells) cells.push_back(detail::cell_json(c));
    nlohmann::json j{{"scenario", s.scenario},
                     {"mode", to_string(s.mode)},
                     {"n_e", s.n_e},
                     {"n_u", s.n_u},
                     {"reps", s.reps},
                     {"seed", s.seed},
                     {"true_value_opt", s.true_value_opt},
                     {"true_value_opt_se", s.true_value_opt_se},
                     {"cells", cells},
                     {"improved_efficiency", s.improved_efficiency},
                     {"improved_efficiency_opt", s.improved_efficiency_opt},
                     {"failures", s.failures},
                     {"variance_bound_violations", s.variance_bound_violations}};
    if (std::isnan(s.improved_efficiency_sd))
        j["improved_efficiency_sd"] = nullptr;
    else
        j["improved_efficiency_sd"] = s.improved_efficiency_sd;
    return j;
}

// CSV table mirroring the replication-study summary rows: one statistic per
// row, one method/rule cell per column.
inline std::string to_csv(const StudySummary& s) {
    std::ostringstream os;
    os.precision(6);
    os << "statistic";
    for (const auto& c : s.cells) os << "," << c.name;
    os << "\n";
    const auto row = [&](const char* name, auto getter) {
        os << name;
        for (const auto& c : s.cells) {
            const double v = getter(c);
            os << ",";
            if (std::isnan(v))
                os << "";
            else
                os << v;
        }
        os << "\n";
    };
    row("true_value", [](const CellSummary& c) { return c.mean_true_value; });
    row("estimated_value", [](const CellSummary& c) { return c.mean_estimate; });
    row("sd_estimate", [](const CellSummary& c) { return c.sd_estimate; });
    row("mean_sigma", [](const CellSummary& c) { return c.mean_sigma; });
    row("coverage", [](const CellSummary& c) { return c.coverage; });
    os << "improved_efficiency," << s.improved_efficiency << ",,,\n";
    os << "improved_efficiency_opt," << s.improved_efficiency_opt << ",,,\n";
    return os.str();
}

}  // namespace coda
