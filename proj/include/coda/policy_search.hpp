#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "coda/calibration.hpp"
#include "coda/nuisance.hpp"
#include "coda/rewards.hpp"
#include "coda/rng.hpp"
#include "coda/tree_search.hpp"
#include "coda/types.hpp"

namespace coda {

struct CodaSearchResult {
    SearchResult search;               // final calibrated rule
    CalibrationReport report;          // calibrated report, stats recomputed at the final rule
    SearchResult initial;              // uncalibrated first-pass rule (the baseline rule)
    CalibrationReport initial_report;  // uncalibrated report at the initial rule
};

namespace detail {

// Per-row, per-arm calibrated rewards with stats frozen at a previous rule.
// HO: v - c'(wE - WU(a)) with c = SigmaM^{-1} rho and WU(a) the per-arm
// auxiliary average. HE: v - cR'((N_E/n)(w1 - w0) + Delta(a)) with
// cR = sqrt(n/N_E) SigmaR^{-1} rhoR; rows are the primary rows throughout.
inline Matrix calibrated_rewards(const RewardTable& tbl, const CalibStats& stats,
                                 const Config& cfg, CalibrationDiagnostics& diag) {
    Matrix cal(tbl.n_e, 2);
    if (stats.mode == Mode::HO) {
        const Vector c = guarded_solve(stats.sigma_m, stats.rho, cfg.ridge_eps,
                                       diag.ridge_applied);
        Vector wu_arm[2];
        for (int a = 0; a < 2; ++a) wu_arm[a] = tbl.wU[std::size_t(a)].colwise().mean();
        for (int a = 0; a < 2; ++a) {
            const double off = c.dot(wu_arm[a]);
            cal.col(a) = tbl.v.col(a) - (tbl.wE[std::size_t(a)] * c).array().matrix() +
                         Vector::Constant(tbl.n_e, off);
        }
    } else {
        const double scale = std::sqrt(double(tbl.n()) / double(tbl.n_e));
        const Vector cr = scale * guarded_solve(stats.sigma_r, stats.rho_r, cfg.ridge_eps,
                                                diag.ridge_applied);
        const double frac = double(tbl.n_e) / double(tbl.n());
        for (int a = 0; a < 2; ++a) {
            const Vector da = delta_hat(tbl, a);
            const double off = cr.dot(da);
            const Matrix diff =
                tbl.w1[std::size_t(a)].topRows(tbl.n_e) - tbl.w0[std::size_t(a)].topRows(tbl.n_e);
            cal.col(a) = tbl.v.col(a) - frac * (diff * cr) - Vector::Constant(tbl.n_e, off);
        }
    }
    return cal;
}

inline CalibStats stats_at(const RewardTable& tbl, const DecisionRule& rule) {
    if (tbl.mode == Mode::HO)
        return calib_stats_ho(tbl, rule, double(tbl.n_e) / double(tbl.n_u));
    return calib_stats_he(tbl, rule, tbl.n(), tbl.n_e);
}

}  // namespace detail

// Iterative calibrated tree search on a prebuilt reward table. Step 1 finds
// the uncalibrated rule; each iteration freezes the calibration statistics at
// the current rule, rebuilds per-arm calibrated rewards, and re-searches.
// Stops on exact tree equality of consecutive iterates or after
// cfg.max_iterations. max_iterations = 0 returns the uncalibrated baseline.
inline CodaSearchResult coda_search_table(const RewardTable& tbl, const Config& cfg) {
    CodaSearchResult out;
    out.initial = exact_tree_search(tbl.v, tbl.x_e, cfg.depth);
    out.initial.iterations_used = 0;
    out.initial_report = baseline_report(tbl, out.initial.rule, cfg);

    if (cfg.max_iterations == 0) {
        out.search = out.initial;
        out.report = out.initial_report;
        return out;
    }

    DecisionRule current = out.initial.rule;
    SearchResult last = out.initial;
    std::vector<double> trace = {out.initial.objective};
    bool converged = false;
    int used = 0;
    CalibrationDiagnostics search_diag;

    for (int k = 1; k <= cfg.max_iterations; ++k) {
        const CalibStats frozen = detail::stats_at(tbl, current);
        const Matrix cal = detail::calibrated_rewards(tbl, frozen, cfg, search_diag);
        SearchResult next = exact_tree_search(cal, tbl.x_e, cfg.depth);
        used = k;
        trace.push_back(next.objective);
        const bool same = next.rule == current;
        current = next.rule;
        last = next;
        if (same) {
            converged = true;
            break;
        }
    }

    out.search = last;
    out.search.iterations_used = used;
    out.search.converged = converged;
    out.search.trace = trace;

    const CalibStats final_stats = detail::stats_at(tbl, current);
    out.report = calibrated_value(tbl, current, final_stats, cfg);
    out.report.diagnostics.ridge_applied =
        out.report.diagnostics.ridge_applied || search_diag.ridge_applied;
    return out;
}

inline CodaSearchResult coda_search(const PrimarySample& e, const AuxiliarySample& u,
                                    const NuisanceSet& nuis, const Config& cfg) {
    return coda_search_table(build_rewards(e, u, nuis, cfg), cfg);
}

namespace detail {

// Nelder-Mead minimization; f is evaluated on unnormalized points.
inline Vector nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                          double step, int max_iter) {
    const Eigen::Index d = start.size();
    std::vector<Vector> pts(std::size_t(d + 1), start);
    std::vector<double> val(std::size_t(d + 1));
    for (Eigen::Index j = 0; j < d; ++j) pts[std::size_t(j + 1)][j] += step;
    for (std::size_t j = 0; j < pts.size(); ++j) val[j] = f(pts[j]);

    for (int it = 0; it < max_iter; ++it) {
        // order best..worst
        std::vector<std::size_t> idx(pts.size());
        std::iota(idx.begin(), idx.end(), std::size_t(0));
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return val[a] != val[b] ? val[a] < val[b] : a < b;
        });
        std::vector<Vector> p2(pts.size());
        std::vector<double> v2(pts.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            p2[j] = pts[idx[j]];
            v2[j] = val[idx[j]];
        }
        pts.swap(p2);
        val.swap(v2);

        double spread = 0.0;
        for (std::size_t j = 1; j < pts.size(); ++j)
            spread = std::max(spread, (pts[j] - pts[0]).cwiseAbs().maxCoeff());
        if (spread < 1e-7) break;

        Vector centroid = Vector::Zero(d);
        for (std::size_t j = 0; j + 1 < pts.size(); ++j) centroid += pts[j];
        centroid /= double(d);

        const Vector& worst = pts.back();
        const Vector refl = centroid + (centroid - worst);
        const double fr = f(refl);
        if (fr < val[0]) {
            const Vector exp_pt = centroid + 2.0 * (centroid - worst);
            const double fe = f(exp_pt);
            if (fe < fr) {
                pts.back() = exp_pt;
                val.back() = fe;
            } else {
                pts.back() = refl;
                val.back() = fr;
            }
        } else if (fr < val[val.size() - 2]) {
            pts.back() = refl;
            val.back() = fr;
        } else {
            const Vector contr = centroid + 0.5 * ((fr < val.back() ? refl : worst) - centroid);
            const double fc = f(contr);
            if (fc < std::min(fr, val.back())) {
                pts.back() = contr;
                val.back() = fc;
            } else {
                for (std::size_t j = 1; j < pts.size(); ++j) {
                    pts[j] = pts[0] + 0.5 * (pts[j] - pts[0]);
                    val[j] = f(pts[j]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < val.size(); ++j)
        if (val[j] < val[best]) best = j;
    return pts[best];
}

}  // namespace detail

// Linear-rule analog of the iterative search: multi-start Nelder-Mead over
// unit-norm coefficient vectors (the rule is scale invariant), first on the
// uncalibrated rewards, then on calibrated rewards with frozen statistics,
// iterating until the coefficient change drops below cfg.param_tol.
inline CodaSearchResult parametric_search(const PrimarySample& e, const AuxiliarySample& u,
                                          const NuisanceSet& nuis, const BasisSpec& basis,
                                          const Config& cfg, int n_starts = 50) {
    const RewardTable tbl = build_rewards(e, u, nuis, cfg);
    const Matrix F = expand_basis(basis, tbl.x_e);
    const Eigen::Index q1 = F.cols() + 1;
    if (q1 > tbl.n_e) throw ValidationError("parametric_search: more coefficients than rows");

    Matrix Phi(tbl.n_e, q1);
    Phi.col(0).setOnes();
    Phi.rightCols(F.cols()) = F;

    // mean selected reward under I{Phi beta > 0}; maximized via NM on -value
    const auto objective = [&](const Matrix& rew, const Vector& beta) {
        const Vector eta = Phi * beta;
        KahanSum acc;
        for (Eigen::Index i = 0; i < tbl.n_e; ++i) acc.add(rew(i, eta[i] > 0.0 ? 1 : 0));
        return acc.value() / double(tbl.n_e);
    };

    Rng rng(cfg.seed);
    const auto maximize = [&](const Matrix& rew, const Vector* warm) {
        Vector best;
        double best_val = -std::numeric_limits<double>::infinity();
        const auto neg = [&](const Vector& b) {
            const double nrm = b.norm();
            if (nrm == 0.0) return std::numeric_limits<double>::infinity();
            return -objective(rew, b / nrm);
        };
        const int extra = warm ? 1 : 0;
        for (int st = 0; st < n_starts + extra; ++st) {
            Vector b0(q1);
            if (warm && st == 0) {
                b0 = *warm;
            } else {
                for (Eigen::Index j = 0; j < q1; ++j) b0[j] = rng.normal();
                if (b0.norm() == 0.0) b0[0] = 1.0;
                b0 /= b0.norm();
            }
            const Vector b = detail::nelder_mead(neg, b0, 0.25, 200);
            const double v = -neg(b);
            if (v > best_val) {
                best_val = v;
                best = b / b.norm();
            }
        }
        return std::make_pair(best, best_val);
    };

    CodaSearchResult out;
    auto [beta_e, val_e] = maximize(tbl.v, nullptr);
    out.initial.rule = LinearRule{beta_e, basis};
    out.initial.objective = val_e * double(tbl.n_e);
    out.initial.trace = {out.initial.objective};
    out.initial_report = baseline_report(tbl, out.initial.rule, cfg);

    if (cfg.max_iterations == 0) {
        out.search = out.initial;
        out.report = out.initial_report;
        return out;
    }

    Vector beta = beta_e;
    std::vector<double> trace = {out.initial.objective};
    bool converged = false;
    int used = 0;
    CalibrationDiagnostics search_diag;
    double last_obj = out.initial.objective;

    for (int k = 1; k <= cfg.max_iterations; ++k) {
        const DecisionRule current = LinearRule{beta, basis};
        const CalibStats frozen = detail::stats_at(tbl, current);
        const Matrix cal = detail::calibrated_rewards(tbl, frozen, cfg, search_diag);
        auto [beta_new, val_new] = maximize(cal, &beta);
        used = k;
        last_obj = val_new * double(tbl.n_e);
        trace.push_back(last_obj);
        const double change = (beta_new - beta).norm();
        beta = beta_new;
        if (change < cfg.param_tol) {
            converged = true;
            break;
        }
    }

    out.search.rule = LinearRule{beta, basis};
    out.search.objective = last_obj;
    out.search.iterations_used = used;
    out.search.converged = converged;
    out.search.trace = trace;
    const CalibStats final_stats = detail::stats_at(tbl, LinearRule{beta, basis});
    out.report = calibrated_value(tbl, LinearRule{beta, basis}, final_stats, cfg);
    out.report.diagnostics.ridge_applied =
        out.report.diagnostics.ridge_applied || search_diag.ridge_applied;
    return out;
}

}  // namespace coda
