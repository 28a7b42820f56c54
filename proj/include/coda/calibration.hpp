#pragma once

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "coda/rewards.hpp"
#include "coda/stats.hpp"
#include "coda/tree.hpp"
#include "coda/types.hpp"

namespace coda {

// Calibration statistics at a fixed rule. For HO: sigma_y2, rho, SigmaM; for
// HE: sigma_y2, rhoR, SigmaR. All sample moments divide by the row count, and
// SigmaR is an uncentered second moment (the summand is asymptotically mean
// zero; centering would be a different estimator).
struct CalibStats {
    Mode mode = Mode::HO;
    double sigma_y2 = 0.0;
    Vector rho;      // s
    Matrix sigma_m;  // s x s
    Vector rho_r;    // s
    Matrix sigma_r;  // s x s
    double ve = 0.0;       // uncalibrated primary-sample value at the rule
    Vector we, wu, w1, w0; // aggregate intermediate values at the rule
    DecisionRule rule = PolicyTree::leaf(0);
};

struct CalibrationDiagnostics {
    bool ridge_applied = false;
    bool variance_clamped = false;
    bool baseline = false;  // true when calibration was skipped (rho forced 0)
    int clipped_propensity = 0;
    int clipped_sampling = 0;
};

struct CalibrationReport {
    double value = 0.0;
    double variance = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    CalibStats stats;
    DecisionRule rule = PolicyTree::leaf(0);
    Eigen::Index n_e = 0, n_u = 0;
    double alpha = 0.05;
    CalibrationDiagnostics diagnostics;
};

inline CalibStats calib_stats_ho(const RewardTable& tbl, const DecisionRule& rule, double t) {
    if (tbl.s < 1) throw ValidationError("calib_stats_ho: no intermediate outcomes");
    const Eigen::Index ne = tbl.n_e, nu = tbl.n_u, s = tbl.s;

    CalibStats st;
    st.mode = Mode::HO;
    st.rule = rule;

    const std::vector<int> ae = apply_rule(rule, tbl.x_e);
    const std::vector<int> au = apply_rule(rule, tbl.x_u);

    Vector vd(ne);
    Matrix wEd(ne, s);
    for (Eigen::Index i = 0; i < ne; ++i) {
        vd[i] = tbl.v(i, ae[std::size_t(i)]);
        wEd.row(i) = tbl.wE[std::size_t(ae[std::size_t(i)])].row(i);
    }
    Matrix wUd(nu, s);
    for (Eigen::Index i = 0; i < nu; ++i)
        wUd.row(i) = tbl.wU[std::size_t(au[std::size_t(i)])].row(i);

    st.ve = vd.mean();
    st.we = wEd.colwise().mean();
    st.wu = wUd.colwise().mean();

    const Vector vc = vd.array() - st.ve;
    const Matrix wEc = wEd.rowwise() - st.we.transpose();
    const Matrix wUc = wUd.rowwise() - st.wu.transpose();

    st.sigma_y2 = vc.squaredNorm() / double(ne);
    st.rho = wEc.transpose() * vc / double(ne);
    const Matrix sig_e = wEc.transpose() * wEc / double(ne);
    const Matrix sig_u = wUc.transpose() * wUc / double(nu);
    st.sigma_m = sig_e + t * sig_u;
    return st;
}

inline CalibStats calib_stats_he(const RewardTable& tbl, const DecisionRule& rule,
                                 Eigen::Index n, Eigen::Index n_e) {
    if (tbl.mode != Mode::HE)
        throw ValidationError("calib_stats_he: table was built without joint rewards");
    if (tbl.s < 1) throw ValidationError("calib_stats_he: no intermediate outcomes");
    if (n != tbl.n() || n_e != tbl.n_e)
        throw ValidationError("calib_stats_he: size mismatch with table");
    const Eigen::Index s = tbl.s;

    CalibStats st;
    st.mode = Mode::HE;
    st.rule = rule;

    const std::vector<int> aj = apply_rule(rule, tbl.x_joint);

    Vector vd(n_e);
    Matrix psid(n_e, s);
    for (Eigen::Index i = 0; i < n_e; ++i) {
        vd[i] = tbl.v(i, aj[std::size_t(i)]);
        psid.row(i) = tbl.psi[std::size_t(aj[std::size_t(i)])].row(i);
    }
    st.ve = vd.mean();
    const Vector vc = vd.array() - st.ve;
    st.sigma_y2 = vc.squaredNorm() / double(n_e);

    const double scale = std::sqrt(double(n_e) / double(n));
    st.rho_r = psid.transpose() * vc * scale / double(n_e);

    Matrix diff(n, s);
    std::vector<KahanSum> s1(static_cast<std::size_t>(s)), s0(static_cast<std::size_t>(s));
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t a = std::size_t(aj[std::size_t(i)]);
        diff.row(i) = tbl.w1[a].row(i) - tbl.w0[a].row(i);
        for (Eigen::Index k = 0; k < s; ++k) {
            s1[std::size_t(k)].add(tbl.w1[a](i, k));
            s0[std::size_t(k)].add(tbl.w0[a](i, k));
        }
    }
    st.sigma_r = diff.transpose() * diff / double(n);
    st.w1.resize(s);
    st.w0.resize(s);
    for (Eigen::Index k = 0; k < s; ++k) {
        st.w1[k] = s1[std::size_t(k)].value() / double(n);
        st.w0[k] = s0[std::size_t(k)].value() / double(n);
    }
    return st;
}

namespace detail {

// Symmetric solve with a condition-number guard: when cond exceeds 1e12 (or
// the matrix is not positive definite) a ridge of eps * trace / s is added
// and the flag set.
inline Vector guarded_solve(Matrix sigma, const Vector& b, double ridge_eps, bool& ridged) {
    const Eigen::Index s = sigma.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmin > 0.0) || lmax / lmin > 1e12) {
        sigma.diagonal().array() += ridge_eps * sigma.trace() / double(s);
        ridged = true;
    }
    Vector x = sigma.ldlt().solve(b);
    if (!x.allFinite()) throw NumericError("calibration: covariance solve failed");
    return x;
}

}  // namespace detail

inline CalibrationReport calibrated_value(const RewardTable& tbl, const DecisionRule& rule,
                                          const CalibStats& stats, const Config& cfg) {
    if (stats.mode != tbl.mode)
        throw ValidationError("calibrated_value: stats mode does not match table mode");
    if (!std::isfinite(stats.sigma_y2)) throw NumericError("calibrated_value: non-finite stats");

    CalibrationReport rep;
    rep.stats = stats;
    rep.rule = rule;
    rep.n_e = tbl.n_e;
    rep.n_u = tbl.n_u;
    rep.alpha = cfg.alpha;
    rep.diagnostics.clipped_propensity = tbl.clipped_propensity;
    rep.diagnostics.clipped_sampling = tbl.clipped_sampling;

    const double ve = value_VE(tbl, rule);
    double correction = 0.0, quad = 0.0;
    if (stats.mode == Mode::HO) {
        const Vector gap = value_WE(tbl, rule) - value_WU(tbl, rule);
        const Vector sol = detail::guarded_solve(stats.sigma_m, stats.rho, cfg.ridge_eps,
                                                 rep.diagnostics.ridge_applied);
        correction = sol.dot(gap);
        quad = sol.dot(stats.rho);
    } else {
        const Vector gap = value_W1(tbl, rule) - value_W0(tbl, rule);
        const Vector sol = detail::guarded_solve(stats.sigma_r, stats.rho_r, cfg.ridge_eps,
                                                 rep.diagnostics.ridge_applied);
        const double scale = std::sqrt(double(tbl.n()) / double(tbl.n_e));
        correction = scale * sol.dot(gap);
        quad = sol.dot(stats.rho_r);
    }
    rep.value = ve - correction;
    rep.variance = stats.sigma_y2 - quad;
    if (rep.variance < 0.0) {
        rep.variance = 0.0;
        rep.diagnostics.variance_clamped = true;
    }
    const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
    const double half = z * std::sqrt(rep.variance / double(tbl.n_e));
    rep.ci_lo = rep.value - half;
    rep.ci_hi = rep.value + half;
    if (!std::isfinite(rep.value)) throw NumericError("calibrated_value: non-finite value");
    return rep;
}

// Uncalibrated doubly robust report: value = V_E(rule), variance = sigma_y2.
// Identical to calibrated_value with rho forced to zero.
inline CalibrationReport baseline_report(const RewardTable& tbl, const DecisionRule& rule,
                                         const Config& cfg) {
    CalibStats st;
    st.mode = tbl.mode;
    st.rule = rule;
    const std::vector<int> ae = apply_rule(rule, tbl.x_e);
    Vector vd(tbl.n_e);
    for (Eigen::Index i = 0; i < tbl.n_e; ++i) vd[i] = tbl.v(i, ae[std::size_t(i)]);
    st.ve = vd.mean();
    st.sigma_y2 = (vd.array() - st.ve).matrix().squaredNorm() / double(tbl.n_e);
    st.rho = Vector::Zero(tbl.s);
    st.sigma_m = Matrix::Zero(tbl.s, tbl.s);
    st.rho_r = Vector::Zero(tbl.s);
    st.sigma_r = Matrix::Zero(tbl.s, tbl.s);

    CalibrationReport rep;
    rep.stats = st;
    rep.rule = rule;
    rep.n_e = tbl.n_e;
    rep.n_u = tbl.n_u;
    rep.alpha = cfg.alpha;
    rep.value = st.ve;
    rep.variance = st.sigma_y2;
    rep.diagnostics.baseline = true;
    rep.diagnostics.clipped_propensity = tbl.clipped_propensity;
    rep.diagnostics.clipped_sampling = tbl.clipped_sampling;
    const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
    const double half = z * std::sqrt(rep.variance / double(tbl.n_e));
    rep.ci_lo = rep.value - half;
    rep.ci_hi = rep.value + half;
    return rep;
}

// Relative reduction of the calibrated standard deviation against a baseline,
// in percent.
inline double improved_efficiency(double coda_sd, double baseline_sd) {
    if (!(coda_sd > 0.0) || !(baseline_sd > 0.0))
        throw ValidationError("improved_efficiency: standard deviations must be positive");
    return 100.0 * (baseline_sd - coda_sd) / baseline_sd;
}

namespace detail {
inline nlohmann::json vector_json(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}
}  // namespace detail

// Fixed-name JSON schema; in HE mode the rho / sigma_m slots carry the
// projected statistics rho_R / Sigma_R.
inline nlohmann::json to_json(const CalibrationReport& rep) {
    const bool he = rep.stats.mode == Mode::HE;
    return nlohmann::json{
        {"value", rep.value},
        {"variance", rep.variance},
        {"ci_lo", rep.ci_lo},
        {"ci_hi", rep.ci_hi},
        {"sigma_y2", rep.stats.sigma_y2},
        {"rho", detail::vector_json(he ? rep.stats.rho_r : rep.stats.rho)},
        {"sigma_m", detail::matrix_json(he ? rep.stats.sigma_r : rep.stats.sigma_m)},
        {"mode", to_string(rep.stats.mode)},
        {"diagnostics",
         {{"ridge_applied", rep.diagnostics.ridge_applied},
          {"variance_clamped", rep.diagnostics.variance_clamped},
          {"baseline", rep.diagnostics.baseline},
          {"clipped_propensity", rep.diagnostics.clipped_propensity},
          {"clipped_sampling", rep.diagnostics.clipped_sampling},
          {"n_e", rep.n_e},
          {"n_u", rep.n_u},
          {"alpha", rep.alpha}}}};
}

}  // namespace coda
