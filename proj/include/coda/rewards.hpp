#pragma once

#include <array>

#include "coda/nuisance.hpp"
#include "coda/stats.hpp"
#include "coda/tree.hpp"
#include "coda/types.hpp"

namespace coda {

// Per-row, per-arm doubly robust reward components, precomputed once so any
// rule can be evaluated by column selection. Covariates are copied in so the
// table is self-contained for rule application.
//
// v: outcome rewards on primary rows. wE/wU: intermediate-outcome rewards on
// primary/auxiliary rows with each sample's own propensity. w1/w0/psi: joint
// rewards weighted by the sampling probability (primary-first row order);
// psi covers primary rows only.
struct RewardTable {
    Mode mode = Mode::HO;
    Eigen::Index n_e = 0, n_u = 0, s = 0;

    Matrix x_e, x_u, x_joint;

    Matrix v;                    // n_e x 2
    std::array<Matrix, 2> wE;    // each n_e x s
    std::array<Matrix, 2> wU;    // each n_u x s
    std::array<Matrix, 2> w1;    // each n x s (HE)
    std::array<Matrix, 2> w0;    // each n x s (HE)
    std::array<Matrix, 2> psi;   // each n_e x s (HE)

    Vector den_e, den_u, den_joint;  // realized-arm propensity denominators
    Vector r_hat;                    // sampling probability at the observed arm (HE)

    int clipped_propensity = 0;  // propensity predictions pinned at a clip bound
    int clipped_sampling = 0;    // sampling predictions pinned at a clip bound

    Eigen::Index n() const { return n_e + n_u; }
};

namespace detail {

inline int count_at_bounds(const Vector& p, double lo, double hi) {
    int c = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) c += (p[i] <= lo || p[i] >= hi);
    return c;
}

// den_i = A_i pi(x_i) + (1 - A_i)(1 - pi(x_i)); bounded below by the clip
inline Vector realized_denominator(const Vector& pi, const Vector& A) {
    Vector den(pi.size());
    for (Eigen::Index i = 0; i < pi.size(); ++i)
        den[i] = A[i] == 1.0 ? pi[i] : 1.0 - pi[i];
    return den;
}

}  // namespace detail

inline RewardTable build_rewards(const PrimarySample& e, const AuxiliarySample& u,
                                 const NuisanceSet& nuis, const Config& cfg) {
    if (cfg.mode == Mode::Auto)
        throw ValidationError("build_rewards: mode must be resolved to HO or HE");

    RewardTable tbl;
    tbl.mode = cfg.mode;
    tbl.n_e = e.n();
    tbl.n_u = u.n();
    tbl.s = e.s();
    tbl.x_e = e.X;
    tbl.x_u = u.X;

    // outcome rewards on the primary sample
    const Vector pi_e = nuis.pi_e.predict(e.X);
    tbl.clipped_propensity += detail::count_at_bounds(pi_e, cfg.clip_lo, cfg.clip_hi);
    tbl.den_e = detail::realized_denominator(pi_e, e.A);
    const Matrix mu[2] = {nuis.mu_e.predict(e.X, 0), nuis.mu_e.predict(e.X, 1)};
    const Matrix th_e[2] = {nuis.theta.predict(e.X, 0), nuis.theta.predict(e.X, 1)};
    tbl.v.resize(e.n(), 2);
    tbl.wE[0].resize(e.n(), e.s());
    tbl.wE[1].resize(e.n(), e.s());
    for (Eigen::Index i = 0; i < e.n(); ++i) {
        const int ai = int(e.A[i]);
        for (int a = 0; a < 2; ++a) {
            const double m = mu[a](i, 0);
            tbl.v(i, a) = a == ai ? (e.Y[i] - m) / tbl.den_e[i] + m : m;
            for (Eigen::Index k = 0; k < e.s(); ++k) {
                const double t = th_e[a](i, k);
                tbl.wE[a](i, k) = a == ai ? (e.M(i, k) - t) / tbl.den_e[i] + t : t;
            }
        }
    }

    // intermediate-outcome rewards on the auxiliary sample
    const Vector pi_u = nuis.pi_u.predict(u.X);
    tbl.clipped_propensity += detail::count_at_bounds(pi_u, cfg.clip_lo, cfg.clip_hi);
    tbl.den_u = detail::realized_denominator(pi_u, u.A);
    const Matrix th_u[2] = {nuis.theta.predict(u.X, 0), nuis.theta.predict(u.X, 1)};
    tbl.wU[0].resize(u.n(), u.s());
    tbl.wU[1].resize(u.n(), u.s());
    for (Eigen::Index i = 0; i < u.n(); ++i) {
        const int ai = int(u.A[i]);
        for (int a = 0; a < 2; ++a)
            for (Eigen::Index k = 0; k < u.s(); ++k) {
                const double t = th_u[a](i, k);
                tbl.wU[a](i, k) = a == ai ? (u.M(i, k) - t) / tbl.den_u[i] + t : t;
            }
    }

    if (cfg.mode == Mode::HE) {
        const JointSample j = make_joint(e, u);
        tbl.x_joint = j.X;
        const Vector pi_j = nuis.pi_joint.predict(j.X);
        tbl.clipped_propensity += detail::count_at_bounds(pi_j, cfg.clip_lo, cfg.clip_hi);
        tbl.den_joint = detail::realized_denominator(pi_j, j.A);
        tbl.r_hat = nuis.sampling.predict(j.X, j.A, j.M);
        tbl.clipped_sampling += detail::count_at_bounds(tbl.r_hat, cfg.clip_lo, cfg.clip_hi);

        const Matrix th_j[2] = {nuis.theta.predict(j.X, 0), nuis.theta.predict(j.X, 1)};
        const Eigen::Index n = j.n();
        for (int a = 0; a < 2; ++a) {
            tbl.w1[a].resize(n, j.s());
            tbl.w0[a].resize(n, j.s());
            tbl.psi[a].resize(e.n(), e.s());
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const int ai = int(j.A[i]);
            const double ri = tbl.r_hat[i];
            const double g1 = j.R[i] / ri;
            const double g0 = (1.0 - j.R[i]) / (1.0 - ri);
            for (int a = 0; a < 2; ++a)
                for (Eigen::Index k = 0; k < j.s(); ++k) {
                    const double t = th_j[a](i, k);
                    if (a == ai) {
                        const double core = (j.M(i, k) - t) / tbl.den_joint[i];
                        tbl.w1[a](i, k) = g1 * core + t;
                        tbl.w0[a](i, k) = g0 * core + t;
                        if (i < e.n()) tbl.psi[a](i, k) = core / ri;
                    } else {
                        tbl.w1[a](i, k) = t;
                        tbl.w0[a](i, k) = t;
                        if (i < e.n()) tbl.psi[a](i, k) = 0.0;
                    }
                }
        }
    }

    if (!detail::all_finite(tbl.v)) throw NumericError("build_rewards: non-finite rewards");
    return tbl;
}

// === aggregate value estimators ===

inline double value_VE(const RewardTable& tbl, const DecisionRule& rule) {
    const std::vector<int> actions = apply_rule(rule, tbl.x_e);
    KahanSum acc;
    for (Eigen::Index i = 0; i < tbl.n_e; ++i) acc.add(tbl.v(i, actions[std::size_t(i)]));
    return acc.value() / double(tbl.n_e);
}

namespace detail {
inline Vector mean_selected(const std::array<Matrix, 2>& w, const Matrix& X,
                            const DecisionRule& rule, double denom) {
    const Eigen::Index s = w[0].cols();
    std::vector<KahanSum> acc(static_cast<std::size_t>(s));
    const std::vector<int> actions = apply_rule(rule, X);
    for (Eigen::Index i = 0; i < w[0].rows(); ++i) {
        const int a = actions[std::size_t(i)];
        for (Eigen::Index k = 0; k < s; ++k) acc[std::size_t(k)].add(w[a](i, k));
    }
    Vector out(s);
    for (Eigen::Index k = 0; k < s; ++k) out[k] = acc[std::size_t(k)].value() / denom;
    return out;
}
}  // namespace detail

inline Vector value_WE(const RewardTable& tbl, const DecisionRule& rule) {
    return detail::mean_selected(tbl.wE, tbl.x_e, rule, double(tbl.n_e));
}

inline Vector value_WU(const RewardTable& tbl, const DecisionRule& rule) {
    return detail::mean_selected(tbl.wU, tbl.x_u, rule, double(tbl.n_u));
}

inline Vector value_W1(const RewardTable& tbl, const DecisionRule& rule) {
    return detail::mean_selected(tbl.w1, tbl.x_joint, rule, double(tbl.n()));
}

inline Vector value_W0(const RewardTable& tbl, const DecisionRule& rule) {
    return detail::mean_selected(tbl.w0, tbl.x_joint, rule, double(tbl.n()));
}

// Auxiliary-row part of W1 - W0 at a fixed arm, divided by the joint size n;
// the offset term of the heterogeneous calibrated reward.
inline Vector delta_hat(const RewardTable& tbl, int a) {
    if (a != 0 && a != 1) throw ValidationError("delta_hat: arm must be 0 or 1");
    const Eigen::Index s = tbl.w1[0].cols();
    std::vector<KahanSum> acc(static_cast<std::size_t>(s));
    for (Eigen::Index i = tbl.n_e; i < tbl.n(); ++i)
        for (Eigen::Index k = 0; k < s; ++k)
            acc[std::size_t(k)].add(tbl.w1[a](i, k) - tbl.w0[a](i, k));
    Vector out(s);
    for (Eigen::Index k = 0; k < s; ++k) out[k] = acc[std::size_t(k)].value() / double(tbl.n());
    return out;
}

}  // namespace coda
