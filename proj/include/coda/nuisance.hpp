#pragma once

#include <limits>
#include <string>
#include <vector>

#include "coda/basis.hpp"
#include "coda/forest.hpp"
#include "coda/linear_model.hpp"
#include "coda/logistic.hpp"
#include "coda/stats.hpp"
#include "coda/types.hpp"

namespace coda {

// Feature block for the sampling-probability model: the stacked (x, a, m)
// vector expanded per the basis spec. The a*a terms are dropped because a is
// binary (a^2 = a would duplicate the linear column).
inline Matrix sampling_features(const BasisSpec& spec, const Matrix& X, const Vector& A,
                                const Matrix& M) {
    const Eigen::Index n = X.rows(), r = X.cols(), s = M.cols();
    const Eigen::Index p = r + 1 + s;
    Matrix Z(n, p);
    Z.leftCols(r) = X;
    Z.col(r) = A;
    Z.rightCols(s) = M;

    Eigen::Index width = 0;
    if (spec.linear) width += p;
    if (spec.pairwise) width += p * (p - 1) / 2;
    if (spec.squares) width += p - 1;  // skip a^2
    Matrix F(n, width);
    Eigen::Index c = 0;
    if (spec.linear) {
        F.leftCols(p) = Z;
        c += p;
    }
    if (spec.pairwise)
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index k = j + 1; k < p; ++k) F.col(c++) = Z.col(j).cwiseProduct(Z.col(k));
    if (spec.squares)
        for (Eigen::Index j = 0; j < p; ++j) {
            if (j == r) continue;
            F.col(c++) = Z.col(j).cwiseProduct(Z.col(j));
        }
    return F;
}

// Posterior sampling probability r(x, a, m) = P(R=1 | x, a, m) behind a
// pluggable estimator: in-sample random forest (default), logistic regression
// on a basis expansion, or a frozen constant (the homogeneous reduction).
struct SamplingModel {
    SamplingModelKind kind = SamplingModelKind::Forest;
    ForestClassifier forest;
    BinaryModel logistic;
    double frozen = 0.5;
    double clip_lo = 0.01;
    double clip_hi = 0.99;
    BasisSpec basis;

    // x, a, m from one row of the joint sample
    double predict1(const Eigen::Ref<const Vector>& x, double a,
                    const Eigen::Ref<const Vector>& m) const {
        switch (kind) {
            case SamplingModelKind::Frozen:
                return std::clamp(frozen, clip_lo, clip_hi);
            case SamplingModelKind::Forest: {
                Vector z(x.size() + 1 + m.size());
                z << x, a, m;
                return std::clamp(forest.predict1(z), clip_lo, clip_hi);
            }
            case SamplingModelKind::Logistic: {
                Matrix X(1, x.size());
                X.row(0) = x;
                Vector A(1);
                A[0] = a;
                Matrix M(1, m.size());
                M.row(0) = m;
                const Matrix f = sampling_features(basis, X, A, M);
                return logistic.predict1(f.row(0));
            }
        }
        throw NumericError("SamplingModel: unknown kind");
    }

    Vector predict(const Matrix& X, const Vector& A, const Matrix& M) const {
        const Eigen::Index n = X.rows();
        Vector out(n);
        switch (kind) {
            case SamplingModelKind::Frozen:
                out.setConstant(std::clamp(frozen, clip_lo, clip_hi));
                break;
            case SamplingModelKind::Forest: {
                Matrix Z(n, X.cols() + 1 + M.cols());
                Z.leftCols(X.cols()) = X;
                Z.col(X.cols()) = A;
                Z.rightCols(M.cols()) = M;
                for (Eigen::Index i = 0; i < n; ++i)
                    out[i] = std::clamp(forest.predict1(Z.row(i)), clip_lo, clip_hi);
                break;
            }
            case SamplingModelKind::Logistic: {
                const Matrix F = sampling_features(basis, X, A, M);
                out = logistic.predict(F);
                break;
            }
        }
        return out;
    }
};

// Everything build_rewards needs: propensities for each sample and the joint
// stack, the outcome and intermediate-outcome mean models, and the sampling
// probability model. theta is fitted on the pooled primary+auxiliary rows.
struct NuisanceSet {
    BinaryModel pi_e, pi_u, pi_joint;
    MeanModel mu_e;     // outcome model, 1-dim response
    MeanModel theta;    // intermediate-outcome model, s-dim response
    SamplingModel sampling;

    struct Provenance {
        Eigen::Index n_e = 0;
        Eigen::Index n_u = 0;
        Eigen::Index theta_rows = 0;
        BasisSpec basis;
        SamplingModelKind sampling_model = SamplingModelKind::Forest;
        bool ridge_fallback = false;
        bool separation_warning = false;
    } provenance;
};

namespace detail {

inline SamplingModel fit_sampling(const JointSample& j, const Config& cfg) {
    SamplingModel sm;
    sm.kind = cfg.sampling_model;
    sm.clip_lo = cfg.clip_lo;
    sm.clip_hi = cfg.clip_hi;
    sm.basis = cfg.basis;
    switch (cfg.sampling_model) {
        case SamplingModelKind::Frozen:
            sm.frozen = cfg.frozen_r >= 0.0 ? cfg.frozen_r : double(j.n_e) / double(j.n());
            break;
        case SamplingModelKind::Forest: {
            Matrix Z(j.n(), j.X.cols() + 1 + j.M.cols());
            Z.leftCols(j.X.cols()) = j.X;
            Z.col(j.X.cols()) = j.A;
            Z.rightCols(j.M.cols()) = j.M;
            sm.forest.fit(Z, j.R, cfg.seed, cfg.forest_trees);
            break;
        }
        case SamplingModelKind::Logistic: {
            const Matrix F = sampling_features(cfg.basis, j.X, j.A, j.M);
            sm.logistic = fit_binary(F, j.R, cfg.clip_lo, cfg.clip_hi);
            break;
        }
    }
    return sm;
}

inline NuisanceSet fit_all_impl(const PrimarySample& e, const AuxiliarySample& u,
                                const Config& cfg, bool with_sampling) {
    NuisanceSet out;
    out.pi_e = fit_binary(e.X, e.A, cfg.clip_lo, cfg.clip_hi);
    out.pi_u = fit_binary(u.X, u.A, cfg.clip_lo, cfg.clip_hi);

    const JointSample j = make_joint(e, u);
    out.pi_joint = fit_binary(j.X, j.A, cfg.clip_lo, cfg.clip_hi);

    out.mu_e = fit_mean(e.X, e.Y, e.A, cfg.basis, cfg.ridge_eps);
    out.theta = fit_mean(j.X, j.M, j.A, cfg.basis, cfg.ridge_eps);

    if (with_sampling) out.sampling = fit_sampling(j, cfg);

    out.provenance.n_e = e.n();
    out.provenance.n_u = u.n();
    out.provenance.theta_rows = j.n();
    out.provenance.basis = cfg.basis;
    out.provenance.sampling_model = cfg.sampling_model;
    out.provenance.ridge_fallback = out.mu_e.ridge_fallback || out.theta.ridge_fallback;
    out.provenance.separation_warning = out.pi_e.separation_warning ||
                                        out.pi_u.separation_warning ||
                                        out.pi_joint.separation_warning;
    return out;
}

}  // namespace detail

inline NuisanceSet fit_all(const PrimarySample& e, const AuxiliarySample& u, const Config& cfg) {
    return detail::fit_all_impl(e, u, cfg, true);
}

// Diagnostic for shared conditional intermediate-outcome means: fit theta on
// each sample separately, evaluate both fits on the pooled (x, a) grid, and
// report per outcome the mean squared difference relative to the variance of
// the pooled fitted means.
inline Vector cio_diagnostic(const PrimarySample& e, const AuxiliarySample& u, const Config& cfg) {
    const MeanModel te = fit_mean(e.X, e.M, e.A, cfg.basis, cfg.ridge_eps);
    const MeanModel tu = fit_mean(u.X, u.M, u.A, cfg.basis, cfg.ridge_eps);

    const Eigen::Index n = e.n() + u.n(), s = e.s();
    Matrix Xp(n, e.r());
    Xp.topRows(e.n()) = e.X;
    Xp.bottomRows(u.n()) = u.X;
    Vector Ap(n);
    Ap.head(e.n()) = e.A;
    Ap.tail(u.n()) = u.A;

    Matrix pe[2] = {te.predict(Xp, 0), te.predict(Xp, 1)};
    Matrix pu[2] = {tu.predict(Xp, 0), tu.predict(Xp, 1)};

    Vector out(s);
    for (Eigen::Index k = 0; k < s; ++k) {
        KahanSum num;
        KahanSum sum, sumsq;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = int(Ap[i]);
            const double fe = pe[a](i, k), fu = pu[a](i, k);
            num.add((fe - fu) * (fe - fu));
            sum.add(fe);
            sum.add(fu);
            sumsq.add(fe * fe);
            sumsq.add(fu * fu);
        }
        const double mse = num.value() / double(n);
        const double mean = sum.value() / double(2 * n);
        const double var = sumsq.value() / double(2 * n) - mean * mean;
        if (var <= 0.0)
            out[k] = mse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        else
            out[k] = mse / var;
    }
    return out;
}

}  // namespace coda
