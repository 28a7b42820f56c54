#pragma once

#include <cmath>

#include "coda/types.hpp"

namespace coda {

namespace detail {
inline double plogis(double eta) {
    // clamp keeps exp() finite; probabilities are clipped downstream anyway
    if (eta > 30.0) eta = 30.0;
    if (eta < -30.0) eta = -30.0;
    return 1.0 / (1.0 + std::exp(-eta));
}
}  // namespace detail

// Logistic-link linear model. coef[0] is the intercept; predictions are
// clipped into [clip_lo, clip_hi].
struct BinaryModel {
    Vector coef;
    double clip_lo = 0.01;
    double clip_hi = 0.99;
    bool separation_warning = false;
    int iterations = 0;

    double predict1(const Eigen::Ref<const Vector>& x) const {
        double eta = coef[0];
        for (Eigen::Index j = 0; j < x.size(); ++j) eta += coef[j + 1] * x[j];
        const double p = detail::plogis(eta);
        return std::clamp(p, clip_lo, clip_hi);
    }

    Vector predict(const Matrix& F) const {
        if (F.cols() + 1 != coef.size())
            throw ValidationError("BinaryModel::predict: feature width mismatch");
        Vector p(F.rows());
        for (Eigen::Index i = 0; i < F.rows(); ++i) p[i] = predict1(F.row(i));
        return p;
    }
};

// Maximum-likelihood logistic fit via iteratively reweighted least squares.
// Converged when the largest coefficient change drops below tol. Perfect or
// near-perfect separation is flagged and the clipped model returned as is.
inline BinaryModel fit_binary(const Matrix& F, const Vector& y, double clip_lo = 0.01,
                              double clip_hi = 0.99, int max_iter = 100, double tol = 1e-8) {
    const Eigen::Index n = F.rows(), p = F.cols();
    if (y.size() != n) throw ValidationError("fit_binary: label length mismatch");
    if (n <= p) throw ValidationError("fit_binary: need more rows than features");
    if (!detail::all_finite(F) || !detail::all_finite(y))
        throw ValidationError("fit_binary: non-finite input");
    if (!detail::is_binary(y)) throw ValidationError("fit_binary: labels must be 0/1");
    const double ybar = y.mean();
    if (ybar == 0.0 || ybar == 1.0) throw ValidationError("fit_binary: single-class labels");

    Matrix X(n, p + 1);
    X.col(0).setOnes();
    X.rightCols(p) = F;

    BinaryModel model;
    model.clip_lo = clip_lo;
    model.clip_hi = clip_hi;
    Vector beta = Vector::Zero(p + 1);

    for (int it = 0; it < max_iter; ++it) {
        Vector eta = X * beta;
        Vector mu(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = detail::plogis(eta[i]);
            w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
        }
        // working response z = eta + (y - mu)/w; solve weighted least squares
        Vector z = eta + (y - mu).cwiseQuotient(w);
        Matrix Xw = w.asDiagonal() * X;
        Matrix H = X.transpose() * Xw;
        H.diagonal().array() += 1e-10;
        Vector beta_new = H.ldlt().solve(X.transpose() * (w.cwiseProduct(z)));
        const double change = (beta_new - beta).cwiseAbs().maxCoeff();
        beta = beta_new;
        model.iterations = it + 1;
        if (change < tol) break;
    }
    if (!beta.allFinite()) throw NumericError("fit_binary: diverged to non-finite coefficients");
    // separation shows up either as runaway coefficients or as every training
    // residual collapsing to zero while the likelihood climbs its asymptote
    double max_resid = 0.0;
    {
        Vector eta = X * beta;
        for (Eigen::Index i = 0; i < n; ++i)
            max_resid = std::max(max_resid, std::abs(y[i] - detail::plogis(eta[i])));
    }
    if (beta.cwiseAbs().maxCoeff() > 50.0 || max_resid < 1e-6) model.separation_warning = true;
    model.coef = beta;
    return model;
}

}  // namespace coda
