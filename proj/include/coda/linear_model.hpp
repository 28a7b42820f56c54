#pragma once

#include "coda/basis.hpp"
#include "coda/types.hpp"

namespace coda {

// Per-arm least-squares regression onto a basis expansion of the covariates.
// Outputs are s-dimensional (s = 1 for the outcome model). Each arm gets its
// own coefficient matrix of shape (1 + basis width) x s.
struct MeanModel {
    BasisSpec basis;
    Matrix coef[2];
    bool ridge_fallback = false;

    // predictions for all rows at a fixed arm
    Matrix predict(const Matrix& X, int arm) const {
        const Matrix F = expand_basis(basis, X);
        Matrix out = Matrix::Ones(X.rows(), 1) * coef[arm].row(0);
        out.noalias() += F * coef[arm].bottomRows(F.cols());
        return out;
    }
};

// Ordinary least squares per arm; rank-deficient designs fall back to a small
// ridge penalty and set a flag.
inline MeanModel fit_mean(const Matrix& X, const Matrix& resp, const Vector& arms,
                          const BasisSpec& basis, double ridge_eps = 1e-8) {
    const Eigen::Index n = X.rows();
    if (resp.rows() != n || arms.size() != n) throw ValidationError("fit_mean: shape mismatch");
    if (!detail::all_finite(X) || !detail::all_finite(resp))
        throw ValidationError("fit_mean: non-finite input");
    if (!detail::is_binary(arms)) throw ValidationError("fit_mean: arms must be 0/1");

    MeanModel model;
    model.basis = basis;
    const Matrix F = expand_basis(basis, X);
    const Eigen::Index q = F.cols() + 1;

    for (int a = 0; a < 2; ++a) {
        const Eigen::Index na = Eigen::Index((arms.array() == double(a)).count());
        if (na == 0) throw ValidationError("fit_mean: arm " + std::to_string(a) + " absent");
        if (na <= q)
            throw ValidationError("fit_mean: arm " + std::to_string(a) +
                                  " has fewer rows than features");
        Matrix Xa(na, q);
        Matrix Ya(na, resp.cols());
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (arms[i] != double(a)) continue;
            Xa(k, 0) = 1.0;
            Xa.row(k).tail(F.cols()) = F.row(i);
            Ya.row(k) = resp.row(i);
            ++k;
        }
        Eigen::ColPivHouseholderQR<Matrix> qr(Xa);
        if (qr.rank() < q) {
            Matrix G = Xa.transpose() * Xa;
            G.diagonal().array() += ridge_eps * G.trace() / double(q);
            model.coef[a] = G.ldlt().solve(Xa.transpose() * Ya);
            model.ridge_fallback = true;
        } else {
            model.coef[a] = qr.solve(Ya);
        }
        if (!model.coef[a].allFinite()) throw NumericError("fit_mean: non-finite coefficients");
    }
    return model;
}

}  // namespace coda
