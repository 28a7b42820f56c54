#pragma once

#include "coda/types.hpp"

namespace coda {

// Number of feature columns produced for p raw columns (intercept excluded).
inline Eigen::Index basis_width(const BasisSpec& spec, Eigen::Index p) {
    Eigen::Index w = 0;
    if (spec.linear) w += p;
    if (spec.pairwise) w += p * (p - 1) / 2;
    if (spec.squares) w += p;
    return w;
}

// Expands raw columns into the configured term groups, in a fixed order:
// linear block, then pairwise products (j<k by column), then squares.
inline Matrix expand_basis(const BasisSpec& spec, const Matrix& X) {
    const Eigen::Index n = X.rows(), p = X.cols();
    Matrix F(n, basis_width(spec, p));
    Eigen::Index c = 0;
    if (spec.linear) {
        F.middleCols(c, p) = X;
        c += p;
    }
    if (spec.pairwise) {
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index k = j + 1; k < p; ++k)
                F.col(c++) = X.col(j).cwiseProduct(X.col(k));
    }
    if (spec.squares) {
        for (Eigen::Index j = 0; j < p; ++j) F.col(c++) = X.col(j).cwiseAbs2();
    }
    return F;
}

}  // namespace coda
