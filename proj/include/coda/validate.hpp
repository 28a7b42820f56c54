#pragma once

#include <string>
#include <vector>

#include "coda/stats.hpp"
#include "coda/types.hpp"

namespace coda {

// Shape and sanity report for a primary/auxiliary pair, plus per-covariate
// two-sample KS statistics driving the HO/HE mode suggestion.
struct ValidationReport {
    bool ok = true;
    std::vector<std::string> issues;
    Mode suggested_mode = Mode::HO;
    std::vector<KsResult> covariate_ks;  // one entry per shared X column

    void flag(const std::string& msg) {
        ok = false;
        issues.push_back(msg);
    }
};

// Mode suggestion: any covariate whose two-sample KS test rejects at level
// 0.01 marks the samples as drawn from different covariate laws (HE).
inline ValidationReport validate_pair(const PrimarySample& e, const AuxiliarySample& u,
                                      double ks_level = 0.01) {
    ValidationReport rep;
    if (e.n() == 0) rep.flag("empty primary sample");
    if (u.n() == 0) rep.flag("empty auxiliary sample");
    if (e.n() > 0 && u.n() > 0 && e.r() != u.r()) rep.flag("covariate dimension mismatch");
    if (e.n() > 0 && u.n() > 0 && e.s() != u.s()) rep.flag("intermediate dimension mismatch");
    if (e.A.size() != e.n() || e.M.rows() != e.n() || e.Y.size() != e.n())
        rep.flag("primary sample row-count mismatch across blocks");
    if (u.A.size() != u.n() || u.M.rows() != u.n())
        rep.flag("auxiliary sample row-count mismatch across blocks");
    if (!detail::all_finite(e.X) || !detail::all_finite(e.M) || !detail::all_finite(e.Y))
        rep.flag("non-finite entries in primary sample");
    if (!detail::all_finite(u.X) || !detail::all_finite(u.M))
        rep.flag("non-finite entries in auxiliary sample");
    if (e.n() > 0 && !detail::is_binary(e.A)) rep.flag("primary treatment must be 0/1");
    if (u.n() > 0 && !detail::is_binary(u.A)) rep.flag("auxiliary treatment must be 0/1");
    if (!rep.ok) return rep;

    bool any_reject = false;
    std::vector<double> a(std::size_t(e.n())), b(std::size_t(u.n()));
    for (Eigen::Index c = 0; c < e.r(); ++c) {
        for (Eigen::Index i = 0; i < e.n(); ++i) a[std::size_t(i)] = e.X(i, c);
        for (Eigen::Index i = 0; i < u.n(); ++i) b[std::size_t(i)] = u.X(i, c);
        const KsResult ks = ks_two_sample(a, b);
        rep.covariate_ks.push_back(ks);
        if (ks.p_value < ks_level) any_reject = true;
    }
    rep.suggested_mode = any_reject ? Mode::HE : Mode::HO;
    return rep;
}

}  // namespace coda
