#include <catch2/catch_amalgamated.hpp>

#include "coda/policy_search.hpp"
#include "coda/simulation.hpp"

using namespace coda;

namespace {

struct Fixture {
    PrimarySample e;
    AuxiliarySample u;
    Config cfg;
    NuisanceSet nuis;
    RewardTable tbl;
};

Fixture make_fixture(Mode mode, bool het = false, std::uint64_t seed = 33) {
    Fixture fx;
    const ScenarioSpec spec = make_scenario(1, het);
    std::tie(fx.e, fx.u) = generate(spec, 400, 600, seed);
    fx.cfg.mode = mode;
    fx.cfg.sampling_model = SamplingModelKind::Logistic;
    fx.nuis = fit_all(fx.e, fx.u, fx.cfg);
    fx.tbl = build_rewards(fx.e, fx.u, fx.nuis, fx.cfg);
    return fx;
}

NuisanceSet zero_nuisances(Eigen::Index r, Eigen::Index s, const Config& cfg) {
    NuisanceSet nuis;
    const Eigen::Index q = 1 + basis_width(cfg.basis, r);
    for (BinaryModel* b : {&nuis.pi_e, &nuis.pi_u, &nuis.pi_joint}) {
        b->coef = Vector::Zero(r + 1);
        b->clip_lo = cfg.clip_lo;
        b->clip_hi = cfg.clip_hi;
    }
    nuis.mu_e.basis = cfg.basis;
    nuis.mu_e.coef[0] = Matrix::Zero(q, 1);
    nuis.mu_e.coef[1] = Matrix::Zero(q, 1);
    nuis.theta.basis = cfg.basis;
    nuis.theta.coef[0] = Matrix::Zero(q, s);
    nuis.theta.coef[1] = Matrix::Zero(q, s);
    nuis.sampling.kind = SamplingModelKind::Frozen;
    nuis.sampling.frozen = 0.4;
    return nuis;
}

}  // namespace

TEST_CASE("zero search iterations return the uncalibrated baseline") {
    Fixture fx = make_fixture(Mode::HO);
    fx.cfg.max_iterations = 0;
    const CodaSearchResult res = coda_search_table(fx.tbl, fx.cfg);
    REQUIRE(res.search.rule == res.initial.rule);
    REQUIRE(res.search.objective == res.initial.objective);
    REQUIRE(res.report.diagnostics.baseline);
    REQUIRE(res.report.value == res.initial_report.value);
    REQUIRE(res.report.variance == res.initial_report.variance);
}

TEST_CASE("the initial rule is the exact search over outcome rewards") {
    const Fixture fx = make_fixture(Mode::HO);
    const CodaSearchResult res = coda_search_table(fx.tbl, fx.cfg);
    const SearchResult direct = exact_tree_search(fx.tbl.v, fx.tbl.x_e, fx.cfg.depth);
    REQUIRE(res.initial.rule == direct.rule);
    REQUIRE(res.initial.objective == direct.objective);
    REQUIRE(res.initial_report.diagnostics.baseline);
    REQUIRE(res.initial.iterations_used == 0);
}

TEST_CASE("zeroed correlation makes the calibrated rewards equal the outcome rewards") {
    const Fixture fx = make_fixture(Mode::HO);
    CalibStats st = detail::stats_at(fx.tbl, PolicyTree::leaf(1));
    st.rho.setZero();
    CalibrationDiagnostics diag;
    const Matrix cal = detail::calibrated_rewards(fx.tbl, st, fx.cfg, diag);
    REQUIRE((cal - fx.tbl.v).cwiseAbs().maxCoeff() == 0.0);

    const Fixture he = make_fixture(Mode::HE, true);
    CalibStats sh = detail::stats_at(he.tbl, PolicyTree::leaf(1));
    sh.rho_r.setZero();
    const Matrix calh = detail::calibrated_rewards(he.tbl, sh, he.cfg, diag);
    REQUIRE((calh - he.tbl.v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("calibrated rewards follow the fixed-statistics formula") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule at = PolicyTree::stump(0, 0.0, 0, 1);
    const CalibStats st = detail::stats_at(fx.tbl, at);
    CalibrationDiagnostics diag;
    const Matrix cal = detail::calibrated_rewards(fx.tbl, st, fx.cfg, diag);

    const double c = st.rho[0] / st.sigma_m(0, 0);
    const double wu0 = fx.tbl.wU[0].col(0).mean();
    const double wu1 = fx.tbl.wU[1].col(0).mean();
    for (Eigen::Index i = 0; i < fx.tbl.n_e; ++i) {
        const double e0 = fx.tbl.v(i, 0) - c * (fx.tbl.wE[0](i, 0) - wu0);
        const double e1 = fx.tbl.v(i, 1) - c * (fx.tbl.wE[1](i, 0) - wu1);
        REQUIRE(cal(i, 0) == Catch::Approx(e0).epsilon(1e-10).margin(1e-10));
        REQUIRE(cal(i, 1) == Catch::Approx(e1).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("heterogeneous calibrated rewards use the joint difference and offset") {
    const Fixture fx = make_fixture(Mode::HE, true);
    const DecisionRule at = PolicyTree::leaf(0);
    const CalibStats st = detail::stats_at(fx.tbl, at);
    CalibrationDiagnostics diag;
    const Matrix cal = detail::calibrated_rewards(fx.tbl, st, fx.cfg, diag);

    const Eigen::Index n = fx.tbl.n(), ne = fx.tbl.n_e;
    const double cr = std::sqrt(double(n) / double(ne)) * st.rho_r[0] / st.sigma_r(0, 0);
    const double frac = double(ne) / double(n);
    for (int a = 0; a < 2; ++a) {
        const double off = cr * delta_hat(fx.tbl, a)[0];
        for (Eigen::Index i = 0; i < ne; ++i) {
            const double diff = fx.tbl.w1[std::size_t(a)](i, 0) - fx.tbl.w0[std::size_t(a)](i, 0);
            const double want = fx.tbl.v(i, a) - frac * diff * cr - off;
            REQUIRE(cal(i, a) == Catch::Approx(want).epsilon(1e-10).margin(1e-10));
        }
    }
}

TEST_CASE("iterative search reports trace, iteration count and convergence") {
    Fixture fx = make_fixture(Mode::HO);
    fx.cfg.max_iterations = 8;
    const CodaSearchResult res = coda_search_table(fx.tbl, fx.cfg);
    REQUIRE(res.search.iterations_used >= 1);
    REQUIRE(res.search.iterations_used <= 8);
    REQUIRE(res.search.trace.size() == std::size_t(res.search.iterations_used) + 1);
    REQUIRE(res.search.trace[0] == res.initial.objective);
    REQUIRE(res.search.converged);

    // the reported calibration matches a fresh computation at the final rule
    const CalibStats st = detail::stats_at(fx.tbl, res.search.rule);
    const CalibrationReport again = calibrated_value(fx.tbl, res.search.rule, st, fx.cfg);
    REQUIRE(res.report.value == Catch::Approx(again.value).epsilon(1e-13));
    REQUIRE(res.report.variance == Catch::Approx(again.variance).epsilon(1e-13));
}

TEST_CASE("one-step search stops after a single pass when the rule is stable") {
    Fixture fx = make_fixture(Mode::HO);
    fx.cfg.max_iterations = 1;
    const CodaSearchResult res = coda_search_table(fx.tbl, fx.cfg);
    REQUIRE(res.search.iterations_used == 1);
    REQUIRE(res.search.trace.size() == 2);
    const bool same = res.search.rule == res.initial.rule;
    REQUIRE(res.search.converged == same);
}

TEST_CASE("parametric search recovers a linear boundary from the rewards") {
    // v(i, 1) = 2 (x1 - x2), v(i, 0) = 0: treat exactly when x1 > x2
    Rng rng(55);
    const Eigen::Index n = 80;
    PrimarySample e;
    e.X = Matrix(n, 2);
    e.A = Vector::Ones(n);
    e.M = Matrix::Zero(n, 1);
    e.Y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        e.X(i, 0) = rng.uniform(-2, 2);
        e.X(i, 1) = rng.uniform(-2, 2);
        e.Y[i] = e.X(i, 0) - e.X(i, 1);
    }
    AuxiliarySample u;
    u.X = e.X;
    u.A = e.A;
    u.M = e.M;
    Config cfg;
    cfg.mode = Mode::HO;
    cfg.max_iterations = 0;
    cfg.seed = 5;
    const NuisanceSet nuis = zero_nuisances(2, 1, cfg);
    BasisSpec linear_only{true, false, false};
    const CodaSearchResult res = parametric_search(e, u, nuis, linear_only, cfg, 12);

    const auto& rule = std::get<LinearRule>(res.initial.rule);
    Vector want(3);
    want << 0.0, 1.0, -1.0;
    want /= want.norm();
    const double cosine = std::abs(rule.beta.dot(want));  // sign-invariant alignment
    REQUIRE(rule.beta.norm() == Catch::Approx(1.0).epsilon(1e-9));
    REQUIRE(cosine > 0.95);
    // every row must be classified onto its profitable side
    int correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector xi = e.X.row(i).transpose();
        correct += apply_rule(res.initial.rule, xi) == int(e.Y[i] > 0.0);
    }
    REQUIRE(double(correct) / double(n) > 0.95);
}

TEST_CASE("nelder-mead minimizes a smooth bowl") {
    const auto f = [](const Vector& p) {
        return (p[0] - 3.0) * (p[0] - 3.0) + (p[1] + 1.0) * (p[1] + 1.0);
    };
    Vector start = Vector::Zero(2);
    const Vector opt = detail::nelder_mead(f, start, 0.5, 500);
    REQUIRE(opt[0] == Catch::Approx(3.0).margin(1e-3));
    REQUIRE(opt[1] == Catch::Approx(-1.0).margin(1e-3));
}
