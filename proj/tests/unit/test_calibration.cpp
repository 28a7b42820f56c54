#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include "coda/calibration.hpp"
#include "coda/nuisance.hpp"
#include "coda/rewards.hpp"
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

Fixture make_fixture(Mode mode, bool het = false, std::uint64_t seed = 21) {
    Fixture fx;
    const ScenarioSpec spec = make_scenario(1, het);
    std::tie(fx.e, fx.u) = generate(spec, 400, 600, seed);
    fx.cfg.mode = mode;
    fx.cfg.sampling_model = SamplingModelKind::Logistic;
    fx.nuis = fit_all(fx.e, fx.u, fx.cfg);
    fx.tbl = build_rewards(fx.e, fx.u, fx.nuis, fx.cfg);
    return fx;
}

}  // namespace

TEST_CASE("single intermediate outcome reduces calibration to scalar arithmetic") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::stump(0, 0.0, 0, 1);
    const double t = double(fx.e.n()) / double(fx.u.n());
    const CalibStats st = calib_stats_ho(fx.tbl, rule, t);
    const CalibrationReport rep = calibrated_value(fx.tbl, rule, st, fx.cfg);

    const double rho = st.rho[0];
    const double sm = st.sigma_m(0, 0);
    const double gap = value_WE(fx.tbl, rule)[0] - value_WU(fx.tbl, rule)[0];
    const double expect_value = value_VE(fx.tbl, rule) - rho / sm * gap;
    const double expect_var = st.sigma_y2 - rho * rho / sm;
    REQUIRE(rep.value == Catch::Approx(expect_value).epsilon(1e-12));
    REQUIRE(rep.variance == Catch::Approx(expect_var).epsilon(1e-10));
    REQUIRE_FALSE(rep.diagnostics.ridge_applied);
    REQUIRE_FALSE(rep.diagnostics.variance_clamped);
    REQUIRE_FALSE(rep.diagnostics.baseline);
}

TEST_CASE("calibration statistics match their definitional sums") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::leaf(1);
    const double t = double(fx.e.n()) / double(fx.u.n());
    const CalibStats st = calib_stats_ho(fx.tbl, rule, t);

    const Eigen::Index ne = fx.tbl.n_e, nu = fx.tbl.n_u;
    double sv = 0.0, sw = 0.0, swu = 0.0;
    for (Eigen::Index i = 0; i < ne; ++i) {
        sv += fx.tbl.v(i, 1);
        sw += fx.tbl.wE[1](i, 0);
    }
    for (Eigen::Index i = 0; i < nu; ++i) swu += fx.tbl.wU[1](i, 0);
    const double vbar = sv / double(ne), wbar = sw / double(ne), ubar = swu / double(nu);
    double s_y2 = 0.0, s_rho = 0.0, s_e = 0.0, s_u = 0.0;
    for (Eigen::Index i = 0; i < ne; ++i) {
        const double dv = fx.tbl.v(i, 1) - vbar;
        const double dw = fx.tbl.wE[1](i, 0) - wbar;
        s_y2 += dv * dv;
        s_rho += dv * dw;
        s_e += dw * dw;
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
        const double dw = fx.tbl.wU[1](i, 0) - ubar;
        s_u += dw * dw;
    }
    REQUIRE(st.ve == Catch::Approx(vbar).epsilon(1e-12));
    REQUIRE(st.sigma_y2 == Catch::Approx(s_y2 / double(ne)).epsilon(1e-10));
    REQUIRE(st.rho[0] == Catch::Approx(s_rho / double(ne)).epsilon(1e-10));
    REQUIRE(st.sigma_m(0, 0) ==
            Catch::Approx(s_e / double(ne) + t * s_u / double(nu)).epsilon(1e-10));
}

TEST_CASE("zero correlation leaves the primary-sample estimate untouched") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::leaf(0);
    const double t = double(fx.e.n()) / double(fx.u.n());
    CalibStats st = calib_stats_ho(fx.tbl, rule, t);
    st.rho.setZero();
    const CalibrationReport rep = calibrated_value(fx.tbl, rule, st, fx.cfg);
    REQUIRE(rep.value == Catch::Approx(value_VE(fx.tbl, rule)).epsilon(1e-13));
    REQUIRE(rep.variance == Catch::Approx(st.sigma_y2).epsilon(1e-13));
}

TEST_CASE("baseline report is the uncalibrated doubly robust summary") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::stump(1, 0.5, 1, 0);
    const CalibrationReport rep = baseline_report(fx.tbl, rule, fx.cfg);
    REQUIRE(rep.value == Catch::Approx(value_VE(fx.tbl, rule)).epsilon(1e-13));
    REQUIRE(rep.diagnostics.baseline);
    REQUIRE(rep.stats.rho.isZero());
    // interval width against the normal quantile by hand
    const double z = normal_quantile(0.975);
    const double half = z * std::sqrt(rep.variance / double(fx.tbl.n_e));
    REQUIRE(rep.ci_hi - rep.value == Catch::Approx(half).epsilon(1e-12));
    REQUIRE(rep.value - rep.ci_lo == Catch::Approx(half).epsilon(1e-12));
}

TEST_CASE("calibrated variance clamps at zero instead of going negative") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::leaf(1);
    const double t = double(fx.e.n()) / double(fx.u.n());
    CalibStats st = calib_stats_ho(fx.tbl, rule, t);
    st.rho[0] = 10.0 * std::sqrt(st.sigma_y2 * st.sigma_m(0, 0));  // force quad > sigma_y2
    const CalibrationReport rep = calibrated_value(fx.tbl, rule, st, fx.cfg);
    REQUIRE(rep.variance == 0.0);
    REQUIRE(rep.diagnostics.variance_clamped);
    REQUIRE(rep.ci_lo == rep.value);
    REQUIRE(rep.ci_hi == rep.value);
}

TEST_CASE("singular covariance triggers the ridge guard") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::leaf(1);
    CalibStats st = calib_stats_ho(fx.tbl, rule, 1.0);
    // inflate to a rank-one 2x2 system
    st.rho = Vector(2);
    st.rho << 1.0, 1.0;
    st.sigma_m = Matrix(2, 2);
    st.sigma_m << 1.0, 1.0, 1.0, 1.0;
    bool ridged = false;
    const Vector sol = detail::guarded_solve(st.sigma_m, st.rho, 1e-8, ridged);
    REQUIRE(ridged);
    REQUIRE(sol.allFinite());
    // a well-conditioned system solves exactly and leaves the flag down
    Matrix good(2, 2);
    good << 2.0, 0.0, 0.0, 1.0;
    bool flag = false;
    const Vector x = detail::guarded_solve(good, st.rho, 1e-8, flag);
    REQUIRE_FALSE(flag);
    REQUIRE(x[0] == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(x[1] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("heterogeneous statistics match their definitional sums") {
    const Fixture fx = make_fixture(Mode::HE, true);
    const DecisionRule rule = PolicyTree::stump(0, 0.0, 0, 1);
    const Eigen::Index n = fx.tbl.n(), ne = fx.tbl.n_e;
    const CalibStats st = calib_stats_he(fx.tbl, rule, n, ne);

    const std::vector<int> aj = apply_rule(rule, fx.tbl.x_joint);
    double sv = 0.0;
    for (Eigen::Index i = 0; i < ne; ++i) sv += fx.tbl.v(i, aj[std::size_t(i)]);
    const double vbar = sv / double(ne);
    double s_rho = 0.0, s_sig = 0.0, s_w1 = 0.0, s_w0 = 0.0;
    for (Eigen::Index i = 0; i < ne; ++i) {
        const std::size_t a = std::size_t(aj[std::size_t(i)]);
        s_rho += (fx.tbl.v(i, int(a)) - vbar) * fx.tbl.psi[a](i, 0);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t a = std::size_t(aj[std::size_t(i)]);
        const double d = fx.tbl.w1[a](i, 0) - fx.tbl.w0[a](i, 0);
        s_sig += d * d;  // uncentered second moment
        s_w1 += fx.tbl.w1[a](i, 0);
        s_w0 += fx.tbl.w0[a](i, 0);
    }
    const double scale = std::sqrt(double(ne) / double(n));
    REQUIRE(st.rho_r[0] ==
            Catch::Approx(scale * s_rho / double(ne)).epsilon(1e-10).margin(1e-10));
    REQUIRE(st.sigma_r(0, 0) == Catch::Approx(s_sig / double(n)).epsilon(1e-10));
    REQUIRE(st.w1[0] == Catch::Approx(s_w1 / double(n)).epsilon(1e-10).margin(1e-10));
    REQUIRE(st.w0[0] == Catch::Approx(s_w0 / double(n)).epsilon(1e-10).margin(1e-10));

    // report combines them with the sample-size rescaling
    const CalibrationReport rep = calibrated_value(fx.tbl, rule, st, fx.cfg);
    const double gap = value_W1(fx.tbl, rule)[0] - value_W0(fx.tbl, rule)[0];
    const double expect = value_VE(fx.tbl, rule) -
                          std::sqrt(double(n) / double(ne)) * st.rho_r[0] /
                              st.sigma_r(0, 0) * gap;
    REQUIRE(rep.value == Catch::Approx(expect).epsilon(1e-10));
}

TEST_CASE("mode mismatches between stats and table are rejected") {
    const Fixture ho = make_fixture(Mode::HO);
    CalibStats st = calib_stats_ho(ho.tbl, PolicyTree::leaf(0), 1.0);
    st.mode = Mode::HE;
    REQUIRE_THROWS_WITH(calibrated_value(ho.tbl, PolicyTree::leaf(0), st, ho.cfg),
                        Catch::Matchers::ContainsSubstring("mode"));
    REQUIRE_THROWS_AS(calib_stats_he(ho.tbl, PolicyTree::leaf(0), ho.tbl.n(), ho.tbl.n_e),
                      ValidationError);
}

TEST_CASE("efficiency improvement is the relative sd reduction in percent") {
    REQUIRE(improved_efficiency(0.075, 0.1) == Catch::Approx(25.0));
    REQUIRE(improved_efficiency(0.1, 0.1) == Catch::Approx(0.0));
    REQUIRE(improved_efficiency(0.12, 0.1) == Catch::Approx(-20.0));
    REQUIRE_THROWS_AS(improved_efficiency(0.0, 0.1), ValidationError);
    REQUIRE_THROWS_AS(improved_efficiency(0.1, -1.0), ValidationError);
}

TEST_CASE("report json carries the fixed schema") {
    const Fixture fx = make_fixture(Mode::HO);
    const DecisionRule rule = PolicyTree::leaf(1);
    const CalibStats st = calib_stats_ho(fx.tbl, rule, 2.0 / 3.0);
    const CalibrationReport rep = calibrated_value(fx.tbl, rule, st, fx.cfg);
    const nlohmann::json j = to_json(rep);
    for (const char* key :
         {"value", "variance", "ci_lo", "ci_hi", "sigma_y2", "rho", "sigma_m", "mode",
          "diagnostics"})
        REQUIRE(j.contains(key));
    REQUIRE(j["mode"] == "HO");
    REQUIRE(j["rho"].size() == 1);
    REQUIRE(j["sigma_m"][0].size() == 1);
    REQUIRE(j["diagnostics"]["n_e"].get<int>() == 400);
    REQUIRE(j["diagnostics"]["alpha"].get<double>() == 0.05);

    const Fixture he = make_fixture(Mode::HE, true);
    const CalibStats sh = calib_stats_he(he.tbl, rule, he.tbl.n(), he.tbl.n_e);
    const nlohmann::json jh = to_json(calibrated_value(he.tbl, rule, sh, he.cfg));
    REQUIRE(jh["mode"] == "HE");
    REQUIRE(jh["rho"][0].get<double>() == Catch::Approx(sh.rho_r[0]));
}
