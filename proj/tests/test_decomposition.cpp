#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sptlab/decomposition.hpp"

using namespace sptlab;
using Catch::Approx;

namespace {

MarketSpec vsm_spec(int n) {
    MarketSpec spec;
    spec.n = n;
    spec.initial_prices = Vec::Ones(n);
    spec.model = VolatilityStabilized{1.0};
    return spec;
}

MarketSpec cld_spec(int n, double vol) {
    MarketSpec spec;
    spec.n = n;
    spec.initial_prices = Vec::Ones(n);
    spec.model = ConstantLogDiffusion{Vec::Zero(n), vol * Mat::Identity(n, n)};
    return spec;
}

struct Run {
    MarketPath path;
    WeightsPath mu;
    ValuePath z_mu;
};

Run simulate_one_run(const MarketSpec& spec, const SimGrid& grid) {
    Run r;
    r.path = simulate_market(spec, grid, 1)[0];
    r.mu = market_weights_path(r.path);
    r.z_mu = portfolio_value_path(r.path, r.mu);
    return r;
}

MasterDecomposition decompose_generated(const Run& r, const GeneratingFunction& s,
                                        const CharacteristicsPath* P,
                                        const CovariancePath* cov = nullptr) {
    const WeightsPath pi = generated_weights_path(s, r.mu, P);
    const ValuePath z_pi = portfolio_value_path(r.path, pi);
    return decompose(r.path, r.mu, P, s, z_pi, r.z_mu, cov);
}

}  // namespace

TEST_CASE("constant generating function decomposes to identically zero") {
    const SimGrid grid = SimGrid::from_steps(200, 1e-3, 5);
    const Run r = simulate_one_run(vsm_spec(3), grid);
    const auto s = make_constant(3, 5.0);
    const auto dec = decompose_generated(r, s, nullptr);
    REQUIRE(dec.lhs.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(dec.log_s_change.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(dec.stoch_integral.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(dec.drift_theta.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(dec.max_abs_residual == 0.0);
    REQUIRE(dec.extended_drift_defined);
}

TEST_CASE("decomposition residual shrinks under grid refinement") {
    const auto s = make_reduced_entropy(3, 1.0, 0.2);
    std::vector<double> medians;
    for (double dt : {1e-3, 5e-4, 2.5e-4}) {
        const SimGrid grid = SimGrid::from_horizon(1.0, dt, 4242);
        const auto paths = simulate_market(vsm_spec(3), grid, 10);
        const auto tc = time_characteristic(grid);
        std::vector<double> res;
        for (const auto& path : paths) {
            const WeightsPath mu = market_weights_path(path);
            const WeightsPath pi = generated_weights_path(s, mu, &tc);
            const auto z_pi = portfolio_value_path(path, pi);
            const auto z_mu = portfolio_value_path(path, mu);
            res.push_back(decompose(path, mu, &tc, s, z_pi, z_mu).max_abs_residual);
        }
        std::sort(res.begin(), res.end());
        medians.push_back(res[res.size() / 2]);
    }
    REQUIRE(medians[0] > medians[1]);
    REQUIRE(medians[1] > medians[2]);
    REQUIRE(medians[2] < 2e-3);
}

TEST_CASE("exact covariances are an alternative market drift route") {
    const SimGrid grid = SimGrid::from_horizon(1.0, 5e-4, 4242);
    const MarketSpec spec = cld_spec(3, 0.2);
    const Run r = simulate_one_run(spec, grid);
    const auto s = make_entropy(3, 1.0);
    const auto cov = exact_covariance(spec, r.path);

    const auto realized = decompose_generated(r, s, nullptr);
    const auto exact = decompose_generated(r, s, nullptr, &cov);
    REQUIRE(realized.max_abs_residual < 1e-5);
    REQUIRE(exact.max_abs_residual < 1e-3);
    // Same account, different quadratic-variation estimator: only the drift
    // and residual columns may move, and only within the coarser tolerance.
    REQUIRE((realized.lhs - exact.lhs).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((realized.drift_market - exact.drift_market).cwiseAbs().maxCoeff() < 1e-3);

    CovariancePath short_cov = cov;
    short_cov.tau.resize(10);
    const WeightsPath pi = generated_weights_path(s, r.mu, nullptr);
    const auto z_pi = portfolio_value_path(r.path, pi);
    REQUIRE_THROWS_AS(decompose(r.path, r.mu, nullptr, s, z_pi, r.z_mu, &short_cov), InputError);
}

TEST_CASE("decomposition validates input alignment") {
    const SimGrid grid = SimGrid::from_steps(50, 1e-3, 6);
    const Run r = simulate_one_run(vsm_spec(3), grid);
    const auto s2 = make_reduced_entropy(3, 1.0, 0.2);
    const WeightsPath pi = r.mu;

    // Characteristics expected but missing, then misaligned.
    REQUIRE_THROWS_AS(decompose(r.path, r.mu, nullptr, s2, r.z_mu, r.z_mu), InputError);
    const auto short_tc = time_characteristic(SimGrid::from_steps(20, 1e-3, 6));
    REQUIRE_THROWS_AS(decompose(r.path, r.mu, &short_tc, s2, r.z_mu, r.z_mu), InputError);

    // Dimension mismatch between the function and the market.
    const auto s4 = make_entropy(4, 1.0);
    REQUIRE_THROWS_AS(decompose(r.path, r.mu, nullptr, s4, r.z_mu, r.z_mu), InputError);

    WeightsPath bad = r.mu;
    bad.weights = r.mu.weights.leftCols(10);
    REQUIRE_THROWS_AS(decompose(r.path, bad, nullptr, make_entropy(3, 1.0), r.z_mu, r.z_mu),
                      InputError);
}

TEST_CASE("multiplicative characteristics leave the account unchanged") {
    const SimGrid grid = SimGrid::from_horizon(0.5, 1e-3, 31);
    const Run r = simulate_one_run(cld_spec(3, 0.2), grid);
    const auto tc = time_characteristic(grid);
    const auto ent = make_entropy(3, 1.0);

    // A constant factor keeps even the bits: same weights, same residuals.
    const auto with_const = multiplicative_compose(ent, make_constant_map(1, 1.0));
    const auto dec_plain = decompose_generated(r, ent, nullptr);
    const auto dec_const = decompose_generated(r, with_const, &tc);
    REQUIRE(dec_const.lhs == dec_plain.lhs);
    REQUIRE(dec_const.residual == dec_plain.residual);

    // A moving factor shifts log S and the stochastic integral by the same
    // amount, cancelling: weights, wealth, and residuals agree to rounding.
    const auto with_decay = multiplicative_compose(ent, make_exp_neg_sum_map(1));
    const auto dec_decay = decompose_generated(r, with_decay, &tc);
    REQUIRE((dec_decay.lhs - dec_plain.lhs).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((dec_decay.residual - dec_plain.residual).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((dec_decay.log_s_change - dec_decay.stoch_integral -
             (dec_plain.log_s_change - dec_plain.stoch_integral))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
}

TEST_CASE("extended drift monotonicity check") {
    const SimGrid grid = SimGrid::from_horizon(0.5, 1e-3, 11);
    const Run r = simulate_one_run(vsm_spec(3), grid);
    const auto tc = time_characteristic(grid);

    // Reduced entropy against the clock: applicable and clean.
    const auto s = make_reduced_entropy(3, 1.0, 0.2);
    const auto dec = decompose_generated(r, s, &tc);
    auto rep = check_drift_monotonicity(dec, s, &tc);
    REQUIRE(rep.applicable);
    REQUIRE(rep.violations == 0);
    REQUIRE(rep.worst_step >= -rep.tolerance);

    // Classical concave functions qualify with no characteristics at all.
    const auto ewp = make_geometric_mean(3);
    const auto dec_ewp = decompose_generated(r, ewp, nullptr);
    rep = check_drift_monotonicity(dec_ewp, ewp, nullptr);
    REQUIRE(rep.applicable);
    REQUIRE(rep.violations == 0);

    // Multiplicative functions are excluded.
    const auto composed = multiplicative_compose(make_entropy(3, 1.0), make_exp_neg_sum_map(1));
    rep = check_drift_monotonicity(dec, composed, &tc);
    REQUIRE_FALSE(rep.applicable);
    REQUIRE(rep.reason.find("multiplicative") != std::string::npos);

    // Convex-in-stocks functions are excluded.
    const auto roa = make_roa_genfun(3, 1.0);
    CharacteristicsPath fake = tc;
    fake.values = Mat::Constant(3, grid.n_steps + 1, 0.5);
    fake.monotone.assign(3, YMonotone::increasing);
    rep = check_drift_monotonicity(dec, roa, &fake);
    REQUIRE_FALSE(rep.applicable);
    REQUIRE(rep.reason.find("concave") != std::string::npos);

    // Infinite-variation characteristics are excluded.
    CharacteristicsPath rough = tc;
    rough.finite_variation = false;
    rep = check_drift_monotonicity(dec, s, &rough);
    REQUIRE_FALSE(rep.applicable);
    REQUIRE(rep.reason.find("finite variation") != std::string::npos);

    // Characteristic moving with, not against, the function is excluded.
    CharacteristicsPath aligned = tc;
    aligned.monotone.assign(1, YMonotone::decreasing);
    rep = check_drift_monotonicity(dec, s, &aligned);
    REQUIRE_FALSE(rep.applicable);
    REQUIRE(rep.reason.find("oppositely") != std::string::npos);

    REQUIRE_THROWS_AS(check_drift_monotonicity(dec, s, nullptr), InputError);
}

TEST_CASE("cumulative volatility profiles") {
    const auto lin = Upsilon::linear(0.5);
    REQUIRE(lin.value(3.0) == Approx(1.5).margin(1e-15));
    REQUIRE(lin.inverse(1.5) == Approx(3.0).margin(1e-12));
    REQUIRE(Upsilon::volatility_stabilized(5).value(2.0) == Approx(4.0).margin(1e-15));
    REQUIRE_THROWS_AS(Upsilon::linear(0.0), InputError);
    REQUIRE_THROWS_AS(Upsilon::volatility_stabilized(1), InputError);

    Vec t(3), v(3);
    t << 0.0, 1.0, 2.0;
    v << 0.0, 0.5, 1.2;
    const auto tab = Upsilon::from_table(t, v);
    REQUIRE(tab.value(0.5) == Approx(0.25).margin(1e-12));
    REQUIRE(tab.value(1.5) == Approx(0.85).margin(1e-12));
    REQUIRE(tab.value(3.0) == Approx(1.9).margin(1e-12));  // last slope 0.7
    REQUIRE(tab.inverse(0.85) == Approx(1.5).epsilon(1e-9));
    REQUIRE(tab.inverse(1.9) == Approx(3.0).epsilon(1e-9));

    Vec t_bad(2), v_bad(2);
    t_bad << 0.5, 1.0;
    v_bad << 0.0, 1.0;
    REQUIRE_THROWS_AS(Upsilon::from_table(t_bad, v_bad), InputError);
    t_bad << 0.0, 1.0;
    v_bad << 0.0, 0.0;
    REQUIRE_THROWS_AS(Upsilon::from_table(t_bad, v_bad), InputError);
    REQUIRE_THROWS_AS(Upsilon::from_table(Vec::Zero(1), Vec::Zero(1)), InputError);
}

TEST_CASE("increasing-function solver") {
    REQUIRE(solve_increasing([](double t) { return t * t; }, 9.0) == Approx(3.0).epsilon(1e-10));
    REQUIRE(solve_increasing([](double t) { return t; }, 0.0) == 0.0);
    REQUIRE_THROWS_AS(solve_increasing([](double t) { return std::tanh(t); }, 2.0), InputError);
    REQUIRE_THROWS_AS(solve_increasing([](double t) { return t; }, -1.0), InputError);
}

TEST_CASE("outperformance horizons match hand-computed values") {
    ArbitrageBoundSpec b;
    b.upsilon = Upsilon::volatility_stabilized(2);
    b.n = 2;
    b.s_mu0 = std::log(2.0);  // uniform start
    b.c = 1.0;

    // 2 (1 + log 2) log(1 + log 2) = 1.78315...
    const double t_star = arbitrage_time(ArbitrageHorizon::entropy_deadline, b);
    REQUIRE(t_star ==
            Approx(2.0 * (1.0 + std::log(2.0)) * std::log1p(std::log(2.0))).epsilon(1e-12));
    REQUIRE(t_star == Approx(1.78315).epsilon(1e-4));

    // Large c approaches the limit horizon 2 log 2.
    ArbitrageBoundSpec big = b;
    big.c = 1e6;
    const double t_lim = arbitrage_time(ArbitrageHorizon::entropy_deadline_limit, b);
    REQUIRE(t_lim == Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    REQUIRE(arbitrage_time(ArbitrageHorizon::entropy_deadline, big) ==
            Approx(t_lim).epsilon(1e-5));

    // The deflated-entropy horizon arrives strictly earlier and solves
    // Upsilon(T) + eps tanh(T) = (c + log n) log(1 + S(mu_0) / c).
    ArbitrageBoundSpec red = b;
    red.eps = 0.2;
    const double t_red = arbitrage_time(ArbitrageHorizon::reduced_deadline, red);
    REQUIRE(t_red < t_star);
    const double target = (1.0 + std::log(2.0)) * std::log1p(std::log(2.0));
    REQUIRE(0.5 * t_red + 0.2 * std::tanh(t_red) == Approx(target).epsilon(1e-9));

    // Boosted comparison horizon round-trips through its defining equation.
    ArbitrageBoundSpec boo = b;
    boo.alpha = 0.1;
    const double t_boo = arbitrage_time(ArbitrageHorizon::boosted_deadline, boo);
    const double log_n = std::log(2.0);
    const double z = (1.0 * 0.9 + log_n) * (1.0 + log_n) / 0.1 * std::log(1.0 / 0.8);
    REQUIRE(0.5 * t_boo + (1.0 + log_n) * std::tanh(t_boo) == Approx(z).epsilon(1e-9));

    // Profitability deadline from the asset-quality constants.
    ArbitrageBoundSpec roa;
    roa.n = 4;
    roa.varsigma = 1.0;
    roa.eta = 1.0;
    roa.A = 1.0;
    roa.delta = 0.1;
    roa.eps = 0.01;
    RoaSpec rs;
    rs.n = 4;
    rs.varsigma = 1.0;
    rs.eta = 1.0;
    rs.A = 1.0;
    rs.delta = 0.1;
    rs.eps = 0.01;
    REQUIRE(arbitrage_time(ArbitrageHorizon::roa_deadline, roa) ==
            Approx(rs.outperformance_deadline()).epsilon(1e-14));

    // Covariation-tilt deadline: cap / (p (1-p) c eps) log(cap / (A + c)).
    ArbitrageBoundSpec bet;
    bet.n = 4;
    bet.A = 0.0;
    bet.c = 1.0;
    bet.p = 0.5;
    bet.eps = 2.0;
    REQUIRE(arbitrage_time(ArbitrageHorizon::beta_deadline, bet) ==
            Approx(8.0 * std::log(4.0)).epsilon(1e-12));

    // Parameter validation.
    ArbitrageBoundSpec bad = b;
    bad.c = 0.0;
    REQUIRE_THROWS_AS(arbitrage_time(ArbitrageHorizon::entropy_deadline, bad), InputError);
    bad = boo;
    bad.alpha = 0.5;
    REQUIRE_THROWS_AS(arbitrage_time(ArbitrageHorizon::boosted_deadline, bad), InputError);
    bad = roa;
    bad.eps = 1.0;  // denominator goes negative
    REQUIRE_THROWS_AS(arbitrage_time(ArbitrageHorizon::roa_deadline, bad), InputError);
    bad = bet;
    bad.p = 1.0;
    REQUIRE_THROWS_AS(arbitrage_time(ArbitrageHorizon::beta_deadline, bad), InputError);
}

TEST_CASE("bound check bookkeeping") {
    BoundCheck chk;
    chk.feed(0, 0.5);
    chk.feed(1, -0.2);
    chk.feed(2, 0.3);
    chk.feed(3, -0.4);
    REQUIRE_FALSE(chk.holds_everywhere);
    REQUIRE(chk.worst_margin == Approx(-0.4));
    REQUIRE(chk.first_violation_step == 1);
    REQUIRE(chk.n_points == 4);
}

TEST_CASE("entropy floor holds along simulated stabilized markets") {
    const SimGrid grid = SimGrid::from_horizon(1.0, 1e-3, 777);
    const auto paths = simulate_market(vsm_spec(3), grid, 3);
    const auto ups = Upsilon::volatility_stabilized(3);
    const auto ent = make_entropy(3, 1.0);
    for (const auto& path : paths) {
        const WeightsPath mu = market_weights_path(path);
        const WeightsPath pi = generated_weights_path(ent, mu);
        const Vec lr =
            log_relative_value(portfolio_value_path(path, pi), portfolio_value_path(path, mu));
        const double s0 = ent.value(mu.weights.col(0), Vec()) - 1.0;  // Shannon entropy
        const auto chk = check_entropy_bound(lr, path.times, 1.0, 3, s0, ups);
        REQUIRE(chk.holds_everywhere);
        REQUIRE(chk.worst_margin > 0.1);
        REQUIRE(chk.n_points == grid.n_steps + 1);

        // The deflated variant only raises the floor, but stays below the
        // realized path for this generous eps.
        const auto red = check_reduced_entropy_bound(lr, path.times, 1.0, 0.2, 3, s0, ups);
        REQUIRE(red.worst_margin < chk.worst_margin);
        REQUIRE(red.holds_everywhere);
    }
}

TEST_CASE("bound formulas evaluate to hand values at fixed points") {
    Vec times(2), zero(2);
    times << 0.0, 1.0;
    zero.setZero();
    const auto ups = Upsilon::linear(0.5);

    // Boosted: rhs(0) = log(0.8), rhs(1) = log(0.8) + 0.0185362 + 0.0478056.
    const auto boo = check_boosted_bound(zero, times, 1.0, 0.1, 2, ups);
    REQUIRE(boo.holds_everywhere);
    REQUIRE(boo.worst_margin == Approx(0.1568017).epsilon(1e-5));

    // Covariation tilt: cap = 4, base = -log 4, slope = 0.125.
    const auto bet = check_beta_bound(zero, times, 0.0, 1.0, 0.5, 4, 2.0);
    REQUIRE(bet.worst_margin == Approx(std::log(4.0) - 0.125).epsilon(1e-12));

    // Quality ceiling: rhs(t) = 1 - e^{-1} + 1 + 0.01 t - 0.0183940 t.
    RoaSpec rs;
    rs.n = 4;
    rs.varsigma = 1.0;
    rs.eta = 1.0;
    rs.A = 1.0;
    rs.delta = 0.1;
    rs.eps = 0.01;
    Vec long_times(2);
    long_times << 0.0, 10.0;
    const auto roa = check_roa_bound(zero, long_times, rs);
    REQUIRE(roa.holds_everywhere);
    REQUIRE(roa.worst_margin == Approx(1.5481810).epsilon(1e-6));
    Vec high(2);
    high << 2.0, 2.0;
    REQUIRE_FALSE(check_roa_bound(high, long_times, rs).holds_everywhere);
}

TEST_CASE("relative return against another generated portfolio") {
    const SimGrid grid = SimGrid::from_horizon(1.0, 5e-4, 4242);
    const Run r = simulate_one_run(cld_spec(3, 0.2), grid);

    const auto ewp = make_geometric_mean(3);
    const auto ent = make_entropy(3, 1.0);
    const auto dec_ewp = decompose_generated(r, ewp, nullptr);
    const auto dec_ent = decompose_generated(r, ent, nullptr);
    REQUIRE(dec_ewp.max_abs_residual < 1e-5);
    REQUIRE(dec_ent.max_abs_residual < 1e-5);

    // Same portfolio on both sides: exactly zero everywhere.
    const auto self = relative_return_vs_portfolio(dec_ent, dec_ent);
    REQUIRE(self.direct.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(self.max_abs_residual == 0.0);

    // Cross-portfolio: assembled account matches the direct wealth ratio up
    // to the two single-portfolio residuals.
    const auto cmp = relative_return_vs_portfolio(dec_ewp, dec_ent);
    REQUIRE(cmp.direct[grid.n_steps] ==
            Approx(dec_ewp.lhs[grid.n_steps] - dec_ent.lhs[grid.n_steps]).margin(1e-15));
    REQUIRE(cmp.max_abs_residual <=
            dec_ewp.max_abs_residual + dec_ent.max_abs_residual + 1e-12);
    REQUIRE(cmp.max_abs_residual < 1e-5);

    MasterDecomposition shorter = dec_ent;
    shorter.lhs = dec_ent.lhs.head(10);
    REQUIRE_THROWS_AS(relative_return_vs_portfolio(dec_ewp, shorter), InputError);
}
