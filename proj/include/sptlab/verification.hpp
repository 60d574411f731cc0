#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "characteristics.hpp"
#include "decomposition.hpp"
#include "genfun.hpp"
#include "market.hpp"
#include "rng.hpp"

namespace sptlab {

// One verification check: pass/fail plus the margin by which it held (or
// failed), so a report can rank how close each property came to its limit.
struct CheckResult {
    std::string name;
    bool pass = false;
    double margin = 0.0;  // positive = headroom, negative = violation size
    std::string detail;
};

namespace detail {

inline Vec random_simplex(const NoiseStream& stream, std::uint64_t& ctr, int n) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = -std::log(stream.uniform(ctr++));
    x /= x.sum();
    return Vec::Constant(n, 0.05 / n) + 0.95 * x;
}

inline Mat random_covariance(const NoiseStream& stream, std::uint64_t& ctr, int n) {
    Mat xi(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) xi(i, j) = 0.3 * stream.gaussian(ctr++);
    return xi * xi.transpose();
}

inline double shannon_entropy(const Vec& mu) {
    double s = 0.0;
    for (int i = 0; i < mu.size(); ++i) s -= mu[i] * std::log(mu[i]);
    return s;
}

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << std::scientific << v;
    return ss.str();
}

struct GeneratedRun {
    MarketPath path;
    WeightsPath mu;
    ValuePath z_mu;
};

inline GeneratedRun simulate_generated(const MarketSpec& spec, const SimGrid& grid,
                                       int path_index = 0) {
    GeneratedRun r;
    auto paths = simulate_market(spec, grid, path_index + 1);
    r.path = std::move(paths[static_cast<std::size_t>(path_index)]);
    r.mu = market_weights_path(r.path);
    r.z_mu = portfolio_value_path(r.path, r.mu);
    return r;
}

inline MarketSpec vsm_spec(int n) {
    MarketSpec spec;
    spec.n = n;
    spec.initial_prices = Vec::Constant(n, 1.0);
    spec.model = VolatilityStabilized{1.0};
    return spec;
}

inline MarketSpec cld_spec(int n, double vol) {
    MarketSpec spec;
    spec.n = n;
    spec.initial_prices = Vec::Constant(n, 1.0);
    ConstantLogDiffusion m;
    m.gamma = Vec::Zero(n);
    m.xi = Mat::Identity(n, n) * vol;
    spec.model = m;
    return spec;
}

}  // namespace detail

// Analytic gradients and Hessians of every named generating function agree
// with finite differences of the level below.
inline CheckResult check_gradient_consistency(std::uint64_t seed) {
    CheckResult res;
    res.name = "gradient_consistency";
    const double tol = 1e-5;
    const std::vector<GeneratingFunction> functions{
        make_entropy(5, 0.1),
        make_geometric_mean(5),
        make_reduced_entropy(5, 1.0, 0.2),
        make_boosted_entropy(5, 1.0, 0.1),
        make_beta_genfun(5, 1e-4, 1e-4, 0.7),
        make_roa_genfun(5, 1.0),
        multiplicative_compose(make_entropy(5, 1.0), make_exp_neg_sum_map(2)),
    };
    double worst = 0.0;
    std::string worst_name;
    bool all_pass = true;
    for (std::size_t f = 0; f < functions.size(); ++f) {
        const auto rep = gradient_consistency_check(functions[f], 25, seed + f, tol);
        const double err = std::max(rep.worst_rel_err, rep.worst_hessian_rel_err);
        if (err > worst) {
            worst = err;
            worst_name = functions[f].name;
        }
        all_pass = all_pass && rep.pass;
    }
    res.pass = all_pass;
    res.margin = tol - worst;
    res.detail = "worst relative derivative error " + detail::fmt(worst) + " (" + worst_name +
                 "), tolerance " + detail::fmt(tol);
    return res;
}

// Negative control: a deliberately corrupted Hessian must be caught by the
// same consistency check.
inline CheckResult check_gradient_negative_control(std::uint64_t seed) {
    CheckResult res;
    res.name = "gradient_negative_control";
    GeneratingFunction broken = make_entropy(5, 1.0);
    const auto good_hessian = broken.hessian;
    broken.hessian = [good_hessian](const Vec& x, const Vec& y) {
        return Mat(1.25 * good_hessian(x, y));
    };
    const auto rep = gradient_consistency_check(broken, 25, seed, 1e-5);
    res.pass = !rep.pass;
    res.margin = rep.worst_hessian_rel_err - 1e-5;
    res.detail = "corrupted Hessian produced relative error " +
                 detail::fmt(rep.worst_hessian_rel_err) + "; check " +
                 (rep.pass ? "missed it" : "caught it");
    return res;
}

// For S(x, y) = f(x) g(y) the generated weights coincide with the classical
// weights of f and do not depend on y at all.
inline CheckResult check_multiplicative_weights_invariance(std::uint64_t seed, int n_draws = 50,
                                                           double tol = 1e-12) {
    CheckResult res;
    res.name = "multiplicative_weights_invariance";
    const int n = 5;
    const auto f = make_entropy(n, 1.0);
    const auto s = multiplicative_compose(f, make_exp_neg_sum_map(2));
    NoiseStream stream(NoiseStream::derive_key(seed, kAuxNoiseTag, 7));
    std::uint64_t ctr = 0;
    double worst = 0.0;
    for (int d = 0; d < n_draws; ++d) {
        const Vec x = detail::random_simplex(stream, ctr, n);
        Vec y1(2), y2(2);
        for (int j = 0; j < 2; ++j) {
            y1[j] = 0.1 + 2.4 * stream.uniform(ctr++);
            y2[j] = 0.1 + 2.4 * stream.uniform(ctr++);
        }
        const Vec w1 = generalized_weights(s, x, y1);
        const Vec w2 = generalized_weights(s, x, y2);
        const Vec wc = classical_weights(f, x);
        worst = std::max(worst, (w1 - w2).cwiseAbs().maxCoeff());
        worst = std::max(worst, (w1 - wc).cwiseAbs().maxCoeff());
    }
    res.pass = worst <= tol;
    res.margin = tol - worst;
    res.detail = "largest weight deviation across " + std::to_string(n_draws) + " draws: " +
                 detail::fmt(worst);
    return res;
}

// Decomposing with S(x, y) = f(x) g(y) must reproduce the classical
// decomposition of f: the residual and the drift content are unchanged by g.
inline CheckResult check_multiplicative_decomposition_invariance(std::uint64_t seed,
                                                                 double tol = 1e-12) {
    CheckResult res;
    res.name = "multiplicative_decomposition_invariance";
    const auto grid = SimGrid::from_horizon(0.5, 1e-3, seed ^ 0x51u);
    const auto run = detail::simulate_generated(detail::vsm_spec(4), grid);
    const auto ent = make_entropy(4, 1.0);
    const auto composed = multiplicative_compose(ent, make_exp_neg_sum_map(1));
    const auto clock = time_characteristic(grid);

    const auto weights = generated_weights_path(ent, run.mu);
    const auto z_pi = portfolio_value_path(run.path, weights);
    const auto dec_a = decompose(run.path, run.mu, nullptr, ent, z_pi, run.z_mu);
    const auto dec_b = decompose(run.path, run.mu, &clock, composed, z_pi, run.z_mu);

    double worst = (dec_a.residual - dec_b.residual).cwiseAbs().maxCoeff();
    const Vec inv_a = dec_a.log_s_change - dec_a.stoch_integral;
    const Vec inv_b = dec_b.log_s_change - dec_b.stoch_integral;
    worst = std::max(worst, (inv_a - inv_b).cwiseAbs().maxCoeff());
    worst = std::max(worst, (dec_a.drift_market - dec_b.drift_market).cwiseAbs().maxCoeff());

    res.pass = worst <= tol;
    res.margin = tol - worst;
    res.detail = "largest drift/residual deviation after multiplying in g(y): " +
                 detail::fmt(worst);
    return res;
}

// The relative covariance is positive semidefinite and annihilates its own
// weight vector, for long-only and shorted weights alike.
inline CheckResult check_relative_covariance_structure(std::uint64_t seed, int n_draws = 100,
                                                       double tol = 1e-10) {
    CheckResult res;
    res.name = "relative_covariance_structure";
    NoiseStream stream(NoiseStream::derive_key(seed, kAuxNoiseTag, 11));
    std::uint64_t ctr = 0;
    double worst = 0.0;
    for (int d = 0; d < n_draws; ++d) {
        const int n = 3 + static_cast<int>(stream.uniform(ctr++) * 5.0);
        const Mat sigma = detail::random_covariance(stream, ctr, n);
        Vec pi = detail::random_simplex(stream, ctr, n);
        if (d % 3 == 0) {
            // every third draw shorts one name
            pi[0] -= 0.4;
            pi /= pi.sum();
        }
        const Mat tau = relative_covariance(sigma, pi);
        const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Mat> eig(tau);
        worst = std::max(worst, -eig.eigenvalues().minCoeff() / scale);
        worst = std::max(worst, (tau * pi).cwiseAbs().maxCoeff() / scale);
    }
    res.pass = worst <= tol;
    res.margin = tol - worst;
    res.detail = "worst kernel residual / negative eigenvalue (relative): " + detail::fmt(worst);
    return res;
}

// Excess growth computed directly, through an arbitrary numeraire, and
// through the compact trace form must agree.
inline CheckResult check_numeraire_invariance(std::uint64_t seed, int n_triples = 100,
                                              double tol = 1e-10) {
    CheckResult res;
    res.name = "numeraire_invariance";
    NoiseStream stream(NoiseStream::derive_key(seed, kAuxNoiseTag, 13));
    std::uint64_t ctr = 0;
    double worst = 0.0;
    for (int d = 0; d < n_triples; ++d) {
        const int n = 3 + static_cast<int>(stream.uniform(ctr++) * 5.0);
        const Mat sigma = detail::random_covariance(stream, ctr, n);
        const Vec pi = detail::random_simplex(stream, ctr, n);
        const Vec zeta = detail::random_simplex(stream, ctr, n);
        const double direct = excess_growth_rate(sigma, pi);
        const double via = excess_growth_rate_via_numeraire(sigma, pi, zeta);
        const double compact = excess_growth_rate_compact(sigma, pi);
        worst = std::max({worst, std::abs(direct - via), std::abs(direct - compact)});
    }
    res.pass = worst <= tol;
    res.margin = tol - worst;
    res.detail = "largest spread between growth-rate routes over " + std::to_string(n_triples) +
                 " triples: " + detail::fmt(worst);
    return res;
}

// The pathwise decomposition closes to the discretization error on both a
// volatility-stabilized and a constant-diffusion market.
inline CheckResult check_master_equation_residual(std::uint64_t seed) {
    CheckResult res;
    res.name = "master_equation_residual";
    const double tol_vsm = 5e-3;
    const double tol_cld = 1e-4;

    const auto grid_a = SimGrid::from_horizon(0.5, 1e-3, seed ^ 0xA1u);
    const auto s_a = make_reduced_entropy(5, 1.0, 0.2);
    const auto clock = time_characteristic(grid_a);
    std::vector<double> maxima;
    const auto paths_a = simulate_market(detail::vsm_spec(5), grid_a, 5);
    for (const auto& path : paths_a) {
        const auto mu = market_weights_path(path);
        const auto z_mu = portfolio_value_path(path, mu);
        const auto w = generated_weights_path(s_a, mu, &clock);
        const auto z_pi = portfolio_value_path(path, w);
        maxima.push_back(decompose(path, mu, &clock, s_a, z_pi, z_mu).max_abs_residual);
    }
    std::sort(maxima.begin(), maxima.end());
    const double median_vsm = maxima[maxima.size() / 2];

    const auto grid_b = SimGrid::from_horizon(0.5, 5e-4, seed ^ 0xB2u);
    const auto s_b = make_geometric_mean(4);
    double worst_cld = 0.0;
    const auto paths_b = simulate_market(detail::cld_spec(4, 0.2), grid_b, 3);
    for (const auto& path : paths_b) {
        const auto mu = market_weights_path(path);
        const auto z_mu = portfolio_value_path(path, mu);
        const auto w = generated_weights_path(s_b, mu);
        const auto z_pi = portfolio_value_path(path, w);
        worst_cld =
            std::max(worst_cld, decompose(path, mu, nullptr, s_b, z_pi, z_mu).max_abs_residual);
    }

    res.pass = median_vsm <= tol_vsm && worst_cld <= tol_cld;
    res.margin = std::min(tol_vsm - median_vsm, tol_cld - worst_cld);
    res.detail = "median residual " + detail::fmt(median_vsm) + " (tol " + detail::fmt(tol_vsm) +
                 "), constant-diffusion worst " + detail::fmt(worst_cld) + " (tol " +
                 detail::fmt(tol_cld) + ")";
    return res;
}

// With monotone finite-variation characteristics pointing the right way, the
// extended drift is nondecreasing along the path.
inline CheckResult check_drift_monotonicity_lemma(std::uint64_t seed) {
    CheckResult res;
    res.name = "drift_monotonicity";
    const auto grid = SimGrid::from_horizon(0.5, 1e-3, seed ^ 0xC3u);
    const auto run = detail::simulate_generated(detail::vsm_spec(4), grid);
    const auto s = make_reduced_entropy(4, 1.0, 0.2);
    const auto clock = time_characteristic(grid);
    const auto w = generated_weights_path(s, run.mu, &clock);
    const auto z_pi = portfolio_value_path(run.path, w);
    const auto dec = decompose(run.path, run.mu, &clock, s, z_pi, run.z_mu);
    const auto rep = check_drift_monotonicity(dec, s, &clock);
    res.pass = rep.applicable && rep.violations == 0;
    res.margin = rep.worst_step;
    res.detail = rep.applicable
                     ? std::to_string(rep.violations) + " drift decreases (worst step " +
                           detail::fmt(rep.worst_step) + ")"
                     : "check unexpectedly inapplicable: " + rep.reason;
    return res;
}

// The entropy-weighted portfolio respects its pathwise floor, with and
// without the tanh reduction, on volatility-stabilized paths.
inline CheckResult check_entropy_bound_floor(std::uint64_t seed) {
    CheckResult res;
    res.name = "entropy_bound_floor";
    const int n = 5;
    const double c = 1.0;
    const auto grid = SimGrid::from_horizon(1.0, 1e-3, seed ^ 0xD4u);
    const auto ups = Upsilon::volatility_stabilized(n);
    const auto ent = make_entropy(n, c);
    const auto red = make_reduced_entropy(n, c, 0.2);
    const auto clock = time_characteristic(grid);
    double worst = std::numeric_limits<double>::infinity();
    bool all_hold = true;
    const auto paths = simulate_market(detail::vsm_spec(n), grid, 3);
    for (const auto& path : paths) {
        const auto mu = market_weights_path(path);
        const auto z_mu = portfolio_value_path(path, mu);
        const double s_mu0 = detail::shannon_entropy(mu.weights.col(0));

        const auto w_ent = generated_weights_path(ent, mu);
        const Vec lr_ent =
            log_relative_value(portfolio_value_path(path, w_ent), z_mu);
        const auto chk_ent = check_entropy_bound(lr_ent, path.times, c, n, s_mu0, ups);
        all_hold = all_hold && chk_ent.holds_everywhere;
        worst = std::min(worst, chk_ent.worst_margin);

        const auto w_red = generated_weights_path(red, mu, &clock);
        const Vec lr_red =
            log_relative_value(portfolio_value_path(path, w_red), z_mu);
        const auto chk_red =
            check_reduced_entropy_bound(lr_red, path.times, c, 0.2, n, s_mu0, ups);
        all_hold = all_hold && chk_red.holds_everywhere;
        worst = std::min(worst, chk_red.worst_margin);
    }
    res.pass = all_hold;
    res.margin = worst;
    res.detail = "smallest pathwise floor margin across entropy and reduced variants: " +
                 detail::fmt(worst);
    return res;
}

inline std::vector<CheckResult> run_verification_suite(std::uint64_t seed) {
    return {
        check_gradient_consistency(seed),
        check_gradient_negative_control(seed + 1),
        check_multiplicative_weights_invariance(seed + 2),
        check_multiplicative_decomposition_invariance(seed + 3),
        check_relative_covariance_structure(seed + 4),
        check_numeraire_invariance(seed + 5),
        check_master_equation_residual(seed + 6),
        check_drift_monotonicity_lemma(seed + 7),
        check_entropy_bound_floor(seed + 8),
    };
}

}  // namespace sptlab
