#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "genfun.hpp"
#include "market.hpp"
#include "rng.hpp"

namespace sptlab {

// Characteristics sampled on the same grid as the market path they accompany.
struct CharacteristicsPath {
    Mat values;  // k x (n_steps + 1)
    bool finite_variation = false;
    std::vector<YMonotone> monotone;  // per component
    DomainBox domain;

    int k() const { return static_cast<int>(values.rows()); }
    int steps() const { return static_cast<int>(values.cols()) - 1; }
};

// P_t = t: one deterministic, increasing, finite-variation characteristic.
inline CharacteristicsPath time_characteristic(const SimGrid& grid) {
    CharacteristicsPath p;
    p.values = grid.times().transpose();
    p.finite_variation = true;
    p.monotone = {YMonotone::increasing};
    p.domain = DomainBox::nonnegative(1);
    return p;
}

// Cumulative product of increments of two series: sum_s (a_s - a_{s-1})(b_s - b_{s-1}).
inline Vec realized_covariation_path(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.size() < 1)
        throw InputError("realized_covariation_path: length mismatch");
    Vec out(a.size());
    out[0] = 0.0;
    for (Eigen::Index s = 1; s < a.size(); ++s)
        out[s] = out[s - 1] + (a[s] - a[s - 1]) * (b[s] - b[s - 1]);
    return out;
}

inline double realized_covariation(const Vec& a, const Vec& b) {
    return realized_covariation_path(a, b)[a.size() - 1];
}

// beta^i_t = sum_{s<=t} (X^i_s - X^i_{s-1})(Z^mu_s - Z^mu_{s-1}), beta_0 = 0,
// with Z^mu the market-portfolio value normalized to start at 1. Signs flip
// each component so the adjusted covariation trends upward; they are held
// constant per stock.
inline CharacteristicsPath beta_characteristic(const MarketPath& path, const Vec& signs) {
    const int n = path.n();
    const int N = path.steps();
    if (signs.size() != n) throw InputError("beta_characteristic: signs size mismatch");
    Vec z_mu(N + 1);
    const double total0 = path.prices.col(0).sum();
    for (int t = 0; t <= N; ++t) z_mu[t] = path.prices.col(t).sum() / total0;

    CharacteristicsPath p;
    p.values = Mat::Zero(n, N + 1);
    for (int i = 0; i < n; ++i) {
        const Vec xi = path.prices.row(i).transpose();
        p.values.row(i) = (signs[i] * realized_covariation_path(xi, z_mu)).transpose();
    }
    p.finite_variation = true;  // quadratic covariation of continuous semimartingales
    p.monotone.assign(static_cast<std::size_t>(n), YMonotone::none);
    p.domain = DomainBox::nonnegative(n);
    return p;
}

// Sign of the pooled full-sample covariation per stock; zero maps to +1.
inline Vec estimate_beta_signs(const std::vector<MarketPath>& paths) {
    if (paths.empty()) throw InputError("estimate_beta_signs: no paths");
    const int n = paths.front().n();
    Vec acc = Vec::Zero(n);
    for (const auto& path : paths) {
        const int N = path.steps();
        Vec z_mu(N + 1);
        const double total0 = path.prices.col(0).sum();
        for (int t = 0; t <= N; ++t) z_mu[t] = path.prices.col(t).sum() / total0;
        for (int i = 0; i < n; ++i)
            acc[i] += realized_covariation(path.prices.row(i).transpose(), z_mu);
    }
    Vec signs(n);
    for (int i = 0; i < n; ++i) signs[i] = acc[i] < 0.0 ? -1.0 : 1.0;
    return signs;
}

inline CharacteristicsPath beta_characteristic(const MarketPath& path) {
    return beta_characteristic(path, Vec::Ones(path.n()));
}

// Synthetic return-on-assets processes: independent diffusions confined to
// (0, varsigma) whose summed quadratic-variation rate stays above eta, with
// drift-bound constants (A, eps) and a market non-failure floor delta used by
// the admission checks.
struct RoaSpec {
    int n = 0;
    double varsigma = 1.0;
    double eta = 1.0;     // floor for sum_i d<R^i>/dt
    double A = 1.0;       // additive constant of the drift bound
    double eps = 0.0;     // slope of the drift bound; must be < delta e^{-varsigma} eta / 2
    double delta = 0.05;  // market weights must stay above this

    void validate() const {
        if (n < 2) throw InputError("RoaSpec: need n >= 2");
        if (!(varsigma > 0.0)) throw InputError("RoaSpec: varsigma must be positive");
        if (!(eta > 0.0)) throw InputError("RoaSpec: eta must be positive");
        if (!(A >= 0.0)) throw InputError("RoaSpec: A must be >= 0");
        if (!(delta > 0.0 && delta < 1.0 / n))
            throw InputError("RoaSpec: delta must lie in (0, 1/n)");
        if (!(eps >= 0.0 && eps < 0.5 * delta * std::exp(-varsigma) * eta))
            throw InputError("RoaSpec: eps must lie in [0, delta e^{-varsigma} eta / 2)");
    }

    // Upper bound on the horizon after which the generated portfolio must
    // trail the market: 2 (1 + A - e^{-varsigma}) / (delta eta e^{-varsigma} - 2 eps).
    double outperformance_deadline() const {
        const double denom = delta * eta * std::exp(-varsigma) - 2.0 * eps;
        if (!(denom > 0.0)) throw InputError("RoaSpec: deadline denominator not positive");
        return 2.0 * (1.0 + A - std::exp(-varsigma)) / denom;
    }
};

namespace detail {

struct RoaCalibration {
    double nu = 0.0;     // driver volatility
    double theta = 0.0;  // mean-reversion speed
};

// R^i = varsigma * logistic(U^i) with U an Ornstein-Uhlenbeck driver. At
// U = 0 the squashed QV rate is nu^2 varsigma^2 / 16 per stock; the margin
// and the tight stationary spread keep the summed rate above eta away from 0.
inline RoaCalibration calibrate_roa(const RoaSpec& spec, double dt) {
    const double margin = 1.8;
    RoaCalibration cal;
    const double nu2 = margin * 16.0 * spec.eta / (spec.n * spec.varsigma * spec.varsigma);
    cal.nu = std::sqrt(nu2);
    const double stationary_sd = 0.45;
    cal.theta = nu2 / (2.0 * stationary_sd * stationary_sd);
    if (cal.nu * std::sqrt(dt) > 0.25 || cal.theta * dt > 0.5)
        throw InputError(
            "synthetic_roa: requested eta is unattainable inside (0, varsigma) at this dt; "
            "refine the grid");
    return cal;
}

}  // namespace detail

// One path of n independent ROA processes. Noise streams are disjoint from
// the market streams (distinct purpose tag), preserving zero cross-variation.
inline CharacteristicsPath synthetic_roa(const RoaSpec& spec, const SimGrid& grid,
                                         int path_index) {
    spec.validate();
    const auto cal = detail::calibrate_roa(spec, grid.dt);
    const int n = spec.n;
    const int N = grid.n_steps;

    NoiseStream stream(NoiseStream::derive_key(grid.master_seed, kCharacteristicsNoiseTag,
                                               static_cast<std::uint64_t>(path_index)));
    const double decay = std::exp(-cal.theta * grid.dt);
    const double step_sd =
        cal.nu * std::sqrt((1.0 - decay * decay) / (2.0 * cal.theta));  // exact OU update

    CharacteristicsPath p;
    p.values.resize(n, N + 1);
    Vec u = Vec::Zero(n);
    auto squash = [&](double v) { return spec.varsigma / (1.0 + std::exp(-v)); };
    for (int i = 0; i < n; ++i) p.values(i, 0) = squash(u[i]);
    for (int s = 0; s < N; ++s) {
        for (int i = 0; i < n; ++i) {
            const double z = stream.gaussian(static_cast<std::uint64_t>(s) * n + i);
            u[i] = u[i] * decay + step_sd * z;
            p.values(i, s + 1) = squash(u[i]);
        }
    }
    p.finite_variation = false;
    p.monotone.assign(static_cast<std::size_t>(n), YMonotone::none);
    p.domain = DomainBox::open_interval(n, 0.0, spec.varsigma);
    return p;
}

struct RoaAssumptionReport {
    bool weights_above_floor = false;   // min_t min_i mu >= delta
    bool roa_in_range = false;          // 0 < R < varsigma throughout
    bool cross_variation_zero = false;  // |<mu^i, R^i>| within Monte Carlo noise
    bool qv_floor_met = false;          // windowed realized QV rate >= eta
    bool drift_bound_met = false;       // running integral < A + eps t throughout

    double min_weight = 0.0;
    double worst_cross_ratio = 0.0;  // |sum| / (4 * realized se)
    double min_qv_rate = 0.0;
    double qv_fraction_above_090 = 0.0;  // fraction of windows with rate >= 0.9 eta
    double drift_bound_margin = 0.0;     // min_t (A + eps t - V_t)

    bool admissible() const {
        return weights_above_floor && roa_in_range && cross_variation_zero && qv_floor_met &&
               drift_bound_met;
    }
};

// Checks the admission assumptions on one (market, ROA) path pair. The QV
// floor uses a trailing window of realized increments; the cross-variation
// check compares the realized sum against four times its realized standard
// error.
inline RoaAssumptionReport verify_roa_assumptions(const WeightsPath& mu,
                                                  const CharacteristicsPath& roa,
                                                  const RoaSpec& spec, double dt,
                                                  int window = 100) {
    spec.validate();
    const int n = spec.n;
    const int N = roa.steps();
    if (mu.weights.cols() != N + 1 || mu.weights.rows() != n || roa.k() != n)
        throw InputError("verify_roa_assumptions: shape mismatch");
    if (window < 1 || window > N) throw InputError("verify_roa_assumptions: bad window");

    RoaAssumptionReport rep;

    rep.min_weight = mu.weights.minCoeff();
    rep.weights_above_floor = rep.min_weight >= spec.delta;

    rep.roa_in_range = true;
    for (int t = 0; t <= N && rep.roa_in_range; ++t)
        for (int i = 0; i < n; ++i)
            if (!(roa.values(i, t) > 0.0 && roa.values(i, t) < spec.varsigma)) {
                rep.roa_in_range = false;
                break;
            }

    rep.worst_cross_ratio = 0.0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0, var = 0.0;
        for (int s = 0; s < N; ++s) {
            const double dm = mu.weights(i, s + 1) - mu.weights(i, s);
            const double dr = roa.values(i, s + 1) - roa.values(i, s);
            acc += dm * dr;
            var += dm * dm * dr * dr;
        }
        const double se = std::sqrt(var);
        const double ratio = se > 0.0 ? std::abs(acc) / (4.0 * se) : (acc == 0.0 ? 0.0 : 1e30);
        rep.worst_cross_ratio = std::max(rep.worst_cross_ratio, ratio);
    }
    rep.cross_variation_zero = rep.worst_cross_ratio <= 1.0;

    // Rolling realized rate sum_i <R^i> over the trailing window.
    Vec step_qv(N);
    for (int s = 0; s < N; ++s) {
        double q = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dr = roa.values(i, s + 1) - roa.values(i, s);
            q += dr * dr;
        }
        step_qv[s] = q;
    }
    double rolling = 0.0;
    rep.min_qv_rate = std::numeric_limits<double>::infinity();
    int above = 0, total = 0;
    for (int s = 0; s < N; ++s) {
        rolling += step_qv[s];
        if (s >= window) rolling -= step_qv[s - window];
        if (s >= window - 1) {
            const double rate = rolling / (window * dt);
            rep.min_qv_rate = std::min(rep.min_qv_rate, rate);
            ++total;
            if (rate >= 0.9 * spec.eta) ++above;
        }
    }
    rep.qv_fraction_above_090 = total > 0 ? static_cast<double>(above) / total : 0.0;
    rep.qv_floor_met = rep.min_qv_rate >= spec.eta;

    // Running integral sum_i int mu^i e^{-R^i} dR^i with left-point sums.
    double v = 0.0;
    rep.drift_bound_margin = spec.A;  // value at t = 0
    for (int s = 0; s < N; ++s) {
        for (int i = 0; i < n; ++i) {
            const double dr = roa.values(i, s + 1) - roa.values(i, s);
            v += mu.weights(i, s) * std::exp(-roa.values(i, s)) * dr;
        }
        const double bound = spec.A + spec.eps * (s + 1) * dt;
        rep.drift_bound_margin = std::min(rep.drift_bound_margin, bound - v);
    }
    rep.drift_bound_met = rep.drift_bound_margin > 0.0;

    return rep;
}

// Weights generated by S at every grid point, sampling the characteristics
// path when S expects one.
inline WeightsPath generated_weights_path(const GeneratingFunction& s, const WeightsPath& mu,
                                          const CharacteristicsPath* P = nullptr) {
    const int N = static_cast<int>(mu.weights.cols()) - 1;
    if (s.k > 0) {
        if (P == nullptr) throw InputError("generated_weights_path: S expects characteristics");
        if (P->k() != s.k || P->steps() != N)
            throw InputError("generated_weights_path: characteristics grid misaligned");
    }
    WeightsPath w;
    w.weights.resize(mu.weights.rows(), N + 1);
    const Vec empty;
    for (int t = 0; t <= N; ++t)
        w.weights.col(t) =
            generalized_weights(s, mu.weights.col(t), s.k > 0 ? Vec(P->values.col(t)) : empty);
    return w;
}

// ROA weight map R^i -> pi^i = mu^i (e^{-R^i} + 1 - sum_j mu^j e^{-R^j}),
// the weights generated by exp(sum_i x^i e^{-y^i}).
inline Vec roa_weights(const Vec& mu, const Vec& roa) {
    if (mu.size() != roa.size()) throw InputError("roa_weights: size mismatch");
    const Vec e = (-roa.array()).exp();
    const double dot = mu.dot(e);
    return mu.array() * (e.array() + 1.0 - dot);
}

}  // namespace sptlab
