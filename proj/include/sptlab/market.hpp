#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace sptlab {

// Equity market with d log X^i = gamma^i dt + sum_j xi^{ij} dB^j. The log
// update is exact when the coefficients are constant.
struct ConstantLogDiffusion {
    Vec gamma;  // n
    Mat xi;     // n x n
};

// d log X^i = (alpha / (2 mu^i)) dt + (1 / sqrt(mu^i)) dB^i, where mu are the
// market weights. Small weights amplify both drift and noise, which keeps the
// weight vector away from the simplex boundary.
struct VolatilityStabilized {
    double alpha = 1.0;
};

struct MarketSpec {
    int n = 0;
    Vec initial_prices;
    std::variant<VolatilityStabilized, ConstantLogDiffusion> model;

    void validate() const {
        if (n < 2) throw InputError("MarketSpec: need at least two stocks");
        if (initial_prices.size() != n) throw InputError("MarketSpec: initial_prices size mismatch");
        for (int i = 0; i < n; ++i) {
            if (!(initial_prices[i] > 0.0))
                throw InputError("MarketSpec: initial price of stock " + std::to_string(i) +
                                 " is not positive");
        }
        if (const auto* cld = std::get_if<ConstantLogDiffusion>(&model)) {
            if (cld->gamma.size() != n) throw InputError("MarketSpec: gamma size mismatch");
            if (cld->xi.rows() != n || cld->xi.cols() != n)
                throw InputError("MarketSpec: xi must be n x n");
        } else {
            const auto& vs = std::get<VolatilityStabilized>(model);
            if (!(vs.alpha >= 0.0)) throw InputError("MarketSpec: alpha must be >= 0");
        }
    }

    bool is_volatility_stabilized() const {
        return std::holds_alternative<VolatilityStabilized>(model);
    }
};

struct SimGrid {
    double horizon = 1.0;
    double dt = 1e-3;
    int n_steps = 1000;
    std::uint64_t master_seed = 0;

    // Horizon is defined as n_steps * dt exactly, so downstream consistency
    // checks never fight floating-point drift.
    static SimGrid from_steps(int n_steps, double dt, std::uint64_t master_seed) {
        if (n_steps < 1) throw InputError("SimGrid: n_steps must be >= 1");
        if (!(dt > 0.0)) throw InputError("SimGrid: dt must be > 0");
        return SimGrid{static_cast<double>(n_steps) * dt, dt, n_steps, master_seed};
    }

    static SimGrid from_horizon(double horizon, double dt, std::uint64_t master_seed) {
        if (!(dt > 0.0)) throw InputError("SimGrid: dt must be > 0");
        if (!(horizon > 0.0)) throw InputError("SimGrid: horizon must be > 0");
        const int n_steps = static_cast<int>(std::llround(horizon / dt));
        if (n_steps < 1 || std::abs(n_steps * dt - horizon) > 1e-12 * std::max(1.0, horizon))
            throw InputError("SimGrid: horizon is not an integer multiple of dt");
        return SimGrid{static_cast<double>(n_steps) * dt, dt, n_steps, master_seed};
    }

    Vec times() const {
        Vec t(n_steps + 1);
        for (int s = 0; s <= n_steps; ++s) t[s] = s * dt;
        return t;
    }
};

struct MarketPath {
    Vec times;    // n_steps + 1
    Mat prices;   // n x (n_steps + 1), strictly positive
    Mat noise;    // n x n_steps standard normals (empty when not retained)
    long clamp_events = 0;  // coefficient evaluations that hit the weight floor
    std::uint64_t master_seed = 0;
    int path_index = 0;

    int n() const { return static_cast<int>(prices.rows()); }
    int steps() const { return static_cast<int>(prices.cols()) - 1; }
    double dt() const { return steps() > 0 ? times[1] - times[0] : 0.0; }
};

struct WeightsPath {
    Mat weights;  // n x (n_steps + 1)
};

struct ValuePath {
    Vec values;  // n_steps + 1
};

// Weight floor used inside drift/diffusion coefficient evaluation only; the
// simulated prices themselves stay positive by construction (log updates).
inline constexpr double kWeightFloor = 1e-8;

namespace detail {

inline Vec weights_from_log_prices(const Vec& log_x) {
    const double m = log_x.maxCoeff();
    Vec w = (log_x.array() - m).exp();
    return w / w.sum();
}

inline MarketPath simulate_one(const MarketSpec& spec, const SimGrid& grid, int path_index,
                               bool keep_noise) {
    const int n = spec.n;
    const int N = grid.n_steps;
    const double dt = grid.dt;
    const double sqrt_dt = std::sqrt(dt);

    MarketPath path;
    path.times = grid.times();
    path.prices.resize(n, N + 1);
    if (keep_noise) path.noise.resize(n, N);
    path.master_seed = grid.master_seed;
    path.path_index = path_index;

    NoiseStream stream(NoiseStream::derive_key(grid.master_seed, kMarketNoiseTag,
                                               static_cast<std::uint64_t>(path_index)));

    Vec log_x = spec.initial_prices.array().log();
    path.prices.col(0) = spec.initial_prices;

    Vec g(n);
    const auto* cld = std::get_if<ConstantLogDiffusion>(&spec.model);
    for (int s = 0; s < N; ++s) {
        for (int i = 0; i < n; ++i)
            g[i] = stream.gaussian(static_cast<std::uint64_t>(s) * n + i);
        if (keep_noise) path.noise.col(s) = g;

        if (cld) {
            log_x += cld->gamma * dt + sqrt_dt * (cld->xi * g);
        } else {
            const double alpha = std::get<VolatilityStabilized>(spec.model).alpha;
            const Vec mu = weights_from_log_prices(log_x);
            for (int i = 0; i < n; ++i) {
                double m = mu[i];
                if (m < kWeightFloor) {
                    m = kWeightFloor;
                    ++path.clamp_events;
                }
                log_x[i] += 0.5 * alpha / m * dt + sqrt_dt / std::sqrt(m) * g[i];
            }
        }
        path.prices.col(s + 1) = log_x.array().exp();
    }
    return path;
}

// Minimal index-sharded parallel loop. Work item i is independent of all
// others, so the shard assignment cannot affect results.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&fn, w, workers, count] {
            for (int i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Simulates n_paths independent paths. Path i consumes only its own counter
// stream, so the result is identical for any thread count.
inline std::vector<MarketPath> simulate_market(const MarketSpec& spec, const SimGrid& grid,
                                               int n_paths, int threads = 1,
                                               bool keep_noise = true) {
    spec.validate();
    if (n_paths < 1) throw InputError("simulate_market: n_paths must be >= 1");
    std::vector<MarketPath> out(static_cast<std::size_t>(n_paths));
    detail::parallel_for(n_paths, threads, [&](int i) {
        out[static_cast<std::size_t>(i)] = detail::simulate_one(spec, grid, i, keep_noise);
    });
    return out;
}

inline WeightsPath market_weights_path(const MarketPath& path) {
    WeightsPath wp;
    wp.weights.resize(path.prices.rows(), path.prices.cols());
    for (Eigen::Index t = 0; t < path.prices.cols(); ++t) {
        const double total = path.prices.col(t).sum();
        wp.weights.col(t) = path.prices.col(t) / total;
    }
    return wp;
}

// tau^{ij} = sigma^{ij} - sigma^{i pi} - sigma^{j pi} + sigma^{pi pi}.
// Positive semidefinite with pi in its kernel whenever sigma is PSD.
inline Mat relative_covariance(const Mat& sigma, const Vec& pi) {
    if (sigma.rows() != sigma.cols() || sigma.rows() != pi.size())
        throw InputError("relative_covariance: dimension mismatch");
    const Vec v = sigma * pi;
    const double q = pi.dot(v);
    Mat tau = sigma;
    tau.rowwise() -= v.transpose();
    tau.colwise() -= v;
    tau.array() += q;
    return tau;
}

struct CovariancePath {
    std::vector<Mat> sigma;  // one per grid point
    std::vector<Mat> tau;    // relative to the market weights at the same point
    int warmup_end = 0;      // indices below this used a shorter, expanding window
};

// Realized covariance rate from trailing log-price increments. Index t uses
// the last min(window, t) increments; t = 0 copies the t = 1 estimate and is
// inside the flagged warmup range.
inline CovariancePath estimate_covariance(const MarketPath& path, int window = 60) {
    if (window < 1) throw InputError("estimate_covariance: window must be >= 1");
    const int n = path.n();
    const int N = path.steps();
    if (N < 1) throw InputError("estimate_covariance: path has no increments");
    const double dt = path.dt();

    const WeightsPath mu = market_weights_path(path);
    CovariancePath cp;
    cp.sigma.resize(N + 1);
    cp.tau.resize(N + 1);
    cp.warmup_end = std::min(window, N);

    std::vector<Mat> prefix(static_cast<std::size_t>(N) + 1);
    prefix[0] = Mat::Zero(n, n);
    Mat log_prices = path.prices.array().log();
    for (int s = 0; s < N; ++s) {
        const Vec d = log_prices.col(s + 1) - log_prices.col(s);
        prefix[s + 1] = prefix[s] + d * d.transpose();
    }
    for (int t = 1; t <= N; ++t) {
        const int m = std::min(window, t);
        cp.sigma[t] = (prefix[t] - prefix[t - m]) / (m * dt);
        cp.tau[t] = relative_covariance(cp.sigma[t], mu.weights.col(t));
    }
    cp.sigma[0] = cp.sigma[1];
    cp.tau[0] = relative_covariance(cp.sigma[0], mu.weights.col(0));
    return cp;
}

// Model-implied covariance along the path (no estimation error): diagonal
// 1/mu^i for the stabilized model, xi xi^T for constant log diffusion.
inline CovariancePath exact_covariance(const MarketSpec& spec, const MarketPath& path) {
    spec.validate();
    const int N = path.steps();
    const WeightsPath mu = market_weights_path(path);
    CovariancePath cp;
    cp.sigma.resize(N + 1);
    cp.tau.resize(N + 1);
    cp.warmup_end = 0;
    if (const auto* cld = std::get_if<ConstantLogDiffusion>(&spec.model)) {
        const Mat sigma = cld->xi * cld->xi.transpose();
        for (int t = 0; t <= N; ++t) {
            cp.sigma[t] = sigma;
            cp.tau[t] = relative_covariance(sigma, mu.weights.col(t));
        }
    } else {
        for (int t = 0; t <= N; ++t) {
            cp.sigma[t] = Mat(mu.weights.col(t).cwiseInverse().asDiagonal());
            cp.tau[t] = relative_covariance(cp.sigma[t], mu.weights.col(t));
        }
    }
    return cp;
}

// gamma^{pi,*} = (1/2)(sum_i pi^i sigma^{ii} - pi . sigma pi).
inline double excess_growth_rate(const Mat& sigma, const Vec& pi) {
    if (sigma.rows() != sigma.cols() || sigma.rows() != pi.size())
        throw InputError("excess_growth_rate: dimension mismatch");
    return 0.5 * (pi.dot(sigma.diagonal()) - pi.dot(sigma * pi));
}

// Same quantity through the covariances relative to an arbitrary reference
// portfolio zeta; equal to the direct form for every zeta.
inline double excess_growth_rate_via_numeraire(const Mat& sigma, const Vec& pi, const Vec& zeta) {
    const Mat tau = relative_covariance(sigma, zeta);
    return 0.5 * (pi.dot(tau.diagonal()) - pi.dot(tau * pi));
}

// Compact form (1/2) sum_i pi^i tau^{pi,ii}.
inline double excess_growth_rate_compact(const Mat& sigma, const Vec& pi) {
    const Mat tau = relative_covariance(sigma, pi);
    return 0.5 * pi.dot(tau.diagonal());
}

struct ExcessGrowthRoutes {
    double direct = 0.0;
    double via_numeraire = 0.0;
    double compact = 0.0;
    double max_spread() const {
        const double lo = std::min(direct, std::min(via_numeraire, compact));
        const double hi = std::max(direct, std::max(via_numeraire, compact));
        return hi - lo;
    }
};

// Computes all three routes and enforces their agreement to 1e-10.
inline ExcessGrowthRoutes excess_growth_routes(const Mat& sigma, const Vec& pi, const Vec& zeta) {
    ExcessGrowthRoutes r;
    r.direct = excess_growth_rate(sigma, pi);
    r.via_numeraire = excess_growth_rate_via_numeraire(sigma, pi, zeta);
    r.compact = excess_growth_rate_compact(sigma, pi);
    if (r.max_spread() > 1e-10)
        throw ComputeError("excess_growth_routes: numeraire invariance violated beyond 1e-10");
    return r;
}

// Z_{t+1} = Z_t (1 + sum_i pi_t^i (X^i_{t+1} / X^i_t - 1)), frictionless.
inline ValuePath portfolio_value_path(const MarketPath& path, const WeightsPath& weights,
                                      double z0 = 1.0) {
    const int N = path.steps();
    if (weights.weights.rows() != path.prices.rows() || weights.weights.cols() != N + 1)
        throw InputError("portfolio_value_path: weights shape mismatch");
    if (!(z0 > 0.0)) throw InputError("portfolio_value_path: initial value must be positive");
    ValuePath vp;
    vp.values.resize(N + 1);
    vp.values[0] = z0;
    for (int s = 0; s < N; ++s) {
        double ret = 0.0;
        for (int i = 0; i < path.n(); ++i)
            ret += weights.weights(i, s) * (path.prices(i, s + 1) / path.prices(i, s) - 1.0);
        const double z = vp.values[s] * (1.0 + ret);
        if (!(z > 0.0))
            throw ComputeError("portfolio_value_path: value became non-positive at step " +
                               std::to_string(s + 1));
        vp.values[s + 1] = z;
    }
    return vp;
}

// log(Z^pi / Z^mu) along the grid.
inline Vec log_relative_value(const ValuePath& z_pi, const ValuePath& z_mu) {
    if (z_pi.values.size() != z_mu.values.size())
        throw InputError("log_relative_value: length mismatch");
    return (z_pi.values.array() / z_mu.values.array()).log();
}

// Cumulative realized excess growth of the market portfolio: step increment
// (1/2)(sum_i mu^i (d log X^i)^2 - (sum_i mu^i d log X^i)^2), summed. The
// terminal value divided by the horizon estimates the average rate.
inline Vec realized_market_excess_growth(const MarketPath& path) {
    const int N = path.steps();
    const WeightsPath mu = market_weights_path(path);
    Vec out(N + 1);
    out[0] = 0.0;
    for (int s = 0; s < N; ++s) {
        double m1 = 0.0, m2 = 0.0;
        for (int i = 0; i < path.n(); ++i) {
            const double d = std::log(path.prices(i, s + 1) / path.prices(i, s));
            m1 += mu.weights(i, s) * d;
            m2 += mu.weights(i, s) * d * d;
        }
        out[s + 1] = out[s] + 0.5 * (m2 - m1 * m1);
    }
    return out;
}

}  // namespace sptlab
