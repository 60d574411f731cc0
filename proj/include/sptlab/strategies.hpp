#pragma once

#include <memory>
#include <string>

#include "backtest.hpp"
#include "characteristics.hpp"
#include "common.hpp"
#include "genfun.hpp"

namespace sptlab {

// Inputs a daily strategy may look at: capitalizations (price x shares) for
// market weights and scaled return-on-assets scores. Column t is the value
// observable when forming the portfolio held over (t, t+1].
struct StrategyInputs {
    Mat prices;  // n x (T+1), positive
    Mat caps;    // n x (T+1), positive
    Mat roa;     // n x (T+1); empty unless a strategy needs it

    int n() const { return static_cast<int>(caps.rows()); }
    int horizon() const { return static_cast<int>(caps.cols()) - 1; }

    void validate() const {
        if (caps.rows() < 2 || caps.cols() < 2)
            throw InputError("StrategyInputs: need n >= 2 and at least two dates");
        if (prices.rows() != caps.rows() || prices.cols() != caps.cols())
            throw InputError("StrategyInputs: prices and caps misaligned");
        if (!(prices.minCoeff() > 0.0) || !(caps.minCoeff() > 0.0))
            throw InputError("StrategyInputs: prices and caps must be positive");
        if (roa.size() > 0 && (roa.rows() != caps.rows() || roa.cols() != caps.cols()))
            throw InputError("StrategyInputs: roa misaligned");
    }

    Vec market_weights(int t) const { return caps.col(t) / caps.col(t).sum(); }
};

// Every strategy is materialized as a full weight matrix, column t formed
// from data at dates <= t only; the rule handed to the backtester is then a
// column lookup, which keeps the no-look-ahead argument local to this file.
inline WeightRule column_rule(Mat weights) {
    auto shared = std::make_shared<const Mat>(std::move(weights));
    return [shared](int t, const Mat&) -> Vec {
        if (t < 0 || t >= shared->cols()) throw InputError("column_rule: step out of range");
        return shared->col(t);
    };
}

inline Mat market_weight_matrix(const StrategyInputs& in) {
    in.validate();
    const int T = in.horizon();
    Mat w(in.n(), T);
    for (int t = 0; t < T; ++t) w.col(t) = in.market_weights(t);
    return w;
}

inline Mat equal_weight_matrix(const StrategyInputs& in) {
    in.validate();
    return Mat::Constant(in.n(), in.horizon(), 1.0 / in.n());
}

inline Mat entropy_weight_matrix(const StrategyInputs& in, double c) {
    in.validate();
    const auto s = make_entropy(in.n(), c);
    const int T = in.horizon();
    Mat w(in.n(), T);
    for (int t = 0; t < T; ++t) w.col(t) = classical_weights(s, in.market_weights(t));
    return w;
}

// Covariation-tilt strategy: accumulate beta_t^i = sum_{s<=t} (X_s - X_{s-1})
// (Z_s - Z_{s-1}) from observed prices and the cost-free market value
// Z_t = sum caps_t / sum caps_0, clip at zero to stay inside the generating
// function's domain, and feed the result as the characteristic.
inline Mat beta_weight_matrix(const StrategyInputs& in, double A, double c, double p) {
    in.validate();
    const int n = in.n();
    const int T = in.horizon();
    const auto s = make_beta_genfun(n, A, c, p);
    const double total0 = in.caps.col(0).sum();
    Mat w(n, T);
    Vec beta = Vec::Zero(n);
    double z_prev = 1.0;
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            const double z = in.caps.col(t).sum() / total0;
            beta += (in.prices.col(t) - in.prices.col(t - 1)) * (z - z_prev);
            z_prev = z;
        }
        w.col(t) = generalized_weights(s, in.market_weights(t), beta.cwiseMax(0.0));
    }
    return w;
}

// Quality-overlay strategy: mix the market with the ROA-score portfolio,
// eta = ((1 + a) Z^mu mu - a Z^pi pi) / ((1 + a) Z^mu - a Z^pi), where both
// value processes are compounded cost-free from observed returns.
inline Mat roa_overlay_weight_matrix(const StrategyInputs& in, double a) {
    in.validate();
    if (in.roa.size() == 0) throw InputError("roa_overlay_weight_matrix: roa panel required");
    if (!(a > 0.0)) throw InputError("roa_overlay_weight_matrix: a must be positive");
    const int n = in.n();
    const int T = in.horizon();
    Mat w(n, T);
    double z_mu = 1.0, z_pi = 1.0;
    Vec mu_prev(n), pi_prev(n);
    for (int t = 0; t < T; ++t) {
        if (t > 0) {
            double r_mu = 0.0, r_pi = 0.0;
            for (int i = 0; i < n; ++i) {
                const double g = in.prices(i, t) / in.prices(i, t - 1) - 1.0;
                r_mu += mu_prev[i] * g;
                r_pi += pi_prev[i] * g;
            }
            z_mu *= 1.0 + r_mu;
            z_pi *= 1.0 + r_pi;
            if (!(z_mu > 0.0) || !(z_pi > 0.0))
                throw ComputeError("roa_overlay_weight_matrix: component value depleted");
        }
        const Vec mu = in.market_weights(t);
        const Vec pi = roa_weights(mu, in.roa.col(t));
        w.col(t) = quality_overlay_weights(mu, pi, z_mu, z_pi, a);
        mu_prev = mu;
        pi_prev = pi;
    }
    return w;
}

}  // namespace sptlab
