#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "common.hpp"

namespace sptlab {

// Daily-rebalance cost model: proportional charge per unit of L1 turnover and
// a per-day financing fee on the short leg.
struct CostModel {
    double eps1 = 0.003;
    double eps2 = 0.005;

    void validate() const {
        if (!(eps1 >= 0.0) || !(eps2 >= 0.0)) throw InputError("CostModel: fees must be >= 0");
    }
};

// One discrete backtest: weights held over (t, t+1], the drift-readjusted
// weights they are traded from, the short leg, per-period returns, and the
// compounded wealth. If wealth would drop to or below zero the run stops at
// the last positive value and is flagged.
struct BacktestRun {
    Mat weights;     // n x T_eff, pi_t for t = 0..T_eff-1
    Mat readjusted;  // n x T_eff, pi_hat_t (column 0 is the all-cash start)
    Mat short_leg;   // n x T_eff, max(0, -pi_t)
    Vec returns;     // T_eff, R_t for t = 1..T_eff
    Vec wealth;      // T_eff + 1, Z_0 = 1
    bool depleted = false;
    int depletion_step = -1;  // first step whose wealth would be <= 0

    int n() const { return static_cast<int>(weights.rows()); }
    int periods() const { return static_cast<int>(returns.size()); }
};

// Weight rule contract: called with t = 0..T-1 and the full price matrix, it
// must form pi_t from columns 0..t only (no look-ahead) and return weights
// summing to 1.
using WeightRule = std::function<Vec(int t, const Mat& prices)>;

// R_t = sum_i pi_{t-1}(X_t/X_{t-1} - 1) - eps1 sum_i |pi_{t-1} - pi_hat_{t-1}|
//       - eps2 sum_i max(0, -pi_{t-1}),   Z_t = Z_{t-1} (1 + R_t),
// pi_hat_t = pi_{t-1} (X_t / X_{t-1}) (Z_{t-1} / Z_t), pi_hat_0 = 0.
inline BacktestRun run_backtest(const Mat& prices, const WeightRule& rule,
                                const CostModel& costs) {
    costs.validate();
    const int n = static_cast<int>(prices.rows());
    const int T = static_cast<int>(prices.cols()) - 1;
    if (n < 2) throw InputError("run_backtest: need at least two assets");
    if (T < 1) throw InputError("run_backtest: need at least one period");
    if (!(prices.minCoeff() > 0.0)) throw InputError("run_backtest: prices must be positive");

    BacktestRun run;
    run.weights.resize(n, T);
    run.readjusted = Mat::Zero(n, T);
    run.short_leg.resize(n, T);
    run.returns.resize(T);
    run.wealth.resize(T + 1);
    run.wealth[0] = 1.0;

    int t_eff = T;
    for (int t = 1; t <= T; ++t) {
        const Vec pi = rule(t - 1, prices);
        if (pi.size() != n) throw InputError("run_backtest: weight rule returned wrong size");
        if (std::abs(pi.sum() - 1.0) > 1e-8)
            throw InputError("run_backtest: weights must sum to 1 at step " +
                             std::to_string(t - 1));
        run.weights.col(t - 1) = pi;
        run.short_leg.col(t - 1) = (-pi).cwiseMax(0.0);

        double gross = 0.0;
        for (int i = 0; i < n; ++i)
            gross += pi[i] * (prices(i, t) / prices(i, t - 1) - 1.0);
        const double cost1 =
            costs.eps1 * (pi - run.readjusted.col(t - 1)).cwiseAbs().sum();
        const double cost2 = costs.eps2 * run.short_leg.col(t - 1).sum();
        const double r = gross - cost1 - cost2;
        const double z = run.wealth[t - 1] * (1.0 + r);
        if (!(z > 0.0)) {
            run.depleted = true;
            run.depletion_step = t;
            t_eff = t - 1;
            break;
        }
        run.returns[t - 1] = r;
        run.wealth[t] = z;
        if (t < T)
            run.readjusted.col(t) =
                run.weights.col(t - 1).array() *
                (prices.col(t).array() / prices.col(t - 1).array()) *
                (run.wealth[t - 1] / run.wealth[t]);
    }
    if (t_eff < T) {
        run.weights.conservativeResize(n, t_eff);
        run.readjusted.conservativeResize(n, t_eff);
        run.short_leg.conservativeResize(n, t_eff);
        run.returns.conservativeResize(t_eff);
        run.wealth.conservativeResize(t_eff + 1);
    }
    return run;
}

// Least-squares fit of y on a caller-built design matrix (including the
// intercept column when wanted). R^2 is centered: 1 - SSR / SST.
struct OlsFit {
    Vec coefficients;
    double r_squared = 0.0;
    Vec residuals;
};

inline OlsFit ols_regress(const Vec& y, const Mat& X) {
    const Eigen::Index m = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != m) throw InputError("ols_regress: response length mismatch");
    if (m < k + 1) throw InputError("ols_regress: need more rows than columns");
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) throw ComputeError("ols_regress: singular design matrix");
    OlsFit fit;
    fit.coefficients = qr.solve(y);
    fit.residuals = y - X * fit.coefficients;
    const double ssr = fit.residuals.squaredNorm();
    const double sst = (y.array() - y.mean()).square().sum();
    fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : std::numeric_limits<double>::quiet_NaN();
    return fit;
}

// Loadings of the three-factor regression of excess strategy returns.
struct FF3Block {
    double alpha_pct = 0.0;  // 252 * intercept * 100
    double beta = 0.0;
    double smb_loading = 0.0;
    double hml_loading = 0.0;
    double r_squared = 0.0;
};

// Summary statistics of one run measured against the market run: annualized
// return and turnover, Sharpe and information ratios (flagged, not zeroed,
// when the deviation vanishes), the market regression, and the short-leg
// mass.
struct BacktestReport {
    double ann_return = 0.0;
    double sharpe = 0.0;
    double info_ratio = 0.0;
    double terminal_value = 0.0;
    double ann_turnover = 0.0;
    double ann_alpha_pct = 0.0;
    double beta = 0.0;
    double r_squared = 0.0;
    double mean_short = 0.0;
    bool sharpe_defined = false;
    bool info_ratio_defined = false;
    std::optional<FF3Block> ff3;
    std::string note;  // non-empty only for abnormal runs (e.g. depletion)
};

inline constexpr double kTradingDaysPerYear = 252.0;

namespace detail {

inline double sample_std(const Vec& x) {
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

}  // namespace detail

inline BacktestReport performance_stats(const BacktestRun& run, const BacktestRun& market_run,
                                        const Vec& rf) {
    const int T = run.periods();
    if (T < 2) throw InputError("performance_stats: need at least two return periods");
    if (market_run.periods() != T || rf.size() != T)
        throw InputError("performance_stats: runs and risk-free series misaligned");

    BacktestReport rep;
    rep.terminal_value = run.wealth[T];
    rep.ann_return = std::pow(rep.terminal_value, kTradingDaysPerYear / T) - 1.0;

    const double sd = detail::sample_std(run.returns);
    if (sd > 0.0) {
        rep.sharpe = std::sqrt(kTradingDaysPerYear) * run.returns.mean() / sd;
        rep.sharpe_defined = true;
    } else {
        rep.sharpe = std::numeric_limits<double>::quiet_NaN();
    }

    const Vec active = run.returns - market_run.returns;
    const double sd_active = detail::sample_std(active);
    if (sd_active > 0.0) {
        rep.info_ratio = std::sqrt(kTradingDaysPerYear) * active.mean() / sd_active;
        rep.info_ratio_defined = true;
    } else {
        rep.info_ratio = std::numeric_limits<double>::quiet_NaN();
    }

    rep.ann_turnover = kTradingDaysPerYear / T * (run.weights - run.readjusted).cwiseAbs().sum();
    rep.mean_short = run.short_leg.sum() / T;

    Mat X(T, 2);
    X.col(0).setOnes();
    X.col(1) = market_run.returns - rf;
    const OlsFit fit = ols_regress(run.returns - rf, X);
    rep.ann_alpha_pct = kTradingDaysPerYear * fit.coefficients[0] * 100.0;
    rep.beta = fit.coefficients[1];
    rep.r_squared = fit.r_squared;
    return rep;
}

inline FF3Block ff3_stats(const BacktestRun& run, const BacktestRun& market_run, const Vec& smb,
                          const Vec& hml, const Vec& rf) {
    const int T = run.periods();
    if (market_run.periods() != T || smb.size() != T || hml.size() != T || rf.size() != T)
        throw InputError("ff3_stats: factor series misaligned with returns");
    Mat X(T, 4);
    X.col(0).setOnes();
    X.col(1) = market_run.returns - rf;
    X.col(2) = smb;
    X.col(3) = hml;
    const OlsFit fit = ols_regress(run.returns - rf, X);
    FF3Block ff3;
    ff3.alpha_pct = kTradingDaysPerYear * fit.coefficients[0] * 100.0;
    ff3.beta = fit.coefficients[1];
    ff3.smb_loading = fit.coefficients[2];
    ff3.hml_loading = fit.coefficients[3];
    ff3.r_squared = fit.r_squared;
    return ff3;
}

}  // namespace sptlab
