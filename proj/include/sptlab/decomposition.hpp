#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "characteristics.hpp"
#include "common.hpp"
#include "genfun.hpp"
#include "market.hpp"

namespace sptlab {

// Term-by-term account of log(Z^pi_t / Z^mu_t) for a functionally generated
// portfolio: value change of the generating function, the characteristics
// stochastic integral, and the drift pieces, with the unexplained remainder
// kept explicit. All integrals use left-point sums; quadratic terms use
// realized increment products unless an exact covariance path is supplied.
struct MasterDecomposition {
    Vec times;
    Vec lhs;             // log relative value from the simulated wealth paths
    Vec log_s_change;    // log S(mu_t, P_t) - log S(mu_0, P_0)
    Vec stoch_integral;  // sum_i int D_{n+i} log S dP^i
    Vec drift_market;    // -(1 / 2S) sum_{ij} D_{ij} S d<mu^i, mu^j>
    Vec drift_qv;        // -(1/2) sum_{ij} D_{n+i, n+j} log S d<P^i, P^j>
    Vec drift_cross;     // -sum_{ij} D_{i, n+j} log S d<mu^i, P^j>
    Vec drift_theta;     // sum of the three drift pieces
    Vec extended_drift;  // drift_theta - stoch_integral (finite-variation P)
    bool extended_drift_defined = false;
    Vec residual;  // lhs - (log_s_change - stoch_integral + drift_theta)
    double max_abs_residual = 0.0;
};

// Decomposes one path. pi must come from generalized_weights(S, mu_t, P_t)
// on the same grid; pass P = nullptr when S has no characteristics. When
// exact_cov is given, the market drift uses model covariances instead of
// realized increment products. Characteristics flagged finite-variation have
// zero quadratic (co)variation by construction, so those terms are dropped
// rather than estimated.
inline MasterDecomposition decompose(const MarketPath& path, const WeightsPath& mu,
                                     const CharacteristicsPath* P, const GeneratingFunction& S,
                                     const ValuePath& z_pi, const ValuePath& z_mu,
                                     const CovariancePath* exact_cov = nullptr) {
    const int n = path.n();
    const int N = path.steps();
    const double dt = path.dt();
    if (S.n != n) throw InputError("decompose: generating function dimension mismatch");
    if (S.k > 0) {
        if (P == nullptr) throw InputError("decompose: S expects characteristics but none given");
        if (P->k() != S.k || P->steps() != N)
            throw InputError("decompose: characteristics grid misaligned with market grid");
    }
    if (mu.weights.cols() != N + 1 || z_pi.values.size() != N + 1 || z_mu.values.size() != N + 1)
        throw InputError("decompose: path lengths misaligned");
    if (exact_cov && static_cast<int>(exact_cov->tau.size()) < N)
        throw InputError("decompose: covariance path shorter than the market path");

    const bool has_char = S.k > 0;
    const bool fv = has_char && P->finite_variation;

    MasterDecomposition dec;
    dec.times = path.times;
    dec.lhs = log_relative_value(z_pi, z_mu);
    dec.log_s_change.resize(N + 1);
    dec.stoch_integral = Vec::Zero(N + 1);
    dec.drift_market = Vec::Zero(N + 1);
    dec.drift_qv = Vec::Zero(N + 1);
    dec.drift_cross = Vec::Zero(N + 1);

    const Vec y_empty;
    auto y_at = [&](int t) -> Vec { return has_char ? Vec(P->values.col(t)) : y_empty; };

    const double v0 = S.value(mu.weights.col(0), y_at(0));
    if (!(v0 > 0.0)) throw ComputeError("decompose: generating function not positive at start");
    dec.log_s_change[0] = 0.0;

    double stoch = 0.0, d_market = 0.0, d_qv = 0.0, d_cross = 0.0;
    for (int s = 0; s < N; ++s) {
        const Vec x = mu.weights.col(s);
        const Vec y = y_at(s);
        const double v = S.value(x, y);
        if (!(v > 0.0))
            throw ComputeError("decompose: generating function not positive at step " +
                               std::to_string(s));
        const Vec g = S.gradient(x, y);
        const Mat h = S.hessian(x, y);
        const Vec dmu = mu.weights.col(s + 1) - mu.weights.col(s);

        if (exact_cov) {
            const Mat& tau = exact_cov->tau[static_cast<std::size_t>(s)];
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) acc += h(i, j) * x[i] * x[j] * tau(i, j);
            d_market += -acc * dt / (2.0 * v);
        } else {
            d_market += -dmu.dot(h.topLeftCorner(n, n) * dmu) / (2.0 * v);
        }

        if (has_char) {
            const Vec dp = P->values.col(s + 1) - P->values.col(s);
            for (int i = 0; i < S.k; ++i) stoch += g[n + i] / v * dp[i];
            if (!fv) {
                for (int i = 0; i < S.k; ++i) {
                    for (int j = 0; j < S.k; ++j) {
                        const double log_h_yy =
                            h(n + i, n + j) / v - g[n + i] * g[n + j] / (v * v);
                        d_qv += -0.5 * log_h_yy * dp[i] * dp[j];
                    }
                }
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < S.k; ++j) {
                        const double log_h_xy = h(i, n + j) / v - g[i] * g[n + j] / (v * v);
                        d_cross += -log_h_xy * dmu[i] * dp[j];
                    }
                }
            }
        }

        const double v_next = S.value(mu.weights.col(s + 1), y_at(s + 1));
        if (!(v_next > 0.0))
            throw ComputeError("decompose: generating function not positive at step " +
                               std::to_string(s + 1));
        dec.log_s_change[s + 1] = std::log(v_next / v0);
        dec.stoch_integral[s + 1] = stoch;
        dec.drift_market[s + 1] = d_market;
        dec.drift_qv[s + 1] = d_qv;
        dec.drift_cross[s + 1] = d_cross;
    }

    dec.drift_theta = dec.drift_market + dec.drift_qv + dec.drift_cross;
    dec.extended_drift_defined = !has_char || fv;
    dec.extended_drift = dec.drift_theta - dec.stoch_integral;
    dec.residual = dec.lhs - (dec.log_s_change - dec.stoch_integral + dec.drift_theta);
    dec.max_abs_residual = dec.residual.cwiseAbs().maxCoeff();
    return dec;
}

struct MonotonicityReport {
    bool applicable = false;
    std::string reason;  // why the check does or does not apply
    int violations = 0;
    int first_violation_step = -1;
    double worst_step = 0.0;  // most negative increment observed
    double tolerance = 0.0;
};

// The extended drift must be nondecreasing when the characteristics are
// monotone and of finite variation, S is concave in the stocks, not
// multiplicative, and moves oppositely to each characteristic.
inline MonotonicityReport check_drift_monotonicity(const MasterDecomposition& dec,
                                                   const GeneratingFunction& S,
                                                   const CharacteristicsPath* P) {
    MonotonicityReport rep;
    if (S.k > 0 && P == nullptr) throw InputError("check_drift_monotonicity: missing P");
    if (S.multiplicative) {
        rep.reason = "multiplicative generating function";
        return rep;
    }
    if (!S.concave_in_x) {
        rep.reason = "generating function not concave in the stock argument";
        return rep;
    }
    if (S.k > 0) {
        if (!P->finite_variation) {
            rep.reason = "characteristics not finite variation";
            return rep;
        }
        for (int i = 0; i < S.k; ++i) {
            const YMonotone m = P->monotone[static_cast<std::size_t>(i)];
            const bool ok = (m == YMonotone::increasing && S.y_monotone == YMonotone::decreasing) ||
                            (m == YMonotone::decreasing && S.y_monotone == YMonotone::increasing);
            if (!ok) {
                rep.reason = "characteristic " + std::to_string(i) +
                             " does not move oppositely to the generating function";
                return rep;
            }
        }
    }
    rep.applicable = true;
    rep.reason = "applicable";
    const double scale = dec.extended_drift.cwiseAbs().maxCoeff();
    rep.tolerance = 1e-10 * (1.0 + scale);
    for (Eigen::Index s = 0; s + 1 < dec.extended_drift.size(); ++s) {
        const double inc = dec.extended_drift[s + 1] - dec.extended_drift[s];
        if (inc < -rep.tolerance) {
            ++rep.violations;
            if (rep.first_violation_step < 0) rep.first_violation_step = static_cast<int>(s);
        }
        rep.worst_step = std::min(rep.worst_step, inc);
    }
    return rep;
}

// ---- cumulative volatility profiles and horizon bounds --------------------

// Strictly increasing cumulative excess-growth profile with Upsilon(0) = 0.
// Either a linear rate (exact for the stabilized model) or a user table that
// is interpolated piecewise-linearly and extrapolated with its last slope.
class Upsilon {
public:
    static Upsilon linear(double rate) {
        if (!(rate > 0.0)) throw InputError("Upsilon: rate must be positive");
        Upsilon u;
        u.rate_ = rate;
        return u;
    }

    // (n - 1) / 2 per unit time.
    static Upsilon volatility_stabilized(int n) {
        if (n < 2) throw InputError("Upsilon: need n >= 2");
        return linear(0.5 * (n - 1));
    }

    static Upsilon from_table(Vec t, Vec v) {
        if (t.size() != v.size() || t.size() < 2) throw InputError("Upsilon: bad table");
        if (t[0] != 0.0 || v[0] != 0.0) throw InputError("Upsilon: table must start at (0, 0)");
        for (Eigen::Index i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1]) || !(v[i] > v[i - 1]))
                throw InputError("Upsilon: table must be strictly increasing");
        Upsilon u;
        u.t_ = std::move(t);
        u.v_ = std::move(v);
        u.check_round_trip();
        return u;
    }

    double value(double T) const {
        if (!(T >= 0.0)) throw InputError("Upsilon: time must be >= 0");
        if (rate_ > 0.0) return rate_ * T;
        if (T >= t_[t_.size() - 1]) {
            const Eigen::Index m = t_.size() - 1;
            const double slope = (v_[m] - v_[m - 1]) / (t_[m] - t_[m - 1]);
            return v_[m] + slope * (T - t_[m]);
        }
        const auto it = std::upper_bound(t_.data(), t_.data() + t_.size(), T);
        const Eigen::Index j = std::max<Eigen::Index>(1, it - t_.data());
        const double w = (T - t_[j - 1]) / (t_[j] - t_[j - 1]);
        return v_[j - 1] + w * (v_[j] - v_[j - 1]);
    }

    double inverse(double z) const {
        if (!(z >= 0.0)) throw InputError("Upsilon: inverse argument must be >= 0");
        if (rate_ > 0.0) return z / rate_;
        double hi = t_[t_.size() - 1];
        while (value(hi) < z) hi *= 2.0;
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            (value(mid) < z ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

private:
    void check_round_trip() const {
        for (Eigen::Index i = 1; i < t_.size(); ++i) {
            const double back = inverse(value(t_[i]));
            if (std::abs(back - t_[i]) > 1e-9 * (1.0 + std::abs(t_[i])))
                throw InputError("Upsilon: inverse does not round-trip to 1e-9");
        }
    }

    double rate_ = 0.0;
    Vec t_, v_;
};

// Solves f(T) = z for increasing f by bracketing and bisection.
inline double solve_increasing(const std::function<double(double)>& f, double z) {
    if (!(z >= 0.0)) throw InputError("solve_increasing: target must be >= 0");
    if (z == 0.0) return 0.0;
    double hi = 1.0;
    int guard = 0;
    while (f(hi) < z) {
        hi *= 2.0;
        if (++guard > 200) throw InputError("solve_increasing: target unreachable");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < z ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

enum class ArbitrageHorizon {
    entropy_deadline,        // Upsilon^{-1}((c + log n) log(1 + S(mu_0) / c))
    entropy_deadline_limit,  // c -> infinity limit Upsilon^{-1}(S(mu_0))
    reduced_deadline,        // same target through Upsilon(T) + eps tanh(T)
    boosted_deadline,        // target from the two-portfolio comparison
    roa_deadline,            // closed form from the ROA constants
    beta_deadline,           // guaranteed-outperformance horizon for the beta portfolio
};

struct ArbitrageBoundSpec {
    Upsilon upsilon = Upsilon::linear(1.0);
    int n = 0;
    double s_mu0 = 0.0;  // entropy of the starting weights
    double c = 0.0;
    double eps = 0.0;  // entropy floor / volatility floor / drift slope, per horizon kind
    double alpha = 0.0;
    double A = 0.0;
    double p = 0.0;
    double varsigma = 0.0;
    double eta = 0.0;
    double delta = 0.0;
};

inline double arbitrage_time(ArbitrageHorizon kind, const ArbitrageBoundSpec& b) {
    const double log_n = std::log(static_cast<double>(b.n));
    switch (kind) {
        case ArbitrageHorizon::entropy_deadline: {
            if (!(b.c > 0.0) || !(b.s_mu0 > 0.0))
                throw InputError("arbitrage_time: entropy deadline needs c > 0 and S(mu_0) > 0");
            const double z = (b.c + log_n) * std::log1p(b.s_mu0 / b.c);
            return b.upsilon.inverse(z);
        }
        case ArbitrageHorizon::entropy_deadline_limit: {
            if (!(b.s_mu0 > 0.0)) throw InputError("arbitrage_time: needs S(mu_0) > 0");
            return b.upsilon.inverse(b.s_mu0);
        }
        case ArbitrageHorizon::reduced_deadline: {
            if (!(b.c > 0.0) || !(b.s_mu0 > 0.0) || !(b.eps > 0.0))
                throw InputError("arbitrage_time: reduced deadline needs c, S(mu_0), eps > 0");
            const double z = (b.c + log_n) * std::log1p(b.s_mu0 / b.c);
            const auto& ups = b.upsilon;
            const double eps = b.eps;
            return solve_increasing(
                [&ups, eps](double T) { return ups.value(T) + eps * std::tanh(T); }, z);
        }
        case ArbitrageHorizon::boosted_deadline: {
            if (!(b.c > 0.0) || !(b.alpha > 0.0 && b.alpha < 0.5))
                throw InputError("arbitrage_time: boosted deadline needs c > 0, alpha in (0, 1/2)");
            const double z = (b.c * (1.0 - b.alpha) + log_n) * (b.c + log_n) / (b.alpha * b.c) *
                             std::log(1.0 / (1.0 - 2.0 * b.alpha));
            const auto& ups = b.upsilon;
            const double w = b.c + log_n;
            return solve_increasing(
                [&ups, w](double T) { return ups.value(T) + w * std::tanh(T); }, z);
        }
        case ArbitrageHorizon::roa_deadline: {
            const double denom = b.delta * b.eta * std::exp(-b.varsigma) - 2.0 * b.eps;
            if (!(denom > 0.0))
                throw InputError("arbitrage_time: roa deadline denominator not positive");
            return 2.0 * (1.0 + b.A - std::exp(-b.varsigma)) / denom;
        }
        case ArbitrageHorizon::beta_deadline: {
            if (!(b.c > 0.0) || !(b.p > 0.0 && b.p < 1.0) || !(b.eps > 0.0) || !(b.A >= 0.0))
                throw InputError("arbitrage_time: beta deadline needs c > 0, p in (0,1), eps > 0");
            const double cap = b.A + (1.0 + b.c) * std::pow(static_cast<double>(b.n), 1.0 - b.p);
            return cap / (b.p * (1.0 - b.p) * b.c * b.eps) * std::log(cap / (b.A + b.c));
        }
    }
    throw InputError("arbitrage_time: unknown horizon kind");
}

// ---- pathwise bound checks -------------------------------------------------

struct BoundCheck {
    bool holds_everywhere = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    int first_violation_step = -1;
    int n_points = 0;

    void feed(int step, double margin) {
        ++n_points;
        if (margin < worst_margin) worst_margin = margin;
        if (margin < 0.0 && first_violation_step < 0) {
            first_violation_step = step;
            holds_everywhere = false;
        }
    }
};

// Entropy-portfolio floor: log(Z^pi_t / Z^mu_t) >= log(c / (c + S(mu_0)))
// + Upsilon(t) / (c + log n), checked at every grid point.
inline BoundCheck check_entropy_bound(const Vec& log_rel, const Vec& times, double c, int n,
                                      double s_mu0, const Upsilon& ups) {
    BoundCheck chk;
    const double base = std::log(c / (c + s_mu0));
    const double denom = c + std::log(static_cast<double>(n));
    for (Eigen::Index t = 0; t < log_rel.size(); ++t)
        chk.feed(static_cast<int>(t), log_rel[t] - (base + ups.value(times[t]) / denom));
    return chk;
}

// Reduced-entropy floor adds eps tanh(t) / (c + log n) to the right side.
inline BoundCheck check_reduced_entropy_bound(const Vec& log_rel, const Vec& times, double c,
                                              double eps, int n, double s_mu0,
                                              const Upsilon& ups) {
    BoundCheck chk;
    const double base = std::log(c / (c + s_mu0));
    const double denom = c + std::log(static_cast<double>(n));
    for (Eigen::Index t = 0; t < log_rel.size(); ++t) {
        const double rhs =
            base + (ups.value(times[t]) + eps * std::tanh(times[t])) / denom;
        chk.feed(static_cast<int>(t), log_rel[t] - rhs);
    }
    return chk;
}

// Boosted-vs-plain-entropy floor on log(Z^pi_t / Z^zeta_t).
inline BoundCheck check_boosted_bound(const Vec& log_rel_vs_zeta, const Vec& times, double c,
                                      double alpha, int n, const Upsilon& ups) {
    BoundCheck chk;
    const double log_n = std::log(static_cast<double>(n));
    const double base = std::log(1.0 - 2.0 * alpha);
    const double w1 = (c * (1.0 - alpha) + log_n) * (c + log_n);
    const double w2 = c * (1.0 - alpha) + log_n;
    for (Eigen::Index t = 0; t < log_rel_vs_zeta.size(); ++t) {
        const double rhs = base + alpha * c * ups.value(times[t]) / w1 +
                           alpha * c * std::tanh(times[t]) / w2;
        chk.feed(static_cast<int>(t), log_rel_vs_zeta[t] - rhs);
    }
    return chk;
}

// Beta-portfolio floor with volatility floor eps_vol <= gamma^{mu,*}.
inline BoundCheck check_beta_bound(const Vec& log_rel, const Vec& times, double A, double c,
                                   double p, int n, double eps_vol) {
    BoundCheck chk;
    const double cap = A + (1.0 + c) * std::pow(static_cast<double>(n), 1.0 - p);
    const double base = std::log((A + c) / cap);
    const double slope = p * (1.0 - p) * c / cap * eps_vol;
    for (Eigen::Index t = 0; t < log_rel.size(); ++t)
        chk.feed(static_cast<int>(t), log_rel[t] - (base + slope * times[t]));
    return chk;
}

// ROA-portfolio ceiling: log(Z^pi_t / Z^mu_t) <= 1 - e^{-varsigma} + A
// + eps t - delta e^{-varsigma} eta t / 2.
inline BoundCheck check_roa_bound(const Vec& log_rel, const Vec& times, const RoaSpec& spec) {
    BoundCheck chk;
    const double e = std::exp(-spec.varsigma);
    for (Eigen::Index t = 0; t < log_rel.size(); ++t) {
        const double rhs =
            1.0 - e + spec.A + spec.eps * times[t] - 0.5 * spec.delta * e * spec.eta * times[t];
        chk.feed(static_cast<int>(t), rhs - log_rel[t]);
    }
    return chk;
}

// ---- relative return of one generated portfolio against another -----------

struct RelativeReturnComparison {
    Vec direct;             // log(Z^pi / Z^zeta) from the wealth paths
    Vec via_decomposition;  // assembled from the two decompositions
    Vec residual;
    double max_abs_residual = 0.0;
};

inline RelativeReturnComparison relative_return_vs_portfolio(const MasterDecomposition& pi,
                                                             const MasterDecomposition& zeta) {
    if (pi.lhs.size() != zeta.lhs.size())
        throw InputError("relative_return_vs_portfolio: grid mismatch");
    RelativeReturnComparison cmp;
    cmp.direct = pi.lhs - zeta.lhs;
    cmp.via_decomposition = (pi.log_s_change - zeta.log_s_change) -
                            (pi.stoch_integral - zeta.stoch_integral) +
                            (pi.drift_theta - zeta.drift_theta);
    cmp.residual = cmp.direct - cmp.via_decomposition;
    cmp.max_abs_residual = cmp.residual.cwiseAbs().maxCoeff();
    return cmp;
}

}  // namespace sptlab
