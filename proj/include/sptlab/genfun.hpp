#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"

namespace sptlab {

// Per-coordinate interval box for the characteristics argument.
struct DomainBox {
    Vec lo, hi;
    std::vector<bool> lo_open, hi_open;

    static DomainBox unbounded(int k) {
        DomainBox b;
        const double inf = std::numeric_limits<double>::infinity();
        b.lo = Vec::Constant(k, -inf);
        b.hi = Vec::Constant(k, inf);
        b.lo_open.assign(static_cast<std::size_t>(k), true);
        b.hi_open.assign(static_cast<std::size_t>(k), true);
        return b;
    }

    static DomainBox nonnegative(int k) {
        DomainBox b = unbounded(k);
        b.lo.setZero();
        b.lo_open.assign(static_cast<std::size_t>(k), false);
        return b;
    }

    static DomainBox open_interval(int k, double lo, double hi) {
        DomainBox b = unbounded(k);
        b.lo.setConstant(lo);
        b.hi.setConstant(hi);
        return b;
    }

    int k() const { return static_cast<int>(lo.size()); }

    bool contains(const Vec& y) const {
        if (y.size() != lo.size()) return false;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (lo_open[static_cast<std::size_t>(i)] ? !(y[i] > lo[i]) : !(y[i] >= lo[i]))
                return false;
            if (hi_open[static_cast<std::size_t>(i)] ? !(y[i] < hi[i]) : !(y[i] <= hi[i]))
                return false;
        }
        return true;
    }
};

enum class YMonotone { none, increasing, decreasing };

// Smooth positive function of (x, y) with x near the open simplex and y in a
// box; carries value, full gradient and Hessian over the n + k coordinates,
// plus the structural flags the drift and monotonicity analysis needs.
struct GeneratingFunction {
    int n = 0;
    int k = 0;
    std::function<double(const Vec&, const Vec&)> value;
    std::function<Vec(const Vec&, const Vec&)> gradient;  // size n + k
    std::function<Mat(const Vec&, const Vec&)> hessian;   // (n + k) x (n + k)
    DomainBox domain;  // box for y; empty when k = 0

    bool multiplicative = false;  // value factors as f(x) g(y)
    bool concave_in_x = false;
    bool long_only = false;  // generated weights are nonnegative on the domain
    YMonotone y_monotone = YMonotone::none;

    std::string name;
    std::map<std::string, double> params;  // round-trips through config files
};

// Scalar factor g(y) used to build multiplicative generating functions.
struct CharacteristicsMap {
    int k = 0;
    DomainBox domain;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;
    std::string name;
};

namespace detail {

inline void require_domain(const GeneratingFunction& s, const Vec& x, const Vec& y,
                           const char* where) {
    require_open_simplex(x, where);
    if (y.size() != s.k) throw InputError(std::string(where) + ": characteristics size mismatch");
    if (s.k > 0 && !s.domain.contains(y))
        throw InputError(std::string(where) + ": characteristics value outside the declared box");
}

}  // namespace detail

// pi^i = x^i (D_i log S + 1 - sum_j x^j D_j log S), with only the stock
// partials entering. Requires S > 0 at the evaluation point.
inline Vec generalized_weights(const GeneratingFunction& s, const Vec& x, const Vec& y) {
    detail::require_domain(s, x, y, "generalized_weights");
    const double val = s.value(x, y);
    if (!(val > 0.0))
        throw ComputeError("generalized_weights: generating function is not positive here");
    const Vec grad = s.gradient(x, y);
    const int n = s.n;
    Vec glog(n);
    for (int i = 0; i < n; ++i) glog[i] = grad[i] / val;
    const double dot = x.dot(glog);
    Vec pi(n);
    for (int i = 0; i < n; ++i) pi[i] = x[i] * (glog[i] + 1.0 - dot);
    return pi;
}

inline Vec classical_weights(const GeneratingFunction& s, const Vec& x) {
    if (s.k != 0) throw InputError("classical_weights: function has characteristics arguments");
    return generalized_weights(s, x, Vec());
}

// ---- named constructors ------------------------------------------------

inline GeneratingFunction make_constant(int n, double value) {
    if (n < 2) throw InputError("make_constant: need n >= 2");
    if (!(value > 0.0)) throw InputError("make_constant: value must be positive");
    GeneratingFunction s;
    s.n = n;
    s.k = 0;
    s.value = [value](const Vec&, const Vec&) { return value; };
    s.gradient = [n](const Vec&, const Vec&) { return Vec::Zero(n).eval(); };
    s.hessian = [n](const Vec&, const Vec&) { return Mat::Zero(n, n).eval(); };
    s.concave_in_x = true;
    s.long_only = true;
    s.multiplicative = false;
    s.name = "constant";
    s.params = {{"value", value}};
    return s;
}

// S_c(x) = c - sum_i x^i log x^i. Bounds on the closed simplex:
// c <= S_c <= c + log n.
inline GeneratingFunction make_entropy(int n, double c) {
    if (n < 2) throw InputError("make_entropy: need n >= 2");
    if (!(c > 0.0)) throw InputError("make_entropy: c must be positive");
    GeneratingFunction s;
    s.n = n;
    s.k = 0;
    s.value = [c](const Vec& x, const Vec&) {
        double acc = c;
        for (Eigen::Index i = 0; i < x.size(); ++i) acc -= x[i] * std::log(x[i]);
        return acc;
    };
    s.gradient = [](const Vec& x, const Vec&) {
        return Vec(-(x.array().log() + 1.0));
    };
    s.hessian = [](const Vec& x, const Vec&) {
        return Mat((-x.array().inverse()).matrix().asDiagonal());
    };
    s.concave_in_x = true;
    s.long_only = true;
    s.name = "entropy";
    s.params = {{"c", c}};
    return s;
}

// Geometric mean (x^1 ... x^n)^{1/n}; generates the equal-weight portfolio.
inline GeneratingFunction make_geometric_mean(int n) {
    if (n < 2) throw InputError("make_geometric_mean: need n >= 2");
    GeneratingFunction s;
    s.n = n;
    s.k = 0;
    auto val = [n](const Vec& x) { return std::exp(x.array().log().sum() / n); };
    s.value = [val](const Vec& x, const Vec&) { return val(x); };
    s.gradient = [val, n](const Vec& x, const Vec&) {
        return Vec(val(x) / n * x.array().inverse());
    };
    s.hessian = [val, n](const Vec& x, const Vec&) {
        const double v = val(x);
        const Vec inv = x.cwiseInverse();
        Mat h = (v / (n * n)) * inv * inv.transpose();
        h.diagonal() -= (v / n) * inv.cwiseProduct(inv);
        return h;
    };
    s.concave_in_x = true;
    s.long_only = true;
    s.name = "geometric_mean";
    return s;
}

// S(x, y) = S_c(x) - eps tanh(y), one nondecreasing characteristic. Positive
// wherever the x-entropy stays above eps.
inline GeneratingFunction make_reduced_entropy(int n, double c, double eps) {
    if (n < 2) throw InputError("make_reduced_entropy: need n >= 2");
    if (!(c > 0.0)) throw InputError("make_reduced_entropy: c must be positive");
    if (!(eps >= 0.0)) throw InputError("make_reduced_entropy: eps must be >= 0");
    GeneratingFunction s;
    s.n = n;
    s.k = 1;
    s.domain = DomainBox::nonnegative(1);
    s.value = [c, eps](const Vec& x, const Vec& y) {
        double acc = c - eps * std::tanh(y[0]);
        for (Eigen::Index i = 0; i < x.size(); ++i) acc -= x[i] * std::log(x[i]);
        return acc;
    };
    s.gradient = [n, eps](const Vec& x, const Vec& y) {
        Vec g(n + 1);
        g.head(n) = -(x.array().log() + 1.0);
        const double th = std::tanh(y[0]);
        g[n] = -eps * (1.0 - th * th);
        return g;
    };
    s.hessian = [n, eps](const Vec& x, const Vec& y) {
        Mat h = Mat::Zero(n + 1, n + 1);
        h.topLeftCorner(n, n).diagonal() = -x.cwiseInverse();
        const double th = std::tanh(y[0]);
        h(n, n) = 2.0 * eps * th * (1.0 - th * th);
        return h;
    };
    s.concave_in_x = true;
    s.long_only = true;
    s.y_monotone = eps > 0.0 ? YMonotone::decreasing : YMonotone::none;
    s.name = "reduced_entropy";
    s.params = {{"c", c}, {"eps", eps}};
    return s;
}

// S(x, y) = S_c(x) + alpha c (tanh(-y) - 1), alpha in (0, 1/2). Positive on
// the whole domain: c(1 - 2 alpha) <= S <= c + log n - alpha c for y >= 0.
inline GeneratingFunction make_boosted_entropy(int n, double c, double alpha) {
    if (n < 2) throw InputError("make_boosted_entropy: need n >= 2");
    if (!(c > 0.0)) throw InputError("make_boosted_entropy: c must be positive");
    if (!(alpha > 0.0 && alpha < 0.5))
        throw InputError("make_boosted_entropy: alpha must lie in (0, 1/2)");
    GeneratingFunction s;
    s.n = n;
    s.k = 1;
    s.domain = DomainBox::nonnegative(1);
    s.value = [c, alpha](const Vec& x, const Vec& y) {
        double acc = c + alpha * c * (std::tanh(-y[0]) - 1.0);
        for (Eigen::Index i = 0; i < x.size(); ++i) acc -= x[i] * std::log(x[i]);
        return acc;
    };
    s.gradient = [n, c, alpha](const Vec& x, const Vec& y) {
        Vec g(n + 1);
        g.head(n) = -(x.array().log() + 1.0);
        const double th = std::tanh(y[0]);
        g[n] = -alpha * c * (1.0 - th * th);
        return g;
    };
    s.hessian = [n, c, alpha](const Vec& x, const Vec& y) {
        Mat h = Mat::Zero(n + 1, n + 1);
        h.topLeftCorner(n, n).diagonal() = -x.cwiseInverse();
        const double th = std::tanh(y[0]);
        h(n, n) = 2.0 * alpha * c * th * (1.0 - th * th);
        return h;
    };
    s.concave_in_x = true;
    s.long_only = true;
    s.y_monotone = YMonotone::decreasing;
    s.name = "boosted_entropy";
    s.params = {{"c", c}, {"alpha", alpha}};
    return s;
}

// S(x, y) = A + sum_i (x^i)^p (c + e^{-y^i}), p in (0, 1), y in [0, inf)^n.
// Bounds: A + c <= S <= A + (1 + c) n^{1 - p}. Long-only.
inline GeneratingFunction make_beta_genfun(int n, double A, double c, double p) {
    if (n < 2) throw InputError("make_beta_genfun: need n >= 2");
    if (!(A >= 0.0)) throw InputError("make_beta_genfun: A must be >= 0");
    if (!(c > 0.0)) throw InputError("make_beta_genfun: c must be positive");
    if (!(p > 0.0 && p < 1.0)) throw InputError("make_beta_genfun: p must lie in (0, 1)");
    GeneratingFunction s;
    s.n = n;
    s.k = n;
    s.domain = DomainBox::nonnegative(n);
    s.value = [A, c, p](const Vec& x, const Vec& y) {
        double acc = A;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            acc += std::pow(x[i], p) * (c + std::exp(-y[i]));
        return acc;
    };
    s.gradient = [n, c, p](const Vec& x, const Vec& y) {
        Vec g(2 * n);
        for (int i = 0; i < n; ++i) {
            const double e = std::exp(-y[i]);
            g[i] = p * std::pow(x[i], p - 1.0) * (c + e);
            g[n + i] = -std::pow(x[i], p) * e;
        }
        return g;
    };
    s.hessian = [n, c, p](const Vec& x, const Vec& y) {
        Mat h = Mat::Zero(2 * n, 2 * n);
        for (int i = 0; i < n; ++i) {
            const double e = std::exp(-y[i]);
            h(i, i) = p * (p - 1.0) * std::pow(x[i], p - 2.0) * (c + e);
            h(i, n + i) = h(n + i, i) = -p * std::pow(x[i], p - 1.0) * e;
            h(n + i, n + i) = std::pow(x[i], p) * e;
        }
        return h;
    };
    s.concave_in_x = true;
    s.long_only = true;
    s.y_monotone = YMonotone::decreasing;
    s.name = "beta";
    s.params = {{"A", A}, {"c", c}, {"p", p}};
    return s;
}

// S(x, y) = exp(sum_i x^i e^{-y^i}), y in (0, varsigma)^n. Long-only: the
// generated weight of stock i is at least x^i e^{-y^i}.
inline GeneratingFunction make_roa_genfun(int n, double varsigma) {
    if (n < 2) throw InputError("make_roa_genfun: need n >= 2");
    if (!(varsigma > 0.0)) throw InputError("make_roa_genfun: varsigma must be positive");
    GeneratingFunction s;
    s.n = n;
    s.k = n;
    s.domain = DomainBox::open_interval(n, 0.0, varsigma);
    auto inner = [](const Vec& x, const Vec& y) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) acc += x[i] * std::exp(-y[i]);
        return acc;
    };
    s.value = [inner](const Vec& x, const Vec& y) { return std::exp(inner(x, y)); };
    s.gradient = [inner, n](const Vec& x, const Vec& y) {
        const double v = std::exp(inner(x, y));
        Vec g(2 * n);
        for (int i = 0; i < n; ++i) {
            const double e = std::exp(-y[i]);
            g[i] = e * v;
            g[n + i] = -x[i] * e * v;
        }
        return g;
    };
    s.hessian = [inner, n](const Vec& x, const Vec& y) {
        const double v = std::exp(inner(x, y));
        Vec e(n);
        for (int i = 0; i < n; ++i) e[i] = std::exp(-y[i]);
        Mat h(2 * n, 2 * n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                h(i, j) = e[i] * e[j] * v;
                h(i, n + j) = v * e[i] * (-x[j] * e[j] - (i == j ? 1.0 : 0.0));
                h(n + j, i) = h(i, n + j);
                h(n + i, n + j) =
                    v * x[i] * e[i] * (x[j] * e[j] + (i == j ? 1.0 : 0.0));
            }
        }
        return h;
    };
    s.concave_in_x = false;  // exp of a linear form is convex in x
    s.long_only = true;
    s.y_monotone = YMonotone::decreasing;
    s.name = "roa";
    s.params = {{"varsigma", varsigma}};
    return s;
}

// ---- composition and overlays -------------------------------------------

inline CharacteristicsMap make_constant_map(int k, double value) {
    CharacteristicsMap g;
    g.k = k;
    g.domain = DomainBox::unbounded(k);
    g.value = [value](const Vec&) { return value; };
    g.gradient = [k](const Vec&) { return Vec::Zero(k).eval(); };
    g.hessian = [k](const Vec&) { return Mat::Zero(k, k).eval(); };
    g.name = "constant";
    return g;
}

// g(y) = exp(-sum_i y^i).
inline CharacteristicsMap make_exp_neg_sum_map(int k) {
    CharacteristicsMap g;
    g.k = k;
    g.domain = DomainBox::unbounded(k);
    auto val = [](const Vec& y) { return std::exp(-y.sum()); };
    g.value = val;
    g.gradient = [val, k](const Vec& y) { return Vec(Vec::Constant(k, -val(y))); };
    g.hessian = [val, k](const Vec& y) { return Mat(Mat::Constant(k, k, val(y))); };
    g.name = "exp_neg_sum";
    return g;
}

// S(x, y) = f(x) g(y). The stock log-partials, and hence the generated
// weights, coincide with those of f for every y.
inline GeneratingFunction multiplicative_compose(const GeneratingFunction& f,
                                                 const CharacteristicsMap& g) {
    if (f.k != 0) throw InputError("multiplicative_compose: f must have k = 0");
    if (g.k < 1) throw InputError("multiplicative_compose: g must have k >= 1");
    GeneratingFunction s;
    s.n = f.n;
    s.k = g.k;
    s.domain = g.domain;
    const int n = f.n;
    const int k = g.k;
    auto fv = f.value;
    auto fg = f.gradient;
    auto fh = f.hessian;
    auto gv = g.value;
    auto gg = g.gradient;
    auto gh = g.hessian;
    s.value = [fv, gv](const Vec& x, const Vec& y) { return fv(x, Vec()) * gv(y); };
    s.gradient = [fv, fg, gv, gg, n, k](const Vec& x, const Vec& y) {
        Vec out(n + k);
        out.head(n) = gv(y) * fg(x, Vec());
        out.tail(k) = fv(x, Vec()) * gg(y);
        return out;
    };
    s.hessian = [fv, fg, fh, gv, gg, gh, n, k](const Vec& x, const Vec& y) {
        Mat out(n + k, n + k);
        const Vec dfx = fg(x, Vec());
        const Vec dgy = gg(y);
        out.topLeftCorner(n, n) = gv(y) * fh(x, Vec());
        out.topRightCorner(n, k) = dfx * dgy.transpose();
        out.bottomLeftCorner(k, n) = dgy * dfx.transpose();
        out.bottomRightCorner(k, k) = fv(x, Vec()) * gh(y);
        return out;
    };
    s.multiplicative = true;
    s.concave_in_x = f.concave_in_x;  // meaningful when g > 0
    s.long_only = f.long_only;
    s.name = f.name + "*" + g.name;
    s.params = f.params;
    return s;
}

// Mix of the market and an underperforming portfolio: value
// Z = (1 + a) Z^mu - a Z^pi must stay positive, and the mixed weights are
// eta^i = ((1 + a) Z^mu mu^i - a Z^pi pi^i) / Z.
inline Vec quality_overlay_weights(const Vec& mu, const Vec& pi, double z_mu, double z_pi,
                                   double a) {
    if (mu.size() != pi.size()) throw InputError("quality_overlay_weights: size mismatch");
    if (!(a > 0.0)) throw InputError("quality_overlay_weights: a must be positive");
    if (!(z_mu > 0.0) || !(z_pi > 0.0))
        throw InputError("quality_overlay_weights: portfolio values must be positive");
    const double z = (1.0 + a) * z_mu - a * z_pi;
    if (!(z > 0.0))
        throw ComputeError("quality_overlay_weights: overlay value is not positive");
    return (((1.0 + a) * z_mu) * mu - (a * z_pi) * pi) / z;
}

// Derived mix coefficient a = e^{-b} / (2 - e^{-b} - e^{-varsigma}), b = 1 + A.
inline double quality_overlay_coefficient(double A, double varsigma) {
    const double b = 1.0 + A;
    const double denom = 2.0 - std::exp(-b) - std::exp(-varsigma);
    if (!(denom > 0.0)) throw InputError("quality_overlay_coefficient: denominator not positive");
    return std::exp(-b) / denom;
}

// ---- numeric derivatives -------------------------------------------------

namespace detail {

inline double fd_step(double coord) { return 1e-6 * (1.0 + std::abs(coord)); }

inline double eval_shifted(const GeneratingFunction& s, Vec x, Vec y, int a, double da, int b,
                           double db) {
    auto bump = [&](int idx, double d) {
        if (idx < s.n)
            x[idx] += d;
        else
            y[idx - s.n] += d;
    };
    bump(a, da);
    if (b >= 0) bump(b, db);
    return s.value(x, y);
}

}  // namespace detail

// Replaces the analytic derivatives with central differences of the value,
// step 1e-6 (1 + |coordinate|). Intended for user-supplied values and as the
// independent reference in consistency checks.
inline GeneratingFunction with_numeric_derivatives(GeneratingFunction s) {
    GeneratingFunction base = s;
    const int m = s.n + s.k;
    s.gradient = [base, m](const Vec& x, const Vec& y) {
        Vec g(m);
        for (int a = 0; a < m; ++a) {
            const double coord = a < base.n ? x[a] : y[a - base.n];
            const double h = detail::fd_step(coord);
            g[a] = (detail::eval_shifted(base, x, y, a, h, -1, 0.0) -
                    detail::eval_shifted(base, x, y, a, -h, -1, 0.0)) /
                   (2.0 * h);
        }
        return g;
    };
    s.hessian = [base, m](const Vec& x, const Vec& y) {
        Mat h(m, m);
        const double f0 = base.value(x, y);
        for (int a = 0; a < m; ++a) {
            const double ca = a < base.n ? x[a] : y[a - base.n];
            const double ha = detail::fd_step(ca);
            h(a, a) = (detail::eval_shifted(base, x, y, a, ha, -1, 0.0) - 2.0 * f0 +
                       detail::eval_shifted(base, x, y, a, -ha, -1, 0.0)) /
                      (ha * ha);
            for (int b = a + 1; b < m; ++b) {
                const double cb = b < base.n ? x[b] : y[b - base.n];
                const double hb = detail::fd_step(cb);
                const double v = (detail::eval_shifted(base, x, y, a, ha, b, hb) -
                                  detail::eval_shifted(base, x, y, a, ha, b, -hb) -
                                  detail::eval_shifted(base, x, y, a, -ha, b, hb) +
                                  detail::eval_shifted(base, x, y, a, -ha, b, -hb)) /
                                 (4.0 * ha * hb);
                h(a, b) = h(b, a) = v;
            }
        }
        return h;
    };
    return s;
}

struct GradientConsistencyReport {
    bool pass = true;
    double worst_rel_err = 0.0;          // gradient vs differenced value
    double worst_hessian_rel_err = 0.0;  // hessian vs differenced gradient
    int samples = 0;
};

// Compares the analytic gradient against central differences of the value,
// and the analytic Hessian against central differences of the gradient, at
// random interior points. Characteristics are sampled inside the declared
// box, pulled in from infinite edges.
inline GradientConsistencyReport gradient_consistency_check(const GeneratingFunction& s,
                                                            int n_points, std::uint64_t seed,
                                                            double rel_tol = 1e-5);

}  // namespace sptlab

#include "rng.hpp"

namespace sptlab {

inline GradientConsistencyReport gradient_consistency_check(const GeneratingFunction& s,
                                                            int n_points, std::uint64_t seed,
                                                            double rel_tol) {
    NoiseStream stream(NoiseStream::derive_key(seed, kAuxNoiseTag, 0));
    GeneratingFunction numeric = with_numeric_derivatives(s);
    GradientConsistencyReport rep;
    rep.samples = n_points;
    std::uint64_t ctr = 0;
    for (int p = 0; p < n_points; ++p) {
        // Interior simplex points kept away from extreme corners, where the
        // finite-difference reference itself loses accuracy.
        Vec x(s.n);
        for (int i = 0; i < s.n; ++i) x[i] = -std::log(stream.uniform(ctr++));
        x /= x.sum();
        x = Vec::Constant(s.n, 0.05 / s.n) + 0.95 * x;
        Vec y(s.k);
        for (int j = 0; j < s.k; ++j) {
            double lo = s.domain.lo[j], hi = s.domain.hi[j];
            if (!std::isfinite(lo)) lo = -2.0;
            if (!std::isfinite(hi)) hi = lo + 3.0;
            const double u = stream.uniform(ctr++);
            y[j] = lo + (hi - lo) * (0.05 + 0.9 * u);
        }
        const Vec ga = s.gradient(x, y);
        const Vec gn = numeric.gradient(x, y);
        const double scale = std::max(1.0, ga.cwiseAbs().maxCoeff());
        const double err = (ga - gn).cwiseAbs().maxCoeff() / scale;
        rep.worst_rel_err = std::max(rep.worst_rel_err, err);

        const Mat hess = s.hessian(x, y);
        const int m = s.n + s.k;
        Mat hess_fd(m, m);
        for (int b = 0; b < m; ++b) {
            Vec xp = x, xm = x, yp = y, ym = y;
            const double coord = b < s.n ? x[b] : y[b - s.n];
            const double h = detail::fd_step(coord);
            if (b < s.n) {
                xp[b] += h;
                xm[b] -= h;
            } else {
                yp[b - s.n] += h;
                ym[b - s.n] -= h;
            }
            hess_fd.col(b) = (s.gradient(xp, yp) - s.gradient(xm, ym)) / (2.0 * h);
        }
        const double hscale = std::max(1.0, hess.cwiseAbs().maxCoeff());
        const double herr = (hess - hess_fd).cwiseAbs().maxCoeff() / hscale;
        rep.worst_hessian_rel_err = std::max(rep.worst_hessian_rel_err, herr);
    }
    rep.pass = rep.worst_rel_err <= rel_tol && rep.worst_hessian_rel_err <= rel_tol;
    return rep;
}

}  // namespace sptlab
