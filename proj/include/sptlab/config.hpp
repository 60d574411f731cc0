#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "backtest.hpp"
#include "common.hpp"
#include "market.hpp"
#include "strategies.hpp"

namespace sptlab {

// One backtest strategy: a constructor kind plus its parameters. Parameters
// not supplied fall back to the documented defaults of each constructor.
struct StrategyConfig {
    std::string name;  // row label in reports
    std::string kind;  // market | equal | entropy | beta | roa_overlay
    std::map<std::string, double> params;

    double param(const std::string& key, double fallback) const {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

inline std::vector<StrategyConfig> default_strategies() {
    return {
        {"market", "market", {}},
        {"equal_weight", "equal", {}},
        {"entropy", "entropy", {{"c", 0.1}}},
        {"beta", "beta", {{"A", 1e-4}, {"c", 1e-4}, {"p", 0.7}}},
        {"roa_quality", "roa_overlay", {{"a", 2.5}}},
    };
}

inline Mat strategy_weight_matrix(const StrategyConfig& sc, const StrategyInputs& in) {
    if (sc.kind == "market") return market_weight_matrix(in);
    if (sc.kind == "equal") return equal_weight_matrix(in);
    if (sc.kind == "entropy") return entropy_weight_matrix(in, sc.param("c", 0.1));
    if (sc.kind == "beta")
        return beta_weight_matrix(in, sc.param("A", 1e-4), sc.param("c", 1e-4),
                                  sc.param("p", 0.7));
    if (sc.kind == "roa_overlay") return roa_overlay_weight_matrix(in, sc.param("a", 2.5));
    throw InputError("unknown strategy kind '" + sc.kind + "'");
}

// Full run description. Defaults give a small volatility-stabilized smoke
// run with the standard strategy set.
struct RunConfig {
    std::string command = "simulate";  // simulate | verify | backtest | report

    // market model
    std::string model_kind = "volatility_stabilized";  // or constant_log_diffusion
    int n = 5;
    double alpha = 1.0;      // volatility-stabilized growth parameter
    double gamma_drift = 0.0;
    double xi_diag = 0.2;    // diagonal noise loading of the log-diffusion model
    Vec initial_prices;      // empty = all ones

    // simulation grid
    double horizon = 1.0;
    double dt = 1e-3;
    int paths = 100;
    int threads = 1;
    std::uint64_t seed = 12345;

    // backtest inputs
    std::vector<StrategyConfig> strategies = default_strategies();
    CostModel costs;
    std::string prices_csv, shares_csv, roa_csv, factors_csv;
    double roa_scale = 10.0;

    std::string out_dir;  // empty = env default

    MarketSpec market_spec() const {
        MarketSpec spec;
        spec.n = n;
        spec.initial_prices =
            initial_prices.size() > 0 ? initial_prices : Vec::Constant(n, 1.0);
        if (model_kind == "volatility_stabilized") {
            spec.model = VolatilityStabilized{alpha};
        } else {
            ConstantLogDiffusion m;
            m.gamma = Vec::Constant(n, gamma_drift);
            m.xi = Mat::Identity(n, n) * xi_diag;
            spec.model = m;
        }
        return spec;
    }

    SimGrid grid() const { return SimGrid::from_horizon(horizon, dt, seed); }

    // Resolved output directory: config value, else environment, else ./out.
    std::string resolved_out_dir() const {
        if (!out_dir.empty()) return out_dir;
        if (const char* env = std::getenv("SPTLAB_OUT_DIR"); env != nullptr && *env != '\0')
            return env;
        return "out";
    }

    void validate() const {
        static const std::set<std::string> commands{"simulate", "verify", "backtest", "report"};
        if (!commands.count(command)) throw InputError("unknown command '" + command + "'");
        if (model_kind != "volatility_stabilized" && model_kind != "constant_log_diffusion")
            throw InputError("unknown model kind '" + model_kind + "'");
        if (n < 2) throw InputError("config: n must be at least 2");
        if (model_kind == "volatility_stabilized" && !(alpha > 0.0))
            throw InputError("config: alpha must be positive");
        if (!(xi_diag >= 0.0)) throw InputError("config: xi_diag must be non-negative");
        if (initial_prices.size() > 0) {
            if (initial_prices.size() != n)
                throw InputError("config: initial_prices must have n entries");
            if (!(initial_prices.minCoeff() > 0.0))
                throw InputError("config: initial prices must be positive");
        }
        if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon)
            throw InputError("config: need 0 < dt <= horizon");
        if (paths < 1) throw InputError("config: paths must be at least 1");
        if (threads < 1) throw InputError("config: threads must be at least 1");
        costs.validate();
        if (strategies.empty()) throw InputError("config: strategy list is empty");
        std::set<std::string> names;
        for (const auto& sc : strategies) {
            if (sc.name.empty()) throw InputError("config: strategy without a name");
            if (!names.insert(sc.name).second)
                throw InputError("config: duplicate strategy name '" + sc.name + "'");
            if (sc.kind == "entropy") {
                if (!(sc.param("c", 0.1) > 0.0))
                    throw InputError("config: entropy strategy needs c > 0");
            } else if (sc.kind == "beta") {
                const double p = sc.param("p", 0.7);
                if (!(sc.param("A", 1e-4) >= 0.0) || !(sc.param("c", 1e-4) > 0.0) ||
                    !(p > 0.0 && p < 1.0))
                    throw InputError("config: beta strategy needs A >= 0, c > 0, 0 < p < 1");
            } else if (sc.kind == "roa_overlay") {
                if (!(sc.param("a", 2.5) > 0.0))
                    throw InputError("config: roa_overlay strategy needs a > 0");
            } else if (sc.kind != "market" && sc.kind != "equal") {
                throw InputError("unknown strategy kind '" + sc.kind + "'");
            }
        }
        if (!(roa_scale > 0.0)) throw InputError("config: roa_scale must be positive");
        if (command == "backtest") {
            if (prices_csv.empty() || shares_csv.empty() || roa_csv.empty() ||
                factors_csv.empty())
                throw InputError("config: backtest needs prices, shares, roa, and factors files");
        }
    }

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& file) {
        std::ifstream in(file);
        if (!in) throw InputError("cannot open config file " + file);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InputError("config file " + file + ": " + e.what());
        }
        return from_json(j);
    }
};

namespace detail {

inline void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                               const std::string& where) {
    if (!j.is_object()) throw InputError("config: " + where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw InputError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.count(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("config: bad value for '" + key + "'");
    }
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    using detail::get_or;
    detail::require_known_keys(
        j, {"command", "model", "grid", "seed", "costs", "strategies", "data", "out_dir"},
        "top level");
    RunConfig cfg;
    cfg.command = get_or<std::string>(j, "command", cfg.command);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

    if (j.count("model")) {
        const auto& jm = j.at("model");
        detail::require_known_keys(
            jm, {"kind", "n", "alpha", "gamma", "xi_diag", "initial_prices"}, "model");
        cfg.model_kind = get_or<std::string>(jm, "kind", cfg.model_kind);
        cfg.n = get_or<int>(jm, "n", cfg.n);
        cfg.alpha = get_or<double>(jm, "alpha", cfg.alpha);
        cfg.gamma_drift = get_or<double>(jm, "gamma", cfg.gamma_drift);
        cfg.xi_diag = get_or<double>(jm, "xi_diag", cfg.xi_diag);
        if (jm.count("initial_prices")) {
            const auto v = get_or<std::vector<double>>(jm, "initial_prices", {});
            cfg.initial_prices = Eigen::Map<const Vec>(v.data(), static_cast<int>(v.size()));
        }
    }
    if (j.count("grid")) {
        const auto& jg = j.at("grid");
        detail::require_known_keys(jg, {"horizon", "dt", "paths", "threads"}, "grid");
        cfg.horizon = get_or<double>(jg, "horizon", cfg.horizon);
        cfg.dt = get_or<double>(jg, "dt", cfg.dt);
        cfg.paths = get_or<int>(jg, "paths", cfg.paths);
        cfg.threads = get_or<int>(jg, "threads", cfg.threads);
    }
    if (j.count("costs")) {
        const auto& jc = j.at("costs");
        detail::require_known_keys(jc, {"proportional", "short_fee"}, "costs");
        cfg.costs.eps1 = get_or<double>(jc, "proportional", cfg.costs.eps1);
        cfg.costs.eps2 = get_or<double>(jc, "short_fee", cfg.costs.eps2);
    }
    if (j.count("strategies")) {
        if (!j.at("strategies").is_array())
            throw InputError("config: strategies must be an array");
        cfg.strategies.clear();
        for (const auto& js : j.at("strategies")) {
            detail::require_known_keys(js, {"name", "kind", "params"}, "strategy");
            StrategyConfig sc;
            sc.kind = get_or<std::string>(js, "kind", "");
            sc.name = get_or<std::string>(js, "name", sc.kind);
            if (js.count("params")) {
                if (!js.at("params").is_object())
                    throw InputError("config: strategy params must be an object");
                for (const auto& [key, val] : js.at("params").items()) {
                    if (!val.is_number())
                        throw InputError("config: strategy parameter '" + key +
                                         "' must be a number");
                    sc.params[key] = val.get<double>();
                }
            }
            cfg.strategies.push_back(sc);
        }
    }
    if (j.count("data")) {
        const auto& jd = j.at("data");
        detail::require_known_keys(jd, {"prices", "shares", "roa", "factors", "roa_scale"},
                                   "data");
        cfg.prices_csv = get_or<std::string>(jd, "prices", "");
        cfg.shares_csv = get_or<std::string>(jd, "shares", "");
        cfg.roa_csv = get_or<std::string>(jd, "roa", "");
        cfg.factors_csv = get_or<std::string>(jd, "factors", "");
        cfg.roa_scale = get_or<double>(jd, "roa_scale", cfg.roa_scale);
    }
    cfg.validate();
    return cfg;
}

}  // namespace sptlab
