#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sptlab/backtest.hpp"
#include "sptlab/config.hpp"
#include "sptlab/data_io.hpp"
#include "sptlab/market.hpp"
#include "sptlab/strategies.hpp"
#include "sptlab/verification.hpp"

namespace {

using namespace sptlab;

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

std::string fixed2(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fixed4(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

int cmd_simulate(const RunConfig& cfg) {
    const auto spec = cfg.market_spec();
    const auto grid = cfg.grid();
    const auto paths = simulate_market(spec, grid, cfg.paths, cfg.threads);

    const std::string out = cfg.resolved_out_dir();
    nlohmann::json summary;
    summary["schema_version"] = kReportSchemaVersion;
    summary["command"] = "simulate";
    summary["model"] = cfg.model_kind;
    summary["n"] = cfg.n;
    summary["paths"] = cfg.paths;
    summary["dt"] = cfg.dt;
    summary["horizon"] = cfg.horizon;
    summary["seed"] = cfg.seed;

    double min_weight = 1.0;
    long clamp_total = 0;
    std::vector<double> realized(paths.size());
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const auto& path = paths[p];
        const auto mu = market_weights_path(path);
        min_weight = std::min(min_weight, mu.weights.minCoeff());
        clamp_total += path.clamp_events;
        const Vec cum = realized_market_excess_growth(path);
        realized[p] = cum[path.steps()] / path.times[path.steps()];
        char name[32];
        std::snprintf(name, sizeof(name), "path_%04d.csv", static_cast<int>(p));
        save_path_csv(path, join_path(out, std::string("paths/") + name));
    }
    double mean_realized = 0.0;
    for (double g : realized) mean_realized += g;
    mean_realized /= static_cast<double>(realized.size());

    summary["realized_excess_growth_mean"] = mean_realized;
    summary["realized_excess_growth_per_path"] = realized;
    summary["min_market_weight"] = min_weight;
    summary["clamp_events_total"] = clamp_total;

    auto file = open_out(join_path(out, "summary.json"));
    file << summary.dump(2) << "\n";

    std::cout << "simulated " << cfg.paths << " paths (n=" << cfg.n << ", dt=" << cfg.dt
              << ", horizon=" << cfg.horizon << ")\n"
              << "  mean realized market excess growth rate: " << mean_realized << "\n"
              << "  minimum market weight: " << min_weight << "\n"
              << "  weight-floor clamp events: " << clamp_total << "\n"
              << "  wrote " << out << "/paths and " << out << "/summary.json\n";
    return 0;
}

int cmd_verify(const RunConfig& cfg) {
    const auto results = run_verification_suite(cfg.seed);
    const std::string out = cfg.resolved_out_dir();

    nlohmann::json report;
    report["schema_version"] = kReportSchemaVersion;
    report["command"] = "verify";
    report["seed"] = cfg.seed;
    report["checks"] = nlohmann::json::object();
    bool all_pass = true;
    for (const auto& res : results) {
        all_pass = all_pass && res.pass;
        nlohmann::json jc;
        jc["pass"] = res.pass;
        jc["margin"] = res.margin;
        jc["detail"] = res.detail;
        report["checks"][res.name] = jc;
        std::cout << (res.pass ? "PASS" : "FAIL") << "  " << res.name
                  << "  margin=" << detail::fmt(res.margin) << "  " << res.detail << "\n";
    }
    auto file = open_out(join_path(out, "verification.json"));
    file << report.dump(2) << "\n";
    std::cout << (all_pass ? "all checks passed" : "verification FAILED") << "\n";
    return all_pass ? 0 : 1;
}

struct NamedRun {
    std::string name;
    BacktestRun run;
    BacktestReport report;
};

void print_tables(const std::map<std::string, BacktestReport>& reports) {
    std::cout << "\nstrategy          ann.ret%  sharpe    IR  terminal  turnover"
                 "  alpha%   beta     R2  short\n";
    for (const auto& [name, rep] : reports) {
        std::printf("%-16s %9s %7s %5s %9s %9s %7s %6s %6s %6s\n", name.c_str(),
                    fixed2(rep.ann_return * 100.0).c_str(),
                    (rep.sharpe_defined ? fixed2(rep.sharpe) : "-").c_str(),
                    (rep.info_ratio_defined ? fixed2(rep.info_ratio) : "-").c_str(),
                    fixed2(rep.terminal_value).c_str(), fixed2(rep.ann_turnover).c_str(),
                    fixed2(rep.ann_alpha_pct).c_str(), fixed2(rep.beta).c_str(),
                    fixed2(rep.r_squared).c_str(), fixed4(rep.mean_short).c_str());
        if (!rep.note.empty()) std::printf("%-16s   note: %s\n", "", rep.note.c_str());
    }
    bool any_ff3 = false;
    for (const auto& [name, rep] : reports) any_ff3 = any_ff3 || rep.ff3.has_value();
    if (any_ff3) {
        std::cout << "\nthree-factor regression\nstrategy          alpha%   beta    smb    hml"
                     "     R2\n";
        for (const auto& [name, rep] : reports) {
            if (!rep.ff3) continue;
            std::printf("%-16s %7s %6s %6s %6s %6s\n", name.c_str(),
                        fixed2(rep.ff3->alpha_pct).c_str(), fixed2(rep.ff3->beta).c_str(),
                        fixed2(rep.ff3->smb_loading).c_str(), fixed2(rep.ff3->hml_loading).c_str(),
                        fixed2(rep.ff3->r_squared).c_str());
        }
    }
}

int cmd_backtest(const RunConfig& cfg) {
    const Panel panel =
        load_panel(cfg.prices_csv, cfg.shares_csv, cfg.roa_csv, cfg.factors_csv, cfg.roa_scale);

    StrategyInputs inputs;
    inputs.prices = panel.prices;
    inputs.caps = panel.caps();
    bool needs_roa = false;
    for (const auto& sc : cfg.strategies) needs_roa = needs_roa || sc.kind == "roa_overlay";
    if (needs_roa) inputs.roa = panel.roa;
    inputs.validate();

    // The market portfolio anchors every regression, so it is always run,
    // whether or not it was requested as a row.
    const Mat market_w = market_weight_matrix(inputs);
    const BacktestRun market_run = run_backtest(panel.prices, column_rule(market_w), cfg.costs);
    if (market_run.depleted) throw ComputeError("market reference run depleted");

    const int T = market_run.periods();
    const Vec rf = panel.rf.segment(1, T);
    const Vec smb = panel.smb.segment(1, T);
    const Vec hml = panel.hml.segment(1, T);

    std::vector<NamedRun> runs;
    for (const auto& sc : cfg.strategies) {
        NamedRun nr;
        nr.name = sc.name;
        if (sc.kind == "market") {
            nr.run = market_run;
        } else {
            const Mat w = strategy_weight_matrix(sc, inputs);
            nr.run = run_backtest(panel.prices, column_rule(w), cfg.costs);
        }
        if (nr.run.depleted) {
            nr.report.note =
                "wealth depleted after " + std::to_string(nr.run.depletion_step) + " periods";
            nr.report.terminal_value = 0.0;
            nr.report.ann_return = -1.0;
            nr.report.sharpe = nr.report.info_ratio = std::numeric_limits<double>::quiet_NaN();
            nr.report.ann_alpha_pct = nr.report.beta = nr.report.r_squared =
                std::numeric_limits<double>::quiet_NaN();
        } else {
            nr.report = performance_stats(nr.run, market_run, rf);
            nr.report.ff3 = ff3_stats(nr.run, market_run, smb, hml, rf);
        }
        runs.push_back(std::move(nr));
    }

    const std::string out = cfg.resolved_out_dir();
    std::map<std::string, BacktestReport> reports;
    std::map<std::string, Vec> wealth;
    for (const auto& nr : runs) {
        reports[nr.name] = nr.report;
        if (!nr.run.depleted) wealth[nr.name] = nr.run.wealth;
    }
    write_report_json(reports, join_path(out, "report.json"));
    write_wealth_curves(panel.dates, wealth, join_path(out, "wealth.csv"));

    std::cout << "backtested " << runs.size() << " strategies on " << panel.n() << " tickers, "
              << T << " periods (" << panel.dates.front() << " .. " << panel.dates.back()
              << ")\nwrote " << out << "/report.json and " << out << "/wealth.csv\n";
    print_tables(reports);
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    const std::string file = join_path(cfg.resolved_out_dir(), "report.json");
    std::ifstream in(file);
    if (!in) throw InputError("cannot open " + file + " (run backtest first)");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(file + ": " + e.what());
    }
    if (!j.count("strategies")) throw InputError(file + ": missing strategies block");
    std::map<std::string, BacktestReport> reports;
    for (const auto& [name, jr] : j.at("strategies").items())
        reports[name] = report_from_json(jr);
    std::cout << "report " << file << " (schema "
              << j.value("schema_version", 0) << ")\n";
    print_tables(reports);
    return 0;
}

struct CliOverrides {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    double dt = 0.0;
    int paths = 0;
};

void add_common_options(CLI::App* sub, CliOverrides& o) {
    sub->add_option("--config", o.config, "JSON run configuration file");
    sub->add_option("--seed", o.seed, "override the master seed");
    sub->add_option("--out", o.out, "override the output directory");
    sub->add_option("--dt", o.dt, "override the simulation step");
    sub->add_option("--paths", o.paths, "override the number of paths");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation, verification, and backtesting of functionally generated portfolios"};
    app.require_subcommand(1);
    CliOverrides o;
    auto* sim = app.add_subcommand("simulate", "simulate market paths and summarize them");
    auto* ver = app.add_subcommand("verify", "run the full property suite");
    auto* bt = app.add_subcommand("backtest", "run the configured strategies on a data panel");
    auto* rep = app.add_subcommand("report", "pretty-print a previously written report");
    for (auto* sub : {sim, ver, bt, rep}) add_common_options(sub, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        sptlab::RunConfig cfg;
        if (!o.config.empty()) cfg = sptlab::RunConfig::from_file(o.config);
        cfg.command = active->get_name();
        if (active->count("--seed") > 0) cfg.seed = o.seed;
        if (active->count("--out") > 0) cfg.out_dir = o.out;
        if (active->count("--dt") > 0) cfg.dt = o.dt;
        if (active->count("--paths") > 0) cfg.paths = o.paths;
        cfg.validate();

        if (cfg.command == "simulate") return cmd_simulate(cfg);
        if (cfg.command == "verify") return cmd_verify(cfg);
        if (cfg.command == "backtest") return cmd_backtest(cfg);
        return cmd_report(cfg);
    } catch (const sptlab::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
