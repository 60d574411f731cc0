#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "backtest.hpp"
#include "common.hpp"
#include "decomposition.hpp"
#include "market.hpp"

namespace sptlab {

// Aligned daily panel: prices and factor returns define the date index,
// sparsely reported shares and ROA are carried forward onto it.
struct Panel {
    std::vector<std::string> dates;    // T + 1, strictly increasing ISO dates
    std::vector<std::string> tickers;  // n, sorted
    Mat prices;                        // n x (T+1), positive
    Mat shares;                        // n x (T+1), positive, carried forward
    Mat roa;                           // n x (T+1), carried forward and scaled
    Vec mkt_rf, smb, hml, rf;          // per date, daily decimal returns

    int n() const { return static_cast<int>(tickers.size()); }
    int horizon() const { return static_cast<int>(dates.size()) - 1; }
    Mat caps() const { return prices.cwiseProduct(shares); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError("could not parse number '" + s + "' in " + context);
    }
}

inline std::vector<std::string> read_lines(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open " + file);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (!t.empty()) lines.push_back(t);
    }
    return lines;
}

// Long-format series file: header date,ticker,value.
using LongSeries = std::map<std::string, std::map<std::string, double>>;  // ticker -> date -> v

inline LongSeries read_long_csv(const std::string& file) {
    const auto lines = read_lines(file);
    if (lines.empty()) throw InputError(file + ": empty file");
    const auto header = split_csv(lines[0]);
    if (header != std::vector<std::string>{"date", "ticker", "value"})
        throw InputError(file + ": expected header date,ticker,value");
    LongSeries series;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_csv(lines[r]);
        if (cells.size() != 3) throw InputError(file + ": malformed row '" + lines[r] + "'");
        if (!is_iso_date(cells[0]))
            throw InputError(file + ": date '" + cells[0] + "' is not ISO-8601");
        auto& per_date = series[cells[1]];
        if (!per_date.emplace(cells[0], parse_double(cells[2], file)).second)
            throw InputError(file + ": duplicate entry for " + cells[1] + " on " + cells[0]);
    }
    return series;
}

// Last reported value at or before `date`; absent when nothing was reported
// yet (forward fill must never look ahead).
inline const double* last_report(const std::map<std::string, double>& reports,
                                 const std::string& date) {
    auto it = reports.upper_bound(date);
    if (it == reports.begin()) return nullptr;
    --it;
    return &it->second;
}

}  // namespace detail

// Loads and aligns the four inputs. The date index is the intersection of
// dates with a price for every ticker and a factor row; shares and ROA are
// carried forward from their own (typically sparser) reporting dates, and
// ROA values are multiplied by roa_scale.
inline Panel load_panel(const std::string& prices_csv, const std::string& shares_csv,
                        const std::string& roa_csv, const std::string& factors_csv,
                        double roa_scale = 10.0) {
    const auto price_series = detail::read_long_csv(prices_csv);
    const auto share_series = detail::read_long_csv(shares_csv);
    const auto roa_series = detail::read_long_csv(roa_csv);

    Panel panel;
    for (const auto& [ticker, _] : price_series) panel.tickers.push_back(ticker);
    std::sort(panel.tickers.begin(), panel.tickers.end());
    if (panel.n() < 2) throw InputError("load_panel: need at least two tickers");

    // Factor file: header date,mkt_rf,smb,hml,rf.
    const auto factor_lines = detail::read_lines(factors_csv);
    if (factor_lines.empty()) throw InputError(factors_csv + ": empty file");
    if (detail::split_csv(factor_lines[0]) !=
        std::vector<std::string>{"date", "mkt_rf", "smb", "hml", "rf"})
        throw InputError(factors_csv + ": expected header date,mkt_rf,smb,hml,rf");
    std::map<std::string, std::array<double, 4>> factor_rows;
    for (std::size_t r = 1; r < factor_lines.size(); ++r) {
        const auto cells = detail::split_csv(factor_lines[r]);
        if (cells.size() != 5)
            throw InputError(factors_csv + ": malformed row '" + factor_lines[r] + "'");
        if (!detail::is_iso_date(cells[0]))
            throw InputError(factors_csv + ": date '" + cells[0] + "' is not ISO-8601");
        std::array<double, 4> row;
        for (int c = 0; c < 4; ++c) row[c] = detail::parse_double(cells[c + 1], factors_csv);
        if (!factor_rows.emplace(cells[0], row).second)
            throw InputError(factors_csv + ": duplicate date " + cells[0]);
    }

    // Date index: every ticker priced and a factor row present.
    for (const auto& [date, _] : price_series.at(panel.tickers[0])) {
        bool all = factor_rows.count(date) > 0;
        for (const auto& ticker : panel.tickers)
            all = all && price_series.at(ticker).count(date) > 0;
        if (all) panel.dates.push_back(date);
    }
    if (panel.dates.size() < 2)
        throw InputError("load_panel: date intersection across sources has fewer than two days");

    const int n = panel.n();
    const int cols = static_cast<int>(panel.dates.size());
    panel.prices.resize(n, cols);
    panel.shares.resize(n, cols);
    panel.roa.resize(n, cols);
    panel.mkt_rf.resize(cols);
    panel.smb.resize(cols);
    panel.hml.resize(cols);
    panel.rf.resize(cols);

    for (int i = 0; i < n; ++i) {
        const auto& ticker = panel.tickers[i];
        const auto share_it = share_series.find(ticker);
        const auto roa_it = roa_series.find(ticker);
        if (share_it == share_series.end())
            throw InputError("load_panel: ticker " + ticker + " missing from " + shares_csv);
        if (roa_it == roa_series.end())
            throw InputError("load_panel: ticker " + ticker + " missing from " + roa_csv);
        for (int t = 0; t < cols; ++t) {
            const auto& date = panel.dates[t];
            const double px = price_series.at(ticker).at(date);
            if (!(px > 0.0))
                throw InputError("load_panel: non-positive price for " + ticker + " on " + date);
            panel.prices(i, t) = px;
            const double* sh = detail::last_report(share_it->second, date);
            if (sh == nullptr)
                throw InputError("load_panel: ticker " + ticker +
                                 " has no shares report on or before " + date);
            if (!(*sh > 0.0))
                throw InputError("load_panel: non-positive shares for " + ticker + " on " + date);
            panel.shares(i, t) = *sh;
            const double* ro = detail::last_report(roa_it->second, date);
            if (ro == nullptr)
                throw InputError("load_panel: ticker " + ticker +
                                 " has no roa report on or before " + date);
            panel.roa(i, t) = *ro * roa_scale;
        }
    }
    for (int t = 0; t < cols; ++t) {
        const auto& row = factor_rows.at(panel.dates[t]);
        panel.mkt_rf[t] = row[0];
        panel.smb[t] = row[1];
        panel.hml[t] = row[2];
        panel.rf[t] = row[3];
    }
    return panel;
}

// ---- writers ---------------------------------------------------------------

// Shortest exact decimal form: %.17g round-trips doubles bit-for-bit, which
// keeps every emitted file byte-stable across runs.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::string& file) {
    const auto parent = std::filesystem::path(file).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(file);
    if (!out) throw InputError("cannot write " + file);
    return out;
}

inline void save_path_csv(const MarketPath& path, const std::string& file) {
    auto out = open_out(file);
    out << "# master_seed=" << path.master_seed << " path_index=" << path.path_index
        << " clamp_events=" << path.clamp_events << "\n";
    out << "t";
    for (int i = 0; i < path.n(); ++i) out << ",X" << (i + 1);
    out << "\n";
    for (int t = 0; t <= path.steps(); ++t) {
        out << format_g17(path.times[t]);
        for (int i = 0; i < path.n(); ++i) out << "," << format_g17(path.prices(i, t));
        out << "\n";
    }
    if (!out) throw InputError("write failed on " + file);
}

inline MarketPath load_path_csv(const std::string& file) {
    const auto lines = detail::read_lines(file);
    MarketPath path;
    std::vector<std::string> rows;
    for (const auto& line : lines) {
        if (line[0] == '#') {
            std::stringstream ss(line.substr(1));
            std::string token;
            while (ss >> token) {
                const auto eq = token.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = token.substr(0, eq);
                const std::string val = token.substr(eq + 1);
                if (key == "master_seed") path.master_seed = std::stoull(val);
                if (key == "path_index") path.path_index = std::stoi(val);
                if (key == "clamp_events") path.clamp_events = std::stol(val);
            }
            continue;
        }
        rows.push_back(line);
    }
    if (rows.size() < 3) throw InputError(file + ": need a header and at least two rows");
    const auto header = detail::split_csv(rows[0]);
    const int n = static_cast<int>(header.size()) - 1;
    if (n < 2 || header[0] != "t") throw InputError(file + ": expected header t,X1,...");
    const int steps = static_cast<int>(rows.size()) - 2;
    path.times.resize(steps + 1);
    path.prices.resize(n, steps + 1);
    for (int t = 0; t <= steps; ++t) {
        const auto cells = detail::split_csv(rows[t + 1]);
        if (static_cast<int>(cells.size()) != n + 1)
            throw InputError(file + ": malformed row '" + rows[t + 1] + "'");
        path.times[t] = detail::parse_double(cells[0], file);
        for (int i = 0; i < n; ++i)
            path.prices(i, t) = detail::parse_double(cells[i + 1], file);
    }
    return path;
}

// ---- report serialization --------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

namespace detail {

inline nlohmann::json number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

inline double number_from(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::json report_to_json(const BacktestReport& rep) {
    nlohmann::json j;
    j["ann_return"] = rep.ann_return;
    j["sharpe"] = detail::number_or_null(rep.sharpe);
    j["sharpe_defined"] = rep.sharpe_defined;
    j["info_ratio"] = detail::number_or_null(rep.info_ratio);
    j["info_ratio_defined"] = rep.info_ratio_defined;
    j["terminal_value"] = rep.terminal_value;
    j["ann_turnover"] = rep.ann_turnover;
    j["ann_alpha_pct"] = rep.ann_alpha_pct;
    j["beta"] = rep.beta;
    j["r_squared"] = rep.r_squared;
    j["mean_short"] = rep.mean_short;
    if (!rep.note.empty()) j["note"] = rep.note;
    if (rep.ff3) {
        nlohmann::json f;
        f["alpha_pct"] = rep.ff3->alpha_pct;
        f["beta"] = rep.ff3->beta;
        f["smb_loading"] = rep.ff3->smb_loading;
        f["hml_loading"] = rep.ff3->hml_loading;
        f["r_squared"] = rep.ff3->r_squared;
        j["ff3"] = f;
    }
    return j;
}

inline BacktestReport report_from_json(const nlohmann::json& j) {
    BacktestReport rep;
    rep.ann_return = j.at("ann_return").get<double>();
    rep.sharpe = detail::number_from(j.at("sharpe"));
    rep.sharpe_defined = j.at("sharpe_defined").get<bool>();
    rep.info_ratio = detail::number_from(j.at("info_ratio"));
    rep.info_ratio_defined = j.at("info_ratio_defined").get<bool>();
    rep.terminal_value = j.at("terminal_value").get<double>();
    rep.ann_turnover = j.at("ann_turnover").get<double>();
    rep.ann_alpha_pct = j.at("ann_alpha_pct").get<double>();
    rep.beta = j.at("beta").get<double>();
    rep.r_squared = j.at("r_squared").get<double>();
    rep.mean_short = j.at("mean_short").get<double>();
    if (j.count("note")) rep.note = j.at("note").get<std::string>();
    if (j.count("ff3")) {
        FF3Block f;
        const auto& jf = j.at("ff3");
        f.alpha_pct = jf.at("alpha_pct").get<double>();
        f.beta = jf.at("beta").get<double>();
        f.smb_loading = jf.at("smb_loading").get<double>();
        f.hml_loading = jf.at("hml_loading").get<double>();
        f.r_squared = jf.at("r_squared").get<double>();
        rep.ff3 = f;
    }
    return rep;
}

// JSON report of all strategies: sorted keys, fixed schema version.
inline void write_report_json(const std::map<std::string, BacktestReport>& reports,
                              const std::string& file) {
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["strategies"] = nlohmann::json::object();
    for (const auto& [name, rep] : reports) j["strategies"][name] = report_to_json(rep);
    auto out = open_out(file);
    out << j.dump(2) << "\n";
    if (!out) throw InputError("write failed on " + file);
}

// Long-form wealth curves: date,strategy,value, strategies in sorted order.
inline void write_wealth_curves(const std::vector<std::string>& dates,
                                const std::map<std::string, Vec>& wealth,
                                const std::string& file) {
    for (const auto& [name, z] : wealth)
        if (z.size() != static_cast<Eigen::Index>(dates.size()))
            throw InputError("write_wealth_curves: " + name + " misaligned with dates");
    auto out = open_out(file);
    out << "date,strategy,value\n";
    for (const auto& [name, z] : wealth)
        for (std::size_t t = 0; t < dates.size(); ++t)
            out << dates[t] << "," << name << "," << format_g17(z[static_cast<int>(t)]) << "\n";
    if (!out) throw InputError("write failed on " + file);
}

inline void write_decomposition_csv(const MasterDecomposition& dec, const std::string& file) {
    auto out = open_out(file);
    out << "t,lhs,log_s_change,stoch_integral,drift_market,drift_qv,drift_cross,residual\n";
    for (Eigen::Index t = 0; t < dec.times.size(); ++t) {
        out << format_g17(dec.times[t]) << "," << format_g17(dec.lhs[t]) << ","
            << format_g17(dec.log_s_change[t]) << "," << format_g17(dec.stoch_integral[t]) << ","
            << format_g17(dec.drift_market[t]) << "," << format_g17(dec.drift_qv[t]) << ","
            << format_g17(dec.drift_cross[t]) << "," << format_g17(dec.residual[t]) << "\n";
    }
    if (!out) throw InputError("write failed on " + file);
}

}  // namespace sptlab
