#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sptlab/data_io.hpp"
#include "sptlab/market.hpp"

using namespace sptlab;
using Catch::Approx;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sptlab_io_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path file = dir / name;
    std::ofstream out(file);
    out << body;
    return file.string();
}

std::string slurp(const std::string& file) {
    std::ifstream in(file);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Five aligned days for two tickers with sparse share/ROA reports.
struct Fixture {
    std::string prices, shares, roa, factors;
};

Fixture standard_fixture(const fs::path& dir) {
    Fixture f;
    f.prices = write_file(dir, "prices.csv",
                          "date,ticker,value\n"
                          "2020-01-01,AAA,10\n2020-01-02,AAA,11\n2020-01-03,AAA,12\n"
                          "2020-01-04,AAA,11.5\n2020-01-05,AAA,13\n"
                          "2020-01-01,BBB,20\n2020-01-02,BBB,19\n2020-01-03,BBB,21\n"
                          "2020-01-04,BBB,22\n2020-01-05,BBB,20.5\n");
    f.shares = write_file(dir, "shares.csv",
                          "date,ticker,value\n"
                          "2019-12-31,AAA,100\n2020-01-03,AAA,110\n"
                          "2020-01-01,BBB,50\n");
    f.roa = write_file(dir, "roa.csv",
                       "date,ticker,value\n"
                       "2019-12-30,AAA,0.02\n"
                       "2020-01-01,BBB,0.01\n2020-01-04,BBB,0.015\n");
    f.factors = write_file(dir, "factors.csv",
                           "date,mkt_rf,smb,hml,rf\n"
                           "2020-01-01,0.001,0.0002,-0.0001,0.0001\n"
                           "2020-01-02,-0.002,0.0001,0.0003,0.0001\n"
                           "2020-01-03,0.0015,-0.0004,0.0002,0.0001\n"
                           "2020-01-04,0.0005,0.0001,0.0001,0.0001\n"
                           "2020-01-05,-0.001,0.0002,-0.0003,0.0001\n");
    return f;
}

}  // namespace

TEST_CASE("panel load aligns sources and carries sparse reports forward") {
    const auto dir = fresh_dir("load_basic");
    const auto f = standard_fixture(dir);
    const Panel p = load_panel(f.prices, f.shares, f.roa, f.factors);

    REQUIRE(p.tickers == std::vector<std::string>{"AAA", "BBB"});
    REQUIRE(p.dates.size() == 5);
    REQUIRE(p.dates.front() == "2020-01-01");
    REQUIRE(p.dates.back() == "2020-01-05");
    REQUIRE(p.horizon() == 4);

    REQUIRE(p.prices(0, 0) == 10.0);
    REQUIRE(p.prices(1, 4) == 20.5);

    // AAA shares switch from the 2019-12-31 report to the 2020-01-03 one on
    // its effective date, never before.
    const Vec aaa = p.shares.row(0);
    REQUIRE(aaa[0] == 100.0);
    REQUIRE(aaa[1] == 100.0);
    REQUIRE(aaa[2] == 110.0);
    REQUIRE(aaa[3] == 110.0);
    REQUIRE(aaa[4] == 110.0);
    REQUIRE((p.shares.row(1).array() == 50.0).all());

    // ROA carried forward and scaled by the default factor of 10.
    REQUIRE((p.roa.row(0).array() == 0.2).all());
    REQUIRE(p.roa(1, 2) == Approx(0.1).epsilon(1e-15));
    REQUIRE(p.roa(1, 3) == Approx(0.15).epsilon(1e-15));

    REQUIRE(p.caps()(0, 2) == Approx(12.0 * 110.0).epsilon(1e-15));
    REQUIRE(p.mkt_rf[1] == -0.002);
    REQUIRE(p.smb[2] == -0.0004);
    REQUIRE(p.hml[1] == 0.0003);
    REQUIRE((p.rf.array() == 0.0001).all());

    const Panel again = load_panel(f.prices, f.shares, f.roa, f.factors);
    REQUIRE(again.prices == p.prices);
    REQUIRE(again.shares == p.shares);
    REQUIRE(again.roa == p.roa);

    const Panel raw = load_panel(f.prices, f.shares, f.roa, f.factors, 1.0);
    REQUIRE((raw.roa.row(0).array() == 0.02).all());
}

TEST_CASE("panel date index is the intersection of all sources") {
    const auto dir = fresh_dir("load_join");
    auto f = standard_fixture(dir);
    // BBB misses the first day, the factor file misses the last.
    f.prices = write_file(dir, "prices2.csv",
                          "date,ticker,value\n"
                          "2020-01-01,AAA,10\n2020-01-02,AAA,11\n2020-01-03,AAA,12\n"
                          "2020-01-04,AAA,11.5\n2020-01-05,AAA,13\n"
                          "2020-01-02,BBB,19\n2020-01-03,BBB,21\n2020-01-04,BBB,22\n"
                          "2020-01-05,BBB,20.5\n");
    f.factors = write_file(dir, "factors2.csv",
                           "date,mkt_rf,smb,hml,rf\n"
                           "2020-01-01,0.001,0.0002,-0.0001,0.0001\n"
                           "2020-01-02,-0.002,0.0001,0.0003,0.0001\n"
                           "2020-01-03,0.0015,-0.0004,0.0002,0.0001\n"
                           "2020-01-04,0.0005,0.0001,0.0001,0.0001\n");
    const Panel p = load_panel(f.prices, f.shares, f.roa, f.factors);
    REQUIRE(p.dates == std::vector<std::string>{"2020-01-02", "2020-01-03", "2020-01-04"});
    REQUIRE(p.prices(1, 0) == 19.0);
}

TEST_CASE("forward fill never uses a report dated after the panel date") {
    const auto dir = fresh_dir("load_lookahead");
    const auto f = standard_fixture(dir);
    const Panel base = load_panel(f.prices, f.shares, f.roa, f.factors);

    // A report after the last panel date must leave everything untouched; a
    // mid-sample report must only affect dates at or after it.
    const auto shares_future = write_file(dir, "shares_future.csv",
                                          "date,ticker,value\n"
                                          "2019-12-31,AAA,100\n2020-01-03,AAA,110\n"
                                          "2020-01-06,AAA,999\n"
                                          "2020-01-01,BBB,50\n");
    const Panel future = load_panel(f.prices, shares_future, f.roa, f.factors);
    REQUIRE(future.shares == base.shares);

    const auto roa_mid = write_file(dir, "roa_mid.csv",
                                    "date,ticker,value\n"
                                    "2019-12-30,AAA,0.02\n2020-01-04,AAA,0.05\n"
                                    "2020-01-01,BBB,0.01\n2020-01-04,BBB,0.015\n");
    const Panel mid = load_panel(f.prices, f.shares, roa_mid, f.factors);
    REQUIRE(mid.roa.row(0).head(3) == base.roa.row(0).head(3));
    REQUIRE(mid.roa(0, 3) == Approx(0.5).epsilon(1e-15));
    REQUIRE(mid.roa(0, 4) == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("panel loader rejects broken inputs with specific errors") {
    const auto dir = fresh_dir("load_errors");
    const auto f = standard_fixture(dir);

    SECTION("disjoint date ranges leave an empty intersection") {
        const auto prices = write_file(dir, "pd.csv",
                                       "date,ticker,value\n"
                                       "2020-01-01,AAA,10\n2020-01-02,AAA,11\n"
                                       "2021-01-01,BBB,20\n2021-01-02,BBB,21\n");
        REQUIRE_THROWS_WITH(load_panel(prices, f.shares, f.roa, f.factors),
                            Catch::Matchers::ContainsSubstring("intersection"));
    }
    SECTION("a ticker with no report before the first panel date is named") {
        const auto shares = write_file(dir, "sl.csv",
                                       "date,ticker,value\n"
                                       "2019-12-31,AAA,100\n"
                                       "2020-01-03,BBB,50\n");
        REQUIRE_THROWS_WITH(load_panel(f.prices, shares, f.roa, f.factors),
                            Catch::Matchers::ContainsSubstring("BBB"));
    }
    SECTION("fewer than two tickers") {
        const auto prices = write_file(dir, "p1.csv",
                                       "date,ticker,value\n"
                                       "2020-01-01,AAA,10\n2020-01-02,AAA,11\n");
        REQUIRE_THROWS_AS(load_panel(prices, f.shares, f.roa, f.factors), InputError);
    }
    SECTION("non-positive price names the ticker") {
        const auto prices = write_file(dir, "pz.csv",
                                       "date,ticker,value\n"
                                       "2020-01-01,AAA,10\n2020-01-02,AAA,-1\n"
                                       "2020-01-01,BBB,20\n2020-01-02,BBB,19\n");
        REQUIRE_THROWS_WITH(load_panel(prices, f.shares, f.roa, f.factors),
                            Catch::Matchers::ContainsSubstring("AAA"));
    }
    SECTION("missing ticker in a companion file is named") {
        const auto shares = write_file(dir, "sm.csv",
                                       "date,ticker,value\n"
                                       "2019-12-31,AAA,100\n");
        REQUIRE_THROWS_WITH(load_panel(f.prices, shares, f.roa, f.factors),
                            Catch::Matchers::ContainsSubstring("BBB"));
    }
    SECTION("duplicate rows, bad headers, bad dates, bad numbers, missing files") {
        const auto dup = write_file(dir, "dup.csv",
                                    "date,ticker,value\n"
                                    "2020-01-01,AAA,10\n2020-01-01,AAA,10\n");
        REQUIRE_THROWS_AS(load_panel(dup, f.shares, f.roa, f.factors), InputError);
        const auto hdr = write_file(dir, "hdr.csv", "ticker,date,value\n2020-01-01,AAA,10\n");
        REQUIRE_THROWS_AS(load_panel(hdr, f.shares, f.roa, f.factors), InputError);
        const auto date = write_file(dir, "date.csv", "date,ticker,value\n01/02/2020,AAA,10\n");
        REQUIRE_THROWS_AS(load_panel(date, f.shares, f.roa, f.factors), InputError);
        const auto num = write_file(dir, "num.csv", "date,ticker,value\n2020-01-01,AAA,ten\n");
        REQUIRE_THROWS_AS(load_panel(num, f.shares, f.roa, f.factors), InputError);
        REQUIRE_THROWS_AS(load_panel((dir / "absent.csv").string(), f.shares, f.roa, f.factors),
                          InputError);
        const auto fhdr = write_file(dir, "fhdr.csv", "date,mkt,smb,hml,rf\n");
        REQUIRE_THROWS_AS(load_panel(f.prices, f.shares, f.roa, fhdr), InputError);
    }
}

TEST_CASE("market path csv round-trips bit-for-bit") {
    const auto dir = fresh_dir("path_csv");
    MarketSpec spec;
    spec.n = 3;
    spec.initial_prices = Vec::Constant(3, 1.0);
    spec.model = VolatilityStabilized{1.0};
    const auto grid = SimGrid::from_steps(25, 1e-3, 91);
    const auto paths = simulate_market(spec, grid, 1);
    const MarketPath& path = paths[0];

    const auto file = (dir / "path.csv").string();
    save_path_csv(path, file);
    const MarketPath back = load_path_csv(file);

    REQUIRE(back.times == path.times);
    REQUIRE(back.prices == path.prices);
    REQUIRE(back.master_seed == path.master_seed);
    REQUIRE(back.path_index == path.path_index);
    REQUIRE(back.clamp_events == path.clamp_events);

    const auto file2 = (dir / "path2.csv").string();
    save_path_csv(path, file2);
    REQUIRE(slurp(file) == slurp(file2));

    const auto bad = write_file(dir, "bad.csv", "t,X1,X2\n0,1\n1,2,3\n");
    REQUIRE_THROWS_AS(load_path_csv(bad), InputError);
}

TEST_CASE("backtest report json round-trips including undefined ratios") {
    BacktestReport rep;
    rep.ann_return = 0.123;
    rep.sharpe = std::numeric_limits<double>::quiet_NaN();
    rep.sharpe_defined = false;
    rep.info_ratio = 1.7;
    rep.info_ratio_defined = true;
    rep.terminal_value = 2.5;
    rep.ann_turnover = 14.2;
    rep.ann_alpha_pct = 3.1;
    rep.beta = 0.97;
    rep.r_squared = 0.88;
    rep.mean_short = 0.004;
    FF3Block f3;
    f3.alpha_pct = 2.2;
    f3.beta = 0.95;
    f3.smb_loading = -0.1;
    f3.hml_loading = 0.2;
    f3.r_squared = 0.91;
    rep.ff3 = f3;

    const BacktestReport back = report_from_json(report_to_json(rep));
    REQUIRE(back.ann_return == rep.ann_return);
    REQUIRE(std::isnan(back.sharpe));
    REQUIRE_FALSE(back.sharpe_defined);
    REQUIRE(back.info_ratio == rep.info_ratio);
    REQUIRE(back.terminal_value == rep.terminal_value);
    REQUIRE(back.ann_turnover == rep.ann_turnover);
    REQUIRE(back.ann_alpha_pct == rep.ann_alpha_pct);
    REQUIRE(back.beta == rep.beta);
    REQUIRE(back.r_squared == rep.r_squared);
    REQUIRE(back.mean_short == rep.mean_short);
    REQUIRE(back.ff3.has_value());
    REQUIRE(back.ff3->alpha_pct == f3.alpha_pct);
    REQUIRE(back.ff3->smb_loading == f3.smb_loading);

    const auto dir = fresh_dir("report_json");
    std::map<std::string, BacktestReport> reports{{"alpha", rep}};
    BacktestReport market = rep;
    market.ff3.reset();
    reports["market"] = market;
    const auto file = (dir / "report.json").string();
    const auto file2 = (dir / "report2.json").string();
    write_report_json(reports, file);
    write_report_json(reports, file2);
    const std::string body = slurp(file);
    REQUIRE(body == slurp(file2));
    REQUIRE(body.find("\"schema_version\"") != std::string::npos);
    REQUIRE(body.find("\"sharpe\": null") != std::string::npos);

    const auto parsed = nlohmann::json::parse(body);
    REQUIRE(parsed.at("schema_version").get<int>() == kReportSchemaVersion);
    REQUIRE_FALSE(parsed.at("strategies").at("market").count("ff3"));
}

TEST_CASE("wealth curve writer emits sorted long-form rows") {
    const auto dir = fresh_dir("wealth_csv");
    const std::vector<std::string> dates{"2020-01-01", "2020-01-02", "2020-01-03"};
    std::map<std::string, Vec> wealth;
    wealth["mkt"] = (Vec(3) << 1.0, 2.0, 4.0).finished();
    wealth["ewp"] = (Vec(3) << 1.0, 1.5, 2.25).finished();
    const auto file = (dir / "wealth.csv").string();
    write_wealth_curves(dates, wealth, file);
    REQUIRE(slurp(file) ==
            "date,strategy,value\n"
            "2020-01-01,ewp,1\n2020-01-02,ewp,1.5\n2020-01-03,ewp,2.25\n"
            "2020-01-01,mkt,1\n2020-01-02,mkt,2\n2020-01-03,mkt,4\n");

    wealth["bad"] = Vec::Ones(2);
    REQUIRE_THROWS_AS(write_wealth_curves(dates, wealth, file), InputError);
}

TEST_CASE("decomposition csv carries every term with full precision") {
    const auto dir = fresh_dir("dec_csv");
    MasterDecomposition dec;
    dec.times = (Vec(2) << 0.0, 0.5).finished();
    dec.lhs = (Vec(2) << 0.0, 0.012345678901234567).finished();
    dec.log_s_change = (Vec(2) << 0.0, 0.01).finished();
    dec.stoch_integral = (Vec(2) << 0.0, 0.001).finished();
    dec.drift_market = (Vec(2) << 0.0, 0.0013).finished();
    dec.drift_qv = (Vec(2) << 0.0, 0.0001).finished();
    dec.drift_cross = (Vec(2) << 0.0, -0.00005).finished();
    dec.residual = (Vec(2) << 0.0, 1e-9).finished();
    const auto file = (dir / "dec.csv").string();
    write_decomposition_csv(dec, file);
    const std::string body = slurp(file);
    REQUIRE(body.find("t,lhs,log_s_change,stoch_integral,drift_market,drift_qv,drift_cross,"
                      "residual\n") == 0);
    REQUIRE(body.find("0.012345678901234567") != std::string::npos);
    REQUIRE(std::count(body.begin(), body.end(), '\n') == 3);
}
