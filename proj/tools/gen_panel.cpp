// Generates the bundled synthetic panel: daily prices and factors with
// quarterly share and ROA reports, all from one fixed seed so the committed
// files can be reproduced byte for byte.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sptlab/rng.hpp"

namespace {

using sptlab::NoiseStream;

std::string iso(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::vector<std::string> business_days(std::chrono::sys_days start, int count) {
    std::vector<std::string> days;
    auto d = start;
    while (static_cast<int>(days.size()) < count) {
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) days.push_back(iso(d));
        d += std::chrono::days{1};
    }
    return days;
}

std::string num(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string out = argc > 1 ? argv[1] : "data/synthetic_panel";
    std::filesystem::create_directories(out);

    constexpr int kTickers = 8;
    constexpr int kDays = 756;          // three trading years
    constexpr int kQuarter = 63;        // report cadence in business days
    constexpr std::uint64_t kSeed = 20160104;

    using namespace std::chrono;
    const auto dates = business_days(sys_days{2016y / 1 / 4}, kDays);

    std::vector<std::string> tickers;
    for (int i = 0; i < kTickers; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "T%02d", i + 1);
        tickers.push_back(buf);
    }

    NoiseStream stream(NoiseStream::derive_key(kSeed, sptlab::kAuxNoiseTag, 0));
    std::uint64_t ctr = 0;

    // Per-ticker levels: price scale, daily volatility, drift, share count
    // (millions), profitability base.
    std::vector<double> px(kTickers), vol(kTickers), drift(kTickers), shares(kTickers),
        roa(kTickers);
    for (int i = 0; i < kTickers; ++i) {
        px[i] = 20.0 + 160.0 * stream.uniform(ctr++);
        vol[i] = 0.010 + 0.015 * stream.uniform(ctr++);
        drift[i] = 1e-4 * (2.0 * stream.uniform(ctr++) - 0.5);
        shares[i] = 50.0 + 450.0 * stream.uniform(ctr++);
        roa[i] = 0.004 + 0.031 * stream.uniform(ctr++);
    }

    std::ofstream fp(out + "/prices.csv"), fs(out + "/shares.csv"), fr(out + "/roa.csv"),
        ff(out + "/factors.csv");
    if (!fp || !fs || !fr || !ff) {
        std::cerr << "cannot write into " << out << "\n";
        return 2;
    }
    fp << "date,ticker,value\n";
    fs << "date,ticker,value\n";
    fr << "date,ticker,value\n";
    ff << "date,mkt_rf,smb,hml,rf\n";

    for (int t = 0; t < kDays; ++t) {
        const double gm = stream.gaussian(ctr++);  // common market shock
        for (int i = 0; i < kTickers; ++i) {
            if (t > 0) {
                const double gi = stream.gaussian(ctr++);
                px[i] *= std::exp(drift[i] + vol[i] * (0.6 * gm + 0.8 * gi));
            }
            fp << dates[t] << "," << tickers[i] << "," << num(px[i], 6) << "\n";
            if (t % kQuarter == 0) {
                if (t > 0) {
                    shares[i] *= 1.0 + 0.01 * (2.0 * stream.uniform(ctr++) - 1.0);
                    roa[i] += 0.002 * stream.gaussian(ctr++);
                    roa[i] = std::min(0.044, std::max(0.001, roa[i]));
                }
                fs << dates[t] << "," << tickers[i] << "," << num(shares[i], 4) << "\n";
                fr << dates[t] << "," << tickers[i] << "," << num(roa[i], 6) << "\n";
            }
        }
        const double mkt = 0.0004 + 0.008 * (0.9 * gm + 0.45 * stream.gaussian(ctr++));
        ff << dates[t] << "," << num(mkt, 8) << "," << num(0.004 * stream.gaussian(ctr++), 8)
           << "," << num(0.004 * stream.gaussian(ctr++), 8) << "," << num(0.00012, 8) << "\n";
    }
    std::cout << "wrote " << kTickers << " tickers x " << kDays << " days into " << out << "\n";
    return 0;
}
