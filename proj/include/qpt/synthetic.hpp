/// Bundled synthetic dataset: a seeded geometric random walk with a common
/// market factor, producing quarterly prices for a 29-ticker blue-chip
/// universe. Used everywhere a realistic covariance/return structure is
/// needed without redistributing vendor data.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpt/market_data.hpp"
#include "qpt/rng.hpp"

namespace qpt::synthetic {

inline const std::vector<std::string>& default_universe() {
  static const std::vector<std::string> tickers = {
      "MMM", "AXP", "AMGN", "AAPL", "BA",  "CAT", "CVX", "CSCO", "KO",  "GS",
      "HD",  "HON", "IBM",  "INTC", "JNJ", "JPM", "MCD", "MRK",  "MSFT", "NKE",
      "PG",  "CRM", "TRV",  "UNH",  "V",   "WBA", "WMT", "DIS",  "VZ"};
  return tickers;
}

/// Deterministic standard normal via Box-Muller (std::normal_distribution is
/// implementation-defined, which would unfix the fixture).
inline double standard_normal(std::mt19937_64& gen) {
  const double u1 = std::max(rng::uniform01(gen), 1e-300);
  const double u2 = rng::uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct SyntheticSpec {
  std::uint64_t seed = 20141231;
  Date first_boundary{2014, 12, 31};
  int num_boundaries = 41;  // 41 quarter-ends => 40 quarterly returns
};

/// One-factor return model: r_{i,t} = mu_i + beta_i f_t + sigma_i eps_{i,t},
/// compounded into prices at consecutive quarter-end dates.
inline std::vector<PriceSeries> generate_prices(const SyntheticSpec& spec = {}) {
  if (spec.num_boundaries < 2)
    throw std::invalid_argument("generate_prices: need at least 2 boundaries");
  const auto& tickers = default_universe();
  const std::size_t n = tickers.size();
  const auto boundaries = quarter_end_dates(spec.first_boundary, spec.num_boundaries);

  auto gen = rng::make_engine(spec.seed);
  std::vector<double> mu(n), beta(n), sigma(n), price(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = 0.004 + 0.030 * rng::uniform01(gen);     // quarterly drift 0.4%..3.4%
    beta[i] = 0.4 + 0.9 * rng::uniform01(gen);       // market loading
    sigma[i] = 0.020 + 0.055 * rng::uniform01(gen);  // idiosyncratic vol
    price[i] = 20.0 + 230.0 * rng::uniform01(gen);
  }

  std::vector<PriceSeries> series(n);
  for (std::size_t i = 0; i < n; ++i) {
    series[i].ticker = tickers[i];
    series[i].observations.emplace_back(boundaries[0], price[i]);
  }
  for (int t = 1; t < spec.num_boundaries; ++t) {
    const double factor = 0.040 * standard_normal(gen);
    for (std::size_t i = 0; i < n; ++i) {
      double r = mu[i] + beta[i] * factor + sigma[i] * standard_normal(gen);
      r = std::max(r, -0.95);  // keep prices positive
      price[i] *= 1.0 + r;
      series[i].observations.emplace_back(boundaries[static_cast<std::size_t>(t)],
                                          price[i]);
    }
  }
  return series;
}

/// Writes the `date,ticker,adj_close` CSV the loader consumes.
inline void write_prices_csv(const std::string& path,
                             const std::vector<PriceSeries>& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "date,ticker,adj_close\n";
  char buf[64];
  for (const auto& s : series)
    for (const auto& [date, p] : s.observations) {
      std::snprintf(buf, sizeof buf, "%.10g", p);
      out << format_date(date) << ',' << s.ticker << ',' << buf << '\n';
    }
}

}  // namespace qpt::synthetic
