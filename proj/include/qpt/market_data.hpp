/// Price ingestion and moment estimation: CSV price loading, calendar
/// quarters, simple quarterly returns, and sample mean/covariance of the
/// per-asset return series.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace qpt {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingAssetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- calendar ----------------------------------------------------------------

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;
  auto operator<=>(const Date&) const = default;
};

inline bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int year, int month) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

/// Parses strict ISO-8601 YYYY-MM-DD.
inline Date parse_date(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw FormatError("bad date '" + text + "' (expected YYYY-MM-DD)");
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(text[i])))
      throw FormatError("bad date '" + text + "' (expected YYYY-MM-DD)");
  Date d{std::stoi(text.substr(0, 4)), std::stoi(text.substr(5, 2)),
         std::stoi(text.substr(8, 2))};
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month))
    throw FormatError("bad date '" + text + "' (out-of-range field)");
  return d;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

/// 1-based calendar quarter containing the date.
inline int quarter_of(const Date& d) { return (d.month - 1) / 3 + 1; }

inline std::string quarter_label(const Date& d) {
  return std::to_string(d.year) + "Q" + std::to_string(quarter_of(d));
}

/// Last day of the quarter containing the date (Mar 31 / Jun 30 / Sep 30 / Dec 31).
inline Date quarter_end(const Date& d) {
  const int q = quarter_of(d);
  const int month = q * 3;
  return Date{d.year, month, days_in_month(d.year, month)};
}

inline Date next_quarter_end(const Date& d) {
  Date e = quarter_end(d);
  if (e.month == 12) return quarter_end(Date{e.year + 1, 1, 1});
  return quarter_end(Date{e.year, e.month + 1, 1});
}

/// `count` consecutive quarter-end dates starting with the quarter containing
/// `first`.
inline std::vector<Date> quarter_end_dates(const Date& first, int count) {
  std::vector<Date> out;
  out.reserve(static_cast<std::size_t>(count));
  Date d = quarter_end(first);
  for (int i = 0; i < count; ++i) {
    out.push_back(d);
    d = next_quarter_end(d);
  }
  return out;
}

struct QuarterWindow {
  Date start_date;
  Date end_date;
  std::string label;  // quarter containing end_date, e.g. "2015Q3"
};

/// Builds the contiguous windows between consecutive boundary dates:
/// `boundaries` of length T+1 yields T windows.
inline std::vector<QuarterWindow> quarter_windows(const std::vector<Date>& boundaries) {
  if (boundaries.size() < 2)
    throw std::invalid_argument("quarter_windows: need at least two boundary dates");
  std::vector<QuarterWindow> out;
  out.reserve(boundaries.size() - 1);
  for (std::size_t t = 1; t < boundaries.size(); ++t) {
    if (!(boundaries[t - 1] < boundaries[t]))
      throw std::invalid_argument("quarter_windows: boundaries not strictly increasing");
    out.push_back({boundaries[t - 1], boundaries[t], quarter_label(boundaries[t])});
  }
  return out;
}

// --- price series --------------------------------------------------------------

struct PriceSeries {
  std::string ticker;
  std::vector<std::pair<Date, double>> observations;  // strictly increasing dates
};

struct LoadResult {
  std::vector<PriceSeries> series;      // one per requested ticker, same order
  std::size_t dropped_unrequested = 0;  // rows for tickers outside the universe
  std::size_t dropped_unaligned = 0;    // rows outside the common date set
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Loads `date,ticker,adj_close` CSV rows (any order, sorted internally) and
/// aligns all requested tickers to the intersection of their dates.
inline LoadResult load_prices(const std::string& path,
                              const std::vector<std::string>& universe) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open price file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  {
    std::string header = detail::trim(line);
    if (header != "date,ticker,adj_close")
      throw FormatError(path + ": expected header 'date,ticker,adj_close', got '" +
                        header + "'");
  }

  const std::set<std::string> wanted(universe.begin(), universe.end());
  std::map<std::string, std::map<Date, double>> by_ticker;
  std::size_t dropped_unrequested = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = detail::trim(line);
    if (row.empty()) continue;
    std::istringstream fields(row);
    std::string date_text, ticker, price_text;
    if (!std::getline(fields, date_text, ',') || !std::getline(fields, ticker, ',') ||
        !std::getline(fields, price_text))
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    ticker = detail::trim(ticker);
    if (!wanted.count(ticker)) {
      ++dropped_unrequested;
      continue;
    }
    const Date date = parse_date(detail::trim(date_text));
    double price = 0.0;
    try {
      std::size_t used = 0;
      price = std::stod(detail::trim(price_text), &used);
      if (used != detail::trim(price_text).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad price '" +
                        price_text + "'");
    }
    if (!(price > 0.0))
      throw FormatError(path + ":" + std::to_string(line_no) + ": non-positive price");
    auto [it, inserted] = by_ticker[ticker].emplace(date, price);
    if (!inserted)
      throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate date " +
                        format_date(date) + " for ticker " + ticker);
  }

  std::string missing;
  for (const auto& t : universe)
    if (!by_ticker.count(t) || by_ticker[t].empty()) missing += (missing.empty() ? "" : ", ") + t;
  if (!missing.empty())
    throw MissingAssetError(path + ": no rows for requested ticker(s): " + missing);

  // Intersection of available dates across the universe.
  std::set<Date> common;
  bool first = true;
  for (const auto& t : universe) {
    std::set<Date> dates;
    for (const auto& [d, p] : by_ticker[t]) dates.insert(d);
    if (first) {
      common = std::move(dates);
      first = false;
    } else {
      std::set<Date> kept;
      std::set_intersection(common.begin(), common.end(), dates.begin(), dates.end(),
                            std::inserter(kept, kept.begin()));
      common = std::move(kept);
    }
  }

  LoadResult result;
  result.dropped_unrequested = dropped_unrequested;
  for (const auto& t : universe) {
    PriceSeries s;
    s.ticker = t;
    for (const auto& [d, p] : by_ticker[t]) {
      if (common.count(d))
        s.observations.emplace_back(d, p);
      else
        ++result.dropped_unaligned;
    }
    result.series.push_back(std::move(s));
  }
  return result;
}

/// Last observed price at or before `boundary`; throws when the series does
/// not reach back that far.
inline double price_asof(const PriceSeries& series, const Date& boundary) {
  const auto& obs = series.observations;
  auto it = std::upper_bound(
      obs.begin(), obs.end(), boundary,
      [](const Date& d, const std::pair<Date, double>& o) { return d < o.first; });
  if (it == obs.begin())
    throw CoverageError("series " + series.ticker + " has no price at or before " +
                        format_date(boundary));
  return std::prev(it)->second;
}

/// Per-window simple return (P_end - P_start)/P_start, boundary prices taken
/// as the last available observation at or before each window edge.
inline std::vector<double> quarterly_returns(const PriceSeries& series,
                                             const std::vector<QuarterWindow>& windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    const double p0 = price_asof(series, w.start_date);
    const double p1 = price_asof(series, w.end_date);
    out.push_back((p1 - p0) / p0);
  }
  return out;
}

// --- moments -------------------------------------------------------------------

struct MomentEstimates {
  std::vector<std::string> tickers;
  Eigen::VectorXd expected_returns;  // per-quarter simple-return means
  Eigen::MatrixXd covariance;        // sample covariance, 1/(W-1)

  std::size_t size() const { return tickers.size(); }
};

/// Sample mean and unbiased (1/(W-1)) covariance of an n-asset return panel;
/// `returns[i]` is asset i's series over the same W quarters.
inline MomentEstimates estimate_moments(const std::vector<std::string>& tickers,
                                        const std::vector<std::vector<double>>& returns) {
  const std::size_t n = returns.size();
  if (n == 0 || tickers.size() != n)
    throw std::invalid_argument("estimate_moments: ticker/series count mismatch");
  const std::size_t w = returns[0].size();
  for (const auto& r : returns)
    if (r.size() != w)
      throw std::invalid_argument("estimate_moments: unequal series lengths");
  if (w < 2)
    throw InsufficientDataError("estimate_moments: need at least 2 observations, got " +
                                std::to_string(w));

  MomentEstimates m;
  m.tickers = tickers;
  m.expected_returns.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double v : returns[i]) sum += v;
    m.expected_returns[static_cast<Eigen::Index>(i)] = sum / static_cast<double>(w);
  }
  m.covariance.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < w; ++t)
        acc += (returns[i][t] - m.expected_returns[static_cast<Eigen::Index>(i)]) *
               (returns[j][t] - m.expected_returns[static_cast<Eigen::Index>(j)]);
      const double cov = acc / static_cast<double>(w - 1);
      m.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov;
      m.covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = cov;
    }
  return m;
}

/// n x T panel of quarterly returns, one row per series.
inline std::vector<std::vector<double>> returns_panel(
    const std::vector<PriceSeries>& series, const std::vector<QuarterWindow>& windows) {
  std::vector<std::vector<double>> panel;
  panel.reserve(series.size());
  for (const auto& s : series) panel.push_back(quarterly_returns(s, windows));
  return panel;
}

inline nlohmann::json moments_to_json(const MomentEstimates& m) {
  nlohmann::json j;
  j["tickers"] = m.tickers;
  j["expected_returns"] = std::vector<double>(
      m.expected_returns.data(), m.expected_returns.data() + m.expected_returns.size());
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.covariance.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.covariance.cols(); ++k) row.push_back(m.covariance(i, k));
    cov.push_back(std::move(row));
  }
  j["covariance"] = std::move(cov);
  return j;
}

}  // namespace qpt
