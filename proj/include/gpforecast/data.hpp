#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpforecast/errors.hpp"
#include "gpforecast/kernels.hpp"

namespace gpforecast {

// One row of the input series, at weekly or monthly resolution.
struct RawRecord {
  std::string period;  // YYYY-MM or YYYY-Www
  long long incidence = 0;
  double rainfall_mm = 0.0;
  double humidity_pct = 0.0;
  double temperature_c = 0.0;
};

enum class Resolution { kMonthly, kWeekly };

struct MonthKey {
  int year = 0;
  int month = 0;  // 1..12

  int serial() const { return year * 12 + (month - 1); }
  friend auto operator<=>(const MonthKey&, const MonthKey&) = default;
};

namespace detail {

// --- Civil-date helpers (proleptic Gregorian, days since 1970-01-01) ---

inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

struct CivilDate {
  int year;
  int month;
  int day;
};

inline CivilDate civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m),
          static_cast<int>(d)};
}

// ISO weekday, Monday = 1 .. Sunday = 7.
inline int iso_weekday(long days) {
  // 1970-01-01 was a Thursday.
  long w = (days + 3) % 7;
  if (w < 0) w += 7;
  return static_cast<int>(w) + 1;
}

// Monday of ISO week 1: the week containing January 4th.
inline long iso_week1_monday(int year) {
  const long jan4 = days_from_civil(year, 1, 4);
  return jan4 - (iso_weekday(jan4) - 1);
}

inline int iso_weeks_in_year(int year) {
  return static_cast<int>((iso_week1_monday(year + 1) - iso_week1_monday(year)) / 7);
}

inline bool all_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

inline bool is_month_label(std::string_view s) {
  return s.size() == 7 && s[4] == '-' && detail::all_digits(s.substr(0, 4)) &&
         detail::all_digits(s.substr(5, 2));
}

inline bool is_week_label(std::string_view s) {
  return s.size() == 8 && s[4] == '-' && s[5] == 'W' &&
         detail::all_digits(s.substr(0, 4)) && detail::all_digits(s.substr(6, 2));
}

inline MonthKey parse_month_label(std::string_view s, long line = 0) {
  if (!is_month_label(s)) {
    throw ParseError("expected YYYY-MM period, got '" + std::string(s) + "'",
                     line);
  }
  const int year = std::stoi(std::string(s.substr(0, 4)));
  const int month = std::stoi(std::string(s.substr(5, 2)));
  if (month < 1 || month > 12) {
    throw ParseError("month out of range in '" + std::string(s) + "'", line);
  }
  return {year, month};
}

struct WeekKey {
  int year = 0;
  int week = 0;  // ISO week 1..52/53
};

inline WeekKey parse_week_label(std::string_view s, long line = 0) {
  if (!is_week_label(s)) {
    throw ParseError("expected YYYY-Www period, got '" + std::string(s) + "'",
                     line);
  }
  const int year = std::stoi(std::string(s.substr(0, 4)));
  const int week = std::stoi(std::string(s.substr(6, 2)));
  if (week < 1 || week > detail::iso_weeks_in_year(year)) {
    throw ParseError("ISO week out of range in '" + std::string(s) + "'", line);
  }
  return {year, week};
}

inline std::string month_label(MonthKey key) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", key.year, key.month);
  return buf;
}

inline MonthKey month_from_serial(int serial) {
  int year = serial / 12;
  int month = serial % 12;
  if (month < 0) {
    month += 12;
    --year;
  }
  return {year, month + 1};
}

inline constexpr std::string_view kCsvHeader =
    "period,incidence,rainfall_mm,humidity_pct,temperature_c";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_covariate(const std::string& field, const char* name,
                              long line) {
  if (field.empty()) {
    throw ParseError(std::string("missing ") + name + " value", line);
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() ||
      !std::isfinite(v)) {
    throw ParseError(std::string("invalid ") + name + " value '" + field + "'",
                     line);
  }
  return v;
}

}  // namespace detail

inline Resolution detect_resolution(std::string_view period, long line = 0) {
  if (is_month_label(period)) return Resolution::kMonthly;
  if (is_week_label(period)) return Resolution::kWeekly;
  throw ParseError("period '" + std::string(period) +
                       "' is neither YYYY-MM nor YYYY-Www",
                   line);
}

// Parses the series CSV. The header must match kCsvHeader exactly; the period
// resolution is detected from the first data row and must be uniform.
inline std::vector<RawRecord> load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("empty file: missing header", 1);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto got = detail::split_csv_line(line);
    const auto want = detail::split_csv_line(std::string(kCsvHeader));
    for (const auto& col : want) {
      if (std::find(got.begin(), got.end(), col) == got.end()) {
        throw MissingColumn("missing column '" + col + "' in header");
      }
    }
    if (line != kCsvHeader) {
      throw ParseError("header must be exactly '" + std::string(kCsvHeader) +
                           "'",
                       1);
    }
  }

  std::vector<RawRecord> records;
  bool resolution_known = false;
  Resolution resolution = Resolution::kMonthly;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 5) {
      throw ParseError("expected 5 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }

    RawRecord rec;
    rec.period = fields[0];
    const Resolution row_res = detect_resolution(rec.period, line_no);
    if (!resolution_known) {
      resolution = row_res;
      resolution_known = true;
    } else if (row_res != resolution) {
      throw ParseError("mixed weekly and monthly periods in one file", line_no);
    }
    if (row_res == Resolution::kMonthly) {
      parse_month_label(rec.period, line_no);
    } else {
      parse_week_label(rec.period, line_no);
    }

    const std::string& inc = fields[1];
    if (inc.empty()) throw ParseError("missing incidence value", line_no);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(inc.data(), inc.data() + inc.size(), v);
    if (ec != std::errc{} || ptr != inc.data() + inc.size()) {
      throw ParseError("invalid incidence value '" + inc + "'", line_no);
    }
    if (v < 0) {
      throw RangeError("negative incidence at line " + std::to_string(line_no));
    }
    rec.incidence = v;

    rec.rainfall_mm = detail::parse_covariate(fields[2], "rainfall_mm", line_no);
    rec.humidity_pct =
        detail::parse_covariate(fields[3], "humidity_pct", line_no);
    rec.temperature_c =
        detail::parse_covariate(fields[4], "temperature_c", line_no);
    if (rec.humidity_pct < 0.0 || rec.humidity_pct > 100.0) {
      throw RangeError("humidity_pct out of [0,100] at line " +
                       std::to_string(line_no));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<RawRecord> load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_csv: cannot open " + path);
  return load_csv(in);
}

inline void write_csv(std::ostream& out, const std::vector<RawRecord>& records) {
  out << kCsvHeader << "\n";
  for (const RawRecord& r : records) {
    out << r.period << ',' << r.incidence << ','
        << detail::format_double(r.rainfall_mm) << ','
        << detail::format_double(r.humidity_pct) << ','
        << detail::format_double(r.temperature_c) << "\n";
  }
}

inline void write_csv(const std::string& path,
                      const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_csv: cannot open " + path);
  write_csv(out, records);
}

// Aggregates a weekly series to calendar months. A week belongs to the month
// containing its Thursday (ISO-8601 majority rule); incidence and rainfall
// are summed, humidity and temperature averaged with each week weighted by
// the number of its days inside the assigned month.
inline std::vector<RawRecord> aggregate_monthly(
    const std::vector<RawRecord>& weekly) {
  struct Bucket {
    long long incidence = 0;
    double rainfall = 0.0;
    double humidity_w = 0.0;
    double temperature_w = 0.0;
    double weight = 0.0;
  };
  std::map<int, Bucket> buckets;  // keyed by month serial

  for (const RawRecord& rec : weekly) {
    const WeekKey wk = parse_week_label(rec.period);
    const long monday = detail::iso_week1_monday(wk.year) + 7L * (wk.week - 1);
    const auto thursday = detail::civil_from_days(monday + 3);
    const MonthKey key{thursday.year, thursday.month};

    int days_in_month = 0;
    for (long d = monday; d < monday + 7; ++d) {
      const auto cd = detail::civil_from_days(d);
      if (cd.year == key.year && cd.month == key.month) ++days_in_month;
    }

    Bucket& b = buckets[key.serial()];
    b.incidence += rec.incidence;
    b.rainfall += rec.rainfall_mm;
    b.humidity_w += rec.humidity_pct * days_in_month;
    b.temperature_w += rec.temperature_c * days_in_month;
    b.weight += days_in_month;
  }

  std::vector<RawRecord> monthly;
  if (buckets.empty()) return monthly;
  const int first = buckets.begin()->first;
  const int last = buckets.rbegin()->first;
  for (int serial = first; serial <= last; ++serial) {
    auto it = buckets.find(serial);
    if (it == buckets.end()) {
      throw GapError("no weeks contribute to " +
                     month_label(month_from_serial(serial)));
    }
    const Bucket& b = it->second;
    monthly.push_back(RawRecord{month_label(month_from_serial(serial)),
                                b.incidence, b.rainfall,
                                b.humidity_w / b.weight,
                                b.temperature_w / b.weight});
  }
  return monthly;
}

// Per-covariate standardization statistics, order: rainfall, humidity,
// temperature. Zero-spread columns store unit scale so z-scores stay finite.
struct CovariateStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stdev{};
};

inline CovariateStats compute_covariate_stats(
    const std::vector<RawRecord>& records, std::size_t n_train) {
  CovariateStats stats;
  if (n_train == 0) return stats;
  auto column = [&](const RawRecord& r, std::size_t c) {
    return c == 0 ? r.rainfall_mm : (c == 1 ? r.humidity_pct : r.temperature_c);
  };
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) sum += column(records[i], c);
    const double mean = sum / static_cast<double>(n_train);
    double ss = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) {
      const double d = column(records[i], c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n_train));
    stats.mean[c] = mean;
    stats.stdev[c] = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

// Time-ordered modelling view of a monthly series: running month index t,
// standardized covariates, and the original counts.
struct Dataset {
  std::vector<InputPoint> points;
  std::vector<long long> counts;
  std::vector<std::string> periods;
  CovariateStats covariate_stats;

  std::size_t size() const { return points.size(); }

  Eigen::VectorXd counts_vector() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) {
      v[static_cast<Eigen::Index>(i)] = static_cast<double>(counts[i]);
    }
    return v;
  }
};

inline InputPoint standardize_point(double t, const RawRecord& rec,
                                    const CovariateStats& stats) {
  return InputPoint{t, (rec.rainfall_mm - stats.mean[0]) / stats.stdev[0],
                    (rec.humidity_pct - stats.mean[1]) / stats.stdev[1],
                    (rec.temperature_c - stats.mean[2]) / stats.stdev[2]};
}

// Splits a contiguous monthly series at train_end (inclusive). The running
// index t spans 1..N over the full series, and the covariate statistics are
// computed from training rows only and applied to both splits.
inline std::pair<Dataset, Dataset> build_dataset(
    const std::vector<RawRecord>& monthly, const std::string& train_end) {
  if (monthly.empty()) throw EmptySplit("build_dataset: no rows");
  const MonthKey end_key = parse_month_label(train_end);

  std::vector<MonthKey> keys;
  keys.reserve(monthly.size());
  for (const RawRecord& rec : monthly) keys.push_back(parse_month_label(rec.period));
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (keys[i].serial() != keys[i - 1].serial() + 1) {
      throw Error("build_dataset: months not contiguous at " +
                  monthly[i].period);
    }
  }

  std::size_t n_train = 0;
  while (n_train < keys.size() && keys[n_train].serial() <= end_key.serial()) {
    ++n_train;
  }
  if (n_train == 0) {
    throw EmptySplit("build_dataset: train_end precedes the data range");
  }
  if (n_train == keys.size()) {
    throw EmptySplit("build_dataset: train_end leaves an empty test set");
  }

  const CovariateStats stats = compute_covariate_stats(monthly, n_train);
  Dataset train, test;
  train.covariate_stats = stats;
  test.covariate_stats = stats;
  for (std::size_t i = 0; i < monthly.size(); ++i) {
    const double t = static_cast<double>(i + 1);
    Dataset& side = i < n_train ? train : test;
    side.points.push_back(standardize_point(t, monthly[i], stats));
    side.counts.push_back(monthly[i].incidence);
    side.periods.push_back(monthly[i].period);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace gpforecast
