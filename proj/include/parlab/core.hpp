#pragma once

// Shared primitives: error type, seeded randomness, calendar dates.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace parlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Sub-seed for a labelled stream. All randomness in a run descends from one
/// root seed through this function, so adding a new consumer never shifts
/// the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a64(label)) + index);
}

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) with 53 random bits. Portable across standard
/// libraries, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Unbiased integer in [0, n).
inline std::uint64_t below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Fisher-Yates with `below`, so permutations are identical everywhere.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = below(rng, i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

/// Calendar month as a linear index: year * 12 + (month - 1).
struct YearMonth {
  int index = 0;

  static YearMonth of(int year, int month) { return {year * 12 + month - 1}; }
  int year() const { return index >= 0 ? index / 12 : (index - 11) / 12; }
  int month() const { return index - year() * 12 + 1; }
  YearMonth operator+(int months) const { return {index + months}; }
  int operator-(YearMonth other) const { return index - other.index; }
  auto operator<=>(const YearMonth&) const = default;

  /// Parses "YYYY-MM".
  static YearMonth parse(std::string_view text) {
    if (text.size() != 7 || text[4] != '-') {
      throw Error("invalid month '" + std::string(text) + "', expected YYYY-MM");
    }
    int year = 0, month = 0;
    for (int i = 0; i < 4; ++i) {
      if (text[i] < '0' || text[i] > '9') {
        throw Error("invalid month '" + std::string(text) + "'");
      }
      year = year * 10 + (text[i] - '0');
    }
    for (int i = 5; i < 7; ++i) {
      if (text[i] < '0' || text[i] > '9') {
        throw Error("invalid month '" + std::string(text) + "'");
      }
      month = month * 10 + (text[i] - '0');
    }
    if (month < 1 || month > 12) {
      throw Error("invalid month '" + std::string(text) + "'");
    }
    return of(year, month);
  }

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
    return buf;
  }
};

/// Day-precision calendar date.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  YearMonth year_month() const { return YearMonth::of(year, month); }

  std::chrono::year_month_day ymd() const {
    return std::chrono::year{year} / std::chrono::month{static_cast<unsigned>(month)} /
           std::chrono::day{static_cast<unsigned>(day)};
  }

  bool valid() const { return ymd().ok(); }

  static Date from(std::chrono::year_month_day ymd) {
    return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
            static_cast<int>(static_cast<unsigned>(ymd.day()))};
  }

  /// Parses ISO "YYYY-MM-DD"; returns false on any syntax or range error.
  static bool try_parse(std::string_view text, Date& out) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
    auto digits = [&](std::size_t from, std::size_t len, int& value) {
      value = 0;
      for (std::size_t i = from; i < from + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
        value = value * 10 + (text[i] - '0');
      }
      return true;
    };
    Date d;
    if (!digits(0, 4, d.year) || !digits(5, 2, d.month) || !digits(8, 2, d.day)) return false;
    if (d.month < 1 || d.month > 12 || d.day < 1 || !d.valid()) return false;
    out = d;
    return true;
  }

  static Date parse(std::string_view text) {
    Date d;
    if (!try_parse(text, d)) throw Error("invalid date '" + std::string(text) + "'");
    return d;
  }

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

inline Date first_day(YearMonth ym) { return {ym.year(), ym.month(), 1}; }

inline Date last_day(YearMonth ym) {
  using namespace std::chrono;
  const year_month_day_last last{year{ym.year()} / month{static_cast<unsigned>(ym.month())} / std::chrono::last};
  return Date::from(year_month_day{last});
}

inline bool is_working_day(const Date& d) {
  const std::chrono::weekday wd{std::chrono::sys_days{d.ymd()}};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

inline Date add_days(const Date& d, int days) {
  return Date::from(std::chrono::year_month_day{std::chrono::sys_days{d.ymd()} + std::chrono::days{days}});
}

/// The working day before the last working day of the month (Mon-Fri week,
/// no holiday calendar). This is when monthly interventions go out.
inline Date intervention_date(YearMonth ym) {
  Date d = last_day(ym);
  while (!is_working_day(d)) d = add_days(d, -1);
  do {
    d = add_days(d, -1);
  } while (!is_working_day(d));
  return d;
}

}  // namespace parlab
