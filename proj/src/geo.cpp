#include "mobiscope/geo.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "mobiscope/errors.hpp"

namespace mobiscope::geo {

double euclid(PlanarPoint a, PlanarPoint b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

PlanarPoint midpoint(PlanarPoint a, PlanarPoint b) {
  return {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
}

double truncate_to_km(double coord) {
  if (!std::isfinite(coord)) {
    throw Error::data("invalid coordinate: not finite");
  }
  if (coord < 0.0) {
    throw Error::data("invalid coordinate: negative (" + std::to_string(coord) + ")");
  }
  return std::trunc(coord / 1000.0) * 1000.0 + 500.0;
}

KmCell KmCell::of(PlanarPoint p) {
  return {truncate_to_km(p.x), truncate_to_km(p.y)};
}

// Civil date <-> day count conversions (proleptic Gregorian).
int64_t CivilDate::to_days() const {
  int y = year;
  const unsigned m = static_cast<unsigned>(month);
  const unsigned d = static_cast<unsigned>(day);
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

CivilDate CivilDate::from_days(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

namespace {

int parse_int_field(std::string_view s, size_t pos, size_t len, std::string_view what) {
  int v = 0;
  if (pos + len > s.size()) {
    throw Error::data("malformed " + std::string(what) + ": '" + std::string(s) + "'");
  }
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  if (ec != std::errc() || p != s.data() + pos + len) {
    throw Error::data("malformed " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

bool valid_ymd(int y, int m, int d) {
  if (m < 1 || m > 12 || d < 1) return false;
  static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int dm = mdays[m - 1];
  if (m == 2 && (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0))) dm = 29;
  return d <= dm;
}

}  // namespace

CivilDate CivilDate::parse(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw Error::data("malformed date: '" + std::string(s) + "'");
  }
  const int y = parse_int_field(s, 0, 4, "date");
  const int m = parse_int_field(s, 5, 2, "date");
  const int d = parse_int_field(s, 8, 2, "date");
  if (!valid_ymd(y, m, d)) {
    throw Error::data("invalid calendar date: '" + std::string(s) + "'");
  }
  return {y, m, d};
}

std::string CivilDate::str() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

Timestamp Timestamp::parse(std::string_view s) {
  if (s.size() != 16 || s[10] != 'T' || s[13] != ':') {
    throw Error::data("malformed timestamp: '" + std::string(s) + "'");
  }
  const CivilDate d = CivilDate::parse(s.substr(0, 10));
  const int hh = parse_int_field(s, 11, 2, "timestamp");
  const int mm = parse_int_field(s, 14, 2, "timestamp");
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) {
    throw Error::data("invalid time of day: '" + std::string(s) + "'");
  }
  return {d.to_days() * 1440 + hh * 60 + mm};
}

Timestamp Timestamp::at(CivilDate d, int minute_of_day) {
  return {d.to_days() * 1440 + minute_of_day};
}

std::string Timestamp::str() const {
  char buf[64];
  const CivilDate d = date();
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d", d.year, d.month, d.day, hour(), minute());
  return buf;
}

HourBucket to_hour_bucket(Timestamp t, bool strict_granularity) {
  if (strict_granularity && t.minute() % 5 != 0) {
    throw Error::data("timestamp " + t.str() + " is not on the 5-minute grid");
  }
  return {t.date(), t.hour()};
}

}  // namespace mobiscope::geo
