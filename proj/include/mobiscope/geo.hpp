#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace mobiscope::geo {

// All coordinates are meters in one projected planar CRS, so Euclidean
// distance is valid. Negative coordinates are rejected at ingestion.
struct PlanarPoint {
  double x{};
  double y{};
  bool operator==(const PlanarPoint&) const = default;
};

double euclid(PlanarPoint a, PlanarPoint b);
PlanarPoint midpoint(PlanarPoint a, PlanarPoint b);

// trunc(coord/1000)*1000 + 500: relocates a coordinate to the midpoint of
// its 1 km interval. Requires coord finite and >= 0.
double truncate_to_km(double coord);

// A 1 km grid cell, identified by its midpoint (cx % 1000 == 500, same for cy).
struct KmCell {
  double cx{};
  double cy{};

  auto operator<=>(const KmCell&) const = default;

  static KmCell of(PlanarPoint p);
  PlanarPoint center() const { return {cx, cy}; }

  // Integer km indices, usable as compact map keys.
  int64_t kx() const { return static_cast<int64_t>((cx - 500.0) / 1000.0); }
  int64_t ky() const { return static_cast<int64_t>((cy - 500.0) / 1000.0); }
};

struct CivilDate {
  int year{};
  int month{};
  int day{};

  auto operator<=>(const CivilDate&) const = default;

  int64_t to_days() const;  // days since 1970-01-01
  static CivilDate from_days(int64_t days);
  static CivilDate parse(std::string_view s);  // "YYYY-MM-DD"
  std::string str() const;
};

// Minutes since 1970-01-01 00:00 (civil time, no zone).
struct Timestamp {
  int64_t minutes{};

  auto operator<=>(const Timestamp&) const = default;

  CivilDate date() const { return CivilDate::from_days(floor_div(minutes, 1440)); }
  int minute_of_day() const { return static_cast<int>(minutes - floor_div(minutes, 1440) * 1440); }
  int hour() const { return minute_of_day() / 60; }
  int minute() const { return minute_of_day() % 60; }

  static Timestamp parse(std::string_view s);  // "YYYY-MM-DDTHH:MM"
  static Timestamp at(CivilDate d, int minute_of_day);
  std::string str() const;

  static int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b;
    return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
  }
};

struct HourBucket {
  CivilDate date;
  int hour{};

  auto operator<=>(const HourBucket&) const = default;
};

// Events arrive at 5-minute granularity; a minute that is not a multiple of
// five is a granularity error unless strict is disabled.
HourBucket to_hour_bucket(Timestamp t, bool strict_granularity = true);

}  // namespace mobiscope::geo
