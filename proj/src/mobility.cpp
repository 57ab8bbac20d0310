#include "mobiscope/mobility.hpp"

#include <algorithm>
#include <cmath>

#include "mobiscope/errors.hpp"

namespace mobiscope::mobility {

std::vector<PositionEstimate> halfway_positions(const PhoneDay& day,
                                                const io::TowerRegistry& towers) {
  if (day.events.empty()) {
    throw Error::data("halfway_positions: empty phone day");
  }
  std::vector<PositionEstimate> estimates;
  uint32_t current_tower = day.events.front().tower;
  estimates.push_back({towers.site(current_tower).location, {day.events.front().ts_min}});
  for (size_t i = 1; i < day.events.size(); ++i) {
    const io::Event& e = day.events[i];
    if (e.tower == current_tower) {
      estimates.back().ticks.push_back(e.ts_min);
    } else {
      const geo::PlanarPoint next =
          geo::midpoint(estimates.back().point, towers.site(e.tower).location);
      estimates.push_back({next, {e.ts_min}});
      current_tower = e.tower;
    }
  }
  return estimates;
}

namespace {

// Minutes of [tick, tick+5) falling inside the night window of whichever
// day the tick lies on.
double in_window_minutes(int64_t tick, NightWindow w) {
  const int64_t day = geo::Timestamp::floor_div(tick, 1440);
  const int64_t mod = tick - day * 1440;
  const double lo = std::max<double>(static_cast<double>(mod), w.start_min);
  const double hi = std::min<double>(static_cast<double>(mod) + 5.0, w.end_exclusive());
  // a tick shortly before midnight can spill into the next day's window
  double overlap = std::max(0.0, hi - lo);
  if (mod + 5 > 1440) {
    const double spill = static_cast<double>(mod) + 5.0 - 1440.0;
    const double lo2 = std::max(0.0, static_cast<double>(w.start_min));
    overlap += std::max(0.0, std::min(spill, static_cast<double>(w.end_exclusive())) - lo2);
  }
  return overlap;
}

}  // namespace

std::optional<HomeLocation> infer_home_from_estimates(uint32_t phone,
                                                      std::span<const PositionEstimate> estimates,
                                                      NightWindow window) {
  double wx = 0.0, wy = 0.0, wsum = 0.0;
  for (const PositionEstimate& est : estimates) {
    double minutes = 0.0;
    for (int64_t tick : est.ticks) {
      minutes += in_window_minutes(tick, window);
    }
    if (minutes > 0.0) {
      wx += est.point.x * minutes;
      wy += est.point.y * minutes;
      wsum += minutes;
    }
  }
  if (wsum <= 0.0) return std::nullopt;
  const geo::PlanarPoint origin{wx / wsum, wy / wsum};
  return HomeLocation{phone, origin, geo::KmCell::of(origin)};
}

std::optional<HomeLocation> infer_home(const PhoneDay& day, const io::TowerRegistry& towers,
                                       NightWindow window) {
  const auto estimates = halfway_positions(day, towers);
  return infer_home_from_estimates(day.phone, estimates, window);
}

double max_distance_over_estimates(std::span<const PositionEstimate> estimates,
                                   geo::PlanarPoint origin) {
  double best = 0.0;
  for (const PositionEstimate& est : estimates) {
    best = std::max(best, geo::euclid(est.point, origin));
  }
  return best;
}

MaxDistanceRecord max_distance_from_home(const PhoneDay& day, const HomeLocation& home,
                                         const io::TowerRegistry& towers) {
  if (home.phone != day.phone) {
    throw Error::internal("max_distance_from_home: home belongs to a different phone");
  }
  const auto estimates = halfway_positions(day, towers);
  const double dist = max_distance_over_estimates(estimates, home.origin);
  return {day.phone, home.origin_cell, dist, geo::Timestamp{day.events.front().ts_min}.date()};
}

std::vector<PhoneDay> group_phone_days(const io::EventTable& table) {
  std::vector<PhoneDay> days(table.phone_ids.size());
  for (size_t p = 0; p < days.size(); ++p) {
    days[p].phone = static_cast<uint32_t>(p);
  }
  for (const io::Event& e : table.events) {
    days[e.phone].events.push_back(e);
  }
  for (PhoneDay& day : days) {
    auto& ev = day.events;
    std::sort(ev.begin(), ev.end(), [](const io::Event& a, const io::Event& b) {
      if (a.ts_min != b.ts_min) return a.ts_min < b.ts_min;
      return a.tower < b.tower;
    });
    ev.erase(std::unique(ev.begin(), ev.end(),
                         [](const io::Event& a, const io::Event& b) {
                           return a.ts_min == b.ts_min;
                         }),
             ev.end());
    if (!ev.empty() && ev.back().ts_min - ev.front().ts_min > 24 * 60) {
      throw Error::data("phone trace spans more than 24 hours");
    }
  }
  return days;
}

}  // namespace mobiscope::mobility
