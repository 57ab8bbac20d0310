#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mobiscope/data_io.hpp"
#include "mobiscope/geo.hpp"

namespace mobiscope::mobility {

// One phone's event trace: sorted ascending by timestamp, same-timestamp
// duplicates removed, nonempty, spanning at most 24 hours.
struct PhoneDay {
  uint32_t phone{};
  std::vector<io::Event> events;
};

// The phone sits at `point` for every 5-minute tick listed. Ticks are the
// event timestamps that serviced this estimate; they need not be contiguous.
struct PositionEstimate {
  geo::PlanarPoint point;
  std::vector<int64_t> ticks;  // minutes since epoch, ascending

  geo::Timestamp start() const { return {ticks.front()}; }
  int duration_min() const { return static_cast<int>(ticks.size()) * 5; }
};

// Clock window for night-rest inference. Both ends name 5-minute slots and
// are inclusive, so the default 03:00-06:55 covers minutes [180, 420) of
// each day the trace touches.
struct NightWindow {
  int start_min = 3 * 60;
  int last_slot_min = 6 * 60 + 55;

  int end_exclusive() const { return last_slot_min + 5; }
};

struct HomeLocation {
  uint32_t phone{};
  geo::PlanarPoint origin;   // duration-weighted exact point
  geo::KmCell origin_cell;   // truncation of origin, used for joins only
};

struct MaxDistanceRecord {
  uint32_t phone{};
  geo::KmCell origin_cell;
  double max_dist_m{};
  geo::CivilDate date;  // date of the phone's first event
};

// Trajectory reconstruction: the first estimate sits on the first tower;
// each tower switch moves the estimate to the midpoint between the previous
// estimate and the new tower. Consecutive events on the same tower extend
// the current estimate.
std::vector<PositionEstimate> halfway_positions(const PhoneDay& day,
                                                const io::TowerRegistry& towers);

// Duration-weighted mean of the estimates' in-window ticks. Returns nullopt
// when the phone has no service inside the window (a normal outcome, not an
// error).
std::optional<HomeLocation> infer_home(const PhoneDay& day, const io::TowerRegistry& towers,
                                       NightWindow window = {});
std::optional<HomeLocation> infer_home_from_estimates(uint32_t phone,
                                                      std::span<const PositionEstimate> estimates,
                                                      NightWindow window = {});

// Maximum Euclidean distance from the home origin over all of the day's
// estimates. The exact weighted origin is used, not the cell midpoint.
MaxDistanceRecord max_distance_from_home(const PhoneDay& day, const HomeLocation& home,
                                         const io::TowerRegistry& towers);
double max_distance_over_estimates(std::span<const PositionEstimate> estimates,
                                   geo::PlanarPoint origin);

// Groups an event table into per-phone days: sorts by (timestamp, tower),
// drops same-timestamp duplicates (keeping the lowest tower index, which
// makes the result invariant to input reordering), and re-checks the 24h
// span invariant.
std::vector<PhoneDay> group_phone_days(const io::EventTable& table);

}  // namespace mobiscope::mobility
