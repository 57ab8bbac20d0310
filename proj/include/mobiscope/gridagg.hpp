#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mobiscope/geo.hpp"
#include "mobiscope/mobility.hpp"

namespace mobiscope::grid {

// Unique-phone counts per km cell for one hour. A phone visiting two cells
// within the hour counts once in each; uniqueness is per (cell, hour).
struct GridFrame {
  geo::HourBucket bucket;
  std::map<geo::KmCell, int64_t> cells;
};

struct HomeCellStat {
  double mean_max_dist_m{};
  int64_t n{};
};

// Per home-cell mean of the maximum distance moved from home, for one date.
struct HomeDistanceFrame {
  geo::CivilDate date;
  std::map<geo::KmCell, HomeCellStat> cells;
};

// One phone's day: home cell and maximum distance from home. These are the
// raw rows behind the per-cell means and the distance histogram.
struct DistanceDetail {
  geo::CivilDate date;
  std::string phone_id;
  geo::KmCell origin_cell;
  double max_dist_m{};
};

// Raw aggregation state for one shard of phones. Merging is associative and
// commutative, and the finalized frames are byte-identical for any disjoint
// partition of phones: counts are exact integers, and each cell's distance
// mean is summed in phone-id order after the merge.
class ShardAggregate {
 public:
  // Registers a phone for the cross-shard disjointness check.
  void note_phone(const std::string& phone_id);

  // One phone's day of position estimates; every 5-minute tick marks
  // presence of that phone in the estimate's cell at the tick's hour.
  void add_presence(std::span<const mobility::PositionEstimate> estimates);

  void add_home_distance(const std::string& phone_id, geo::CivilDate date, geo::KmCell origin_cell,
                         double max_dist_m);

  // Throws a double-count error when two parts share a phone_id.
  static ShardAggregate merge(std::vector<ShardAggregate> parts);

  std::vector<GridFrame> presence_frames() const;       // sorted by (date, hour)
  std::vector<HomeDistanceFrame> home_frames() const;   // sorted by date
  std::vector<DistanceDetail> details() const;          // sorted by (date, cell, phone)
  size_t phone_count() const { return phones_.size(); }

 private:
  struct BucketCellKey {
    int32_t days{};
    int32_t hour{};
    int32_t kx{};
    int32_t ky{};
    bool operator==(const BucketCellKey&) const = default;
  };
  struct KeyHash {
    size_t operator()(const BucketCellKey& k) const;
  };
  struct DateCellKey {
    int32_t days{};
    int32_t kx{};
    int32_t ky{};
    bool operator==(const DateCellKey&) const = default;
  };
  struct DateCellHash {
    size_t operator()(const DateCellKey& k) const;
  };

  std::unordered_set<std::string> phones_;
  std::unordered_map<BucketCellKey, int64_t, KeyHash> presence_;
  std::unordered_map<DateCellKey, std::vector<std::pair<std::string, double>>, DateCellHash>
      home_dists_;
};

// Convenience entry: per-hour frames for one date from named tracks.
struct PhoneTrack {
  std::string phone_id;
  std::vector<mobility::PositionEstimate> estimates;
};
std::vector<GridFrame> aggregate_presence(const std::vector<PhoneTrack>& tracks,
                                          geo::CivilDate date);

struct NamedMaxDistance {
  std::string phone_id;
  geo::KmCell origin_cell;
  double max_dist_m{};
};
HomeDistanceFrame aggregate_home_distance(const std::vector<NamedMaxDistance>& records,
                                          geo::CivilDate date);

// Full sharded aggregation over an event table: groups phone days, shards
// them round-robin, processes shards (in parallel when threads > 1), merges
// and finalizes. Results do not depend on shard count or thread count.
struct AggregateOptions {
  mobility::NightWindow night;
  int shards = 1;
  int threads = 1;
  bool strict_granularity = true;
};
struct AggregateResult {
  std::vector<GridFrame> presence;
  std::vector<HomeDistanceFrame> home;
  std::vector<DistanceDetail> details;
  uint64_t phones_total = 0;
  uint64_t phones_with_home = 0;
};
AggregateResult aggregate_events(const io::EventTable& table, const io::TowerRegistry& towers,
                                 const AggregateOptions& opts);

void write_grid_hourly(const std::string& path, const std::vector<GridFrame>& frames);
void write_home_distance(const std::string& path, const std::vector<HomeDistanceFrame>& frames);
void write_distance_detail(const std::string& path, const std::vector<DistanceDetail>& details);
std::vector<GridFrame> read_grid_hourly(const std::string& path);
std::vector<HomeDistanceFrame> read_home_distance(const std::string& path);
std::vector<DistanceDetail> read_distance_detail(const std::string& path);

}  // namespace mobiscope::grid
