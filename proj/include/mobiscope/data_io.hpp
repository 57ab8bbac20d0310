#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mobiscope/geo.hpp"

namespace mobiscope::io {

// One phone-to-tower service record. phone_id is pre-anonymized and
// daily-scoped upstream; no hashing happens here.
struct CellEvent {
  std::string phone_id;
  geo::Timestamp ts;
  std::string tower_id;
};

struct TowerSite {
  std::string tower_id;
  geo::PlanarPoint location;
};

// Transparent hashing so hot-path lookups take string_view without a copy.
struct SvHash {
  using is_transparent = void;
  size_t operator()(std::string_view sv) const { return std::hash<std::string_view>{}(sv); }
};

class TowerRegistry {
 public:
  uint32_t add(TowerSite site);
  std::optional<uint32_t> find(std::string_view tower_id) const;
  const TowerSite& site(uint32_t idx) const { return sites_[idx]; }
  size_t size() const { return sites_.size(); }
  const std::vector<TowerSite>& sites() const { return sites_; }

 private:
  std::vector<TowerSite> sites_;
  std::unordered_map<std::string, uint32_t, SvHash, std::equal_to<>> index_;
};

struct PersonRecord {
  geo::PlanarPoint location;  // 100 m lattice
  int age{};
  bool minority{};
  bool tertiary_edu{};
  double disposable_income{};
  bool adult{};  // derived: age >= 18
};

struct JobSite {
  geo::PlanarPoint location;
};

// Interned event as stored in bulk: tower and phone ids resolved to indices.
struct Event {
  int64_t ts_min{};  // minutes since epoch
  uint32_t phone{};
  uint32_t tower{};
};

struct EventTable {
  std::vector<std::string> phone_ids;  // index == Event::phone
  std::vector<Event> events;           // file order
  uint64_t dropped_unknown_tower = 0;
  uint64_t dropped_span_violation = 0;  // phones dropped when enforce_24h is off
};

struct ReadEventsOptions {
  bool strict_granularity = true;  // reject minutes off the 5-minute grid
  bool enforce_24h = true;         // hard-fail a phone spanning more than 24h
};

// events.csv: phone_id,timestamp,tower_id with timestamp YYYY-MM-DDTHH:MM.
// Events referencing unknown towers are counted and dropped. A phone whose
// events span more than 24 hours is a privacy violation: hard failure by
// default, drop-with-count when enforce_24h is off.
EventTable read_events(const std::string& path, const TowerRegistry& towers,
                       ReadEventsOptions opts = {});

// towers.csv: tower_id,x_m,y_m
TowerRegistry read_towers(const std::string& path);

// population.csv: x_m,y_m,age,minority,tertiary_edu,disposable_income
std::vector<PersonRecord> read_population(const std::string& path);

// jobs.csv: x_m,y_m
std::vector<JobSite> read_jobs(const std::string& path);

void write_population(const std::string& path, const std::vector<PersonRecord>& people);
void write_towers(const std::string& path, const TowerRegistry& towers);
void write_jobs(const std::string& path, const std::vector<JobSite>& jobs);

}  // namespace mobiscope::io
