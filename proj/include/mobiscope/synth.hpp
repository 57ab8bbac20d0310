#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mobiscope/data_io.hpp"
#include "mobiscope/geo.hpp"
#include "mobiscope/toml_lite.hpp"

namespace mobiscope::synth {

// A rectangle of km cells: indices [kx0, kx0+w) x [ky0, ky0+h).
struct Block {
  int kx0{};
  int ky0{};
  int w{};
  int h{};

  bool empty() const { return w <= 0 || h <= 0; }
  int count() const { return empty() ? 0 : w * h; }
  bool contains(int kx, int ky) const {
    return kx >= kx0 && kx < kx0 + w && ky >= ky0 && ky < ky0 + h;
  }
};

struct DateSpec {
  geo::CivilDate date;
  double attendance{};             // worker attendance probability
  double subgroup_attendance{-1};  // < 0: same as attendance
};

// One synthetic world: towers at every km-cell midpoint of the grid, agents
// that sleep at their home tower, and workers that commute along tower
// chains and dwell at work subject to the per-date attendance rate. The
// same seed always produces byte-identical outputs.
struct Scenario {
  uint64_t seed = 1;
  int n_agents = 1000;
  double worker_frac = 1.0;
  int world_nx = 12;
  int world_ny = 12;
  Block home_zone{1, 1, 4, 10};
  Block work_zone{7, 1, 4, 10};
  Block resident_zone{};  // non-worker homes; empty means the whole world
  Block subgroup_zone{};  // empty means no subgroup behavior or marking
  std::vector<DateSpec> dates;
  int night_step_min = 60;  // cadence of home events in [00:00, 07:00)
  int day_step_min = 60;    // cadence while dwelling in [07:00, 24:00)
  double event_drop_prob = 0.0;
  int jobs_per_work_cell = 10;

  static std::vector<DateSpec> default_dates();
  static Scenario from_toml(const toml::Table& t);
  void validate() const;
};

struct GroundTruth {
  int n_agents = 0;
  std::vector<DateSpec> dates;
  std::vector<geo::PlanarPoint> homes;        // by agent: home tower midpoint
  std::vector<std::vector<double>> max_dist;  // [date index][agent]
  // (date, hour) -> unique-agent count per cell; hours without events absent
  std::map<std::pair<int64_t, int>, std::map<geo::KmCell, int64_t>> counts;

  int date_index(geo::CivilDate date) const;  // unknown date -> lookup error
  geo::KmCell oracle_home(int agent) const;
  geo::PlanarPoint oracle_home_point(int agent) const;
  double oracle_max_dist(int agent, geo::CivilDate date) const;
  const std::map<geo::KmCell, int64_t>& oracle_counts(geo::CivilDate date, int hour) const;
};

struct World {
  io::TowerRegistry towers;
  io::EventTable events;
  std::vector<io::PersonRecord> population;
  std::vector<io::JobSite> jobs;
  GroundTruth truth;
};

// In-memory generation, for tests and small scenarios.
World generate_world(const Scenario& sc);

// Streams events.csv, towers.csv, population.csv, jobs.csv, truth.csv into
// out_dir without holding the event stream in memory.
void generate_files(const Scenario& sc, const std::string& out_dir);

void write_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_truth(const std::string& path);

}  // namespace mobiscope::synth
