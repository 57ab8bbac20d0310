#include "mobiscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/rng.hpp"

namespace mobiscope::synth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string tower_id(int kx, int ky) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%d_%d", kx, ky);
  return buf;
}

std::string phone_id(int agent, size_t date_idx) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "p%06d_d%zu", agent, date_idx);
  return buf;
}

struct Tick {
  int minute;  // minute of day, multiple of 5
  int kx;
  int ky;
};

struct AgentPlan {
  bool worker = false;
  bool subgroup = false;
  int home_kx = 0, home_ky = 0;
  int work_kx = 0, work_ky = 0;
  double u = 0.0;  // attendance threshold
  io::PersonRecord person;
};

std::pair<int, int> pick_cell(const Block& zone, DetRng& rng) {
  const uint64_t idx = rng.bounded(static_cast<uint64_t>(zone.count()));
  return {zone.kx0 + static_cast<int>(idx % static_cast<uint64_t>(zone.w)),
          zone.ky0 + static_cast<int>(idx / static_cast<uint64_t>(zone.w))};
}

std::vector<AgentPlan> make_plans(const Scenario& sc) {
  Block resident = sc.resident_zone;
  if (resident.empty()) resident = {0, 0, sc.world_nx, sc.world_ny};
  const int n_workers = static_cast<int>(std::llround(sc.worker_frac * sc.n_agents));

  DetRng setup(mix_seed(sc.seed, 0));
  std::vector<AgentPlan> plans(static_cast<size_t>(sc.n_agents));
  for (int a = 0; a < sc.n_agents; ++a) {
    AgentPlan& p = plans[static_cast<size_t>(a)];
    p.worker = a < n_workers;
    if (p.worker) {
      std::tie(p.home_kx, p.home_ky) = pick_cell(sc.home_zone, setup);
      std::tie(p.work_kx, p.work_ky) = pick_cell(sc.work_zone, setup);
    } else {
      std::tie(p.home_kx, p.home_ky) = pick_cell(resident, setup);
      p.work_kx = p.home_kx;
      p.work_ky = p.home_ky;
    }
    p.subgroup = !sc.subgroup_zone.empty() && sc.subgroup_zone.contains(p.home_kx, p.home_ky);
    p.u = setup.uniform01();

    const int jx = static_cast<int>(setup.bounded(10));
    const int jy = static_cast<int>(setup.bounded(10));
    p.person.location = {p.home_kx * 1000.0 + 50.0 + 100.0 * jx,
                         p.home_ky * 1000.0 + 50.0 + 100.0 * jy};
    p.person.age = 16 + static_cast<int>(setup.bounded(75));
    const double minority_draw = setup.uniform01();
    p.person.minority = p.subgroup || minority_draw < 0.2;
    const double edu_draw = setup.uniform01();
    p.person.tertiary_edu = p.person.age >= 19 && edu_draw < 0.35;
    p.person.disposable_income =
        std::round((150.0 + 350.0 * setup.uniform01()) * 100.0) / 100.0;
    p.person.adult = p.person.age >= 18;
  }
  return plans;
}

int first_step_at_or_after(int minute, int step) {
  return ((minute + step - 1) / step) * step;
}

// Commute path after leaving home: east/west first, then north/south.
std::vector<std::pair<int, int>> commute_path(const AgentPlan& p) {
  std::vector<std::pair<int, int>> cells;
  int x = p.home_kx, y = p.home_ky;
  while (x != p.work_kx) {
    x += p.work_kx > x ? 1 : -1;
    cells.emplace_back(x, y);
  }
  while (y != p.work_ky) {
    y += p.work_ky > y ? 1 : -1;
    cells.emplace_back(x, y);
  }
  return cells;
}

std::vector<Tick> schedule_for(const Scenario& sc, const AgentPlan& p, size_t di) {
  const DateSpec& ds = sc.dates[di];
  double rate = ds.attendance;
  if (p.subgroup && ds.subgroup_attendance >= 0.0) rate = ds.subgroup_attendance;
  const bool attends = p.worker && p.u < rate;

  std::vector<Tick> out;
  for (int m = 0; m < 420; m += sc.night_step_min) out.push_back({m, p.home_kx, p.home_ky});

  const auto path = commute_path(p);
  if (attends && !path.empty()) {
    const int len = static_cast<int>(path.size());
    for (int s = 0; s < len; ++s) {
      out.push_back({420 + 5 * (s + 1), path[s].first, path[s].second});
    }
    const int arrival = 420 + 5 * len;
    for (int m = first_step_at_or_after(arrival + 5, sc.day_step_min); m < 960;
         m += sc.day_step_min) {
      out.push_back({m, p.work_kx, p.work_ky});
    }
    out.push_back({960, p.work_kx, p.work_ky});
    for (int s = 1; s <= len; ++s) {
      const auto [cx, cy] = s == len ? std::pair{p.home_kx, p.home_ky} : path[len - 1 - s];
      out.push_back({960 + 5 * s, cx, cy});
    }
    const int home_again = 960 + 5 * len;
    for (int m = first_step_at_or_after(home_again + 5, sc.day_step_min); m <= 1435;
         m += sc.day_step_min) {
      out.push_back({m, p.home_kx, p.home_ky});
    }
  } else {
    for (int m = 420; m <= 1435; m += sc.day_step_min) out.push_back({m, p.home_kx, p.home_ky});
  }
  return out;
}

// Independent replay of the per-day estimates: same formulas as the
// pipeline, written against raw (kx, ky) ticks, so tower-aligned paths
// agree bit for bit.
struct Replay {
  geo::PlanarPoint origin{kNaN, kNaN};
  double max_dist = kNaN;
  std::vector<std::pair<int, geo::KmCell>> hour_cells;  // deduped (hour, cell)

  explicit Replay(const std::vector<Tick>& ticks) {
    if (ticks.empty()) return;
    struct Est {
      double x, y;
      std::vector<int> minutes;
    };
    std::vector<Est> ests;
    int cur_kx = ticks[0].kx, cur_ky = ticks[0].ky;
    ests.push_back({cur_kx * 1000.0 + 500.0, cur_ky * 1000.0 + 500.0, {ticks[0].minute}});
    for (size_t i = 1; i < ticks.size(); ++i) {
      const Tick& t = ticks[i];
      if (t.kx == cur_kx && t.ky == cur_ky) {
        ests.back().minutes.push_back(t.minute);
      } else {
        const double tx = t.kx * 1000.0 + 500.0;
        const double ty = t.ky * 1000.0 + 500.0;
        ests.push_back({(ests.back().x + tx) / 2.0, (ests.back().y + ty) / 2.0, {t.minute}});
        cur_kx = t.kx;
        cur_ky = t.ky;
      }
    }

    double wx = 0.0, wy = 0.0, wsum = 0.0;
    for (const Est& e : ests) {
      double minutes = 0.0;
      for (int m : e.minutes) {
        if (m >= 180 && m < 420) minutes += 5.0;
      }
      if (minutes > 0.0) {
        wx += e.x * minutes;
        wy += e.y * minutes;
        wsum += minutes;
      }
    }
    if (wsum > 0.0) {
      origin = {wx / wsum, wy / wsum};
      double best = 0.0;
      for (const Est& e : ests) {
        const double dx = e.x - origin.x;
        const double dy = e.y - origin.y;
        best = std::max(best, std::sqrt(dx * dx + dy * dy));
      }
      max_dist = best;
    }

    std::set<std::pair<int, geo::KmCell>> seen;
    for (const Est& e : ests) {
      const geo::KmCell cell{std::trunc(e.x / 1000.0) * 1000.0 + 500.0,
                             std::trunc(e.y / 1000.0) * 1000.0 + 500.0};
      for (int m : e.minutes) seen.insert({m / 60, cell});
    }
    hour_cells.assign(seen.begin(), seen.end());
  }
};

// Runs the whole generation, handing every phone-day to emit(agent, date
// index, plan, ticks) and accumulating ground truth.
template <typename Emit>
GroundTruth generate_core(const Scenario& sc, const std::vector<AgentPlan>& plans, Emit&& emit) {
  GroundTruth truth;
  truth.n_agents = sc.n_agents;
  truth.dates = sc.dates;
  truth.homes.reserve(plans.size());
  for (const AgentPlan& p : plans) {
    truth.homes.push_back({p.home_kx * 1000.0 + 500.0, p.home_ky * 1000.0 + 500.0});
  }
  truth.max_dist.assign(sc.dates.size(),
                        std::vector<double>(static_cast<size_t>(sc.n_agents), kNaN));

  for (int a = 0; a < sc.n_agents; ++a) {
    for (size_t di = 0; di < sc.dates.size(); ++di) {
      std::vector<Tick> ticks = schedule_for(sc, plans[static_cast<size_t>(a)], di);
      if (sc.event_drop_prob > 0.0) {
        DetRng drop(mix_seed(sc.seed, 1 + static_cast<uint64_t>(a) * sc.dates.size() + di));
        std::erase_if(ticks, [&](const Tick&) { return drop.uniform01() < sc.event_drop_prob; });
      }
      if (ticks.empty()) continue;

      const Replay replay(ticks);
      truth.max_dist[di][static_cast<size_t>(a)] = replay.max_dist;
      const int64_t days = sc.dates[di].date.to_days();
      for (const auto& [hour, cell] : replay.hour_cells) {
        ++truth.counts[{days, hour}][cell];
      }
      emit(a, di, ticks);
    }
  }
  return truth;
}

io::TowerRegistry make_towers(const Scenario& sc) {
  io::TowerRegistry towers;
  for (int kx = 0; kx < sc.world_nx; ++kx) {
    for (int ky = 0; ky < sc.world_ny; ++ky) {
      towers.add({tower_id(kx, ky), {kx * 1000.0 + 500.0, ky * 1000.0 + 500.0}});
    }
  }
  return towers;
}

std::vector<io::JobSite> make_jobs(const Scenario& sc) {
  std::vector<io::JobSite> jobs;
  if (sc.work_zone.empty()) return jobs;
  for (int kx = sc.work_zone.kx0; kx < sc.work_zone.kx0 + sc.work_zone.w; ++kx) {
    for (int ky = sc.work_zone.ky0; ky < sc.work_zone.ky0 + sc.work_zone.h; ++ky) {
      for (int j = 0; j < sc.jobs_per_work_cell; ++j) {
        jobs.push_back({{kx * 1000.0 + 50.0 + 100.0 * (j % 10),
                         ky * 1000.0 + 50.0 + 100.0 * ((j / 10) % 10)}});
      }
    }
  }
  return jobs;
}

}  // namespace

std::vector<DateSpec> Scenario::default_dates() {
  return {{{2020, 1, 16}, 0.8, -1.0},
          {{2020, 3, 26}, 0.8, -1.0},
          {{2019, 1, 17}, 0.8, -1.0},
          {{2019, 3, 28}, 0.8, -1.0}};
}

void Scenario::validate() const {
  if (n_agents < 0) throw Error::config("n_agents must be nonnegative");
  if (worker_frac < 0.0 || worker_frac > 1.0) throw Error::config("worker_frac must be in [0,1]");
  if (world_nx < 1 || world_ny < 1) throw Error::config("world grid must be at least 1x1");
  if (dates.empty()) throw Error::config("scenario needs at least one date");
  for (size_t i = 0; i < dates.size(); ++i) {
    if (dates[i].attendance < 0.0 || dates[i].attendance > 1.0) {
      throw Error::config("attendance rates must be in [0,1]");
    }
    if (dates[i].subgroup_attendance > 1.0) {
      throw Error::config("subgroup attendance rates must be in [0,1]");
    }
    for (size_t j = i + 1; j < dates.size(); ++j) {
      if (dates[i].date == dates[j].date) {
        throw Error::config("scenario dates must be distinct; " + dates[i].date.str() +
                            " repeats");
      }
    }
  }
  if (night_step_min < 5 || night_step_min % 5 != 0 || night_step_min > 235) {
    throw Error::config("night_step_min must be a multiple of 5 in [5, 235]");
  }
  if (day_step_min < 5 || day_step_min % 5 != 0) {
    throw Error::config("day_step_min must be a positive multiple of 5");
  }
  if (event_drop_prob < 0.0 || event_drop_prob >= 1.0) {
    throw Error::config("event_drop_prob must be in [0,1)");
  }
  if (jobs_per_work_cell < 0 || jobs_per_work_cell > 100) {
    throw Error::config("jobs_per_work_cell must be in [0,100]");
  }

  auto check_zone = [&](const Block& b, const char* name) {
    if (b.empty()) return;
    if (b.kx0 < 0 || b.ky0 < 0 || b.kx0 + b.w > world_nx || b.ky0 + b.h > world_ny) {
      throw Error::config(std::string(name) + " zone extends outside the world grid");
    }
  };
  check_zone(home_zone, "home");
  check_zone(work_zone, "work");
  check_zone(resident_zone, "resident");
  check_zone(subgroup_zone, "subgroup");

  const int n_workers = static_cast<int>(std::llround(worker_frac * n_agents));
  if (n_workers > 0) {
    if (home_zone.empty() || work_zone.empty()) {
      throw Error::config("scenarios with workers need nonempty home and work zones");
    }
    // Longest possible commute must arrive before the 10:00 observation hour.
    const int span_x = std::max(std::abs(home_zone.kx0 - (work_zone.kx0 + work_zone.w - 1)),
                                std::abs(work_zone.kx0 - (home_zone.kx0 + home_zone.w - 1)));
    const int span_y = std::max(std::abs(home_zone.ky0 - (work_zone.ky0 + work_zone.h - 1)),
                                std::abs(work_zone.ky0 - (home_zone.ky0 + home_zone.h - 1)));
    if (span_x + span_y > 35) {
      throw Error::config("work zone is too far from the home zone for the commute schedule");
    }
  }
}

Scenario Scenario::from_toml(const toml::Table& t) {
  Scenario sc;
  sc.seed = static_cast<uint64_t>(t.get_int("scenario.seed", 1));
  sc.n_agents = static_cast<int>(t.get_int("scenario.n_agents", sc.n_agents));
  sc.worker_frac = t.get_double("scenario.worker_frac", sc.worker_frac);
  sc.night_step_min = static_cast<int>(t.get_int("scenario.night_step_min", sc.night_step_min));
  sc.day_step_min = static_cast<int>(t.get_int("scenario.day_step_min", sc.day_step_min));
  sc.event_drop_prob = t.get_double("scenario.event_drop_prob", sc.event_drop_prob);
  sc.jobs_per_work_cell =
      static_cast<int>(t.get_int("scenario.jobs_per_work_cell", sc.jobs_per_work_cell));
  sc.world_nx = static_cast<int>(t.get_int("world.nx", sc.world_nx));
  sc.world_ny = static_cast<int>(t.get_int("world.ny", sc.world_ny));

  auto get_zone = [&](const std::string& key, Block fallback) {
    if (!t.has(key)) return fallback;
    const auto v = t.get_int_array(key);
    if (v.empty()) return Block{};
    if (v.size() != 4) throw Error::config("zone '" + key + "' needs [kx0, ky0, w, h]");
    return Block{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                 static_cast<int>(v[3])};
  };
  sc.home_zone = get_zone("zones.home", sc.home_zone);
  sc.work_zone = get_zone("zones.work", sc.work_zone);
  sc.resident_zone = get_zone("zones.resident", sc.resident_zone);
  sc.subgroup_zone = get_zone("zones.subgroup", sc.subgroup_zone);

  if (t.has("dates.list")) {
    const auto names = t.get_string_array("dates.list");
    const auto rates = t.get_double_array("dates.attendance");
    if (names.size() != rates.size()) {
      throw Error::config("dates.list and dates.attendance must have equal length");
    }
    std::vector<double> sub(names.size(), -1.0);
    if (t.has("dates.subgroup_attendance")) {
      sub = t.get_double_array("dates.subgroup_attendance");
      if (sub.size() != names.size()) {
        throw Error::config("dates.subgroup_attendance must match dates.list in length");
      }
    }
    sc.dates.clear();
    for (size_t i = 0; i < names.size(); ++i) {
      sc.dates.push_back({geo::CivilDate::parse(names[i]), rates[i], sub[i]});
    }
  } else {
    sc.dates = default_dates();
  }
  return sc;
}

int GroundTruth::date_index(geo::CivilDate date) const {
  for (size_t i = 0; i < dates.size(); ++i) {
    if (dates[i].date == date) return static_cast<int>(i);
  }
  throw Error::data("ground truth has no date " + date.str());
}

geo::KmCell GroundTruth::oracle_home(int agent) const {
  return geo::KmCell::of(oracle_home_point(agent));
}

geo::PlanarPoint GroundTruth::oracle_home_point(int agent) const {
  if (agent < 0 || agent >= n_agents) {
    throw Error::data("ground truth has no agent " + std::to_string(agent));
  }
  return homes[static_cast<size_t>(agent)];
}

double GroundTruth::oracle_max_dist(int agent, geo::CivilDate date) const {
  if (agent < 0 || agent >= n_agents) {
    throw Error::data("ground truth has no agent " + std::to_string(agent));
  }
  return max_dist[static_cast<size_t>(date_index(date))][static_cast<size_t>(agent)];
}

const std::map<geo::KmCell, int64_t>& GroundTruth::oracle_counts(geo::CivilDate date,
                                                                 int hour) const {
  static const std::map<geo::KmCell, int64_t> empty;
  date_index(date);
  auto it = counts.find({date.to_days(), hour});
  return it == counts.end() ? empty : it->second;
}

World generate_world(const Scenario& sc) {
  sc.validate();
  const auto plans = make_plans(sc);

  World world;
  world.towers = make_towers(sc);
  world.jobs = make_jobs(sc);
  world.population.reserve(plans.size());
  for (const AgentPlan& p : plans) world.population.push_back(p.person);

  world.truth = generate_core(sc, plans, [&](int a, size_t di, const std::vector<Tick>& ticks) {
    const uint32_t phone = static_cast<uint32_t>(world.events.phone_ids.size());
    world.events.phone_ids.push_back(phone_id(a, di));
    const int64_t base = sc.dates[di].date.to_days() * 1440;
    for (const Tick& t : ticks) {
      const auto tower = world.towers.find(tower_id(t.kx, t.ky));
      world.events.events.push_back({base + t.minute, phone, *tower});
    }
  });
  return world;
}

void generate_files(const Scenario& sc, const std::string& out_dir) {
  sc.validate();
  std::filesystem::create_directories(out_dir);
  const auto plans = make_plans(sc);

  const io::TowerRegistry towers = make_towers(sc);
  io::write_towers(out_dir + "/towers.csv", towers);
  io::write_jobs(out_dir + "/jobs.csv", make_jobs(sc));
  std::vector<io::PersonRecord> population;
  population.reserve(plans.size());
  for (const AgentPlan& p : plans) population.push_back(p.person);
  io::write_population(out_dir + "/population.csv", population);

  csv::Writer events(out_dir + "/events.csv", "phone_id,timestamp,tower_id");
  std::string row;
  const GroundTruth truth =
      generate_core(sc, plans, [&](int a, size_t di, const std::vector<Tick>& ticks) {
        const std::string id = phone_id(a, di);
        for (const Tick& t : ticks) {
          row.clear();
          row += id;
          row += ',';
          row += geo::Timestamp::at(sc.dates[di].date, t.minute).str();
          row += ',';
          row += tower_id(t.kx, t.ky);
          events.raw_row(row);
        }
      });
  events.close();

  write_truth(out_dir + "/truth.csv", truth);
}

void write_truth(const std::string& path, const GroundTruth& truth) {
  csv::Writer w(path, "kind,agent,date,hour,x,y,value");
  std::string row;
  for (int a = 0; a < truth.n_agents; ++a) {
    row.clear();
    row += "home,";
    csv::append_int(row, a);
    row += ",,,";
    csv::append_fixed(row, truth.homes[static_cast<size_t>(a)].x, 1);
    row += ',';
    csv::append_fixed(row, truth.homes[static_cast<size_t>(a)].y, 1);
    row += ',';
    w.raw_row(row);
  }
  for (size_t di = 0; di < truth.dates.size(); ++di) {
    for (int a = 0; a < truth.n_agents; ++a) {
      row.clear();
      row += "maxdist,";
      csv::append_int(row, a);
      row += ',';
      row += truth.dates[di].date.str();
      row += ",,,,";
      csv::append_g17(row, truth.max_dist[di][static_cast<size_t>(a)]);
      w.raw_row(row);
    }
  }
  for (const auto& [key, cells] : truth.counts) {
    const std::string date = geo::CivilDate::from_days(key.first).str();
    for (const auto& [cell, count] : cells) {
      row.clear();
      row += "count,,";
      row += date;
      row += ',';
      csv::append_int(row, key.second);
      row += ',';
      csv::append_fixed(row, cell.cx, 1);
      row += ',';
      csv::append_fixed(row, cell.cy, 1);
      row += ',';
      csv::append_int(row, count);
      w.raw_row(row);
    }
  }
  w.close();
}

GroundTruth read_truth(const std::string& path) {
  csv::Reader r(path, {"kind", "agent", "date", "hour", "x", "y", "value"});
  GroundTruth truth;
  std::vector<std::string_view> f;
  // Dates keep their first-appearance order so the scenario order survives
  // a write/read round trip.
  std::vector<std::vector<std::pair<int, double>>> dists;
  auto date_slot = [&](geo::CivilDate date) {
    for (size_t i = 0; i < truth.dates.size(); ++i) {
      if (truth.dates[i].date == date) return i;
    }
    truth.dates.push_back({date, -1.0, -1.0});
    dists.emplace_back();
    return truth.dates.size() - 1;
  };
  while (r.next(f)) {
    if (f[0] == "home") {
      const int agent = static_cast<int>(r.field_int(f[1], "agent"));
      if (agent != static_cast<int>(truth.homes.size())) r.fail("home rows must be dense");
      truth.homes.push_back({r.field_double(f[4], "x"), r.field_double(f[5], "y")});
    } else if (f[0] == "maxdist") {
      dists[date_slot(geo::CivilDate::parse(f[2]))].emplace_back(
          static_cast<int>(r.field_int(f[1], "agent")), r.field_double(f[6], "value"));
    } else if (f[0] == "count") {
      const geo::CivilDate date = geo::CivilDate::parse(f[2]);
      const int hour = static_cast<int>(r.field_int(f[3], "hour"));
      const geo::KmCell cell{r.field_double(f[4], "x"), r.field_double(f[5], "y")};
      truth.counts[{date.to_days(), hour}][cell] = r.field_int(f[6], "value");
    } else {
      r.fail("unknown truth row kind");
    }
  }
  truth.n_agents = static_cast<int>(truth.homes.size());
  truth.max_dist.assign(truth.dates.size(),
                        std::vector<double>(static_cast<size_t>(truth.n_agents), kNaN));
  for (size_t di = 0; di < truth.dates.size(); ++di) {
    for (const auto& [agent, value] : dists[di]) {
      if (agent < 0 || agent >= truth.n_agents) r.fail("maxdist row for unknown agent");
      truth.max_dist[di][static_cast<size_t>(agent)] = value;
    }
  }
  return truth;
}

}  // namespace mobiscope::synth
