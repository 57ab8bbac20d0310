#include "mobiscope/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"

namespace mobiscope::io {

namespace {

constexpr int64_t kMaxSpanMinutes = 24 * 60;

geo::PlanarPoint read_point(const csv::Reader& r, std::string_view xs, std::string_view ys) {
  const double x = r.field_double(xs, "x_m");
  const double y = r.field_double(ys, "y_m");
  if (x < 0 || y < 0) {
    r.fail("negative coordinate (" + std::string(xs) + "," + std::string(ys) + ")");
  }
  return {x, y};
}

}  // namespace

uint32_t TowerRegistry::add(TowerSite site) {
  const auto idx = static_cast<uint32_t>(sites_.size());
  auto [it, inserted] = index_.emplace(site.tower_id, idx);
  if (!inserted) {
    throw Error::data("duplicate tower_id '" + site.tower_id + "'");
  }
  sites_.push_back(std::move(site));
  return idx;
}

std::optional<uint32_t> TowerRegistry::find(std::string_view tower_id) const {
  auto it = index_.find(tower_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TowerRegistry read_towers(const std::string& path) {
  csv::Reader r(path, {"tower_id", "x_m", "y_m"});
  TowerRegistry reg;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    if (f[0].empty()) r.fail("empty tower_id");
    try {
      reg.add({std::string(f[0]), read_point(r, f[1], f[2])});
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  return reg;
}

EventTable read_events(const std::string& path, const TowerRegistry& towers,
                       ReadEventsOptions opts) {
  csv::Reader r(path, {"phone_id", "timestamp", "tower_id"});
  EventTable table;
  std::unordered_map<std::string, uint32_t, SvHash, std::equal_to<>> phone_index;
  struct Span {
    int64_t lo, hi;
  };
  std::vector<Span> spans;
  std::vector<bool> violated;

  std::vector<std::string_view> f;
  while (r.next(f)) {
    if (f[0].empty()) r.fail("empty phone_id");
    geo::Timestamp ts{};
    try {
      ts = geo::Timestamp::parse(f[1]);
    } catch (const Error& e) {
      r.fail(e.what());
    }
    if (ts.minute() % 5 != 0) {
      if (opts.strict_granularity) {
        r.fail("timestamp " + std::string(f[1]) + " is not on the 5-minute grid");
      }
      // downgraded to a tolerated irregularity; the event is kept
    }
    const auto tower = towers.find(f[2]);
    if (!tower) {
      ++table.dropped_unknown_tower;
      continue;
    }

    uint32_t pidx;
    auto it = phone_index.find(f[0]);
    if (it == phone_index.end()) {
      pidx = static_cast<uint32_t>(table.phone_ids.size());
      phone_index.emplace(std::string(f[0]), pidx);
      table.phone_ids.emplace_back(f[0]);
      spans.push_back({ts.minutes, ts.minutes});
      violated.push_back(false);
    } else {
      pidx = it->second;
      spans[pidx].lo = std::min(spans[pidx].lo, ts.minutes);
      spans[pidx].hi = std::max(spans[pidx].hi, ts.minutes);
    }
    if (spans[pidx].hi - spans[pidx].lo > kMaxSpanMinutes) {
      if (opts.enforce_24h) {
        r.fail("privacy violation: phone '" + std::string(f[0]) + "' spans more than 24 hours");
      }
      violated[pidx] = true;
    }
    table.events.push_back({ts.minutes, pidx, *tower});
  }

  if (!opts.enforce_24h) {
    const bool any = std::find(violated.begin(), violated.end(), true) != violated.end();
    if (any) {
      std::vector<Event> kept;
      kept.reserve(table.events.size());
      for (const Event& e : table.events) {
        if (!violated[e.phone]) kept.push_back(e);
      }
      table.events.swap(kept);
      table.dropped_span_violation =
          static_cast<uint64_t>(std::count(violated.begin(), violated.end(), true));
    }
  }
  return table;
}

std::vector<PersonRecord> read_population(const std::string& path) {
  csv::Reader r(path, {"x_m", "y_m", "age", "minority", "tertiary_edu", "disposable_income"});
  std::vector<PersonRecord> people;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    PersonRecord p;
    p.location = read_point(r, f[0], f[1]);
    p.age = static_cast<int>(r.field_int(f[2], "age"));
    if (p.age < 0) r.fail("negative age");
    p.minority = r.field_bool01(f[3], "minority");
    p.tertiary_edu = r.field_bool01(f[4], "tertiary_edu");
    p.disposable_income = r.field_double(f[5], "disposable_income");
    if (p.disposable_income < 0) r.fail("negative disposable_income");
    p.adult = p.age >= 18;
    people.push_back(p);
  }
  return people;
}

std::vector<JobSite> read_jobs(const std::string& path) {
  csv::Reader r(path, {"x_m", "y_m"});
  std::vector<JobSite> jobs;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    jobs.push_back({read_point(r, f[0], f[1])});
  }
  return jobs;
}

void write_population(const std::string& path, const std::vector<PersonRecord>& people) {
  csv::Writer w(path, "x_m,y_m,age,minority,tertiary_edu,disposable_income");
  std::string row;
  for (const PersonRecord& p : people) {
    row.clear();
    csv::append_fixed(row, p.location.x, 1);
    row += ',';
    csv::append_fixed(row, p.location.y, 1);
    row += ',';
    csv::append_int(row, p.age);
    row += p.minority ? ",1" : ",0";
    row += p.tertiary_edu ? ",1" : ",0";
    row += ',';
    csv::append_fixed(row, p.disposable_income, 2);
    w.raw_row(row);
  }
  w.close();
}

void write_towers(const std::string& path, const TowerRegistry& towers) {
  csv::Writer w(path, "tower_id,x_m,y_m");
  std::string row;
  for (const TowerSite& t : towers.sites()) {
    row.clear();
    row += t.tower_id;
    row += ',';
    csv::append_fixed(row, t.location.x, 1);
    row += ',';
    csv::append_fixed(row, t.location.y, 1);
    w.raw_row(row);
  }
  w.close();
}

void write_jobs(const std::string& path, const std::vector<JobSite>& jobs) {
  csv::Writer w(path, "x_m,y_m");
  std::string row;
  for (const JobSite& j : jobs) {
    row.clear();
    csv::append_fixed(row, j.location.x, 1);
    row += ',';
    csv::append_fixed(row, j.location.y, 1);
    w.raw_row(row);
  }
  w.close();
}

}  // namespace mobiscope::io
