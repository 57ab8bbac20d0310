#include "mobiscope/gridagg.hpp"

#include <algorithm>
#include <future>
#include <tuple>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/rng.hpp"

namespace mobiscope::grid {

size_t ShardAggregate::KeyHash::operator()(const BucketCellKey& k) const {
  uint64_t h = splitmix64(static_cast<uint64_t>(static_cast<uint32_t>(k.days)) << 32 |
                          static_cast<uint32_t>(k.hour));
  h ^= splitmix64(static_cast<uint64_t>(static_cast<uint32_t>(k.kx)) << 32 |
                  static_cast<uint32_t>(k.ky));
  return static_cast<size_t>(h);
}

size_t ShardAggregate::DateCellHash::operator()(const DateCellKey& k) const {
  uint64_t h = splitmix64(static_cast<uint64_t>(static_cast<uint32_t>(k.kx)) << 32 |
                          static_cast<uint32_t>(k.ky));
  h ^= splitmix64(static_cast<uint64_t>(static_cast<uint32_t>(k.days)));
  return static_cast<size_t>(h);
}

void ShardAggregate::note_phone(const std::string& phone_id) {
  if (!phones_.insert(phone_id).second) {
    throw Error::data("duplicate phone_id '" + phone_id + "' within one shard");
  }
}

void ShardAggregate::add_presence(std::span<const mobility::PositionEstimate> estimates) {
  // Collect this phone's (date, hour, cell) visits, then dedupe so the phone
  // counts once per cell-hour no matter how many ticks serviced it.
  thread_local std::vector<BucketCellKey> visits;
  visits.clear();
  for (const mobility::PositionEstimate& est : estimates) {
    const geo::KmCell cell = geo::KmCell::of(est.point);
    const auto kx = static_cast<int32_t>(cell.kx());
    const auto ky = static_cast<int32_t>(cell.ky());
    for (int64_t tick : est.ticks) {
      const int64_t days = geo::Timestamp::floor_div(tick, 1440);
      const auto hour = static_cast<int32_t>((tick - days * 1440) / 60);
      visits.push_back({static_cast<int32_t>(days), hour, kx, ky});
    }
  }
  auto key_less = [](const BucketCellKey& a, const BucketCellKey& b) {
    return std::tie(a.days, a.hour, a.kx, a.ky) < std::tie(b.days, b.hour, b.kx, b.ky);
  };
  std::sort(visits.begin(), visits.end(), key_less);
  visits.erase(std::unique(visits.begin(), visits.end()), visits.end());
  for (const BucketCellKey& k : visits) {
    ++presence_[k];
  }
}

void ShardAggregate::add_home_distance(const std::string& phone_id, geo::CivilDate date,
                                       geo::KmCell origin_cell, double max_dist_m) {
  const DateCellKey key{static_cast<int32_t>(date.to_days()),
                        static_cast<int32_t>(origin_cell.kx()),
                        static_cast<int32_t>(origin_cell.ky())};
  home_dists_[key].emplace_back(phone_id, max_dist_m);
}

ShardAggregate ShardAggregate::merge(std::vector<ShardAggregate> parts) {
  ShardAggregate out;
  for (ShardAggregate& part : parts) {
    for (const std::string& id : part.phones_) {
      if (!out.phones_.insert(id).second) {
        throw Error::data("double-count: phone_id '" + id + "' appears in two shards");
      }
    }
    for (const auto& [key, count] : part.presence_) {
      out.presence_[key] += count;
    }
    for (auto& [key, list] : part.home_dists_) {
      auto& dst = out.home_dists_[key];
      dst.insert(dst.end(), std::make_move_iterator(list.begin()),
                 std::make_move_iterator(list.end()));
    }
  }
  return out;
}

std::vector<GridFrame> ShardAggregate::presence_frames() const {
  std::map<geo::HourBucket, std::map<geo::KmCell, int64_t>> sorted;
  for (const auto& [key, count] : presence_) {
    const geo::HourBucket bucket{geo::CivilDate::from_days(key.days), key.hour};
    const geo::KmCell cell{key.kx * 1000.0 + 500.0, key.ky * 1000.0 + 500.0};
    sorted[bucket][cell] = count;
  }
  std::vector<GridFrame> frames;
  frames.reserve(sorted.size());
  for (auto& [bucket, cells] : sorted) {
    frames.push_back({bucket, std::move(cells)});
  }
  return frames;
}

std::vector<HomeDistanceFrame> ShardAggregate::home_frames() const {
  std::map<geo::CivilDate, std::map<geo::KmCell, HomeCellStat>> sorted;
  for (const auto& [key, list] : home_dists_) {
    // Sum in phone-id order so the mean is independent of shard grouping.
    std::vector<std::pair<std::string, double>> ordered(list.begin(), list.end());
    std::sort(ordered.begin(), ordered.end());
    double sum = 0.0;
    for (const auto& [id, dist] : ordered) sum += dist;
    const geo::KmCell cell{key.kx * 1000.0 + 500.0, key.ky * 1000.0 + 500.0};
    sorted[geo::CivilDate::from_days(key.days)][cell] = {
        sum / static_cast<double>(ordered.size()), static_cast<int64_t>(ordered.size())};
  }
  std::vector<HomeDistanceFrame> frames;
  frames.reserve(sorted.size());
  for (auto& [date, cells] : sorted) {
    frames.push_back({date, std::move(cells)});
  }
  return frames;
}

std::vector<DistanceDetail> ShardAggregate::details() const {
  std::vector<DistanceDetail> out;
  for (const auto& [key, list] : home_dists_) {
    const geo::CivilDate date = geo::CivilDate::from_days(key.days);
    const geo::KmCell cell{key.kx * 1000.0 + 500.0, key.ky * 1000.0 + 500.0};
    for (const auto& [id, dist] : list) {
      out.push_back({date, id, cell, dist});
    }
  }
  std::sort(out.begin(), out.end(), [](const DistanceDetail& a, const DistanceDetail& b) {
    return std::tie(a.date, a.origin_cell, a.phone_id) <
           std::tie(b.date, b.origin_cell, b.phone_id);
  });
  return out;
}

std::vector<GridFrame> aggregate_presence(const std::vector<PhoneTrack>& tracks,
                                          geo::CivilDate date) {
  ShardAggregate agg;
  for (const PhoneTrack& track : tracks) {
    agg.note_phone(track.phone_id);
    // restrict ticks to the requested date
    std::vector<mobility::PositionEstimate> clipped;
    for (const mobility::PositionEstimate& est : track.estimates) {
      mobility::PositionEstimate c{est.point, {}};
      for (int64_t tick : est.ticks) {
        if (geo::Timestamp{tick}.date() == date) c.ticks.push_back(tick);
      }
      if (!c.ticks.empty()) clipped.push_back(std::move(c));
    }
    agg.add_presence(clipped);
  }
  return agg.presence_frames();
}

HomeDistanceFrame aggregate_home_distance(const std::vector<NamedMaxDistance>& records,
                                          geo::CivilDate date) {
  ShardAggregate agg;
  for (const NamedMaxDistance& rec : records) {
    agg.note_phone(rec.phone_id);
    agg.add_home_distance(rec.phone_id, date, rec.origin_cell, rec.max_dist_m);
  }
  auto frames = agg.home_frames();
  if (frames.empty()) return {date, {}};
  return frames.front();
}

namespace {

ShardAggregate process_shard(const io::EventTable& table, const io::TowerRegistry& towers,
                             std::span<const mobility::PhoneDay> days, size_t shard,
                             size_t n_shards, mobility::NightWindow night) {
  ShardAggregate agg;
  for (size_t i = shard; i < days.size(); i += n_shards) {
    const mobility::PhoneDay& day = days[i];
    if (day.events.empty()) continue;
    agg.note_phone(table.phone_ids[day.phone]);
    const auto estimates = mobility::halfway_positions(day, towers);
    agg.add_presence(estimates);
    const auto home = mobility::infer_home_from_estimates(day.phone, estimates, night);
    if (home) {
      const double dist = mobility::max_distance_over_estimates(estimates, home->origin);
      const geo::CivilDate date = geo::Timestamp{day.events.front().ts_min}.date();
      agg.add_home_distance(table.phone_ids[day.phone], date, home->origin_cell, dist);
    }
  }
  return agg;
}

}  // namespace

AggregateResult aggregate_events(const io::EventTable& table, const io::TowerRegistry& towers,
                                 const AggregateOptions& opts) {
  if (opts.shards < 1) throw Error::config("shards must be >= 1");
  const auto days = mobility::group_phone_days(table);
  const size_t n_shards = static_cast<size_t>(opts.shards);
  const size_t n_threads = std::max(1, std::min(opts.threads, opts.shards));

  std::vector<ShardAggregate> parts(n_shards);
  if (n_threads <= 1) {
    for (size_t s = 0; s < n_shards; ++s) {
      parts[s] = process_shard(table, towers, days, s, n_shards, opts.night);
    }
  } else {
    std::vector<std::future<ShardAggregate>> futures;
    futures.reserve(n_shards);
    for (size_t s = 0; s < n_shards; ++s) {
      futures.push_back(std::async(std::launch::async, [&, s] {
        return process_shard(table, towers, days, s, n_shards, opts.night);
      }));
    }
    for (size_t s = 0; s < n_shards; ++s) {
      parts[s] = futures[s].get();
    }
  }

  ShardAggregate merged = ShardAggregate::merge(std::move(parts));

  AggregateResult result;
  result.presence = merged.presence_frames();
  result.home = merged.home_frames();
  result.details = merged.details();
  uint64_t with_home = 0;
  for (const HomeDistanceFrame& f : result.home) {
    for (const auto& [cell, stat] : f.cells) with_home += static_cast<uint64_t>(stat.n);
  }
  result.phones_total = 0;
  for (const auto& day : days) {
    if (!day.events.empty()) ++result.phones_total;
  }
  result.phones_with_home = with_home;
  return result;
}

void write_grid_hourly(const std::string& path, const std::vector<GridFrame>& frames) {
  csv::Writer w(path, "date,hour,cx,cy,n_phones");
  std::string row;
  for (const GridFrame& frame : frames) {
    for (const auto& [cell, count] : frame.cells) {
      row.clear();
      row += frame.bucket.date.str();
      row += ',';
      csv::append_int(row, frame.bucket.hour);
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

void write_home_distance(const std::string& path, const std::vector<HomeDistanceFrame>& frames) {
  csv::Writer w(path, "date,ox,oy,mean_max_dist_m,n_phones");
  std::string row;
  for (const HomeDistanceFrame& frame : frames) {
    for (const auto& [cell, stat] : frame.cells) {
      row.clear();
      row += frame.date.str();
      row += ',';
      csv::append_fixed(row, cell.cx, 1);
      row += ',';
      csv::append_fixed(row, cell.cy, 1);
      row += ',';
      csv::append_fixed(row, stat.mean_max_dist_m, 1);
      row += ',';
      csv::append_int(row, stat.n);
      w.raw_row(row);
    }
  }
  w.close();
}

void write_distance_detail(const std::string& path, const std::vector<DistanceDetail>& details) {
  csv::Writer w(path, "date,phone_id,ox,oy,max_dist_m");
  std::string row;
  for (const DistanceDetail& d : details) {
    row.clear();
    row += d.date.str();
    row += ',';
    row += d.phone_id;
    row += ',';
    csv::append_fixed(row, d.origin_cell.cx, 1);
    row += ',';
    csv::append_fixed(row, d.origin_cell.cy, 1);
    row += ',';
    csv::append_g17(row, d.max_dist_m);
    w.raw_row(row);
  }
  w.close();
}

std::vector<GridFrame> read_grid_hourly(const std::string& path) {
  csv::Reader r(path, {"date", "hour", "cx", "cy", "n_phones"});
  std::map<geo::HourBucket, std::map<geo::KmCell, int64_t>> sorted;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    const geo::HourBucket bucket{geo::CivilDate::parse(f[0]),
                                 static_cast<int>(r.field_int(f[1], "hour"))};
    const geo::KmCell cell{r.field_double(f[2], "cx"), r.field_double(f[3], "cy")};
    sorted[bucket][cell] = r.field_int(f[4], "n_phones");
  }
  std::vector<GridFrame> frames;
  for (auto& [bucket, cells] : sorted) frames.push_back({bucket, std::move(cells)});
  return frames;
}

std::vector<HomeDistanceFrame> read_home_distance(const std::string& path) {
  csv::Reader r(path, {"date", "ox", "oy", "mean_max_dist_m", "n_phones"});
  std::map<geo::CivilDate, std::map<geo::KmCell, HomeCellStat>> sorted;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    const geo::CivilDate date = geo::CivilDate::parse(f[0]);
    const geo::KmCell cell{r.field_double(f[1], "ox"), r.field_double(f[2], "oy")};
    sorted[date][cell] = {r.field_double(f[3], "mean_max_dist_m"), r.field_int(f[4], "n_phones")};
  }
  std::vector<HomeDistanceFrame> frames;
  for (auto& [date, cells] : sorted) frames.push_back({date, std::move(cells)});
  return frames;
}

std::vector<DistanceDetail> read_distance_detail(const std::string& path) {
  csv::Reader r(path, {"date", "phone_id", "ox", "oy", "max_dist_m"});
  std::vector<DistanceDetail> out;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    out.push_back({geo::CivilDate::parse(f[0]),
                   std::string(f[1]),
                   {r.field_double(f[2], "ox"), r.field_double(f[3], "oy")},
                   r.field_double(f[4], "max_dist_m")});
  }
  return out;
}

}  // namespace mobiscope::grid
