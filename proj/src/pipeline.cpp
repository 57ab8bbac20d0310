#include "mobiscope/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "mobiscope/csv.hpp"
#include "mobiscope/data_io.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/gridagg.hpp"

namespace mobiscope::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename F>
void stage(const char* name, F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Internal, std::string(name) + ": " + e.what());
  }
}

void append_u64(std::string& s, uint64_t v) {
  char buf[24];
  const int n = std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
  s.append(buf, static_cast<size_t>(n));
}

grid::HomeDistanceFrame frame_for(const std::vector<grid::HomeDistanceFrame>& frames,
                                  geo::CivilDate date) {
  for (const auto& f : frames) {
    if (f.date == date) return f;
  }
  return {date, {}};
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

void write_job_access(const std::string& path, const std::map<geo::KmCell, double>& dist) {
  csv::Writer w(path, "cx,cy,dist_m");
  std::string row;
  for (const auto& [cell, d] : dist) {
    row.clear();
    csv::append_fixed(row, cell.cx, 1);
    row += ',';
    csv::append_fixed(row, cell.cy, 1);
    row += ',';
    csv::append_fixed(row, d, 1);
    w.raw_row(row);
  }
  w.close();
}

std::map<geo::KmCell, double> read_job_access(const std::string& path) {
  csv::Reader r(path, {"cx", "cy", "dist_m"});
  std::map<geo::KmCell, double> out;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    out[{r.field_double(f[0], "cx"), r.field_double(f[1], "cy")}] =
        r.field_double(f[2], "dist_m");
  }
  return out;
}

struct DeriveCounts {
  size_t summary = 0;
  size_t histogram = 0;
  size_t lisa_summary = 0;
};

// Rebuilds the three derived summary tables from the files in dir. Working
// from the files (not in-memory values) makes `run` and a later `report`
// agree byte for byte.
DeriveCounts derive_tables(const std::string& dir, const did::DateQuad& quad,
                           std::vector<std::string>* track) {
  auto need = [&](const char* name) {
    std::string p = dir + "/" + name;
    if (!std::filesystem::exists(p)) throw Error::data("missing required file '" + p + "'");
    return p;
  };
  const auto home = grid::read_home_distance(need("home_distance.csv"));
  const auto details = grid::read_distance_detail(need("distance_detail.csv"));
  const auto contexts = demo::read_demographics(need("demographics.csv"));
  const auto dgrid = did::read_did_grid(need("did_grid.csv"));
  const auto lres = lisa::read_lisa(need("lisa.csv"));

  auto out_path = [&](const char* name) {
    std::string p = dir + "/" + name;
    if (track) track->push_back(p);
    return p;
  };
  DeriveCounts counts;

  // summary: the overall column, then one per p90 attribute mask
  {
    const grid::HomeDistanceFrame post_t = frame_for(home, quad.treated_post);
    const grid::HomeDistanceFrame pre_t = frame_for(home, quad.treated_pre);
    const grid::HomeDistanceFrame post_c = frame_for(home, quad.control_post);
    const grid::HomeDistanceFrame pre_c = frame_for(home, quad.control_pre);

    did::SubgroupMask full{"all", {}};
    for (const auto* f : {&post_t, &pre_t, &post_c, &pre_c}) {
      for (const auto& [cell, stat] : f->cells) full.cells.insert(cell);
    }
    std::array<did::SubgroupDid, 5> cols;
    cols[0] = did::subgroup_did(post_t, pre_t, post_c, pre_c, full);
    for (size_t i = 0; i < demo::kAttributeNames.size(); ++i) {
      const auto mask = demo::p90_mask(contexts, i, std::string(demo::kAttributeNames[i]));
      cols[i + 1] = did::subgroup_did(post_t, pre_t, post_c, pre_c, mask);
    }

    csv::Writer w(out_path("summary.csv"), "metric,all,minority,high_edu,poor,risk70");
    std::string row;
    auto fixed_row = [&](const char* metric, auto value, int prec) {
      row.clear();
      row += metric;
      for (const auto& c : cols) {
        row += ',';
        csv::append_fixed(row, value(c), prec);
      }
      w.raw_row(row);
      ++counts.summary;
    };
    fixed_row("baseline_m", [](const did::SubgroupDid& c) { return c.mean[1]; }, 1);
    fixed_row("post_m", [](const did::SubgroupDid& c) { return c.mean[0]; }, 1);
    fixed_row("did_m", [](const did::SubgroupDid& c) { return c.change.did; }, 1);
    fixed_row(
        "pct_change",
        [](const did::SubgroupDid& c) { return c.change.pct ? *c.change.pct : kNaN; }, 4);
    row = "n_obs";
    for (const auto& c : cols) {
      row += ',';
      csv::append_int(row, c.n_obs);
    }
    w.raw_row(row);
    ++counts.summary;
    w.close();
  }

  // histogram: per observed date, the six distance-bin shares
  {
    std::map<geo::CivilDate, std::vector<double>> by_date;
    for (const auto& d : details) by_date[d.date].push_back(d.max_dist_m);

    csv::Writer w(out_path("histogram.csv"), "date,bin_low_m,bin_high_m,share");
    std::string row;
    for (const auto& [date, dists] : by_date) {
      const auto shares = did::distance_histogram(dists).shares();
      for (size_t b = 0; b < did::kHistogramBins; ++b) {
        row.clear();
        row += date.str();
        row += ',';
        csv::append_int(row, b == 0 ? 0 : static_cast<int64_t>(did::kHistogramEdges[b - 1]));
        row += ',';
        if (b < did::kHistogramEdges.size()) {
          csv::append_int(row, static_cast<int64_t>(did::kHistogramEdges[b]));
        } else {
          row += "inf";
        }
        row += ',';
        csv::append_fixed(row, shares[b], 6);
        w.raw_row(row);
        ++counts.histogram;
      }
    }
    w.close();
  }

  // lisa_summary: hot and cold aggregate changes, with median job access
  // when the run produced a job_access table
  {
    std::set<geo::KmCell> hh, ll;
    for (const auto& c : lres.cells_in_class(lisa::LisaClass::HH)) hh.insert(c);
    for (const auto& c : lres.cells_in_class(lisa::LisaClass::LL)) ll.insert(c);
    const auto hot = did::hotcold_pct_change(dgrid, hh, ll);

    std::optional<double> med_hh, med_ll;
    const std::string ja = dir + "/job_access.csv";
    if (std::filesystem::exists(ja)) {
      const auto dist = read_job_access(ja);
      std::vector<double> dh, dl;
      for (const auto& c : hh) {
        if (auto it = dist.find(c); it != dist.end()) dh.push_back(it->second);
      }
      for (const auto& c : ll) {
        if (auto it = dist.find(c); it != dist.end()) dl.push_back(it->second);
      }
      if (!dh.empty()) med_hh = median_of(std::move(dh));
      if (!dl.empty()) med_ll = median_of(std::move(dl));
    }

    csv::Writer w(out_path("lisa_summary.csv"),
                  "class,n_cells,did_sum,baseline_sum,pct_change,median_dist_to_jobs_m");
    std::string row;
    auto class_row = [&](const char* name, int64_t n, double did_sum, double baseline_sum,
                         std::optional<double> pct, std::optional<double> med) {
      row.clear();
      row += name;
      row += ',';
      csv::append_int(row, n);
      row += ',';
      csv::append_fixed(row, did_sum, 1);
      row += ',';
      csv::append_fixed(row, baseline_sum, 1);
      row += ',';
      csv::append_fixed(row, pct ? *pct : kNaN, 4);
      row += ',';
      csv::append_fixed(row, med ? *med : kNaN, 1);
      w.raw_row(row);
      ++counts.lisa_summary;
    };
    class_row("HH", hot.n_hh, hot.did_sum_hh, hot.baseline_sum_hh, hot.pct_hh, med_hh);
    class_row("LL", hot.n_ll, hot.did_sum_ll, hot.baseline_sum_ll, hot.pct_ll, med_ll);
    w.close();
  }
  return counts;
}

}  // namespace

RunConfig RunConfig::from_toml(const toml::Table& t) {
  RunConfig c;
  c.events_path = t.get_string("input.events", c.events_path);
  c.towers_path = t.get_string("input.towers", c.towers_path);
  c.population_path = t.get_string("input.population", c.population_path);
  c.jobs_path = t.get_string("input.jobs", c.jobs_path);

  auto date = [&](const char* key, geo::CivilDate fallback) {
    return t.has(key) ? geo::CivilDate::parse(t.get_string(key)) : fallback;
  };
  c.quad.treated_pre = date("dates.treated_pre", c.quad.treated_pre);
  c.quad.treated_post = date("dates.treated_post", c.quad.treated_post);
  c.quad.control_pre = date("dates.control_pre", c.quad.control_pre);
  c.quad.control_post = date("dates.control_post", c.quad.control_post);

  c.hour = static_cast<int>(t.get_int("analysis.hour", c.hour));
  c.night.start_min = static_cast<int>(t.get_int("analysis.night_start_min", c.night.start_min));
  const int night_end =
      static_cast<int>(t.get_int("analysis.night_end_min", c.night.end_exclusive()));
  c.night.last_slot_min = night_end - 5;
  c.lisa.max_dist_m = t.get_double("analysis.lisa_max_dist_m", c.lisa.max_dist_m);
  c.lisa.row_standardize = t.get_bool("analysis.lisa_row_standardize", c.lisa.row_standardize);
  c.lisa.permutations =
      static_cast<int>(t.get_int("analysis.lisa_permutations", c.lisa.permutations));
  c.lisa.alpha = t.get_double("analysis.lisa_alpha", c.lisa.alpha);
  c.lisa.seed = static_cast<uint64_t>(t.get_int("analysis.lisa_seed", 0));
  c.knn_k = static_cast<int>(t.get_int("analysis.knn_k", c.knn_k));
  const std::string stat = t.get_string("analysis.poor_stat", "mean");
  if (stat == "mean") {
    c.poverty.stat = demo::PovertyStat::Mean;
  } else if (stat == "median") {
    c.poverty.stat = demo::PovertyStat::Median;
  } else {
    throw Error::config("analysis.poor_stat must be 'mean' or 'median'");
  }
  c.poverty.ref_age_min =
      static_cast<int>(t.get_int("analysis.poor_ref_age_min", c.poverty.ref_age_min));
  c.poverty.ref_age_max =
      static_cast<int>(t.get_int("analysis.poor_ref_age_max", c.poverty.ref_age_max));
  c.jobs_k = static_cast<int>(t.get_int("analysis.jobs_k", c.jobs_k));

  c.out_dir = t.get_string("run.out_dir", c.out_dir);
  c.shards = static_cast<int>(t.get_int("run.shards", c.shards));
  c.threads = static_cast<int>(t.get_int("run.threads", c.threads));
  c.strict_granularity = t.get_bool("run.strict_granularity", c.strict_granularity);
  c.enforce_24h = t.get_bool("run.enforce_24h", c.enforce_24h);
  return c;
}

void RunConfig::validate() const {
  if (events_path.empty() || towers_path.empty() || population_path.empty()) {
    throw Error::config("events, towers and population input paths are required");
  }
  quad.validate();
  if (hour < 0 || hour > 23) throw Error::config("analysis hour must be in [0, 23]");
  if (night.start_min < 0 || night.start_min % 5 != 0 || night.last_slot_min % 5 != 0 ||
      night.last_slot_min < night.start_min || night.end_exclusive() > 1440) {
    throw Error::config("night window must be 5-minute aligned and lie within one day");
  }
  if (lisa.max_dist_m <= 0.0) throw Error::config("lisa max distance must be positive");
  if (lisa.permutations < 1) throw Error::config("lisa permutations must be >= 1");
  if (!(lisa.alpha > 0.0 && lisa.alpha < 1.0)) throw Error::config("lisa alpha must be in (0,1)");
  if (knn_k < 1) throw Error::config("knn_k must be >= 1");
  if (jobs_k < 1) throw Error::config("jobs_k must be >= 1");
  if (poverty.ref_age_min < 0 || poverty.ref_age_max < poverty.ref_age_min) {
    throw Error::config("poverty reference ages must satisfy 0 <= min <= max");
  }
  if (out_dir.empty()) throw Error::config("out_dir is required");
  if (shards < 1) throw Error::config("shards must be >= 1");
  if (threads < 1) throw Error::config("threads must be >= 1");
}

std::string RunConfig::canonical() const {
  std::string s;
  auto kv = [&](const char* k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  };
  auto kvi = [&](const char* k, int64_t v) {
    std::string t;
    csv::append_int(t, v);
    kv(k, t);
  };
  auto kvd = [&](const char* k, double v) {
    std::string t;
    csv::append_g17(t, v);
    kv(k, t);
  };
  kv("events", events_path);
  kv("towers", towers_path);
  kv("population", population_path);
  kv("jobs", jobs_path);
  kv("treated_pre", quad.treated_pre.str());
  kv("treated_post", quad.treated_post.str());
  kv("control_pre", quad.control_pre.str());
  kv("control_post", quad.control_post.str());
  kvi("hour", hour);
  kvi("night_start_min", night.start_min);
  kvi("night_end_min", night.end_exclusive());
  kvd("lisa_max_dist_m", lisa.max_dist_m);
  kvi("lisa_row_standardize", lisa.row_standardize ? 1 : 0);
  kvi("lisa_permutations", lisa.permutations);
  kvd("lisa_alpha", lisa.alpha);
  std::string seed;
  append_u64(seed, lisa.seed);
  kv("lisa_seed", seed);
  kvi("knn_k", knn_k);
  kv("poor_stat", poverty.stat == demo::PovertyStat::Mean ? "mean" : "median");
  kvi("poor_ref_age_min", poverty.ref_age_min);
  kvi("poor_ref_age_max", poverty.ref_age_max);
  kvi("jobs_k", jobs_k);
  kvi("strict_granularity", strict_granularity ? 1 : 0);
  kvi("enforce_24h", enforce_24h ? 1 : 0);
  return s;
}

std::string config_hash(const std::string& canonical) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunOutputs run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  RunOutputs out;
  std::vector<std::string> written;
  std::vector<std::pair<std::string, size_t>> file_rows;  // basename -> data rows
  auto track = [&](const char* name) {
    written.push_back(cfg.out_dir + "/" + name);
    return written.back();
  };

  try {
    io::TowerRegistry towers;
    io::EventTable table;
    std::vector<io::PersonRecord> population;
    std::vector<io::JobSite> jobs;
    stage("ingest", [&] {
      towers = io::read_towers(cfg.towers_path);
      table = io::read_events(cfg.events_path, towers,
                              {cfg.strict_granularity, cfg.enforce_24h});
      population = io::read_population(cfg.population_path);
      if (!cfg.jobs_path.empty()) jobs = io::read_jobs(cfg.jobs_path);
    });
    out.events_ingested = table.events.size();
    out.dropped_unknown_tower = table.dropped_unknown_tower;

    grid::AggregateResult agg;
    stage("aggregate", [&] {
      const auto t0 = std::chrono::steady_clock::now();
      agg = grid::aggregate_events(
          table, towers, {cfg.night, cfg.shards, cfg.threads, cfg.strict_granularity});
      out.aggregate_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      grid::write_grid_hourly(track("grid_hourly.csv"), agg.presence);
      grid::write_home_distance(track("home_distance.csv"), agg.home);
      grid::write_distance_detail(track("distance_detail.csv"), agg.details);
    });
    out.phones_total = agg.phones_total;
    out.phones_with_home = agg.phones_with_home;
    size_t presence_rows = 0;
    for (const auto& f : agg.presence) presence_rows += f.cells.size();
    size_t home_rows = 0;
    for (const auto& f : agg.home) home_rows += f.cells.size();
    file_rows.emplace_back("grid_hourly.csv", presence_rows);
    file_rows.emplace_back("home_distance.csv", home_rows);
    file_rows.emplace_back("distance_detail.csv", agg.details.size());

    did::DidGrid dgrid;
    stage("did", [&] {
      auto frame_at = [&](geo::CivilDate d) -> grid::GridFrame {
        for (const auto& f : agg.presence) {
          if (f.bucket.date == d && f.bucket.hour == cfg.hour) return f;
        }
        return {{d, cfg.hour}, {}};
      };
      dgrid = did::did_grid(frame_at(cfg.quad.treated_post), frame_at(cfg.quad.treated_pre),
                            frame_at(cfg.quad.control_post), frame_at(cfg.quad.control_pre));
      did::write_did_grid(track("did_grid.csv"), dgrid);
    });
    file_rows.emplace_back("did_grid.csv", dgrid.size());

    lisa::LisaResult lres;
    stage("lisa", [&] {
      std::map<geo::KmCell, double> values;
      for (const auto& [cell, dc] : dgrid) values[cell] = dc.did;
      lres = lisa::run_lisa(values, cfg.lisa);
      lisa::write_lisa(track("lisa.csv"), lres);
    });
    file_rows.emplace_back("lisa.csv", lres.cells.size());

    stage("demographics", [&] {
      std::set<geo::KmCell> home_cells;
      for (const auto& d : agg.details) home_cells.insert(d.origin_cell);
      const std::vector<geo::KmCell> cells(home_cells.begin(), home_cells.end());
      const auto specs = demo::attribute_predicates(population, cfg.knn_k, cfg.poverty);
      const auto contexts = demo::context_for_cells(cells, population, specs);
      demo::write_demographics(track("demographics.csv"), contexts);
      file_rows.emplace_back("demographics.csv", contexts.size());

      if (!cfg.jobs_path.empty()) {
        std::vector<geo::KmCell> grid_cells;
        grid_cells.reserve(dgrid.size());
        for (const auto& [cell, dc] : dgrid) grid_cells.push_back(cell);
        const auto dist = lisa::dist_to_k_jobs(grid_cells, jobs, cfg.jobs_k);
        write_job_access(track("job_access.csv"), dist);
        file_rows.emplace_back("job_access.csv", dist.size());
      }
    });

    stage("summary", [&] {
      const DeriveCounts counts = derive_tables(cfg.out_dir, cfg.quad, &written);
      file_rows.emplace_back("summary.csv", counts.summary);
      file_rows.emplace_back("histogram.csv", counts.histogram);
      file_rows.emplace_back("lisa_summary.csv", counts.lisa_summary);

      nlohmann::ordered_json manifest;
      manifest["config_hash"] = config_hash(cfg.canonical());
      nlohmann::ordered_json cj;
      cj["events"] = cfg.events_path;
      cj["towers"] = cfg.towers_path;
      cj["population"] = cfg.population_path;
      cj["jobs"] = cfg.jobs_path;
      cj["treated_pre"] = cfg.quad.treated_pre.str();
      cj["treated_post"] = cfg.quad.treated_post.str();
      cj["control_pre"] = cfg.quad.control_pre.str();
      cj["control_post"] = cfg.quad.control_post.str();
      cj["hour"] = cfg.hour;
      cj["night_start_min"] = cfg.night.start_min;
      cj["night_end_min"] = cfg.night.end_exclusive();
      cj["lisa_max_dist_m"] = cfg.lisa.max_dist_m;
      cj["lisa_row_standardize"] = cfg.lisa.row_standardize;
      cj["lisa_permutations"] = cfg.lisa.permutations;
      cj["lisa_alpha"] = cfg.lisa.alpha;
      cj["lisa_seed"] = cfg.lisa.seed;
      cj["knn_k"] = cfg.knn_k;
      cj["poor_stat"] = cfg.poverty.stat == demo::PovertyStat::Mean ? "mean" : "median";
      cj["poor_ref_age_min"] = cfg.poverty.ref_age_min;
      cj["poor_ref_age_max"] = cfg.poverty.ref_age_max;
      cj["jobs_k"] = cfg.jobs_k;
      cj["strict_granularity"] = cfg.strict_granularity;
      cj["enforce_24h"] = cfg.enforce_24h;
      manifest["config"] = cj;
      nlohmann::ordered_json files;
      for (const auto& [name, rows] : file_rows) files[name] = rows;
      manifest["files"] = files;

      const std::string path = track("manifest.json");
      std::ofstream mf(path, std::ios::binary);
      mf << manifest.dump(2) << '\n';
      if (!mf) throw Error::data("cannot write '" + path + "'");
    });
  } catch (...) {
    for (const std::string& p : written) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    throw;
  }

  out.files = std::move(written);
  return out;
}

void report(const std::string& out_dir) {
  const std::string mpath = out_dir + "/manifest.json";
  if (!std::filesystem::exists(mpath)) {
    throw Error::data("missing required file '" + mpath + "'");
  }
  did::DateQuad quad;
  try {
    std::ifstream in(mpath, std::ios::binary);
    nlohmann::json j;
    in >> j;
    const auto& cj = j.at("config");
    quad.treated_pre = geo::CivilDate::parse(cj.at("treated_pre").get<std::string>());
    quad.treated_post = geo::CivilDate::parse(cj.at("treated_post").get<std::string>());
    quad.control_pre = geo::CivilDate::parse(cj.at("control_pre").get<std::string>());
    quad.control_post = geo::CivilDate::parse(cj.at("control_post").get<std::string>());
  } catch (const Error& e) {
    throw Error(e.kind(), mpath + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error::data(mpath + ": " + e.what());
  }
  quad.validate();
  derive_tables(out_dir, quad, nullptr);
}

}  // namespace mobiscope::pipeline
