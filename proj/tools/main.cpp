#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mobiscope/csv.hpp"
#include "mobiscope/data_io.hpp"
#include "mobiscope/demographics.hpp"
#include "mobiscope/did.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/gridagg.hpp"
#include "mobiscope/lisa.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/pipeline.hpp"
#include "mobiscope/synth.hpp"
#include "mobiscope/toml_lite.hpp"

namespace {

using namespace mobiscope;

// MOBISCOPE_THREADS caps every parallelism knob, whatever the flags say.
int thread_cap(int requested) {
  const char* env = std::getenv("MOBISCOPE_THREADS");
  if (env == nullptr || *env == '\0') return requested;
  char* end = nullptr;
  const long cap = std::strtol(env, &end, 10);
  if (end == nullptr || *end != '\0' || cap < 1) {
    throw Error::config("MOBISCOPE_THREADS must be a positive integer");
  }
  return static_cast<int>(std::min(static_cast<long>(requested), cap));
}

geo::CivilDate parse_date_flag(const std::string& s, const char* flag) {
  try {
    return geo::CivilDate::parse(s);
  } catch (const Error& e) {
    throw Error::config(std::string(flag) + ": " + e.what());
  }
}

struct EventInputs {
  std::string events;
  std::string towers;
  bool loose_granularity = false;
  bool no_24h_cap = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--events", events, "events.csv path")->required();
    cmd->add_option("--towers", towers, "towers.csv path")->required();
    cmd->add_flag("--loose-granularity", loose_granularity,
                  "accept timestamps off the 5-minute grid");
    cmd->add_flag("--no-24h-cap", no_24h_cap,
                  "drop phones spanning more than 24h instead of failing");
  }

  io::ReadEventsOptions read_options() const { return {!loose_granularity, !no_24h_cap}; }
};

struct NightFlags {
  int start_min = mobility::NightWindow{}.start_min;
  int end_min = mobility::NightWindow{}.end_exclusive();

  void add_to(CLI::App* cmd) {
    cmd->add_option("--night-start-min", start_min,
                    "night window start, minutes after midnight");
    cmd->add_option("--night-end-min", end_min,
                    "night window end (exclusive), minutes after midnight");
  }

  mobility::NightWindow window() const { return {start_min, end_min - 5}; }
};

void cmd_ingest_check(const EventInputs& in, const std::string& population,
                      const std::string& jobs) {
  const io::TowerRegistry towers = io::read_towers(in.towers);
  const io::EventTable table = io::read_events(in.events, towers, in.read_options());
  std::printf("towers: %zu\n", towers.size());
  std::printf("events: %zu (dropped: unknown tower %llu, span violations %llu)\n",
              table.events.size(), static_cast<unsigned long long>(table.dropped_unknown_tower),
              static_cast<unsigned long long>(table.dropped_span_violation));
  std::printf("phones: %zu\n", table.phone_ids.size());
  if (!population.empty()) {
    std::printf("population: %zu persons\n", io::read_population(population).size());
  }
  if (!jobs.empty()) {
    std::printf("jobs: %zu\n", io::read_jobs(jobs).size());
  }
  std::printf("ok\n");
}

void cmd_homes(const EventInputs& in, const NightFlags& night, const std::string& out) {
  const io::TowerRegistry towers = io::read_towers(in.towers);
  const io::EventTable table = io::read_events(in.events, towers, in.read_options());
  const auto days = mobility::group_phone_days(table);

  csv::Writer w(out, "date,phone_id,ox,oy,cx,cy");
  std::string row;
  size_t with_home = 0, total = 0;
  for (const auto& day : days) {
    if (day.events.empty()) continue;
    ++total;
    const auto estimates = mobility::halfway_positions(day, towers);
    const auto home = mobility::infer_home_from_estimates(day.phone, estimates, night.window());
    if (!home) continue;
    ++with_home;
    row.clear();
    row += geo::Timestamp{day.events.front().ts_min}.date().str();
    row += ',';
    row += table.phone_ids[day.phone];
    row += ',';
    csv::append_fixed(row, home->origin.x, 1);
    row += ',';
    csv::append_fixed(row, home->origin.y, 1);
    row += ',';
    csv::append_fixed(row, home->origin_cell.cx, 1);
    row += ',';
    csv::append_fixed(row, home->origin_cell.cy, 1);
    w.raw_row(row);
  }
  w.close();
  std::printf("homes: %zu of %zu phone-days\n", with_home, total);
}

void cmd_aggregate(const EventInputs& in, const NightFlags& night, const std::string& out_dir,
                   int shards, int threads) {
  const io::TowerRegistry towers = io::read_towers(in.towers);
  const io::EventTable table = io::read_events(in.events, towers, in.read_options());

  grid::AggregateOptions opts;
  opts.night = night.window();
  opts.shards = shards;
  opts.threads = thread_cap(threads);
  opts.strict_granularity = !in.loose_granularity;
  const grid::AggregateResult result = grid::aggregate_events(table, towers, opts);

  std::filesystem::create_directories(out_dir);
  grid::write_grid_hourly(out_dir + "/grid_hourly.csv", result.presence);
  grid::write_home_distance(out_dir + "/home_distance.csv", result.home);
  grid::write_distance_detail(out_dir + "/distance_detail.csv", result.details);
  std::printf("aggregated %zu events from %llu phones (%llu with home) into %s\n",
              table.events.size(), static_cast<unsigned long long>(result.phones_total),
              static_cast<unsigned long long>(result.phones_with_home), out_dir.c_str());
}

void cmd_did(const std::string& grid_hourly, int hour, const std::string& treated_pre,
             const std::string& treated_post, const std::string& control_pre,
             const std::string& control_post, const std::string& out) {
  did::DateQuad quad;
  quad.treated_pre = parse_date_flag(treated_pre, "--treated-pre");
  quad.treated_post = parse_date_flag(treated_post, "--treated-post");
  quad.control_pre = parse_date_flag(control_pre, "--control-pre");
  quad.control_post = parse_date_flag(control_post, "--control-post");
  quad.validate();

  const auto frames = grid::read_grid_hourly(grid_hourly);
  auto frame_at = [&](geo::CivilDate d) -> grid::GridFrame {
    for (const auto& f : frames) {
      if (f.bucket.date == d && f.bucket.hour == hour) return f;
    }
    return {{d, hour}, {}};
  };
  const did::DidGrid dgrid =
      did::did_grid(frame_at(quad.treated_post), frame_at(quad.treated_pre),
                    frame_at(quad.control_post), frame_at(quad.control_pre));
  did::write_did_grid(out, dgrid);
  std::printf("did grid: %zu cells\n", dgrid.size());
}

void cmd_lisa(const std::string& did_grid, const lisa::LisaConfig& cfg, const std::string& out) {
  const did::DidGrid dgrid = did::read_did_grid(did_grid);
  std::map<geo::KmCell, double> values;
  for (const auto& [cell, dc] : dgrid) values[cell] = dc.did;
  const lisa::LisaResult result = lisa::run_lisa(values, cfg);
  lisa::write_lisa(out, result);

  std::printf("lisa: %zu cells", result.cells.size());
  for (const auto cls : {lisa::LisaClass::HH, lisa::LisaClass::LL, lisa::LisaClass::HL,
                         lisa::LisaClass::LH, lisa::LisaClass::ISOLATED}) {
    const std::string name(lisa::to_string(cls));
    std::printf(" %s=%zu", name.c_str(), result.cells_in_class(cls).size());
  }
  std::printf("%s\n", result.degenerate ? " (degenerate: zero variance)" : "");
}

void cmd_demographics(const std::string& population_path, const std::string& home_distance,
                      int k, const demo::PovertyConfig& poverty, const std::string& out) {
  const auto population = io::read_population(population_path);
  const auto frames = grid::read_home_distance(home_distance);
  std::set<geo::KmCell> cell_set;
  for (const auto& f : frames) {
    for (const auto& [cell, stat] : f.cells) cell_set.insert(cell);
  }
  const std::vector<geo::KmCell> cells(cell_set.begin(), cell_set.end());
  const auto specs = demo::attribute_predicates(population, k, poverty);
  const auto contexts = demo::context_for_cells(cells, population, specs);
  demo::write_demographics(out, contexts);

  size_t covered = 0;
  for (const auto& c : contexts) covered += c.covered ? 1 : 0;
  std::printf("demographics: %zu cells (%zu covered)\n", contexts.size(), covered);
}

void cmd_synth(const std::string& scenario_path, const std::string& out_dir) {
  synth::Scenario sc;
  if (scenario_path.empty()) {
    sc.dates = synth::Scenario::default_dates();
  } else {
    sc = synth::Scenario::from_toml(toml::Table::parse_file(scenario_path));
  }
  synth::generate_files(sc, out_dir);
  std::printf("synthetic world: %d agents over %zu dates -> %s\n", sc.n_agents, sc.dates.size(),
              out_dir.c_str());
}

void cmd_run(const std::string& config_path, const std::string& out_dir_override,
             int shards_override, int threads_override) {
  pipeline::RunConfig cfg = pipeline::RunConfig::from_toml(toml::Table::parse_file(config_path));
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (shards_override > 0) cfg.shards = shards_override;
  if (threads_override > 0) cfg.threads = threads_override;
  cfg.threads = thread_cap(cfg.threads);

  const pipeline::RunOutputs res = pipeline::run_pipeline(cfg);
  std::printf("pipeline ok: %llu events, %llu phones (%llu with home)\n",
              static_cast<unsigned long long>(res.events_ingested),
              static_cast<unsigned long long>(res.phones_total),
              static_cast<unsigned long long>(res.phones_with_home));
  if (res.aggregate_seconds > 0.0) {
    std::printf("aggregate stage: %.2fs (%.0f events/s)\n", res.aggregate_seconds,
                static_cast<double>(res.events_ingested) / res.aggregate_seconds);
  }
  std::printf("outputs: %s (%zu files)\n", cfg.out_dir.c_str(), res.files.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mobility analytics over anonymized cell-phone events"};
  app.require_subcommand(1);

  EventInputs check_in;
  std::string check_population, check_jobs;
  auto* check = app.add_subcommand("ingest-check", "validate input files and print counts");
  check_in.add_to(check);
  check->add_option("--population", check_population, "population.csv path");
  check->add_option("--jobs", check_jobs, "jobs.csv path");
  check->callback([&] { cmd_ingest_check(check_in, check_population, check_jobs); });

  EventInputs homes_in;
  NightFlags homes_night;
  std::string homes_out = "homes.csv";
  auto* homes = app.add_subcommand("homes", "infer per-phone home locations");
  homes_in.add_to(homes);
  homes_night.add_to(homes);
  homes->add_option("--out", homes_out, "output csv path");
  homes->callback([&] { cmd_homes(homes_in, homes_night, homes_out); });

  EventInputs agg_in;
  NightFlags agg_night;
  std::string agg_out_dir = "out";
  int agg_shards = 1, agg_threads = 1;
  auto* agg = app.add_subcommand("aggregate", "hourly grid counts and home distances");
  agg_in.add_to(agg);
  agg_night.add_to(agg);
  agg->add_option("--out-dir", agg_out_dir, "output directory");
  agg->add_option("--shards", agg_shards, "phone partitions")->check(CLI::PositiveNumber);
  agg->add_option("--threads", agg_threads, "worker threads")->check(CLI::PositiveNumber);
  agg->callback([&] { cmd_aggregate(agg_in, agg_night, agg_out_dir, agg_shards, agg_threads); });

  std::string did_grid_hourly, did_out = "did_grid.csv";
  int did_hour = 10;
  did::DateQuad default_quad;
  std::string did_tpre = default_quad.treated_pre.str();
  std::string did_tpost = default_quad.treated_post.str();
  std::string did_cpre = default_quad.control_pre.str();
  std::string did_cpost = default_quad.control_post.str();
  auto* didc = app.add_subcommand("did", "per-cell difference-in-differences");
  didc->add_option("--grid-hourly", did_grid_hourly, "grid_hourly.csv path")->required();
  didc->add_option("--hour", did_hour, "observation hour (0-23)");
  didc->add_option("--treated-pre", did_tpre, "treated pre date (YYYY-MM-DD)");
  didc->add_option("--treated-post", did_tpost, "treated post date");
  didc->add_option("--control-pre", did_cpre, "control pre date");
  didc->add_option("--control-post", did_cpost, "control post date");
  didc->add_option("--out", did_out, "output csv path");
  didc->callback(
      [&] { cmd_did(did_grid_hourly, did_hour, did_tpre, did_tpost, did_cpre, did_cpost, did_out); });

  std::string lisa_grid, lisa_out = "lisa.csv";
  lisa::LisaConfig lisa_cfg;
  bool lisa_no_std = false;
  auto* lisac = app.add_subcommand("lisa", "local spatial autocorrelation on the did grid");
  lisac->add_option("--did-grid", lisa_grid, "did_grid.csv path")->required();
  lisac->add_option("--max-dist", lisa_cfg.max_dist_m, "neighbor cutoff in meters");
  lisac->add_option("--permutations", lisa_cfg.permutations, "conditional permutation rounds");
  lisac->add_option("--alpha", lisa_cfg.alpha, "significance level");
  lisac->add_option("--seed", lisa_cfg.seed, "permutation seed");
  lisac->add_flag("--no-row-standardize", lisa_no_std, "keep raw 1/d weights");
  lisac->add_option("--out", lisa_out, "output csv path");
  lisac->callback([&] {
    lisa_cfg.row_standardize = !lisa_no_std;
    cmd_lisa(lisa_grid, lisa_cfg, lisa_out);
  });

  std::string demo_population, demo_home, demo_out = "demographics.csv";
  int demo_k = 100;
  demo::PovertyConfig demo_poverty;
  std::string demo_stat = "mean";
  auto* democ = app.add_subcommand("demographics", "k-NN attribute shares per home cell");
  democ->add_option("--population", demo_population, "population.csv path")->required();
  democ->add_option("--home-distance", demo_home, "home_distance.csv path")->required();
  democ->add_option("--k", demo_k, "neighbors per share")->check(CLI::PositiveNumber);
  democ->add_option("--poor-stat", demo_stat, "poverty reference: mean or median")
      ->check(CLI::IsMember({"mean", "median"}));
  democ->add_option("--poor-ref-min", demo_poverty.ref_age_min, "poverty reference age minimum");
  democ->add_option("--poor-ref-max", demo_poverty.ref_age_max, "poverty reference age maximum");
  democ->add_option("--out", demo_out, "output csv path");
  democ->callback([&] {
    demo_poverty.stat = demo_stat == "median" ? demo::PovertyStat::Median : demo::PovertyStat::Mean;
    cmd_demographics(demo_population, demo_home, demo_k, demo_poverty, demo_out);
  });

  std::string report_dir;
  auto* reportc = app.add_subcommand("report", "rebuild summary tables from pipeline outputs");
  reportc->add_option("--dir", report_dir, "pipeline output directory")->required();
  reportc->callback([&] { pipeline::report(report_dir); });

  std::string synth_scenario, synth_out;
  auto* synthc = app.add_subcommand("synth", "generate a synthetic world with ground truth");
  synthc->add_option("--scenario", synth_scenario, "scenario toml (defaults when omitted)");
  synthc->add_option("--out", synth_out, "output directory")->required();
  synthc->callback([&] { cmd_synth(synth_scenario, synth_out); });

  std::string run_config, run_out_dir;
  int run_shards = 0, run_threads = 0;
  auto* runc = app.add_subcommand("run", "full pipeline from a config file");
  runc->add_option("--config", run_config, "run config toml")->required();
  runc->add_option("--out-dir", run_out_dir, "override [run].out_dir");
  runc->add_option("--shards", run_shards, "override [run].shards")->check(CLI::PositiveNumber);
  runc->add_option("--threads", run_threads, "override [run].threads")->check(CLI::PositiveNumber);
  runc->callback([&] { cmd_run(run_config, run_out_dir, run_shards, run_threads); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const mobiscope::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
  return 0;
}
