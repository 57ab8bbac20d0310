#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mobiscope/demographics.hpp"
#include "mobiscope/did.hpp"
#include "mobiscope/lisa.hpp"
#include "mobiscope/mobility.hpp"
#include "mobiscope/toml_lite.hpp"

namespace mobiscope::pipeline {

// Everything a full run needs. Shard and thread counts change only the
// wall clock: outputs (manifest included) are byte-identical without them.
struct RunConfig {
  std::string events_path;
  std::string towers_path;
  std::string population_path;
  std::string jobs_path;  // empty: skip the job-access table

  did::DateQuad quad;
  int hour = 10;  // day-population observation hour
  mobility::NightWindow night;

  lisa::LisaConfig lisa;
  int knn_k = 100;
  demo::PovertyConfig poverty;
  int jobs_k = 100;

  std::string out_dir = "out";
  int shards = 1;
  int threads = 1;
  bool strict_granularity = true;
  bool enforce_24h = true;

  static RunConfig from_toml(const toml::Table& t);
  void validate() const;

  // Deterministic key=value text of everything that affects output bytes;
  // out_dir, shards and threads are deliberately absent.
  std::string canonical() const;
};

// FNV-1a 64-bit over the canonical text, as 16 hex digits.
std::string config_hash(const std::string& canonical);

struct RunOutputs {
  std::vector<std::string> files;  // paths written, in write order
  uint64_t events_ingested = 0;
  uint64_t dropped_unknown_tower = 0;
  uint64_t phones_total = 0;
  uint64_t phones_with_home = 0;
  double aggregate_seconds = 0.0;  // stage wall time, for throughput logs
};

// ingest -> aggregate -> did -> lisa -> demographics -> summary. Any stage
// error is rethrown with the stage name prefixed, and every file written so
// far is removed.
RunOutputs run_pipeline(const RunConfig& cfg);

// Rebuilds summary.csv, histogram.csv and lisa_summary.csv from the tables
// already in out_dir (the run command ends with exactly this step, so a
// re-run of report is byte-identical). Missing inputs name the file.
void report(const std::string& out_dir);

}  // namespace mobiscope::pipeline
