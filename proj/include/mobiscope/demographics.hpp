#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mobiscope/data_io.hpp"
#include "mobiscope/did.hpp"
#include "mobiscope/geo.hpp"

namespace mobiscope::demo {

enum class Scope { Full, Adult };

struct AttributeSpec {
  std::string name;
  Scope scope = Scope::Full;
  int k = 100;
  std::function<bool(const io::PersonRecord&)> predicate;
};

// Fraction of the k nearest in-scope persons satisfying the predicate.
// Neighbors are ordered by (squared distance, input index); the index
// tiebreak makes equal-distance selections deterministic.
double knn_share(geo::PlanarPoint anchor, const std::vector<io::PersonRecord>& population,
                 const AttributeSpec& spec);

struct DemographicContext {
  geo::KmCell cell;
  std::vector<double> shares;  // parallel to the spec list; NaN when uncovered
  bool covered = true;
};

struct ContextOptions {
  // A cell whose nearest populated point is farther than this is flagged
  // uncovered instead of inheriting shares.
  double coverage_radius_m = std::numeric_limits<double>::infinity();
};

// Two steps: compute each attribute's share at every distinct populated
// point, then give each cell midpoint the shares of its nearest point
// (ties broken toward the lexicographically smallest point).
std::vector<DemographicContext> context_for_cells(const std::vector<geo::KmCell>& cells,
                                                  const std::vector<io::PersonRecord>& population,
                                                  const std::vector<AttributeSpec>& specs,
                                                  const ContextOptions& opts = {});

enum class PovertyStat { Mean, Median };

struct PovertyConfig {
  PovertyStat stat = PovertyStat::Mean;
  int ref_age_min = 16;
  int ref_age_max = 74;
};

// 0.6 times the mean (or median) disposable income over the reference ages.
double poverty_threshold(const std::vector<io::PersonRecord>& population,
                         const PovertyConfig& cfg);

// The four built-in attributes, in output-column order:
// minority, high_edu (adult scope), poor, risk70.
std::vector<AttributeSpec> attribute_predicates(const std::vector<io::PersonRecord>& population,
                                                int k = 100, const PovertyConfig& poverty = {});

inline constexpr std::array<std::string_view, 4> kAttributeNames = {"minority", "high_edu",
                                                                    "poor", "risk70"};

// Cells whose share reaches the nearest-rank 90th percentile (ties included).
did::SubgroupMask p90_mask(const std::vector<DemographicContext>& contexts, size_t attr_index,
                           const std::string& attr_name);

void write_demographics(const std::string& path, const std::vector<DemographicContext>& contexts);
std::vector<DemographicContext> read_demographics(const std::string& path);

}  // namespace mobiscope::demo
