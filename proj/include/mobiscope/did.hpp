#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mobiscope/geo.hpp"
#include "mobiscope/gridagg.hpp"

namespace mobiscope::did {

// The four study dates: the treated-year change is netted against the change
// across the same pair of weeks one year earlier.
struct DateQuad {
  geo::CivilDate treated_pre{2020, 1, 16};
  geo::CivilDate treated_post{2020, 3, 26};
  geo::CivilDate control_pre{2019, 1, 17};
  geo::CivilDate control_post{2019, 3, 28};

  void validate() const;  // all four dates distinct
  std::array<geo::CivilDate, 4> all() const {
    return {treated_pre, treated_post, control_pre, control_post};
  }
};

struct DidCell {
  geo::KmCell cell;
  double did{};       // counts or meters depending on the metric
  double baseline{};  // value at the treated pre date
  double pct{};       // 100 * did / baseline; NaN when baseline <= 0
};

using DidGrid = std::map<geo::KmCell, DidCell>;

// Per-cell DiD over four frames taken at the same clock hour. A cell missing
// from a frame counts as zero there; a cell absent from all four frames is
// absent from the output.
DidGrid did_grid(const grid::GridFrame& post_t, const grid::GridFrame& pre_t,
                 const grid::GridFrame& post_c, const grid::GridFrame& pre_c);

struct ScalarDid {
  double did{};
  double baseline{};        // pre_t
  std::optional<double> pct;  // empty when baseline == 0
};

ScalarDid did_scalar(double post_t, double pre_t, double post_c, double pre_c);

// Cells whose k-NN attribute share reaches the 90th percentile.
struct SubgroupMask {
  std::string attribute;
  std::set<geo::KmCell> cells;
};

struct SubgroupDid {
  ScalarDid change;
  // per-date means and phone counts, in (post_t, pre_t, post_c, pre_c) order
  std::array<double, 4> mean{};
  std::array<int64_t, 4> n{};
  int64_t n_obs{};  // total phone-days across the four dates
};

// DiD of the mean max-distance restricted to phones homed in the mask.
// Each date's subgroup mean pools the per-cell means weighted by phone
// count, accumulated in ascending cell order. The overall estimate is this
// same computation with the full-cell mask.
SubgroupDid subgroup_did(const grid::HomeDistanceFrame& post_t,
                         const grid::HomeDistanceFrame& pre_t,
                         const grid::HomeDistanceFrame& post_c,
                         const grid::HomeDistanceFrame& pre_c, const SubgroupMask& mask);

// Lower-inclusive distance bins in meters:
// [0,1000) [1000,5000) [5000,10000) [10000,20000) [20000,30000) [30000,inf)
inline constexpr std::array<double, 5> kHistogramEdges = {1000.0, 5000.0, 10000.0, 20000.0,
                                                          30000.0};
inline constexpr size_t kHistogramBins = 6;

int histogram_bin(double dist_m);

struct DistanceHistogram {
  std::array<int64_t, kHistogramBins> counts{};
  int64_t n{};

  std::array<double, kHistogramBins> shares() const;
};

DistanceHistogram distance_histogram(std::span<const double> dists_m);

enum class PctForm {
  RatioOfSums,      // 100 * sum(did) / sum(baseline)
  MeanOfCellPcts,   // mean over cells of 100 * did / baseline
};

struct HotColdChange {
  std::optional<double> pct_hh;  // empty when no cells or zero baseline
  std::optional<double> pct_ll;
  double did_sum_hh{};
  double did_sum_ll{};
  double baseline_sum_hh{};
  double baseline_sum_ll{};
  int64_t n_hh{};
  int64_t n_ll{};
};

// Average percentage change over the hot (HH) and cold (LL) cell sets.
HotColdChange hotcold_pct_change(const DidGrid& grid, const std::set<geo::KmCell>& hh,
                                 const std::set<geo::KmCell>& ll,
                                 PctForm form = PctForm::RatioOfSums);

void write_did_grid(const std::string& path, const DidGrid& grid);
DidGrid read_did_grid(const std::string& path);

}  // namespace mobiscope::did
