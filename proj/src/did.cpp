#include "mobiscope/did.hpp"

#include <cmath>
#include <limits>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"

namespace mobiscope::did {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void DateQuad::validate() const {
  const auto d = all();
  for (size_t i = 0; i < d.size(); ++i) {
    for (size_t j = i + 1; j < d.size(); ++j) {
      if (d[i] == d[j]) {
        throw Error::config("study dates must be distinct; " + d[i].str() + " repeats");
      }
    }
  }
}

DidGrid did_grid(const grid::GridFrame& post_t, const grid::GridFrame& pre_t,
                 const grid::GridFrame& post_c, const grid::GridFrame& pre_c) {
  const int h = post_t.bucket.hour;
  if (pre_t.bucket.hour != h || post_c.bucket.hour != h || pre_c.bucket.hour != h) {
    throw Error::internal("did_grid frames must share one clock hour");
  }
  auto at = [](const grid::GridFrame& f, geo::KmCell c) -> double {
    auto it = f.cells.find(c);
    return it == f.cells.end() ? 0.0 : static_cast<double>(it->second);
  };

  DidGrid out;
  auto add_cells = [&](const grid::GridFrame& f) {
    for (const auto& [cell, count] : f.cells) {
      (void)count;
      out.emplace(cell, DidCell{});
    }
  };
  add_cells(post_t);
  add_cells(pre_t);
  add_cells(post_c);
  add_cells(pre_c);

  for (auto& [cell, dc] : out) {
    const double baseline = at(pre_t, cell);
    const double did = (at(post_t, cell) - baseline) - (at(post_c, cell) - at(pre_c, cell));
    dc.cell = cell;
    dc.did = did;
    dc.baseline = baseline;
    dc.pct = baseline > 0.0 ? 100.0 * did / baseline : kNaN;
  }
  return out;
}

ScalarDid did_scalar(double post_t, double pre_t, double post_c, double pre_c) {
  ScalarDid r;
  r.did = (post_t - pre_t) - (post_c - pre_c);
  r.baseline = pre_t;
  if (pre_t != 0.0) r.pct = 100.0 * r.did / pre_t;
  return r;
}

SubgroupDid subgroup_did(const grid::HomeDistanceFrame& post_t,
                         const grid::HomeDistanceFrame& pre_t,
                         const grid::HomeDistanceFrame& post_c,
                         const grid::HomeDistanceFrame& pre_c, const SubgroupMask& mask) {
  if (mask.cells.empty()) {
    throw Error::config("subgroup mask '" + mask.attribute + "' selects no cells");
  }
  const grid::HomeDistanceFrame* frames[4] = {&post_t, &pre_t, &post_c, &pre_c};

  SubgroupDid r;
  for (size_t i = 0; i < 4; ++i) {
    double weighted = 0.0;
    int64_t n = 0;
    for (const auto& [cell, stat] : frames[i]->cells) {
      if (!mask.cells.count(cell)) continue;
      weighted += stat.mean_max_dist_m * static_cast<double>(stat.n);
      n += stat.n;
    }
    if (n == 0) {
      throw Error::data("subgroup '" + mask.attribute + "' has no phones on " +
                        frames[i]->date.str());
    }
    r.mean[i] = weighted / static_cast<double>(n);
    r.n[i] = n;
    r.n_obs += n;
  }
  r.change = did_scalar(r.mean[0], r.mean[1], r.mean[2], r.mean[3]);
  return r;
}

int histogram_bin(double dist_m) {
  if (!(dist_m >= 0.0)) {
    throw Error::data("distance must be nonnegative, got " + csv::fmt_fixed(dist_m, 3));
  }
  int b = 0;
  while (b < static_cast<int>(kHistogramEdges.size()) && dist_m >= kHistogramEdges[b]) ++b;
  return b;
}

std::array<double, kHistogramBins> DistanceHistogram::shares() const {
  std::array<double, kHistogramBins> s{};
  for (size_t i = 0; i < kHistogramBins; ++i) {
    s[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return s;
}

DistanceHistogram distance_histogram(std::span<const double> dists_m) {
  if (dists_m.empty()) throw Error::data("distance histogram needs at least one record");
  DistanceHistogram h;
  for (double d : dists_m) {
    ++h.counts[static_cast<size_t>(histogram_bin(d))];
  }
  h.n = static_cast<int64_t>(dists_m.size());
  return h;
}

namespace {

std::optional<double> class_pct(const DidGrid& grid, const std::set<geo::KmCell>& cells,
                                PctForm form, double& did_sum, double& baseline_sum) {
  did_sum = 0.0;
  baseline_sum = 0.0;
  double pct_sum = 0.0;
  int64_t pct_n = 0;
  for (geo::KmCell c : cells) {
    auto it = grid.find(c);
    if (it == grid.end()) {
      throw Error::internal("class cell not present in the DiD grid");
    }
    did_sum += it->second.did;
    baseline_sum += it->second.baseline;
    if (it->second.baseline > 0.0) {
      pct_sum += 100.0 * it->second.did / it->second.baseline;
      ++pct_n;
    }
  }
  if (form == PctForm::RatioOfSums) {
    if (baseline_sum == 0.0) return std::nullopt;
    return 100.0 * did_sum / baseline_sum;
  }
  if (pct_n == 0) return std::nullopt;
  return pct_sum / static_cast<double>(pct_n);
}

}  // namespace

HotColdChange hotcold_pct_change(const DidGrid& grid, const std::set<geo::KmCell>& hh,
                                 const std::set<geo::KmCell>& ll, PctForm form) {
  HotColdChange r;
  r.n_hh = static_cast<int64_t>(hh.size());
  r.n_ll = static_cast<int64_t>(ll.size());
  if (!hh.empty()) r.pct_hh = class_pct(grid, hh, form, r.did_sum_hh, r.baseline_sum_hh);
  if (!ll.empty()) r.pct_ll = class_pct(grid, ll, form, r.did_sum_ll, r.baseline_sum_ll);
  return r;
}

void write_did_grid(const std::string& path, const DidGrid& grid) {
  csv::Writer w(path, "cx,cy,did,baseline,pct");
  std::string row;
  for (const auto& [cell, dc] : grid) {
    row.clear();
    csv::append_fixed(row, cell.cx, 1);
    row += ',';
    csv::append_fixed(row, cell.cy, 1);
    row += ',';
    csv::append_fixed(row, dc.did, 1);
    row += ',';
    csv::append_fixed(row, dc.baseline, 1);
    row += ',';
    csv::append_fixed(row, dc.pct, 4);
    w.raw_row(row);
  }
  w.close();
}

DidGrid read_did_grid(const std::string& path) {
  csv::Reader r(path, {"cx", "cy", "did", "baseline", "pct"});
  DidGrid grid;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    DidCell dc;
    dc.cell = geo::KmCell{r.field_double(f[0], "cx"), r.field_double(f[1], "cy")};
    dc.did = r.field_double(f[2], "did");
    dc.baseline = r.field_double(f[3], "baseline");
    dc.pct = r.field_double_or_nan(f[4], "pct");
    if (!grid.emplace(dc.cell, dc).second) {
      r.fail("duplicate cell in DiD grid");
    }
  }
  return grid;
}

}  // namespace mobiscope::did
