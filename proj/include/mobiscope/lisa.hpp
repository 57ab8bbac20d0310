#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mobiscope/data_io.hpp"
#include "mobiscope/geo.hpp"

namespace mobiscope::lisa {

enum class LisaClass { HH, LL, HL, LH, NS, ISOLATED };

std::string_view to_string(LisaClass c);
LisaClass parse_class(std::string_view s);

// Inverse-distance neighbor weights over cell midpoints. Cells are held in
// ascending (cx, cy) order and every row lists neighbors by ascending cell
// index; all downstream accumulation follows that order, which is part of
// the reproducibility contract.
struct SpatialWeights {
  std::vector<geo::KmCell> cells;
  std::vector<std::vector<std::pair<uint32_t, double>>> rows;
  bool row_standardized = false;

  size_t size() const { return cells.size(); }
  bool isolated(size_t i) const { return rows[i].empty(); }
};

// Neighbors are the cells with 0 < d <= max_dist_m between midpoints,
// weighted 1/d (then row-standardized when requested). Cells with no
// neighbor in range stay isolated.
SpatialWeights build_weights(const std::vector<geo::KmCell>& cells, double max_dist_m = 3000.0,
                             bool row_standardize = true);

// Population z-scores over ALL cells (isolated included): mean and sigma are
// accumulated left to right in cell order. Precondition: variance > 0.
struct ZScores {
  std::vector<double> z;
  double mean{};
  double sigma{};
};
ZScores zscores(const std::vector<double>& values);

// local_i(i) = z_i * sum_j w_ij z_j, accumulated in row order.
// NaN for isolated cells.
std::vector<double> local_values(const std::vector<double>& z, const SpatialWeights& w);

// Conditional permutation test, two-sided on |local_i|. The protocol below
// is pinned so an independent implementation can match it bit for bit:
//   - cell i draws from DetRng(mix_seed(seed, i)), i = index in w.cells
//   - the pool is z_j for all j != i in ascending j, and persists across
//     permutations (no reset between rounds)
//   - each round runs a partial Fisher-Yates: for s in [0, k_i),
//     swap(pool[s], pool[s + bounded(m - s)]) and pairs pool[s] with the
//     s-th neighbor weight in row order
//   - pseudo_p(i) = (R + 1) / (P + 1) with R = #rounds where the permuted
//     |local| >= |observed|
// NaN for isolated cells.
std::vector<double> permutation_pseudo_p(const std::vector<double>& z, const SpatialWeights& w,
                                         const std::vector<double>& local, int permutations,
                                         uint64_t seed);

// NS when insignificant, else the quadrant by the signs of z and its lag.
// A zero z or lag at significance stays NS.
LisaClass classify(double z, double lag, double pseudo_p, double alpha = 0.05);

struct LisaConfig {
  double max_dist_m = 3000.0;
  bool row_standardize = true;
  int permutations = 499;
  double alpha = 0.05;
  uint64_t seed = 0;
};

struct LisaCellResult {
  geo::KmCell cell;
  double z{};
  double lag{};       // NaN when isolated
  double local_i{};   // NaN when isolated or degenerate
  double pseudo_p{};  // NaN when isolated or degenerate
  LisaClass cls = LisaClass::NS;
};

struct LisaResult {
  std::vector<LisaCellResult> cells;  // ascending by cell
  bool degenerate = false;            // zero-variance input: everything NS

  std::vector<geo::KmCell> cells_in_class(LisaClass c) const;
};

LisaResult run_lisa(const std::map<geo::KmCell, double>& values, const LisaConfig& cfg);

// Map-level wrapper matching run_lisa's cell ordering; NaN for isolated.
std::map<geo::KmCell, double> local_morans_i(const std::map<geo::KmCell, double>& values,
                                             const SpatialWeights& w);

// Radius needed to reach the k nearest jobs from each cell midpoint:
// the k-th order statistic of the job distances.
std::map<geo::KmCell, double> dist_to_k_jobs(const std::vector<geo::KmCell>& cells,
                                             const std::vector<io::JobSite>& jobs, int k = 100);

void write_lisa(const std::string& path, const LisaResult& result);
LisaResult read_lisa(const std::string& path);

}  // namespace mobiscope::lisa
