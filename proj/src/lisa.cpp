#include "mobiscope/lisa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/rng.hpp"

namespace mobiscope::lisa {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string_view to_string(LisaClass c) {
  switch (c) {
    case LisaClass::HH: return "HH";
    case LisaClass::LL: return "LL";
    case LisaClass::HL: return "HL";
    case LisaClass::LH: return "LH";
    case LisaClass::NS: return "NS";
    case LisaClass::ISOLATED: return "ISOLATED";
  }
  throw Error::internal("unknown LISA class value");
}

LisaClass parse_class(std::string_view s) {
  if (s == "HH") return LisaClass::HH;
  if (s == "LL") return LisaClass::LL;
  if (s == "HL") return LisaClass::HL;
  if (s == "LH") return LisaClass::LH;
  if (s == "NS") return LisaClass::NS;
  if (s == "ISOLATED") return LisaClass::ISOLATED;
  throw Error::data("unknown LISA class '" + std::string(s) + "'");
}

SpatialWeights build_weights(const std::vector<geo::KmCell>& cells, double max_dist_m,
                             bool row_standardize) {
  if (max_dist_m <= 0.0) throw Error::config("weights max distance must be positive");
  SpatialWeights w;
  w.cells = cells;
  std::sort(w.cells.begin(), w.cells.end());
  if (std::adjacent_find(w.cells.begin(), w.cells.end()) != w.cells.end()) {
    throw Error::data("weight cells must be distinct");
  }
  const size_t n = w.cells.size();
  w.rows.resize(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double d = geo::euclid(w.cells[i].center(), w.cells[j].center());
      if (d <= max_dist_m) {
        w.rows[i].emplace_back(static_cast<uint32_t>(j), 1.0 / d);
        w.rows[j].emplace_back(static_cast<uint32_t>(i), 1.0 / d);
      }
    }
  }
  for (auto& row : w.rows) {
    std::sort(row.begin(), row.end());
    if (row_standardize && !row.empty()) {
      double sum = 0.0;
      for (const auto& [j, wij] : row) sum += wij;
      for (auto& [j, wij] : row) wij /= sum;
    }
  }
  w.row_standardized = row_standardize;
  return w;
}

ZScores zscores(const std::vector<double>& values) {
  if (values.empty()) throw Error::internal("zscores over empty values");
  ZScores r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.sigma = std::sqrt(ss / static_cast<double>(values.size()));
  if (r.sigma <= 0.0) throw Error::internal("zscores requires nonzero variance");
  r.z.reserve(values.size());
  for (double v : values) r.z.push_back((v - r.mean) / r.sigma);
  return r;
}

std::vector<double> local_values(const std::vector<double>& z, const SpatialWeights& w) {
  if (z.size() != w.size()) throw Error::internal("z length does not match the weights");
  std::vector<double> local(z.size(), kNaN);
  for (size_t i = 0; i < z.size(); ++i) {
    if (w.isolated(i)) continue;
    double lag = 0.0;
    for (const auto& [j, wij] : w.rows[i]) lag += wij * z[j];
    local[i] = z[i] * lag;
  }
  return local;
}

std::vector<double> permutation_pseudo_p(const std::vector<double>& z, const SpatialWeights& w,
                                         const std::vector<double>& local, int permutations,
                                         uint64_t seed) {
  if (permutations < 1) throw Error::config("permutation count must be at least 1");
  if (z.size() != w.size() || local.size() != w.size()) {
    throw Error::internal("permutation inputs do not match the weights");
  }
  const size_t n = z.size();
  std::vector<double> p(n, kNaN);
  std::vector<double> pool;
  pool.reserve(n > 0 ? n - 1 : 0);
  for (size_t i = 0; i < n; ++i) {
    if (w.isolated(i)) continue;
    const auto& row = w.rows[i];
    const size_t k = row.size();
    pool.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j != i) pool.push_back(z[j]);
    }
    const uint64_t m = pool.size();
    if (m < k) throw Error::internal("neighbor count exceeds the permutation pool");
    DetRng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    const double observed = std::fabs(local[i]);
    int64_t r_count = 0;
    for (int t = 0; t < permutations; ++t) {
      double lag = 0.0;
      for (size_t s = 0; s < k; ++s) {
        const uint64_t pick = s + rng.bounded(m - s);
        std::swap(pool[s], pool[pick]);
        lag += row[s].second * pool[s];
      }
      if (std::fabs(z[i] * lag) >= observed) ++r_count;
    }
    p[i] = static_cast<double>(r_count + 1) / static_cast<double>(permutations + 1);
  }
  return p;
}

LisaClass classify(double z, double lag, double pseudo_p, double alpha) {
  if (!(pseudo_p <= alpha)) return LisaClass::NS;
  if (z > 0.0 && lag > 0.0) return LisaClass::HH;
  if (z < 0.0 && lag < 0.0) return LisaClass::LL;
  if (z > 0.0 && lag < 0.0) return LisaClass::HL;
  if (z < 0.0 && lag > 0.0) return LisaClass::LH;
  return LisaClass::NS;
}

LisaResult run_lisa(const std::map<geo::KmCell, double>& values, const LisaConfig& cfg) {
  if (values.empty()) throw Error::data("LISA requires at least one cell");
  std::vector<geo::KmCell> cells;
  std::vector<double> x;
  cells.reserve(values.size());
  x.reserve(values.size());
  for (const auto& [cell, v] : values) {
    cells.push_back(cell);
    x.push_back(v);
  }

  LisaResult result;
  result.cells.resize(cells.size());

  const auto [min_it, max_it] = std::minmax_element(x.begin(), x.end());
  if (*min_it == *max_it) {
    result.degenerate = true;
    for (size_t i = 0; i < cells.size(); ++i) {
      result.cells[i] = {cells[i], 0.0, kNaN, kNaN, kNaN, LisaClass::NS};
    }
    return result;
  }

  const SpatialWeights w = build_weights(cells, cfg.max_dist_m, cfg.row_standardize);
  const ZScores zs = zscores(x);
  const std::vector<double> local = local_values(zs.z, w);
  const std::vector<double> p =
      permutation_pseudo_p(zs.z, w, local, cfg.permutations, cfg.seed);

  for (size_t i = 0; i < cells.size(); ++i) {
    LisaCellResult& c = result.cells[i];
    c.cell = w.cells[i];
    c.z = zs.z[i];
    if (w.isolated(i)) {
      c.lag = kNaN;
      c.local_i = kNaN;
      c.pseudo_p = kNaN;
      c.cls = LisaClass::ISOLATED;
      continue;
    }
    double lag = 0.0;
    for (const auto& [j, wij] : w.rows[i]) lag += wij * zs.z[j];
    c.lag = lag;
    c.local_i = local[i];
    c.pseudo_p = p[i];
    c.cls = classify(c.z, c.lag, c.pseudo_p, cfg.alpha);
  }
  return result;
}

std::vector<geo::KmCell> LisaResult::cells_in_class(LisaClass c) const {
  std::vector<geo::KmCell> out;
  for (const LisaCellResult& r : cells) {
    if (r.cls == c) out.push_back(r.cell);
  }
  return out;
}

std::map<geo::KmCell, double> local_morans_i(const std::map<geo::KmCell, double>& values,
                                             const SpatialWeights& w) {
  if (values.size() != w.size()) throw Error::internal("values do not match the weights");
  std::vector<double> x;
  x.reserve(values.size());
  size_t i = 0;
  for (const auto& [cell, v] : values) {
    if (cell != w.cells[i]) throw Error::internal("values do not match the weights");
    x.push_back(v);
    ++i;
  }
  const ZScores zs = zscores(x);
  const std::vector<double> local = local_values(zs.z, w);
  std::map<geo::KmCell, double> out;
  for (size_t j = 0; j < w.cells.size(); ++j) out.emplace(w.cells[j], local[j]);
  return out;
}

std::map<geo::KmCell, double> dist_to_k_jobs(const std::vector<geo::KmCell>& cells,
                                             const std::vector<io::JobSite>& jobs, int k) {
  if (k < 1) throw Error::config("job neighbor count must be at least 1");
  if (jobs.size() < static_cast<size_t>(k)) {
    throw Error::data("need at least " + std::to_string(k) + " jobs, have " +
                      std::to_string(jobs.size()));
  }
  std::map<geo::KmCell, double> out;
  std::vector<double> d2(jobs.size());
  for (geo::KmCell cell : cells) {
    const geo::PlanarPoint mid = cell.center();
    for (size_t j = 0; j < jobs.size(); ++j) {
      const double dx = jobs[j].location.x - mid.x;
      const double dy = jobs[j].location.y - mid.y;
      d2[j] = dx * dx + dy * dy;
    }
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    out[cell] = std::sqrt(d2[static_cast<size_t>(k - 1)]);
  }
  return out;
}

void write_lisa(const std::string& path, const LisaResult& result) {
  csv::Writer w(path, "cx,cy,local_i,pseudo_p,class");
  std::string row;
  for (const LisaCellResult& c : result.cells) {
    row.clear();
    csv::append_fixed(row, c.cell.cx, 1);
    row += ',';
    csv::append_fixed(row, c.cell.cy, 1);
    row += ',';
    csv::append_fixed(row, c.local_i, 6);
    row += ',';
    csv::append_fixed(row, c.pseudo_p, 6);
    row += ',';
    row += to_string(c.cls);
    w.raw_row(row);
  }
  w.close();
}

LisaResult read_lisa(const std::string& path) {
  csv::Reader r(path, {"cx", "cy", "local_i", "pseudo_p", "class"});
  LisaResult result;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    LisaCellResult c;
    c.cell = geo::KmCell{r.field_double(f[0], "cx"), r.field_double(f[1], "cy")};
    c.local_i = r.field_double_or_nan(f[2], "local_i");
    c.pseudo_p = r.field_double_or_nan(f[3], "pseudo_p");
    c.cls = parse_class(f[4]);
    result.cells.push_back(c);
  }
  return result;
}

}  // namespace mobiscope::lisa
