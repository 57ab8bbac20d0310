#include "mobiscope/demographics.hpp"

#include <algorithm>
#include <cmath>

#include "mobiscope/csv.hpp"
#include "mobiscope/errors.hpp"

namespace mobiscope::demo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool in_scope(const io::PersonRecord& p, Scope scope) {
  return scope == Scope::Full || p.adult;
}

// Indices of the k nearest persons (among candidate indices) to the anchor,
// ordered by (squared distance, index).
std::vector<uint32_t> k_nearest(geo::PlanarPoint anchor, const std::vector<io::PersonRecord>& pop,
                                const std::vector<uint32_t>& candidates, int k,
                                const std::string& what) {
  if (k < 1) throw Error::config("neighbor count must be at least 1");
  if (candidates.size() < static_cast<size_t>(k)) {
    throw Error::data("need at least " + std::to_string(k) + " persons in scope for " + what +
                      ", have " + std::to_string(candidates.size()));
  }
  std::vector<std::pair<double, uint32_t>> order;
  order.reserve(candidates.size());
  for (uint32_t idx : candidates) {
    const double dx = pop[idx].location.x - anchor.x;
    const double dy = pop[idx].location.y - anchor.y;
    order.emplace_back(dx * dx + dy * dy, idx);
  }
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end());
  std::vector<uint32_t> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(order[static_cast<size_t>(i)].second);
  return out;
}

}  // namespace

double knn_share(geo::PlanarPoint anchor, const std::vector<io::PersonRecord>& population,
                 const AttributeSpec& spec) {
  if (!spec.predicate) throw Error::internal("attribute '" + spec.name + "' has no predicate");
  std::vector<uint32_t> candidates;
  candidates.reserve(population.size());
  for (uint32_t i = 0; i < population.size(); ++i) {
    if (in_scope(population[i], spec.scope)) candidates.push_back(i);
  }
  const auto nearest = k_nearest(anchor, population, candidates, spec.k, spec.name);
  int64_t hits = 0;
  for (uint32_t idx : nearest) {
    if (spec.predicate(population[idx])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(spec.k);
}

std::vector<DemographicContext> context_for_cells(const std::vector<geo::KmCell>& cells,
                                                  const std::vector<io::PersonRecord>& population,
                                                  const std::vector<AttributeSpec>& specs,
                                                  const ContextOptions& opts) {
  if (population.empty()) throw Error::data("population registry is empty");

  // Distinct populated points, lexicographic; the order is the tiebreak for
  // the nearest-point join below.
  std::vector<geo::PlanarPoint> points;
  points.reserve(population.size());
  for (const io::PersonRecord& p : population) points.push_back(p.location);
  std::sort(points.begin(), points.end(), [](geo::PlanarPoint a, geo::PlanarPoint b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());

  // Scope candidate lists are shared by every anchor.
  std::vector<uint32_t> full_scope;
  std::vector<uint32_t> adult_scope;
  for (uint32_t i = 0; i < population.size(); ++i) {
    full_scope.push_back(i);
    if (population[i].adult) adult_scope.push_back(i);
  }
  auto candidates_of = [&](Scope s) -> const std::vector<uint32_t>& {
    return s == Scope::Full ? full_scope : adult_scope;
  };

  // Step 1: shares at every populated point. Specs sharing a scope and k
  // reuse one neighbor query.
  std::vector<std::vector<double>> point_shares(points.size(),
                                                std::vector<double>(specs.size(), kNaN));
  for (size_t pi = 0; pi < points.size(); ++pi) {
    std::vector<bool> done(specs.size(), false);
    for (size_t a = 0; a < specs.size(); ++a) {
      if (done[a]) continue;
      const auto nearest =
          k_nearest(points[pi], population, candidates_of(specs[a].scope), specs[a].k,
                    specs[a].name);
      for (size_t b = a; b < specs.size(); ++b) {
        if (done[b] || specs[b].scope != specs[a].scope || specs[b].k != specs[a].k) continue;
        if (!specs[b].predicate) {
          throw Error::internal("attribute '" + specs[b].name + "' has no predicate");
        }
        int64_t hits = 0;
        for (uint32_t idx : nearest) {
          if (specs[b].predicate(population[idx])) ++hits;
        }
        point_shares[pi][b] = static_cast<double>(hits) / static_cast<double>(specs[b].k);
        done[b] = true;
      }
    }
  }

  // Step 2: nearest populated point per cell midpoint.
  std::vector<DemographicContext> out;
  out.reserve(cells.size());
  for (geo::KmCell cell : cells) {
    const geo::PlanarPoint mid = cell.center();
    size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (size_t pi = 0; pi < points.size(); ++pi) {
      const double dx = points[pi].x - mid.x;
      const double dy = points[pi].y - mid.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = pi;
      }
    }
    DemographicContext ctx;
    ctx.cell = cell;
    if (std::sqrt(best_d2) > opts.coverage_radius_m) {
      ctx.covered = false;
      ctx.shares.assign(specs.size(), kNaN);
    } else {
      ctx.shares = point_shares[best];
    }
    out.push_back(std::move(ctx));
  }
  return out;
}

double poverty_threshold(const std::vector<io::PersonRecord>& population,
                         const PovertyConfig& cfg) {
  std::vector<double> incomes;
  for (const io::PersonRecord& p : population) {
    if (p.age >= cfg.ref_age_min && p.age <= cfg.ref_age_max) {
      incomes.push_back(p.disposable_income);
    }
  }
  if (incomes.empty()) {
    throw Error::data("no persons aged " + std::to_string(cfg.ref_age_min) + "-" +
                      std::to_string(cfg.ref_age_max) + " for the poverty reference");
  }
  double center;
  if (cfg.stat == PovertyStat::Mean) {
    double sum = 0.0;
    for (double v : incomes) sum += v;
    center = sum / static_cast<double>(incomes.size());
  } else {
    std::sort(incomes.begin(), incomes.end());
    const size_t n = incomes.size();
    center = n % 2 == 1 ? incomes[n / 2] : 0.5 * (incomes[n / 2 - 1] + incomes[n / 2]);
  }
  return 0.6 * center;
}

std::vector<AttributeSpec> attribute_predicates(const std::vector<io::PersonRecord>& population,
                                                int k, const PovertyConfig& poverty) {
  const double threshold = poverty_threshold(population, poverty);
  std::vector<AttributeSpec> specs;
  specs.push_back({"minority", Scope::Full, k,
                   [](const io::PersonRecord& p) { return p.minority; }});
  specs.push_back({"high_edu", Scope::Adult, k,
                   [](const io::PersonRecord& p) { return p.tertiary_edu; }});
  specs.push_back({"poor", Scope::Full, k,
                   [threshold](const io::PersonRecord& p) {
                     return p.disposable_income <= threshold;
                   }});
  specs.push_back({"risk70", Scope::Full, k,
                   [](const io::PersonRecord& p) { return p.age >= 70; }});
  return specs;
}

did::SubgroupMask p90_mask(const std::vector<DemographicContext>& contexts, size_t attr_index,
                           const std::string& attr_name) {
  std::vector<double> shares;
  for (const DemographicContext& ctx : contexts) {
    if (ctx.covered) shares.push_back(ctx.shares.at(attr_index));
  }
  if (shares.empty()) throw Error::data("no covered cells for mask '" + attr_name + "'");
  std::sort(shares.begin(), shares.end());
  // nearest-rank percentile: rank = ceil(0.9 n)
  const size_t n = shares.size();
  const size_t rank = (9 * n + 9) / 10;
  const double threshold = shares[rank - 1];

  did::SubgroupMask mask;
  mask.attribute = attr_name;
  for (const DemographicContext& ctx : contexts) {
    if (ctx.covered && ctx.shares.at(attr_index) >= threshold) mask.cells.insert(ctx.cell);
  }
  return mask;
}

void write_demographics(const std::string& path,
                        const std::vector<DemographicContext>& contexts) {
  csv::Writer w(path, "cx,cy,minority,high_edu,poor,risk70");
  std::string row;
  for (const DemographicContext& ctx : contexts) {
    if (ctx.shares.size() != kAttributeNames.size()) {
      throw Error::internal("demographics rows need the four standard attributes");
    }
    row.clear();
    csv::append_fixed(row, ctx.cell.cx, 1);
    row += ',';
    csv::append_fixed(row, ctx.cell.cy, 1);
    for (double s : ctx.shares) {
      row += ',';
      csv::append_fixed(row, s, 4);
    }
    w.raw_row(row);
  }
  w.close();
}

std::vector<DemographicContext> read_demographics(const std::string& path) {
  csv::Reader r(path, {"cx", "cy", "minority", "high_edu", "poor", "risk70"});
  std::vector<DemographicContext> out;
  std::vector<std::string_view> f;
  while (r.next(f)) {
    DemographicContext ctx;
    ctx.cell = geo::KmCell{r.field_double(f[0], "cx"), r.field_double(f[1], "cy")};
    for (size_t a = 0; a < kAttributeNames.size(); ++a) {
      ctx.shares.push_back(r.field_double_or_nan(f[2 + a], std::string(kAttributeNames[a])));
    }
    ctx.covered = !std::isnan(ctx.shares[0]);
    out.push_back(std::move(ctx));
  }
  return out;
}

}  // namespace mobiscope::demo
