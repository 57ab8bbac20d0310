#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mobiscope/demographics.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/rng.hpp"
#include "test_util.hpp"

namespace {

using namespace mobiscope;

geo::KmCell km(int kx, int ky) {
  return geo::KmCell{kx * 1000.0 + 500.0, ky * 1000.0 + 500.0};
}

io::PersonRecord person(double x, double y, int age, bool minority = false,
                        bool tertiary = false, double income = 200.0) {
  io::PersonRecord p;
  p.location = {x, y};
  p.age = age;
  p.minority = minority;
  p.tertiary_edu = tertiary;
  p.disposable_income = income;
  p.adult = age >= 18;
  return p;
}

demo::AttributeSpec minority_spec(int k) {
  return {"minority", demo::Scope::Full, k,
          [](const io::PersonRecord& p) { return p.minority; }};
}

// brute-force share: sort every in-scope person by (squared distance, index)
double brute_share(geo::PlanarPoint anchor, const std::vector<io::PersonRecord>& pop,
                   const demo::AttributeSpec& spec) {
  std::vector<std::pair<double, uint32_t>> order;
  for (uint32_t i = 0; i < pop.size(); ++i) {
    if (spec.scope == demo::Scope::Adult && !pop[i].adult) continue;
    const double dx = pop[i].location.x - anchor.x;
    const double dy = pop[i].location.y - anchor.y;
    order.emplace_back(dx * dx + dy * dy, i);
  }
  std::sort(order.begin(), order.end());
  int64_t hits = 0;
  for (int i = 0; i < spec.k; ++i) {
    if (spec.predicate(pop[order[static_cast<size_t>(i)].second])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(spec.k);
}

}  // namespace

TEST_CASE("the share counts hits among the k nearest persons") {
  std::vector<io::PersonRecord> pop = {
      person(100.0, 0.0, 30, true),
      person(200.0, 0.0, 30, false),
      person(300.0, 0.0, 30, true),
      person(5000.0, 0.0, 30, true),  // outside the 3 nearest
  };
  CHECK(demo::knn_share({0.0, 0.0}, pop, minority_spec(3)) == doctest::Approx(2.0 / 3.0));
  CHECK(demo::knn_share({0.0, 0.0}, pop, minority_spec(4)) == doctest::Approx(0.75));
}

TEST_CASE("equal distances break ties by input order") {
  // two persons at mirror positions, same distance; index 0 wins the last slot
  std::vector<io::PersonRecord> pop = {
      person(100.0, 0.0, 30, true),
      person(-100.0, 0.0, 30, false),
      person(0.0, 50.0, 30, false),
  };
  auto spec = minority_spec(2);
  // nearest: (0,50) then the tie at 100; the earlier record is the minority
  CHECK(demo::knn_share({0.0, 0.0}, pop, spec) == doctest::Approx(0.5));
}

TEST_CASE("adult scope drops minors from both pool and count") {
  std::vector<io::PersonRecord> pop = {
      person(100.0, 0.0, 10, false, true),   // minor, would otherwise be nearest
      person(200.0, 0.0, 30, false, true),
      person(300.0, 0.0, 30, false, false),
  };
  demo::AttributeSpec spec{"high_edu", demo::Scope::Adult, 2,
                           [](const io::PersonRecord& p) { return p.tertiary_edu; }};
  CHECK(demo::knn_share({0.0, 0.0}, pop, spec) == doctest::Approx(0.5));
}

TEST_CASE("too few in-scope persons is an error") {
  std::vector<io::PersonRecord> pop = {person(0.0, 0.0, 30)};
  CHECK_THROWS_AS(demo::knn_share({0.0, 0.0}, pop, minority_spec(2)), Error);
  auto bad_k = minority_spec(0);
  CHECK_THROWS_AS(demo::knn_share({0.0, 0.0}, pop, bad_k), Error);
}

TEST_CASE("shares match the sorting oracle on random instances") {
  DetRng rng(314);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<io::PersonRecord> pop;
    const size_t n = 200 + rng.bounded(200);
    for (size_t i = 0; i < n; ++i) {
      pop.push_back(person(100.0 * static_cast<double>(rng.bounded(80)),
                           100.0 * static_cast<double>(rng.bounded(80)),
                           static_cast<int>(1 + rng.bounded(90)), rng.uniform01() < 0.3));
    }
    for (int k : {1, 10, 57}) {
      auto spec = minority_spec(k);
      geo::PlanarPoint anchor{100.0 * static_cast<double>(rng.bounded(80)),
                              100.0 * static_cast<double>(rng.bounded(80))};
      CHECK(demo::knn_share(anchor, pop, spec) == brute_share(anchor, pop, spec));
    }
  }
}

TEST_CASE("a uniform attribute is immune to the choice of k") {
  std::vector<io::PersonRecord> pop;
  for (int i = 0; i < 50; ++i) pop.push_back(person(100.0 * i, 0.0, 30, true));
  for (int k : {1, 7, 50}) {
    CHECK(demo::knn_share({1234.0, 0.0}, pop, minority_spec(k)) == 1.0);
  }
}

TEST_CASE("the poverty threshold is sixty percent of the reference mean") {
  std::vector<io::PersonRecord> pop = {
      person(0, 0, 30, false, false, 10.0),
      person(0, 0, 40, false, false, 10.0),
      person(0, 0, 50, false, false, 10.0),
      person(0, 0, 60, false, false, 70.0),
      person(0, 0, 80, false, false, 1000.0),  // above the reference ages
      person(0, 0, 10, false, false, 1000.0),  // below them
  };
  CHECK(demo::poverty_threshold(pop, {}) == doctest::Approx(0.6 * 25.0));

  demo::PovertyConfig med;
  med.stat = demo::PovertyStat::Median;
  CHECK(demo::poverty_threshold(pop, med) == doctest::Approx(0.6 * 10.0));
}

TEST_CASE("an even reference count medians the middle pair") {
  std::vector<io::PersonRecord> pop = {
      person(0, 0, 30, false, false, 10.0),
      person(0, 0, 40, false, false, 20.0),
      person(0, 0, 50, false, false, 40.0),
      person(0, 0, 60, false, false, 80.0),
  };
  demo::PovertyConfig med;
  med.stat = demo::PovertyStat::Median;
  CHECK(demo::poverty_threshold(pop, med) == doctest::Approx(0.6 * 30.0));
}

TEST_CASE("an empty reference band is an error") {
  std::vector<io::PersonRecord> pop = {person(0, 0, 10), person(0, 0, 80)};
  CHECK_THROWS_AS(demo::poverty_threshold(pop, {}), Error);
}

TEST_CASE("the built-in attributes follow their definitions") {
  std::vector<io::PersonRecord> pop;
  // a small neighborhood: k = 4 picks everyone
  pop.push_back(person(0.0, 0.0, 71, true, false, 10.0));
  pop.push_back(person(100.0, 0.0, 70, false, true, 10.0));
  pop.push_back(person(200.0, 0.0, 69, false, true, 10.0));
  pop.push_back(person(300.0, 0.0, 17, false, false, 70.0));

  auto specs = demo::attribute_predicates(pop, 4);
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].name == "minority");
  CHECK(specs[1].scope == demo::Scope::Adult);

  // threshold = 0.6 * mean(10,10,10,70) = 15; three of four are poor
  CHECK(demo::knn_share({0.0, 0.0}, pop, specs[2]) == doctest::Approx(0.75));
  // age 70 is in the risk group, 69 is not, so 2 of 4
  CHECK(demo::knn_share({0.0, 0.0}, pop, specs[3]) == doctest::Approx(0.5));
  CHECK(demo::knn_share({0.0, 0.0}, pop, specs[0]) == doctest::Approx(0.25));

  // the adult-scope attribute: k = 4 exceeds the three adults
  CHECK_THROWS_AS(demo::knn_share({0.0, 0.0}, pop, specs[1]), Error);
  auto adult_specs = demo::attribute_predicates(pop, 3);
  CHECK(demo::knn_share({0.0, 0.0}, pop, adult_specs[1]) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("cell context joins to the nearest populated point") {
  std::vector<io::PersonRecord> pop;
  // cluster near the origin cell: all minority
  for (int i = 0; i < 3; ++i) pop.push_back(person(400.0 + 100.0 * i, 500.0, 30, true));
  // far cluster: none minority
  for (int i = 0; i < 3; ++i) pop.push_back(person(9400.0 + 100.0 * i, 9500.0, 30, false));

  std::vector<demo::AttributeSpec> specs = {minority_spec(3)};
  auto ctx = demo::context_for_cells({km(0, 0), km(9, 9)}, pop, specs);
  REQUIRE(ctx.size() == 2);
  CHECK(ctx[0].shares[0] == doctest::Approx(1.0));
  CHECK(ctx[1].shares[0] == doctest::Approx(0.0));
  CHECK(ctx[0].covered);
}

TEST_CASE("nearest-point ties go to the lexicographically smaller point") {
  // two populated points straddle the midpoint of cell (0,0) symmetrically
  std::vector<io::PersonRecord> pop = {
      person(400.0, 500.0, 30, true),
      person(600.0, 500.0, 30, false),
  };
  std::vector<demo::AttributeSpec> specs = {minority_spec(1)};
  auto ctx = demo::context_for_cells({km(0, 0)}, pop, specs);
  // the point at x=400 sorts first, so its share (minority, 1.0) wins
  CHECK(ctx[0].shares[0] == doctest::Approx(1.0));
}

TEST_CASE("cells beyond the coverage radius are flagged, not faked") {
  std::vector<io::PersonRecord> pop = {person(500.0, 500.0, 30, true)};
  std::vector<demo::AttributeSpec> specs = {minority_spec(1)};
  demo::ContextOptions opts;
  opts.coverage_radius_m = 2000.0;
  auto ctx = demo::context_for_cells({km(0, 0), km(20, 20)}, pop, specs, opts);
  CHECK(ctx[0].covered);
  CHECK_FALSE(ctx[1].covered);
  CHECK(std::isnan(ctx[1].shares[0]));
}

TEST_CASE("context on an empty population is an error") {
  std::vector<demo::AttributeSpec> specs = {minority_spec(1)};
  CHECK_THROWS_AS(demo::context_for_cells({km(0, 0)}, {}, specs), Error);
}

TEST_CASE("the p90 mask keeps the top decile with ties") {
  std::vector<demo::DemographicContext> ctx;
  for (int i = 0; i < 10; ++i) {
    demo::DemographicContext c;
    c.cell = km(i, 0);
    c.shares = {static_cast<double>(i) / 10.0};
    ctx.push_back(c);
  }
  // n = 10: rank = 9, threshold = sorted[8] = 0.8; cells with share >= 0.8
  auto mask = demo::p90_mask(ctx, 0, "minority");
  CHECK(mask.cells.size() == 2);
  CHECK(mask.cells.count(km(8, 0)) == 1);
  CHECK(mask.cells.count(km(9, 0)) == 1);
}

TEST_CASE("tied shares at the threshold all make the mask") {
  std::vector<demo::DemographicContext> ctx;
  for (int i = 0; i < 10; ++i) {
    demo::DemographicContext c;
    c.cell = km(i, 0);
    c.shares = {i < 5 ? 0.1 : 0.9};
    ctx.push_back(c);
  }
  auto mask = demo::p90_mask(ctx, 0, "poor");
  CHECK(mask.cells.size() == 5);
}

TEST_CASE("the nearest-rank index follows ceil of nine tenths") {
  // n = 1..30: rank = (9n + 9) / 10 in integer math equals ceil(0.9 n)
  for (size_t n = 1; n <= 30; ++n) {
    const size_t rank = (9 * n + 9) / 10;
    CHECK(rank == static_cast<size_t>(std::ceil(0.9 * static_cast<double>(n))));
    CHECK(rank >= 1);
    CHECK(rank <= n);
  }
}

TEST_CASE("uncovered cells are skipped when ranking") {
  std::vector<demo::DemographicContext> ctx;
  for (int i = 0; i < 4; ++i) {
    demo::DemographicContext c;
    c.cell = km(i, 0);
    c.shares = {static_cast<double>(i)};
    c.covered = i != 3;  // the top share is uncovered and must not count
    ctx.push_back(c);
  }
  auto mask = demo::p90_mask(ctx, 0, "risk70");
  CHECK(mask.cells.count(km(2, 0)) == 1);
  CHECK(mask.cells.count(km(3, 0)) == 0);

  std::vector<demo::DemographicContext> none;
  demo::DemographicContext c;
  c.cell = km(0, 0);
  c.shares = {0.5};
  c.covered = false;
  none.push_back(c);
  CHECK_THROWS_AS(demo::p90_mask(none, 0, "risk70"), Error);
}

TEST_CASE("contexts survive a file round trip") {
  std::vector<io::PersonRecord> pop;
  DetRng rng(48);
  for (int i = 0; i < 120; ++i) {
    pop.push_back(person(100.0 * static_cast<double>(rng.bounded(40)),
                         100.0 * static_cast<double>(rng.bounded(40)),
                         static_cast<int>(1 + rng.bounded(90)), rng.uniform01() < 0.25,
                         rng.uniform01() < 0.35, 100.0 + 400.0 * rng.uniform01()));
  }
  auto specs = demo::attribute_predicates(pop, 20);
  auto ctx = demo::context_for_cells({km(0, 0), km(1, 2), km(3, 3)}, pop, specs);

  const std::filesystem::path dir = testutil::scratch_dir("demo_roundtrip");
  const std::string path = (dir / "demographics.csv").string();
  demo::write_demographics(path, ctx);
  auto back = demo::read_demographics(path);
  REQUIRE(back.size() == ctx.size());
  for (size_t i = 0; i < ctx.size(); ++i) {
    CHECK(back[i].cell == ctx[i].cell);
    CHECK(back[i].covered == ctx[i].covered);
    for (size_t a = 0; a < 4; ++a) {
      CHECK(back[i].shares[a] == doctest::Approx(ctx[i].shares[a]).epsilon(1e-4));
    }
  }
}
