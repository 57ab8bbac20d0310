#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "mobiscope/errors.hpp"
#include "mobiscope/lisa.hpp"
#include "mobiscope/rng.hpp"
#include "naive_lisa.hpp"
#include "test_util.hpp"

namespace {

using namespace mobiscope;

geo::KmCell km(int kx, int ky) {
  return geo::KmCell{kx * 1000.0 + 500.0, ky * 1000.0 + 500.0};
}

// bitwise comparison that treats NaN as equal to NaN
bool same(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return a == b;
}

std::map<geo::KmCell, double> random_field(DetRng& rng, int w, int h) {
  std::map<geo::KmCell, double> values;
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      values[km(x, y)] = 100.0 * rng.uniform01();
    }
  }
  return values;
}

}  // namespace

TEST_CASE("two cells a kilometer apart weight each other by inverse distance") {
  auto w = lisa::build_weights({km(0, 0), km(1, 0)}, 3000.0, false);
  REQUIRE(w.size() == 2);
  REQUIRE(w.rows[0].size() == 1);
  CHECK(w.rows[0][0].first == 1);
  CHECK(w.rows[0][0].second == doctest::Approx(0.001));
  CHECK(w.rows[1][0].second == doctest::Approx(0.001));
}

TEST_CASE("row standardization rescales each row to sum one") {
  // three cells on a line: the end cell sees 1000 m and 2000 m neighbors
  auto w = lisa::build_weights({km(0, 0), km(1, 0), km(2, 0)}, 3000.0, true);
  REQUIRE(w.rows[0].size() == 2);
  CHECK(w.rows[0][0].second == doctest::Approx(2.0 / 3.0));
  CHECK(w.rows[0][1].second == doctest::Approx(1.0 / 3.0));
  // the middle cell is symmetric
  CHECK(w.rows[1][0].second == doctest::Approx(0.5));
  CHECK(w.rows[1][1].second == doctest::Approx(0.5));
}

TEST_CASE("the neighbor radius is inclusive") {
  auto touching = lisa::build_weights({km(0, 0), km(3, 0)}, 3000.0, false);
  CHECK_FALSE(touching.isolated(0));

  auto apart = lisa::build_weights({km(0, 0), km(3, 1)}, 3000.0, false);
  CHECK(apart.isolated(0));
  CHECK(apart.isolated(1));
}

TEST_CASE("weight construction rejects bad input") {
  CHECK_THROWS_AS(lisa::build_weights({km(0, 0)}, 0.0, true), Error);
  CHECK_THROWS_AS(lisa::build_weights({km(0, 0), km(0, 0)}, 3000.0, true), Error);
}

TEST_CASE("z-scores use the population sigma over every cell") {
  auto zs = lisa::zscores({0.0, 0.0, 3.0});
  CHECK(zs.mean == doctest::Approx(1.0));
  CHECK(zs.sigma == doctest::Approx(std::sqrt(2.0)));
  CHECK(zs.z[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(zs.z[2] == doctest::Approx(2.0 / std::sqrt(2.0)));
}

TEST_CASE("local values on a three-cell line") {
  std::map<geo::KmCell, double> values = {{km(0, 0), 0.0}, {km(1, 0), 0.0}, {km(2, 0), 3.0}};
  auto w = lisa::build_weights({km(0, 0), km(1, 0), km(2, 0)}, 3000.0, true);
  auto local = lisa::local_morans_i(values, w);
  // the left cell's lag cancels exactly: (2/3)(-z) + (1/3)(2z) = 0
  CHECK(std::fabs(local.at(km(0, 0))) < 1e-12);
  CHECK(local.at(km(1, 0)) == doctest::Approx(-0.25));
  CHECK(local.at(km(2, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("a checkerboard field is locally negative everywhere") {
  std::map<geo::KmCell, double> values;
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      values[km(x, y)] = ((x + y) % 2 == 0) ? 1.0 : -1.0;
    }
  }
  std::vector<geo::KmCell> cells;
  for (const auto& [c, v] : values) cells.push_back(c);
  auto w = lisa::build_weights(cells, 1500.0, true);
  auto local = lisa::local_morans_i(values, w);
  for (const auto& [c, li] : local) {
    CHECK(li < 0.0);
  }
}

TEST_CASE("a constant field is degenerate, not an error") {
  std::map<geo::KmCell, double> values = {{km(0, 0), 7.0}, {km(1, 0), 7.0}, {km(5, 5), 7.0}};
  auto r = lisa::run_lisa(values, {});
  CHECK(r.degenerate);
  REQUIRE(r.cells.size() == 3);
  for (const auto& c : r.cells) {
    CHECK(c.cls == lisa::LisaClass::NS);
    CHECK(std::isnan(c.local_i));
    CHECK(std::isnan(c.pseudo_p));
  }
  CHECK(r.cells_in_class(lisa::LisaClass::HH).empty());
}

TEST_CASE("a single cell degenerates the same way") {
  auto r = lisa::run_lisa({{km(0, 0), 42.0}}, {});
  CHECK(r.degenerate);
  CHECK(r.cells[0].cls == lisa::LisaClass::NS);
}

TEST_CASE("cells with no neighbor in range come back isolated") {
  std::map<geo::KmCell, double> values = {
      {km(0, 0), 1.0}, {km(1, 0), 2.0}, {km(50, 50), 9.0}};
  auto r = lisa::run_lisa(values, {});
  const auto& far_cell = r.cells[2];
  CHECK(far_cell.cell == km(50, 50));
  CHECK(far_cell.cls == lisa::LisaClass::ISOLATED);
  CHECK(std::isnan(far_cell.local_i));
  CHECK(std::isnan(far_cell.pseudo_p));
  CHECK_FALSE(std::isnan(far_cell.z));
}

TEST_CASE("classification follows the quadrant of z and its lag") {
  using lisa::LisaClass;
  CHECK(lisa::classify(1.0, 1.0, 0.01) == LisaClass::HH);
  CHECK(lisa::classify(-1.0, -1.0, 0.01) == LisaClass::LL);
  CHECK(lisa::classify(1.0, -1.0, 0.01) == LisaClass::HL);
  CHECK(lisa::classify(-1.0, 1.0, 0.01) == LisaClass::LH);
  CHECK(lisa::classify(1.0, 1.0, 0.06) == LisaClass::NS);
  CHECK(lisa::classify(1.0, 1.0, 0.05) == LisaClass::HH);  // alpha is inclusive
  CHECK(lisa::classify(0.0, 1.0, 0.01) == LisaClass::NS);
  CHECK(lisa::classify(1.0, 0.0, 0.01) == LisaClass::NS);
}

TEST_CASE("class names round trip") {
  using lisa::LisaClass;
  for (LisaClass c : {LisaClass::HH, LisaClass::LL, LisaClass::HL, LisaClass::LH, LisaClass::NS,
                      LisaClass::ISOLATED}) {
    CHECK(lisa::parse_class(lisa::to_string(c)) == c);
  }
  CHECK_THROWS_AS(lisa::parse_class("hh"), Error);
}

TEST_CASE("the permutation test matches a naive restatement bit for bit") {
  DetRng rng(2024);
  lisa::LisaConfig cfg;
  cfg.permutations = 49;
  for (int trial = 0; trial < 10; ++trial) {
    cfg.seed = rng.next();
    auto values = random_field(rng, 5, 5);
    auto got = lisa::run_lisa(values, cfg);
    auto want = testoracle::naive_lisa(values, cfg);
    REQUIRE(got.cells.size() == want.cells.size());
    for (size_t i = 0; i < got.cells.size(); ++i) {
      const auto& g = got.cells[i];
      const auto& w = want.cells[i];
      CHECK(g.cell == w.cell);
      CHECK(same(g.z, w.z));
      CHECK(same(g.lag, w.lag));
      CHECK(same(g.local_i, w.local_i));
      CHECK(same(g.pseudo_p, w.pseudo_p));
      CHECK(g.cls == w.cls);
    }
  }
}

TEST_CASE("the naive agreement holds without row standardization") {
  DetRng rng(77);
  lisa::LisaConfig cfg;
  cfg.permutations = 49;
  cfg.row_standardize = false;
  cfg.seed = 5;
  auto values = random_field(rng, 4, 4);
  auto got = lisa::run_lisa(values, cfg);
  auto want = testoracle::naive_lisa(values, cfg);
  for (size_t i = 0; i < got.cells.size(); ++i) {
    CHECK(same(got.cells[i].local_i, want.cells[i].local_i));
    CHECK(same(got.cells[i].pseudo_p, want.cells[i].pseudo_p));
    CHECK(got.cells[i].cls == want.cells[i].cls);
  }
}

TEST_CASE("pseudo p values live on the permutation lattice") {
  DetRng rng(31);
  lisa::LisaConfig cfg;
  cfg.permutations = 499;
  auto values = random_field(rng, 4, 4);
  auto r = lisa::run_lisa(values, cfg);
  for (const auto& c : r.cells) {
    if (std::isnan(c.pseudo_p)) continue;
    const double scaled = c.pseudo_p * 500.0;
    CHECK(std::fabs(scaled - std::round(scaled)) < 1e-9);
    CHECK(c.pseudo_p >= 1.0 / 500.0);
    CHECK(c.pseudo_p <= 1.0);
  }
}

TEST_CASE("the same seed reproduces the run and a new seed moves it") {
  DetRng rng(8);
  auto values = random_field(rng, 6, 6);
  lisa::LisaConfig cfg;
  cfg.permutations = 99;
  cfg.seed = 11;
  auto a = lisa::run_lisa(values, cfg);
  auto b = lisa::run_lisa(values, cfg);
  REQUIRE(a.cells.size() == b.cells.size());
  bool identical = true;
  for (size_t i = 0; i < a.cells.size(); ++i) {
    identical = identical && same(a.cells[i].pseudo_p, b.cells[i].pseudo_p);
  }
  CHECK(identical);

  cfg.seed = 12;
  auto c = lisa::run_lisa(values, cfg);
  bool moved = false;
  for (size_t i = 0; i < a.cells.size(); ++i) {
    if (!same(a.cells[i].pseudo_p, c.cells[i].pseudo_p)) moved = true;
  }
  CHECK(moved);
}

TEST_CASE("positive affine rescaling leaves classes and p-values alone") {
  DetRng rng(55);
  lisa::LisaConfig cfg;
  cfg.permutations = 99;
  for (int trial = 0; trial < 5; ++trial) {
    auto values = random_field(rng, 4, 4);
    const double a = 0.5 + 10.0 * rng.uniform01();
    const double b = 1000.0 * rng.uniform01() - 500.0;
    std::map<geo::KmCell, double> scaled;
    for (const auto& [c, v] : values) scaled[c] = a * v + b;

    auto base = lisa::run_lisa(values, cfg);
    auto redone = lisa::run_lisa(scaled, cfg);
    for (size_t i = 0; i < base.cells.size(); ++i) {
      CHECK(base.cells[i].cls == redone.cells[i].cls);
      CHECK(same(base.cells[i].pseudo_p, redone.cells[i].pseudo_p));
    }
  }
}

TEST_CASE("permutation and config knobs are validated") {
  std::map<geo::KmCell, double> values = {{km(0, 0), 1.0}, {km(1, 0), 2.0}};
  lisa::LisaConfig cfg;
  cfg.permutations = 0;
  CHECK_THROWS_AS(lisa::run_lisa(values, cfg), Error);
  CHECK_THROWS_AS(lisa::run_lisa({}, {}), Error);
}

TEST_CASE("radius to the k nearest jobs is the k-th order statistic") {
  std::vector<io::JobSite> jobs = {{{600.0, 500.0}},
                                   {{700.0, 500.0}},
                                   {{800.0, 500.0}},
                                   {{900.0, 500.0}}};
  auto d = lisa::dist_to_k_jobs({km(0, 0)}, jobs, 3);
  CHECK(d.at(km(0, 0)) == doctest::Approx(300.0));
}

TEST_CASE("job radii match the sorting oracle bit for bit") {
  DetRng rng(640);
  std::vector<io::JobSite> jobs;
  for (int j = 0; j < 60; ++j) {
    jobs.push_back({{20000.0 * rng.uniform01(), 20000.0 * rng.uniform01()}});
  }
  std::vector<geo::KmCell> cells;
  for (int i = 0; i < 8; ++i) {
    cells.push_back(km(static_cast<int>(rng.bounded(20)), static_cast<int>(rng.bounded(20))));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  for (int k : {1, 7, 60}) {
    auto got = lisa::dist_to_k_jobs(cells, jobs, k);
    for (geo::KmCell c : cells) {
      CHECK(got.at(c) == testoracle::naive_kth_job_dist(c, jobs, k));
    }
  }
}

TEST_CASE("asking for more jobs than exist is an error") {
  std::vector<io::JobSite> jobs = {{{0.0, 0.0}}, {{1.0, 1.0}}};
  try {
    lisa::dist_to_k_jobs({km(0, 0)}, jobs, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
    CHECK(std::string(e.what()).find("at least 3") != std::string::npos);
  }
  CHECK_THROWS_AS(lisa::dist_to_k_jobs({km(0, 0)}, jobs, 0), Error);
}

TEST_CASE("results survive a file round trip") {
  DetRng rng(91);
  auto values = random_field(rng, 4, 3);
  values[km(40, 40)] = 5.0;  // isolated, so the file carries NaN fields
  lisa::LisaConfig cfg;
  cfg.permutations = 99;
  auto r = lisa::run_lisa(values, cfg);

  const std::filesystem::path dir = testutil::scratch_dir("lisa_roundtrip");
  const std::string path = (dir / "lisa.csv").string();
  lisa::write_lisa(path, r);
  auto back = lisa::read_lisa(path);
  REQUIRE(back.cells.size() == r.cells.size());
  for (size_t i = 0; i < r.cells.size(); ++i) {
    CHECK(back.cells[i].cell == r.cells[i].cell);
    CHECK(back.cells[i].cls == r.cells[i].cls);
    if (std::isnan(r.cells[i].pseudo_p)) {
      CHECK(std::isnan(back.cells[i].pseudo_p));
    } else {
      CHECK(back.cells[i].pseudo_p == doctest::Approx(r.cells[i].pseudo_p).epsilon(1e-6));
    }
  }
}
