#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "mobiscope/csv.hpp"
#include "mobiscope/data_io.hpp"
#include "mobiscope/errors.hpp"
#include "mobiscope/toml_lite.hpp"
#include "test_util.hpp"

using namespace mobiscope;
using testutil::read_file;
using testutil::scratch_dir;
using testutil::write_file;

static std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST_CASE("csv writer produces stable bytes") {
  const auto dir = scratch_dir("csv_writer");
  const std::string path = (dir / "t.csv").string();
  {
    csv::Writer w(path, "a,b");
    w.raw_row("1,2");
    w.raw_row("3,4");
    CHECK(w.rows_written() == 2);
    w.close();
  }
  CHECK(read_file(path) == "a,b\n1,2\n3,4\n");
}

TEST_CASE("csv reader validates the header") {
  const auto dir = scratch_dir("csv_reader");
  const std::string path = (dir / "t.csv").string();
  write_file(path, "a,b\n1,2\n\n3,4\n");

  csv::Reader r(path, {"a", "b"});
  std::vector<std::string_view> f;
  CHECK(r.next(f));
  CHECK(f[0] == "1");
  CHECK(r.next(f));  // blank line skipped
  CHECK(f[1] == "4");
  CHECK_FALSE(r.next(f));

  write_file(path, "a,c\n1,2\n");
  CHECK_THROWS_AS(csv::Reader(path, {"a", "b"}), Error);
  CHECK_THROWS_AS(csv::Reader((dir / "missing.csv").string(), {"a"}), Error);
}

TEST_CASE("csv reader rejects ragged rows and carries file context") {
  const auto dir = scratch_dir("csv_ragged");
  const std::string path = (dir / "t.csv").string();
  write_file(path, "a,b\n1\n");
  csv::Reader r(path, {"a", "b"});
  std::vector<std::string_view> f;
  const std::string msg = error_message([&] { r.next(f); });
  CHECK(msg.find(path) != std::string::npos);
  CHECK(msg.find(":2") != std::string::npos);
}

TEST_CASE("csv reader strips carriage returns") {
  const auto dir = scratch_dir("csv_crlf");
  const std::string path = (dir / "t.csv").string();
  write_file(path, "a,b\r\n1,2\r\n");
  csv::Reader r(path, {"a", "b"});
  std::vector<std::string_view> f;
  CHECK(r.next(f));
  CHECK(f[1] == "2");
}

TEST_CASE("field parsers name the column on failure") {
  const auto dir = scratch_dir("csv_fields");
  const std::string path = (dir / "t.csv").string();
  write_file(path, "a,b,c\n1.5,x,2\n");
  csv::Reader r(path, {"a", "b", "c"});
  std::vector<std::string_view> f;
  REQUIRE(r.next(f));
  CHECK(r.field_double(f[0], "a") == 1.5);
  CHECK(r.field_int(f[2], "c") == 2);
  const std::string msg = error_message([&] { r.field_double(f[1], "b"); });
  CHECK(msg.find("column b") != std::string::npos);
  CHECK_THROWS_AS(r.field_bool01(f[2], "c"), Error);
  CHECK(r.field_bool01("1", "flag"));
  CHECK_FALSE(r.field_bool01("0", "flag"));
}

TEST_CASE("fixed formatting is deterministic") {
  CHECK(csv::fmt_fixed(1.25, 1) == "1.2");  // banker-free snprintf rounding
  CHECK(csv::fmt_fixed(1.35, 1) == "1.4");
  CHECK(csv::fmt_fixed(-0.05, 4) == "-0.0500");
  CHECK(csv::fmt_fixed(std::numeric_limits<double>::quiet_NaN(), 2) == "nan");
  std::string s;
  csv::append_int(s, -42);
  CHECK(s == "-42");
}

TEST_CASE("g17 formatting round trips doubles") {
  for (double v : {0.0, 1.0 / 3.0, 901.38792859925762, 6172.0, 1e-300, 123456789.123456789}) {
    std::string s;
    csv::append_g17(s, v);
    CHECK(std::stod(s) == v);
  }
  std::string s;
  csv::append_g17(s, std::numeric_limits<double>::quiet_NaN());
  CHECK(s == "nan");
}

TEST_CASE("tower registry round trips and rejects duplicates") {
  const auto dir = scratch_dir("towers");
  const std::string path = (dir / "towers.csv").string();
  io::TowerRegistry reg;
  reg.add({"t1", {500.0, 500.0}});
  reg.add({"t2", {1500.0, 2500.0}});
  io::write_towers(path, reg);

  const io::TowerRegistry back = io::read_towers(path);
  CHECK(back.size() == 2);
  CHECK(back.find("t2").has_value());
  CHECK(back.site(*back.find("t2")).location.x == 1500.0);
  CHECK_FALSE(back.find("t9").has_value());

  write_file(path, "tower_id,x_m,y_m\nt1,0,0\nt1,5,5\n");
  CHECK_THROWS_AS(io::read_towers(path), Error);
  write_file(path, "tower_id,x_m,y_m\nt1,-5,0\n");
  CHECK_THROWS_AS(io::read_towers(path), Error);
}

TEST_CASE("event reading interns phones and drops unknown towers") {
  const auto dir = scratch_dir("events");
  const std::string towers_path = (dir / "towers.csv").string();
  const std::string events_path = (dir / "events.csv").string();
  write_file(towers_path, "tower_id,x_m,y_m\nt1,500,500\nt2,1500,500\n");
  write_file(events_path,
             "phone_id,timestamp,tower_id\n"
             "p1,2020-01-16T00:00,t1\n"
             "p1,2020-01-16T00:05,t2\n"
             "p2,2020-01-16T00:00,ghost\n"
             "p2,2020-01-16T00:10,t1\n");

  const io::TowerRegistry towers = io::read_towers(towers_path);
  const io::EventTable table = io::read_events(events_path, towers);
  CHECK(table.phone_ids.size() == 2);
  CHECK(table.events.size() == 3);
  CHECK(table.dropped_unknown_tower == 1);
  CHECK(table.events[0].phone == 0);
  CHECK(table.events[2].phone == 1);
}

TEST_CASE("event reading rejects traces longer than 24 hours") {
  const auto dir = scratch_dir("events_span");
  const std::string towers_path = (dir / "towers.csv").string();
  const std::string events_path = (dir / "events.csv").string();
  write_file(towers_path, "tower_id,x_m,y_m\nt1,500,500\n");
  write_file(events_path,
             "phone_id,timestamp,tower_id\n"
             "p1,2020-01-16T00:00,t1\n"
             "p1,2020-01-17T00:05,t1\n"
             "p2,2020-01-16T02:00,t1\n");

  const io::TowerRegistry towers = io::read_towers(towers_path);
  const std::string msg =
      error_message([&] { io::read_events(events_path, towers); });
  CHECK(msg.find("24 hours") != std::string::npos);
  CHECK(msg.find("p1") != std::string::npos);

  // exactly 24h is allowed; only a strictly larger span violates
  write_file(events_path,
             "phone_id,timestamp,tower_id\n"
             "p1,2020-01-16T00:00,t1\n"
             "p1,2020-01-17T00:00,t1\n");
  CHECK(io::read_events(events_path, towers).events.size() == 2);

  // without the hard cap the offending phone is dropped and counted
  write_file(events_path,
             "phone_id,timestamp,tower_id\n"
             "p1,2020-01-16T00:00,t1\n"
             "p1,2020-01-17T00:05,t1\n"
             "p2,2020-01-16T02:00,t1\n");
  const io::EventTable table = io::read_events(events_path, towers, {true, false});
  CHECK(table.dropped_span_violation == 1);
  CHECK(table.events.size() == 1);
  CHECK(table.phone_ids[table.events[0].phone] == "p2");
}

TEST_CASE("event reading enforces the 5-minute grid") {
  const auto dir = scratch_dir("events_grid");
  const std::string towers_path = (dir / "towers.csv").string();
  const std::string events_path = (dir / "events.csv").string();
  write_file(towers_path, "tower_id,x_m,y_m\nt1,500,500\n");
  write_file(events_path, "phone_id,timestamp,tower_id\np1,2020-01-16T00:03,t1\n");

  const io::TowerRegistry towers = io::read_towers(towers_path);
  CHECK_THROWS_AS(io::read_events(events_path, towers), Error);
  CHECK(io::read_events(events_path, towers, {false, true}).events.size() == 1);
}

TEST_CASE("population records round trip with derived adult flag") {
  const auto dir = scratch_dir("population");
  const std::string path = (dir / "population.csv").string();
  std::vector<io::PersonRecord> people;
  people.push_back({{150.0, 250.0}, 17, true, false, 123.45, false});
  people.push_back({{1050.0, 2250.0}, 70, false, true, 310.00, true});
  io::write_population(path, people);

  const auto back = io::read_population(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].age == 17);
  CHECK_FALSE(back[0].adult);
  CHECK(back[0].minority);
  CHECK(back[0].disposable_income == 123.45);
  CHECK(back[1].adult);
  CHECK(back[1].tertiary_edu);
}

TEST_CASE("job sites round trip") {
  const auto dir = scratch_dir("jobs");
  const std::string path = (dir / "jobs.csv").string();
  io::write_jobs(path, {{{100.0, 200.0}}, {{300.0, 400.0}}});
  const auto back = io::read_jobs(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].location.y == 400.0);
}

TEST_CASE("toml subset parses sections, scalars and arrays") {
  const toml::Table t = toml::Table::parse(
      "# comment\n"
      "top = 1\n"
      "[scenario]\n"
      "seed = 42\n"
      "worker_frac = 0.75  # trailing comment\n"
      "name = \"null case\"\n"
      "flag = true\n"
      "other = false\n"
      "[zones]\n"
      "home = [1, 2, 3, 4]\n"
      "rates = [0.5, 0.25]\n"
      "labels = [\"a\", \"b\"]\n",
      "inline");

  CHECK(t.get_int("top") == 1);
  CHECK(t.get_int("scenario.seed") == 42);
  CHECK(t.get_double("scenario.worker_frac") == 0.75);
  CHECK(t.get_double("scenario.seed") == 42.0);  // int promotes
  CHECK(t.get_string("scenario.name") == "null case");
  CHECK(t.get_bool("scenario.flag"));
  CHECK_FALSE(t.get_bool("scenario.other"));
  CHECK(t.get_int_array("zones.home") == std::vector<int64_t>{1, 2, 3, 4});
  CHECK(t.get_double_array("zones.rates") == std::vector<double>{0.5, 0.25});
  CHECK(t.get_string_array("zones.labels") == std::vector<std::string>{"a", "b"});
  CHECK(t.has("zones.home"));
  CHECK_FALSE(t.has("zones.work"));
  CHECK(t.get_int("zones.missing", 7) == 7);
}

TEST_CASE("toml subset reports errors with origin and line") {
  const std::string dup = error_message(
      [] { toml::Table::parse("a = 1\na = 2\n", "conf"); });
  CHECK(dup.find("conf:2") != std::string::npos);

  CHECK_THROWS_AS(toml::Table::parse("a == 1\n", "conf"), Error);
  CHECK_THROWS_AS(toml::Table::parse("[unclosed\na = 1\n", "conf"), Error);

  const toml::Table t = toml::Table::parse("a = 1\n", "conf");
  CHECK_THROWS_AS(t.get_string("a"), Error);    // wrong type
  CHECK_THROWS_AS(t.get_int("missing"), Error);  // required key absent
}
