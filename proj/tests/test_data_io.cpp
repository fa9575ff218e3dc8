#include "koopman/data_io.hpp"
#include "koopman/error.hpp"

#include <doctest.h>

#include <filesystem>

using namespace koopman;
namespace fs = std::filesystem;

namespace {

LoadPanel column(std::initializer_list<double> v) {
  LoadPanel p;
  p.values.resize(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) p.values(i++, 0) = x;
  p.station_ids = {"s"};
  return p;
}

LoadPanel ramp(Index n, Index d) {
  LoadPanel p;
  p.values.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) p.values(i, j) = static_cast<double>(i * (j + 1));
  for (Index j = 0; j < d; ++j) p.station_ids.push_back("s" + std::to_string(j));
  return p;
}

}  // namespace

TEST_CASE("hourly csv parses into a panel") {
  const auto p = parse_csv(
      "timestamp,a,b\n"
      "2014-01-01T00:00:00Z,1,2\n"
      "2014-01-01T01:00:00Z,3,4\n"
      "2014-01-01T02:00:00Z,5,6\n");
  CHECK(p.samples() == 3);
  CHECK(p.stations() == 2);
  CHECK(p.sample_interval == 3600.0);
  CHECK(p.station_ids == std::vector<std::string>{"a", "b"});
  CHECK(p.start_timestamp == 1388534400.0);
  CHECK(p.values(2, 1) == 6.0);
}

TEST_CASE("epoch stamps and schema column selection") {
  CsvSchema schema;
  schema.timestamp_column = "t";
  schema.stations = {"b"};
  const auto p = parse_csv("a,t,b\n1,0,10\n2,60,20\n", schema);
  CHECK(p.stations() == 1);
  CHECK(p.sample_interval == 60.0);
  CHECK(p.values(1, 0) == 20.0);
}

TEST_CASE("csv errors") {
  CHECK_THROWS_AS(parse_csv("t,a\n0,1\n3600,2\n10800,3\n"), SpacingError);
  CHECK_THROWS_AS(parse_csv("t,a\n0,1\n"), InsufficientData);
  try {
    parse_csv("t,a,b\n0,1,2\n3600,abc,3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 2);
  }
  CHECK_THROWS_AS(parse_csv("t,a\n0,1\n3600,\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("t,a\n0,1\n3600,nan\n"), ParseError);
  CHECK_THROWS_AS(load_csv("/nonexistent/panel.csv"), FileError);
}

TEST_CASE("timestamp formats") {
  double t = 0.0;
  CHECK(parse_timestamp("1970-01-02 00:00", t));
  CHECK(t == 86400.0);
  CHECK(parse_timestamp("2014-01-01T01:00:00+01:00", t));
  CHECK(t == 1388534400.0);
  CHECK(parse_timestamp("12.5", t));
  CHECK(t == 12.5);
  CHECK_FALSE(parse_timestamp("yesterday", t));
}

TEST_CASE("min-max normalization") {
  auto n = minmax_normalize(column({2, 4, 6}));
  CHECK(n.panel.values(0, 0) == 0.0);
  CHECK(n.panel.values(1, 0) == 0.5);
  CHECK(n.panel.values(2, 0) == 1.0);
  CHECK(n.stats.min(0) == 2.0);
  CHECK(n.stats.max(0) == 6.0);

  n = minmax_normalize(column({5, 5, 5}));
  CHECK(n.panel.values.isZero());
  CHECK(n.stats.constant[0]);

  n = minmax_normalize(column({0, 1}));
  CHECK(n.panel.values(0, 0) == 0.0);
  CHECK(n.panel.values(1, 0) == 1.0);
}

TEST_CASE("normalization round trip and range") {
  const auto p = ramp(20, 3);
  for (auto mode : {NormMode::PerStation, NormMode::Global}) {
    const auto n = minmax_normalize(p, mode);
    CHECK(n.panel.values.minCoeff() >= 0.0);
    CHECK(n.panel.values.maxCoeff() <= 1.0);
    const auto back = denormalize(n.panel, n.stats);
    CHECK((back.values - p.values).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("train/test split") {
  const auto p = ramp(336, 2);
  const auto s = split(p, {{0, 168}, {168, 336}});
  CHECK(s.train.samples() == 168);
  CHECK(s.test.samples() == 168);
  CHECK(s.test.start_timestamp == p.timestamp(168));
  // statistics come from the training window only
  CHECK(s.stats.max(0) == 167.0);
  CHECK(s.test.values(0, 0) == doctest::Approx(168.0 / 167.0));

  CHECK_THROWS_AS(split(p, {{0, 10}, {5, 15}}), RangeError);
  CHECK_THROWS_AS(split(p, {{0, 168}, {168, 400}}), RangeError);
  CHECK_THROWS_AS(split(p, {{20, 30}, {0, 10}}), RangeError);
}

TEST_CASE("panel csv round trip") {
  auto p = ramp(5, 2);
  p.values(3, 1) = 0.1 + 0.2;
  p.start_timestamp = 1388534400.0;
  const fs::path path = fs::temp_directory_path() / "koopman_test_roundtrip.csv";
  write_panel_csv(path, p);
  const auto q = load_csv(path);
  fs::remove(path);
  CHECK(q.values == p.values);
  CHECK(q.station_ids == p.station_ids);
  CHECK(q.start_timestamp == p.start_timestamp);
  CHECK(q.sample_interval == p.sample_interval);
}
