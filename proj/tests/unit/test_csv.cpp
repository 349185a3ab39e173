#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "support.hpp"
#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

using namespace thermopool;
using namespace thermopool::testing;

TEST_CASE("format_double round-trips exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(parse_double(format_double(v), "test") == v);
  }
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("parse helpers reject junk") {
  CHECK_THROWS_AS(parse_double("1.5x", "here"), Error);
  CHECK_THROWS_AS(parse_int("12.5", "here"), Error);
  CHECK(parse_int(" 42 ", "here") == 42);
  CHECK(parse_double("-inf", "here") == -std::numeric_limits<double>::infinity());
  const auto v = parse_double_list("0, 10,20.5");
  REQUIRE(v.size() == 3);
  CHECK(v[2] == 20.5);
}

TEST_CASE("csv header lookup") {
  std::istringstream in("a,b,c\n1,2,3\n\n4,5,6\n");
  const CsvTable t = parse_csv(in, "mem.csv");
  CHECK(t.rows.size() == 2);
  CHECK(t.column("c") == 2);
  CHECK_FALSE(t.has_column("d"));
  try {
    (void)t.column("d");
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
  }
}

TEST_CASE("key=value files") {
  TempDir dir("kv");
  write_text(dir / "run.txt", "# comment\nvariant = slopes  # trailing\n\nseed=7\nseed = 8\n");
  const auto kv = read_key_values(dir / "run.txt");
  CHECK(kv.size() == 2);
  CHECK(kv.at("variant") == "slopes");
  CHECK(kv.at("seed") == "8");
  write_text(dir / "bad.txt", "variant slopes\n");
  try {
    (void)read_key_values(dir / "bad.txt");
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}
