#include <cmath>
#include <limits>

#include "doctest.h"
#include "support.hpp"

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"

using namespace crimematch;

TEST_CASE("split_line handles quotes and empty fields") {
  CHECK(csv::split_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(csv::split_line("\"x, y\",\"he said \"\"hi\"\"\",z") ==
        std::vector<std::string>{"x, y", "he said \"hi\"", "z"});
  CHECK(csv::split_line("a;b", ';') == std::vector<std::string>{"a", "b"});
}

TEST_CASE("escape round-trips through split_line") {
  for (std::string s : {"plain", "with,comma", "with \"quote\"", ""}) {
    CHECK(csv::split_line(csv::escape(s) + ",end") == std::vector<std::string>{s, "end"});
  }
}

TEST_CASE("format_double is shortest round-trip text") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 111194.92664455873, 0.0}) {
    CHECK(*csv::parse_double(csv::format_double(v)) == v);
  }
  CHECK(csv::format_double(0.1) == "0.1");
  CHECK(csv::format_double(2.0) == "2");
}

TEST_CASE("numeric parsing is strict") {
  CHECK_FALSE(csv::parse_double("abc").has_value());
  CHECK_FALSE(csv::parse_double("1.5x").has_value());
  CHECK_FALSE(csv::parse_double("").has_value());
  CHECK(*csv::parse_double(" 2.5 ") == 2.5);
  CHECK(*csv::parse_int("4000") == 4000);
  CHECK(*csv::parse_int("4000.0") == 4000);
  CHECK_FALSE(csv::parse_int("40.5").has_value());
}

TEST_CASE("read reports missing columns by name") {
  const auto dir = test_support::scratch("csv");
  test_support::write(dir / "t.csv", "a,b\n1,2\n3,4\n");
  const auto t = csv::read(dir / "t.csv");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1].line == 3);
  CHECK(*t.column("b") == 1);
  try {
    (void)t.require_column("median_income", "ingest");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("median_income") != std::string::npos);
    CHECK(e.kind() == ErrorKind::data);
  }
  CHECK_THROWS_AS(csv::read(dir / "missing.csv"), Error);
}
