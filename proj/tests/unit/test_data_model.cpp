#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "wtdl/data_model.hpp"

using namespace wtdl;

namespace {

ObservationSet small_set() {
  ObservationSet obs{Vector(2), Eigen::VectorXi(2), Matrix(2, 3)};
  obs.y << 1, 0;
  obs.d << 1, 0;
  obs.x << 1, 2, 3, 4, 5, 6;
  return obs;
}

ObservationSet random_set(Eigen::Index n, Eigen::Index p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  ObservationSet obs{Vector(n), Eigen::VectorXi(n), Matrix(n, p)};
  for (Eigen::Index i = 0; i < n; ++i) {
    obs.y(i) = z(rng) * 1e3;
    obs.d(i) = static_cast<int>(i % 2);
    for (Eigen::Index j = 0; j < p; ++j) obs.x(i, j) = z(rng) / 7.0;
  }
  return obs;
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("validate accepts a well-formed set") {
  CHECK(validate(small_set()).empty());
}

TEST_CASE("validate reports a missing arm") {
  auto obs = small_set();
  obs.d << 1, 1;
  const auto v = validate(obs);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "arm 0 absent");
}

TEST_CASE("validate names the row of a non-finite outcome") {
  auto obs = small_set();
  obs.y(1) = std::numeric_limits<double>::quiet_NaN();
  const auto v = validate(obs);
  REQUIRE(v.size() == 1);
  CHECK(contains(v[0], "row 1"));
}

TEST_CASE("validate flags shape, binary and covariate violations") {
  auto obs = small_set();
  obs.d(0) = 2;
  obs.x(1, 2) = std::numeric_limits<double>::infinity();
  const auto v = validate(obs);
  REQUIRE(v.size() == 3);  // non-binary d, non-finite x, and arm 1 now absent
  CHECK(contains(v[0], "d is not binary at row 0"));
  CHECK(contains(v[1], "row 1, column 3"));
  CHECK(v[2] == "arm 1 absent");

  ObservationSet bad{Vector(3), Eigen::VectorXi(2), Matrix(3, 1)};
  CHECK_FALSE(validate(bad).empty());
  CHECK_THROWS_AS(require_valid(bad), DomainError);
}

TEST_CASE("parse_csv reads the documented example") {
  std::istringstream in("y,d,x1,x2\n1.5,1,0.2,-0.3\n0.7,0,1.1,0.0\n");
  const auto obs = parse_csv(in);
  REQUIRE(obs.n() == 2);
  REQUIRE(obs.p() == 2);
  CHECK(obs.y(0) == 1.5);
  CHECK(obs.d(1) == 0);
  CHECK(obs.x(0, 1) == -0.3);
  CHECK(obs.x(1, 0) == 1.1);
}

TEST_CASE("parse_csv rejects a header without covariates") {
  std::istringstream in("y,d\n1,1\n");
  CHECK_THROWS_AS(parse_csv(in), FormatError);
}

TEST_CASE("parse_csv error taxonomy") {
  SECTION("non-binary treatment is a domain error naming the row") {
    std::istringstream in("y,d,x1\n1,1,0\n2,2,0\n");
    try {
      parse_csv(in, "data.csv");
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(contains(e.what(), "data.csv"));
      CHECK(contains(e.what(), "row 1"));
    }
  }
  SECTION("non-numeric cell is a parse error naming row and column") {
    std::istringstream in("y,d,x1,x2\n1,1,0,abc\n");
    try {
      parse_csv(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(contains(e.what(), "row 0"));
      CHECK(contains(e.what(), "x2"));
    }
  }
  SECTION("ragged row is a format error") {
    std::istringstream in("y,d,x1\n1,1\n");
    CHECK_THROWS_AS(parse_csv(in), FormatError);
  }
  SECTION("misnamed header is a format error") {
    std::istringstream in("y,d,x2\n1,1,0\n");
    CHECK_THROWS_AS(parse_csv(in), FormatError);
  }
  SECTION("empty input is a format error") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_csv(in), FormatError);
  }
  SECTION("missing file is an I/O error") {
    CHECK_THROWS_AS(read_csv("/nonexistent/dir/file.csv"), IoError);
  }
}

TEST_CASE("write_csv header construction and empty body") {
  ObservationSet one{Vector(0), Eigen::VectorXi(0), Matrix(0, 1)};
  std::ostringstream out;
  write_csv(one, out);
  CHECK(out.str() == "y,d,x1\n");
}

TEST_CASE("CSV round trip is exact") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto obs = random_set(17, 1 + seed, seed);
    std::stringstream buf;
    write_csv(obs, buf);
    const auto back = parse_csv(buf);
    REQUIRE(back.n() == obs.n());
    REQUIRE(back.p() == obs.p());
    CHECK(back.y == obs.y);
    CHECK(back.d == obs.d);
    CHECK(back.x == obs.x);
  }
}

TEST_CASE("CSV round trip through the filesystem") {
  const auto path = (std::filesystem::temp_directory_path() / "wtdl_roundtrip.csv").string();
  const auto obs = random_set(9, 4, 11);
  write_csv(obs, path);
  const auto back = read_csv(path);
  CHECK(back.x == obs.x);
  CHECK(back.y == obs.y);
  std::filesystem::remove(path);
}

TEST_CASE("parse_csv tolerates CRLF line endings") {
  std::istringstream in("y,d,x1\r\n1,1,2\r\n3,0,4\r\n");
  const auto obs = parse_csv(in);
  CHECK(obs.n() == 2);
  CHECK(obs.x(1, 0) == 4.0);
}
