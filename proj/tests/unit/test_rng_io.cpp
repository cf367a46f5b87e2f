#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "hdl/error.hpp"
#include "hdl/io.hpp"
#include "hdl/rng.hpp"
#include "temp_dir.hpp"

using namespace hdl;

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derived streams are distinct and stable") {
  CHECK(derive_seed(7, "split") == derive_seed(7, "split"));
  CHECK(derive_seed(7, "split") != derive_seed(7, "init"));
  CHECK(derive_seed(7, "split") != derive_seed(8, "split"));
}

TEST_CASE("uniform_index stays in range and covers it") {
  Rng rng(3);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.uniform_index(7);
    REQUIRE(v < 7);
    ++seen[v];
  }
  for (int c : seen) CHECK(c > 800);
}

TEST_CASE("uniform01 and normal have the expected moments") {
  Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  Rng r1(5), r2(5);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("shortest float formatting round-trips bit-exactly") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const float f = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-8, 8)));
    const auto text = format_float(f);
    CHECK(std::strtof(text.c_str(), nullptr) == f);
  }
  CHECK(format_fixed(1.0 / 3.0, 3) == "0.333");
  CHECK(format_fixed(1e300, 6).size() > 0);
}

TEST_CASE("float_json parses decimals directly to float") {
  const auto doc = float_json::parse(R"({"v":[0.1, 1e-45, 3.4028235e38]})");
  const auto v = doc["v"].get<std::vector<float>>();
  CHECK(v[0] == 0.1f);
  CHECK(v[1] == std::strtof("1e-45", nullptr));
  CHECK(v[2] == std::strtof("3.4028235e38", nullptr));
}

TEST_CASE("CSV writer quotes and reader round-trips") {
  testing_support::TempDir dir;
  const auto path = dir / "t.csv";
  {
    CsvWriter w(path);
    w.row({"a", "b,c", "say \"hi\""});
    w.row({"", "x\ny", "z"});
  }
  const auto rows = read_csv(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "say \"hi\""});
  CHECK(rows[1] == std::vector<std::string>{"", "x\ny", "z"});
}

TEST_CASE("jsonl errors carry file and line number") {
  testing_support::TempDir dir;
  const auto path = dir / "bad.jsonl";
  {
    std::ofstream out(path);
    out << "{\"a\":1}\n\n{oops\n";
  }
  try {
    for_each_jsonl(path, [](const json&, std::size_t) {});
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == "parse_error");
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("hash_file is content addressed") {
  testing_support::TempDir dir;
  {
    std::ofstream(dir / "a") << "foobar";
    std::ofstream(dir / "b") << "foobar";
    std::ofstream(dir / "c") << "foobaz";
  }
  CHECK(hash_file(dir / "a") == "85944171f73967e8");
  CHECK(hash_file(dir / "a") == hash_file(dir / "b"));
  CHECK(hash_file(dir / "a") != hash_file(dir / "c"));
}
