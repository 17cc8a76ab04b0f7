/* Copyright 2026 The Motion Scaling Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "msl/io.hpp"

namespace msl {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("msl_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TEST_CASE("round6 is decimal-stable", "[io]") {
  CHECK(round6(0.1234567890123) == 0.123457);
  CHECK(round6(-0.1234564) == -0.123456);
  CHECK(round6(1e12 + 0.4) == 1e12 + 0.4);  // large values keep integer part
  CHECK(round6(round6(3.14159265358979)) == round6(3.14159265358979));
  CHECK(std::isnan(round6(std::nan(""))));
}

TEST_CASE("jsonl write read round trip", "[io]") {
  TempDir tmp;
  const fs::path file = tmp.path / "rows.jsonl";
  append_jsonl(file, Json{{"a", 1}, {"b", "x"}});
  append_jsonl(file, Json{{"a", 2}, {"b", "y"}});
  auto rows = read_jsonl(file);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["a"] == 1);
  CHECK(rows[1]["b"] == "y");
}

TEST_CASE("jsonl rejects malformed lines", "[io]") {
  TempDir tmp;
  const fs::path file = tmp.path / "bad.jsonl";
  write_text_file(file, "{\"ok\":1}\nnot json\n");
  CHECK_THROWS_AS(read_jsonl(file), std::runtime_error);
  CHECK_THROWS_AS(read_jsonl(tmp.path / "missing.jsonl"), std::runtime_error);
}

TEST_CASE("csv writer enforces width and fixed format", "[io]") {
  CsvWriter csv({"x", "loss"});
  csv.append_numeric_row({1.0, 0.123456789123});
  csv.append_row({"2", "abc"});
  CHECK(csv.str() == "x,loss\n1,0.123456789\n2,abc\n");
  CHECK_THROWS_AS(csv.append_row({"only-one"}), std::invalid_argument);
}

TEST_CASE("format_number is locale-free and compact", "[io]") {
  CHECK(format_number(1234.5678901234) == "1234.56789");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-0.5) == "-0.5");
  CHECK(format_number(1e-9) == "1e-09");
}

TEST_CASE("content hash is stable", "[io]") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 12638187200555641996ull);
  CHECK(hash_hex("abc") == hash_hex("abc"));
  CHECK(hash_hex("abc") != hash_hex("abd"));
  CHECK(hash_hex("abc").size() == 16);
}

}  // namespace
}  // namespace msl
