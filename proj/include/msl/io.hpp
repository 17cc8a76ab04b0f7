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

#ifndef MSL_IO_HPP_
#define MSL_IO_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msl/common.hpp"

namespace msl {

using Json = nlohmann::json;

// Round to 6 decimals before serialization. All persisted floating-point
// values go through this so that re-generated files are decimal-stable.
inline double round6(double v) {
  if (!std::isfinite(v)) return v;
  return std::round(v * 1e6) / 1e6;
}

// Fixed numeric formatting for CSV and report output: %.9g everywhere.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const Json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad json");
    }
    fn(j);
  }
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::vector<Json> rows;
  for_each_jsonl(path, [&rows](const Json& j) { rows.push_back(j); });
  return rows;
}

inline void append_jsonl(const std::filesystem::path& path, const Json& row) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot open for append: " + path.string());
  out << row.dump() << "\n";
  if (!out) throw std::runtime_error("append failed: " + path.string());
}

// Minimal CSV emitter with the project-wide fixed number format.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    append_row(header);
  }

  void append_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::invalid_argument("csv row width mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  void append_numeric_row(const std::vector<double>& cells) {
    std::vector<std::string> text;
    text.reserve(cells.size());
    for (double v : cells) text.push_back(format_number(v));
    append_row(text);
  }

  const std::string& str() const { return body_; }
  void save(const std::filesystem::path& path) const { write_text_file(path, body_); }

 private:
  size_t columns_;
  std::string body_;
};

// FNV-1a over a string; used for content-addressed job identities.
inline u64 fnv1a64(const std::string& s) {
  u64 h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
  return buf;
}

}  // namespace msl

#endif  // MSL_IO_HPP_
