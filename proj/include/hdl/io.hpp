#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hdl {

using json = nlohmann::json;

// JSON document whose floating-point numbers are parsed straight to 32-bit
// (strtof), so decimal text maps to the nearest float without passing
// through double.
using float_json = nlohmann::basic_json<std::map, std::vector, std::string, bool,
                                        std::int64_t, std::uint64_t, float>;

// Calls fn(line_text, line_number) for every non-blank line; line numbers are
// 1-based.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view, std::size_t)>& fn);

// Parses every non-blank line as JSON. Parse failures and exceptions thrown
// by fn are rethrown as Error("parse_error") naming the file and line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

// Shortest decimal text that round-trips bit-exactly.
std::string format_float(float value);
std::string format_double(double value);
// Fixed-precision rendering used for human-facing tables.
std::string format_fixed(double value, int digits);

// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string hash_file(const std::filesystem::path& path);

std::ofstream open_output(const std::filesystem::path& path);

// Minimal RFC 4180 writer: fields containing a comma, quote or newline are
// quoted.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace hdl
