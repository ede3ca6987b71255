#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "greytune/common.hpp"

namespace greytune {

using json = nlohmann::json;

/// Calls fn(record, line_number) for every non-empty line. Line numbers are
/// 1-based so they can be quoted in error messages.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, int)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": invalid JSON: " + e.what());
    }
    fn(rec, lineno);
  }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each_jsonl(path, [&](const json& rec, int) { out.push_back(rec); });
  return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& rec : records) out << rec.dump() << '\n';
}

}  // namespace greytune
