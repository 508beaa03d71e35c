#pragma once

// CSV and JSON report plumbing. Number formatting is pinned to shortest
// round-trip form so reruns with identical config and seed produce
// byte-identical CSV files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbsde/errors.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Minimal CSV writer: quoted headers are not needed for our schemas, values
/// are either preformatted strings or doubles.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns)
      : columns_(std::move(columns)) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) {
      throw ConfigError("CsvWriter: row width mismatch");
    }
    rows_.push_back(std::move(cells));
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      out += columns_[i];
      out += (i + 1 < columns_.size()) ? ',' : '\n';
    }
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        out += row[i];
        out += (i + 1 < row.size()) ? ',' : '\n';
      }
    }
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
      throw ConfigError("CsvWriter: cannot open " + path.string());
    }
    file << str();
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_json(const nlohmann::json& j,
                       const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ConfigError("write_json: cannot open " + path.string());
  file << j.dump(2) << '\n';
}

/// Run manifest: configuration digest and provenance. Wall time lives here
/// and only here; CSV payloads stay reproducible.
inline nlohmann::json make_manifest(const nlohmann::json& config,
                                    const std::vector<std::string>& outputs,
                                    double wall_ms) {
  nlohmann::json m;
  m["version"] = "0.1.0";
  m["config_hash"] = "fnv1a:" + std::to_string(fnv1a_hash(config.dump()));
  m["seed"] = config.value("seed", 0);
  m["deterministic"] = config.value("deterministic", true);
  m["outputs"] = outputs;
  m["wall_ms"] = wall_ms;
  return m;
}

}  // namespace fbsde
