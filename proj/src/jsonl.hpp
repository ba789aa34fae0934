// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

// Line-delimited JSON helpers shared by the file readers.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"
#include "sap/common.hpp"

namespace sap::detail {

/// Calls fn(record, line_number) for each non-blank line. Parse failures and
/// exceptions from fn are rethrown as "<path>:<line>: <message>".
/// Calls fn on every non-blank line. Failures carry "path:line:" context and
/// are thrown, or handed to on_error (and skipped) when one is given.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const nlohmann::json&, std::size_t)>& fn,
                           const std::function<void(const Error&)>& on_error = {}) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    Error err(path.string() + ":" + std::to_string(line_no) + ": " + msg);
    if (!on_error) throw err;
    on_error(err);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed record: ") + e.what());
      continue;
    }
    try {
      fn(record, line_no);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
      fail(e.what());
    }
  }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field) {
  if (!obj.is_object()) throw Error("malformed record: expected a JSON object");
  auto it = obj.find(field);
  if (it == obj.end()) throw Error(std::string("malformed record: missing field '") + field + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_string()) throw Error(std::string("malformed record: '") + field + "' must be a string");
  return v.get<std::string>();
}

inline BBox parse_bbox(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 4) throw Error("malformed record: bbox must be [x, y, w, h]");
  for (const auto& c : v) {
    if (!c.is_number()) throw Error("malformed record: bbox entries must be numbers");
  }
  return BBox{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

inline nlohmann::json number_json(double value) {
  double integral = 0;
  if (std::modf(value, &integral) == 0.0 && std::fabs(value) < 9.0e15) {
    return static_cast<std::int64_t>(value);
  }
  return value;
}

inline nlohmann::json bbox_json(const BBox& b) {
  return nlohmann::json::array({number_json(b.x), number_json(b.y), number_json(b.w), number_json(b.h)});
}

/// Writes to a sibling temp file and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sap::detail
