// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/common.hpp"

#include <array>
#include <charconv>
#include <cmath>

namespace sap {

bool bbox_within(const BBox& box, double width, double height) {
  if (!(std::isfinite(box.x) && std::isfinite(box.y) && std::isfinite(box.w) &&
        std::isfinite(box.h))) {
    return false;
  }
  return box.x >= 0 && box.y >= 0 && box.w > 0 && box.h > 0 && box.x + box.w <= width &&
         box.y + box.h <= height;
}

std::string format_number(double value) {
  if (value == 0) value = 0;  // drop the sign of -0
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf.data(), end);
}

std::string format_bbox(const BBox& box) {
  return "[" + format_number(box.x) + ", " + format_number(box.y) + ", " + format_number(box.w) +
         ", " + format_number(box.h) + "]";
}

}  // namespace sap
