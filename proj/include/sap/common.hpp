// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sap {

/// Raised for every contract violation surfaced to callers: bad input files,
/// dangling references, dimension mismatches.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in source-image pixels, top-left origin.
struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// True when the box has positive extent and lies inside a width x height image.
bool bbox_within(const BBox& box, double width, double height);

/// Shortest round-trip decimal form, so integral pixel values print as "10".
std::string format_number(double value);

/// "[x, y, w, h]"
std::string format_bbox(const BBox& box);

}  // namespace sap
