// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/kernels.hpp"

namespace sap::kernels::scalar {

// Reference: strict left-to-right float64 accumulation. Each float*float
// product is exact in float64, so only the additions round.
double dot(const float* a, const float* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

}  // namespace sap::kernels::scalar
