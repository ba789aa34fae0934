// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

// Inner-product kernels for the coarse scan. Each ISA variant takes float32
// inputs and accumulates in float64. The scalar kernel is the reference; the
// vector kernels reorder the summation and are checked against it in
// tests/unit/kernels_test.cpp.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace sap::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

namespace scalar {
double dot(const float* a, const float* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const float* a, const float* b, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const float* a, const float* b, std::size_t n);
}  // namespace neon
#endif

/// True when this build has a kernel for `isa` and the running CPU supports it.
bool isa_available(Isa isa);

/// Best available ISA, unless SAP_KERNEL=scalar|avx2|neon names another
/// available one.
Isa active_isa();

/// Pins the dispatch target (tests, benchmarking). Throws if unavailable.
void set_isa(Isa isa);

using DotFn = double (*)(const float*, const float*, std::size_t);
DotFn dot_fn(Isa isa);

/// Dispatched inner product. Spans must have equal length.
double dot(std::span<const float> a, std::span<const float> b);

/// out[i] = dot(query, rows[i*dim .. (i+1)*dim)) for every row.
void dot_rows(std::span<const float> query, std::span<const float> rows, std::size_t dim,
              std::span<double> out);

}  // namespace sap::kernels
