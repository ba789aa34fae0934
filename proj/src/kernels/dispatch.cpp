// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "sap/common.hpp"
#include "sap/kernels.hpp"

namespace sap::kernels {

namespace {

Isa best_available() {
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("SAP_KERNEL")) {
    const std::string name(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (name == isa_name(isa) && isa_available(isa)) return isa;
    }
  }
  return best_available();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw Error("kernel not available: " + std::string(isa_name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

DotFn dot_fn(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2: return &avx2::dot;
#endif
#if defined(__aarch64__)
    case Isa::kNeon: return &neon::dot;
#endif
    default: return &scalar::dot;
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error("dot: length mismatch");
  return dot_fn(active_isa())(a.data(), b.data(), a.size());
}

void dot_rows(std::span<const float> query, std::span<const float> rows, std::size_t dim,
              std::span<double> out) {
  if (query.size() != dim || rows.size() != out.size() * dim) {
    throw Error("dot_rows: shape mismatch");
  }
  const DotFn fn = dot_fn(active_isa());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = fn(query.data(), rows.data() + r * dim, dim);
  }
}

}  // namespace sap::kernels
