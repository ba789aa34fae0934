// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace sap::kernels::avx2 {

// 8 floats per step, widened to two float64 lanes of 4. Four independent
// accumulators hide the add latency; no FMA so every product stays exact.
__attribute__((target("avx2"))) double dot(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();

  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256 va0 = _mm256_loadu_ps(a + i);
    const __m256 vb0 = _mm256_loadu_ps(b + i);
    const __m256 va1 = _mm256_loadu_ps(a + i + 8);
    const __m256 vb1 = _mm256_loadu_ps(b + i + 8);

    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va0)),
                                             _mm256_cvtps_pd(_mm256_castps256_ps128(vb0))));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va0, 1)),
                                             _mm256_cvtps_pd(_mm256_extractf128_ps(vb0, 1))));
    acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va1)),
                                             _mm256_cvtps_pd(_mm256_castps256_ps128(vb1))));
    acc3 = _mm256_add_pd(acc3, _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va1, 1)),
                                             _mm256_cvtps_pd(_mm256_extractf128_ps(vb1, 1))));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)),
                                             _mm256_cvtps_pd(_mm_loadu_ps(b + i))));
  }

  const __m256d acc = _mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);

  for (; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

}  // namespace sap::kernels::avx2

#endif
