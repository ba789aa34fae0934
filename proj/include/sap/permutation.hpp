// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sap/retrieval.hpp"

namespace sap {

/// 1-based reordering of K candidates: order[0] is the index of the best one.
struct Permutation {
  std::vector<std::size_t> order;

  friend bool operator==(const Permutation&, const Permutation&) = default;
};

bool is_permutation_of_1_to_k(std::span<const std::size_t> order, std::size_t k);

/// First bracketed, comma-separated list of one or more integers in `raw`, or
/// nullopt. Values that overflow int64 saturate.
std::optional<std::vector<std::int64_t>> extract_index_list(std::string_view raw);

/// Drops out-of-range entries, keeps the first of any duplicates, then appends
/// the missing indices in ascending order. Identity on valid permutations.
Permutation repair_ranking(std::span<const std::int64_t> raw_list, std::size_t k);

/// extract_index_list followed by repair_ranking. nullopt is the parse failure
/// signal; this never throws.
std::optional<Permutation> parse_ranking(std::string_view raw, std::size_t k);

struct RankedResult {
  std::string query_id;
  std::vector<ScoredCandidate> final_order;
  bool rerank_applied = false;
  std::string raw_ranker_text;

  friend bool operator==(const RankedResult&, const RankedResult&) = default;
};

/// Reorders the first K entries of the coarse ranking by `perm`; the tail is
/// copied unchanged.
std::vector<ScoredCandidate> apply_rerank(const std::vector<ScoredCandidate>& coarse,
                                          const Permutation& perm, std::size_t k);

}  // namespace sap
