// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/permutation.hpp"

#include <limits>

#include "sap/common.hpp"

namespace sap {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// Parses "[int, int, ...]" starting at raw[pos] == '['. Returns nullopt when
/// the bracket does not open a well-formed non-empty integer list.
std::optional<std::vector<std::int64_t>> list_at(std::string_view raw, std::size_t pos) {
  constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> values;
  std::size_t i = pos + 1;
  auto skip_space = [&] {
    while (i < raw.size() && is_space(raw[i])) ++i;
  };
  while (true) {
    skip_space();
    bool negative = false;
    if (i < raw.size() && (raw[i] == '-' || raw[i] == '+')) {
      negative = raw[i] == '-';
      ++i;
    }
    if (i >= raw.size() || !is_digit(raw[i])) return std::nullopt;
    std::int64_t value = 0;
    for (; i < raw.size() && is_digit(raw[i]); ++i) {
      const int digit = raw[i] - '0';
      value = value > (kMax - digit) / 10 ? kMax : value * 10 + digit;
    }
    values.push_back(negative ? -value : value);
    skip_space();
    if (i >= raw.size()) return std::nullopt;
    if (raw[i] == ']') return values;
    if (raw[i] != ',') return std::nullopt;
    ++i;
  }
}

}  // namespace

bool is_permutation_of_1_to_k(std::span<const std::size_t> order, std::size_t k) {
  if (order.size() != k) return false;
  std::vector<bool> seen(k + 1, false);
  for (auto idx : order) {
    if (idx < 1 || idx > k || seen[idx]) return false;
    seen[idx] = true;
  }
  return true;
}

std::optional<std::vector<std::int64_t>> extract_index_list(std::string_view raw) {
  for (std::size_t pos = raw.find('['); pos != std::string_view::npos; pos = raw.find('[', pos + 1)) {
    if (auto list = list_at(raw, pos)) return list;
  }
  return std::nullopt;
}

Permutation repair_ranking(std::span<const std::int64_t> raw_list, std::size_t k) {
  Permutation perm;
  perm.order.reserve(k);
  std::vector<bool> seen(k + 1, false);
  for (auto v : raw_list) {
    if (v < 1 || static_cast<std::uint64_t>(v) > k) continue;
    const auto idx = static_cast<std::size_t>(v);
    if (seen[idx]) continue;
    seen[idx] = true;
    perm.order.push_back(idx);
  }
  for (std::size_t idx = 1; idx <= k; ++idx) {
    if (!seen[idx]) perm.order.push_back(idx);
  }
  return perm;
}

std::optional<Permutation> parse_ranking(std::string_view raw, std::size_t k) {
  auto list = extract_index_list(raw);
  if (!list) return std::nullopt;
  return repair_ranking(*list, k);
}

std::vector<ScoredCandidate> apply_rerank(const std::vector<ScoredCandidate>& coarse,
                                          const Permutation& perm, std::size_t k) {
  if (perm.order.size() != k) {
    throw Error("apply_rerank: permutation has " + std::to_string(perm.order.size()) +
                " entries, expected " + std::to_string(k));
  }
  if (k > coarse.size()) {
    throw Error("apply_rerank: K=" + std::to_string(k) + " exceeds ranking length " +
                std::to_string(coarse.size()));
  }
  if (!is_permutation_of_1_to_k(perm.order, k)) throw Error("apply_rerank: not a permutation of 1..K");

  std::vector<ScoredCandidate> out;
  out.reserve(coarse.size());
  for (std::size_t i = 0; i < k; ++i) out.push_back(coarse[perm.order[i] - 1]);
  out.insert(out.end(), coarse.begin() + static_cast<std::ptrdiff_t>(k), coarse.end());
  return out;
}

}  // namespace sap
