// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sap/common.hpp"
#include "sap/gallery.hpp"
#include "sap/permutation.hpp"

namespace sap {

struct Target {
  std::string image_id;
  BBox bbox;

  friend bool operator==(const Target&, const Target&) = default;
};

/// query_id -> target person.
using GroundTruth = std::map<std::string, Target>;

inline constexpr double kDefaultIouThreshold = 0.5;

double iou(const BBox& a, const BBox& b);

/// Same source image and IoU >= threshold.
bool is_match(const PersonCrop& crop, const Target& target, double iou_threshold);

/// 1-based rank of the first matching crop in the result, if any.
std::optional<std::size_t> first_match_rank(const RankedResult& result, const Gallery& gallery,
                                            const Target& target, double iou_threshold);

/// Percentage of queries whose first match is at rank <= k.
double recall_at_k(std::span<const std::optional<std::size_t>> first_ranks, std::size_t k);

/// Single relevant target: 1/r for a first match at rank r, 0 when absent.
double average_precision(std::optional<std::size_t> first_rank);

/// Mean AP over queries, as a percentage.
double mean_average_precision(std::span<const std::optional<std::size_t>> first_ranks);

struct EvalReport {
  std::map<std::size_t, double> r_at;  // k in {1, 5, 10}
  double map_score = 0.0;
  std::map<std::string, std::optional<std::size_t>> per_query_ranks;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline constexpr std::size_t kReportedRanks[] = {1, 5, 10};

/// Throws when `results` is empty, a query lacks ground truth, or a query id
/// repeats.
EvalReport evaluate(const std::vector<RankedResult>& results, const Gallery& gallery,
                    const GroundTruth& gt, double iou_threshold = kDefaultIouThreshold);

double recall_at_k(const std::vector<RankedResult>& results, const Gallery& gallery,
                   const GroundTruth& gt, std::size_t k,
                   double iou_threshold = kDefaultIouThreshold);

/// Two-decimal percentage, e.g. "60.57".
std::string format_percent(double value);

/// {"R@1": .., "R@5": .., "R@10": .., "mAP": .., "per_query": {...}}
std::string report_to_json(const EvalReport& report);

/// Human-readable one-line-per-metric table.
std::string report_to_table(const EvalReport& report);

/// Per-image time units for the domain stage (mu_s) and the vision-language
/// model (mu_m); N gallery size; K candidates re-ranked; M candidates in the
/// gallery-wide model's batch-ranking pass.
struct CostModel {
  double mu_s = 0.0;
  double mu_m = 0.0;
  double n = 0.0;
  double k = 0.0;
  double m = 0.0;
};

enum class CostMode { kTwoStage, kGalleryWideMllm, kGalleryWideMllmM, kDomainOnly };

/// kTwoStage:          N*mu_s + K*mu_m
/// kGalleryWideMllm:   N*mu_m + K*mu_m
/// kGalleryWideMllmM:  N*mu_m + M*mu_m
/// kDomainOnly:        N*mu_s
/// Throws on negative parameters or K > N.
double estimate_cost(const CostModel& cm, CostMode mode);

}  // namespace sap
