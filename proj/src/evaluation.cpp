// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace sap {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool is_match(const PersonCrop& crop, const Target& target, double iou_threshold) {
  return crop.source_image_id == target.image_id && iou(crop.bbox, target.bbox) >= iou_threshold;
}

std::optional<std::size_t> first_match_rank(const RankedResult& result, const Gallery& gallery,
                                            const Target& target, double iou_threshold) {
  for (std::size_t i = 0; i < result.final_order.size(); ++i) {
    const auto* crop = gallery.find_crop(result.final_order[i].crop_id);
    if (crop == nullptr) throw Error("dangling crop_id in results: " + result.final_order[i].crop_id);
    if (is_match(*crop, target, iou_threshold)) return i + 1;
  }
  return std::nullopt;
}

double recall_at_k(std::span<const std::optional<std::size_t>> first_ranks, std::size_t k) {
  if (first_ranks.empty()) throw Error("no queries");
  const auto hits = std::count_if(first_ranks.begin(), first_ranks.end(),
                                  [k](const auto& r) { return r && *r <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(first_ranks.size());
}

double average_precision(std::optional<std::size_t> first_rank) {
  return first_rank ? 1.0 / static_cast<double>(*first_rank) : 0.0;
}

double mean_average_precision(std::span<const std::optional<std::size_t>> first_ranks) {
  if (first_ranks.empty()) throw Error("no queries");
  double sum = 0.0;
  for (const auto& r : first_ranks) sum += average_precision(r);
  return 100.0 * sum / static_cast<double>(first_ranks.size());
}

namespace {

std::vector<std::optional<std::size_t>> first_ranks_of(const std::vector<RankedResult>& results,
                                                       const Gallery& gallery, const GroundTruth& gt,
                                                       double iou_threshold,
                                                       std::map<std::string, std::optional<std::size_t>>* per_query) {
  if (results.empty()) throw Error("no queries");
  std::set<std::string> seen;
  std::vector<std::optional<std::size_t>> ranks;
  ranks.reserve(results.size());
  for (const auto& r : results) {
    if (!seen.insert(r.query_id).second) throw Error("duplicate query id in results: " + r.query_id);
    const auto it = gt.find(r.query_id);
    if (it == gt.end()) throw Error("query missing from ground truth: " + r.query_id);
    ranks.push_back(first_match_rank(r, gallery, it->second, iou_threshold));
    if (per_query != nullptr) (*per_query)[r.query_id] = ranks.back();
  }
  return ranks;
}

}  // namespace

double recall_at_k(const std::vector<RankedResult>& results, const Gallery& gallery,
                   const GroundTruth& gt, std::size_t k, double iou_threshold) {
  return recall_at_k(first_ranks_of(results, gallery, gt, iou_threshold, nullptr), k);
}

EvalReport evaluate(const std::vector<RankedResult>& results, const Gallery& gallery,
                    const GroundTruth& gt, double iou_threshold) {
  EvalReport report;
  const auto ranks = first_ranks_of(results, gallery, gt, iou_threshold, &report.per_query_ranks);
  for (auto k : kReportedRanks) report.r_at[k] = recall_at_k(ranks, k);
  report.map_score = mean_average_precision(ranks);
  return report;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string report_to_json(const EvalReport& report) {
  auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  nlohmann::ordered_json doc;
  for (auto k : kReportedRanks) doc["R@" + std::to_string(k)] = round2(report.r_at.at(k));
  doc["mAP"] = round2(report.map_score);
  nlohmann::ordered_json per_query = nlohmann::ordered_json::object();
  for (const auto& [id, rank] : report.per_query_ranks) {
    per_query[id] = rank ? nlohmann::ordered_json(*rank) : nlohmann::ordered_json(nullptr);
  }
  doc["per_query"] = std::move(per_query);
  return doc.dump();
}

std::string report_to_table(const EvalReport& report) {
  std::string out = "metric  value\n";
  for (auto k : kReportedRanks) {
    char line[64];
    std::snprintf(line, sizeof(line), "%-6s  %6s\n", ("R@" + std::to_string(k)).c_str(),
                  format_percent(report.r_at.at(k)).c_str());
    out += line;
  }
  char line[64];
  std::snprintf(line, sizeof(line), "%-6s  %6s\n", "mAP", format_percent(report.map_score).c_str());
  out += line;
  return out;
}

double estimate_cost(const CostModel& cm, CostMode mode) {
  for (double v : {cm.mu_s, cm.mu_m, cm.n, cm.k, cm.m}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("cost model parameters must be nonnegative");
  }
  if (cm.k > cm.n) throw Error("cost model: K exceeds N");
  switch (mode) {
    case CostMode::kTwoStage: return cm.n * cm.mu_s + cm.k * cm.mu_m;
    case CostMode::kGalleryWideMllm: return cm.n * cm.mu_m + cm.k * cm.mu_m;
    case CostMode::kGalleryWideMllmM: return cm.n * cm.mu_m + cm.m * cm.mu_m;
    case CostMode::kDomainOnly: return cm.n * cm.mu_s;
  }
  return 0.0;
}

}  // namespace sap
