// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "sap/evaluation.hpp"
#include "test_util.hpp"

using namespace sap;
using sap::testing::make_crop;

namespace {

// Gallery of n crops, one per image, all boxes identical.
Gallery line_gallery(std::size_t n) {
  std::vector<GalleryImage> images;
  std::vector<PersonCrop> crops;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = "i" + std::to_string(i);
    images.push_back({id, "u/" + id, 100, 100});
    crops.push_back(make_crop("c" + std::to_string(i), id, {10, 10, 20, 40}));
  }
  return Gallery(images, crops);
}

RankedResult result_with_target_at(const std::string& qid, std::size_t n, std::size_t target,
                                   std::optional<std::size_t> rank) {
  RankedResult r{qid, {}, false, ""};
  for (std::size_t i = 0; i < n; ++i) {
    if (i == target) continue;
    r.final_order.push_back({"c" + std::to_string(i), 0.0});
  }
  if (rank) {
    r.final_order.insert(r.final_order.begin() + static_cast<std::ptrdiff_t>(*rank - 1),
                         {"c" + std::to_string(target), 0.0});
  }
  return r;
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);
  CHECK(std::fabs(iou({0, 0, 10, 10}, {5, 0, 10, 10}) - 1.0 / 3.0) <= 1e-12);
  CHECK(iou({0, 0, 10, 10}, {0, 0, 5, 10}) == 0.5);
}

TEST_CASE("is_match") {
  auto crop = make_crop("c", "img", {0, 0, 10, 10});
  CHECK(is_match(crop, {"img", {0, 0, 10, 10}}, 0.5));
  CHECK(is_match(crop, {"img", {0, 0, 5, 10}}, 0.5));
  CHECK_FALSE(is_match(crop, {"img", {5, 0, 10, 10}}, 0.5));
  CHECK_FALSE(is_match(crop, {"other", {0, 0, 10, 10}}, 0.5));
}

TEST_CASE("recall and AP on first-match ranks") {
  std::vector<std::optional<std::size_t>> ranks{1, 3, 12};
  CHECK(format_percent(recall_at_k(ranks, 1)) == "33.33");
  CHECK(format_percent(recall_at_k(ranks, 5)) == "66.67");
  CHECK(format_percent(recall_at_k(ranks, 10)) == "66.67");
  CHECK(format_percent(mean_average_precision(ranks)) == "47.22");
  CHECK(std::fabs(mean_average_precision(ranks) - 100.0 * (1 + 1.0 / 3 + 1.0 / 12) / 3) <= 1e-12);

  std::vector<std::optional<std::size_t>> all_first{1, 1, 1};
  CHECK(recall_at_k(all_first, 1) == 100.0);
  CHECK(mean_average_precision(all_first) == 100.0);

  std::vector<std::optional<std::size_t>> none{std::nullopt, std::nullopt};
  CHECK(recall_at_k(none, 10) == 0.0);
  CHECK(mean_average_precision(none) == 0.0);

  CHECK(average_precision(1) == 1.0);
  CHECK(average_precision(4) == 0.25);
  CHECK(average_precision(std::nullopt) == 0.0);
}

TEST_CASE("first_match_rank uses image and IoU") {
  Gallery g(
      {{"a", "u", 100, 100}, {"b", "u2", 100, 100}},
      {make_crop("x", "b", {0, 0, 10, 10}), make_crop("y", "a", {50, 50, 10, 10}),
       make_crop("z", "a", {0, 0, 10, 10})});
  RankedResult r{"q", {{"x", 0.9}, {"y", 0.8}, {"z", 0.7}}, false, ""};
  CHECK(first_match_rank(r, g, {"a", {0, 0, 10, 10}}, 0.5) == 3u);
  CHECK(first_match_rank(r, g, {"a", {0, 0, 9, 9}}, 0.5) == 3u);
  CHECK(first_match_rank(r, g, {"b", {0, 0, 10, 10}}, 0.5) == 1u);
  CHECK_FALSE(first_match_rank(r, g, {"a", {30, 30, 5, 5}}, 0.5).has_value());
}

TEST_CASE("evaluate") {
  auto g = line_gallery(20);
  GroundTruth gt{{"q1", {"i0", {10, 10, 20, 40}}},
                 {"q2", {"i1", {10, 10, 20, 40}}},
                 {"q3", {"i2", {10, 10, 20, 40}}}};
  std::vector<RankedResult> results{result_with_target_at("q1", 20, 0, 1),
                                    result_with_target_at("q2", 20, 1, 3),
                                    result_with_target_at("q3", 20, 2, 12)};
  auto rep = evaluate(results, g, gt);
  CHECK(format_percent(rep.r_at.at(1)) == "33.33");
  CHECK(format_percent(rep.r_at.at(5)) == "66.67");
  CHECK(format_percent(rep.r_at.at(10)) == "66.67");
  CHECK(format_percent(rep.map_score) == "47.22");
  CHECK(rep.per_query_ranks.at("q3") == 12u);
  CHECK(recall_at_k(results, g, gt, 12) == 100.0);

  auto json = nlohmann::json::parse(report_to_json(rep));
  CHECK(json["R@1"] == 33.33);
  CHECK(json["mAP"] == 47.22);
  CHECK(report_to_table(rep).find("47.22") != std::string::npos);

  CHECK_THROWS_WITH_AS(evaluate({}, g, gt), doctest::Contains("no queries"), Error);
  std::vector<RankedResult> dup{results[0], results[0]};
  CHECK_THROWS_AS(evaluate(dup, g, gt), Error);
  std::vector<RankedResult> orphan{result_with_target_at("q9", 20, 0, 1)};
  CHECK_THROWS_AS(evaluate(orphan, g, gt), Error);
}

TEST_CASE("evaluate agrees with brute-force enumeration") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    auto g = line_gallery(n);
    GroundTruth gt;
    std::vector<RankedResult> results;
    const std::size_t nq = 1 + rng() % 15;
    for (std::size_t q = 0; q < nq; ++q) {
      const std::size_t target = rng() % n;
      std::string qid = "q" + std::to_string(q);
      // Targets sometimes point at a box no crop overlaps.
      BBox box = rng() % 5 ? BBox{12, 10, 20, 40} : BBox{60, 50, 10, 10};
      gt[qid] = {"i" + std::to_string(target), box};
      std::vector<ScoredCandidate> order;
      for (std::size_t i = 0; i < n; ++i) order.push_back({"c" + std::to_string(i), 0.0});
      std::shuffle(order.begin(), order.end(), rng);
      results.push_back({qid, order, false, ""});
    }
    auto rep = evaluate(results, g, gt);

    std::vector<double> first;
    for (const auto& r : results) {
      const auto& t = gt.at(r.query_id);
      double pos = 0;
      for (std::size_t i = 0; i < r.final_order.size(); ++i) {
        const auto* c = g.find_crop(r.final_order[i].crop_id);
        double ix = std::max(0.0, std::min(c->bbox.x + c->bbox.w, t.bbox.x + t.bbox.w) -
                                      std::max(c->bbox.x, t.bbox.x));
        double iy = std::max(0.0, std::min(c->bbox.y + c->bbox.h, t.bbox.y + t.bbox.h) -
                                      std::max(c->bbox.y, t.bbox.y));
        double inter = ix * iy;
        double uni = c->bbox.w * c->bbox.h + t.bbox.w * t.bbox.h - inter;
        if (c->source_image_id == t.image_id && inter / uni >= 0.5) {
          pos = static_cast<double>(i + 1);
          break;
        }
      }
      first.push_back(pos);
    }
    for (std::size_t k : kReportedRanks) {
      double hits = 0;
      for (double p : first) hits += (p > 0 && p <= static_cast<double>(k)) ? 1 : 0;
      CHECK(std::fabs(rep.r_at.at(k) - 100.0 * hits / static_cast<double>(first.size())) <= 1e-12);
    }
    double ap = 0;
    for (double p : first) ap += p > 0 ? 1.0 / p : 0.0;
    CHECK(std::fabs(rep.map_score - 100.0 * ap / static_cast<double>(first.size())) <= 1e-12);
    CHECK(rep.r_at.at(1) <= rep.r_at.at(5));
    CHECK(rep.r_at.at(5) <= rep.r_at.at(10));
    CHECK(rep.map_score <= 100.0);
  }
}

TEST_CASE("cost model") {
  CostModel cm{1, 100, 1000, 10, 0};
  CHECK(estimate_cost(cm, CostMode::kTwoStage) == 2000.0);
  CHECK(estimate_cost(cm, CostMode::kGalleryWideMllm) == 101000.0);
  CHECK(estimate_cost(cm, CostMode::kDomainOnly) == 1000.0);
  cm.m = 50;
  CHECK(estimate_cost(cm, CostMode::kGalleryWideMllmM) == 105000.0);
  CHECK_THROWS_AS(estimate_cost({-1, 1, 10, 1, 0}, CostMode::kTwoStage), Error);
  CHECK_THROWS_AS(estimate_cost({1, 1, 10, 20, 0}, CostMode::kTwoStage), Error);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.001, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double mu_s = u(rng), n = 2 + static_cast<double>(rng() % 100000);
    double mu_m = mu_s * (1.0 + u(rng));
    double k = 1 + static_cast<double>(rng() % static_cast<std::uint64_t>(n - 1));
    CostModel m{mu_s, mu_m, n, k, 0};
    CHECK(estimate_cost(m, CostMode::kTwoStage) < estimate_cost(m, CostMode::kGalleryWideMllm));
    CHECK(estimate_cost(m, CostMode::kDomainOnly) < estimate_cost(m, CostMode::kTwoStage));
  }
}
