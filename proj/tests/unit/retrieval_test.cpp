// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "sap/embedding.hpp"
#include "sap/retrieval.hpp"
#include "test_util.hpp"

using namespace sap;
using sap::testing::make_crop;

namespace {

struct Scene {
  Gallery gallery;
  EmbeddingMatrix crops;
  EmbeddingMatrix texts;
  TextQuery query;
};

Scene random_scene(std::mt19937_64& rng, std::size_t n_crops, std::uint32_t dim) {
  std::vector<GalleryImage> images{{"img", "u://img", 1000, 1000}};
  std::vector<PersonCrop> crops;
  EmbeddingMatrix ce(dim), te(dim);
  for (std::size_t i = 0; i < n_crops; ++i) {
    std::string id = "c" + std::to_string(rng() % 100000) + "_" + std::to_string(i);
    crops.push_back(make_crop(id, "img", {1, 1, 10, 10}));
    ce.add(id, sap::testing::random_vector(rng, dim));
  }
  te.add("q", sap::testing::random_vector(rng, dim));
  return {Gallery(images, crops), std::move(ce), std::move(te), TextQuery{"q", "text", {}, "q"}};
}

std::vector<ScoredCandidate> random_scores(std::mt19937_64& rng, std::size_t n) {
  // Coarse grid of scores so ties are common.
  std::uniform_int_distribution<int> grid(0, 20);
  std::vector<ScoredCandidate> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"id" + std::to_string(rng() % 5000) + "_" + std::to_string(i), grid(rng) / 20.0});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<ScoredCandidate> full_sort_prefix(std::vector<ScoredCandidate> s, std::size_t k) {
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.crop_id < b.crop_id;
  });
  s.resize(std::min(k, s.size()));
  return s;
}

}  // namespace

TEST_CASE("score_gallery examples") {
  std::vector<GalleryImage> images{{"img", "u", 100, 100}};
  EmbeddingMatrix te(3);
  te.add("q", std::vector<float>{1, 2, 2});
  TextQuery q{"q", "a person", {}, "q"};

  SUBCASE("empty gallery") {
    CHECK(score_gallery(q, te, EmbeddingMatrix(3), Gallery(images, {})).empty());
  }
  SUBCASE("identical embedding scores one") {
    EmbeddingMatrix ce(3);
    ce.add("c", std::vector<float>{1, 2, 2});
    auto s = score_gallery(q, te, ce, Gallery(images, {make_crop("c", "img", {1, 1, 5, 5})}));
    REQUIRE(s.size() == 1);
    CHECK(std::fabs(s[0].score - 1.0) <= 1e-12);
  }
  SUBCASE("three crops against a by-hand oracle") {
    EmbeddingMatrix ce(3);
    ce.add("a", std::vector<float>{2, 0, 0});
    ce.add("b", std::vector<float>{0, 3, 4});
    ce.add("c", std::vector<float>{-1, -2, -2});
    Gallery g(images, {make_crop("a", "img", {1, 1, 5, 5}), make_crop("b", "img", {1, 1, 5, 5}),
                       make_crop("c", "img", {1, 1, 5, 5})});
    auto s = score_gallery(q, te, ce, g);
    REQUIRE(s.size() == 3);
    CHECK(s[0].crop_id == "a");
    CHECK(std::fabs(s[0].score - 1.0 / 3.0) <= 1e-9);
    CHECK(std::fabs(s[1].score - 14.0 / 15.0) <= 1e-9);
    CHECK(std::fabs(s[2].score - -1.0) <= 1e-9);
  }
  SUBCASE("missing crop embedding names the crop") {
    EmbeddingMatrix ce(3);
    Gallery g(images, {make_crop("lonely", "img", {1, 1, 5, 5})});
    try {
      score_gallery(q, te, ce, g);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("lonely") != std::string::npos);
    }
  }
  SUBCASE("missing text embedding") {
    TextQuery other{"nobody", "unknown text", {}, ""};
    CHECK_THROWS_AS(score_gallery(other, te, EmbeddingMatrix(3), Gallery(images, {})), Error);
  }
}

TEST_CASE("score_gallery agrees with a long double oracle and is thread-count invariant") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto sc = random_scene(rng, 1 + rng() % 300, 1 + static_cast<std::uint32_t>(rng() % 64));
    auto s1 = score_gallery(sc.query, sc.texts, sc.crops, sc.gallery);
    auto t = sc.texts.at("q");
    for (const auto& cand : s1) {
      auto c = sc.crops.at(cand.crop_id);
      long double ab = 0, aa = 0, bb = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        ab += static_cast<long double>(t[i]) * c[i];
        aa += static_cast<long double>(t[i]) * t[i];
        bb += static_cast<long double>(c[i]) * c[i];
      }
      CHECK(std::fabs(cand.score - static_cast<double>(ab / std::sqrt(aa * bb))) <= 1e-9);
    }
    for (unsigned threads : {2u, 3u, 8u}) {
      CHECK(score_gallery(sc.query, sc.texts, sc.crops, sc.gallery, {threads}) == s1);
    }
  }
}

TEST_CASE("resolve_text_key") {
  EmbeddingMatrix te(1);
  te.add("q1", std::vector<float>{1});
  te.add("a red coat", std::vector<float>{1});
  te.add("full text", std::vector<float>{1});
  te.add("explicit", std::vector<float>{1});
  CHECK(resolve_text_key({"q1", "full text", "a red coat", "explicit"}, te) == "explicit");
  CHECK(resolve_text_key({"q1", "full text", "a red coat", ""}, te) == "q1");
  CHECK(resolve_text_key({"q2", "full text", "a red coat", ""}, te) == "a red coat");
  CHECK(resolve_text_key({"q2", "full text", {}, ""}, te) == "full text");
  CHECK_FALSE(resolve_text_key({"q2", "other", {}, ""}, te).has_value());
}

TEST_CASE("top_k examples") {
  std::vector<ScoredCandidate> s{{"a", 0.9}, {"b", 0.5}, {"c", 0.7}};
  auto top = top_k(s, 2).candidates;
  CHECK(top == std::vector<ScoredCandidate>{{"a", 0.9}, {"c", 0.7}});

  std::vector<ScoredCandidate> tied{{"b", 0.5}, {"a", 0.5}};
  CHECK(top_k(tied, 1).candidates == std::vector<ScoredCandidate>{{"a", 0.5}});

  std::vector<ScoredCandidate> one{{"x", 0.1}};
  CHECK(top_k(one, 10).candidates.size() == 1);
  CHECK(top_k({}, 3).candidates.empty());
  CHECK_THROWS_AS(top_k(s, 0), Error);
}

TEST_CASE("top_k equals the prefix of a full sort") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto s = random_scores(rng, rng() % 1001);
    const std::size_t k = 1 + rng() % 50;
    auto got = top_k(s, k).candidates;
    CHECK(got == full_sort_prefix(s, k));
    CHECK(got.size() == std::min(k, s.size()));
    auto bigger = top_k(s, k + 1 + rng() % 10).candidates;
    CHECK(std::equal(got.begin(), got.end(), bigger.begin()));
    CHECK(coarse_ranking(s) == full_sort_prefix(s, s.size()));
  }
}

TEST_CASE("top_k is invariant to positive rescaling of the text embedding") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    auto sc = random_scene(rng, 50 + rng() % 200, 16);
    auto base = top_k(score_gallery(sc.query, sc.texts, sc.crops, sc.gallery), 10).candidates;
    for (float s : {0x1p-6f, 3.0f, 1000.0f}) {
      auto t = sc.texts.at("q");
      std::vector<float> scaled(t.begin(), t.end());
      for (auto& x : scaled) x *= s;
      EmbeddingMatrix te(16);
      te.add("q", scaled);
      auto got = top_k(score_gallery(sc.query, te, sc.crops, sc.gallery), 10).candidates;
      REQUIRE(got.size() == base.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].crop_id == base[i].crop_id);
        CHECK(std::fabs(got[i].score - base[i].score) <= 1e-6);
      }
    }
  }
}

TEST_CASE("map_to_scene") {
  std::vector<GalleryImage> images{{"i1", "u1", 100, 100}, {"i2", "u2", 200, 100}};
  Gallery g(images, {make_crop("a", "i1", {1, 2, 3, 4}), make_crop("b", "i2", {5, 6, 7, 8})});
  SUBCASE("order and attachments") {
    CandidateSet cs{{{"b", 0.9}, {"a", 0.8}}};
    auto sc = map_to_scene(cs, g);
    REQUIRE(sc.size() == 2);
    CHECK(sc[0].index == 1);
    CHECK(sc[0].crop_id == "b");
    CHECK(sc[0].image == images[1]);
    CHECK(sc[0].bbox == BBox{5, 6, 7, 8});
    CHECK(sc[1].index == 2);
    CHECK(sc[1].image.image_id == "i1");
  }
  SUBCASE("empty") { CHECK(map_to_scene({}, g).empty()); }
  SUBCASE("unknown crop") {
    CandidateSet cs{{{"ghost", 0.9}}};
    CHECK_THROWS_AS(map_to_scene(cs, g), Error);
  }
}
