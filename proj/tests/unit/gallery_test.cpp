// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "sap/embedding.hpp"
#include "sap/gallery.hpp"
#include "test_util.hpp"

using namespace sap;
using sap::testing::make_crop;
using sap::testing::TempDir;
using sap::testing::write_file;

namespace {

const char* kImage100x50 =
    R"({"image_id": "img1", "uri": "file:///g/img1.jpg", "width": 100, "height": 50})"
    "\n";

std::string detection(const std::string& crop_id, const std::string& image_id,
                      const std::string& bbox, bool head = true, bool l = true, bool r = true) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  return std::string(R"({"crop_id": ")") + crop_id + R"(", "image_id": ")" + image_id +
         R"(", "bbox": )" + bbox + R"(, "confidence": 0.8, "keypoints": {"head": )" + b(head) +
         R"(, "l_shoulder": )" + b(l) + R"(, "r_shoulder": )" + b(r) + "}}\n";
}

std::string error_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Independent keep-first dedup over crop_id order.
std::set<std::string> reference_dedup(const Gallery& g, const EmbeddingMatrix& ce,
                                      const EmbeddingMatrix& se, double threshold) {
  std::vector<PersonCrop> order = g.crops();
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.crop_id < b.crop_id; });
  auto cos = [](std::span<const float> a, std::span<const float> b) {
    long double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += static_cast<long double>(a[i]) * b[i];
      aa += static_cast<long double>(a[i]) * a[i];
      bb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(ab / std::sqrt(aa * bb));
  };
  std::vector<PersonCrop> kept;
  for (const auto& c : order) {
    bool dup = false;
    for (const auto& k : kept) {
      if (cos(ce.at(c.crop_id), ce.at(k.crop_id)) >= threshold &&
          cos(se.at(c.source_image_id), se.at(k.source_image_id)) >= threshold) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(c);
  }
  std::set<std::string> ids;
  for (const auto& c : kept) ids.insert(c.crop_id);
  return ids;
}

struct DedupFixture {
  Gallery gallery;
  EmbeddingMatrix crops;
  EmbeddingMatrix scenes;
};

// Few distinct base directions so near-duplicates actually occur.
DedupFixture random_dedup_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_img(1, 6), n_crop(0, 5), base(0, 2);
  std::normal_distribution<float> jitter(0.0f, 0.05f);
  const std::uint32_t dim = 4;
  std::vector<std::vector<float>> bases;
  for (int i = 0; i < 3; ++i) bases.push_back(sap::testing::random_vector(rng, dim));
  auto near = [&](int b) {
    auto v = bases[b];
    for (auto& x : v) x += jitter(rng);
    return v;
  };
  std::vector<GalleryImage> images;
  std::vector<PersonCrop> crops;
  EmbeddingMatrix ce(dim), se(dim);
  int ni = n_img(rng);
  for (int i = 0; i < ni; ++i) {
    std::string id = "i" + std::to_string(i);
    images.push_back({id, "u/" + id, 100, 100});
    se.add(id, near(base(rng)));
    int nc = n_crop(rng);
    for (int j = 0; j < nc; ++j) {
      std::string cid = "c" + std::to_string(rng() % 1000) + "_" + id + "_" + std::to_string(j);
      crops.push_back(make_crop(cid, id, {1, 1, 10, 10}));
      ce.add(cid, near(base(rng)));
    }
  }
  return {Gallery(images, crops), std::move(ce), std::move(se)};
}

}  // namespace

TEST_CASE("load_manifest reads images and crops") {
  TempDir dir;
  SUBCASE("empty files give an empty gallery") {
    write_file(dir / "m.jsonl", "");
    write_file(dir / "d.jsonl", "");
    auto g = load_manifest(dir / "m.jsonl", dir / "d.jsonl");
    CHECK(g.images().empty());
    CHECK(g.crops().empty());
  }
  SUBCASE("one image, one in-bounds crop") {
    write_file(dir / "m.jsonl", kImage100x50);
    write_file(dir / "d.jsonl", detection("c1", "img1", "[10, 10, 20, 30]"));
    auto g = load_manifest(dir / "m.jsonl", dir / "d.jsonl");
    REQUIRE(g.images().size() == 1);
    REQUIRE(g.crops().size() == 1);
    CHECK(g.crops()[0].bbox == BBox{10, 10, 20, 30});
    CHECK(g.scene_of(g.crops()[0]).uri == "file:///g/img1.jpg");
  }
  SUBCASE("blank lines are ignored") {
    write_file(dir / "m.jsonl", std::string("\n") + kImage100x50 + "\n\n");
    write_file(dir / "d.jsonl", "\n" + detection("c1", "img1", "[0, 0, 100, 50]"));
    CHECK(load_manifest(dir / "m.jsonl", dir / "d.jsonl").crops().size() == 1);
  }
}

TEST_CASE("load_manifest rejects invalid input") {
  TempDir dir;
  write_file(dir / "m.jsonl", kImage100x50);
  SUBCASE("crop extending past the right edge") {
    write_file(dir / "d.jsonl", detection("c1", "img1", "[90, 10, 20, 30]"));
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "d.jsonl"); });
    CHECK(msg.find("bbox out of bounds") != std::string::npos);
    CHECK(msg.find("c1") != std::string::npos);
  }
  SUBCASE("zero-area crop") {
    write_file(dir / "d.jsonl", detection("c1", "img1", "[10, 10, 0, 30]"));
    CHECK_THROWS_AS(load_manifest(dir / "m.jsonl", dir / "d.jsonl"), Error);
  }
  SUBCASE("dangling source image") {
    write_file(dir / "d.jsonl", detection("c1", "nope", "[1, 1, 2, 2]"));
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "d.jsonl"); });
    CHECK(msg.find("dangling") != std::string::npos);
  }
  SUBCASE("duplicate crop id") {
    write_file(dir / "d.jsonl",
               detection("c1", "img1", "[1, 1, 2, 2]") + detection("c1", "img1", "[3, 3, 2, 2]"));
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "d.jsonl"); });
    CHECK(msg.find("duplicate crop_id") != std::string::npos);
  }
  SUBCASE("duplicate image id") {
    write_file(dir / "m.jsonl", std::string(kImage100x50) + kImage100x50);
    write_file(dir / "d.jsonl", "");
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "d.jsonl"); });
    CHECK(msg.find("duplicate image_id") != std::string::npos);
  }
  SUBCASE("malformed JSON names file and line") {
    write_file(dir / "d.jsonl", detection("c1", "img1", "[1, 1, 2, 2]") + "{not json\n");
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "d.jsonl"); });
    CHECK(msg.find("d.jsonl:2") != std::string::npos);
  }
  SUBCASE("missing field") {
    write_file(dir / "d.jsonl", R"({"crop_id": "c1", "image_id": "img1"})"
                                "\n");
    CHECK_THROWS_AS(load_manifest(dir / "m.jsonl", dir / "d.jsonl"), Error);
  }
  SUBCASE("missing file") {
    auto msg = error_of([&] { load_manifest(dir / "m.jsonl", dir / "absent.jsonl"); });
    CHECK(msg.find("missing file") != std::string::npos);
  }
}

TEST_CASE("lenient ingest skips bad records and reports them") {
  TempDir dir;
  write_file(dir / "m.jsonl", kImage100x50);
  write_file(dir / "d.jsonl", detection("good", "img1", "[1, 1, 2, 2]") +
                                  detection("oob", "img1", "[90, 10, 20, 30]") + "garbage\n" +
                                  detection("dangling", "nope", "[1, 1, 2, 2]"));
  std::vector<std::string> skipped;
  IngestOptions opts{true, [&](const std::string& m) { skipped.push_back(m); }};
  auto g = load_manifest(dir / "m.jsonl", dir / "d.jsonl", opts);
  REQUIRE(g.crops().size() == 1);
  CHECK(g.crops()[0].crop_id == "good");
  CHECK(skipped.size() == 3);
}

TEST_CASE("Gallery constructor enforces the same invariants") {
  std::vector<GalleryImage> images{{"a", "u", 100, 50}};
  CHECK_THROWS_AS(Gallery(images, {make_crop("c", "a", {90, 10, 20, 30})}), Error);
  CHECK_THROWS_AS(Gallery(images, {make_crop("c", "b", {1, 1, 1, 1})}), Error);
  CHECK_THROWS_AS(Gallery({{"a", "u", 0, 50}}, {}), Error);
  CHECK_NOTHROW(Gallery(images, {make_crop("c", "a", {0, 0, 100, 50})}));
}

TEST_CASE("save_manifest round-trips") {
  TempDir dir;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GalleryImage> images;
    std::vector<PersonCrop> crops;
    int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      std::string id = "img_" + std::to_string(i);
      images.push_back({id, "s3://bucket/" + id + ".jpg", 640, 360});
      for (int j = 0; j < static_cast<int>(rng() % 4); ++j) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        BBox b{std::floor(u(rng) * 300) + 0.5, std::floor(u(rng) * 100), 10.25 + j, 20};
        KeypointFlags kp{rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
        crops.push_back({id + "_c" + std::to_string(j), id, b, u(rng), kp});
      }
    }
    Gallery g(images, crops);
    save_manifest(g, dir / "m.jsonl", dir / "d.jsonl");
    CHECK(load_manifest(dir / "m.jsonl", dir / "d.jsonl") == g);
  }
}

TEST_CASE("completeness_filter") {
  CHECK(completeness_filter({true, true, false}));
  CHECK_FALSE(completeness_filter({true, false, false}));
  CHECK_FALSE(completeness_filter({false, true, true}));
  for (int bits = 0; bits < 8; ++bits) {
    KeypointFlags f{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
    bool expected = f.head_visible && (f.left_shoulder_visible || f.right_shoulder_visible);
    CHECK(completeness_filter(f) == expected);
  }
}

TEST_CASE("apply_filter") {
  std::vector<GalleryImage> images{{"a", "u", 100, 100}};
  SUBCASE("all complete keeps everything") {
    Gallery g(images, {make_crop("c1", "a", {1, 1, 5, 5}), make_crop("c2", "a", {2, 2, 5, 5})});
    CHECK(apply_filter(g) == g);
  }
  SUBCASE("none complete keeps images only") {
    Gallery g(images, {make_crop("c1", "a", {1, 1, 5, 5}, {false, true, true})});
    auto f = apply_filter(g);
    CHECK(f.crops().empty());
    CHECK(f.images() == g.images());
  }
  SUBCASE("mixed") {
    Gallery g(images, {make_crop("c1", "a", {1, 1, 5, 5}, {true, true, false}),
                       make_crop("c2", "a", {1, 1, 5, 5}, {true, false, false}),
                       make_crop("c3", "a", {1, 1, 5, 5}, {false, true, true})});
    auto f = apply_filter(g);
    REQUIRE(f.crops().size() == 1);
    CHECK(f.crops()[0].crop_id == "c1");
  }
  SUBCASE("idempotent and monotone under clearing flags") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<PersonCrop> crops, cleared;
      for (int i = 0; i < 10; ++i) {
        KeypointFlags kp{rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
        crops.push_back(make_crop("c" + std::to_string(i), "a", {1, 1, 5, 5}, kp));
        KeypointFlags less = kp;
        if (rng() % 2) less.head_visible = false;
        if (rng() % 2) less.left_shoulder_visible = false;
        cleared.push_back(make_crop("c" + std::to_string(i), "a", {1, 1, 5, 5}, less));
      }
      Gallery g(images, crops);
      auto once = apply_filter(g);
      CHECK(apply_filter(once) == once);
      auto fewer = apply_filter(Gallery(images, cleared));
      for (const auto& c : fewer.crops()) CHECK(once.find_crop(c.crop_id) != nullptr);
    }
  }
}

TEST_CASE("dedup examples") {
  std::vector<GalleryImage> images{{"s1", "u1", 100, 100}, {"s2", "u2", 100, 100}};
  EmbeddingMatrix scenes(2);
  std::vector<float> e0{1, 0};
  scenes.add("s1", e0);

  SUBCASE("identical crop and scene drops the later id") {
    scenes.add("s2", e0);
    EmbeddingMatrix ce(2);
    ce.add("a", e0);
    ce.add("b", e0);
    Gallery g(images, {make_crop("b", "s2", {1, 1, 5, 5}), make_crop("a", "s1", {1, 1, 5, 5})});
    auto d = dedup(g, ce, scenes, 0.95);
    REQUIRE(d.crops().size() == 1);
    CHECK(d.crops()[0].crop_id == "a");
    CHECK(d.images() == g.images());
  }
  SUBCASE("threshold above one keeps everything") {
    scenes.add("s2", e0);
    EmbeddingMatrix ce(2);
    ce.add("a", e0);
    ce.add("b", e0);
    Gallery g(images, {make_crop("a", "s1", {1, 1, 5, 5}), make_crop("b", "s2", {1, 1, 5, 5})});
    CHECK(dedup(g, ce, scenes, 1.01) == g);
  }
  SUBCASE("similar crops in dissimilar scenes are both kept") {
    std::vector<float> s2{0.10f, static_cast<float>(std::sqrt(1.0 - 0.01))};
    scenes.add("s2", s2);
    std::vector<float> b{0.97f, static_cast<float>(std::sqrt(1.0 - 0.97 * 0.97))};
    EmbeddingMatrix ce(2);
    ce.add("a", e0);
    ce.add("b", b);
    CHECK(cosine_similarity(ce.at("a"), ce.at("b")) == doctest::Approx(0.97).epsilon(1e-6));
    Gallery g(images, {make_crop("a", "s1", {1, 1, 5, 5}), make_crop("b", "s2", {1, 1, 5, 5})});
    CHECK(dedup(g, ce, scenes, 0.95).crops().size() == 2);
  }
  SUBCASE("missing embedding is an error") {
    scenes.add("s2", e0);
    EmbeddingMatrix ce(2);
    ce.add("a", e0);
    Gallery g(images, {make_crop("a", "s1", {1, 1, 5, 5}), make_crop("b", "s2", {1, 1, 5, 5})});
    auto msg = error_of([&] { dedup(g, ce, scenes); });
    CHECK(msg.find("b") != std::string::npos);
  }
}

TEST_CASE("dedup matches an independent greedy reference") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto fx = random_dedup_fixture(rng);
    for (double th : {0.9, 0.95, 0.99}) {
      auto d = dedup(fx.gallery, fx.crops, fx.scenes, th);
      std::set<std::string> got;
      for (const auto& c : d.crops()) got.insert(c.crop_id);
      CHECK(got == reference_dedup(fx.gallery, fx.crops, fx.scenes, th));
      CHECK(dedup(d, fx.crops, fx.scenes, th) == d);
      for (const auto& c : d.crops()) CHECK(fx.gallery.find_crop(c.crop_id) != nullptr);
    }
  }
}
