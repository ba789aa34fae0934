// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/synthetic.hpp"

#include <cstdio>
#include <random>

#include "jsonl.hpp"

namespace sap {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 360;

std::string padded(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, i);
  return buf;
}

std::vector<float> random_unit(std::mt19937_64& rng, std::uint32_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = static_cast<float>(normal(rng));
      norm += static_cast<double>(x) * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x = static_cast<float>(x / norm);
  return v;
}

}  // namespace

SyntheticFixture make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_images == 0 || spec.min_crops_per_image == 0 ||
      spec.max_crops_per_image < spec.min_crops_per_image || spec.dim == 0) {
    throw Error("synthetic: invalid spec");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> crops_per(spec.min_crops_per_image, spec.max_crops_per_image);

  std::vector<GalleryImage> images;
  std::vector<PersonCrop> crops;
  EmbeddingMatrix crop_embs(spec.dim);
  EmbeddingMatrix scene_embs(spec.dim);
  for (std::size_t i = 0; i < spec.num_images; ++i) {
    GalleryImage img{padded("img_", i), "synthetic://scenes/" + padded("img_", i) + ".jpg", kWidth, kHeight};
    scene_embs.add(img.image_id, random_unit(rng, spec.dim));
    // Side-by-side slots never overlap, so exactly one crop can match a target.
    const std::size_t m = crops_per(rng);
    const double slot = static_cast<double>(kWidth) / static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      PersonCrop crop;
      crop.crop_id = img.image_id + "_c" + std::to_string(j);
      crop.source_image_id = img.image_id;
      crop.bbox = {std::floor(slot * static_cast<double>(j)) + 4, 24, std::floor(slot) - 8, kHeight - 48};
      crop.confidence = 0.9;
      crop.keypoints = {true, true, true};
      crop_embs.add(crop.crop_id, random_unit(rng, spec.dim));
      crops.push_back(std::move(crop));
    }
    images.push_back(std::move(img));
  }

  SyntheticFixture fx;
  fx.gallery = Gallery(std::move(images), std::move(crops));
  fx.crop_embs = std::move(crop_embs);
  fx.scene_embs = std::move(scene_embs);
  fx.text_embs = EmbeddingMatrix(spec.dim);

  // Rank targets with the same normalization the engine applies at load.
  const auto crops_n = normalize(fx.crop_embs);
  for (std::size_t q = 0; q < spec.target_ranks.size(); ++q) {
    QueryRecord rec;
    rec.query.query_id = padded("q_", q);
    rec.query.text = "Query " + std::to_string(q) +
                     ": a pedestrian whose surroundings match this synthetic description.";
    rec.query.text_embedding_key = rec.query.query_id;
    fx.text_embs.add(rec.query.query_id, random_unit(rng, spec.dim));

    EmbeddingMatrix one(spec.dim);
    one.add(rec.query.query_id, fx.text_embs.at(rec.query.query_id));
    const auto ranking = coarse_ranking(score_gallery(rec.query, normalize(one), crops_n, fx.gallery));
    const std::size_t rank = std::clamp<std::size_t>(spec.target_ranks[q], 1, ranking.size());
    const auto* crop = fx.gallery.find_crop(ranking[rank - 1].crop_id);
    rec.gt = Target{crop->source_image_id, crop->bbox};
    fx.queries.push_back(std::move(rec));
  }
  return fx;
}

void write_synthetic(const SyntheticFixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_manifest(fixture.gallery, dir / "manifest.jsonl", dir / "detections.jsonl");
  save_embeddings(fixture.crop_embs, dir / "crops.emb");
  save_embeddings(fixture.scene_embs, dir / "scenes.emb");
  save_embeddings(fixture.text_embs, dir / "texts.emb");
  save_queries(fixture.queries, dir / "queries.jsonl");
  const nlohmann::json config = {{"manifest", "manifest.jsonl"},
                                 {"detections", "detections.jsonl"},
                                 {"crop_embeddings", "crops.emb"},
                                 {"text_embeddings", "texts.emb"},
                                 {"scene_embeddings", "scenes.emb"},
                                 {"k", kDefaultCandidateSize},
                                 {"variant", "bep"}};
  detail::write_atomically(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace sap
