// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic galleries with controlled coarse ranks for the
// ground-truth target of each query. Used by tests, the acceptance suite and
// `sap synth`.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sap/embedding.hpp"
#include "sap/gallery.hpp"
#include "sap/pipeline.hpp"

namespace sap {

struct SyntheticSpec {
  std::size_t num_images = 500;
  std::size_t min_crops_per_image = 1;
  std::size_t max_crops_per_image = 4;
  std::uint32_t dim = 32;
  std::uint64_t seed = 7;
  /// Desired coarse rank (1-based) of each query's target crop. Ranks beyond
  /// the crop count clamp to the last position.
  std::vector<std::size_t> target_ranks;
};

struct SyntheticFixture {
  Gallery gallery;
  EmbeddingMatrix crop_embs;   // normalized
  EmbeddingMatrix scene_embs;  // normalized
  EmbeddingMatrix text_embs;   // normalized, keyed by query_id
  std::vector<QueryRecord> queries;
};

SyntheticFixture make_synthetic(const SyntheticSpec& spec);

/// Writes manifest.jsonl, detections.jsonl, crops.emb, scenes.emb, texts.emb,
/// queries.jsonl and config.json into `dir`.
void write_synthetic(const SyntheticFixture& fixture, const std::filesystem::path& dir);

}  // namespace sap
