// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sap/common.hpp"
#include "sap/embedding.hpp"
#include "sap/gallery.hpp"

namespace sap {

inline constexpr std::size_t kDefaultCandidateSize = 10;

struct TextQuery {
  std::string query_id;
  std::string text;
  /// Appearance-only text used for coarse scoring. Falls back to `text`.
  std::optional<std::string> appearance_text;
  std::string text_embedding_key;

  const std::string& scoring_text() const { return appearance_text ? *appearance_text : text; }
};

struct ScoredCandidate {
  std::string crop_id;
  double score = 0.0;

  friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

/// Higher score first, then ascending crop_id.
bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b);

/// Top-K candidates ordered by ranks_before.
struct CandidateSet {
  std::vector<ScoredCandidate> candidates;
};

struct SceneCandidate {
  std::size_t index = 0;  // 1-based position in the candidate set
  GalleryImage image;
  BBox bbox;
  std::string crop_id;
};

struct ScanOptions {
  /// Worker threads for the scoring scan; 0 or 1 scans on the calling thread.
  /// Scores do not depend on this value.
  unsigned threads = 1;
};

/// One cosine score per gallery crop, in gallery crop order.
std::vector<ScoredCandidate> score_gallery(const TextQuery& query, const EmbeddingMatrix& text_embs,
                                           const EmbeddingMatrix& crop_embs, const Gallery& gallery,
                                           const ScanOptions& options = {});

/// Bounded-heap selection of the min(K, n) best candidates. K must be >= 1.
CandidateSet top_k(const std::vector<ScoredCandidate>& scores, std::size_t k);

/// Full gallery ranking: every scored crop, ordered by ranks_before.
std::vector<ScoredCandidate> coarse_ranking(std::vector<ScoredCandidate> scores);

/// Attaches each candidate's source scene and bbox, keeping candidate order.
std::vector<SceneCandidate> map_to_scene(const CandidateSet& cands, const Gallery& gallery);

/// Resolves the text embedding key for a query: the explicit key when set and
/// present, else query_id, else the appearance text, else the full text.
std::optional<std::string> resolve_text_key(const TextQuery& query, const EmbeddingMatrix& text_embs);

}  // namespace sap
