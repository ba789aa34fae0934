// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <thread>

#include "sap/kernels.hpp"

namespace sap {

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.crop_id < b.crop_id;
}

std::vector<ScoredCandidate> score_gallery(const TextQuery& query, const EmbeddingMatrix& text_embs,
                                           const EmbeddingMatrix& crop_embs, const Gallery& gallery,
                                           const ScanOptions& options) {
  const auto& crops = gallery.crops();
  std::vector<ScoredCandidate> out(crops.size());
  const auto key = resolve_text_key(query, text_embs);
  if (!key) throw Error("missing embedding for query " + query.query_id);
  if (crops.empty()) return out;
  const auto text = text_embs.at(*key);
  if (text.size() != crop_embs.dim()) {
    throw Error("dimension mismatch: text " + std::to_string(text.size()) + " vs crops " +
                std::to_string(crop_embs.dim()));
  }
  const double text_norm = std::sqrt(kernels::dot(text, text));
  if (text_norm == 0.0) throw Error("zero-norm text embedding: " + *key);

  // Resolve every row up front so worker threads only read.
  std::vector<std::span<const float>> rows(crops.size());
  for (std::size_t i = 0; i < crops.size(); ++i) {
    if (!crop_embs.contains(crops[i].crop_id)) {
      throw Error("missing embedding: " + crops[i].crop_id);
    }
    rows[i] = crop_embs.at(crops[i].crop_id);
  }

  const auto dot = kernels::dot_fn(kernels::active_isa());
  auto scan = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& v = rows[i];
      const double cross = dot(text.data(), v.data(), v.size());
      const double self = dot(v.data(), v.data(), v.size());
      out[i] = {crops[i].crop_id, cross / (text_norm * std::sqrt(self))};
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, crops.size());
  if (workers == 1) {
    scan(0, crops.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (crops.size() + workers - 1) / workers;
    for (std::size_t begin = 0; begin < crops.size(); begin += chunk) {
      pool.emplace_back(scan, begin, std::min(crops.size(), begin + chunk));
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i].score)) {
      throw Error("zero-norm or non-finite embedding for crop " + crops[i].crop_id);
    }
  }
  return out;
}

CandidateSet top_k(const std::vector<ScoredCandidate>& scores, std::size_t k) {
  if (k == 0) throw Error("top_k: K must be at least 1");
  // Max-heap under ranks_before: the top is the weakest retained candidate.
  std::priority_queue<ScoredCandidate, std::vector<ScoredCandidate>, decltype(&ranks_before)> heap(
      &ranks_before);
  for (const auto& c : scores) {
    if (heap.size() < k) {
      heap.push(c);
    } else if (ranks_before(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
  }
  CandidateSet out;
  out.candidates.resize(heap.size());
  for (auto it = out.candidates.rbegin(); it != out.candidates.rend(); ++it) {
    *it = heap.top();
    heap.pop();
  }
  return out;
}

std::vector<ScoredCandidate> coarse_ranking(std::vector<ScoredCandidate> scores) {
  std::sort(scores.begin(), scores.end(), ranks_before);
  return scores;
}

std::vector<SceneCandidate> map_to_scene(const CandidateSet& cands, const Gallery& gallery) {
  std::vector<SceneCandidate> out;
  out.reserve(cands.candidates.size());
  for (std::size_t i = 0; i < cands.candidates.size(); ++i) {
    const auto& id = cands.candidates[i].crop_id;
    const auto* crop = gallery.find_crop(id);
    if (crop == nullptr) throw Error("dangling crop_id: " + id);
    out.push_back({i + 1, gallery.scene_of(*crop), crop->bbox, crop->crop_id});
  }
  return out;
}

std::optional<std::string> resolve_text_key(const TextQuery& query, const EmbeddingMatrix& text_embs) {
  for (const std::string* key : {&query.text_embedding_key, &query.query_id, &query.scoring_text(),
                                 &query.text}) {
    if (!key->empty() && text_embs.contains(*key)) return *key;
  }
  return std::nullopt;
}

}  // namespace sap
