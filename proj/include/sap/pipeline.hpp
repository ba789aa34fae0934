// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sap/embedding.hpp"
#include "sap/evaluation.hpp"
#include "sap/gallery.hpp"
#include "sap/mock_ranker.hpp"
#include "sap/prompt.hpp"
#include "sap/ranker.hpp"
#include "sap/retrieval.hpp"

namespace sap {

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path detections;
  std::filesystem::path crop_embeddings;
  std::filesystem::path text_embeddings;
  std::filesystem::path scene_embeddings;
  std::size_t k = kDefaultCandidateSize;
  PromptVariant variant = PromptVariant::kBep;
  RankerConfig ranker;
  double iou_threshold = kDefaultIouThreshold;
  double dedup_threshold = kDefaultDedupThreshold;
  std::size_t inflight_limit = 4;
  int retries = 0;
  unsigned scan_threads = 1;
  int overlay_stroke_px = kDefaultOverlayStrokePx;

  /// Throws sap::Error when K < 1, a threshold is outside [0, 1], or the
  /// in-flight limit is 0.
  void validate() const;
};

/// Reads a JSON config document. Relative paths resolve against its directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const nlohmann::json& doc,
                                const std::filesystem::path& base_dir = {});
/// SAP_ENDPOINT and SAP_MODEL override the ranker settings when set.
void apply_env_overrides(PipelineConfig& config);

struct QueryRecord {
  TextQuery query;
  std::optional<Target> gt;
};

/// Line-delimited {"query_id", "text", "appearance_text", "gt": {"image_id", "bbox"}}.
std::vector<QueryRecord> load_queries(const std::filesystem::path& path);
void save_queries(const std::vector<QueryRecord>& queries, const std::filesystem::path& path);
GroundTruth ground_truth_of(const std::vector<QueryRecord>& queries);

/// Line-delimited {"query_id", "final_order": [crop_id...], "scores": [...],
/// "rerank_applied", "raw_ranker_text"}.
void save_results(const std::vector<RankedResult>& results, const std::filesystem::path& path);
std::vector<RankedResult> load_results(const std::filesystem::path& path);

struct EvalTrace {
  double score_ms = 0;
  double select_ms = 0;
  double prompt_ms = 0;
  double ranker_ms = 0;
  double merge_ms = 0;
  std::size_t crop_scores = 0;
  std::size_t ranker_calls = 0;
  std::string raw_ranker_text;
};

struct QueryRun {
  std::vector<ScoredCandidate> coarse;
  RankedResult result;
  EvalTrace trace;
};

struct QueryOptions {
  std::optional<std::size_t> k;
  std::optional<PromptVariant> variant;
};

/// Loaded gallery and normalized embeddings. Immutable after construction;
/// queries may run concurrently.
class Engine {
 public:
  Engine(Gallery gallery, EmbeddingMatrix crop_embs, EmbeddingMatrix text_embs,
         PipelineConfig config);

  /// Loads everything named in the config.
  static Engine load(const PipelineConfig& config);

  const Gallery& gallery() const { return gallery_; }
  const EmbeddingMatrix& crop_embeddings() const { return crop_embs_; }
  const EmbeddingMatrix& text_embeddings() const { return text_embs_; }
  const PipelineConfig& config() const { return config_; }

  /// Full coarse ranking of every crop.
  std::vector<ScoredCandidate> coarse_rank(const TextQuery& query, EvalTrace* trace = nullptr) const;

  /// Both stages with fallback. Ranker failures never throw.
  QueryRun run_query(const TextQuery& query, RankerClient& client,
                     const QueryOptions& options = {}) const;

  /// Stage two on an existing coarse ranking.
  RankedResult rerank(const TextQuery& query, const std::vector<ScoredCandidate>& coarse,
                      RankerClient& client, std::size_t k, PromptVariant variant,
                      EvalTrace* trace = nullptr) const;

 private:
  Gallery gallery_;
  EmbeddingMatrix crop_embs_;
  EmbeddingMatrix text_embs_;
  PipelineConfig config_;
};

struct BenchmarkReport {
  EvalReport coarse;
  EvalReport reranked;
  std::vector<RankedResult> results;
  std::size_t ranker_calls = 0;
  std::size_t fallbacks = 0;
};

/// Runs every query through both stages with at most config.inflight_limit
/// queries in flight. Output is independent of the limit.
BenchmarkReport run_benchmark(const Engine& engine, const std::vector<QueryRecord>& queries,
                              RankerClient& client, const QueryOptions& options = {});

/// Coarse and reranked metrics side by side with signed deltas.
std::string benchmark_to_table(const BenchmarkReport& report);
std::string benchmark_to_json(const BenchmarkReport& report);

/// Candidate-size sweep: one report per distinct K (ascending), everything
/// else fixed. Coarse rankings are computed once and shared.
std::vector<std::pair<std::size_t, EvalReport>> sweep_candidate_size(
    const Engine& engine, const std::vector<QueryRecord>& queries, RankerClient& client,
    std::vector<std::size_t> k_values);

std::vector<std::pair<PromptVariant, EvalReport>> compare_prompt_variants(
    const Engine& engine, const std::vector<QueryRecord>& queries, RankerClient& client,
    const std::vector<PromptVariant>& variants);

std::string sweep_to_table(const std::vector<std::pair<std::size_t, EvalReport>>& rows);
std::string variants_to_table(const std::vector<std::pair<PromptVariant, EvalReport>>& rows);

/// Description text -> visible target for oracle-style mocks.
TargetBook target_book(const Gallery& gallery, const std::vector<QueryRecord>& queries);

}  // namespace sap
