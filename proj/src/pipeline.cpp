// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "jsonl.hpp"

namespace sap {

using nlohmann::json;

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled exactly once; callers write results by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

RankedResult coarse_result(const std::string& query_id, const std::vector<ScoredCandidate>& coarse) {
  return RankedResult{query_id, coarse, false, ""};
}

std::string signed_delta(double delta) {
  const auto text = format_percent(delta);
  return (delta >= 0.0 && text.front() != '-' ? "+" : "") + text;
}

}  // namespace

void PipelineConfig::validate() const {
  if (k < 1) throw Error("config: k must be at least 1");
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw Error("config: iou_threshold outside [0, 1]");
  if (!(dedup_threshold >= 0.0 && dedup_threshold <= 1.0)) {
    throw Error("config: dedup_threshold outside [0, 1]");
  }
  if (inflight_limit < 1) throw Error("config: inflight_limit must be at least 1");
  if (retries < 0) throw Error("config: retries must be nonnegative");
  if (ranker.max_output_tokens < 1) throw Error("config: max_output_tokens must be positive");
}

PipelineConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw Error("config must be a JSON object");
  PipelineConfig c;
  auto path_field = [&](const char* name, std::filesystem::path& out) {
    if (doc.contains(name)) out = resolve(base_dir, doc.at(name).get<std::string>());
  };
  try {
    path_field("manifest", c.manifest);
    path_field("detections", c.detections);
    path_field("crop_embeddings", c.crop_embeddings);
    path_field("text_embeddings", c.text_embeddings);
    path_field("scene_embeddings", c.scene_embeddings);
    c.k = doc.value("k", c.k);
    if (doc.contains("variant")) c.variant = parse_variant(doc.at("variant").get<std::string>());
    if (doc.contains("ranker")) {
      const auto& r = doc.at("ranker");
      c.ranker.endpoint = r.value("endpoint", c.ranker.endpoint);
      c.ranker.model = r.value("model", c.ranker.model);
      c.ranker.max_output_tokens = r.value("max_output_tokens", c.ranker.max_output_tokens);
      c.ranker.timeout_ms = r.value("timeout_ms", c.ranker.timeout_ms);
    }
    c.iou_threshold = doc.value("iou_threshold", c.iou_threshold);
    c.dedup_threshold = doc.value("dedup_threshold", c.dedup_threshold);
    c.inflight_limit = doc.value("inflight_limit", c.inflight_limit);
    c.retries = doc.value("retries", c.retries);
    c.scan_threads = doc.value("scan_threads", c.scan_threads);
    c.overlay_stroke_px = doc.value("overlay_stroke_px", c.overlay_stroke_px);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

void apply_env_overrides(PipelineConfig& config) {
  if (const char* v = std::getenv("SAP_ENDPOINT"); v != nullptr && *v != '\0') config.ranker.endpoint = v;
  if (const char* v = std::getenv("SAP_MODEL"); v != nullptr && *v != '\0') config.ranker.model = v;
}

std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
  std::vector<QueryRecord> out;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const json& rec, std::size_t) {
    QueryRecord q;
    q.query.query_id = detail::require_string(rec, "query_id");
    q.query.text = detail::require_string(rec, "text");
    if (q.query.text.empty()) throw Error("query text must be non-empty");
    if (rec.contains("appearance_text") && !rec["appearance_text"].is_null()) {
      q.query.appearance_text = rec["appearance_text"].get<std::string>();
    }
    q.query.text_embedding_key = q.query.query_id;
    if (rec.contains("gt") && !rec["gt"].is_null()) {
      const auto& gt = rec["gt"];
      q.gt = Target{detail::require_string(gt, "image_id"), detail::parse_bbox(detail::require(gt, "bbox"))};
    }
    if (!ids.insert(q.query.query_id).second) throw Error("duplicate query_id: " + q.query.query_id);
    out.push_back(std::move(q));
  });
  return out;
}

void save_queries(const std::vector<QueryRecord>& queries, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& q : queries) {
    json rec = {{"query_id", q.query.query_id},
                {"text", q.query.text},
                {"appearance_text", q.query.appearance_text ? json(*q.query.appearance_text) : json(nullptr)}};
    rec["gt"] = q.gt ? json{{"image_id", q.gt->image_id}, {"bbox", detail::bbox_json(q.gt->bbox)}}
                     : json(nullptr);
    out << rec.dump() << '\n';
  }
  detail::write_atomically(path, out.str());
}

GroundTruth ground_truth_of(const std::vector<QueryRecord>& queries) {
  GroundTruth gt;
  for (const auto& q : queries) {
    if (q.gt) gt[q.query.query_id] = *q.gt;
  }
  return gt;
}

void save_results(const std::vector<RankedResult>& results, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& r : results) {
    json order = json::array();
    json scores = json::array();
    for (const auto& c : r.final_order) {
      order.push_back(c.crop_id);
      scores.push_back(c.score);
    }
    json rec = {{"query_id", r.query_id},
                {"final_order", std::move(order)},
                {"scores", std::move(scores)},
                {"rerank_applied", r.rerank_applied},
                {"raw_ranker_text", r.raw_ranker_text}};
    out << rec.dump() << '\n';
  }
  detail::write_atomically(path, out.str());
}

std::vector<RankedResult> load_results(const std::filesystem::path& path) {
  std::vector<RankedResult> out;
  detail::for_each_jsonl(path, [&](const json& rec, std::size_t) {
    RankedResult r;
    r.query_id = detail::require_string(rec, "query_id");
    const auto& order = detail::require(rec, "final_order");
    if (!order.is_array()) throw Error("malformed record: final_order must be an array");
    const json* scores = rec.contains("scores") ? &rec["scores"] : nullptr;
    if (scores != nullptr && (!scores->is_array() || scores->size() != order.size())) {
      throw Error("malformed record: scores must match final_order");
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      r.final_order.push_back({order[i].get<std::string>(), scores ? (*scores)[i].get<double>() : 0.0});
    }
    r.rerank_applied = rec.value("rerank_applied", false);
    r.raw_ranker_text = rec.value("raw_ranker_text", std::string());
    out.push_back(std::move(r));
  });
  return out;
}

Engine::Engine(Gallery gallery, EmbeddingMatrix crop_embs, EmbeddingMatrix text_embs,
               PipelineConfig config)
    : gallery_(std::move(gallery)),
      crop_embs_(normalize(crop_embs)),
      text_embs_(normalize(text_embs)),
      config_(std::move(config)) {
  config_.validate();
  for (const auto& crop : gallery_.crops()) {
    if (!crop_embs_.contains(crop.crop_id)) throw Error("missing embedding for crop " + crop.crop_id);
  }
  if (!text_embs_.empty() && !crop_embs_.empty() && text_embs_.dim() != crop_embs_.dim()) {
    throw Error("text and crop embeddings differ in dimension");
  }
}

Engine Engine::load(const PipelineConfig& config) {
  auto gallery = load_manifest(config.manifest, config.detections);
  auto crops = load_embeddings(config.crop_embeddings);
  auto texts = load_embeddings(config.text_embeddings);
  return Engine(std::move(gallery), std::move(crops), std::move(texts), config);
}

std::vector<ScoredCandidate> Engine::coarse_rank(const TextQuery& query, EvalTrace* trace) const {
  auto start = std::chrono::steady_clock::now();
  auto scores = score_gallery(query, text_embs_, crop_embs_, gallery_, {config_.scan_threads});
  if (trace != nullptr) {
    trace->crop_scores += scores.size();
    trace->score_ms += ms_since(start);
  }
  start = std::chrono::steady_clock::now();
  auto ranked = coarse_ranking(std::move(scores));
  if (trace != nullptr) trace->select_ms += ms_since(start);
  return ranked;
}

RankedResult Engine::rerank(const TextQuery& query, const std::vector<ScoredCandidate>& coarse,
                            RankerClient& client, std::size_t k, PromptVariant variant,
                            EvalTrace* trace) const {
  if (k < 1) throw Error("K must be at least 1");
  const std::size_t k_eff = std::min(k, coarse.size());
  if (k_eff == 0) return coarse_result(query.query_id, coarse);

  auto start = std::chrono::steady_clock::now();
  CandidateSet cands;
  cands.candidates.assign(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(k_eff));
  const auto scene = map_to_scene(cands, gallery_);
  if (trace != nullptr) trace->prompt_ms += ms_since(start);

  start = std::chrono::steady_clock::now();
  std::size_t calls = 0;
  auto result = rank_with_fallback(client, variant, scene, query.text, coarse,
                                   RankOptions{config_.retries}, &calls);
  result.query_id = query.query_id;
  if (trace != nullptr) {
    trace->ranker_ms += ms_since(start);
    trace->ranker_calls += calls;
    trace->raw_ranker_text = result.raw_ranker_text;
  }
  return result;
}

QueryRun Engine::run_query(const TextQuery& query, RankerClient& client,
                           const QueryOptions& options) const {
  QueryRun run;
  const std::size_t k = options.k.value_or(config_.k);
  if (k < 1) throw Error("K must be at least 1");
  const auto variant = options.variant.value_or(config_.variant);

  auto start = std::chrono::steady_clock::now();
  auto scores = score_gallery(query, text_embs_, crop_embs_, gallery_, {config_.scan_threads});
  run.trace.crop_scores = scores.size();
  run.trace.score_ms = ms_since(start);

  start = std::chrono::steady_clock::now();
  const auto cands = top_k(scores, k);
  run.coarse = coarse_ranking(std::move(scores));
  run.trace.select_ms = ms_since(start);
  run.result = coarse_result(query.query_id, run.coarse);
  if (cands.candidates.empty()) return run;

  start = std::chrono::steady_clock::now();
  const auto scene = map_to_scene(cands, gallery_);
  run.trace.prompt_ms = ms_since(start);

  start = std::chrono::steady_clock::now();
  std::size_t calls = 0;
  run.result = rank_with_fallback(client, variant, scene, query.text, run.coarse,
                                  RankOptions{config_.retries}, &calls);
  run.result.query_id = query.query_id;
  run.trace.ranker_ms = ms_since(start);
  run.trace.ranker_calls = calls;
  run.trace.raw_ranker_text = run.result.raw_ranker_text;
  return run;
}

BenchmarkReport run_benchmark(const Engine& engine, const std::vector<QueryRecord>& queries,
                              RankerClient& client, const QueryOptions& options) {
  const auto gt = ground_truth_of(queries);
  std::vector<RankedResult> coarse(queries.size());
  std::vector<RankedResult> reranked(queries.size());
  std::vector<EvalTrace> traces(queries.size());

  parallel_for(queries.size(), engine.config().inflight_limit, [&](std::size_t i) {
    auto run = engine.run_query(queries[i].query, client, options);
    coarse[i] = coarse_result(queries[i].query.query_id, run.coarse);
    reranked[i] = std::move(run.result);
    traces[i] = std::move(run.trace);
  });

  BenchmarkReport report;
  const double iou_thr = engine.config().iou_threshold;
  report.coarse = evaluate(coarse, engine.gallery(), gt, iou_thr);
  report.reranked = evaluate(reranked, engine.gallery(), gt, iou_thr);
  for (const auto& t : traces) report.ranker_calls += t.ranker_calls;
  for (const auto& r : reranked) report.fallbacks += r.rerank_applied ? 0 : 1;
  report.results = std::move(reranked);
  return report;
}

std::string benchmark_to_table(const BenchmarkReport& report) {
  std::string out = "metric  coarse  reranked   delta\n";
  auto row = [&](const std::string& name, double before, double after) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-6s  %6s  %8s  %6s\n", name.c_str(),
                  format_percent(before).c_str(), format_percent(after).c_str(),
                  signed_delta(after - before).c_str());
    out += line;
  };
  for (auto k : kReportedRanks) {
    row("R@" + std::to_string(k), report.coarse.r_at.at(k), report.reranked.r_at.at(k));
  }
  row("mAP", report.coarse.map_score, report.reranked.map_score);
  out += "ranker calls: " + std::to_string(report.ranker_calls) +
         ", fallbacks: " + std::to_string(report.fallbacks) + "\n";
  return out;
}

std::string benchmark_to_json(const BenchmarkReport& report) {
  nlohmann::ordered_json doc;
  doc["coarse"] = nlohmann::ordered_json::parse(report_to_json(report.coarse));
  doc["reranked"] = nlohmann::ordered_json::parse(report_to_json(report.reranked));
  nlohmann::ordered_json delta;
  for (auto k : kReportedRanks) {
    delta["R@" + std::to_string(k)] = signed_delta(report.reranked.r_at.at(k) - report.coarse.r_at.at(k));
  }
  delta["mAP"] = signed_delta(report.reranked.map_score - report.coarse.map_score);
  doc["delta"] = std::move(delta);
  doc["ranker_calls"] = report.ranker_calls;
  doc["fallbacks"] = report.fallbacks;
  return doc.dump(2);
}

namespace {

std::vector<std::vector<ScoredCandidate>> coarse_all(const Engine& engine,
                                                     const std::vector<QueryRecord>& queries) {
  std::vector<std::vector<ScoredCandidate>> out(queries.size());
  parallel_for(queries.size(), engine.config().inflight_limit,
               [&](std::size_t i) { out[i] = engine.coarse_rank(queries[i].query); });
  return out;
}

EvalReport rerank_and_evaluate(const Engine& engine, const std::vector<QueryRecord>& queries,
                               const std::vector<std::vector<ScoredCandidate>>& coarse,
                               RankerClient& client, std::size_t k, PromptVariant variant) {
  std::vector<RankedResult> results(queries.size());
  parallel_for(queries.size(), engine.config().inflight_limit, [&](std::size_t i) {
    results[i] = engine.rerank(queries[i].query, coarse[i], client, k, variant);
  });
  return evaluate(results, engine.gallery(), ground_truth_of(queries), engine.config().iou_threshold);
}

}  // namespace

std::vector<std::pair<std::size_t, EvalReport>> sweep_candidate_size(
    const Engine& engine, const std::vector<QueryRecord>& queries, RankerClient& client,
    std::vector<std::size_t> k_values) {
  if (k_values.empty()) throw Error("sweep: no candidate sizes");
  if (std::find(k_values.begin(), k_values.end(), 0) != k_values.end()) {
    throw Error("sweep: candidate sizes must be positive");
  }
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());

  const auto coarse = coarse_all(engine, queries);
  std::vector<std::pair<std::size_t, EvalReport>> rows;
  for (auto k : k_values) {
    rows.emplace_back(k, rerank_and_evaluate(engine, queries, coarse, client, k, engine.config().variant));
  }
  return rows;
}

std::vector<std::pair<PromptVariant, EvalReport>> compare_prompt_variants(
    const Engine& engine, const std::vector<QueryRecord>& queries, RankerClient& client,
    const std::vector<PromptVariant>& variants) {
  if (variants.empty()) throw Error("compare_prompt_variants: no variants");
  const auto coarse = coarse_all(engine, queries);
  std::vector<std::pair<PromptVariant, EvalReport>> rows;
  for (auto v : variants) {
    rows.emplace_back(v, rerank_and_evaluate(engine, queries, coarse, client, engine.config().k, v));
  }
  return rows;
}

std::string sweep_to_table(const std::vector<std::pair<std::size_t, EvalReport>>& rows) {
  std::string out = "   K     R@1     R@5    R@10     mAP\n";
  for (const auto& [k, r] : rows) {
    char line[96];
    std::snprintf(line, sizeof(line), "%4zu  %6s  %6s  %6s  %6s\n", k, format_percent(r.r_at.at(1)).c_str(),
                  format_percent(r.r_at.at(5)).c_str(), format_percent(r.r_at.at(10)).c_str(),
                  format_percent(r.map_score).c_str());
    out += line;
  }
  return out;
}

std::string variants_to_table(const std::vector<std::pair<PromptVariant, EvalReport>>& rows) {
  std::string out = "prompt     R@1     R@5    R@10     mAP\n";
  for (const auto& [v, r] : rows) {
    std::string name(variant_name(v));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    char line[96];
    std::snprintf(line, sizeof(line), "%-6s  %6s  %6s  %6s  %6s\n", name.c_str(),
                  format_percent(r.r_at.at(1)).c_str(), format_percent(r.r_at.at(5)).c_str(),
                  format_percent(r.r_at.at(10)).c_str(), format_percent(r.map_score).c_str());
    out += line;
  }
  return out;
}

TargetBook target_book(const Gallery& gallery, const std::vector<QueryRecord>& queries) {
  TargetBook book;
  for (const auto& q : queries) {
    if (!q.gt) continue;
    const auto* img = gallery.find_image(q.gt->image_id);
    if (img == nullptr) throw Error("ground truth references unknown image " + q.gt->image_id);
    book[q.query.text] = VisibleTarget{img->uri, q.gt->bbox};
  }
  return book;
}

}  // namespace sap
