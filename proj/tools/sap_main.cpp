// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

// `sap` command-line front end. Every subcommand accepts --config; flags
// override the config file and the SAP_ENDPOINT / SAP_MODEL environment.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sap/embedding.hpp"
#include "sap/evaluation.hpp"
#include "sap/gallery.hpp"
#include "sap/kernels.hpp"
#include "sap/mock_ranker.hpp"
#include "sap/pipeline.hpp"
#include "sap/service.hpp"
#include "sap/synthetic.hpp"

namespace {

using sap::PipelineConfig;

struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string detections;
  std::string crop_emb;
  std::string text_emb;
  std::string scene_emb;
  std::string endpoint;
  std::string model;
  std::string mock;
  std::optional<std::size_t> k;
  std::string variant;
  std::optional<std::size_t> inflight;
  std::optional<int> retries;
  std::optional<unsigned> scan_threads;
  std::optional<double> iou;
};

void add_paths(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config document");
  cmd->add_option("--manifest", f.manifest, "Image manifest (JSONL)");
  cmd->add_option("--detections", f.detections, "Detection records (JSONL)");
  cmd->add_option("--crop-emb", f.crop_emb, "Crop embedding file");
  cmd->add_option("--text-emb", f.text_emb, "Text embedding file");
  cmd->add_option("--scene-emb", f.scene_emb, "Scene embedding file");
}

void add_ranker(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--endpoint", f.endpoint, "Ranker endpoint URL");
  cmd->add_option("--model", f.model, "Ranker model name");
  cmd->add_option("--mock", f.mock,
                  "In-process ranker: identity|reverse|garbage|timeout|oracle|oracle-box|"
                  "scripted:<path>|noisy:<p>:<seed>");
  cmd->add_option("--inflight", f.inflight, "Maximum concurrent ranker calls");
  cmd->add_option("--retries", f.retries, "Extra ranker attempts on failure");
  cmd->add_option("--scan-threads", f.scan_threads, "Threads for the scoring scan");
}

PipelineConfig resolve_config(const CommonFlags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : sap::load_config(f.config);
  sap::apply_env_overrides(c);
  if (!f.manifest.empty()) c.manifest = f.manifest;
  if (!f.detections.empty()) c.detections = f.detections;
  if (!f.crop_emb.empty()) c.crop_embeddings = f.crop_emb;
  if (!f.text_emb.empty()) c.text_embeddings = f.text_emb;
  if (!f.scene_emb.empty()) c.scene_embeddings = f.scene_emb;
  if (!f.endpoint.empty()) c.ranker.endpoint = f.endpoint;
  if (!f.model.empty()) c.ranker.model = f.model;
  if (f.k) c.k = *f.k;
  if (!f.variant.empty()) c.variant = sap::parse_variant(f.variant);
  if (f.inflight) c.inflight_limit = *f.inflight;
  if (f.retries) c.retries = *f.retries;
  if (f.scan_threads) c.scan_threads = *f.scan_threads;
  if (f.iou) c.iou_threshold = *f.iou;
  c.validate();
  return c;
}

void require_gallery_paths(const PipelineConfig& c) {
  if (c.manifest.empty() || c.detections.empty()) {
    throw sap::Error("--manifest and --detections (or a config naming them) are required");
  }
}

std::shared_ptr<sap::RankerClient> make_client(const CommonFlags& f, const PipelineConfig& c,
                                               const sap::TargetBook* targets) {
  std::shared_ptr<sap::RankerClient> inner;
  if (!f.mock.empty()) {
    inner = sap::make_mock_ranker(f.mock, targets);
  } else if (!c.ranker.endpoint.empty()) {
    inner = std::make_shared<sap::HttpRankerClient>(c.ranker);
  } else {
    throw sap::Error("no ranker configured: pass --endpoint, --mock, or set SAP_ENDPOINT");
  }
  return std::make_shared<sap::InflightLimiter>(std::move(inner), c.inflight_limit);
}

std::vector<std::size_t> parse_k_list(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const long long v = std::stoll(item);
    if (v < 1) throw sap::Error("candidate sizes must be positive: " + item);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<sap::PromptVariant> parse_variant_list(const std::string& list) {
  std::vector<sap::PromptVariant> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(sap::parse_variant(item));
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw sap::Error("cannot write " + path);
  out << contents;
}

void print_ranking(const sap::RankedResult& r, std::size_t limit, const sap::Gallery& gallery) {
  std::printf("%4s  %-24s  %-18s  %10s\n", "rank", "crop_id", "image_id", "score");
  for (std::size_t i = 0; i < std::min(limit, r.final_order.size()); ++i) {
    const auto& c = r.final_order[i];
    const auto* crop = gallery.find_crop(c.crop_id);
    std::printf("%4zu  %-24s  %-18s  %10.6f\n", i + 1, c.crop_id.c_str(),
                crop ? crop->source_image_id.c_str() : "?", c.score);
  }
}

std::function<void()> g_stop;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-aware text-to-person retrieval engine"};
  app.require_subcommand(1);
  CommonFlags f;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a manifest and detection file");
  add_paths(ingest, f);
  bool lenient = false;
  std::string out_manifest, out_detections;
  ingest->add_flag("--lenient", lenient, "Skip invalid records instead of failing");
  ingest->add_option("--out-manifest", out_manifest, "Write the validated manifest here");
  ingest->add_option("--out-detections", out_detections, "Write the validated detections here");

  // filter
  auto* filter = app.add_subcommand("filter", "Keep crops with a visible head and shoulder");
  add_paths(filter, f);
  filter->add_option("--out-detections", out_detections, "Write the retained detections here");

  // dedup
  auto* dedup = app.add_subcommand("dedup", "Drop crops duplicated in crop and scene space");
  add_paths(dedup, f);
  std::optional<double> threshold;
  dedup->add_option("--threshold", threshold, "Cosine threshold on both embeddings (default 0.95)");
  dedup->add_option("--out-detections", out_detections, "Write the retained detections here");

  // emb check
  auto* emb = app.add_subcommand("emb", "Embedding file tools");
  emb->require_subcommand(1);
  auto* emb_check = emb->add_subcommand("check", "Validate an embedding file");
  std::string emb_path;
  emb_check->add_option("path", emb_path, "Embedding file")->required();
  emb_check->add_option("--config", f.config, "Ignored; accepted for uniformity");

  // query
  auto* query = app.add_subcommand("query", "Coarse stage only: print the top-K crops");
  add_paths(query, f);
  std::string text, appearance_text, key;
  query->add_option("--text", text, "Description")->required();
  query->add_option("--appearance-text", appearance_text, "Appearance-only text for scoring");
  query->add_option("--key", key, "Text embedding key (defaults to the text itself)");
  query->add_option("-k,--k", f.k, "Candidate size");
  query->add_option("--scan-threads", f.scan_threads, "Threads for the scoring scan");

  // rerank
  auto* rerank = app.add_subcommand("rerank", "Both stages for one description or a query file");
  add_paths(rerank, f);
  add_ranker(rerank, f);
  std::string queries_path, out_results;
  rerank->add_option("--variant", f.variant, "Prompt variant: np|bop|bep");
  rerank->add_option("-k,--k", f.k, "Candidate size");
  rerank->add_option("--text", text, "Description");
  rerank->add_option("--appearance-text", appearance_text, "Appearance-only text for scoring");
  rerank->add_option("--key", key, "Text embedding key");
  rerank->add_option("--queries", queries_path, "Query file (JSONL)");
  rerank->add_option("--out", out_results, "Write ranked results (JSONL)");

  // eval
  auto* eval = app.add_subcommand("eval", "Score ranked results against ground truth");
  add_paths(eval, f);
  std::string results_path, out_json;
  eval->add_option("--results", results_path, "Ranked results (JSONL)")->required();
  eval->add_option("--queries", queries_path, "Query file with ground truth")->required();
  eval->add_option("--iou", f.iou, "IoU threshold for a match (default 0.5)");
  eval->add_option("--json", out_json, "Also write the JSON report here");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Candidate-size sweep or prompt-variant comparison");
  add_paths(ablate, f);
  add_ranker(ablate, f);
  std::string sweep_k, variants;
  ablate->add_option("--queries", queries_path, "Query file with ground truth")->required();
  ablate->add_option("--sweep-k", sweep_k, "Comma-separated candidate sizes");
  ablate->add_option("--variants", variants, "Comma-separated prompt variants");
  ablate->add_option("-k,--k", f.k, "Candidate size for the variant comparison");
  ablate->add_option("--variant", f.variant, "Prompt variant for the sweep");

  // describe
  auto* describe = app.add_subcommand("describe", "Emit the red-box description prompt for a crop");
  add_paths(describe, f);
  std::string crop_id;
  describe->add_option("--crop-id", crop_id, "Crop to describe")->required();
  describe->add_option("--model", f.model, "Model name for the wire request");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP query service");
  add_paths(serve, f);
  add_ranker(serve, f);
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks one)");

  // run-benchmark
  auto* bench = app.add_subcommand("run-benchmark", "Coarse vs re-ranked metrics over a query file");
  add_paths(bench, f);
  add_ranker(bench, f);
  std::string out_report;
  bench->add_option("--queries", queries_path, "Query file with ground truth")->required();
  bench->add_option("--variant", f.variant, "Prompt variant: np|bop|bep");
  bench->add_option("-k,--k", f.k, "Candidate size");
  bench->add_option("--iou", f.iou, "IoU threshold for a match");
  bench->add_option("--out-report", out_report, "Write the JSON report here");
  bench->add_option("--out-results", out_results, "Write ranked results (JSONL)");

  // mock-ranker
  auto* mock = app.add_subcommand("mock-ranker", "Loopback ranker speaking the wire contract");
  add_paths(mock, f);
  std::string mode = "identity";
  int mock_port = 0;
  mock->add_option("--mode", mode, "identity|reverse|garbage|timeout|oracle|oracle-box|scripted:<path>|noisy:<p>:<seed>");
  mock->add_option("--port", mock_port, "Port (0 picks one)");
  mock->add_option("--queries", queries_path, "Query file, needed by oracle modes");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic gallery, embeddings and queries");
  std::string synth_out;
  std::size_t synth_images = 500, synth_queries = 50;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--images", synth_images, "Number of scene images");
  synth->add_option("--queries", synth_queries, "Number of queries");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--config", f.config, "Ignored; accepted for uniformity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      std::size_t skipped = 0;
      sap::IngestOptions opts;
      opts.lenient = lenient;
      opts.on_skip = [&](const std::string& msg) {
        ++skipped;
        std::cerr << "skipped " << msg << "\n";
      };
      const auto g = sap::load_manifest(c.manifest, c.detections, opts);
      std::printf("images: %zu\ncrops: %zu\nskipped: %zu\n", g.images().size(), g.crops().size(), skipped);
      if (!out_manifest.empty() || !out_detections.empty()) {
        if (out_manifest.empty() || out_detections.empty()) {
          throw sap::Error("--out-manifest and --out-detections go together");
        }
        sap::save_manifest(g, out_manifest, out_detections);
      }
    } else if (filter->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto g = sap::load_manifest(c.manifest, c.detections);
      const auto kept = sap::apply_filter(g);
      std::printf("crops: %zu -> %zu\n", g.crops().size(), kept.crops().size());
      if (!out_detections.empty()) sap::save_detections(kept, out_detections);
    } else if (dedup->parsed()) {
      auto c = resolve_config(f);
      require_gallery_paths(c);
      if (threshold) c.dedup_threshold = *threshold;
      if (c.crop_embeddings.empty() || c.scene_embeddings.empty()) {
        throw sap::Error("--crop-emb and --scene-emb are required");
      }
      const auto g = sap::load_manifest(c.manifest, c.detections);
      const auto kept = sap::dedup(g, sap::load_embeddings(c.crop_embeddings),
                                   sap::load_embeddings(c.scene_embeddings), c.dedup_threshold);
      std::printf("crops: %zu -> %zu (threshold %s)\n", g.crops().size(), kept.crops().size(),
                  sap::format_number(c.dedup_threshold).c_str());
      if (!out_detections.empty()) sap::save_detections(kept, out_detections);
    } else if (emb_check->parsed()) {
      const auto m = sap::load_embeddings(emb_path);
      double lo = 0, hi = 0;
      for (std::size_t r = 0; r < m.size(); ++r) {
        const double n = std::sqrt(sap::kernels::dot(m.row(r), m.row(r)));
        lo = r == 0 ? n : std::min(lo, n);
        hi = r == 0 ? n : std::max(hi, n);
      }
      std::printf("dim: %u\ncount: %zu\nnorm range: [%.9f, %.9f]\nkernel: %s\nok\n", m.dim(), m.size(),
                  lo, hi, std::string(sap::kernels::isa_name(sap::kernels::active_isa())).c_str());
    } else if (query->parsed()) {
      auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto engine = sap::Engine::load(c);
      sap::TextQuery q{"cli", text, std::nullopt, key.empty() ? text : key};
      if (!appearance_text.empty()) q.appearance_text = appearance_text;
      if (key.empty() && q.appearance_text) q.text_embedding_key = *q.appearance_text;
      const auto scores = sap::score_gallery(q, engine.text_embeddings(), engine.crop_embeddings(),
                                             engine.gallery(), {c.scan_threads});
      const auto top = sap::top_k(scores, c.k);
      std::printf("%4s  %-24s  %10s\n", "rank", "crop_id", "score");
      for (std::size_t i = 0; i < top.candidates.size(); ++i) {
        std::printf("%4zu  %-24s  %10.6f\n", i + 1, top.candidates[i].crop_id.c_str(),
                    top.candidates[i].score);
      }
    } else if (rerank->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto engine = sap::Engine::load(c);
      std::vector<sap::QueryRecord> queries;
      if (!queries_path.empty()) {
        queries = sap::load_queries(queries_path);
      } else if (!text.empty()) {
        sap::QueryRecord rec;
        rec.query = {"cli", text, std::nullopt, key.empty() ? text : key};
        if (!appearance_text.empty()) rec.query.appearance_text = appearance_text;
        if (key.empty() && rec.query.appearance_text) rec.query.text_embedding_key = *rec.query.appearance_text;
        queries.push_back(rec);
      } else {
        throw sap::Error("pass --text or --queries");
      }
      const auto book = sap::target_book(engine.gallery(), queries);
      auto client = make_client(f, c, &book);
      std::vector<sap::RankedResult> results;
      for (const auto& q : queries) {
        auto run = engine.run_query(q.query, *client);
        std::printf("query %s  rerank_applied=%s  ranker=%s\n", q.query.query_id.c_str(),
                    run.result.rerank_applied ? "true" : "false", run.result.raw_ranker_text.c_str());
        print_ranking(run.result, c.k, engine.gallery());
        results.push_back(std::move(run.result));
      }
      if (!out_results.empty()) sap::save_results(results, out_results);
    } else if (eval->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto gallery = sap::load_manifest(c.manifest, c.detections);
      const auto queries = sap::load_queries(queries_path);
      const auto results = sap::load_results(results_path);
      const auto report = sap::evaluate(results, gallery, sap::ground_truth_of(queries), c.iou_threshold);
      std::cout << sap::report_to_table(report) << sap::report_to_json(report) << "\n";
      if (!out_json.empty()) write_file(out_json, sap::report_to_json(report) + "\n");
    } else if (ablate->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      if (sweep_k.empty() == variants.empty()) throw sap::Error("pass exactly one of --sweep-k or --variants");
      const auto engine = sap::Engine::load(c);
      const auto queries = sap::load_queries(queries_path);
      const auto book = sap::target_book(engine.gallery(), queries);
      auto client = make_client(f, c, &book);
      if (!sweep_k.empty()) {
        std::cout << sap::sweep_to_table(
            sap::sweep_candidate_size(engine, queries, *client, parse_k_list(sweep_k)));
      } else {
        std::cout << sap::variants_to_table(
            sap::compare_prompt_variants(engine, queries, *client, parse_variant_list(variants)));
      }
    } else if (describe->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto gallery = sap::load_manifest(c.manifest, c.detections);
      const auto* crop = gallery.find_crop(crop_id);
      if (crop == nullptr) throw sap::Error("unknown crop_id: " + crop_id);
      const auto bundle = sap::build_description_prompt(gallery.scene_of(*crop), crop->bbox,
                                                        c.overlay_stroke_px);
      std::cout << sap::to_wire_request(bundle, c.ranker).dump(2) << "\n";
    } else if (serve->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      auto client = make_client(f, c, nullptr);
      sap::QueryService service(client);
      const int bound = service.start(host, port);
      std::cerr << "listening on " << host << ":" << bound << " (loading gallery)\n";
      service.set_engine(std::make_shared<const sap::Engine>(sap::Engine::load(c)));
      std::cerr << "ready\n";
      g_stop = [&service] { service.stop(); };
      std::signal(SIGINT, [](int) { if (g_stop) g_stop(); });
      std::signal(SIGTERM, [](int) { if (g_stop) g_stop(); });
      service.wait();
    } else if (bench->parsed()) {
      const auto c = resolve_config(f);
      require_gallery_paths(c);
      const auto engine = sap::Engine::load(c);
      const auto queries = sap::load_queries(queries_path);
      const auto book = sap::target_book(engine.gallery(), queries);
      auto client = make_client(f, c, &book);
      const auto report = sap::run_benchmark(engine, queries, *client);
      std::cout << sap::benchmark_to_table(report);
      if (!out_report.empty()) write_file(out_report, sap::benchmark_to_json(report) + "\n");
      if (!out_results.empty()) sap::save_results(report.results, out_results);
    } else if (mock->parsed()) {
      std::optional<sap::TargetBook> book;
      if (!queries_path.empty()) {
        const auto c = resolve_config(f);
        require_gallery_paths(c);
        book = sap::target_book(sap::load_manifest(c.manifest, c.detections), sap::load_queries(queries_path));
      }
      std::shared_ptr<sap::RankerClient> behavior = sap::make_mock_ranker(mode, book ? &*book : nullptr);
      sap::MockRankerServer server(behavior, mock_port);
      std::cout << server.endpoint() << std::endl;
      g_stop = [&server] { server.stop(); };
      std::signal(SIGINT, [](int) { if (g_stop) g_stop(); });
      std::signal(SIGTERM, [](int) { if (g_stop) g_stop(); });
      server.wait();
    } else if (synth->parsed()) {
      sap::SyntheticSpec spec;
      spec.num_images = synth_images;
      spec.seed = synth_seed;
      for (std::size_t q = 0; q < synth_queries; ++q) spec.target_ranks.push_back(1 + (q * 7) % 23);
      const auto fx = sap::make_synthetic(spec);
      sap::write_synthetic(fx, synth_out);
      std::printf("wrote %zu images, %zu crops, %zu queries to %s\n", fx.gallery.images().size(),
                  fx.gallery.crops().size(), fx.queries.size(), synth_out.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
