// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/ranker.hpp"

#include "httplib.h"
#include "jsonl.hpp"

namespace sap {

using nlohmann::json;

json to_wire_request(const PromptBundle& bundle, const RankerConfig& config) {
  json content = json::array();
  const auto& blocks = bundle.text_blocks;
  // Every text block but the last is the caption of the image at the same
  // position; the remaining blocks follow the images.
  std::size_t next_text = 0;
  for (std::size_t i = 0; i < bundle.attachments.size(); ++i) {
    if (i + 1 < blocks.size()) content.push_back({{"type", "text"}, {"text", blocks[next_text++]}});
    const auto& att = bundle.attachments[i];
    json image = {{"type", "image"}, {"uri", att.uri}};
    if (att.embedded_box) image["box"] = detail::bbox_json(*att.embedded_box);
    if (att.overlay) {
      image["overlay"] = {{"shape", "rectangle"},
                          {"color", att.overlay->color},
                          {"bbox", detail::bbox_json(att.overlay->bbox)},
                          {"stroke_width", att.overlay->stroke_px}};
    }
    content.push_back(std::move(image));
  }
  for (; next_text < blocks.size(); ++next_text) {
    content.push_back({{"type", "text"}, {"text", blocks[next_text]}});
  }
  return {{"model", config.model},
          {"max_tokens", config.max_output_tokens},
          {"temperature", 0},
          {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

PromptBundle from_wire_request(const json& body) {
  try {
    const auto& messages = detail::require(body, "messages");
    if (!messages.is_array() || messages.size() != 1) throw Error("expected exactly one message");
    const auto& content = detail::require(messages[0], "content");
    if (!content.is_array()) throw Error("message content must be an array");

    PromptBundle bundle;
    bool any_overlay = false;
    bool any_box = false;
    for (const auto& part : content) {
      const auto type = detail::require_string(part, "type");
      if (type == "text") {
        bundle.text_blocks.push_back(detail::require_string(part, "text"));
      } else if (type == "image") {
        Attachment att{detail::require_string(part, "uri"), std::nullopt, std::nullopt};
        if (part.contains("box")) {
          att.embedded_box = detail::parse_bbox(part["box"]);
          any_box = true;
        }
        if (part.contains("overlay")) {
          const auto& ov = part["overlay"];
          att.overlay = Overlay{detail::parse_bbox(detail::require(ov, "bbox")),
                                detail::require_string(ov, "color"),
                                detail::require(ov, "stroke_width").get<int>()};
          any_overlay = true;
        }
        bundle.attachments.push_back(std::move(att));
      } else {
        throw Error("unknown content part type: " + type);
      }
    }
    bundle.variant = any_overlay ? PromptVariant::kBop
                     : any_box   ? PromptVariant::kBep
                                 : PromptVariant::kNp;
    return bundle;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed ranker request: ") + e.what());
  }
}

HttpRankerClient::HttpRankerClient(RankerConfig config) : config_(std::move(config)) {
  const auto& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("ranker endpoint must be an http URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

RankerReply HttpRankerClient::complete(const PromptBundle& bundle) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto body = to_wire_request(bundle, config_).dump();
  auto res = client.Post(path_, body, "application/json");
  if (!res) return {false, "", "transport error: " + httplib::to_string(res.error())};
  if (res->status != 200) {
    return {false, res->body, "ranker returned HTTP " + std::to_string(res->status)};
  }
  try {
    const auto reply = json::parse(res->body);
    return {true, detail::require_string(reply, "text"), ""};
  } catch (const std::exception& e) {
    return {false, res->body, std::string("malformed ranker response: ") + e.what()};
  }
}

InflightLimiter::InflightLimiter(std::shared_ptr<RankerClient> inner, std::size_t limit)
    : inner_(std::move(inner)), limit_(limit) {
  if (limit_ < 1) throw Error("in-flight limit must be at least 1");
}

RankerReply InflightLimiter::complete(const PromptBundle& bundle) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
    peak_ = std::max(peak_, active_);
  }
  RankerReply reply;
  try {
    reply = inner_->complete(bundle);
  } catch (...) {
    std::lock_guard lock(mu_);
    --active_;
    cv_.notify_one();
    throw;
  }
  std::lock_guard lock(mu_);
  --active_;
  cv_.notify_one();
  return reply;
}

std::size_t InflightLimiter::peak_inflight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

RankedResult rank_with_fallback(RankerClient& client, PromptVariant variant,
                                const std::vector<SceneCandidate>& scene_cands,
                                const std::string& text,
                                const std::vector<ScoredCandidate>& coarse,
                                const RankOptions& options, std::size_t* ranker_calls) {
  const std::size_t k = scene_cands.size();
  if (k > coarse.size()) throw Error("rank_with_fallback: more candidates than coarse results");

  RankedResult result;
  result.final_order = coarse;
  const auto bundle = build_prompt(variant, scene_cands, text);

  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    RankerReply reply;
    try {
      if (ranker_calls != nullptr) ++*ranker_calls;
      reply = client.complete(bundle);
    } catch (const std::exception& e) {
      reply = {false, "", e.what()};
    }
    result.raw_ranker_text = reply.ok ? reply.text : "error: " + reply.error;
    if (!reply.ok) continue;
    if (auto perm = parse_ranking(reply.text, k)) {
      result.final_order = apply_rerank(coarse, *perm, k);
      result.rerank_applied = true;
      return result;
    }
  }
  return result;
}

}  // namespace sap
