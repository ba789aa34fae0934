// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/mock_ranker.hpp"

#include <charconv>
#include <numeric>
#include <random>

#include "httplib.h"
#include "jsonl.hpp"
#include "sap/evaluation.hpp"

namespace sap {

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t seed, std::string_view text, std::uint64_t salt) {
  std::uint64_t h = fnv1a(text, 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL));
  h ^= salt + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::vector<std::size_t> identity_order(std::size_t k) {
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{1});
  return order;
}

}  // namespace

std::string format_index_list(const std::vector<std::size_t>& order) {
  std::string out = "[";
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(order[i]);
  }
  return out + "]";
}

RankerReply IdentityRanker::complete(const PromptBundle& bundle) {
  return {true, format_index_list(identity_order(bundle.attachments.size())), ""};
}

RankerReply ReverseRanker::complete(const PromptBundle& bundle) {
  auto order = identity_order(bundle.attachments.size());
  std::reverse(order.begin(), order.end());
  return {true, format_index_list(order), ""};
}

RankerReply FixedTextRanker::complete(const PromptBundle&) { return {true, text_, ""}; }

RankerReply TimeoutRanker::complete(const PromptBundle&) {
  return {false, "", "timeout"};
}

ScriptedRanker::ScriptedRanker(std::map<std::string, std::string> responses, std::string fallback_text)
    : responses_(std::move(responses)), fallback_text_(std::move(fallback_text)) {}

ScriptedRanker ScriptedRanker::from_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> responses;
  detail::for_each_jsonl(path, [&](const nlohmann::json& rec, std::size_t) {
    responses[detail::require_string(rec, "text")] = detail::require_string(rec, "response");
  });
  return ScriptedRanker(std::move(responses));
}

RankerReply ScriptedRanker::complete(const PromptBundle& bundle) {
  const auto text = extract_query_text(render_text(bundle));
  if (text) {
    if (auto it = responses_.find(*text); it != responses_.end()) return {true, it->second, ""};
  }
  return {true, fallback_text_, ""};
}

OracleRanker::OracleRanker(TargetBook targets, double iou_threshold, bool require_box_tags)
    : targets_(std::move(targets)), iou_threshold_(iou_threshold), require_box_tags_(require_box_tags) {}

std::size_t OracleRanker::find_target(const PromptBundle& bundle) const {
  const auto rendered = render_text(bundle);
  if (require_box_tags_ && rendered.find("<box>") == std::string::npos) return 0;
  const auto text = extract_query_text(rendered);
  if (!text) return 0;
  const auto it = targets_.find(*text);
  if (it == targets_.end()) return 0;
  const auto& target = it->second;

  for (std::size_t i = 0; i < bundle.attachments.size(); ++i) {
    const auto& att = bundle.attachments[i];
    if (att.uri != target.uri) continue;
    std::optional<BBox> box = att.embedded_box;
    if (!box && att.overlay) box = att.overlay->bbox;
    if (!box || iou(*box, target.bbox) >= iou_threshold_) return i + 1;
  }
  return 0;
}

RankerReply OracleRanker::complete(const PromptBundle& bundle) {
  auto order = identity_order(bundle.attachments.size());
  if (const auto hit = find_target(bundle); hit > 0) {
    std::rotate(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(hit - 1),
                order.begin() + static_cast<std::ptrdiff_t>(hit));
  }
  return {true, format_index_list(order), ""};
}

NoisyOracleRanker::NoisyOracleRanker(TargetBook targets, double p_correct, std::uint64_t seed,
                                     double iou_threshold)
    : oracle_(std::move(targets), iou_threshold), p_correct_(p_correct), seed_(seed) {}

RankerReply NoisyOracleRanker::complete(const PromptBundle& bundle) {
  const auto text = extract_query_text(render_text(bundle)).value_or("");
  const std::size_t k = bundle.attachments.size();

  std::mt19937_64 draw(mix(seed_, text, 0));
  const double u = static_cast<double>(draw() >> 11) * 0x1.0p-53;
  if (u < p_correct_) return oracle_.complete(bundle);

  std::mt19937_64 rng(mix(seed_, text, k));
  auto order = identity_order(k);
  for (std::size_t i = k; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return {true, format_index_list(order), ""};
}

std::unique_ptr<RankerClient> make_mock_ranker(std::string_view spec, const TargetBook* targets) {
  auto need_targets = [&] {
    if (targets == nullptr) throw Error("mock '" + std::string(spec) + "' needs a query set");
    return *targets;
  };
  if (spec == "identity") return std::make_unique<IdentityRanker>();
  if (spec == "reverse") return std::make_unique<ReverseRanker>();
  if (spec == "garbage") return std::make_unique<FixedTextRanker>("I am unable to rank these images.");
  if (spec == "timeout") return std::make_unique<TimeoutRanker>();
  if (spec == "oracle") return std::make_unique<OracleRanker>(need_targets());
  if (spec == "oracle-box") return std::make_unique<OracleRanker>(need_targets(), 0.5, true);
  if (spec.starts_with("scripted:")) {
    return std::make_unique<ScriptedRanker>(ScriptedRanker::from_file(std::string(spec.substr(9))));
  }
  if (spec.starts_with("noisy:")) {
    const auto rest = spec.substr(6);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw Error("noisy mock spec is noisy:<p>:<seed>");
    const double p = std::stod(std::string(rest.substr(0, colon)));
    std::uint64_t seed = 0;
    const auto seed_str = rest.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(seed_str.data(), seed_str.data() + seed_str.size(), seed);
    if (ec != std::errc{} || ptr != seed_str.data() + seed_str.size() || !(p >= 0 && p <= 1)) {
      throw Error("noisy mock spec is noisy:<p>:<seed>");
    }
    return std::make_unique<NoisyOracleRanker>(need_targets(), p, seed);
  }
  throw Error("unknown mock ranker: " + std::string(spec));
}

MockRankerServer::MockRankerServer(std::shared_ptr<RankerClient> behavior, int port)
    : behavior_(std::move(behavior)),
      server_(std::make_unique<httplib::Server>()),
      served_(std::make_shared<std::atomic<std::size_t>>(0)) {
  server_->Post(".*", [behavior = behavior_, served = served_](const httplib::Request& req,
                                                               httplib::Response& res) {
    ++*served;
    PromptBundle bundle;
    try {
      bundle = from_wire_request(nlohmann::json::parse(req.body));
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const auto reply = behavior->complete(bundle);
    if (!reply.ok) {
      res.status = reply.error == "timeout" ? 504 : 502;
      res.set_content(nlohmann::json{{"error", reply.error}}.dump(), "application/json");
      return;
    }
    res.set_content(nlohmann::json{{"text", reply.text}}.dump(), "application/json");
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else if (server_->bind_to_port("127.0.0.1", port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw Error("mock ranker: cannot bind port " + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockRankerServer::~MockRankerServer() { stop(); }

std::string MockRankerServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1/rank";
}

std::size_t MockRankerServer::requests_served() const { return served_->load(); }

void MockRankerServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void MockRankerServer::stop() {
  if (server_) server_->stop();
  wait();
}

}  // namespace sap
