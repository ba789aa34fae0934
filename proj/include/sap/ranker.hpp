// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "sap/permutation.hpp"
#include "sap/prompt.hpp"

namespace sap {

struct RankerConfig {
  std::string endpoint;  // http://host:port/path
  std::string model = "internvl2.5-8b";
  int max_output_tokens = 128;
  int timeout_ms = 30000;
};

struct RankerReply {
  bool ok = false;
  std::string text;   // model output when ok
  std::string error;  // transport or upstream failure otherwise
};

/// Sends a prompt to a vision-language ranker. Decoding is deterministic, so
/// identical bundles must produce identical replies. Implementations must be
/// safe to call from several threads at once.
class RankerClient {
 public:
  virtual ~RankerClient() = default;
  virtual RankerReply complete(const PromptBundle& bundle) = 0;
};

/// Wire request body for a bundle:
///   {"model", "max_tokens", "temperature": 0, "messages": [{"role": "user",
///    "content": [parts]}]}
/// Each `Image-m` text part is followed by its image part
///   {"type": "image", "uri", "box"?: [x,y,w,h], "overlay"?: {...}}
/// and the instruction closes the list.
nlohmann::json to_wire_request(const PromptBundle& bundle, const RankerConfig& config);

/// Inverse of to_wire_request, used by the loopback mock. Throws sap::Error.
PromptBundle from_wire_request(const nlohmann::json& body);

/// POSTs the wire request and reads {"text": "..."} from the response.
class HttpRankerClient final : public RankerClient {
 public:
  explicit HttpRankerClient(RankerConfig config);
  RankerReply complete(const PromptBundle& bundle) override;

 private:
  RankerConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Caps concurrent calls into a shared client. Callers beyond the limit block.
class InflightLimiter final : public RankerClient {
 public:
  InflightLimiter(std::shared_ptr<RankerClient> inner, std::size_t limit);
  RankerReply complete(const PromptBundle& bundle) override;

  std::size_t peak_inflight() const;

 private:
  std::shared_ptr<RankerClient> inner_;
  std::size_t limit_;
  std::size_t active_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

struct RankOptions {
  /// Extra attempts after a failed call or unparseable reply.
  int retries = 0;
};

/// Invokes the client and merges the reply into the coarse ranking. Any client
/// error, exception, or unparseable reply leaves the coarse order in place with
/// rerank_applied = false; the raw text is kept either way.
RankedResult rank_with_fallback(RankerClient& client, PromptVariant variant,
                                const std::vector<SceneCandidate>& scene_cands,
                                const std::string& text,
                                const std::vector<ScoredCandidate>& coarse,
                                const RankOptions& options = {},
                                std::size_t* ranker_calls = nullptr);

}  // namespace sap
