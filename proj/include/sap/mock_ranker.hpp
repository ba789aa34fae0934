// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

// In-process stand-ins for a vision-language ranker, and a loopback HTTP server
// that serves any of them over the ranker wire contract. Every mock sees only
// what a real model would: the prompt text and the attachments.

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "sap/common.hpp"
#include "sap/gallery.hpp"
#include "sap/ranker.hpp"

namespace httplib {
class Server;
}

namespace sap {

/// Where the true target sits, as visible from a prompt.
struct VisibleTarget {
  std::string uri;
  BBox bbox;
};

/// Description text -> target, built from a query set and gallery.
using TargetBook = std::map<std::string, VisibleTarget>;

/// "[1, 2, ..., K]"
std::string format_index_list(const std::vector<std::size_t>& order);

/// Returns the candidates in their coarse order.
class IdentityRanker final : public RankerClient {
 public:
  RankerReply complete(const PromptBundle& bundle) override;
};

/// Returns the candidates in reverse coarse order.
class ReverseRanker final : public RankerClient {
 public:
  RankerReply complete(const PromptBundle& bundle) override;
};

/// Always returns the same text.
class FixedTextRanker final : public RankerClient {
 public:
  explicit FixedTextRanker(std::string text) : text_(std::move(text)) {}
  RankerReply complete(const PromptBundle& bundle) override;

 private:
  std::string text_;
};

/// Always fails as a timed-out transport would.
class TimeoutRanker final : public RankerClient {
 public:
  RankerReply complete(const PromptBundle& bundle) override;
};

/// Replays canned responses keyed by description text. Unknown texts get
/// `fallback_text`.
class ScriptedRanker final : public RankerClient {
 public:
  explicit ScriptedRanker(std::map<std::string, std::string> responses,
                          std::string fallback_text = "");
  /// Line-delimited {"text": str, "response": str}.
  static ScriptedRanker from_file(const std::filesystem::path& path);
  RankerReply complete(const PromptBundle& bundle) override;

 private:
  std::map<std::string, std::string> responses_;
  std::string fallback_text_;
};

/// Moves the candidate matching the true target to the front whenever one is
/// present; the rest keep coarse order. A candidate matches when its uri equals
/// the target uri and, if the prompt exposes a box, IoU >= iou_threshold.
/// With `require_box_tags` the oracle only acts on prompts carrying <box> tags
/// and otherwise behaves like IdentityRanker.
class OracleRanker final : public RankerClient {
 public:
  explicit OracleRanker(TargetBook targets, double iou_threshold = 0.5,
                        bool require_box_tags = false);
  RankerReply complete(const PromptBundle& bundle) override;

  /// 1-based index of the matching attachment, or 0.
  std::size_t find_target(const PromptBundle& bundle) const;

 private:
  TargetBook targets_;
  double iou_threshold_;
  bool require_box_tags_;
};

/// Oracle with probability `p_correct`; otherwise a uniformly random
/// permutation. The success draw depends only on (seed, description) so it is
/// shared across candidate sizes; the shuffle also depends on K.
class NoisyOracleRanker final : public RankerClient {
 public:
  NoisyOracleRanker(TargetBook targets, double p_correct, std::uint64_t seed,
                    double iou_threshold = 0.5);
  RankerReply complete(const PromptBundle& bundle) override;

 private:
  OracleRanker oracle_;
  double p_correct_;
  std::uint64_t seed_;
};

/// Builds a mock from a spec string:
///   identity | reverse | garbage | timeout | scripted:<path> | oracle |
///   oracle-box | noisy:<p>:<seed>
/// oracle variants need `targets`.
std::unique_ptr<RankerClient> make_mock_ranker(std::string_view spec, const TargetBook* targets);

/// Loopback HTTP server implementing the ranker wire contract on top of an
/// in-process RankerClient. Binds 127.0.0.1; port 0 picks a free port.
class MockRankerServer {
 public:
  explicit MockRankerServer(std::shared_ptr<RankerClient> behavior, int port = 0);
  ~MockRankerServer();
  MockRankerServer(const MockRankerServer&) = delete;
  MockRankerServer& operator=(const MockRankerServer&) = delete;

  int port() const { return port_; }
  std::string endpoint() const;
  std::size_t requests_served() const;

  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  std::shared_ptr<RankerClient> behavior_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::shared_ptr<std::atomic<std::size_t>> served_;
};

}  // namespace sap
