// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sap/pipeline.hpp"

namespace httplib {
class Server;
}

namespace sap {

/// HTTP query service:
///   GET  /health    -> {"status": "ok"|"loading", "images": N, "crops": M}
///   POST /v1/query  -> {"results": [{rank, crop_id, image_id, bbox, score}],
///                       "rerank_applied": bool}
/// Answers 503 until an engine is installed and 400 on malformed bodies.
class QueryService {
 public:
  explicit QueryService(std::shared_ptr<RankerClient> client);
  ~QueryService();
  QueryService(const QueryService&) = delete;
  QueryService& operator=(const QueryService&) = delete;

  /// Binds host:port (port 0 picks one) and starts serving in the background.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void set_engine(std::shared_ptr<const Engine> engine);
  void wait();
  void stop();

  int port() const { return port_; }

 private:
  std::shared_ptr<RankerClient> client_;
  std::shared_ptr<const Engine> engine_;
  mutable std::mutex engine_mu_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;

  std::shared_ptr<const Engine> engine() const;
};

}  // namespace sap
