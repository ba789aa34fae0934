// Copyright 2026 The sap Authors
// SPDX-License-Identifier: Apache-2.0

#include "sap/service.hpp"

#include "httplib.h"
#include "jsonl.hpp"

namespace sap {

using nlohmann::json;

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

QueryService::QueryService(std::shared_ptr<RankerClient> client)
    : client_(std::move(client)), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto engine = this->engine();
    if (!engine) {
      reply_json(res, 503, {{"status", "loading"}});
      return;
    }
    reply_json(res, 200,
               {{"status", "ok"},
                {"images", engine->gallery().images().size()},
                {"crops", engine->gallery().crops().size()}});
  });

  server_->Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
    const auto engine = this->engine();
    if (!engine) {
      reply_json(res, 503, {{"error", "gallery is loading"}});
      return;
    }
    TextQuery query;
    QueryOptions options;
    try {
      const auto body = json::parse(req.body);
      query.text = detail::require_string(body, "text");
      if (query.text.empty()) throw Error("'text' must be non-empty");
      if (body.contains("appearance_text") && !body["appearance_text"].is_null()) {
        query.appearance_text = body["appearance_text"].get<std::string>();
      }
      if (body.contains("k") && !body["k"].is_null()) {
        const auto& k = body["k"];
        if (!k.is_number_integer() || k.get<long long>() < 1) throw Error("'k' must be a positive integer");
        options.k = k.get<std::size_t>();
      }
      if (body.contains("variant") && !body["variant"].is_null()) {
        options.variant = parse_variant(body["variant"].get<std::string>());
      }
    } catch (const std::exception& e) {
      reply_json(res, 400, {{"error", e.what()}});
      return;
    }
    query.query_id = "http";
    if (!resolve_text_key(query, engine->text_embeddings())) {
      reply_json(res, 400, {{"error", "no text embedding for this description"}});
      return;
    }

    QueryRun run;
    try {
      run = engine->run_query(query, *client_, options);
    } catch (const std::exception& e) {
      reply_json(res, 500, {{"error", e.what()}});
      return;
    }
    const std::size_t k = options.k.value_or(engine->config().k);
    const std::size_t shown = std::min(k, run.result.final_order.size());
    json results = json::array();
    for (std::size_t i = 0; i < shown; ++i) {
      const auto& c = run.result.final_order[i];
      const auto* crop = engine->gallery().find_crop(c.crop_id);
      results.push_back({{"rank", i + 1},
                         {"crop_id", c.crop_id},
                         {"image_id", crop->source_image_id},
                         {"bbox", detail::bbox_json(crop->bbox)},
                         {"score", c.score}});
    }
    reply_json(res, 200, {{"results", std::move(results)}, {"rerank_applied", run.result.rerank_applied}});
  });
}

QueryService::~QueryService() { stop(); }

int QueryService::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw Error("service: cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void QueryService::set_engine(std::shared_ptr<const Engine> engine) {
  std::lock_guard lock(engine_mu_);
  engine_ = std::move(engine);
}

std::shared_ptr<const Engine> QueryService::engine() const {
  std::lock_guard lock(engine_mu_);
  return engine_;
}

void QueryService::wait() {
  if (thread_.joinable()) thread_.join();
}

void QueryService::stop() {
  if (server_) server_->stop();
  wait();
}

}  // namespace sap
