// Copyright 2026 The lunatc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lunatc/oracle.hpp"

namespace lunatc {

// Client side of the external classifier protocol:
//   POST /logits {"texts": [string]} -> {"logits": [[float]]}
//   POST /labels {"texts": [string]} -> {"labels": [int]}
// Texts travel as space-joined tokens; the server re-tokenizes them.
class HttpBackend final : public ClassifierBackend {
 public:
  HttpBackend(std::string base_url, std::size_t num_classes,
              std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : base_url_(std::move(base_url)), num_classes_(num_classes), timeout_(timeout) {}

  std::string kind() const override { return "external"; }
  std::size_t num_classes() const override { return num_classes_; }

  std::vector<Logits> logits(std::span<const TokenizedText> texts) const override {
    const auto reply = post("/logits", texts);
    try {
      return reply.at("logits").get<std::vector<Logits>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch(std::string("bad /logits reply: ") + e.what());
    }
  }

  std::vector<ClassIndex> labels(std::span<const TokenizedText> texts) const override {
    const auto reply = post("/labels", texts);
    try {
      return reply.at("labels").get<std::vector<ClassIndex>>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch(std::string("bad /labels reply: ") + e.what());
    }
  }

 private:
  nlohmann::json post(const std::string& route,
                      std::span<const TokenizedText> texts) const {
    nlohmann::json body;
    body["texts"] = nlohmann::json::array();
    for (const auto& t : texts) body["texts"].push_back(t.joined());
    // httplib::Client is not safe for concurrent use; one per request.
    httplib::Client client(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Post(route, body.dump(), "application/json");
    if (!res) {
      throw BackendUnavailable("cannot reach classifier at " + base_url_ + route +
                               ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw BackendUnavailable("classifier at " + base_url_ + route +
                               " answered HTTP " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaMismatch(std::string("classifier reply is not JSON: ") + e.what());
    }
  }

  std::string base_url_;
  std::size_t num_classes_;
  std::chrono::milliseconds timeout_;
};

// Serves a backend over the same protocol. Queries made through the server are
// not counted here; the client-side handle does the accounting.
class ClassifierServer {
 public:
  explicit ClassifierServer(std::shared_ptr<const ClassifierBackend> backend)
      : backend_(std::move(backend)) {
    server_.Post("/logits", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](std::span<const TokenizedText> texts) {
        return nlohmann::json{{"logits", backend_->logits(texts)}};
      });
    });
    server_.Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](std::span<const TokenizedText> texts) {
        return nlohmann::json{{"labels", backend_->labels(texts)}};
      });
    });
  }

  ~ClassifierServer() { stop(); }
  ClassifierServer(const ClassifierServer&) = delete;
  ClassifierServer& operator=(const ClassifierServer&) = delete;

  // Binds an ephemeral port on `host` and serves on a background thread.
  int start(const std::string& host = "127.0.0.1") {
    port_ = server_.bind_to_any_port(host);
    if (port_ < 0) throw BackendUnavailable("cannot bind classifier server");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Blocks serving on host:port.
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port)) {
      throw BackendUnavailable("cannot listen on " + host + ":" + std::to_string(port));
    }
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  template <typename Fn>
  void handle(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    try {
      const auto body = nlohmann::json::parse(req.body);
      std::vector<TokenizedText> texts;
      for (const auto& s : body.at("texts")) texts.push_back(tokenize(s.get<std::string>()));
      res.set_content(fn(texts).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  std::shared_ptr<const ClassifierBackend> backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace lunatc
