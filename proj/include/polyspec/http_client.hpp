#pragma once

#include <chrono>
#include <string>
#include <thread>

#include "polyspec/errors.hpp"
#include "polyspec/llm.hpp"

#include <httplib.h>
// glibc's <resolv.h>, dragged in by the socket headers above, leaks a
// BIND-era `_res` macro that corrupts later declarations (Eigen uses the
// name as a parameter). Nothing here needs it.
#ifdef _res
#undef _res
#endif

#include <nlohmann/json.hpp>

namespace polyspec {

struct HttpClientConfig {
  std::string endpoint = "http://localhost:8000/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key;  // empty -> no Authorization header
  int max_attempts = 3;
  int backoff_ms = 200;
  int timeout_s = 120;
};

/// Chat-completions client for any OpenAI-compatible endpoint. Transient
/// failures (connection errors, 429, 5xx) are retried with exponential
/// backoff; anything else raises TransportError immediately. A fresh
/// connection is opened per request, so one instance may be shared across
/// threads.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw ConfigError("HttpChatClient: endpoint must include a scheme: " + cfg_.endpoint);
    }
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    base_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/chat/completions"
                                            : cfg_.endpoint.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_.rfind("https://", 0) == 0) {
      throw ConfigError("HttpChatClient: built without TLS support, use an http:// endpoint");
    }
#endif
  }

  ChatResponse complete(const ChatRequest& request, const QueryMeta&) override {
    const nlohmann::json body{
        {"model", request.model.empty() ? cfg_.model : request.model},
        {"messages",
         {{{"role", "system"}, {"content", request.system}},
          {{"role", "user"}, {"content", request.user}}}},
        {"temperature", request.temperature},
    };
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
      }
      httplib::Client cli(base_);
      cli.set_connection_timeout(cfg_.timeout_s, 0);
      cli.set_read_timeout(cfg_.timeout_s, 0);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = cli.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status) +
                             ": " + res->body);
      }
      return parse_response(res->body);
    }
    throw TransportError("chat endpoint unreachable after " +
                         std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
  }

 private:
  static ChatResponse parse_response(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("chat endpoint sent invalid JSON: ") + e.what());
    }
    ChatResponse out;
    try {
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("chat response missing content: ") + e.what());
    }
    if (j.contains("usage") && j["usage"].contains("prompt_tokens") &&
        j["usage"].contains("completion_tokens")) {
      out.prompt_tokens = j["usage"]["prompt_tokens"].get<long>();
      out.completion_tokens = j["usage"]["completion_tokens"].get<long>();
    } else {
      out.has_usage = false;
    }
    return out;
  }

  HttpClientConfig cfg_;
  std::string base_;
  std::string path_;
};

}  // namespace polyspec
