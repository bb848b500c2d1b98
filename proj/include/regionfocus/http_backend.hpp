#pragma once

// Live backend over an OpenAI-style chat-completions endpoint. Images travel
// as base64 PNG data URLs inside image_url content parts.
//
// Including this header pulls in cpp-httplib with TLS; link OpenSSL::SSL.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "regionfocus/encoding.hpp"
#include "regionfocus/gateway.hpp"
#include "regionfocus/png_io.hpp"

namespace regionfocus {

inline nlohmann::json to_wire(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.image) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(encode_png(*p.image))}}}});
      } else {
        content.push_back({{"type", "text"}, {"text", p.text}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  return {{"model", req.profile.model},
          {"messages", messages},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}};
}

/// Extracts the assistant text from a chat-completions response body.
inline std::string reply_text(const nlohmann::json& body) {
  const auto& msg = body.at("choices").at(0).at("message");
  const auto& content = msg.at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  if (content.is_array())
    for (const auto& part : content)
      if (part.value("type", "") == "text") out += part.value("text", "");
  return out;
}

/// API key lookup: REGIONFOCUS_API_KEY, then OPENAI_API_KEY.
inline std::string api_key_from_env() {
  for (const char* name : {"REGIONFOCUS_API_KEY", "OPENAI_API_KEY"})
    if (const char* v = std::getenv(name); v && *v) return v;
  return {};
}

struct RetryPolicy {
  double base_seconds = 1.0;
  double cap_seconds = 30.0;
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };
};

class HttpBackend : public ModelBackend {
 public:
  HttpBackend(std::string api_key, RetryPolicy retry = {}, std::uint64_t jitter_seed = std::random_device{}())
      : key_(std::move(api_key)), retry_(std::move(retry)), rng_(jitter_seed) {}

  std::string complete(const ChatRequest& req) override {
    validate_request(req);
    const auto& prof = req.profile;
    if (prof.endpoint.empty()) throw GatewayError("profile '" + prof.name + "' has no endpoint configured");
    const auto [origin, base_path] = split_endpoint(prof.endpoint);
    const std::string body = to_wire(req).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= prof.max_retries; ++attempt) {
      if (attempt > 0) retry_.sleep(backoff(attempt));
      httplib::Client cli(origin);
      cli.set_connection_timeout(prof.timeout_seconds, 0);
      cli.set_read_timeout(prof.timeout_seconds, 0);
      cli.set_write_timeout(prof.timeout_seconds, 0);
      httplib::Headers headers;
      if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
      auto res = cli.Post(base_path + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        const auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw GatewayError("response body is not JSON");
        try {
          return reply_text(j);
        } catch (const nlohmann::json::exception& e) {
          throw GatewayError(std::string("unexpected response shape: ") + e.what());
        }
      }
      if (res->status == 413 || res->body.find("context_length_exceeded") != std::string::npos)
        throw ContextLimitError("endpoint rejected request size (HTTP " + std::to_string(res->status) + ")");
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      throw GatewayError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    throw TransportError("giving up after " + std::to_string(prof.max_retries + 1) + " attempts; last error " +
                         last_error);
  }

  static std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme = endpoint.find("://");
    const auto path_at = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string origin = path_at == std::string::npos ? endpoint : endpoint.substr(0, path_at);
    std::string path = path_at == std::string::npos ? "" : endpoint.substr(path_at);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {origin, path};
  }

 private:
  // Full jitter over an exponentially growing window.
  double backoff(int attempt) {
    const double window = std::min(retry_.cap_seconds, retry_.base_seconds * std::pow(2.0, attempt - 1));
    std::lock_guard lock(mu_);
    return std::uniform_real_distribution<double>(0.5 * window, window)(rng_);
  }

  std::string key_;
  RetryPolicy retry_;
  std::mutex mu_;
  std::mt19937_64 rng_;
};

}  // namespace regionfocus
