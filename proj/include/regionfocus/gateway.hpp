#pragma once

// Model access: request/profile types, the backend interface, and the
// deterministic mock / replay / recording backends. The live HTTP backend
// lives in http_backend.hpp so that offline users do not pull in a TLS stack.

#include <nlohmann/json.hpp>

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regionfocus/actions.hpp"
#include "regionfocus/canvas.hpp"
#include "regionfocus/hash.hpp"
#include "regionfocus/image.hpp"

namespace regionfocus {

// ---- errors ---------------------------------------------------------------

class GatewayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ContextLimitError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ReplayMiss : public GatewayError {
 public:
  explicit ReplayMiss(std::string digest, const std::string& detail = "no recorded response")
      : GatewayError("replay miss for request " + digest + ": " + detail), digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

// ---- profiles ---------------------------------------------------------------

/// How a model's emitted coordinates relate to the image it was shown.
enum class CoordinateSpace {
  Declared,  // fixed declared_resolution, rescaled to the shown image
  Image,     // already pixels of the shown image
};

struct BackendProfile {
  std::string name = "ui-tars";
  Dims declared_resolution{1440, 1440};
  Dialect dialect = Dialect::UiTarsV1;
  CoordinateSpace space = CoordinateSpace::Declared;
  int max_images = 4;
  // Live transport settings.
  std::string endpoint;
  std::string model;
  int timeout_seconds = 120;
  int max_retries = 3;
};

inline BackendProfile ui_tars_profile() {
  BackendProfile p;
  p.name = "ui-tars";
  p.declared_resolution = {1440, 1440};
  p.dialect = Dialect::UiTarsV1;
  return p;
}

inline BackendProfile qwen_profile() {
  BackendProfile p;
  p.name = "qwen2.5-vl";
  p.declared_resolution = {2240, 1260};
  p.dialect = Dialect::ComputerUseToolCall;
  return p;
}

inline std::vector<BackendProfile> builtin_profiles() { return {ui_tars_profile(), qwen_profile()}; }

// ---- requests ---------------------------------------------------------------

struct Part {
  std::string text;
  std::optional<Screenshot> image;

  static Part of_text(std::string t) { return {std::move(t), std::nullopt}; }
  static Part of_image(Screenshot s) { return {{}, std::move(s)}; }
};

struct Message {
  std::string role;
  std::vector<Part> parts;
};

/// How an attached image was derived; lets render-map reproduce it.
struct Annotation {
  std::uint64_t base_digest = 0;
  std::vector<Landmark> marks;
};

struct ChatRequest {
  std::string template_id;  // action, focal, judge, aggregate, region, trajectory_judge
  std::string tag;          // routing hint for scripted backends (e.g. "region:2"); not sent on the wire
  std::vector<Message> messages;
  BackendProfile profile;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<Annotation> annotation;

  std::vector<const Screenshot*> images() const {
    std::vector<const Screenshot*> out;
    for (const auto& m : messages)
      for (const auto& p : m.parts)
        if (p.image) out.push_back(&*p.image);
    return out;
  }

  std::vector<std::string> image_digests() const {
    std::vector<std::string> out;
    for (const auto* s : images()) out.push_back(s->digest_hex());
    return out;
  }

  std::string text() const {
    std::string out;
    for (const auto& m : messages)
      for (const auto& p : m.parts)
        if (!p.image) out += p.text;
    return out;
  }

  /// Replay key: template id, substituted text (with roles), image digests,
  /// profile name. Images are hashed rather than embedded.
  std::string digest() const {
    Fnv1a64 h;
    h.field(template_id);
    for (const auto& m : messages) {
      h.field(m.role);
      for (const auto& p : m.parts) {
        if (p.image) {
          h.field("image");
          h.update_u64(p.image->digest());
        } else {
          h.field(p.text);
        }
      }
    }
    h.field(profile.name);
    return to_hex(h.value());
  }
};

inline void validate_request(const ChatRequest& req) {
  if (req.messages.empty()) throw GatewayError("request has no messages");
  const auto n = req.images().size();
  if (static_cast<int>(n) > req.profile.max_images)
    throw ContextLimitError("request carries " + std::to_string(n) + " images; profile '" + req.profile.name +
                            "' allows " + std::to_string(req.profile.max_images));
}

// ---- backends ---------------------------------------------------------------

/// Single inference primitive. Implementations must tolerate concurrent calls.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
};

/// Scripted backend. Rules match on template id, optional tag and optional
/// substring; each rule's replies are consumed in order and the last one
/// repeats once exhausted. Independent (template, tag) streams keep the
/// output deterministic under concurrent fan-out.
class MockBackend : public ModelBackend {
 public:
  struct Rule {
    std::string template_id;     // empty matches any
    std::string tag;             // empty matches any
    std::string contains;        // empty matches any
    std::vector<std::string> replies;
    std::size_t next = 0;
  };

  MockBackend() = default;
  explicit MockBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {}
  MockBackend(MockBackend&& o) noexcept : rules_(std::move(o.rules_)), calls_(std::move(o.calls_)) {}

  MockBackend& on(std::string template_id, std::string tag, std::vector<std::string> replies) {
    std::lock_guard lock(mu_);
    rules_.push_back({std::move(template_id), std::move(tag), {}, std::move(replies)});
    return *this;
  }

  static MockBackend from_json(const nlohmann::json& script) {
    std::vector<Rule> rules;
    for (const auto& r : script.at("rules")) {
      Rule rule;
      rule.template_id = r.value("template", "");
      rule.tag = r.value("tag", "");
      rule.contains = r.value("contains", "");
      if (r.contains("reply")) rule.replies.push_back(r.at("reply").get<std::string>());
      if (r.contains("replies")) {
        for (const auto& s : r.at("replies")) rule.replies.push_back(s.get<std::string>());
      }
      if (rule.replies.empty()) throw GatewayError("mock rule without replies");
      rules.push_back(std::move(rule));
    }
    return MockBackend(std::move(rules));
  }

  static MockBackend load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw GatewayError("cannot open mock script " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw GatewayError("mock script " + path.string() + " is not valid JSON");
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError("mock script " + path.string() + ": " + e.what());
    }
  }

  std::string complete(const ChatRequest& req) override {
    validate_request(req);
    std::lock_guard lock(mu_);
    ++calls_[req.template_id];
    for (auto& r : rules_) {
      if (!r.template_id.empty() && r.template_id != req.template_id) continue;
      if (!r.tag.empty() && r.tag != req.tag) continue;
      if (!r.contains.empty() && req.text().find(r.contains) == std::string::npos) continue;
      const auto i = std::min(r.next, r.replies.size() - 1);
      ++r.next;
      return r.replies[i];
    }
    throw GatewayError("mock: no rule for template '" + req.template_id + "' tag '" + req.tag + "'");
  }

  int calls(const std::string& template_id) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(template_id);
    return it == calls_.end() ? 0 : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::map<std::string, int> calls_;
};

/// Ordered (request digest, response) pairs, stored as NDJSON.
struct TranscriptEntry {
  std::string digest;
  std::string template_id;
  std::string tag;
  std::string response;
};

inline nlohmann::json to_json(const TranscriptEntry& e) {
  return {{"kind", "exchange"}, {"digest", e.digest}, {"template", e.template_id}, {"tag", e.tag}, {"response", e.response}};
}

inline std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GatewayError("cannot open transcript " + path.string());
  std::vector<TranscriptEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw GatewayError(path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    if (j.value("kind", "") != "exchange") continue;
    try {
      out.push_back({j.at("digest").get<std::string>(), j.value("template", ""), j.value("tag", ""),
                     j.at("response").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Serves recorded responses by request digest. Repeated identical requests
/// consume their recorded responses in order; running out is a miss.
class ReplayBackend : public ModelBackend {
 public:
  explicit ReplayBackend(const std::vector<TranscriptEntry>& entries) {
    for (const auto& e : entries) queues_[e.digest].push_back(e.response);
  }
  static ReplayBackend load(const std::filesystem::path& path) { return ReplayBackend(load_transcript(path)); }

  std::string complete(const ChatRequest& req) override {
    validate_request(req);
    const auto d = req.digest();
    std::lock_guard lock(mu_);
    auto it = queues_.find(d);
    if (it == queues_.end()) throw ReplayMiss(d, "template '" + req.template_id + "' was never recorded");
    if (it->second.empty()) throw ReplayMiss(d, "recorded responses exhausted");
    auto r = std::move(it->second.front());
    it->second.pop_front();
    return r;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::deque<std::string>> queues_;
};

/// Forwards to an inner backend and appends every exchange to a transcript.
class RecordingBackend : public ModelBackend {
 public:
  RecordingBackend(ModelBackend& inner, std::filesystem::path path) : inner_(inner), path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::trunc);
    if (!out_) throw GatewayError("cannot write transcript " + path_.string());
    out_ << nlohmann::json{{"kind", "meta"}, {"format", "regionfocus-transcript"}, {"version", 1}}.dump() << '\n';
  }

  std::string complete(const ChatRequest& req) override {
    auto response = inner_.complete(req);
    TranscriptEntry e{req.digest(), req.template_id, req.tag, response};
    std::lock_guard lock(mu_);
    out_ << to_json(e).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out_.flush();
    entries_.push_back(std::move(e));
    return response;
  }

  std::vector<TranscriptEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

 private:
  ModelBackend& inner_;
  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
};

/// Counts calls per template id; used by tests and traces.
class CountingBackend : public ModelBackend {
 public:
  explicit CountingBackend(ModelBackend& inner) : inner_(inner) {}
  std::string complete(const ChatRequest& req) override {
    {
      std::lock_guard lock(mu_);
      ++counts_[req.template_id];
      requests_.push_back(req);
    }
    return inner_.complete(req);
  }
  int count(const std::string& t) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(t);
    return it == counts_.end() ? 0 : it->second;
  }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  ModelBackend& inner_;
  mutable std::mutex mu_;
  std::map<std::string, int> counts_;
  std::vector<ChatRequest> requests_;
};

}  // namespace regionfocus
