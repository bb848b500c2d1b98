#pragma once

// Declarative run configuration (JSON). Every key is optional; absent keys
// keep the built-in defaults. Command-line flags override the file, and the
// API key only ever comes from the environment.
//
//   {
//     "profile": "ui-tars",                 ui-tars | qwen2.5-vl
//     "endpoint": "http://host:8000/v1",    chat-completions base url
//     "model": "ui-tars-72b",
//     "declared_resolution": [1440, 1440],
//     "coordinate_space": "declared",       declared | image
//     "timeout_seconds": 120, "max_retries": 3,
//     "jobs": 1,
//     "loop":  {"max_steps": 100, "settle_delay_ms": 0, "judge_mode": "env", "regionfocus": true},
//     "focus": {"ratios": [[0.5, 0.5], [0.3, 0.3], [0.4, 0.8], [0.8, 0.4]],
//               "max_triggers_per_state": 3, "dedup_radius": 5, "focal_avoid_radius": 20,
//               "focal_retry_budget": 3, "repeat_window": 3, "diff_tolerance": 0.001,
//               "ambiguous_triggers": false, "parallel_regions": true}
//   }

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "regionfocus/agent_loop.hpp"

namespace regionfocus {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Settings {
  BackendProfile profile = ui_tars_profile();
  LoopConfig loop;
  int jobs = 1;
};

inline BackendProfile profile_by_name(const std::string& name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  throw ConfigError("unknown profile '" + name + "' (known: ui-tars, qwen2.5-vl)");
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

}  // namespace detail

/// Overlays `j` onto `s`. A "profile" key resets the profile first so the
/// remaining keys refine it.
inline void apply_config(Settings& s, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j,
                         {"profile", "endpoint", "model", "declared_resolution", "coordinate_space", "timeout_seconds",
                          "max_retries", "jobs", "loop", "focus"},
                         "config");
  try {
    if (j.contains("profile")) s.profile = profile_by_name(j["profile"].get<std::string>());
    if (j.contains("endpoint")) s.profile.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("model")) s.profile.model = j["model"].get<std::string>();
    if (j.contains("declared_resolution"))
      s.profile.declared_resolution = {j["declared_resolution"].at(0).get<int>(), j["declared_resolution"].at(1).get<int>()};
    if (j.contains("coordinate_space")) {
      const auto v = j["coordinate_space"].get<std::string>();
      if (v != "declared" && v != "image") throw ConfigError("coordinate_space must be declared or image");
      s.profile.space = v == "image" ? CoordinateSpace::Image : CoordinateSpace::Declared;
    }
    if (j.contains("timeout_seconds")) s.profile.timeout_seconds = j["timeout_seconds"].get<int>();
    if (j.contains("max_retries")) s.profile.max_retries = j["max_retries"].get<int>();
    if (j.contains("jobs")) s.jobs = j["jobs"].get<int>();
    if (j.contains("loop")) {
      const auto& l = j["loop"];
      detail::reject_unknown(l, {"max_steps", "settle_delay_ms", "judge_mode", "regionfocus"}, "config.loop");
      if (l.contains("max_steps")) s.loop.max_steps = l["max_steps"].get<int>();
      if (l.contains("settle_delay_ms")) s.loop.settle_delay = std::chrono::milliseconds(l["settle_delay_ms"].get<int>());
      if (l.contains("judge_mode")) s.loop.judge_mode = judge_mode_from_string(l["judge_mode"].get<std::string>());
      if (l.contains("regionfocus")) s.loop.regionfocus = l["regionfocus"].get<bool>();
    }
    if (j.contains("focus")) {
      const auto& f = j["focus"];
      auto& c = s.loop.focus;
      detail::reject_unknown(f,
                             {"ratios", "max_triggers_per_state", "dedup_radius", "focal_avoid_radius",
                              "focal_retry_budget", "repeat_window", "diff_tolerance", "ambiguous_triggers",
                              "parallel_regions"},
                             "config.focus");
      if (f.contains("ratios")) {
        c.ratios.clear();
        for (const auto& r : f["ratios"]) c.ratios.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
      }
      if (f.contains("max_triggers_per_state")) c.max_triggers_per_state = f["max_triggers_per_state"].get<int>();
      if (f.contains("dedup_radius")) c.dedup_radius = f["dedup_radius"].get<int>();
      if (f.contains("focal_avoid_radius")) c.focal_avoid_radius = f["focal_avoid_radius"].get<int>();
      if (f.contains("focal_retry_budget")) c.focal_retry_budget = f["focal_retry_budget"].get<int>();
      if (f.contains("repeat_window")) c.repeat_window = f["repeat_window"].get<int>();
      if (f.contains("diff_tolerance")) c.diff_tolerance = f["diff_tolerance"].get<double>();
      if (f.contains("ambiguous_triggers")) c.ambiguous_triggers = f["ambiguous_triggers"].get<bool>();
      if (f.contains("parallel_regions")) c.parallel_regions = f["parallel_regions"].get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline Settings load_config(const std::filesystem::path& path, Settings base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  apply_config(base, j);
  return base;
}

/// Parses "0.5x0.5" into a ratio.
inline Ratio parse_ratio(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ConfigError("ratio '" + s + "' must look like 0.5x0.5");
  try {
    std::size_t a = 0, b = 0;
    const Ratio r{std::stod(s.substr(0, x), &a), std::stod(s.substr(x + 1), &b)};
    if (a != x || b != s.size() - x - 1 || !r.valid()) throw ConfigError("");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("ratio '" + s + "' must be two fractions in (0, 1] joined by x");
  }
}

}  // namespace regionfocus
