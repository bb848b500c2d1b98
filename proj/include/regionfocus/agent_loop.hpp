#pragma once

// The standard observe -> prompt -> parse -> execute loop with refinement
// spliced in on trigger, plus the single-shot grounding flow used on static
// screenshots.

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regionfocus/environment.hpp"
#include "regionfocus/png_io.hpp"
#include "regionfocus/regionfocus.hpp"

namespace regionfocus {

enum class JudgeMode { EnvFeedback, SelfJudge, Both };

inline const char* to_string(JudgeMode m) {
  switch (m) {
    case JudgeMode::EnvFeedback: return "env";
    case JudgeMode::SelfJudge: return "self";
    case JudgeMode::Both: return "both";
  }
  return "env";
}

inline JudgeMode judge_mode_from_string(const std::string& s) {
  if (s == "env") return JudgeMode::EnvFeedback;
  if (s == "self") return JudgeMode::SelfJudge;
  if (s == "both") return JudgeMode::Both;
  throw DomainError("judge mode must be env, self or both (got '" + s + "')");
}

struct LoopConfig {
  int max_steps = 100;
  std::chrono::milliseconds settle_delay{0};
  FocusConfig focus;
  JudgeMode judge_mode = JudgeMode::EnvFeedback;
  bool regionfocus = true;

  void validate() const {
    if (max_steps < 1) throw DomainError("LoopConfig: max_steps must be at least 1");
    focus.validate();
  }
};

enum class FinalStatus { Finished, CallUser, StepLimit, Fault };

inline const char* to_string(FinalStatus s) {
  switch (s) {
    case FinalStatus::Finished: return "finished";
    case FinalStatus::CallUser: return "call_user";
    case FinalStatus::StepLimit: return "step_limit";
    case FinalStatus::Fault: return "fault";
  }
  return "fault";
}

struct StepRecord {
  int index = 0;
  std::string observation;  // digest of the screenshot the native prompt saw
  std::vector<InferenceRecord> inferences;  // native and self-judge calls
  std::optional<ModelTurn> turn;
  std::optional<Action> action;   // native action as executed, pixel coordinates
  TriggerDecision trigger;
  std::optional<FocusTrace> focus;
  std::string focus_error;
  std::optional<Action> refined;  // executed in the same step slot
  std::string outcome;            // digest after the step's last action
  std::vector<Landmark> history;  // stars after the step
  std::string info;
};

struct TrajectoryRecord {
  std::string task_id;
  std::string objective;
  std::string url;
  std::vector<StepRecord> steps;
  FinalStatus final_status = FinalStatus::StepLimit;
  std::optional<bool> goal_reached;
  std::string response;  // thought accompanying the final action
  std::vector<std::string> observations;  // screenshot digests in visit order
  std::map<std::string, Screenshot> screenshots;

  int focus_rounds() const {
    int n = 0;
    for (const auto& s : steps) n += s.focus.has_value() || !s.focus_error.empty();
    return n;
  }
};

namespace detail {

inline void remember(TrajectoryRecord& rec, const Screenshot& s) {
  const auto hex = s.digest_hex();
  rec.screenshots.try_emplace(hex, s);
  rec.observations.push_back(hex);
}

inline std::optional<FinalStatus> terminal_status(ActionKind k) {
  switch (k) {
    case ActionKind::Finished: return FinalStatus::Finished;
    case ActionKind::CallUser: return FinalStatus::CallUser;
    case ActionKind::Terminate: return FinalStatus::Finished;
    default: return std::nullopt;
  }
}

/// Stars the predicted point and asks the model to grade it.
inline JudgeVerdict self_judge(const FocusContext& ctx, const Screenshot& image, Point p,
                               std::vector<InferenceRecord>& log) {
  const auto starred = annotate(image, {{p, 1, LandmarkKind::Judge}}, ctx.cfg.style);
  InferenceRecord rec;
  const auto v = parse_judge_reply(infer(*ctx.backend, render_judge_prompt(ctx.objective, starred, ctx.profile), rec));
  rec.parsed = to_string(v);
  log.push_back(std::move(rec));
  return v;
}

}  // namespace detail

/// Drives `env` until the model finishes, the step budget runs out, or the
/// environment faults. Only environment-interactive steps count toward the
/// budget; refinement inferences do not.
inline TrajectoryRecord run_trajectory(Environment& env, const std::string& objective, const std::string& url,
                                       const LoopConfig& cfg, ModelBackend& backend, const BackendProfile& profile,
                                       RegionProposer* proposer = nullptr) {
  cfg.validate();
  TrajectoryRecord rec;
  rec.objective = objective;
  rec.url = url;

  Screenshot obs = env.observe();
  detail::remember(rec, obs);
  FocusHistory history{{}, obs.digest()};
  std::map<std::uint64_t, int> spent;  // refinements per page digest
  std::vector<Action> recent;
  bool done = false;

  for (int i = 0; i < cfg.max_steps && !done; ++i) {
    StepRecord step;
    step.index = i;
    step.observation = obs.digest_hex();
    // Prompts carry the page's current address when the environment knows it.
    const auto here = env.url().empty() ? url : env.url();
    const FocusContext ctx{objective, here, &backend, profile, cfg.focus};

    InferenceRecord native;
    Action action;
    try {
      const auto reply = infer(backend, render_action_prompt(objective, here, obs, profile), native);
      step.turn = parse(reply, profile.dialect);
      action = rescale_action(step.turn->action, profile, obs.dims());
      validate(action);
      native.parsed = describe(action);
      step.inferences.push_back(std::move(native));
    } catch (const ParseError& e) {
      native.error = e.what();
      step.inferences.push_back(std::move(native));
      step.info = "unusable model reply; step spent without acting";
      step.outcome = step.observation;
      step.history = history.stars;
      rec.steps.push_back(std::move(step));
      continue;
    } catch (const DomainError& e) {
      native.error = e.what();
      step.inferences.push_back(std::move(native));
      step.info = "unusable model reply; step spent without acting";
      step.outcome = step.observation;
      step.history = history.stars;
      rec.steps.push_back(std::move(step));
      continue;
    }
    step.action = action;

    StepOutcome out = env.apply(action);
    Action executed = action;
    recent.push_back(action);

    if (!out.fault && !out.terminated) {
      std::optional<JudgeVerdict> verdict;
      const bool self = cfg.regionfocus && is_coordinate_action(action) && cfg.judge_mode == JudgeMode::SelfJudge;
      if (self) verdict = detail::self_judge(ctx, obs, *action.start, step.inferences);
      const bool feedback = cfg.judge_mode != JudgeMode::SelfJudge;
      step.trigger = evaluate_trigger(feedback ? &obs : nullptr, feedback ? &out.screenshot : nullptr, recent, verdict,
                                      cfg.focus, spent[obs.digest()]);

      if (step.trigger.fired && cfg.regionfocus) {
        ++spent[obs.digest()];
        if (history.page_digest != obs.digest()) history = FocusHistory{{}, obs.digest()};
        try {
          auto result = run_focus(ctx, obs, history, proposer);
          history = std::move(result.updated_history);
          step.focus = std::move(result.trace);
          step.refined = result.action;
          executed = result.action;
          recent.back() = executed;
          out = env.apply(executed);
        } catch (const FocusError& e) {
          step.focus = e.trace();
          step.focus_error = e.what();
          history = e.history();
        } catch (const GatewayError& e) {
          step.focus_error = e.what();
        }
      }
    }

    step.info = out.info;
    if (out.fault) {
      rec.final_status = FinalStatus::Fault;
      done = true;
    } else if (out.terminated) {
      rec.final_status = detail::terminal_status(executed.kind).value_or(FinalStatus::Finished);
      if (step.turn) rec.response = step.turn->thought.value_or("");
      done = true;
    }
    const auto effect = diff(obs, out.screenshot, cfg.focus.diff_tolerance);
    history = refresh_history(history, effect, out.screenshot.digest());
    step.history = history.stars;
    step.outcome = out.screenshot.digest_hex();
    rec.steps.push_back(std::move(step));
    obs = out.screenshot;
    detail::remember(rec, obs);
  }
  rec.goal_reached = env.goal_reached();
  return rec;
}

// ---- grounding ---------------------------------------------------------------------

struct GroundingResult {
  std::optional<Point> initial;
  std::optional<Point> point;
  std::optional<JudgeVerdict> verdict;
  TriggerDecision trigger;
  std::vector<InferenceRecord> inferences;
  std::optional<FocusTrace> focus;
  std::string error;
  bool gateway_failure = false;  // the model could not be reached, as opposed to answering badly
};

/// Single-step grounding on a static screenshot: predict, self-judge the
/// starred prediction, and refine once if the judge rejects it.
inline GroundingResult run_grounding(const Screenshot& image, const std::string& instruction, const LoopConfig& cfg,
                                     ModelBackend& backend, const BackendProfile& profile,
                                     RegionProposer* proposer = nullptr) {
  cfg.validate();
  const FocusContext ctx{instruction, "", &backend, profile, cfg.focus};
  GroundingResult g;
  InferenceRecord native;
  try {
    const auto reply = infer(backend, render_action_prompt(instruction, "", image, profile), native);
    const auto action = rescale_action(parse(reply, profile.dialect).action, profile, image.dims());
    if (!action.start) throw ParseError(0, std::string("expected a point-bearing action, got ") + to_string(action.kind));
    native.parsed = action.start->str();
    g.initial = action.start;
    g.point = action.start;
    g.inferences.push_back(std::move(native));
  } catch (const GatewayError& e) {
    g.error = e.what();
    g.gateway_failure = true;
    return g;
  } catch (const std::exception& e) {
    native.error = e.what();
    g.inferences.push_back(std::move(native));
    g.error = e.what();
    return g;
  }
  if (!cfg.regionfocus) return g;

  try {
    g.verdict = detail::self_judge(ctx, image, *g.initial, g.inferences);
    g.trigger = evaluate_trigger(nullptr, nullptr, {}, g.verdict, cfg.focus, 0);
    if (!g.trigger.fired) return g;
    auto result = run_focus(ctx, image, FocusHistory{{}, image.digest()}, proposer);
    g.focus = std::move(result.trace);
    if (result.action.start) g.point = result.action.start;
  } catch (const FocusError& e) {
    g.focus = e.trace();
    g.error = e.what();
  } catch (const GatewayError& e) {
    g.error = e.what();
    g.gateway_failure = true;
  }
  return g;
}

// ---- serialization -------------------------------------------------------------------

inline nlohmann::json to_json(const TriggerDecision& d) {
  return {{"fired", d.fired}, {"cause", to_string(d.cause)}, {"evidence", d.evidence}};
}

inline TriggerCause trigger_cause_from_string(const std::string& s) {
  for (auto c : {TriggerCause::None, TriggerCause::NoEffect, TriggerCause::RepeatedAction, TriggerCause::JudgeIncorrect})
    if (s == to_string(c)) return c;
  throw DomainError("unknown trigger cause '" + s + "'");
}

inline nlohmann::json landmarks_json(const std::vector<Landmark>& marks) {
  auto j = nlohmann::json::array();
  for (const auto& m : marks) j.push_back(to_json(m));
  return j;
}

inline nlohmann::json action_json(const Action& a) {
  nlohmann::json j{{"kind", to_string(a.kind)}, {"describe", describe(a)}};
  if (a.start) j["start"] = {a.start->x, a.start->y};
  if (a.end) j["end"] = {a.end->x, a.end->y};
  if (a.text) j["text"] = *a.text;
  if (a.direction) j["direction"] = to_string(*a.direction);
  if (a.amount) j["amount"] = *a.amount;
  if (a.status) j["status"] = to_string(*a.status);
  return j;
}

inline Action action_from_json(const nlohmann::json& j) {
  Action a;
  const auto kind = action_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw DomainError("unknown action kind in trace");
  a.kind = *kind;
  const auto pt = [](const nlohmann::json& v) { return Point{v.at(0).get<int>(), v.at(1).get<int>()}; };
  if (j.contains("start")) a.start = pt(j["start"]);
  if (j.contains("end")) a.end = pt(j["end"]);
  if (j.contains("text")) a.text = j["text"].get<std::string>();
  if (j.contains("direction")) {
    const auto d = detail::parse_direction(j["direction"].get<std::string>());
    if (!d) throw DomainError("unknown scroll direction in trace");
    a.direction = d;
  }
  if (j.contains("amount")) a.amount = j["amount"].get<int>();
  if (j.contains("status")) a.status = j["status"] == "success" ? TerminateStatus::Success : TerminateStatus::Failure;
  return a;
}

/// Newline-delimited trace. Per step: every inference record in call order,
/// then one step record.
inline std::string trace_ndjson(const TrajectoryRecord& rec) {
  std::string out;
  const auto line = [&](const nlohmann::json& j) {
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  };
  for (const auto& s : rec.steps) {
    auto emit = [&](const InferenceRecord& r, const char* phase) {
      auto j = to_json(r);
      j["kind"] = "inference";
      j["step"] = s.index;
      j["phase"] = phase;
      line(j);
    };
    for (const auto& r : s.inferences) emit(r, "native");
    if (s.focus)
      for (const auto& r : s.focus->inferences) emit(r, "focus");
    nlohmann::json j{{"kind", "step"},
                     {"step", s.index},
                     {"observation", s.observation},
                     {"action", s.action ? action_json(*s.action) : nlohmann::json(nullptr)},
                     {"thought", s.turn && s.turn->thought ? nlohmann::json(*s.turn->thought) : nlohmann::json(nullptr)},
                     {"trigger", to_json(s.trigger)},
                     {"focus", s.focus ? to_json(*s.focus) : nlohmann::json(nullptr)},
                     {"refined", s.refined ? action_json(*s.refined) : nlohmann::json(nullptr)},
                     {"outcome", s.outcome},
                     {"history", landmarks_json(s.history)},
                     {"info", s.info}};
    if (!s.focus_error.empty()) j["focus_error"] = s.focus_error;
    line(j);
  }
  return out;
}

inline nlohmann::json summary_json(const TrajectoryRecord& rec) {
  nlohmann::json j{{"task_id", rec.task_id},
                   {"objective", rec.objective},
                   {"url", rec.url},
                   {"final_status", to_string(rec.final_status)},
                   {"steps", rec.steps.size()},
                   {"focus_rounds", rec.focus_rounds()},
                   {"response", rec.response},
                   {"observations", rec.observations}};
  j["goal_reached"] = rec.goal_reached ? nlohmann::json(*rec.goal_reached) : nlohmann::json(nullptr);
  return j;
}

/// Writes screenshots/<digest>.png, trace.ndjson and summary.json.
inline void write_trajectory(const TrajectoryRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "screenshots");
  for (const auto& [hex, img] : rec.screenshots) save_png(img, dir / "screenshots" / (hex + ".png"));
  std::ofstream(dir / "trace.ndjson", std::ios::binary) << trace_ndjson(rec);
  std::ofstream(dir / "summary.json", std::ios::binary) << summary_json(rec).dump(2) << "\n";
}

inline FinalStatus final_status_from_string(const std::string& s) {
  for (auto f : {FinalStatus::Finished, FinalStatus::CallUser, FinalStatus::StepLimit, FinalStatus::Fault})
    if (s == to_string(f)) return f;
  throw DomainError("unknown final status '" + s + "'");
}

/// Reads back a directory written by write_trajectory. Step records keep
/// their actions, trigger decisions and digests; inference details stay in
/// the trace file.
inline TrajectoryRecord load_trajectory(const std::filesystem::path& dir) {
  std::ifstream sin(dir / "summary.json");
  if (!sin) throw EnvironmentError("no summary.json in " + dir.string());
  const auto sj = nlohmann::json::parse(sin, nullptr, false);
  if (sj.is_discarded()) throw EnvironmentError((dir / "summary.json").string() + " is not valid JSON");
  TrajectoryRecord rec;
  try {
    rec.task_id = sj.value("task_id", "");
    rec.objective = sj.at("objective").get<std::string>();
    rec.url = sj.value("url", "");
    rec.response = sj.value("response", "");
    rec.final_status = final_status_from_string(sj.at("final_status").get<std::string>());
    if (sj.contains("goal_reached") && !sj["goal_reached"].is_null()) rec.goal_reached = sj["goal_reached"].get<bool>();
    for (const auto& h : sj.at("observations")) {
      const auto hex = h.get<std::string>();
      rec.observations.push_back(hex);
      if (!rec.screenshots.count(hex)) rec.screenshots.emplace(hex, load_png(dir / "screenshots" / (hex + ".png")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentError((dir / "summary.json").string() + ": " + e.what());
  }

  std::ifstream tin(dir / "trace.ndjson");
  if (!tin) throw EnvironmentError("no trace.ndjson in " + dir.string());
  std::string line;
  for (std::size_t n = 1; std::getline(tin, line); ++n) {
    if (detail::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw EnvironmentError("trace.ndjson:" + std::to_string(n) + ": not JSON");
    if (j.value("kind", "") != "step") continue;
    try {
      StepRecord s;
      s.index = j.at("step").get<int>();
      s.observation = j.at("observation").get<std::string>();
      if (!j.at("action").is_null()) s.action = action_from_json(j["action"]);
      if (!j.at("refined").is_null()) s.refined = action_from_json(j["refined"]);
      const auto& t = j.at("trigger");
      s.trigger = {t.at("fired").get<bool>(), trigger_cause_from_string(t.at("cause").get<std::string>()),
                   t.value("evidence", "")};
      s.outcome = j.at("outcome").get<std::string>();
      for (const auto& m : j.at("history")) s.history.push_back(landmark_from_json(m));
      s.info = j.value("info", "");
      s.focus_error = j.value("focus_error", "");
      rec.steps.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw EnvironmentError("trace.ndjson:" + std::to_string(n) + ": " + e.what());
    }
  }
  return rec;
}

}  // namespace regionfocus
