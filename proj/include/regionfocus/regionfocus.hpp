#pragma once

// The test-time refinement orchestrator: trigger evaluation, focal-point
// proposal over the history map, per-region candidate prediction on zoomed
// crops, landmark-based aggregation, and history maintenance.

#include <nlohmann/json.hpp>

#include <future>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regionfocus/actions.hpp"
#include "regionfocus/canvas.hpp"
#include "regionfocus/gateway.hpp"
#include "regionfocus/geometry.hpp"
#include "regionfocus/prompts.hpp"

namespace regionfocus {

struct FocusConfig {
  std::vector<Ratio> ratios = default_ratios();
  int max_triggers_per_state = 3;
  int dedup_radius = 5;
  int focal_avoid_radius = 20;
  int focal_retry_budget = 3;
  int repeat_window = 3;
  double diff_tolerance = kDefaultDiffTolerance;
  bool ambiguous_triggers = false;  // treat an Ambiguous self-judge verdict as Incorrect
  bool parallel_regions = true;
  StyleConfig style;

  void validate() const {
    if (ratios.empty()) throw DomainError("FocusConfig: ratios must be non-empty");
    for (const auto& r : ratios)
      if (!r.valid()) throw DomainError("FocusConfig: ratio sides must lie in (0, 1]");
    if (max_triggers_per_state <= 0 || dedup_radius <= 0 || focal_avoid_radius <= 0 || focal_retry_budget <= 0 ||
        repeat_window <= 0)
      throw DomainError("FocusConfig: counts and radii must be positive");
  }
};

// ---- trigger ----------------------------------------------------------------

enum class TriggerCause { None, NoEffect, RepeatedAction, JudgeIncorrect };

inline const char* to_string(TriggerCause c) {
  switch (c) {
    case TriggerCause::None: return "none";
    case TriggerCause::NoEffect: return "no_effect";
    case TriggerCause::RepeatedAction: return "repeated_action";
    case TriggerCause::JudgeIncorrect: return "judge_incorrect";
  }
  return "none";
}

struct TriggerDecision {
  bool fired = false;
  TriggerCause cause = TriggerCause::None;
  std::string evidence;
};

/// `recent_actions` ends with the action just executed. `prev`/`cur` are the
/// observations around it, absent in static settings. `triggers_so_far`
/// counts refinements already spent on the current page state.
inline TriggerDecision evaluate_trigger(const Screenshot* prev, const Screenshot* cur,
                                        const std::vector<Action>& recent_actions,
                                        std::optional<JudgeVerdict> judge, const FocusConfig& cfg,
                                        int triggers_so_far = 0) {
  TriggerDecision d;
  if (prev && cur && !recent_actions.empty() && is_coordinate_action(recent_actions.back())) {
    const auto r = diff(*prev, *cur, cfg.diff_tolerance);
    if (r.identical) {
      d = {true, TriggerCause::NoEffect,
           describe(recent_actions.back()) + " changed " + std::to_string(r.changed_fraction) + " of pixels"};
    }
  }
  if (!d.fired && static_cast<int>(recent_actions.size()) >= cfg.repeat_window) {
    const auto last = describe(recent_actions.back());
    bool same = true;
    for (std::size_t i = recent_actions.size() - static_cast<std::size_t>(cfg.repeat_window); i < recent_actions.size(); ++i)
      same = same && describe(recent_actions[i]) == last;
    if (same) d = {true, TriggerCause::RepeatedAction, last + " repeated " + std::to_string(cfg.repeat_window) + " times"};
  }
  if (!d.fired && judge &&
      (*judge == JudgeVerdict::Incorrect || (*judge == JudgeVerdict::Ambiguous && cfg.ambiguous_triggers))) {
    d = {true, TriggerCause::JudgeIncorrect, std::string("self-judge verdict ") + to_string(*judge)};
  }
  if (d.fired && triggers_so_far >= cfg.max_triggers_per_state) {
    return {false, TriggerCause::None,
            std::string("suppressed ") + to_string(d.cause) + ": " + std::to_string(triggers_so_far) +
                " refinements already spent on this page state"};
  }
  return d;
}

// ---- history ------------------------------------------------------------------

struct FocusHistory {
  std::vector<Landmark> stars;
  std::uint64_t page_digest = 0;

  void add(Point p) { stars.push_back({p, static_cast<int>(stars.size()) + 1, LandmarkKind::History}); }
  bool empty() const { return stars.empty(); }
};

/// Clears all landmarks once an action has taken effect.
inline FocusHistory refresh_history(const FocusHistory& history, const DiffReport& effect,
                                    std::uint64_t new_page_digest) {
  if (effect.identical) return history;
  return FocusHistory{{}, new_page_digest};
}

// ---- trace --------------------------------------------------------------------

struct InferenceRecord {
  std::string template_id;
  std::string tag;
  std::string request_digest;
  std::vector<std::string> image_digests;
  std::optional<Annotation> annotation;
  std::string raw_reply;
  std::string parsed;
  std::string error;
};

inline nlohmann::json to_json(const Landmark& m) {
  return {{"at", {m.at.x, m.at.y}}, {"label", m.label}, {"kind", to_string(m.kind)}};
}

inline Landmark landmark_from_json(const nlohmann::json& j) {
  return {{j.at("at").at(0).get<int>(), j.at("at").at(1).get<int>()},
          j.at("label").get<int>(),
          landmark_kind_from_string(j.at("kind").get<std::string>())};
}

inline nlohmann::json to_json(const RegionBox& b) { return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

inline nlohmann::json to_json(const InferenceRecord& r) {
  nlohmann::json j{{"template", r.template_id},      {"tag", r.tag},   {"request", r.request_digest},
                   {"images", r.image_digests},      {"reply", r.raw_reply}, {"parsed", r.parsed}};
  if (!r.error.empty()) j["error"] = r.error;
  if (r.annotation) {
    nlohmann::json marks = nlohmann::json::array();
    for (const auto& m : r.annotation->marks) marks.push_back(to_json(m));
    j["annotation"] = {{"base", to_hex(r.annotation->base_digest)}, {"marks", marks}};
  }
  return j;
}

struct Candidate {
  Action action;  // full-frame coordinates
  RegionBox source_region;
  std::optional<int> landmark_label;
  std::size_t ratio_index = 0;
};

using CandidateSet = std::vector<Candidate>;

struct FocusTrace {
  std::vector<InferenceRecord> inferences;
  std::optional<Point> focal;
  std::vector<RegionBox> regions;
  CandidateSet candidates;
  std::optional<int> chosen;  // 1-based option number; absent on short-circuit
  bool fallback = false;

  int count(const std::string& template_id) const {
    int n = 0;
    for (const auto& r : inferences) n += r.template_id == template_id;
    return n;
  }
  // A direct region proposal stands in for the focal inference.
  int focal_inferences() const { return count("focal") + count("region"); }
  int region_inferences() const { return count("action"); }
  int aggregation_inferences() const { return count("aggregate"); }
};

inline nlohmann::json to_json(const FocusTrace& t) {
  nlohmann::json j;
  j["focal"] = t.focal ? nlohmann::json::array({t.focal->x, t.focal->y}) : nlohmann::json(nullptr);
  j["regions"] = nlohmann::json::array();
  for (const auto& b : t.regions) j["regions"].push_back(to_json(b));
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : t.candidates) {
    nlohmann::json cj{{"action", describe(c.action)}, {"region", to_json(c.source_region)}, {"ratio_index", c.ratio_index}};
    cj["label"] = c.landmark_label ? nlohmann::json(*c.landmark_label) : nlohmann::json(nullptr);
    j["candidates"].push_back(cj);
  }
  j["chosen"] = t.chosen ? nlohmann::json(*t.chosen) : nlohmann::json(nullptr);
  j["fallback"] = t.fallback;
  j["counts"] = {{"focal", t.focal_inferences()}, {"region", t.region_inferences()}, {"aggregate", t.aggregation_inferences()}};
  return j;
}

/// Runs one inference and appends its record to `trace`.
inline std::string infer(ModelBackend& backend, const ChatRequest& req, InferenceRecord& rec) {
  rec.template_id = req.template_id;
  rec.tag = req.tag;
  rec.request_digest = req.digest();
  rec.image_digests = req.image_digests();
  rec.annotation = req.annotation;
  rec.raw_reply = backend.complete(req);
  return rec.raw_reply;
}

// ---- errors -------------------------------------------------------------------

/// A refinement round that produced no action. Carries what was observed so
/// the caller can log it and fall back to the unrefined action.
class FocusError : public std::runtime_error {
 public:
  FocusError(const std::string& what, FocusTrace trace, FocusHistory history)
      : std::runtime_error(what), trace_(std::move(trace)), history_(std::move(history)) {}
  const FocusTrace& trace() const { return trace_; }
  const FocusHistory& history() const { return history_; }

 private:
  FocusTrace trace_;
  FocusHistory history_;
};

class FocalExhausted : public FocusError {
 public:
  using FocusError::FocusError;
};

class EmptyCandidates : public FocusError {
 public:
  using FocusError::FocusError;
};

// ---- context --------------------------------------------------------------------

struct FocusContext {
  std::string objective;
  std::string url;
  ModelBackend* backend = nullptr;
  BackendProfile profile;
  FocusConfig cfg;
};

// ---- focal proposal ----------------------------------------------------------------

/// Asks for a focal point on the history-annotated map. Replies landing within
/// focal_avoid_radius of an existing star are rejected and re-prompted.
inline Point propose_focal(const FocusContext& ctx, const Screenshot& base, const FocusHistory& history,
                           FocusTrace& trace) {
  const auto map = annotate(base, history.stars, ctx.cfg.style);
  std::optional<Point> rejected;
  for (int attempt = 0; attempt < ctx.cfg.focal_retry_budget; ++attempt) {
    const auto req = render_focal_prompt(ctx.objective, ctx.url, map, ctx.profile, rejected);
    InferenceRecord rec;
    try {
      const auto reply = infer(*ctx.backend, req, rec);
      const Point p = clamp_to_image(rescale_model_point(parse_focal_reply(reply), ctx.profile, base.dims()), base.dims());
      rec.parsed = p.str();
      bool near_star = false;
      for (const auto& s : history.stars) near_star = near_star || distance(s.at, p) <= ctx.cfg.focal_avoid_radius;
      if (!near_star) {
        trace.inferences.push_back(std::move(rec));
        return p;
      }
      rec.error = "within " + std::to_string(ctx.cfg.focal_avoid_radius) + " px of a history star";
      trace.inferences.push_back(std::move(rec));
      rejected = p;
    } catch (const ParseError& e) {
      rec.error = e.what();
      trace.inferences.push_back(std::move(rec));
      throw;
    } catch (const DomainError& e) {
      rec.error = e.what();
      trace.inferences.push_back(std::move(rec));
      throw ParseError(0, e.what());
    }
  }
  throw FocalExhausted("focal proposal kept landing on history stars after " +
                           std::to_string(ctx.cfg.focal_retry_budget) + " attempts",
                       trace, history);
}

// ---- region proposers ---------------------------------------------------------------

/// Source of sub-regions for candidate prediction.
class RegionProposer {
 public:
  virtual ~RegionProposer() = default;
  /// Whether a focal point must be proposed first.
  virtual bool needs_focal() const { return true; }
  virtual std::vector<RegionBox> propose(const FocusContext& ctx, const Screenshot& base, std::optional<Point> focal,
                                         FocusTrace& trace) = 0;
};

/// Fixed-ratio boxes centered on the focal point.
class FixedRatioProposer : public RegionProposer {
 public:
  std::vector<RegionBox> propose(const FocusContext& ctx, const Screenshot& base, std::optional<Point> focal,
                                 FocusTrace&) override {
    if (!focal) throw DomainError("FixedRatioProposer needs a focal point");
    return propose_regions(*focal, base.dims(), ctx.cfg.ratios);
  }
};

/// Ablation: the model names the region's corners directly, no focal step.
class DirectRegionProposer : public RegionProposer {
 public:
  bool needs_focal() const override { return false; }
  std::vector<RegionBox> propose(const FocusContext& ctx, const Screenshot& base, std::optional<Point>,
                                 FocusTrace& trace) override {
    InferenceRecord rec;
    const auto reply = infer(*ctx.backend, render_region_prompt(ctx.objective, ctx.url, base, ctx.profile), rec);
    try {
      auto [a, b] = parse_corner_reply(reply);
      a = clamp_to_image(rescale_model_point(a, ctx.profile, base.dims()), base.dims());
      b = clamp_to_image(rescale_model_point(b, ctx.profile, base.dims()), base.dims());
      RegionBox box{std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x) + 1, std::max(a.y, b.y) + 1, std::nullopt};
      box = clamp_box(box, base.dims());
      rec.parsed = box.str();
      trace.inferences.push_back(std::move(rec));
      return {box};
    } catch (const std::exception& e) {
      rec.error = e.what();
      trace.inferences.push_back(std::move(rec));
      throw;
    }
  }
};

/// Extension point: a point-prompted segmentation model returning the
/// bounding box of the element under the point.
class PointSegmenter {
 public:
  virtual ~PointSegmenter() = default;
  virtual std::optional<RegionBox> segment(const Screenshot& image, Point prompt) = 0;
};

/// Uses the segmenter's box when it yields one, else the fixed ratios.
class SegmentationProposer : public RegionProposer {
 public:
  explicit SegmentationProposer(std::shared_ptr<PointSegmenter> segmenter) : segmenter_(std::move(segmenter)) {}
  std::vector<RegionBox> propose(const FocusContext& ctx, const Screenshot& base, std::optional<Point> focal,
                                 FocusTrace& trace) override {
    if (!focal) throw DomainError("SegmentationProposer needs a focal point");
    if (auto box = segmenter_->segment(base, *focal)) {
      if (box->width() > 0 && box->height() > 0) return {clamp_box(*box, base.dims())};
    }
    return FixedRatioProposer().propose(ctx, base, focal, trace);
  }

 private:
  std::shared_ptr<PointSegmenter> segmenter_;
};

// ---- candidates ----------------------------------------------------------------------

namespace detail {

struct RegionResult {
  InferenceRecord rec;
  std::optional<Action> action;
};

inline RegionResult predict_in_region(const FocusContext& ctx, const Screenshot& base, const RegionBox& box,
                                      std::size_t index) {
  RegionResult out;
  const auto spec = zoom_spec(box, base.dims());
  const auto zoomed = resize(crop(base, box), spec.output);
  const auto req = render_action_prompt(ctx.objective, ctx.url, zoomed, ctx.profile, "region:" + std::to_string(index));
  const auto reply = infer(*ctx.backend, req, out.rec);
  try {
    const auto turn = parse(reply, ctx.profile.dialect);
    validate(turn.action);
    const auto action = rebase(rescale_action(turn.action, ctx.profile, spec.output), spec);
    out.rec.parsed = describe(action);
    out.action = action;
  } catch (const ParseError& e) {
    out.rec.error = e.what();
  } catch (const DomainError& e) {
    out.rec.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Candidate per box in order, deduplicated and labeled. Unparsable replies
/// are dropped and kept only in the trace.
inline CandidateSet predict_candidates(const FocusContext& ctx, const Screenshot& base,
                                       const std::vector<RegionBox>& boxes, FocusTrace& trace) {
  std::vector<detail::RegionResult> results(boxes.size());
  if (ctx.cfg.parallel_regions && boxes.size() > 1) {
    std::vector<std::future<detail::RegionResult>> futures;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      futures.push_back(std::async(std::launch::async, [&, i] { return detail::predict_in_region(ctx, base, boxes[i], i); }));
    // Collect everything before rethrowing so no task outlives its captures.
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < futures.size(); ++i) {
      try {
        results[i] = futures[i].get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (std::size_t i = 0; i < boxes.size(); ++i) results[i] = detail::predict_in_region(ctx, base, boxes[i], i);
  }

  CandidateSet out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    trace.inferences.push_back(results[i].rec);
    if (!results[i].action) continue;
    const Action& a = *results[i].action;
    bool duplicate = false;
    for (const auto& kept : out) {
      if (kept.action.kind != a.kind) continue;
      if (a.start && kept.action.start) {
        duplicate = distance(*a.start, *kept.action.start) < ctx.cfg.dedup_radius;
      } else {
        duplicate = !a.start && !kept.action.start && kept.action == a;
      }
      if (duplicate) break;
    }
    if (!duplicate) out.push_back({a, boxes[i], std::nullopt, i});
  }
  int label = 0;
  for (auto& c : out)
    if (is_coordinate_action(c.action)) c.landmark_label = ++label;
  return out;
}

inline CandidateSet predict_region_candidates(const FocusContext& ctx, const Screenshot& base, Point focal,
                                              FocusTrace& trace) {
  if (!base.dims().contains(focal)) throw DomainError("predict_region_candidates: focal outside screenshot");
  auto boxes = propose_regions(focal, base.dims(), ctx.cfg.ratios);
  trace.regions = boxes;
  auto cands = predict_candidates(ctx, base, boxes, trace);
  if (cands.empty()) throw EmptyCandidates("no region produced a parsable action", trace, {});
  return cands;
}

// ---- aggregation ---------------------------------------------------------------------

/// Options in label order: starred coordinate candidates, then textual ones.
inline std::vector<const Candidate*> aggregation_order(const CandidateSet& cands) {
  std::vector<const Candidate*> order;
  for (const auto& c : cands)
    if (c.landmark_label) order.push_back(&c);
  for (const auto& c : cands)
    if (!c.landmark_label) order.push_back(&c);
  return order;
}

inline std::string option_text(const Candidate& c) {
  if (!c.landmark_label) return describe(c.action);
  std::string s = std::string(to_string(c.action.kind)) + " at pink star " + std::to_string(*c.landmark_label);
  if (c.action.end) s += " dragging to " + c.action.end->str();
  if (c.action.direction) s += std::string(" scrolling ") + to_string(*c.action.direction);
  return s;
}

/// Picks one candidate. A single candidate short-circuits without a model
/// call; an unusable reply falls back to the first-ratio candidate.
inline Action aggregate(const FocusContext& ctx, const Screenshot& base, const CandidateSet& cands, FocusTrace& trace) {
  if (cands.empty()) throw DomainError("aggregate: empty candidate set");
  if (cands.size() == 1) return cands.front().action;

  const auto order = aggregation_order(cands);
  std::vector<Landmark> marks;
  std::vector<std::string> options;
  for (const auto* c : order) {
    if (c->landmark_label) marks.push_back({*c->action.start, *c->landmark_label, LandmarkKind::Candidate});
    options.push_back(option_text(*c));
  }
  const auto snapshot = annotate(base, marks, ctx.cfg.style);
  const auto req = render_aggregation_prompt(ctx.objective, snapshot, options, ctx.profile);
  InferenceRecord rec;
  const auto reply = infer(*ctx.backend, req, rec);
  const auto label = parse_label_reply(reply, static_cast<int>(options.size()));
  const Candidate* chosen = nullptr;
  if (label) {
    chosen = order[static_cast<std::size_t>(*label - 1)];
    trace.chosen = label;
    rec.parsed = std::to_string(*label);
  } else {
    chosen = &cands.front();
    trace.fallback = true;
    rec.error = "no label in [1, " + std::to_string(options.size()) + "]; using first-ratio candidate";
  }
  trace.inferences.push_back(std::move(rec));
  return chosen->action;
}

// ---- full round ---------------------------------------------------------------------

struct FocusResult {
  Action action;
  FocusHistory updated_history;
  FocusTrace trace;
};

/// One refinement round on `base`: focal -> regions -> candidates -> aggregate.
/// The attempted focal point joins the history as a new star.
inline FocusResult run_focus(const FocusContext& ctx, const Screenshot& base, const FocusHistory& history,
                             RegionProposer* proposer = nullptr) {
  ctx.cfg.validate();
  if (!ctx.backend) throw DomainError("run_focus: no backend");
  FixedRatioProposer fixed;
  RegionProposer& regions = proposer ? *proposer : fixed;

  FocusTrace trace;
  FocusHistory next = history;
  std::optional<Point> focal;
  if (regions.needs_focal()) {
    try {
      focal = propose_focal(ctx, base, history, trace);
    } catch (const FocalExhausted&) {
      throw FocalExhausted("focal proposal exhausted its retry budget", trace, history);
    } catch (const ParseError& e) {
      throw FocusError(std::string("focal reply unusable: ") + e.what(), trace, history);
    }
    trace.focal = focal;
    next.add(*focal);
  }

  std::vector<RegionBox> boxes;
  try {
    boxes = regions.propose(ctx, base, focal, trace);
  } catch (const ParseError& e) {
    throw FocusError(std::string("region proposal unusable: ") + e.what(), trace, next);
  } catch (const DomainError& e) {
    throw FocusError(std::string("region proposal unusable: ") + e.what(), trace, next);
  }
  trace.regions = boxes;
  if (!focal && !boxes.empty()) {
    const auto& b = boxes.front();
    next.add({(b.x0 + b.x1 - 1) / 2, (b.y0 + b.y1 - 1) / 2});
  }
  trace.candidates = predict_candidates(ctx, base, boxes, trace);
  if (trace.candidates.empty()) throw EmptyCandidates("no region produced a parsable action", trace, next);

  auto action = aggregate(ctx, base, trace.candidates, trace);
  return {std::move(action), std::move(next), std::move(trace)};
}

}  // namespace regionfocus
