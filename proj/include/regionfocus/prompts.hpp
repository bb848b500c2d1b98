#pragma once

// Prompt rendering and reply parsing for every inference the pipeline makes.
// Focal-point and native-action prompts are the published templates
// verbatim; judge, aggregation, region-corner and trajectory-judge templates
// are implementation-defined.

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regionfocus/actions.hpp"
#include "regionfocus/canvas.hpp"
#include "regionfocus/gateway.hpp"
#include "regionfocus/prompt_text.hpp"

namespace regionfocus {

namespace prompt_text {

inline constexpr std::string_view kFocalRetry =
    "\n\n## Retry\nYour previous answer {rejected} lies on or next to a pink-starred coordinate. "
    "Output a different point.";

inline constexpr std::string_view kJudge = R"RF(You are verifying a GUI agent's grounding prediction. The screenshot shows the agent's predicted point marked with a numbered pink star.

## Objective
{objective}

## Question
Does the pink star lie on the correct target element for the objective?

## Output Format
Answer with exactly one word: CORRECT or INCORRECT.)RF";

inline constexpr std::string_view kAggregate = R"RF(You are a GUI agent choosing the best next action. Candidate actions have been collected from zoomed-in views of the screenshot. Coordinate-based candidates are marked on the screenshot with numbered pink stars; the label of each star is its candidate number.

## Objective
{objective}

## Candidates
{candidates}

## Output Format
Answer with a single candidate number between 1 and {k}.)RF";

inline constexpr std::string_view kRegionCorners = R"RF(You are a GUI agent. You are given a task and a current web screenshot. Output the region of the screenshot most relevant to the objective as its upper-left and bottom-right corner coordinates.

## Other Information
OBJECTIVE: {objective}
URL: {url}

## Output Format
```
(x1, y1), (x2, y2)
```)RF";

inline constexpr std::string_view kTrajectoryJudge = R"RF(As an evaluator, you will be presented with three primary components to assist you in your role:

1. Web Task Instruction: a natural language command describing the task to accomplish on the web.
2. Result Screenshots: the last {n} screenshots of the agent's trajectory, in order.
3. Result Response: the agent's final textual answer, if any.

Decide whether the task was accomplished. Reply with SUCCESS or NOT SUCCESS on the last line.

Task: {objective}
Result Response: {response})RF";

}  // namespace prompt_text

/// Single-pass substitution of {name} placeholders; unknown names are kept.
inline std::string fill_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tpl[i++];
  }
  return out;
}

inline std::string template_hash(std::string_view tpl) { return to_hex(Fnv1a64().update(tpl).value()); }

/// A snapshot with landmarks drawn on it, remembering how it was made.
struct AnnotatedImage {
  Screenshot base;
  std::vector<Landmark> marks;
  Screenshot image;
};

inline AnnotatedImage annotate(const Screenshot& base, std::vector<Landmark> marks, const StyleConfig& style = {}) {
  AnnotatedImage a{base, std::move(marks), {}};
  a.image = draw_landmarks(base, a.marks, style);
  return a;
}

namespace detail {

inline ChatRequest single_turn(std::string template_id, std::string tag, std::string text, const Screenshot& image,
                               const BackendProfile& profile) {
  ChatRequest req;
  req.template_id = std::move(template_id);
  req.tag = std::move(tag);
  req.profile = profile;
  req.messages.push_back({"user", {Part::of_text(std::move(text)), Part::of_image(image)}});
  return req;
}

inline void attach_annotation(ChatRequest& req, const AnnotatedImage& a) {
  req.annotation = Annotation{a.base.digest(), a.marks};
}

}  // namespace detail

/// The backend's own agent prompt applied to `image` (full screenshot or zoomed crop).
inline ChatRequest render_action_prompt(const std::string& objective, const std::string& url, const Screenshot& image,
                                        const BackendProfile& profile, std::string tag = "native") {
  if (profile.dialect == Dialect::UiTarsV1) {
    return detail::single_turn("action", std::move(tag),
                               fill_template(prompt_text::kUiTarsAction, {{"objective", objective}, {"url", url}}),
                               image, profile);
  }
  const Dims screen = profile.space == CoordinateSpace::Declared ? profile.declared_resolution : image.dims();
  ChatRequest req;
  req.template_id = "action";
  req.tag = std::move(tag);
  req.profile = profile;
  req.messages.push_back(
      {"system", {Part::of_text(fill_template(prompt_text::kComputerUseSystem,
                                              {{"self.display_width_px", std::to_string(screen.width)},
                                               {"self.display_height_px", std::to_string(screen.height)}}))}});
  req.messages.push_back(
      {"user", {Part::of_text("OBJECTIVE: " + objective + "\nURL: " + url), Part::of_image(image)}});
  return req;
}

inline ChatRequest render_focal_prompt(const std::string& objective, const std::string& url,
                                       const AnnotatedImage& map, const BackendProfile& profile,
                                       std::optional<Point> rejected = std::nullopt) {
  auto text = fill_template(prompt_text::kFocal, {{"objective", objective}, {"url", url}});
  if (rejected) text += fill_template(prompt_text::kFocalRetry, {{"rejected", rejected->str()}});
  auto req = detail::single_turn("focal", "focal", std::move(text), map.image, profile);
  detail::attach_annotation(req, map);
  return req;
}

inline ChatRequest render_judge_prompt(const std::string& objective, const AnnotatedImage& starred,
                                       const BackendProfile& profile) {
  int judges = 0;
  for (const auto& m : starred.marks) judges += m.kind == LandmarkKind::Judge;
  if (judges != 1 || starred.marks.size() != 1)
    throw DomainError("render_judge_prompt: snapshot must carry exactly one judge landmark");
  auto req = detail::single_turn("judge", "judge", fill_template(prompt_text::kJudge, {{"objective", objective}}),
                                 starred.image, profile);
  detail::attach_annotation(req, starred);
  return req;
}

/// `options` lists every candidate in label order (coordinate candidates
/// first, matching their star labels).
inline ChatRequest render_aggregation_prompt(const std::string& objective, const AnnotatedImage& candidates,
                                             const std::vector<std::string>& options, const BackendProfile& profile) {
  const auto k = options.size();
  if (k == 0) throw DomainError("render_aggregation_prompt: need at least one candidate");
  std::string list;
  for (std::size_t i = 0; i < k; ++i) list += std::to_string(i + 1) + ". " + options[i] + (i + 1 < k ? "\n" : "");
  auto req = detail::single_turn(
      "aggregate", "aggregate",
      fill_template(prompt_text::kAggregate, {{"objective", objective}, {"candidates", list}, {"k", std::to_string(k)}}),
      candidates.image, profile);
  detail::attach_annotation(req, candidates);
  return req;
}

inline ChatRequest render_region_prompt(const std::string& objective, const std::string& url, const Screenshot& base,
                                        const BackendProfile& profile) {
  return detail::single_turn("region", "region",
                             fill_template(prompt_text::kRegionCorners, {{"objective", objective}, {"url", url}}),
                             base, profile);
}

inline ChatRequest render_trajectory_judge_prompt(const std::string& objective,
                                                  const std::vector<Screenshot>& screenshots,
                                                  const std::string& response, const BackendProfile& profile) {
  ChatRequest req;
  req.template_id = "trajectory_judge";
  req.tag = "trajectory_judge";
  req.profile = profile;
  Message m{"user", {Part::of_text(fill_template(prompt_text::kTrajectoryJudge,
                                                 {{"objective", objective},
                                                  {"response", response},
                                                  {"n", std::to_string(screenshots.size())}}))}};
  for (const auto& s : screenshots) m.parts.push_back(Part::of_image(s));
  req.messages.push_back(std::move(m));
  return req;
}

// ---- reply parsing ----------------------------------------------------------

namespace detail {

// All non-negative "(int, int)" pairs, in order of appearance.
inline std::vector<std::pair<Point, std::size_t>> coordinate_pairs(std::string_view text) {
  std::vector<std::pair<Point, std::size_t>> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '(') continue;
    Cursor c(text.substr(i + 1), i + 1);
    try {
      c.skip_ws();
      if (!std::isdigit(static_cast<unsigned char>(c.peek()))) continue;
      const int x = c.integer();
      c.expect(',');
      c.skip_ws();
      if (!std::isdigit(static_cast<unsigned char>(c.peek()))) continue;
      const int y = c.integer();
      c.expect(')');
      out.push_back({{x, y}, i});
    } catch (const ParseError&) {
    }
  }
  return out;
}

}  // namespace detail

inline Point parse_focal_reply(const std::string& text) {
  const auto pairs = detail::coordinate_pairs(text);
  if (pairs.empty()) throw ParseError(0, "no (x, y) coordinate pair in focal reply");
  return pairs.front().first;
}

/// Upper-left and bottom-right corners for the direct region proposer.
inline std::pair<Point, Point> parse_corner_reply(const std::string& text) {
  const auto pairs = detail::coordinate_pairs(text);
  if (pairs.size() < 2) throw ParseError(0, "expected two (x, y) corner pairs");
  return {pairs[0].first, pairs[1].first};
}

enum class JudgeVerdict { Correct, Incorrect, Ambiguous };

inline const char* to_string(JudgeVerdict v) {
  switch (v) {
    case JudgeVerdict::Correct: return "correct";
    case JudgeVerdict::Incorrect: return "incorrect";
    case JudgeVerdict::Ambiguous: return "ambiguous";
  }
  return "ambiguous";
}

inline JudgeVerdict parse_judge_reply(const std::string& text) {
  bool correct = false;
  bool incorrect = false;
  std::string word;
  const auto flush = [&] {
    const auto w = detail::lower(word);
    correct |= w == "correct";
    incorrect |= w == "incorrect";
    word.clear();
  };
  for (char ch : text) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      word += ch;
    } else {
      flush();
    }
  }
  flush();
  if (correct == incorrect) return JudgeVerdict::Ambiguous;
  return correct ? JudgeVerdict::Correct : JudgeVerdict::Incorrect;
}

/// First integer in the reply if it names a label in [1, k].
inline std::optional<int> parse_label_reply(const std::string& text, int k) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j - i > 6) return std::nullopt;
    const int v = std::stoi(text.substr(i, j - i));
    if (v >= 1 && v <= k) return v;
    return std::nullopt;
  }
  return std::nullopt;
}

/// WebVoyager-style verdict: true iff the reply says SUCCESS and not NOT SUCCESS.
inline std::optional<bool> parse_trajectory_verdict(const std::string& text) {
  std::string upper;
  for (char c : text) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper.find("NOT SUCCESS") != std::string::npos) return false;
  if (upper.find("SUCCESS") != std::string::npos) return true;
  return std::nullopt;
}

/// Model-space point -> pixel of an image with dims `actual`. Inclusive of
/// the far edge, so the result may equal actual.width/height; callers that
/// need a pixel use clamp_to_image.
inline Point rescale_model_point(Point p, const BackendProfile& profile, Dims actual) {
  if (profile.space == CoordinateSpace::Image) {
    if (p.x < 0 || p.y < 0 || p.x > actual.width || p.y > actual.height)
      throw DomainError("model point " + p.str() + " outside image " + actual.str());
    return p;
  }
  const Dims d = profile.declared_resolution;
  if (!d.valid()) throw DomainError("profile declared resolution must be positive");
  if (p.x < 0 || p.y < 0 || p.x > d.width || p.y > d.height)
    throw DomainError("model point " + p.str() + " outside declared space " + d.str());
  return {round_px(static_cast<double>(p.x) * actual.width / d.width),
          round_px(static_cast<double>(p.y) * actual.height / d.height)};
}

inline Point clamp_to_image(Point p, Dims image) {
  return {std::clamp(p.x, 0, image.width - 1), std::clamp(p.y, 0, image.height - 1)};
}

/// Rescales every coordinate of a parsed action from model space into pixels
/// of the image the model was shown.
inline Action rescale_action(Action a, const BackendProfile& profile, Dims shown) {
  if (a.start) a.start = clamp_to_image(rescale_model_point(*a.start, profile, shown), shown);
  if (a.end) a.end = clamp_to_image(rescale_model_point(*a.end, profile, shown), shown);
  return a;
}

}  // namespace regionfocus
