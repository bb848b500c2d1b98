#pragma once

// Environments the agent loop drives: a static screenshot (grounding
// benchmarks) and a scripted GUI simulator built from PNG pages plus hotspot
// metadata.
//
// Simulator script (JSON):
//
//   {
//     "url": "https://shop.example/",            optional, reported to prompts
//     "start": "home",
//     "pages": [
//       { "id": "home", "background": "home.png",  path relative to the script
//         "url": "https://shop.example/home",        optional per-page url
//         "fields":   [ { "id": "search", "box": [x0, y0, x1, y1], "submit_goto": "results" } ],
//         "hotspots": [ { "box": [x0, y0, x1, y1], "on": "click", "goto": "cart", "types_into": "search" } ] }
//     ],
//     "goal": { "page": "done", "fields": { "search": "kettle" } }
//   }
//
// "on" is an action kind name (click, double_click, right_click, scroll,
// drag, mouse_move); it defaults to click. "goto" defaults to staying on the
// page. "types_into" focuses a field. Boxes are half-open pixel rectangles.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "regionfocus/actions.hpp"
#include "regionfocus/canvas.hpp"
#include "regionfocus/image.hpp"
#include "regionfocus/png_io.hpp"

namespace regionfocus {

class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScriptValidationError : public EnvironmentError {
 public:
  ScriptValidationError(const std::string& path, const std::string& why)
      : EnvironmentError(path + ": " + why), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct StepOutcome {
  Screenshot screenshot;
  bool terminated = false;
  bool fault = false;
  std::string info;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual Screenshot observe() = 0;
  virtual StepOutcome apply(const Action& action) = 0;
  virtual void close() {}
  virtual std::string url() const { return {}; }
  /// Scripted success verdict, when the environment knows one.
  virtual std::optional<bool> goal_reached() const { return std::nullopt; }
};

/// Single fixed screenshot. Any action records its point and terminates.
class StaticEnvironment : public Environment {
 public:
  explicit StaticEnvironment(Screenshot image, std::string url = {}) : image_(std::move(image)), url_(std::move(url)) {}

  Screenshot observe() override {
    if (closed_) throw EnvironmentError("environment closed");
    return image_;
  }

  StepOutcome apply(const Action& action) override {
    if (closed_) throw EnvironmentError("environment closed");
    try {
      validate(action);
    } catch (const DomainError& e) {
      return {image_, true, true, e.what()};
    }
    predicted_ = action.start;
    return {image_, true, false, predicted_ ? "predicted " + predicted_->str() : "no point predicted"};
  }

  void close() override { closed_ = true; }
  std::string url() const override { return url_; }
  std::optional<Point> predicted() const { return predicted_; }

 private:
  Screenshot image_;
  std::string url_;
  std::optional<Point> predicted_;
  bool closed_ = false;
};

// ---- simulator ------------------------------------------------------------------

struct SimField {
  std::string id;
  RegionBox box;
  std::optional<std::string> submit_goto;
};

struct Hotspot {
  RegionBox box;
  ActionKind on = ActionKind::Click;
  std::optional<std::string> go_to;
  std::optional<std::string> types_into;

  bool hit(Point p) const { return p.x >= box.x0 && p.x < box.x1 && p.y >= box.y0 && p.y < box.y1; }
};

struct SimPage {
  std::string id;
  std::string url;  // reported while this page is shown; empty inherits the script url
  Screenshot background;
  std::vector<SimField> fields;
  std::vector<Hotspot> hotspots;
};

struct SimGoal {
  std::optional<std::string> page;
  std::map<std::string, std::string> fields;
};

struct SimScript {
  std::vector<SimPage> pages;
  std::string start;
  SimGoal goal;
  std::string url;

  const SimPage* page(const std::string& id) const {
    for (const auto& p : pages)
      if (p.id == id) return &p;
    return nullptr;
  }
};

/// Full simulator state; equal states render identical screenshots.
struct SimState {
  std::string page;
  std::map<std::string, std::string> values;
  std::optional<std::string> focused;
  friend auto operator<=>(const SimState&, const SimState&) = default;
};

inline bool goal_holds(const SimGoal& goal, const SimState& s) {
  if (goal.page && *goal.page != s.page) return false;
  for (const auto& [id, want] : goal.fields) {
    auto it = s.values.find(id);
    if (it == s.values.end() || it->second != want) return false;
  }
  return true;
}

// Trailing literal backslash-n in typed text submits the focused field.
inline constexpr std::string_view kSubmitMarker = "\\n";

/// Pure transition function of the simulator.
inline SimState sim_transition(const SimScript& script, const SimState& s, const Action& a) {
  const SimPage* page = script.page(s.page);
  SimState next = s;
  const auto field_on_page = [&](const std::string& id) -> const SimField* {
    for (const auto& f : page->fields)
      if (f.id == id) return &f;
    return nullptr;
  };
  const auto go = [&](const std::string& target) {
    next.page = target;
    if (next.focused) {
      bool stays = false;
      for (const auto& f : script.page(target)->fields) stays = stays || f.id == *next.focused;
      if (!stays) next.focused.reset();
    }
  };
  const auto submit = [&] {
    if (!next.focused) return;
    if (const auto* f = field_on_page(*next.focused); f && f->submit_goto) go(*f->submit_goto);
  };

  if (a.start) {
    for (const auto& h : page->hotspots) {
      if (h.on != a.kind || !h.hit(*a.start)) continue;
      if (h.types_into) next.focused = *h.types_into;
      if (h.go_to) go(*h.go_to);
      return next;
    }
    return next;
  }
  if (a.kind == ActionKind::Type && next.focused) {
    std::string text = *a.text;
    bool submits = false;
    if (text.ends_with(kSubmitMarker)) {
      text.resize(text.size() - 2);
      submits = true;
    } else if (text.ends_with('\n')) {
      text.pop_back();
      submits = true;
    }
    next.values[*next.focused] = text;
    if (submits) submit();
  } else if (a.kind == ActionKind::Hotkey) {
    const auto k = detail::lower(*a.text);
    if (k == "enter" || k == "return") submit();
  }
  return next;
}

inline Screenshot render_sim_state(const SimScript& script, const SimState& s) {
  const SimPage* page = script.page(s.page);
  if (page->fields.empty()) return page->background;
  bool any = false;
  for (const auto& f : page->fields) any = any || s.values.count(f.id);
  if (!any) return page->background;
  Raster r = page->background.raster();
  for (const auto& f : page->fields) {
    auto it = s.values.find(f.id);
    if (it == s.values.end()) continue;
    const int scale = std::max(1, (f.box.height() - 4) / 5);
    draw_text(r, it->second, {f.box.x0 + 2, f.box.y0 + (f.box.height() - 5 * scale) / 2}, scale, Rgb{0, 0, 0});
  }
  return Screenshot(std::move(r));
}

class SimEnvironment : public Environment {
 public:
  explicit SimEnvironment(SimScript script) : script_(std::move(script)) { state_.page = script_.start; }

  Screenshot observe() override {
    if (closed_) throw EnvironmentError("environment closed");
    return render_sim_state(script_, state_);
  }

  StepOutcome apply(const Action& action) override {
    if (closed_) throw EnvironmentError("environment closed");
    try {
      validate(action);
    } catch (const DomainError& e) {
      return {render_sim_state(script_, state_), true, true, e.what()};
    }
    if (action.kind == ActionKind::Finished || action.kind == ActionKind::CallUser ||
        action.kind == ActionKind::Terminate) {
      return {render_sim_state(script_, state_), true, false, std::string(to_string(action.kind))};
    }
    const auto before = state_.page;
    state_ = sim_transition(script_, state_, action);
    return {render_sim_state(script_, state_), false, false, before + " -> " + state_.page};
  }

  void close() override { closed_ = true; }
  std::string url() const override {
    const auto* page = script_.page(state_.page);
    return page->url.empty() ? script_.url : page->url;
  }
  std::optional<bool> goal_reached() const override { return goal_holds(script_.goal, state_); }

  const SimState& state() const { return state_; }
  const SimScript& script() const { return script_; }

 private:
  SimScript script_;
  SimState state_;
  bool closed_ = false;
};

// ---- loading ---------------------------------------------------------------------

namespace detail {

inline RegionBox box_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) throw ScriptValidationError(path, "box must be [x0, y0, x1, y1]");
  for (const auto& v : j)
    if (!v.is_number_integer()) throw ScriptValidationError(path, "box coordinates must be integers");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>(), std::nullopt};
}

}  // namespace detail

/// Parses and validates a script. `load_image` resolves background references.
template <typename ImageLoader>
SimScript parse_sim_script(const nlohmann::json& j, ImageLoader&& load_image) {
  SimScript s;
  if (!j.is_object()) throw ScriptValidationError("$", "script must be an object");
  if (!j.contains("start") || !j["start"].is_string()) throw ScriptValidationError("$.start", "missing start page id");
  s.start = j["start"].get<std::string>();
  s.url = j.value("url", "");
  if (!j.contains("pages") || !j["pages"].is_array() || j["pages"].empty())
    throw ScriptValidationError("$.pages", "must be a non-empty array");

  std::set<std::string> field_ids;
  const auto& pages = j["pages"];
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const std::string at = "$.pages[" + std::to_string(i) + "]";
    const auto& pj = pages[i];
    if (!pj.is_object() || !pj.contains("id") || !pj["id"].is_string()) throw ScriptValidationError(at + ".id", "missing page id");
    SimPage page;
    page.id = pj["id"].get<std::string>();
    if (s.page(page.id)) throw ScriptValidationError(at + ".id", "duplicate page id '" + page.id + "'");
    page.url = pj.value("url", "");
    if (!pj.contains("background") || !pj["background"].is_string())
      throw ScriptValidationError(at + ".background", "missing background image path");
    try {
      page.background = load_image(pj["background"].get<std::string>());
    } catch (const std::exception& e) {
      throw ScriptValidationError(at + ".background", e.what());
    }
    const Dims dims = page.background.dims();

    if (pj.contains("fields")) {
      for (std::size_t k = 0; k < pj["fields"].size(); ++k) {
        const std::string fat = at + ".fields[" + std::to_string(k) + "]";
        const auto& fj = pj["fields"][k];
        SimField f;
        if (!fj.contains("id") || !fj["id"].is_string()) throw ScriptValidationError(fat + ".id", "missing field id");
        f.id = fj["id"].get<std::string>();
        f.box = detail::box_from_json(fj.value("box", nlohmann::json()), fat + ".box");
        if (!f.box.inside(dims)) throw ScriptValidationError(fat + ".box", "field box outside background " + dims.str());
        if (fj.contains("submit_goto")) f.submit_goto = fj["submit_goto"].get<std::string>();
        field_ids.insert(f.id);
        page.fields.push_back(std::move(f));
      }
    }
    if (pj.contains("hotspots")) {
      for (std::size_t k = 0; k < pj["hotspots"].size(); ++k) {
        const std::string hat = at + ".hotspots[" + std::to_string(k) + "]";
        const auto& hj = pj["hotspots"][k];
        Hotspot h;
        h.box = detail::box_from_json(hj.value("box", nlohmann::json()), hat + ".box");
        if (!h.box.inside(dims)) throw ScriptValidationError(hat + ".box", "hotspot box outside background " + dims.str());
        const auto on = action_kind_from_string(hj.value("on", std::string("click")));
        if (!on) throw ScriptValidationError(hat + ".on", "unknown action kind");
        h.on = *on;
        if (hj.contains("goto")) h.go_to = hj["goto"].get<std::string>();
        if (hj.contains("types_into")) h.types_into = hj["types_into"].get<std::string>();
        page.hotspots.push_back(std::move(h));
      }
    }
    s.pages.push_back(std::move(page));
  }

  if (!s.page(s.start)) throw ScriptValidationError("$.start", "start page '" + s.start + "' does not exist");
  for (std::size_t i = 0; i < s.pages.size(); ++i) {
    const std::string at = "$.pages[" + std::to_string(i) + "]";
    for (std::size_t k = 0; k < s.pages[i].hotspots.size(); ++k) {
      const auto& h = s.pages[i].hotspots[k];
      const std::string hat = at + ".hotspots[" + std::to_string(k) + "]";
      if (h.go_to && !s.page(*h.go_to)) throw ScriptValidationError(hat + ".goto", "page '" + *h.go_to + "' does not exist");
      if (h.types_into && !field_ids.count(*h.types_into))
        throw ScriptValidationError(hat + ".types_into", "field '" + *h.types_into + "' does not exist");
    }
    for (std::size_t k = 0; k < s.pages[i].fields.size(); ++k) {
      const auto& f = s.pages[i].fields[k];
      if (f.submit_goto && !s.page(*f.submit_goto))
        throw ScriptValidationError(at + ".fields[" + std::to_string(k) + "].submit_goto",
                                    "page '" + *f.submit_goto + "' does not exist");
    }
  }

  if (j.contains("goal")) {
    const auto& g = j["goal"];
    if (g.contains("page")) {
      s.goal.page = g["page"].get<std::string>();
      if (!s.page(*s.goal.page)) throw ScriptValidationError("$.goal.page", "page '" + *s.goal.page + "' does not exist");
    }
    if (g.contains("fields")) {
      for (const auto& item : g["fields"].items()) {
        const std::string k = item.key();
        if (!field_ids.count(k)) throw ScriptValidationError("$.goal.fields." + k, "unknown field");
        s.goal.fields[k] = item.value().template get<std::string>();
      }
    }
  } else {
    throw ScriptValidationError("$.goal", "missing goal");
  }
  return s;
}

inline SimScript load_sim_script(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw EnvironmentError("cannot open simulator script " + file.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ScriptValidationError("$", file.string() + " is not valid JSON");
  const auto dir = file.parent_path();
  try {
    return parse_sim_script(j, [&](const std::string& rel) { return load_png(dir / rel); });
  } catch (const nlohmann::json::exception& e) {
    throw ScriptValidationError("$", e.what());
  }
}

inline SimEnvironment load_sim(const std::filesystem::path& file) { return SimEnvironment(load_sim_script(file)); }

}  // namespace regionfocus
