#pragma once

// Dialect-independent agent actions plus parsers/serializers for the two
// model output grammars:
//
//   UiTarsV1             Thought: ...\nAction: click(start_box='<|box_start|>(x,y)<|box_end|>')
//   ComputerUseToolCall  <tool_call>{"name": "computer_use", "arguments": {...}}</tool_call>
//
// Cross-dialect kind table (serialize direction):
//
//   kind          UiTarsV1          ComputerUseToolCall
//   Click         click             left_click
//   DoubleClick   left_double       double_click
//   RightClick    right_single      right_click
//   Drag          drag              left_click_drag (start_coordinate + coordinate)
//   Hotkey        hotkey(key=)      key (keys array, split on spaces)
//   Type          type(content=)    type (text)
//   Scroll        scroll(direction) scroll (pixels; positive = up)
//   MouseMove     -- error --       mouse_move
//   Wait          wait()            wait (time)
//   Finished      finished()        terminate(success)
//   CallUser      call_user()       terminate(failure)
//   Terminate     finished()/call_user() by status   terminate(status)
//
// Any field the target dialect cannot carry raises DomainError.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "regionfocus/geometry.hpp"

namespace regionfocus {

enum class ActionKind {
  Click,
  DoubleClick,
  RightClick,
  Drag,
  Hotkey,
  Type,
  Scroll,
  MouseMove,
  Wait,
  Finished,
  CallUser,
  Terminate,
};

inline constexpr std::array kAllActionKinds = {
    ActionKind::Click,     ActionKind::DoubleClick, ActionKind::RightClick, ActionKind::Drag,
    ActionKind::Hotkey,    ActionKind::Type,        ActionKind::Scroll,     ActionKind::MouseMove,
    ActionKind::Wait,      ActionKind::Finished,    ActionKind::CallUser,   ActionKind::Terminate,
};

enum class ScrollDirection { Up, Down, Left, Right };
enum class TerminateStatus { Success, Failure };
enum class Dialect { UiTarsV1, ComputerUseToolCall };

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Click: return "click";
    case ActionKind::DoubleClick: return "double_click";
    case ActionKind::RightClick: return "right_click";
    case ActionKind::Drag: return "drag";
    case ActionKind::Hotkey: return "hotkey";
    case ActionKind::Type: return "type";
    case ActionKind::Scroll: return "scroll";
    case ActionKind::MouseMove: return "mouse_move";
    case ActionKind::Wait: return "wait";
    case ActionKind::Finished: return "finished";
    case ActionKind::CallUser: return "call_user";
    case ActionKind::Terminate: return "terminate";
  }
  return "?";
}

inline std::optional<ActionKind> action_kind_from_string(std::string_view s) {
  for (auto k : kAllActionKinds)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

inline const char* to_string(ScrollDirection d) {
  switch (d) {
    case ScrollDirection::Up: return "up";
    case ScrollDirection::Down: return "down";
    case ScrollDirection::Left: return "left";
    case ScrollDirection::Right: return "right";
  }
  return "?";
}

inline const char* to_string(TerminateStatus s) { return s == TerminateStatus::Success ? "success" : "failure"; }

inline const char* to_string(Dialect d) { return d == Dialect::UiTarsV1 ? "ui-tars" : "computer-use"; }

inline Dialect dialect_from_string(const std::string& s) {
  if (s == "ui-tars" || s == "UiTarsV1") return Dialect::UiTarsV1;
  if (s == "computer-use" || s == "ComputerUseToolCall") return Dialect::ComputerUseToolCall;
  throw DomainError("unknown dialect '" + s + "'");
}

struct Action {
  ActionKind kind = ActionKind::Wait;
  std::optional<Point> start;
  std::optional<Point> end;
  std::optional<std::string> text;
  std::optional<ScrollDirection> direction;
  std::optional<int> amount;
  std::optional<TerminateStatus> status;

  friend bool operator==(const Action&, const Action&) = default;

  static Action at(ActionKind k, Point p) {
    Action a;
    a.kind = k;
    a.start = p;
    return a;
  }
  static Action click(Point p) { return at(ActionKind::Click, p); }
  static Action drag(Point from, Point to) {
    Action a = at(ActionKind::Drag, from);
    a.end = to;
    return a;
  }
  static Action type(std::string s) {
    Action a;
    a.kind = ActionKind::Type;
    a.text = std::move(s);
    return a;
  }
  static Action hotkey(std::string keys) {
    Action a;
    a.kind = ActionKind::Hotkey;
    a.text = std::move(keys);
    return a;
  }
  static Action scroll(std::optional<Point> p, ScrollDirection d, std::optional<int> amount = std::nullopt) {
    Action a;
    a.kind = ActionKind::Scroll;
    a.start = p;
    a.direction = d;
    a.amount = amount;
    return a;
  }
  static Action simple(ActionKind k) {
    Action a;
    a.kind = k;
    return a;
  }
  static Action terminate(TerminateStatus s) {
    Action a;
    a.kind = ActionKind::Terminate;
    a.status = s;
    return a;
  }
};

/// Throws DomainError describing the first violated invariant.
inline void validate(const Action& a) {
  const auto fail = [&](const std::string& why) {
    throw DomainError(std::string("invalid ") + to_string(a.kind) + " action: " + why);
  };
  const bool needs_start = a.kind == ActionKind::Click || a.kind == ActionKind::DoubleClick ||
                           a.kind == ActionKind::RightClick || a.kind == ActionKind::MouseMove ||
                           a.kind == ActionKind::Drag;
  if (needs_start && !a.start) fail("missing start point");
  if (a.kind == ActionKind::Drag && !a.end) fail("missing end point");
  if (a.kind != ActionKind::Drag && a.end) fail("only drag carries an end point");
  if ((a.kind == ActionKind::Type || a.kind == ActionKind::Hotkey) && !a.text) fail("missing text");
  if (a.kind == ActionKind::Scroll && !a.direction && !a.amount) fail("scroll needs a direction or amount");
  const bool no_coords = a.kind == ActionKind::Finished || a.kind == ActionKind::Wait ||
                         a.kind == ActionKind::CallUser || a.kind == ActionKind::Terminate ||
                         a.kind == ActionKind::Type || a.kind == ActionKind::Hotkey;
  if (no_coords && a.start) fail("carries no coordinates");
  if (a.kind == ActionKind::Terminate && !a.status) fail("missing status");
  if (a.kind != ActionKind::Terminate && a.status) fail("only terminate carries a status");
  for (const auto& p : {a.start, a.end})
    if (p && (p->x < 0 || p->y < 0)) fail("negative coordinate");
}

inline bool is_coordinate_action(const Action& a) { return a.start.has_value(); }

/// Dialect-free canonical text, used for repeated-action detection and logs.
inline std::string describe(const Action& a) {
  std::string s = to_string(a.kind);
  s += "(";
  std::vector<std::string> parts;
  if (a.start) parts.push_back(a.start->str());
  if (a.end) parts.push_back("to " + a.end->str());
  if (a.text) parts.push_back(nlohmann::json(*a.text).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
  if (a.direction) parts.push_back(to_string(*a.direction));
  if (a.amount) parts.push_back(std::to_string(*a.amount));
  if (a.status) parts.push_back(to_string(*a.status));
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? ", " : "") + parts[i];
  return s + ")";
}

/// Maps every coordinate field from a zoomed region canvas back to the full frame.
inline Action rebase(Action a, const ZoomSpec& spec) {
  if (a.start) a.start = to_full_coords(*a.start, spec);
  if (a.end) a.end = to_full_coords(*a.end, spec);
  return a;
}

struct ModelTurn {
  std::optional<std::string> thought;
  Action action;
  std::string raw;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, std::string reason)
      : std::runtime_error("parse error at " + std::to_string(position) + ": " + reason),
        position_(position),
        reason_(std::move(reason)) {}

  std::size_t position() const { return position_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t position_;
  std::string reason_;
};

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Recursive-descent cursor over the UI-TARS call grammar.
class Cursor {
 public:
  Cursor(std::string_view text, std::size_t base) : text_(text), base_(base) {}

  std::size_t pos() const { return base_ + i_; }
  bool done() const { return i_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[i_]; }
  void skip_ws() {
    while (!done() && is_space(text_[i_])) ++i_;
  }
  [[noreturn]] void fail(const std::string& why) const { throw ParseError(pos(), why); }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }
  bool accept(char c) {
    skip_ws();
    if (peek() != c) return false;
    ++i_;
    return true;
  }
  bool accept(std::string_view lit) {
    skip_ws();
    if (text_.substr(i_).starts_with(lit)) {
      i_ += lit.size();
      return true;
    }
    return false;
  }

  std::string identifier() {
    skip_ws();
    const auto start = i_;
    while (!done() && (std::isalnum(static_cast<unsigned char>(text_[i_])) || text_[i_] == '_')) ++i_;
    if (start == i_) fail("expected identifier");
    return std::string(text_.substr(start, i_ - start));
  }

  // Quoted value. `\'` and `\\` are escapes; any other backslash is kept
  // verbatim so a trailing literal "\n" (the submit marker) survives.
  std::string quoted() {
    skip_ws();
    const char q = peek();
    if (q != '\'' && q != '"') fail("expected quoted value");
    ++i_;
    std::string out;
    while (true) {
      if (done()) fail("unterminated string");
      const char c = text_[i_++];
      if (c == q) return out;
      if (c == '\\' && !done() && (text_[i_] == q || text_[i_] == '\\')) {
        out += text_[i_++];
        continue;
      }
      out += c;
    }
  }

  int integer() {
    skip_ws();
    const auto start = i_;
    if (peek() == '-' || peek() == '+') ++i_;
    while (!done() && std::isdigit(static_cast<unsigned char>(text_[i_]))) ++i_;
    int v = 0;
    const auto* first = text_.data() + start + (text_[start] == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(first, text_.data() + i_, v);
    if (ec != std::errc() || ptr != text_.data() + i_) {
      i_ = start;
      fail("malformed integer");
    }
    return v;
  }

  std::string_view rest() const { return text_.substr(std::min(i_, text_.size())); }

 private:
  std::string_view text_;
  std::size_t base_;
  std::size_t i_ = 0;
};

inline std::string escape_quoted(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\'') {
      out += "\\'";
    } else if (c == '\\' && (i + 1 == s.size() || s[i + 1] == '\\' || s[i + 1] == '\'')) {
      out += "\\\\";
    } else {
      out += c;
    }
  }
  return out;
}

// "<|box_start|>(x,y)<|box_end|>" or "(x,y)"; a four-number box resolves to
// its center.
inline Point parse_box_value(const std::string& value, std::size_t pos) {
  Cursor c(value, pos);
  c.accept("<|box_start|>");
  c.expect('(');
  std::vector<int> nums{c.integer()};
  while (c.accept(',')) nums.push_back(c.integer());
  c.expect(')');
  c.accept("<|box_end|>");
  c.skip_ws();
  if (!c.done()) throw ParseError(pos, "trailing text in coordinate value");
  Point p;
  if (nums.size() == 2) {
    p = {nums[0], nums[1]};
  } else if (nums.size() == 4) {
    p = {static_cast<int>((static_cast<long long>(nums[0]) + nums[2]) / 2),
         static_cast<int>((static_cast<long long>(nums[1]) + nums[3]) / 2)};
  } else {
    throw ParseError(pos, "coordinate value must have 2 or 4 numbers");
  }
  if (p.x < 0 || p.y < 0) throw ParseError(pos, "negative coordinate");
  return p;
}

inline std::string box_value(Point p) {
  return "'<|box_start|>(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")<|box_end|>'";
}

inline std::optional<ScrollDirection> parse_direction(std::string_view s) {
  const auto l = lower(trim(s));
  if (l == "up") return ScrollDirection::Up;
  if (l == "down") return ScrollDirection::Down;
  if (l == "left") return ScrollDirection::Left;
  if (l == "right") return ScrollDirection::Right;
  return std::nullopt;
}

// Locates "Action:" at a line start (after optional whitespace).
inline std::vector<std::size_t> find_action_markers(std::string_view text) {
  std::vector<std::size_t> found;
  for (std::size_t i = text.find("Action:"); i != std::string_view::npos; i = text.find("Action:", i + 1)) {
    std::size_t j = i;
    while (j > 0 && (text[j - 1] == ' ' || text[j - 1] == '\t')) --j;
    if (j == 0 || text[j - 1] == '\n' || text[j - 1] == '\r') found.push_back(i);
  }
  return found;
}

inline Action parse_ui_tars_call(std::string_view call, std::size_t base, std::size_t* consumed) {
  Cursor c(call, base);
  const auto name_pos = c.pos();
  const std::string name = c.identifier();
  c.expect('(');

  struct Arg {
    std::string value;
    std::size_t pos;
  };
  std::vector<std::pair<std::string, Arg>> args;
  if (!c.accept(')')) {
    do {
      const auto key = c.identifier();
      c.expect('=');
      const auto at = c.pos();
      args.push_back({key, {c.quoted(), at}});
    } while (c.accept(','));
    c.expect(')');
  }
  *consumed = c.pos() - base;

  const auto take = [&](std::string_view key) -> std::optional<Arg> {
    for (auto it = args.begin(); it != args.end(); ++it)
      if (it->first == key) {
        Arg v = it->second;
        args.erase(it);
        return v;
      }
    return std::nullopt;
  };
  const auto require = [&](std::string_view key) {
    auto v = take(key);
    if (!v) throw ParseError(name_pos, name + ": missing argument '" + std::string(key) + "'");
    return *v;
  };
  const auto point = [](const Arg& a) { return parse_box_value(a.value, a.pos); };

  Action a;
  if (name == "click" || name == "left_single") {
    a = Action::click(point(require("start_box")));
  } else if (name == "left_double") {
    a = Action::at(ActionKind::DoubleClick, point(require("start_box")));
  } else if (name == "right_single") {
    a = Action::at(ActionKind::RightClick, point(require("start_box")));
  } else if (name == "drag" || name == "select") {
    const auto from = point(require("start_box"));
    a = Action::drag(from, point(require("end_box")));
  } else if (name == "hotkey") {
    a = Action::hotkey(require("key").value);
  } else if (name == "type") {
    a = Action::type(require("content").value);
  } else if (name == "scroll") {
    a.kind = ActionKind::Scroll;
    if (auto s = take("start_box")) a.start = point(*s);
    const auto d = require("direction");
    a.direction = parse_direction(d.value);
    if (!a.direction) throw ParseError(d.pos, "unknown scroll direction '" + d.value + "'");
  } else if (name == "wait") {
    a = Action::simple(ActionKind::Wait);
  } else if (name == "finished") {
    a = Action::simple(ActionKind::Finished);
  } else if (name == "call_user") {
    a = Action::simple(ActionKind::CallUser);
  } else {
    throw ParseError(name_pos, "unknown action '" + name + "'");
  }
  if (!args.empty()) throw ParseError(args.front().second.pos, name + ": unexpected argument '" + args.front().first + "'");
  return a;
}

inline ModelTurn parse_ui_tars(const std::string& text) {
  ModelTurn turn;
  turn.raw = text;
  const auto markers = find_action_markers(text);
  if (markers.size() > 1) throw ParseError(markers[1], "multiple actions in one turn");

  std::size_t call_start = 0;
  std::string_view head;
  if (markers.empty()) {
    // Bare call without the "Action:" prefix.
    const auto t = trim(text);
    if (t.empty()) throw ParseError(0, "no action found");
    call_start = static_cast<std::size_t>(t.data() - text.data());
  } else {
    call_start = markers[0] + 7;
    head = std::string_view(text).substr(0, markers[0]);
  }

  if (!head.empty()) {
    const auto h = trim(head);
    const auto tp = h.find("Thought:");
    if (tp != std::string_view::npos) turn.thought = std::string(trim(h.substr(tp + 8)));
  }

  const std::string_view call = std::string_view(text).substr(call_start);
  std::size_t consumed = 0;
  turn.action = parse_ui_tars_call(call, call_start, &consumed);
  const auto tail = trim(call.substr(consumed));
  if (!tail.empty()) {
    const auto at = call_start + consumed;
    if (tail.find('(') != std::string_view::npos) throw ParseError(at, "multiple actions in one turn");
    throw ParseError(at, "unexpected trailing text after action");
  }
  return turn;
}

[[noreturn]] inline void cannot_express(const char* dialect, ActionKind k, const std::string& what) {
  throw DomainError(std::string(dialect) + " dialect cannot express " + to_string(k) + " " + what);
}

inline std::string serialize_ui_tars_call(const Action& a) {
  const auto unsupported = [&](const std::string& what) { cannot_express("ui-tars", a.kind, what); };
  if (a.amount) unsupported("with an amount");
  switch (a.kind) {
    case ActionKind::Click: return "click(start_box=" + box_value(*a.start) + ")";
    case ActionKind::DoubleClick: return "left_double(start_box=" + box_value(*a.start) + ")";
    case ActionKind::RightClick: return "right_single(start_box=" + box_value(*a.start) + ")";
    case ActionKind::Drag:
      return "drag(start_box=" + box_value(*a.start) + ", end_box=" + box_value(*a.end) + ")";
    case ActionKind::Hotkey: return "hotkey(key='" + escape_quoted(*a.text) + "')";
    case ActionKind::Type: return "type(content='" + escape_quoted(*a.text) + "')";
    case ActionKind::Scroll: {
      if (!a.direction) unsupported("without a direction");
      std::string s = "scroll(";
      if (a.start) s += "start_box=" + box_value(*a.start) + ", ";
      return s + "direction='" + to_string(*a.direction) + "')";
    }
    case ActionKind::MouseMove: cannot_express("ui-tars", a.kind, "(no mouse_move in this grammar)");
    case ActionKind::Wait: return "wait()";
    case ActionKind::Finished: return "finished()";
    case ActionKind::CallUser: return "call_user()";
    case ActionKind::Terminate:
      return *a.status == TerminateStatus::Success ? "finished()" : "call_user()";
  }
  return {};
}

// ---- tool-call dialect ------------------------------------------------------

inline constexpr int kDefaultScrollPixels = 100;

inline Point json_point(const nlohmann::json& v, std::size_t pos, const char* field) {
  if (!v.is_array() || v.size() != 2) throw ParseError(pos, std::string(field) + " must be a 2-element array");
  int xy[2];
  for (int i = 0; i < 2; ++i) {
    const auto& n = v[static_cast<std::size_t>(i)];
    if (n.is_number_integer()) {
      const auto iv = n.get<long long>();
      if (iv < 0 || iv > std::numeric_limits<int>::max()) throw ParseError(pos, std::string(field) + " out of range");
      xy[i] = static_cast<int>(iv);
    } else if (n.is_number_float()) {
      const double d = n.get<double>();
      if (!(d >= 0 && d <= std::numeric_limits<int>::max()) || d != std::floor(d))
        throw ParseError(pos, std::string(field) + " must hold non-negative integers");
      xy[i] = static_cast<int>(d);
    } else {
      throw ParseError(pos, std::string(field) + " must hold numbers");
    }
  }
  return {xy[0], xy[1]};
}

inline int json_int(const nlohmann::json& v, std::size_t pos, const char* field) {
  if (!v.is_number()) throw ParseError(pos, std::string(field) + " must be a number");
  const double d = v.get<double>();
  if (!(std::abs(d) < 1e9)) throw ParseError(pos, std::string(field) + " out of range");
  return static_cast<int>(std::lround(d));
}

inline Action action_from_tool_args(const nlohmann::json& args, std::size_t pos) {
  if (!args.is_object()) throw ParseError(pos, "arguments must be an object");
  auto it = args.find("action");
  if (it == args.end() || !it->is_string()) throw ParseError(pos, "missing string field 'action'");
  const std::string name = it->get<std::string>();

  const auto coordinate = [&](const char* field, bool required) -> std::optional<Point> {
    auto f = args.find(field);
    if (f == args.end() || f->is_null()) {
      if (required) throw ParseError(pos, name + ": missing '" + field + "'");
      return std::nullopt;
    }
    return json_point(*f, pos, field);
  };
  const auto string_field = [&](const char* field) {
    auto f = args.find(field);
    if (f == args.end() || !f->is_string()) throw ParseError(pos, name + ": missing string '" + field + "'");
    return f->get<std::string>();
  };

  Action a;
  if (name == "left_click") {
    a = Action::click(*coordinate("coordinate", true));
  } else if (name == "double_click") {
    a = Action::at(ActionKind::DoubleClick, *coordinate("coordinate", true));
  } else if (name == "right_click") {
    a = Action::at(ActionKind::RightClick, *coordinate("coordinate", true));
  } else if (name == "mouse_move") {
    a = Action::at(ActionKind::MouseMove, *coordinate("coordinate", true));
  } else if (name == "left_click_drag") {
    const auto from = coordinate("start_coordinate", true);
    a = Action::drag(*from, *coordinate("coordinate", true));
  } else if (name == "type") {
    a = Action::type(string_field("text"));
  } else if (name == "key") {
    auto f = args.find("keys");
    if (f == args.end()) throw ParseError(pos, "key: missing 'keys'");
    std::string joined;
    if (f->is_string()) {
      joined = f->get<std::string>();
    } else if (f->is_array() && !f->empty()) {
      for (const auto& k : *f) {
        if (!k.is_string()) throw ParseError(pos, "key: keys must be strings");
        if (!joined.empty()) joined += ' ';
        joined += k.get<std::string>();
      }
    } else {
      throw ParseError(pos, "key: keys must be a non-empty array");
    }
    a = Action::hotkey(joined);
  } else if (name == "scroll") {
    a.kind = ActionKind::Scroll;
    a.start = coordinate("coordinate", false);
    auto f = args.find("pixels");
    if (f == args.end()) throw ParseError(pos, "scroll: missing 'pixels'");
    const int px = json_int(*f, pos, "pixels");
    if (px != 0) a.direction = px > 0 ? ScrollDirection::Up : ScrollDirection::Down;
    a.amount = std::abs(px);
  } else if (name == "wait") {
    a = Action::simple(ActionKind::Wait);
    if (auto f = args.find("time"); f != args.end()) a.amount = json_int(*f, pos, "time");
  } else if (name == "terminate") {
    const auto s = string_field("status");
    if (s == "success") {
      a = Action::terminate(TerminateStatus::Success);
    } else if (s == "failure") {
      a = Action::terminate(TerminateStatus::Failure);
    } else {
      throw ParseError(pos, "terminate: status must be success or failure");
    }
  } else if (name == "middle_click") {
    throw ParseError(pos, "unsupported action 'middle_click'");
  } else {
    throw ParseError(pos, "unknown action '" + name + "'");
  }
  return a;
}

inline ModelTurn parse_tool_call(const std::string& text) {
  ModelTurn turn;
  turn.raw = text;
  constexpr std::string_view open = "<tool_call>";
  constexpr std::string_view close = "</tool_call>";

  std::size_t body_start = 0;
  std::size_t body_end = 0;
  const auto first = text.find(open);
  if (first == std::string::npos) {
    const auto t = trim(text);
    if (t.empty() || t.front() != '{') throw ParseError(0, "no <tool_call> block found");
    body_start = static_cast<std::size_t>(t.data() - text.data());
    body_end = body_start + t.size();
  } else {
    body_start = first + open.size();
    const auto end = text.find(close, body_start);
    if (end == std::string::npos) throw ParseError(first, "unterminated <tool_call> block");
    body_end = end;
    if (text.find(open, end) != std::string::npos) throw ParseError(text.find(open, end), "multiple actions in one turn");
    const auto head = trim(std::string_view(text).substr(0, first));
    if (!head.empty()) turn.thought = std::string(head);
    if (!trim(std::string_view(text).substr(end + close.size())).empty())
      throw ParseError(end + close.size(), "unexpected trailing text after </tool_call>");
  }

  const auto body = std::string_view(text).substr(body_start, body_end - body_start);
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(body_start, "tool call body is not a JSON object");
  try {
    auto name = j.find("name");
    if (name == j.end() || !name->is_string()) throw ParseError(body_start, "tool call missing 'name'");
    if (name->get<std::string>() != "computer_use")
      throw ParseError(body_start, "unknown function '" + name->get<std::string>() + "'");
    auto args = j.find("arguments");
    if (args == j.end()) throw ParseError(body_start, "tool call missing 'arguments'");
    nlohmann::json a = *args;
    if (a.is_string()) {
      a = nlohmann::json::parse(a.get<std::string>(), nullptr, false);
      if (a.is_discarded()) throw ParseError(body_start, "arguments string is not JSON");
    }
    turn.action = action_from_tool_args(a, body_start);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(body_start, std::string("malformed tool call: ") + e.what());
  }
  return turn;
}

inline nlohmann::ordered_json tool_args(const Action& a) {
  const auto unsupported = [&](const std::string& what) { cannot_express("computer-use", a.kind, what); };
  const auto coord = [](Point p) { return nlohmann::ordered_json::array({p.x, p.y}); };
  nlohmann::ordered_json args;
  if (a.amount && a.kind != ActionKind::Scroll && a.kind != ActionKind::Wait) unsupported("with an amount");
  switch (a.kind) {
    case ActionKind::Click: args["action"] = "left_click"; args["coordinate"] = coord(*a.start); break;
    case ActionKind::DoubleClick: args["action"] = "double_click"; args["coordinate"] = coord(*a.start); break;
    case ActionKind::RightClick: args["action"] = "right_click"; args["coordinate"] = coord(*a.start); break;
    case ActionKind::MouseMove: args["action"] = "mouse_move"; args["coordinate"] = coord(*a.start); break;
    case ActionKind::Drag:
      args["action"] = "left_click_drag";
      args["start_coordinate"] = coord(*a.start);
      args["coordinate"] = coord(*a.end);
      break;
    case ActionKind::Type: args["action"] = "type"; args["text"] = *a.text; break;
    case ActionKind::Hotkey: {
      args["action"] = "key";
      auto keys = nlohmann::ordered_json::array();
      std::string_view rest = *a.text;
      while (!rest.empty()) {
        const auto sp = rest.find(' ');
        const auto tok = rest.substr(0, sp);
        if (!tok.empty()) keys.push_back(std::string(tok));
        if (sp == std::string_view::npos) break;
        rest.remove_prefix(sp + 1);
      }
      if (keys.empty()) unsupported("with no keys");
      args["keys"] = keys;
      break;
    }
    case ActionKind::Scroll: {
      args["action"] = "scroll";
      if (a.start) args["coordinate"] = coord(*a.start);
      int px = a.amount ? std::abs(*a.amount) : kDefaultScrollPixels;
      if (a.direction) {
        if (*a.direction == ScrollDirection::Left || *a.direction == ScrollDirection::Right)
          unsupported("horizontally");
        if (*a.direction == ScrollDirection::Down) px = -px;
      } else {
        px = *a.amount;
      }
      args["pixels"] = px;
      break;
    }
    case ActionKind::Wait:
      args["action"] = "wait";
      if (a.amount) args["time"] = *a.amount;
      break;
    case ActionKind::Finished: args["action"] = "terminate"; args["status"] = "success"; break;
    case ActionKind::CallUser: args["action"] = "terminate"; args["status"] = "failure"; break;
    case ActionKind::Terminate: args["action"] = "terminate"; args["status"] = to_string(*a.status); break;
  }
  return args;
}

}  // namespace detail

inline ModelTurn parse(const std::string& text, Dialect dialect) {
  return dialect == Dialect::UiTarsV1 ? detail::parse_ui_tars(text) : detail::parse_tool_call(text);
}

inline std::string serialize(const ModelTurn& turn, Dialect dialect) {
  validate(turn.action);
  std::string out;
  if (dialect == Dialect::UiTarsV1) {
    if (turn.thought) out = "Thought: " + *turn.thought + "\n";
    return out + "Action: " + detail::serialize_ui_tars_call(turn.action);
  }
  nlohmann::ordered_json call;
  call["name"] = "computer_use";
  call["arguments"] = detail::tool_args(turn.action);
  if (turn.thought) out = *turn.thought + "\n";
  try {
    return out + "<tool_call>\n" + call.dump() + "\n</tool_call>";
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("cannot serialize action text: ") + e.what());
  }
}

inline std::string serialize(const Action& action, Dialect dialect) {
  return serialize(ModelTurn{std::nullopt, action, {}}, dialect);
}

/// True when `kind` (with the dialect's native fields) round-trips losslessly.
inline bool dialect_supports(Dialect d, ActionKind k) {
  if (d == Dialect::UiTarsV1) return k != ActionKind::MouseMove && k != ActionKind::Terminate;
  return k != ActionKind::Finished && k != ActionKind::CallUser;
}

}  // namespace regionfocus
