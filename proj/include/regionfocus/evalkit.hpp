#pragma once

// Benchmark harnesses: point-in-box grounding evaluation with per-category
// breakdowns, trajectory success summaries (scripted goal or model judge),
// and step-difference histograms.
//
// Grounding task files are JSON lines (or one JSON array) with the field
// names of the public ScreenSpot-Pro annotations:
//
//   {"id": "t01", "img_filename": "a.png", "instruction": "close button",
//    "bbox": [x1, y1, x2, y2], "group": "Office", "ui_type": "icon",
//    "application": "word"}
//
// img_filename resolves against the task file's directory unless absolute.

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "regionfocus/agent_loop.hpp"
#include "regionfocus/png_io.hpp"

namespace regionfocus {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroundingTask {
  std::string id;
  std::filesystem::path image;
  std::string instruction;
  RegionBox gt_box;
  std::string group;
  std::string ui_type;  // "text" or "icon"
  std::string application;
};

struct RejectedRow {
  std::string id;  // row id, or "line N" when the row has none
  std::string reason;
};

struct TaskFile {
  std::vector<GroundingTask> tasks;
  std::vector<RejectedRow> rejected;
};

/// Reads width and height from a PNG header without decoding pixels.
inline Dims png_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::array<unsigned char, 24> h{};
  in.read(reinterpret_cast<char*>(h.data()), h.size());
  static constexpr std::array<unsigned char, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != 24 || !std::equal(sig.begin(), sig.end(), h.begin())) throw ImageIoError(path.string() + " is not a PNG");
  const auto be32 = [&](int o) {
    return int(h[o]) << 24 | int(h[o + 1]) << 16 | int(h[o + 2]) << 8 | int(h[o + 3]);
  };
  return {be32(16), be32(20)};
}

inline TaskFile load_grounding_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot read task file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  std::vector<std::pair<std::string, nlohmann::json>> rows;  // (locator, row)
  const auto first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '[') {
    auto arr = nlohmann::json::parse(content, nullptr, false);
    if (arr.is_discarded()) throw EvalError(path.string() + ": invalid JSON array");
    for (std::size_t i = 0; i < arr.size(); ++i) rows.emplace_back("row " + std::to_string(i + 1), arr[i]);
  } else {
    std::istringstream lines(content);
    std::string line;
    for (std::size_t n = 1; std::getline(lines, line); ++n) {
      if (detail::trim(line).empty()) continue;
      rows.emplace_back("line " + std::to_string(n), nlohmann::json::parse(line, nullptr, false));
    }
  }

  TaskFile out;
  std::set<std::string> seen;
  const auto dir = path.parent_path();
  for (auto& [where, j] : rows) {
    std::string id = where;
    try {
      if (j.is_discarded() || !j.is_object()) throw EvalError("not a JSON object");
      if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      GroundingTask t;
      t.id = id;
      t.instruction = j.at("instruction").get<std::string>();
      std::filesystem::path img = j.at("img_filename").get<std::string>();
      t.image = img.is_absolute() ? img : dir / img;
      const auto& b = j.at("bbox");
      if (!b.is_array() || b.size() != 4) throw EvalError("bbox must have four numbers");
      t.gt_box = {round_px(b[0].get<double>()), round_px(b[1].get<double>()), round_px(b[2].get<double>()),
                  round_px(b[3].get<double>()), std::nullopt};
      t.group = j.value("group", "all");
      t.ui_type = j.value("ui_type", "text");
      t.application = j.value("application", "");
      if (t.ui_type != "text" && t.ui_type != "icon") throw EvalError("ui_type must be text or icon");
      if (t.gt_box.x0 > t.gt_box.x1 || t.gt_box.y0 > t.gt_box.y1) throw EvalError("bbox corners out of order");
      const Dims dims = png_dims(t.image);
      if (t.gt_box.x0 < 0 || t.gt_box.y0 < 0 || t.gt_box.x1 > dims.width || t.gt_box.y1 > dims.height)
        throw EvalError("bbox " + t.gt_box.str() + " outside image " + dims.str());
      if (!seen.insert(t.id).second) throw EvalError("duplicate id");
      out.tasks.push_back(std::move(t));
    } catch (const std::exception& e) {
      out.rejected.push_back({id, e.what()});
    }
  }
  if (out.tasks.empty()) throw EvalError(path.string() + ": no valid tasks");
  return out;
}

inline bool score_grounding(Point pred, const GroundingTask& task) { return point_in_box(pred, task.gt_box); }

struct GroundingRow {
  std::string id;
  std::string group;
  std::string ui_type;
  std::optional<Point> initial;
  std::optional<Point> predicted;
  bool hit = false;
  bool triggered = false;
  std::string error;
  bool gateway_failure = false;
  std::vector<InferenceRecord> inferences;  // call order, refinement included
};

struct Tally {
  int hits = 0;
  int total = 0;
  double accuracy() const { return total ? static_cast<double>(hits) / total : 0.0; }
};

struct GroupTally {
  Tally text;
  Tally icon;
  Tally all;
};

struct GroundingReport {
  std::vector<GroundingRow> rows;  // task order
  std::map<std::string, GroupTally> groups;
  GroupTally overall;
  int triggered = 0;
  int errors = 0;
  int gateway_failures = 0;

  double trigger_rate() const { return rows.empty() ? 0.0 : static_cast<double>(triggered) / rows.size(); }
};

/// Aggregates rows; kept separate so tests can re-derive reports from rows.
inline GroundingReport tally_grounding(std::vector<GroundingRow> rows) {
  GroundingReport r;
  r.rows = std::move(rows);
  for (const auto& row : r.rows) {
    auto& g = r.groups[row.group];
    for (GroupTally* t : {&g, &r.overall}) {
      auto& kind = row.ui_type == "icon" ? t->icon : t->text;
      kind.total += 1;
      kind.hits += row.hit;
      t->all.total += 1;
      t->all.hits += row.hit;
    }
    r.triggered += row.triggered;
    r.errors += !row.error.empty();
    r.gateway_failures += row.gateway_failure;
  }
  return r;
}

struct GroundingEvalOptions {
  LoopConfig loop;
  int jobs = 1;
  RegionProposer* proposer = nullptr;
};

/// Runs every task; per-task failures score as misses and never abort.
inline GroundingReport run_grounding_eval(const std::vector<GroundingTask>& tasks, const GroundingEvalOptions& opt,
                                          ModelBackend& backend, const BackendProfile& profile) {
  std::vector<GroundingRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      const auto& t = tasks[i];
      GroundingRow& row = rows[i];
      row.id = t.id;
      row.group = t.group;
      row.ui_type = t.ui_type;
      try {
        const auto g = run_grounding(load_png(t.image), t.instruction, opt.loop, backend, profile, opt.proposer);
        row.initial = g.initial;
        row.predicted = g.point;
        row.triggered = g.trigger.fired;
        row.error = g.error;
        row.gateway_failure = g.gateway_failure;
        row.inferences = g.inferences;
        if (g.focus) row.inferences.insert(row.inferences.end(), g.focus->inferences.begin(), g.focus->inferences.end());
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      row.hit = row.predicted && score_grounding(*row.predicted, t);
    }
  };
  const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(tasks.size())));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(work);
  }
  return tally_grounding(std::move(rows));
}

namespace detail {

inline nlohmann::json tally_json(const Tally& t) {
  return {{"hits", t.hits}, {"total", t.total}, {"accuracy", t.accuracy()}};
}

inline std::string pct(const Tally& t) {
  if (t.total == 0) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * t.accuracy());
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace detail

inline nlohmann::json to_json(const GroundingReport& r) {
  nlohmann::json j;
  j["overall"] = {{"text", detail::tally_json(r.overall.text)},
                  {"icon", detail::tally_json(r.overall.icon)},
                  {"avg", detail::tally_json(r.overall.all)}};
  j["groups"] = nlohmann::json::object();
  for (const auto& [name, g] : r.groups)
    j["groups"][name] = {{"text", detail::tally_json(g.text)}, {"icon", detail::tally_json(g.icon)}, {"avg", detail::tally_json(g.all)}};
  j["triggered"] = r.triggered;
  j["trigger_rate"] = r.trigger_rate();
  j["errors"] = r.errors;
  j["gateway_failures"] = r.gateway_failures;
  j["tasks"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json t{{"id", row.id}, {"group", row.group}, {"ui_type", row.ui_type}, {"hit", row.hit}, {"triggered", row.triggered}};
    t["initial"] = row.initial ? nlohmann::json::array({row.initial->x, row.initial->y}) : nlohmann::json(nullptr);
    t["predicted"] = row.predicted ? nlohmann::json::array({row.predicted->x, row.predicted->y}) : nlohmann::json(nullptr);
    if (!row.error.empty()) t["error"] = row.error;
    j["tasks"].push_back(t);
  }
  return j;
}

/// Every inference of every task, one JSON record per line, in task order.
inline std::string grounding_trace_ndjson(const GroundingReport& r) {
  std::string out;
  for (const auto& row : r.rows) {
    for (const auto& rec : row.inferences) {
      auto j = to_json(rec);
      j["kind"] = "inference";
      j["task"] = row.id;
      out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    }
  }
  return out;
}

/// Aligned text table: one row per labeled report, Text/Icon/Avg per group
/// followed by the overall average.
inline std::string grounding_table(const std::vector<std::pair<std::string, const GroundingReport*>>& runs) {
  std::set<std::string> names;
  for (const auto& [_, r] : runs)
    for (const auto& [g, __] : r->groups) names.insert(g);
  std::size_t label_w = 5;
  for (const auto& [label, _] : runs) label_w = std::max(label_w, label.size());
  constexpr std::size_t cell = 6;

  std::string top = std::string(label_w, ' ');
  std::string sub = "Model" + std::string(label_w - 5, ' ');
  for (const auto& g : names) {
    const std::size_t span = 3 * (cell + 1);
    std::string name = g.size() > span - 1 ? g.substr(0, span - 1) : g;
    top += " " + name + std::string(span - 1 - name.size(), ' ');
    sub += " " + detail::pad("Text", cell) + " " + detail::pad("Icon", cell) + " " + detail::pad("Avg", cell);
  }
  top += " " + std::string("Overall");
  sub += " " + detail::pad("Avg", cell);
  std::string out = top + "\n" + sub + "\n";
  for (const auto& [label, r] : runs) {
    std::string line = label + std::string(label_w - label.size(), ' ');
    for (const auto& g : names) {
      auto it = r->groups.find(g);
      const GroupTally t = it == r->groups.end() ? GroupTally{} : it->second;
      line += " " + detail::pad(detail::pct(t.text), cell) + " " + detail::pad(detail::pct(t.icon), cell) + " " +
              detail::pad(detail::pct(t.all), cell);
    }
    line += " " + detail::pad(detail::pct(r->overall.all), cell);
    out += line + "\n";
  }
  return out;
}

// ---- trajectories -------------------------------------------------------------------

inline constexpr std::size_t kJudgeScreenshots = 15;

/// Profile for the trajectory judge: plain text verdicts, many images.
inline BackendProfile judge_profile() {
  BackendProfile p;
  p.name = "trajectory-judge";
  p.space = CoordinateSpace::Image;
  p.max_images = static_cast<int>(kJudgeScreenshots);
  return p;
}

/// The last `kJudgeScreenshots` observations of a record, in visit order.
inline std::vector<Screenshot> judge_screenshots(const TrajectoryRecord& rec) {
  const auto& obs = rec.observations;
  const std::size_t from = obs.size() > kJudgeScreenshots ? obs.size() - kJudgeScreenshots : 0;
  std::vector<Screenshot> out;
  for (std::size_t i = from; i < obs.size(); ++i) out.push_back(rec.screenshots.at(obs[i]));
  return out;
}

inline std::string site_of(const std::string& task_id) {
  const auto p = task_id.find("--");
  return p == std::string::npos ? task_id : task_id.substr(0, p);
}

struct TrajectoryRow {
  std::string task_id;
  std::string site;
  int steps = 0;
  std::vector<std::optional<bool>> verdicts;  // one per repetition; empty = invalid
};

struct TrajectoryReport {
  std::vector<TrajectoryRow> rows;
  std::vector<double> repetition_rates;  // success rate per repetition over valid verdicts
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across repetitions
  std::map<std::string, double> site_rates;  // mean over repetitions
  int valid = 0;
  int attempted = 0;

  double coverage() const { return attempted ? static_cast<double>(valid) / attempted : 0.0; }
};

inline int interactive_steps(const TrajectoryRecord& rec) {
  int n = 0;
  for (const auto& s : rec.steps) n += s.action.has_value();
  return n;
}

/// Success per record and repetition: the judge's verdict on the last
/// screenshots when a judge is given, else the scripted goal.
inline TrajectoryReport summarize_trajectories(const std::vector<const TrajectoryRecord*>& records, ModelBackend* judge,
                                               int repetitions = 3, const BackendProfile& profile = judge_profile()) {
  if (records.empty()) throw EvalError("summarize_trajectories: no records");
  if (repetitions < 1) throw EvalError("summarize_trajectories: repetitions must be positive");
  const int reps = judge ? repetitions : 1;
  TrajectoryReport r;
  for (const auto* rec : records) {
    TrajectoryRow row{rec->task_id, site_of(rec->task_id), interactive_steps(*rec), {}};
    for (int k = 0; k < reps; ++k) {
      ++r.attempted;
      std::optional<bool> v;
      if (judge) {
        try {
          const auto req = render_trajectory_judge_prompt(rec->objective, judge_screenshots(*rec), rec->response, profile);
          v = parse_trajectory_verdict(judge->complete(req));
        } catch (const GatewayError&) {
        }
      } else {
        v = rec->goal_reached;
      }
      r.valid += v.has_value();
      row.verdicts.push_back(v);
    }
    r.rows.push_back(std::move(row));
  }

  std::map<std::string, std::vector<double>> site_reps;
  for (int k = 0; k < reps; ++k) {
    Tally all;
    std::map<std::string, Tally> sites;
    for (const auto& row : r.rows) {
      const auto& v = row.verdicts[static_cast<std::size_t>(k)];
      if (!v) continue;
      all.total += 1;
      all.hits += *v;
      sites[row.site].total += 1;
      sites[row.site].hits += *v;
    }
    r.repetition_rates.push_back(all.accuracy());
    for (const auto& [s, t] : sites) site_reps[s].push_back(t.accuracy());
  }
  double sum = 0;
  for (double x : r.repetition_rates) sum += x;
  r.mean = sum / r.repetition_rates.size();
  if (r.repetition_rates.size() > 1) {
    double ss = 0;
    for (double x : r.repetition_rates) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / (r.repetition_rates.size() - 1));
  }
  for (const auto& [s, v] : site_reps) {
    double t = 0;
    for (double x : v) t += x;
    r.site_rates[s] = t / v.size();
  }
  return r;
}

inline nlohmann::json to_json(const TrajectoryReport& r) {
  nlohmann::json j{{"mean", r.mean},
                   {"stddev", r.stddev},
                   {"repetition_rates", r.repetition_rates},
                   {"site_rates", r.site_rates},
                   {"coverage", r.coverage()},
                   {"valid", r.valid},
                   {"attempted", r.attempted}};
  j["tasks"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto v = nlohmann::json::array();
    for (const auto& x : row.verdicts) v.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
    j["tasks"].push_back({{"task_id", row.task_id}, {"site", row.site}, {"steps", row.steps}, {"verdicts", v}});
  }
  return j;
}

struct StepHistogram {
  std::map<int, int> bins;  // steps_a - steps_b -> task count
  std::vector<std::string> unmatched;
};

/// Per-task difference in environment-interactive steps, matched by task id.
inline StepHistogram step_histogram(const std::vector<const TrajectoryRecord*>& a,
                                    const std::vector<const TrajectoryRecord*>& b) {
  std::map<std::string, const TrajectoryRecord*> bi;
  for (const auto* r : b) bi[r->task_id] = r;
  StepHistogram h;
  std::set<std::string> matched;
  for (const auto* r : a) {
    auto it = bi.find(r->task_id);
    if (it == bi.end()) {
      h.unmatched.push_back(r->task_id);
      continue;
    }
    matched.insert(r->task_id);
    ++h.bins[interactive_steps(*r) - interactive_steps(*it->second)];
  }
  for (const auto* r : b)
    if (!matched.count(r->task_id)) h.unmatched.push_back(r->task_id);
  return h;
}

}  // namespace regionfocus
