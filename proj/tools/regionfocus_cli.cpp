// regionfocus: command-line front end.
//
//   regionfocus ground      --image s.png --instruction "close button" --replay t.ndjson
//   regionfocus ground      --tasks mini.jsonl --replay t.ndjson --report out/
//   regionfocus run         --sim shop.json --objective "buy kettle" --mock script.json --out traj/
//   regionfocus eval        --tasks mini.jsonl --mock script.json --report out/
//   regionfocus eval        --trajectories traj1 traj2 [--baseline b1 b2]
//   regionfocus render-map  --trace traj/trace.ndjson --out maps/
//   regionfocus replay      --transcript t.ndjson [--trace traj/trace.ndjson]
//
// Exit codes: 0 success, 1 run error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "regionfocus/agent_loop.hpp"
#include "regionfocus/bridge.hpp"
#include "regionfocus/config.hpp"
#include "regionfocus/evalkit.hpp"
#include "regionfocus/http_backend.hpp"

namespace fs = std::filesystem;
using namespace regionfocus;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every command that runs a model.
struct ModelFlags {
  std::string config;
  std::string profile;
  std::string mock;
  std::string replay;
  std::string record;
  bool live = false;
  std::string endpoint;
  std::string model;
  std::optional<int> max_steps;
  bool no_regionfocus = false;
  std::string judge_mode;
  std::vector<std::string> ratios;
  std::optional<int> jobs;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--profile", profile, "Backend profile: ui-tars or qwen2.5-vl");
    cmd->add_option("--mock", mock, "Scripted mock backend (JSON rules)")->check(CLI::ExistingFile);
    cmd->add_option("--replay", replay, "Replay a recorded transcript (NDJSON)");
    cmd->add_option("--record", record, "Append every exchange to this transcript");
    cmd->add_flag("--live", live, "Call the configured chat-completions endpoint");
    cmd->add_option("--endpoint", endpoint, "Chat-completions base URL (live mode)");
    cmd->add_option("--model", model, "Model name sent to the endpoint (live mode)");
    cmd->add_option("--max-steps", max_steps, "Step budget per trajectory")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-regionfocus", no_regionfocus, "Disable refinement (baseline)");
    cmd->add_option("--judge-mode", judge_mode, "Trigger source: env, self or both");
    cmd->add_option("--ratio", ratios, "Region ratio WxH, repeatable (default 0.5x0.5 0.3x0.3 0.4x0.8 0.8x0.4)");
    cmd->add_option("--jobs", jobs, "Parallel grounding tasks")->check(CLI::PositiveNumber);
  }

  int modes() const { return !mock.empty() + !replay.empty() + live; }

  // Precedence: flags > environment > config file > defaults.
  Settings settings() const {
    try {
      return resolve();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }

  Settings resolve() const {
    Settings s;
    if (!config.empty()) s = load_config(config, s);
    if (!profile.empty()) {
      const auto keep = s.profile;
      s.profile = profile_by_name(profile);
      s.profile.endpoint = keep.endpoint;
      s.profile.model = keep.model;
      s.profile.timeout_seconds = keep.timeout_seconds;
      s.profile.max_retries = keep.max_retries;
    }
    if (!endpoint.empty()) s.profile.endpoint = endpoint;
    if (!model.empty()) s.profile.model = model;
    if (max_steps) s.loop.max_steps = *max_steps;
    if (no_regionfocus) s.loop.regionfocus = false;
    if (!judge_mode.empty()) s.loop.judge_mode = judge_mode_from_string(judge_mode);
    if (!ratios.empty()) {
      s.loop.focus.ratios.clear();
      for (const auto& r : ratios) s.loop.focus.ratios.push_back(parse_ratio(r));
    }
    if (jobs) s.jobs = *jobs;
    s.loop.validate();
    return s;
  }
};

// Owns the chosen backend and an optional recorder in front of it. Each
// fresh() call builds an independent backend from the same source so that
// back-to-back runs replay identically.
class BackendSource {
 public:
  explicit BackendSource(const ModelFlags& f) : f_(f) {
    if (f.modes() != 1) throw UsageError("choose exactly one of --mock, --replay, --live");
    if (!f.replay.empty()) transcript_ = load_transcript(f.replay);
  }

  ModelBackend& fresh() {
    if (!f_.mock.empty()) {
      inner_ = std::make_unique<MockBackend>(MockBackend::load(f_.mock));
    } else if (!f_.replay.empty()) {
      inner_ = std::make_unique<ReplayBackend>(transcript_);
    } else {
      inner_ = std::make_unique<HttpBackend>(api_key_from_env());
    }
    if (f_.record.empty()) return *inner_;
    if (!recorder_) {
      recorder_ = std::make_unique<RecordingBackend>(forward_, f_.record);
    }
    forward_.target = inner_.get();
    return *recorder_;
  }

 private:
  struct Forward : ModelBackend {
    ModelBackend* target = nullptr;
    std::string complete(const ChatRequest& req) override { return target->complete(req); }
  };

  const ModelFlags& f_;
  std::vector<TranscriptEntry> transcript_;
  std::unique_ptr<ModelBackend> inner_;
  Forward forward_;
  std::unique_ptr<RecordingBackend> recorder_;
};

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

// ---- ground ----------------------------------------------------------------------

struct GroundArgs {
  ModelFlags m;
  std::string image;
  std::string instruction;
  std::string tasks;
  std::string report;
};

int cmd_ground(const GroundArgs& a) {
  if (a.tasks.empty() == a.image.empty()) throw UsageError("give either --image with --instruction, or --tasks");
  if (!a.image.empty() && a.instruction.empty()) throw UsageError("--image needs --instruction");
  const auto s = a.m.settings();
  BackendSource src(a.m);

  if (!a.image.empty()) {
    const auto g = run_grounding(load_png(a.image), a.instruction, s.loop, src.fresh(), s.profile);
    if (!g.point) {
      std::cerr << "error: " << g.error << "\n";
      return 1;
    }
    std::cout << g.point->x << " " << g.point->y << "\n";
    if (g.gateway_failure) {
      std::cerr << "error: " << g.error << "\n";
      return 1;
    }
    return 0;
  }

  const auto file = load_grounding_tasks(a.tasks);
  for (const auto& r : file.rejected) std::cerr << "rejected task " << r.id << ": " << r.reason << "\n";
  GroundingEvalOptions opt;
  opt.loop = s.loop;
  opt.jobs = s.jobs;
  const auto report = run_grounding_eval(file.tasks, opt, src.fresh(), s.profile);
  for (const auto& row : report.rows) {
    std::cout << row.id << " ";
    if (row.predicted) {
      std::cout << row.predicted->x << " " << row.predicted->y;
    } else {
      std::cout << "-";
    }
    std::cout << (row.hit ? " hit" : " miss") << "\n";
  }
  const std::string label = s.profile.name + (s.loop.regionfocus ? " + RegionFocus" : "");
  const auto table = grounding_table({{label, &report}});
  std::cout << "\n" << table;
  if (!a.report.empty()) {
    write_file(fs::path(a.report) / "report.json", to_json(report).dump(2) + "\n");
    write_file(fs::path(a.report) / "table.txt", table);
    write_file(fs::path(a.report) / "trace.ndjson", grounding_trace_ndjson(report));
  }
  for (const auto& row : report.rows)
    if (row.gateway_failure) std::cerr << "task " << row.id << ": " << row.error << "\n";
  return report.gateway_failures > 0 ? 1 : 0;
}

// ---- run -------------------------------------------------------------------------

struct RunArgs {
  ModelFlags m;
  std::string sim;
  std::string bridge;
  std::string objective;
  std::string url;
  std::string task_id;
  std::string out;
  std::optional<int> settle_ms;
};

int cmd_run(const RunArgs& a) {
  if (a.sim.empty() == a.bridge.empty()) throw UsageError("give exactly one of --sim or --bridge");
  auto s = a.m.settings();
  if (a.settle_ms) s.loop.settle_delay = std::chrono::milliseconds(*a.settle_ms);
  BackendSource src(a.m);

  std::unique_ptr<Environment> env;
  if (!a.sim.empty()) {
    env = std::make_unique<SimEnvironment>(load_sim(a.sim));
  } else {
    // Real pages need time to settle; the bridge default mirrors a 5 s wait.
    const auto settle = a.settle_ms ? s.loop.settle_delay : std::chrono::milliseconds(5000);
    env = std::make_unique<BridgeEnvironment>(a.bridge, a.url, settle);
  }
  auto rec = run_trajectory(*env, a.objective, a.url, s.loop, src.fresh(), s.profile);
  rec.task_id = a.task_id;
  env->close();
  write_trajectory(rec, a.out);
  std::cout << to_string(rec.final_status) << " after " << rec.steps.size() << " steps";
  if (rec.goal_reached) std::cout << ", goal " << (*rec.goal_reached ? "reached" : "not reached");
  std::cout << ", " << rec.focus_rounds() << " refinement rounds\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  ModelFlags m;
  std::string tasks;
  std::vector<std::string> trajectories;
  std::vector<std::string> baseline;
  int repetitions = 3;
  std::string report;
};

int cmd_eval(const EvalArgs& a) {
  if (a.tasks.empty() == a.trajectories.empty()) throw UsageError("give either --tasks or --trajectories");

  if (!a.tasks.empty()) {
    const auto s = a.m.settings();
    BackendSource src(a.m);
    const auto file = load_grounding_tasks(a.tasks);
    for (const auto& r : file.rejected) std::cerr << "rejected task " << r.id << ": " << r.reason << "\n";
    GroundingEvalOptions opt;
    opt.loop = s.loop;
    opt.jobs = s.jobs;
    opt.loop.regionfocus = false;
    const auto base = run_grounding_eval(file.tasks, opt, src.fresh(), s.profile);
    opt.loop.regionfocus = true;
    const auto refined = run_grounding_eval(file.tasks, opt, src.fresh(), s.profile);
    const auto table = grounding_table({{s.profile.name, &base}, {s.profile.name + " + RegionFocus", &refined}});
    std::cout << table;
    if (!a.report.empty()) {
      write_file(fs::path(a.report) / "baseline.json", to_json(base).dump(2) + "\n");
      write_file(fs::path(a.report) / "regionfocus.json", to_json(refined).dump(2) + "\n");
      write_file(fs::path(a.report) / "table.txt", table);
    }
    return base.gateway_failures + refined.gateway_failures > 0 ? 1 : 0;
  }

  std::vector<TrajectoryRecord> runs;
  for (const auto& d : a.trajectories) runs.push_back(load_trajectory(d));
  std::vector<const TrajectoryRecord*> ptrs;
  for (const auto& r : runs) ptrs.push_back(&r);

  std::unique_ptr<BackendSource> src;
  ModelBackend* judge = nullptr;
  if (a.m.modes() > 0) {
    src = std::make_unique<BackendSource>(a.m);
    judge = &src->fresh();
  }
  const auto rep = summarize_trajectories(ptrs, judge, a.repetitions);
  nlohmann::json out = to_json(rep);

  if (!a.baseline.empty()) {
    std::vector<TrajectoryRecord> other;
    for (const auto& d : a.baseline) other.push_back(load_trajectory(d));
    std::vector<const TrajectoryRecord*> optrs;
    for (const auto& r : other) optrs.push_back(&r);
    const auto h = step_histogram(ptrs, optrs);
    nlohmann::json bins = nlohmann::json::object();
    for (const auto& [k, v] : h.bins) bins[std::to_string(k)] = v;
    out["step_difference"] = {{"bins", bins}, {"unmatched", h.unmatched}};
  }
  const auto text = out.dump(2) + "\n";
  std::cout << text;
  if (!a.report.empty()) write_file(fs::path(a.report) / "trajectories.json", text);
  return rep.valid < rep.attempted ? 1 : 0;
}

// ---- render-map --------------------------------------------------------------------

struct RenderArgs {
  std::string trace;
  std::string screenshots;
  std::string out;
};

int cmd_render_map(const RenderArgs& a) {
  std::ifstream in(a.trace);
  if (!in) throw std::runtime_error("cannot read trace " + a.trace);
  const fs::path shots = a.screenshots.empty() ? fs::path(a.trace).parent_path() / "screenshots" : fs::path(a.screenshots);
  std::string line;
  int written = 0;
  std::map<std::string, Screenshot> cache;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (detail::trim(line).empty()) continue;
    const auto where = a.trace + ":" + std::to_string(n) + ": ";
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw std::runtime_error(where + "not a JSON object");
    if (!j.contains("annotation")) continue;
    try {
      const auto base_hex = j.at("annotation").at("base").get<std::string>();
      std::vector<Landmark> marks;
      for (const auto& m : j["annotation"].at("marks")) marks.push_back(landmark_from_json(m));
      auto it = cache.find(base_hex);
      if (it == cache.end()) it = cache.emplace(base_hex, load_png(shots / (base_hex + ".png"))).first;
      const auto img = draw_landmarks(it->second, marks);
      char name[96];
      std::snprintf(name, sizeof name, "%03d-step%d-%s.png", written + 1, j.value("step", 0),
                    j.value("template", std::string("unknown")).c_str());
      save_png(img, fs::path(a.out) / name);
      ++written;
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  std::cout << written << " annotated snapshots written to " << a.out << "\n";
  return 0;
}

// ---- replay ------------------------------------------------------------------------

struct ReplayArgs {
  std::string transcript;
  std::string trace;
};

int cmd_replay(const ReplayArgs& a) {
  const auto entries = load_transcript(a.transcript);
  std::map<std::string, int> per_template;
  std::map<std::string, std::vector<std::string>> by_digest;
  for (const auto& e : entries) {
    ++per_template[e.template_id];
    by_digest[e.digest].push_back(e.response);
  }
  std::cout << entries.size() << " exchanges";
  for (const auto& [t, n] : per_template) std::cout << ", " << t << " " << n;
  std::cout << "\n";
  if (a.trace.empty()) return 0;

  std::ifstream in(a.trace);
  if (!in) throw std::runtime_error("cannot read trace " + a.trace);
  std::string line;
  int checked = 0, missing = 0;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (detail::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(a.trace + ":" + std::to_string(n) + ": not JSON");
    if (j.value("kind", "") != "inference") continue;
    ++checked;
    const auto d = j.value("request", "");
    const auto it = by_digest.find(d);
    const auto reply = j.value("reply", "");
    if (it == by_digest.end() || std::find(it->second.begin(), it->second.end(), reply) == it->second.end()) {
      ++missing;
      std::cerr << a.trace << ":" << n << ": request " << d << " has no matching recorded reply\n";
    }
  }
  std::cout << checked << " inferences checked, " << missing << " unmatched\n";
  return missing ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-focused test-time refinement for GUI agents"};
  app.require_subcommand(1);

  GroundArgs ground;
  auto* g = app.add_subcommand("ground", "Predict a point on a screenshot, or score a task file");
  ground.m.attach(g);
  g->add_option("--image", ground.image, "Screenshot PNG")->check(CLI::ExistingFile);
  g->add_option("--instruction", ground.instruction, "Element description");
  g->add_option("--tasks", ground.tasks, "Grounding task file (JSON lines)")->check(CLI::ExistingFile);
  g->add_option("--report", ground.report, "Directory for report.json, table.txt and trace.ndjson");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run one trajectory in the simulator or over the browser bridge");
  run.m.attach(r);
  r->add_option("--sim", run.sim, "Simulator script (JSON)")->check(CLI::ExistingFile);
  r->add_option("--bridge", run.bridge, "Browser bridge address, ws://host:port");
  r->add_option("--objective", run.objective, "Task objective")->required();
  r->add_option("--url", run.url, "Start URL reported to the model");
  r->add_option("--task-id", run.task_id, "Task id written to the summary (site--n)");
  r->add_option("--out", run.out, "Trajectory output directory")->required();
  r->add_option("--settle-ms", run.settle_ms, "Delay before each observation");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Compare baseline and refinement on a task file, or summarize trajectories");
  eval.m.attach(e);
  e->add_option("--tasks", eval.tasks, "Grounding task file")->check(CLI::ExistingFile);
  e->add_option("--trajectories", eval.trajectories, "Trajectory directories to summarize")->check(CLI::ExistingDirectory);
  e->add_option("--baseline", eval.baseline, "Baseline trajectory directories for the step histogram")
      ->check(CLI::ExistingDirectory);
  e->add_option("--repetitions", eval.repetitions, "Judge repetitions")->check(CLI::PositiveNumber);
  e->add_option("--report", eval.report, "Report directory");

  RenderArgs render;
  auto* m = app.add_subcommand("render-map", "Re-render every annotated snapshot in a trace");
  m->add_option("--trace", render.trace, "trace.ndjson from a run")->required()->check(CLI::ExistingFile);
  m->add_option("--screenshots", render.screenshots, "Screenshot directory (default: next to the trace)");
  m->add_option("--out", render.out, "Output directory")->required();

  ReplayArgs replay;
  auto* p = app.add_subcommand("replay", "Inspect a transcript and check a trace against it");
  p->add_option("--transcript", replay.transcript, "Transcript (NDJSON)")->required()->check(CLI::ExistingFile);
  p->add_option("--trace", replay.trace, "Trace whose inferences must all be in the transcript")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*g) return cmd_ground(ground);
    if (*r) return cmd_run(run);
    if (*e) return cmd_eval(eval);
    if (*m) return cmd_render_map(render);
    if (*p) return cmd_replay(replay);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
