// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes.

#include <chrono>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "properties.hpp"
#include "regionfocus/agent_loop.hpp"
#include "regionfocus/evalkit.hpp"
#include "test_support.hpp"

using namespace regionfocus;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

const std::string kObjective = "Open the shopping cart";
const std::string kUrl = "https://shop.example/";

LoopConfig sequential(bool rf) {
  LoopConfig cfg;
  cfg.regionfocus = rf;
  cfg.focus.parallel_regions = false;
  return cfg;
}

TrajectoryRecord run_shop(ModelBackend& backend, const LoopConfig& cfg) {
  auto env = load_sim(rftest::data("sim/shop.json"));
  return run_trajectory(env, kObjective, kUrl, cfg, backend, ui_tars_profile());
}

std::string click(int x, int y) {
  return "Thought: t\nAction: click(start_box='<|box_start|>(" + std::to_string(x) + "," + std::to_string(y) +
         ")<|box_end|>')";
}

// ---- 1 --------------------------------------------------------------------------

std::string geometry() {
  const auto r = rftest::geometry_properties(10000, 0xacce55);
  require(r.ok(), r.failure.value_or(""));
  require(r.cases == 10000, "ran " + std::to_string(r.cases) + " cases");
  require(r.seconds < 5.0, "took " + std::to_string(r.seconds) + " s");
  std::ostringstream s;
  s << r.cases << " cases in " << r.seconds << " s";
  return s.str();
}

// ---- 2 --------------------------------------------------------------------------

std::string defaults() {
  require(default_ratios() == std::vector<Ratio>{{0.5, 0.5}, {0.3, 0.3}, {0.4, 0.8}, {0.8, 0.4}}, "ratios");
  require(FocusConfig{}.ratios == default_ratios(), "focus config ratios");
  require(LoopConfig{}.max_steps == 100, "max_steps");
  require(ui_tars_profile().declared_resolution == Dims{1440, 1440}, "ui-tars resolution");
  require(qwen_profile().declared_resolution == Dims{2240, 1260}, "qwen resolution");
  return "ratios, 100 steps, 1440x1440, 2240x1260";
}

// ---- 3 --------------------------------------------------------------------------

std::string parser() {
  for (auto d : {Dialect::UiTarsV1, Dialect::ComputerUseToolCall}) {
    const auto r = rftest::roundtrip_property(d, 1000, 7);
    require(r.ok() && r.cases == 1000, "round-trip: " + r.failure.value_or("short"));
  }
  const auto f = rftest::fuzz_property(rftest::grammar_examples(REGIONFOCUS_GRAMMAR_DOC), 100000, 99);
  require(f.ok() && f.cases == 100000, "fuzz: " + f.failure.value_or("short"));

  const auto a = parse("Thought: click the search icon\nAction: click(start_box='<|box_start|>(123,456)<|box_end|>')",
                       Dialect::UiTarsV1);
  require(a.action == Action::click({123, 456}) && a.thought == "click the search icon", "ui-tars example");
  const auto b = parse(
      R"(<tool_call>{"name": "computer_use", "arguments": {"action": "left_click", "coordinate": [100, 200]}}</tool_call>)",
      Dialect::ComputerUseToolCall);
  require(b.action == Action::click({100, 200}), "tool-call example");
  return "2x1000 round-trips, 100000 fuzz inputs, both examples";
}

// ---- 4 --------------------------------------------------------------------------

FocusContext pixel_context(ModelBackend& m) {
  FocusContext ctx;
  ctx.objective = "press the button";
  ctx.url = "https://example.test/";
  ctx.backend = &m;
  ctx.profile = ui_tars_profile();
  ctx.profile.space = CoordinateSpace::Image;
  ctx.cfg.parallel_regions = false;
  return ctx;
}

std::string accounting() {
  const auto base = Screenshot::filled({1000, 1000}, {230, 230, 230});
  std::ostringstream s;
  {
    MockBackend m;
    m.on("focal", "", {"(500, 500)"});
    m.on("action", "region:0", {click(500, 500)});
    m.on("action", "region:1", {click(500, 500)});
    m.on("action", "region:2", {click(250, 250)});
    m.on("action", "region:3", {"Action: type(content='hello')"});
    m.on("aggregate", "", {"1"});
    const auto t = run_focus(pixel_context(m), base, {}).trace;
    s << "(" << t.focal_inferences() << "," << t.region_inferences() << "," << t.aggregation_inferences() << ")";
    require(t.focal_inferences() == 1 && t.region_inferences() == 4 && t.aggregation_inferences() == 1, s.str());
  }
  {
    MockBackend m;
    m.on("focal", "", {"(500, 500)"});
    // Every zoomed region points at full-frame (500,500).
    m.on("action", "region:0", {click(500, 500)});
    m.on("action", "region:1", {click(500, 500)});
    m.on("action", "region:2", {click(250, 500)});
    m.on("action", "region:3", {click(500, 250)});
    const auto t = run_focus(pixel_context(m), base, {}).trace;
    s << " (" << t.focal_inferences() << "," << t.region_inferences() << "," << t.aggregation_inferences() << ")";
    require(t.candidates.size() == 1, "expected one candidate after dedup");
    require(t.focal_inferences() == 1 && t.region_inferences() == 4 && t.aggregation_inferences() == 0, s.str());
    require(m.calls("aggregate") == 0, "aggregate was called");
  }
  return s.str();
}

// ---- 5 --------------------------------------------------------------------------

void require_golden(const Screenshot& img, const std::string& name) {
  const auto path = rftest::data("golden/" + name);
  require(load_png(path).pixels() == img.pixels() && load_png(path).dims() == img.dims(), name + " pixels differ");
  require(encode_png(img) == read_file_bytes(path), name + " bytes differ");
}

std::string image_as_map() {
  auto mock = MockBackend::load(rftest::data("mock/map.json"));
  CountingBackend counting(mock);
  const auto r = run_shop(counting, sequential(true));
  std::vector<ChatRequest> focal;
  for (const auto& q : counting.requests())
    if (q.template_id == "focal") focal.push_back(q);
  require(focal.size() == 3, "expected 3 focal rounds, got " + std::to_string(focal.size()));
  require(focal[0].annotation && focal[0].annotation->marks.empty(), "round 1 map not clean");
  require(focal[1].annotation->marks.size() == 1, "round 2 map should carry 1 star");
  require(focal[2].annotation->marks.size() == 2, "round 3 map should carry 2 stars");
  require_golden(*focal[1].images()[0], "map_one_star.png");
  require_golden(*focal[2].images()[0], "map_two_stars.png");
  require(r.steps.size() >= 3 && r.steps[0].history.size() == 1 && r.steps[1].history.size() == 2,
          "history did not grow 1, 2");
  require(r.steps[1].focus.has_value(), "step 2 did not refine");
  require(r.steps[2].history.empty(), "history not cleared after the effective action");
  return "1 then 2 stars, goldens byte-exact, history cleared";
}

// ---- 6 --------------------------------------------------------------------------

std::string raw_prompt_purity() {
  int native = 0, annotated_requests = 0;
  for (const char* script : {"mock/map.json", "mock/recovery.json"}) {
    auto mock = MockBackend::load(rftest::data(script));
    CountingBackend counting(mock);
    const auto r = run_shop(counting, sequential(true));
    const std::set<std::string> observed(r.observations.begin(), r.observations.end());
    std::set<std::string> annotated;
    for (const auto& q : counting.requests())
      if (q.annotation) {
        ++annotated_requests;
        require(q.template_id == "focal" || q.template_id == "judge" || q.template_id == "aggregate",
                "annotated image in a " + q.template_id + " request");
        for (const auto& d : q.image_digests()) annotated.insert(d);
      }
    for (const auto& st : r.steps) {
      const auto& first = st.inferences.at(0);
      require(first.template_id == "action" && first.image_digests.size() == 1, "native prompt shape");
      require(first.image_digests[0] == st.observation, "native prompt image is not the raw observation");
      ++native;
    }
    for (const auto& q : counting.requests())
      if (q.template_id == "action" && q.tag == "native")
        for (const auto& d : q.image_digests())
          require(!annotated.count(d) || observed.count(d), "annotated digest reached the native prompt");
  }
  return std::to_string(native) + " native prompts raw, " + std::to_string(annotated_requests) +
         " annotated requests confined";
}

// ---- 7 --------------------------------------------------------------------------

std::string end_to_end() {
  auto mock_rf = MockBackend::load(rftest::data("mock/recovery.json"));
  const auto rf = run_shop(mock_rf, sequential(true));
  require(rf.final_status == FinalStatus::Finished && rf.goal_reached == true, "RF run did not reach the goal");

  auto mock_base = MockBackend::load(rftest::data("mock/recovery.json"));
  const auto base = run_shop(mock_base, sequential(false));
  require(base.final_status == FinalStatus::StepLimit && base.steps.size() == 100 && base.goal_reached == false,
          "baseline did not hit the step limit");

  auto replay_rf = ReplayBackend::load(rftest::data("replay/recovery_rf.ndjson"));
  require(trace_ndjson(run_shop(replay_rf, sequential(true))) == trace_ndjson(rf), "RF replay diverged");
  auto replay_base = ReplayBackend::load(rftest::data("replay/recovery_baseline.ndjson"));
  require(trace_ndjson(run_shop(replay_base, sequential(false))) == trace_ndjson(base), "baseline replay diverged");
  return "RF finished in " + std::to_string(rf.steps.size()) + " steps, baseline step_limit at 100, replays match";
}

// ---- 8 --------------------------------------------------------------------------

GroundingEvalOptions grounding_options(bool rf, int jobs = 1) {
  GroundingEvalOptions o;
  o.loop.regionfocus = rf;
  o.loop.focus.parallel_regions = false;
  o.jobs = jobs;
  return o;
}

std::string grounding() {
  const auto path = rftest::data("grounding/tasks.jsonl");
  const auto tasks = load_grounding_tasks(path).tasks;
  require(tasks.size() == 30, "fixture has " + std::to_string(tasks.size()) + " tasks");
  auto replay = ReplayBackend::load(rftest::data("grounding/transcript.ndjson"));
  const auto base = run_grounding_eval(tasks, grounding_options(false), replay, ui_tars_profile());
  const auto rf = run_grounding_eval(tasks, grounding_options(true), replay, ui_tars_profile());
  for (const auto* rep : {&base, &rf}) {
    const auto rc = rftest::recount(path, *rep);
    require(rftest::tallies_agree(rc, *rep), "tally disagrees with recount" + (rc.mismatch ? " at " + *rc.mismatch : ""));
  }
  require(rf.overall.all.accuracy() > base.overall.all.accuracy(), "RF did not improve accuracy");

  const auto expect = rftest::expected_hits(path);
  int miss_then_hit = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto [b, r] = expect.at(tasks[i].id);
    require(base.rows[i].hit == b && rf.rows[i].hit == r, "task " + tasks[i].id + " outcome differs from fixture");
    if (!b && r) ++miss_then_hit;
  }
  require(miss_then_hit > 0, "fixture has no miss-then-hit tasks");
  std::ostringstream s;
  s << "baseline " << base.overall.all.hits << "/30, RF " << rf.overall.all.hits << "/30, " << miss_then_hit
    << " miss-then-hit";
  return s.str();
}

// ---- 9 --------------------------------------------------------------------------

std::string determinism() {
  std::vector<std::string> traj;
  for (int i = 0; i < 2; ++i) {
    auto replay = ReplayBackend::load(rftest::data("replay/recovery_rf.ndjson"));
    const auto r = run_shop(replay, sequential(true));
    rftest::TempDir dir("accept");
    write_trajectory(r, dir.path());
    traj.push_back(rftest::slurp(dir / "trace.ndjson") + rftest::slurp(dir / "summary.json"));
  }
  require(traj[0] == traj[1], "trajectory files differ between replays");

  const auto tasks = load_grounding_tasks(rftest::data("grounding/tasks.jsonl")).tasks;
  std::vector<std::string> reports;
  for (int jobs : {1, 4}) {
    auto replay = ReplayBackend::load(rftest::data("grounding/transcript.ndjson"));
    for (bool rf : {false, true}) {
      const auto rep = run_grounding_eval(tasks, grounding_options(rf, jobs), replay, ui_tars_profile());
      reports.push_back(to_json(rep).dump(2) + grounding_trace_ndjson(rep));
    }
  }
  require(reports[0] == reports[2] && reports[1] == reports[3], "grounding reports differ between replays");
  return "trajectory and grounding outputs byte-identical";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"geometry properties", geometry},
      {"locked defaults", defaults},
      {"action parser", parser},
      {"inference accounting", accounting},
      {"image as map", image_as_map},
      {"raw prompt purity", raw_prompt_purity},
      {"end-to-end simulation", end_to_end},
      {"grounding harness", grounding},
      {"replay determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string status = "PASS", detail;
    try {
      detail = criteria[i].second();
    } catch (const std::exception& e) {
      status = "FAIL";
      detail = e.what();
      ++failed;
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << i + 1 << " " << status << " " << criteria[i].first << ": " << detail << " [" << ms
              << " ms]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
