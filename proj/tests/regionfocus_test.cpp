#include <gtest/gtest.h>

#include "printers.hpp"
#include "regionfocus/regionfocus.hpp"

using namespace regionfocus;

namespace {

// Replies are pixels of whatever image the model was shown.
BackendProfile pixel_profile() {
  auto p = ui_tars_profile();
  p.space = CoordinateSpace::Image;
  return p;
}

const Screenshot kBase = Screenshot::filled({1000, 1000}, {230, 230, 230});

std::string click(int x, int y) {
  return "Thought: t\nAction: click(start_box='<|box_start|>(" + std::to_string(x) + "," + std::to_string(y) +
         ")<|box_end|>')";
}

FocusContext context(ModelBackend& backend) {
  FocusContext ctx;
  ctx.objective = "press the button";
  ctx.url = "https://example.test/";
  ctx.backend = &backend;
  ctx.profile = pixel_profile();
  ctx.cfg.parallel_regions = false;
  return ctx;
}

// Focal (500,500) on 1000x1000 with the default ratios gives
//   0: (250,250)-(750,750) x2     1: (350,350)-(650,650) x10/3
//   2: (300,100)-(700,900) x1.25  3: (100,300)-(900,700) x1.25
// Each script below is written against those boxes.
MockBackend three_candidate_mock(const std::string& aggregate_reply) {
  MockBackend m;
  m.on("focal", "", {"(500, 500)"});
  m.on("action", "region:0", {click(500, 500)});    // -> (500,500)
  m.on("action", "region:1", {click(500, 500)});    // -> (500,500), duplicate
  m.on("action", "region:2", {click(250, 250)});    // -> (500,300)
  m.on("action", "region:3", {"Action: type(content='hello')"});
  m.on("aggregate", "", {aggregate_reply});
  return m;
}

}  // namespace

TEST(Trigger, NoEffectFromIdenticalFrames) {
  FocusConfig cfg;
  const auto d = evaluate_trigger(&kBase, &kBase, {Action::click({1, 1})}, std::nullopt, cfg);
  EXPECT_TRUE(d.fired);
  EXPECT_EQ(d.cause, TriggerCause::NoEffect);
  // Only coordinate actions count as ineffective.
  EXPECT_FALSE(evaluate_trigger(&kBase, &kBase, {Action::type("x")}, std::nullopt, cfg).fired);
  const auto other = Screenshot::filled({1000, 1000}, {0, 0, 0});
  EXPECT_FALSE(evaluate_trigger(&kBase, &other, {Action::click({1, 1})}, std::nullopt, cfg).fired);
}

TEST(Trigger, RepeatedActionWindow) {
  FocusConfig cfg;
  const auto other = Screenshot::filled({1000, 1000}, {0, 0, 0});
  const std::vector<Action> three(3, Action::type("a"));
  auto d = evaluate_trigger(&kBase, &other, three, std::nullopt, cfg);
  EXPECT_EQ(d.cause, TriggerCause::RepeatedAction);
  EXPECT_FALSE(evaluate_trigger(&kBase, &other, {Action::type("a"), Action::type("a")}, std::nullopt, cfg).fired);
  EXPECT_FALSE(
      evaluate_trigger(&kBase, &other, {Action::type("b"), Action::type("a"), Action::type("a")}, std::nullopt, cfg)
          .fired);
}

TEST(Trigger, JudgeVerdicts) {
  FocusConfig cfg;
  EXPECT_EQ(evaluate_trigger(nullptr, nullptr, {Action::click({1, 1})}, JudgeVerdict::Incorrect, cfg).cause,
            TriggerCause::JudgeIncorrect);
  EXPECT_FALSE(evaluate_trigger(nullptr, nullptr, {Action::click({1, 1})}, JudgeVerdict::Correct, cfg).fired);
  EXPECT_FALSE(evaluate_trigger(nullptr, nullptr, {Action::click({1, 1})}, JudgeVerdict::Ambiguous, cfg).fired);
  cfg.ambiguous_triggers = true;
  EXPECT_TRUE(evaluate_trigger(nullptr, nullptr, {Action::click({1, 1})}, JudgeVerdict::Ambiguous, cfg).fired);
}

TEST(Trigger, PriorityAndCap) {
  FocusConfig cfg;
  const std::vector<Action> three(3, Action::click({1, 1}));
  auto d = evaluate_trigger(&kBase, &kBase, three, JudgeVerdict::Incorrect, cfg);
  EXPECT_EQ(d.cause, TriggerCause::NoEffect);
  d = evaluate_trigger(nullptr, nullptr, three, JudgeVerdict::Incorrect, cfg);
  EXPECT_EQ(d.cause, TriggerCause::RepeatedAction);
  d = evaluate_trigger(&kBase, &kBase, three, std::nullopt, cfg, cfg.max_triggers_per_state);
  EXPECT_FALSE(d.fired);
  EXPECT_NE(d.evidence.find("suppressed no_effect"), std::string::npos);
  EXPECT_TRUE(evaluate_trigger(&kBase, &kBase, three, std::nullopt, cfg, cfg.max_triggers_per_state - 1).fired);
}

TEST(History, RefreshClearsOnlyOnEffect) {
  FocusHistory h;
  h.add({1, 1});
  h.add({2, 2});
  EXPECT_EQ(h.stars[1].label, 2);
  EXPECT_EQ(refresh_history(h, {0.0, true}, 7).stars.size(), 2u);
  const auto cleared = refresh_history(h, {0.2, false}, 7);
  EXPECT_TRUE(cleared.empty());
  EXPECT_EQ(cleared.page_digest, 7u);
}

TEST(Focal, RetriesNearHistoryStar) {
  MockBackend m;
  m.on("focal", "", {"(302, 401)", "(600, 100)"});
  auto ctx = context(m);
  FocusHistory h;
  h.add({300, 400});
  FocusTrace trace;
  EXPECT_EQ(propose_focal(ctx, kBase, h, trace), (Point{600, 100}));
  ASSERT_EQ(trace.inferences.size(), 2u);
  EXPECT_FALSE(trace.inferences[0].error.empty());
  EXPECT_EQ(m.calls("focal"), 2);
}

TEST(Focal, ExhaustsRetryBudget) {
  MockBackend m;
  m.on("focal", "", {"(305, 395)"});
  auto ctx = context(m);
  FocusHistory h;
  h.add({300, 400});
  try {
    run_focus(ctx, kBase, h);
    FAIL();
  } catch (const FocalExhausted& e) {
    EXPECT_EQ(e.trace().count("focal"), ctx.cfg.focal_retry_budget);
    EXPECT_EQ(e.history().stars.size(), 1u);
  }
}

TEST(Focal, UnparsableReplyIsFocusError) {
  MockBackend m;
  m.on("focal", "", {"somewhere on the left"});
  auto ctx = context(m);
  EXPECT_THROW(run_focus(ctx, kBase, {}), FocusError);
}

TEST(Candidates, DedupLabelsAndRebase) {
  auto m = three_candidate_mock("2");
  auto ctx = context(m);
  FocusTrace trace;
  const auto cands = predict_candidates(ctx, kBase, propose_regions({500, 500}, kBase.dims(), ctx.cfg.ratios), trace);
  ASSERT_EQ(cands.size(), 3u);
  EXPECT_EQ(cands[0].action, Action::click({500, 500}));
  EXPECT_EQ(cands[0].landmark_label, 1);
  EXPECT_EQ(cands[1].action, Action::click({500, 300}));
  EXPECT_EQ(cands[1].landmark_label, 2);
  EXPECT_EQ(cands[1].ratio_index, 2u);
  EXPECT_EQ(cands[2].action, Action::type("hello"));
  EXPECT_FALSE(cands[2].landmark_label);
  EXPECT_EQ(trace.count("action"), 4);
}

TEST(Candidates, DedupRadiusOracle) {
  // Pairwise distances against the first kept candidate, checked by hand:
  // 3 px apart merges, 5 px apart does not.
  MockBackend m;
  m.on("action", "region:0", {click(0, 0)});
  m.on("action", "region:1", {click(3, 0)});
  m.on("action", "region:2", {click(5, 0)});
  auto ctx = context(m);
  FocusTrace trace;
  const std::vector<RegionBox> boxes(3, RegionBox{100, 100, 500, 500, std::nullopt});
  const auto cands = predict_candidates(ctx, kBase, boxes, trace);
  // Scale 2.5 on a 400 px box: region px 3 -> 1 full px, 5 -> 2 full px.
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].action, Action::click({100, 100}));
}

TEST(Candidates, FinishedIsUnlabeledAndParseErrorsDrop) {
  MockBackend m;
  m.on("action", "region:0", {"Action: finished()"});
  m.on("action", "region:1", {"gibberish"});
  auto ctx = context(m);
  FocusTrace trace;
  const std::vector<RegionBox> boxes(2, RegionBox{0, 0, 500, 500, std::nullopt});
  const auto cands = predict_candidates(ctx, kBase, boxes, trace);
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].action.kind, ActionKind::Finished);
  EXPECT_FALSE(cands[0].landmark_label);
  EXPECT_FALSE(trace.inferences[1].error.empty());
}

TEST(Candidates, AllUnparsableIsEmptyCandidates) {
  MockBackend m;
  m.on("focal", "", {"(500, 500)"});
  m.on("action", "", {"nope"});
  auto ctx = context(m);
  try {
    run_focus(ctx, kBase, {});
    FAIL();
  } catch (const EmptyCandidates& e) {
    EXPECT_EQ(e.trace().count("action"), 4);
    EXPECT_EQ(e.history().stars.size(), 1u);
  }
}

TEST(Candidates, ParallelMatchesSequential) {
  auto a = three_candidate_mock("2");
  auto b = three_candidate_mock("2");
  auto seq = context(a);
  auto par = context(b);
  par.cfg.parallel_regions = true;
  const auto r1 = run_focus(seq, kBase, {});
  const auto r2 = run_focus(par, kBase, {});
  EXPECT_EQ(r1.action, r2.action);
  EXPECT_EQ(nlohmann::json(to_json(r1.trace)).dump(), nlohmann::json(to_json(r2.trace)).dump());
}

TEST(Aggregate, PicksLabel) {
  auto m = three_candidate_mock("2");
  auto ctx = context(m);
  const auto r = run_focus(ctx, kBase, {});
  EXPECT_EQ(r.action, Action::click({500, 300}));
  EXPECT_EQ(r.trace.chosen, 2);
  EXPECT_FALSE(r.trace.fallback);
  // Textual options follow the starred ones.
  auto m3 = three_candidate_mock("3");
  auto ctx3 = context(m3);
  EXPECT_EQ(run_focus(ctx3, kBase, {}).action, Action::type("hello"));
}

TEST(Aggregate, OutOfRangeFallsBackToFirstRatio) {
  auto m = three_candidate_mock("7");
  auto ctx = context(m);
  const auto r = run_focus(ctx, kBase, {});
  EXPECT_TRUE(r.trace.fallback);
  EXPECT_FALSE(r.trace.chosen);
  EXPECT_EQ(r.action, Action::click({500, 500}));
}

TEST(Aggregate, SnapshotStarsCandidates) {
  auto m = three_candidate_mock("1");
  CountingBackend counting(m);
  auto ctx = context(counting);
  run_focus(ctx, kBase, {});
  for (const auto& req : counting.requests()) {
    if (req.template_id != "aggregate") continue;
    ASSERT_TRUE(req.annotation);
    ASSERT_EQ(req.annotation->marks.size(), 2u);
    EXPECT_EQ(req.annotation->marks[0].at, (Point{500, 500}));
    EXPECT_EQ(req.annotation->marks[1].at, (Point{500, 300}));
    EXPECT_EQ(req.annotation->base_digest, kBase.digest());
    EXPECT_NE(req.text().find("3. type("), std::string::npos);
  }
}

TEST(Accounting, OneFourOne) {
  auto m = three_candidate_mock("1");
  auto ctx = context(m);
  const auto t = run_focus(ctx, kBase, {}).trace;
  EXPECT_EQ(t.focal_inferences(), 1);
  EXPECT_EQ(t.region_inferences(), 4);
  EXPECT_EQ(t.aggregation_inferences(), 1);
  EXPECT_EQ(t.inferences.size(), 6u);
}

TEST(Accounting, OneFourZeroWhenDeduplicated) {
  MockBackend m;
  m.on("focal", "", {"(500, 500)"});
  m.on("action", "region:0", {click(500, 500)});
  m.on("action", "region:1", {click(500, 500)});
  m.on("action", "region:2", {click(200, 400)});  // -> (460,420)
  m.on("action", "region:3", {click(400, 200)});  // -> (420,460)
  auto ctx = context(m);
  ctx.cfg.dedup_radius = 200;
  const auto r = run_focus(ctx, kBase, {});
  EXPECT_EQ(r.trace.candidates.size(), 1u);
  EXPECT_EQ(r.trace.focal_inferences(), 1);
  EXPECT_EQ(r.trace.region_inferences(), 4);
  EXPECT_EQ(r.trace.aggregation_inferences(), 0);
  EXPECT_EQ(m.calls("aggregate"), 0);
}

TEST(Map, SecondRoundAddsOneStar) {
  MockBackend m;
  m.on("focal", "", {"(500, 500)", "(100, 100)"});
  m.on("action", "", {click(10, 10)});
  m.on("aggregate", "", {"1"});
  CountingBackend counting(m);
  auto ctx = context(counting);
  const auto r1 = run_focus(ctx, kBase, {});
  ASSERT_EQ(r1.updated_history.stars.size(), 1u);
  EXPECT_EQ(r1.updated_history.stars[0].at, (Point{500, 500}));
  const auto r2 = run_focus(ctx, kBase, r1.updated_history);
  EXPECT_EQ(r2.updated_history.stars.size(), 2u);
  EXPECT_EQ(r2.updated_history.stars[1].label, 2);

  std::vector<ChatRequest> focal;
  for (const auto& q : counting.requests())
    if (q.template_id == "focal") focal.push_back(q);
  ASSERT_EQ(focal.size(), 2u);
  EXPECT_EQ(focal[0].image_digests()[0], kBase.digest_hex());
  EXPECT_EQ(focal[0].annotation->marks.size(), 0u);
  EXPECT_EQ(focal[1].annotation->marks.size(), 1u);
  EXPECT_EQ(focal[1].image_digests()[0], draw_landmarks(kBase, r1.updated_history.stars).digest_hex());
}

TEST(Proposers, DirectRegionSkipsFocal) {
  MockBackend m;
  m.on("region", "", {"(100, 100), (300, 200)"});
  m.on("action", "", {click(0, 0)});
  auto ctx = context(m);
  DirectRegionProposer direct;
  const auto r = run_focus(ctx, kBase, {}, &direct);
  ASSERT_EQ(r.trace.regions.size(), 1u);
  EXPECT_TRUE(r.trace.regions[0].same_rect({100, 100, 301, 201, std::nullopt}));
  EXPECT_EQ(r.action, Action::click({100, 100}));
  EXPECT_EQ(r.trace.focal_inferences(), 1);
  EXPECT_EQ(r.trace.region_inferences(), 1);
  EXPECT_EQ(m.calls("focal"), 0);
}

TEST(Proposers, SegmentationFallsBackToRatios) {
  struct Fixed : PointSegmenter {
    std::optional<RegionBox> box;
    std::optional<RegionBox> segment(const Screenshot&, Point) override { return box; }
  };
  auto seg = std::make_shared<Fixed>();
  SegmentationProposer proposer(seg);
  MockBackend m;
  auto ctx = context(m);
  FocusTrace t;
  EXPECT_EQ(proposer.propose(ctx, kBase, Point{500, 500}, t).size(), 4u);
  seg->box = RegionBox{10, 10, 50, 50, std::nullopt};
  const auto boxes = proposer.propose(ctx, kBase, Point{500, 500}, t);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_TRUE(boxes[0].same_rect(*seg->box));
}

TEST(Config, RejectsNonsense) {
  FocusConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.ratios.clear();
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.dedup_radius = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
}
