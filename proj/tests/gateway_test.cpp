#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "regionfocus/gateway.hpp"
#include "test_support.hpp"

using namespace regionfocus;

namespace {

ChatRequest request(std::string tpl, std::string tag, std::string text, std::vector<Screenshot> images = {}) {
  ChatRequest r;
  r.template_id = std::move(tpl);
  r.tag = std::move(tag);
  r.profile = ui_tars_profile();
  Message m{"user", {Part::of_text(std::move(text))}};
  for (auto& i : images) m.parts.push_back(Part::of_image(std::move(i)));
  r.messages.push_back(std::move(m));
  return r;
}

}  // namespace

TEST(Gateway, ProfilesAreLocked) {
  EXPECT_EQ(ui_tars_profile().declared_resolution, (Dims{1440, 1440}));
  EXPECT_EQ(ui_tars_profile().dialect, Dialect::UiTarsV1);
  EXPECT_EQ(qwen_profile().declared_resolution, (Dims{2240, 1260}));
  EXPECT_EQ(qwen_profile().dialect, Dialect::ComputerUseToolCall);
}

TEST(Gateway, MockStreamsRepeatLastReply) {
  MockBackend m;
  m.on("action", "", {"a", "b"});
  EXPECT_EQ(m.complete(request("action", "native", "x")), "a");
  EXPECT_EQ(m.complete(request("action", "native", "x")), "b");
  EXPECT_EQ(m.complete(request("action", "native", "x")), "b");
  EXPECT_EQ(m.calls("action"), 3);
  EXPECT_THROW(m.complete(request("judge", "", "x")), GatewayError);
}

TEST(Gateway, MockRulesMatchInOrder) {
  auto m = MockBackend::from_json(nlohmann::json::parse(R"({"rules": [
    {"template": "action", "contains": "URL: b", "reply": "on-b"},
    {"template": "action", "tag": "region:1", "replies": ["r1"]},
    {"template": "action", "reply": "other"}
  ]})"));
  EXPECT_EQ(m.complete(request("action", "native", "URL: b")), "on-b");
  EXPECT_EQ(m.complete(request("action", "region:1", "URL: a")), "r1");
  EXPECT_EQ(m.complete(request("action", "region:2", "URL: a")), "other");
  EXPECT_THROW(MockBackend::from_json(nlohmann::json::parse(R"({"rules": [{"template": "x"}]})")), GatewayError);
}

TEST(Gateway, MockLoadReportsPath) {
  rftest::TempDir dir("mock");
  std::ofstream(dir / "bad.json") << "{";
  try {
    MockBackend::load(dir / "bad.json");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
  }
  EXPECT_THROW(MockBackend::load(dir / "missing.json"), GatewayError);
}

TEST(Gateway, ImageBudgetIsEnforced) {
  MockBackend m;
  m.on("", "", {"ok"});
  std::vector<Screenshot> five(5, Screenshot::filled({2, 2}, {}));
  EXPECT_THROW(m.complete(request("action", "", "x", five)), ContextLimitError);
  five.pop_back();
  EXPECT_EQ(m.complete(request("action", "", "x", five)), "ok");
}

TEST(Gateway, DigestCoversTextImagesAndProfile) {
  const auto a = request("action", "native", "x", {Screenshot::filled({2, 2}, {1, 1, 1})});
  auto b = a;
  b.tag = "region:3";  // routing only
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), request("action", "native", "y", {Screenshot::filled({2, 2}, {1, 1, 1})}).digest());
  EXPECT_NE(a.digest(), request("action", "native", "x", {Screenshot::filled({2, 2}, {1, 1, 2})}).digest());
  EXPECT_NE(a.digest(), request("focal", "native", "x", {Screenshot::filled({2, 2}, {1, 1, 1})}).digest());
  b.profile = qwen_profile();
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Gateway, RecordThenReplay) {
  rftest::TempDir dir("record");
  MockBackend m;
  m.on("action", "", {"first", "second"});
  m.on("judge", "", {"CORRECT"});
  {
    RecordingBackend rec(m, dir / "t.ndjson");
    EXPECT_EQ(rec.complete(request("action", "", "same")), "first");
    EXPECT_EQ(rec.complete(request("action", "", "same")), "second");
    EXPECT_EQ(rec.complete(request("judge", "", "j")), "CORRECT");
    EXPECT_EQ(rec.entries().size(), 3u);
  }
  auto replay = ReplayBackend::load(dir / "t.ndjson");
  // Queues are per digest, so the judge can be asked first.
  EXPECT_EQ(replay.complete(request("judge", "", "j")), "CORRECT");
  EXPECT_EQ(replay.complete(request("action", "", "same")), "first");
  EXPECT_EQ(replay.complete(request("action", "", "same")), "second");
  EXPECT_THROW(replay.complete(request("action", "", "same")), ReplayMiss);
  try {
    replay.complete(request("action", "", "never"));
    FAIL();
  } catch (const ReplayMiss& e) {
    EXPECT_EQ(e.digest(), request("action", "", "never").digest());
  }
}

TEST(Gateway, TranscriptLoadErrors) {
  rftest::TempDir dir("transcript");
  std::ofstream(dir / "t.ndjson") << "{\"kind\":\"meta\"}\nnot json\n";
  try {
    load_transcript(dir / "t.ndjson");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(Gateway, ConcurrentStreamsStayDeterministic) {
  MockBackend m;
  for (int i = 0; i < 8; ++i) m.on("action", "region:" + std::to_string(i), {"r" + std::to_string(i)});
  CountingBackend counting(m);
  std::vector<std::string> got(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] { got[i] = counting.complete(request("action", "region:" + std::to_string(i), "x")); });
  for (auto& t : threads) t.join();
  for (int i = 0; i < 8; ++i) EXPECT_EQ(got[i], "r" + std::to_string(i));
  EXPECT_EQ(counting.count("action"), 8);
  EXPECT_EQ(counting.requests().size(), 8u);
}
