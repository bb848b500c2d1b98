#include <gtest/gtest.h>

#include "properties.hpp"
#include "printers.hpp"
#include "regionfocus/actions.hpp"

using namespace regionfocus;

namespace {

constexpr auto kUi = Dialect::UiTarsV1;
constexpr auto kTool = Dialect::ComputerUseToolCall;

}  // namespace

TEST(Actions, UiTarsClickWithThought) {
  const auto t = parse("Thought: click the search icon\nAction: click(start_box='<|box_start|>(123,456)<|box_end|>')", kUi);
  EXPECT_EQ(t.action, Action::click({123, 456}));
  ASSERT_TRUE(t.thought);
  EXPECT_EQ(*t.thought, "click the search icon");
}

TEST(Actions, ToolCallClick) {
  const auto t = parse(
      R"(<tool_call>{"name": "computer_use", "arguments": {"action": "left_click", "coordinate": [100, 200]}}</tool_call>)",
      kTool);
  EXPECT_EQ(t.action, Action::click({100, 200}));
  EXPECT_FALSE(t.thought);
}

TEST(Actions, GrammarDocExamplesAllParse) {
  const auto examples = rftest::grammar_examples(REGIONFOCUS_GRAMMAR_DOC);
  ASSERT_GE(examples.size(), 17u);
  int ui = 0, tool = 0;
  for (const auto& e : examples) {
    const bool is_tool = e.find("computer_use") != std::string::npos;
    EXPECT_NO_THROW(parse(e, is_tool ? kTool : kUi)) << e;
    (is_tool ? tool : ui)++;
  }
  EXPECT_EQ(ui, 10);
  EXPECT_EQ(tool, 7);
}

TEST(Actions, UiTarsVariants) {
  EXPECT_EQ(parse("Action: drag(start_box='<|box_start|>(1,2)<|box_end|>', end_box='<|box_start|>(3,4)<|box_end|>')", kUi)
                .action,
            Action::drag({1, 2}, {3, 4}));
  // The trailing backslash-n submit marker is kept verbatim.
  EXPECT_EQ(parse("Action: type(content='kettle\\n')", kUi).action, Action::type("kettle\\n"));
  EXPECT_EQ(parse("Action: type(content='it\\'s')", kUi).action, Action::type("it's"));
  EXPECT_EQ(parse("Action: scroll(direction='down')", kUi).action,
            Action::scroll(std::nullopt, ScrollDirection::Down));
  EXPECT_EQ(parse("Action: hotkey(key='ctrl c')", kUi).action, Action::hotkey("ctrl c"));
  // Bare call without the marker.
  EXPECT_EQ(parse("finished()", kUi).action, Action::simple(ActionKind::Finished));
}

TEST(Actions, UiTarsErrors) {
  const auto err = [](const std::string& s) {
    try {
      parse(s, kUi);
    } catch (const ParseError& e) {
      return std::string(e.reason());
    }
    return std::string("parsed");
  };
  EXPECT_NE(err("Action: clikc(start_box='(1,2)')").find("unknown action"), std::string::npos);
  EXPECT_NE(err("Action: click(start_box='(1,2)')\nAction: wait()").find("multiple"), std::string::npos);
  EXPECT_NE(err("Action: click(start_box='(1,2)') wait()").find("multiple"), std::string::npos);
  EXPECT_NE(err("Action: click()").find("missing argument"), std::string::npos);
  EXPECT_NE(err("").find("no action"), std::string::npos);
  EXPECT_EQ(err("Action: click(start_box='(1,2)', foo='x')"), "click: unexpected argument 'foo'");
}

TEST(Actions, ToolCallScrollSignAndThought) {
  auto t = parse("scrolling now\n<tool_call>{\"name\":\"computer_use\",\"arguments\":{\"action\":\"scroll\",\"pixels\":-300}}</tool_call>",
                 kTool);
  EXPECT_EQ(t.action, Action::scroll(std::nullopt, ScrollDirection::Down, 300));
  EXPECT_EQ(*t.thought, "scrolling now");
  EXPECT_NE(serialize(Action::scroll(Point{1, 1}, ScrollDirection::Down, 40), kTool).find("\"pixels\":-40"),
            std::string::npos);
  // Arguments may arrive as a JSON string.
  t = parse(R"({"name":"computer_use","arguments":"{\"action\":\"mouse_move\",\"coordinate\":[4,5]}"})", kTool);
  EXPECT_EQ(t.action, Action::at(ActionKind::MouseMove, {4, 5}));
}

TEST(Actions, ToolCallErrors) {
  EXPECT_THROW(parse("<tool_call>{\"name\":\"computer_use\"", kTool), ParseError);
  EXPECT_THROW(parse("<tool_call>{\"name\":\"other\",\"arguments\":{}}</tool_call>", kTool), ParseError);
  EXPECT_THROW(parse(R"(<tool_call>{"name":"computer_use","arguments":{"action":"left_click","coordinate":[1]}}</tool_call>)", kTool),
               ParseError);
  EXPECT_THROW(parse(R"(<tool_call>{"name":"computer_use","arguments":{"action":"wait"}}</tool_call>
<tool_call>{"name":"computer_use","arguments":{"action":"wait"}}</tool_call>)", kTool),
               ParseError);
  EXPECT_THROW(parse("no call here", kTool), ParseError);
}

TEST(Actions, SerializeCanonicalForms) {
  EXPECT_EQ(serialize(Action::click({5, 7}), kUi), "Action: click(start_box='<|box_start|>(5,7)<|box_end|>')");
  EXPECT_EQ(serialize(Action::click({5, 7}), kTool),
            "<tool_call>\n{\"name\":\"computer_use\",\"arguments\":{\"action\":\"left_click\",\"coordinate\":[5,7]}}\n</tool_call>");
  EXPECT_THROW(serialize(Action::at(ActionKind::MouseMove, {1, 1}), kUi), DomainError);
  EXPECT_THROW(serialize(Action::scroll(std::nullopt, ScrollDirection::Left, 5), kTool), DomainError);
}

TEST(Actions, ValidateInvariants) {
  EXPECT_NO_THROW(validate(Action::click({0, 0})));
  EXPECT_THROW(validate(Action::simple(ActionKind::Click)), DomainError);
  EXPECT_THROW(validate(Action::click({-1, 0})), DomainError);
  Action a = Action::simple(ActionKind::Finished);
  a.start = Point{1, 1};
  EXPECT_THROW(validate(a), DomainError);
  EXPECT_THROW(validate(Action::simple(ActionKind::Terminate)), DomainError);
}

TEST(Actions, CoordinateActions) {
  EXPECT_TRUE(is_coordinate_action(Action::click({1, 1})));
  EXPECT_TRUE(is_coordinate_action(Action::drag({1, 1}, {2, 2})));
  EXPECT_TRUE(is_coordinate_action(Action::scroll(Point{1, 1}, ScrollDirection::Up)));
  EXPECT_FALSE(is_coordinate_action(Action::scroll(std::nullopt, ScrollDirection::Up)));
  EXPECT_FALSE(is_coordinate_action(Action::type("x")));
  EXPECT_FALSE(is_coordinate_action(Action::simple(ActionKind::Finished)));
}

TEST(Actions, RebaseMapsEveryPoint) {
  const auto spec = zoom_spec({1344, 0, 2240, 1008, std::nullopt}, {2240, 1260});
  ASSERT_DOUBLE_EQ(spec.scale, 1.25);
  EXPECT_EQ(rebase(Action::drag({100, 100}, {200, 200}), spec), Action::drag({1424, 80}, {1504, 160}));
  EXPECT_EQ(rebase(Action::type("x"), spec), Action::type("x"));
  const auto s = rebase(Action::scroll(Point{0, 0}, ScrollDirection::Down), spec);
  EXPECT_EQ(*s.start, (Point{1344, 0}));
  EXPECT_EQ(s.direction, ScrollDirection::Down);
}

TEST(Actions, DescribeIsDialectFree) {
  EXPECT_EQ(describe(Action::click({3, 4})), describe(parse(serialize(Action::click({3, 4}), kTool), kTool).action));
  EXPECT_NE(describe(Action::click({3, 4})), describe(Action::click({3, 5})));
}

TEST(Actions, SupportMatrix) {
  EXPECT_FALSE(dialect_supports(kUi, ActionKind::MouseMove));
  EXPECT_FALSE(dialect_supports(kUi, ActionKind::Terminate));
  EXPECT_FALSE(dialect_supports(kTool, ActionKind::Finished));
  EXPECT_TRUE(dialect_supports(kTool, ActionKind::Drag));
}

TEST(Actions, RoundTripUiTars) {
  const auto r = rftest::roundtrip_property(kUi, 1000, 11);
  EXPECT_TRUE(r.ok()) << *r.failure;
}

TEST(Actions, RoundTripToolCall) {
  const auto r = rftest::roundtrip_property(kTool, 1000, 12);
  EXPECT_TRUE(r.ok()) << *r.failure;
}

TEST(Actions, FuzzNeverEscapesParseError) {
  const auto r = rftest::fuzz_property(rftest::grammar_examples(REGIONFOCUS_GRAMMAR_DOC), 100000, 13);
  EXPECT_TRUE(r.ok()) << *r.failure;
  EXPECT_EQ(r.cases, 100000);
}
