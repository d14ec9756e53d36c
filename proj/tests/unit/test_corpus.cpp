#include "doctest.h"
#include "helpers.hpp"
#include "icr/corpus.hpp"

using namespace icr;

TEST_CASE("load_dataset reads records in order") {
  const auto dir = testutil::scratch("corpus_load");
  const auto path = testutil::write(dir / "d.jsonl",
                                    R"({"id":"a","input":"x = 1","output":"set x"})"
                                    "\n\n"
                                    R"({"input":"y = 2","output":"set y"})"
                                    "\n");
  const auto s = load_dataset(path, "t");
  REQUIRE(s.size() == 2);
  CHECK(s[0].sample_id == "a");
  CHECK(s[0].task_id == "t");
  CHECK(s[1].sample_id == "t-000001");
  CHECK(s[1].output == "set y");
  CHECK(load_dataset(path, "t", true, "-test")[1].sample_id == "t-test-000001");
}

TEST_CASE("empty dataset gives an empty sequence") {
  CHECK(parse_dataset("", "t").empty());
}

TEST_CASE("missing field names the line") {
  const std::string text = R"({"input":"a","output":"b"})"
                           "\n"
                           R"({"input":"c","output":"d"})"
                           "\n"
                           R"({"input":"e"})"
                           "\n";
  CHECK_THROWS_WITH_AS(parse_dataset(text, "t"), "line 3: missing field output", DatasetError);
  CHECK(parse_dataset(text, "t", false).size() == 3);
  CHECK_THROWS_WITH_AS(parse_dataset("{not json\n", "t"), "line 1: malformed record", DatasetError);
}

TEST_CASE("dataset round trip") {
  std::vector<Sample> s = {{"a", "t", "line1\nline2 \"q\"", "out \xc3\xa9"}, {"b", "t", "in", "o"}};
  CHECK(parse_dataset(serialize_dataset(s), "t") == s);
}

TEST_CASE("query text joins instruction and input") {
  TaskSpec task("t", "Comment on the code.");
  const auto q = build_query(task, {"s", "t", "int f(){}", "gold"});
  CHECK(q.text == "Comment on the code.\nint f(){}");
  REQUIRE(q.gold);
  CHECK(*q.gold == "gold");
  CHECK_FALSE(q.masked);
}

TEST_CASE("mask_query drops gold once") {
  TaskSpec task("t", "Do it.");
  const auto q = build_query(task, {"s", "t", "in", "gold"});
  const auto m = mask_query(q);
  CHECK(m.text == q.text);
  CHECK_FALSE(m.gold.has_value());
  CHECK(m.masked);
  CHECK_THROWS(mask_query(m));
}

TEST_CASE("example doc text and exemplar rendering") {
  const auto d = make_example_doc({"s", "t", "in", "out"});
  CHECK(d.text == "in\nout");
  CHECK(render_exemplar({}, "in", "out") == d.text);
  CHECK(render_exemplar({"Input: ", "Output: "}, "in", "out") == "Input: in\nOutput: out");
  CHECK(render_input({"Input: ", "Output: "}, "in") == "Input: in\nOutput: ");
}

TEST_CASE("task registry parses kinds and templates") {
  const auto reg = TaskRegistry::from_json_text(R"({"tasks":[
    {"task_id":"sum","instruction":"Summarize.","input_kind":"code:java","output_kind":"natural",
     "template":{"input_prefix":"Code: ","output_prefix":"Summary: "}},
    {"task_id":"gen","instruction":"Write code."}]})");
  CHECK(reg.ids() == std::vector<std::string>{"gen", "sum"});
  const auto& t = reg.at("sum");
  CHECK(t.input_kind() == SegmentKind::code("java"));
  CHECK(t.output_kind().str() == "natural");
  CHECK(t.exemplar_template().output_prefix == "Summary: ");
  CHECK(TaskRegistry::from_json_text(reg.to_json_text()).at("sum").input_kind() == SegmentKind::code("java"));
  CHECK_THROWS_AS(reg.at("nope"), DatasetError);
  CHECK_THROWS_AS(TaskRegistry::from_json_text(R"({"tasks":[{"task_id":"x"}]})"), DatasetError);
  CHECK_THROWS_AS(SegmentKind::parse("codez"), DatasetError);
}
