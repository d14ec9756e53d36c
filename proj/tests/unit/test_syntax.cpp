#include "doctest.h"
#include "icr/syntax.hpp"

using namespace icr;

TEST_CASE("assignment label precedes operand labels") {
  const auto t = parse_code("x = 1", "python");
  CHECK_FALSE(t.degraded);
  const auto s = serialize_preorder(t);
  const auto assign = s.find("Assign");
  REQUIRE(assign != std::string::npos);
  CHECK(assign < s.find("Name"));
  CHECK(assign < s.find("Num"));
}

TEST_CASE("unparseable fragment falls back to a flat tree") {
  const auto t = parse_code("if (", "java");
  CHECK(t.degraded);
  CHECK(t.root.label == "ROOT");
  CHECK(t.root.children.size() == 2);
  for (const auto& c : t.root.children) CHECK(c.children.empty());
}

TEST_CASE("parsing is deterministic") {
  const std::string src = "def f(a, b):\n    if a > b:\n        return a\n    return b\n";
  CHECK(parse_code(src, "python").root == parse_code(src, "python").root);
  const std::string java = "public int max(int a, int b) { if (a > b) { return a; } return b; }";
  const auto j = parse_code(java, "java");
  CHECK_FALSE(j.degraded);
  CHECK(serialize_preorder(j) == serialize_preorder(parse_code(java, "java")));
}

TEST_CASE("unregistered language is an error") {
  CHECK_THROWS(parse_code("x", "cobol"));
}

TEST_CASE("natural text shallow parse") {
  CHECK(parse_natural("send a signal").root ==
        TreeNode("ROOT", {TreeNode("CHUNK", {TreeNode("WORD"), TreeNode("WORD"), TreeNode("WORD")})}));
  CHECK(parse_natural("").root.children.empty());
  CHECK(serialize_preorder(parse_natural("kill pid 9.")) == "ROOT CHUNK WORD WORD NUM");
  CHECK(parse_natural("first part, second part").root.children.size() == 2);
}

TEST_CASE("preorder serialization") {
  CHECK(serialize_preorder(TreeNode("ROOT")) == "ROOT");
  const TreeNode t("ROOT", {TreeNode("A", {TreeNode("B"), TreeNode("C")})});
  CHECK(serialize_preorder(t) == "ROOT A B C");
  CHECK(node_count(t) == 4);
}

TEST_CASE("label count equals node count") {
  for (const char* src : {"x = foo(bar[1], baz.qux)", "for i in range(10):\n    total += i\n", "return"}) {
    const auto t = parse_code(src, "python");
    const auto s = serialize_preorder(t);
    CHECK(static_cast<std::size_t>(std::count(s.begin(), s.end(), ' ') + 1) == node_count(t.root));
  }
}

TEST_CASE("serialization carries no lexemes") {
  const auto s = serialize_preorder(parse_code("secretName = otherName(42)", "python"));
  CHECK(s.find("secretName") == std::string::npos);
  CHECK(s.find("42") == std::string::npos);
}

TEST_CASE("query and example trees") {
  TaskSpec task("t", "Explain the code.", SegmentKind::code("python"), SegmentKind::natural());
  const Sample s{"s", "t", "a = b(c)", "calls b"};
  const auto q = query_tree(task, s);
  REQUIRE(q.root.children.size() == 2);
  CHECK(q.root.children[0] == parse_natural("Explain the code.").root);
  const auto e = example_tree(task, s);
  REQUIRE(e.root.children.size() == 2);
  CHECK(e.root.children[1] == parse_natural("calls b").root);
}
