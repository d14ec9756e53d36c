#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "icr/syntax.hpp"

namespace icr::detail {

enum class Tok { Ident, Keyword, Number, String, Op, Newline, Indent, Dedent, End };

struct CodeToken {
  Tok kind;
  std::string text;
  bool glued = false;  // no whitespace between this token and the previous one
};

enum class Family { Brace, Indent };

struct LexResult {
  std::vector<CodeToken> tokens;  // always terminated by End
  bool ok = true;                 // false on unterminated strings/comments or bad indentation
};

LexResult lex_code(std::string_view src, Family family);

TreeNode parse_brace(const std::vector<CodeToken>& tokens);
TreeNode parse_indent(const std::vector<CodeToken>& tokens);

}  // namespace icr::detail
