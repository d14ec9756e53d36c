#include <array>
#include <cctype>
#include <set>

#include "syntax_internal.hpp"

namespace icr::detail {

namespace {

const std::set<std::string, std::less<>> kBraceKeywords = {
    "if",        "else",     "while",   "do",        "for",        "return",  "break",
    "continue",  "throw",    "throws",  "try",       "catch",      "finally", "class",
    "interface", "enum",     "struct",  "extends",   "implements", "new",     "switch",
    "case",      "default",  "true",    "false",     "null",       "nullptr", "this",
    "super",     "static",   "public",  "private",   "protected",  "final",   "abstract",
    "import",    "package",  "instanceof", "const", "var", "let", "function", "synchronized",
    "native",    "transient", "volatile", "undefined", "typeof", "delete", "virtual", "inline",
    "namespace", "using",    "template", "typename", "operator", "goto", "sizeof"};

const std::set<std::string, std::less<>> kIndentKeywords = {
    "def",   "class",  "if",     "elif",     "else",  "while", "for",    "in",     "return",
    "pass",  "break",  "continue", "import", "from",  "as",    "with",   "try",    "except",
    "finally", "raise", "lambda", "and",     "or",    "not",   "is",     "None",   "True",
    "False", "yield",  "global", "nonlocal", "assert", "del",  "async",  "await"};

// Longest match first.
const std::array<std::string_view, 35> kOps = {
    ">>>=", "<<=", ">>=", "**=", "//=", "...", ">>>", "->", "::", "==", "!=", "<=",
    ">=",   "&&",  "||",  "++",  "--",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=",
    "^=",   "<<",  ">>",  "**",  "//",  ":=",  "=>",  "@=", "<>", "?.", "??"};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

class Lexer {
 public:
  Lexer(std::string_view src, Family family) : src_(src), family_(family) {}

  LexResult run() {
    if (family_ == Family::Indent) indents_.push_back(0);
    at_line_start_ = true;
    while (pos_ < src_.size()) {
      if (family_ == Family::Indent && at_line_start_ && depth_ == 0) {
        if (!handle_indentation()) continue;
      }
      if (pos_ >= src_.size()) break;
      char c = src_[pos_];
      if (c == '\n') {
        ++pos_;
        glued_ = false;
        if (family_ == Family::Indent && depth_ == 0) {
          if (!out_.tokens.empty() && out_.tokens.back().kind != Tok::Newline &&
              out_.tokens.back().kind != Tok::Indent && out_.tokens.back().kind != Tok::Dedent)
            emit(Tok::Newline, "");
          at_line_start_ = true;
        }
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
        ++pos_;
        glued_ = false;
        continue;
      }
      if (family_ == Family::Indent && c == '\\' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
        pos_ += 2;
        continue;
      }
      if (skip_comment()) {
        glued_ = false;
        continue;
      }
      lex_token();
    }
    if (family_ == Family::Indent) {
      if (!out_.tokens.empty() && out_.tokens.back().kind != Tok::Newline &&
          out_.tokens.back().kind != Tok::Dedent)
        emit(Tok::Newline, "");
      while (indents_.size() > 1) {
        indents_.pop_back();
        emit(Tok::Dedent, "");
      }
    }
    if (depth_ != 0) out_.ok = false;
    emit(Tok::End, "");
    return std::move(out_);
  }

 private:
  void emit(Tok k, std::string text) {
    out_.tokens.push_back({k, std::move(text), glued_});
    glued_ = true;
  }

  // Returns false when the line was blank or comment-only and has been consumed.
  bool handle_indentation() {
    std::size_t width = 0;
    std::size_t p = pos_;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t')) {
      width += src_[p] == '\t' ? 8 - (width % 8) : 1;
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    if (src_[p] == '\n' || src_[p] == '\r' || src_[p] == '#') {
      while (p < src_.size() && src_[p] != '\n') ++p;
      pos_ = p < src_.size() ? p + 1 : p;
      return false;
    }
    pos_ = p;
    at_line_start_ = false;
    if (width > indents_.back()) {
      indents_.push_back(width);
      emit(Tok::Indent, "");
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        emit(Tok::Dedent, "");
      }
      if (width != indents_.back()) out_.ok = false;
    }
    return true;
  }

  bool skip_comment() {
    if (family_ == Family::Indent) {
      if (src_[pos_] != '#') return false;
      while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      return true;
    }
    if (src_[pos_] != '/' || pos_ + 1 >= src_.size()) return false;
    if (src_[pos_ + 1] == '/') {
      while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      return true;
    }
    if (src_[pos_ + 1] == '*') {
      auto end = src_.find("*/", pos_ + 2);
      if (end == std::string_view::npos) {
        out_.ok = false;
        pos_ = src_.size();
      } else {
        pos_ = end + 2;
      }
      return true;
    }
    return false;
  }

  void lex_string(std::size_t start) {
    char q = src_[pos_];
    bool triple = family_ == Family::Indent && pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    pos_ += triple ? 3 : 1;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\\') {
        pos_ += 2;
        continue;
      }
      if (!triple && c == '\n') break;
      if (c == q) {
        if (!triple) {
          ++pos_;
          emit(Tok::String, std::string(src_.substr(start, pos_ - start)));
          return;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          emit(Tok::String, std::string(src_.substr(start, pos_ - start)));
          return;
        }
      }
      ++pos_;
    }
    pos_ = std::min(pos_, src_.size());
    out_.ok = false;
    emit(Tok::String, std::string(src_.substr(start, pos_ - start)));
  }

  void lex_token() {
    const auto c = static_cast<unsigned char>(src_[pos_]);
    std::size_t start = pos_;
    if (c == '"' || c == '\'' || (c == '`' && family_ == Family::Brace)) {
      lex_string(start);
      return;
    }
    if (ident_start(c)) {
      while (pos_ < src_.size() && ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      std::string word(src_.substr(start, pos_ - start));
      if (family_ == Family::Indent && pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') &&
          word.size() <= 2 && word.find_first_not_of("rRbBuUfF") == std::string::npos) {
        lex_string(start);
        return;
      }
      const auto& kws = family_ == Family::Brace ? kBraceKeywords : kIndentKeywords;
      const Tok kind = kws.count(word) ? Tok::Keyword : Tok::Ident;
      emit(kind, std::move(word));
      return;
    }
    if (std::isdigit(c) || (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      ++pos_;
      while (pos_ < src_.size()) {
        auto d = static_cast<unsigned char>(src_[pos_]);
        if (std::isalnum(d) || d == '_' || d == '\'') {
          ++pos_;
        } else if (d == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
          ++pos_;
        } else if ((d == '+' || d == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E') &&
                   !(src_[start] == '0' && pos_ > start + 1 && (src_[start + 1] == 'x' || src_[start + 1] == 'X'))) {
          ++pos_;
        } else {
          break;
        }
      }
      emit(Tok::Number, std::string(src_.substr(start, pos_ - start)));
      return;
    }
    for (auto op : kOps) {
      // Brace languages keep '>' tokens separate so nested generic argument
      // lists close cleanly; the parser reassembles shifts from glued '>'s.
      if (family_ == Family::Brace && op.size() > 1 && op[0] == '>' && op[1] == '>') continue;
      if (src_.substr(pos_, op.size()) == op) {
        pos_ += op.size();
        emit(Tok::Op, std::string(op));
        return;
      }
    }
    ++pos_;
    if (c == '(' || c == '[' || c == '{') ++depth_;
    if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
    emit(Tok::Op, std::string(1, static_cast<char>(c)));
  }

  std::string_view src_;
  Family family_;
  std::size_t pos_ = 0;
  int depth_ = 0;
  bool at_line_start_ = true;
  bool glued_ = false;
  std::vector<std::size_t> indents_;
  LexResult out_;
};

}  // namespace

LexResult lex_code(std::string_view src, Family family) { return Lexer(src, family).run(); }

}  // namespace icr::detail
