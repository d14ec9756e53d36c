#include "icr/syntax.hpp"

#include <cctype>

#include "syntax_internal.hpp"

namespace icr {

namespace {

using detail::Family;
using detail::Tok;

class FamilyAdapter : public GrammarAdapter {
 public:
  explicit FamilyAdapter(Family family) : family_(family) {}

  TreeNode parse(std::string_view source) const override {
    auto lexed = detail::lex_code(source, family_);
    if (!lexed.ok) throw ParseError("lexical error");
    return family_ == Family::Brace ? detail::parse_brace(lexed.tokens) : detail::parse_indent(lexed.tokens);
  }

  std::vector<std::string> fallback_labels(std::string_view source) const override {
    std::vector<std::string> labels;
    for (const auto& t : detail::lex_code(source, family_).tokens) {
      switch (t.kind) {
        case Tok::Ident: labels.emplace_back("Ident"); break;
        case Tok::Number: labels.emplace_back("Num"); break;
        case Tok::String: labels.emplace_back("Str"); break;
        case Tok::Keyword:
        case Tok::Op: labels.push_back(t.text); break;
        default: break;
      }
    }
    return labels;
  }

 private:
  Family family_;
};

bool is_delimiter(char c) { return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'; }

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80; }

void serialize_into(const TreeNode& n, std::string& out) {
  if (!out.empty()) out += ' ';
  out += n.label;
  for (const auto& c : n.children) serialize_into(c, out);
}

}  // namespace

void AdapterRegistry::add(const std::string& language_tag, std::shared_ptr<const GrammarAdapter> adapter) {
  adapters_[language_tag] = std::move(adapter);
}

const GrammarAdapter* AdapterRegistry::find(const std::string& language_tag) const {
  auto it = adapters_.find(language_tag);
  return it == adapters_.end() ? nullptr : it->second.get();
}

AdapterRegistry AdapterRegistry::with_builtin() {
  AdapterRegistry reg;
  auto brace = std::make_shared<FamilyAdapter>(Family::Brace);
  auto indent = std::make_shared<FamilyAdapter>(Family::Indent);
  for (const char* tag : {"python", "py"}) reg.add(tag, indent);
  for (const char* tag : {"java", "c", "cpp", "c++", "csharp", "javascript", "js", "clike"}) reg.add(tag, brace);
  return reg;
}

const AdapterRegistry& default_adapters() {
  static const AdapterRegistry reg = AdapterRegistry::with_builtin();
  return reg;
}

SyntaxTree parse_code(std::string_view source, const std::string& language_tag, const AdapterRegistry& registry) {
  const GrammarAdapter* adapter = registry.find(language_tag);
  if (!adapter) throw std::invalid_argument("no grammar adapter registered for language '" + language_tag + "'");
  SyntaxTree tree;
  tree.source = SegmentKind::code(language_tag);
  try {
    tree.root = adapter->parse(source);
  } catch (const ParseError&) {
    tree.root = TreeNode("ROOT");
    for (auto& label : adapter->fallback_labels(source)) tree.root.children.emplace_back(std::move(label));
    tree.degraded = true;
  }
  return tree;
}

SyntaxTree parse_natural(std::string_view text) {
  SyntaxTree tree;
  tree.source = SegmentKind::natural();
  tree.root = TreeNode("ROOT");
  TreeNode chunk("CHUNK");
  auto flush = [&] {
    if (!chunk.children.empty()) tree.root.children.push_back(std::move(chunk));
    chunk = TreeNode("CHUNK");
  };
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (std::isdigit(c)) {
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        ++i;
        // decimal point between digits stays inside the number
        if (i + 1 < text.size() && (text[i] == '.' || text[i] == ',') &&
            std::isdigit(static_cast<unsigned char>(text[i + 1])))
          ++i;
      }
      chunk.children.emplace_back("NUM");
    } else if (is_word_char(c)) {
      while (i < text.size() && is_word_char(static_cast<unsigned char>(text[i]))) ++i;
      chunk.children.emplace_back("WORD");
    } else if (is_delimiter(static_cast<char>(c))) {
      flush();
      ++i;
    } else {
      chunk.children.emplace_back("SYM");
      ++i;
    }
  }
  flush();
  return tree;
}

SyntaxTree parse_segment(std::string_view text, const SegmentKind& kind, const AdapterRegistry& registry) {
  if (kind.is_code) return parse_code(text, kind.language, registry);
  return parse_natural(text);
}

SyntaxTree combine_trees(std::vector<SyntaxTree> parts) {
  SyntaxTree out;
  out.root = TreeNode("ROOT");
  out.source = SegmentKind::natural();
  for (auto& p : parts) {
    out.degraded = out.degraded || p.degraded;
    if (p.source.is_code) out.source = p.source;
    out.root.children.push_back(std::move(p.root));
  }
  return out;
}

SyntaxTree query_tree(const TaskSpec& task, const Sample& sample, const AdapterRegistry& registry) {
  std::vector<SyntaxTree> parts;
  parts.push_back(parse_natural(task.instruction()));
  parts.push_back(parse_segment(sample.input, task.input_kind(), registry));
  return combine_trees(std::move(parts));
}

SyntaxTree example_tree(const TaskSpec& task, const Sample& sample, const AdapterRegistry& registry) {
  std::vector<SyntaxTree> parts;
  parts.push_back(parse_segment(sample.input, task.input_kind(), registry));
  parts.push_back(parse_segment(sample.output, task.output_kind(), registry));
  return combine_trees(std::move(parts));
}

std::string serialize_preorder(const TreeNode& root) {
  std::string out;
  serialize_into(root, out);
  return out;
}

std::size_t node_count(const TreeNode& root) {
  std::size_t n = 1;
  for (const auto& c : root.children) n += node_count(c);
  return n;
}

}  // namespace icr
