#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "icr/corpus.hpp"

namespace icr {

struct TreeNode {
  std::string label;
  std::vector<TreeNode> children;

  TreeNode() = default;
  explicit TreeNode(std::string l, std::vector<TreeNode> c = {})
      : label(std::move(l)), children(std::move(c)) {}
  bool operator==(const TreeNode&) const = default;
};

struct SyntaxTree {
  TreeNode root;
  SegmentKind source;
  bool degraded = false;  // grammar parse failed; root holds the flat token fallback
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One language family. `parse` throws ParseError on malformed input;
/// `fallback_labels` must accept anything and yields one label per token.
class GrammarAdapter {
 public:
  virtual ~GrammarAdapter() = default;
  virtual TreeNode parse(std::string_view source) const = 0;
  virtual std::vector<std::string> fallback_labels(std::string_view source) const = 0;
};

class AdapterRegistry {
 public:
  void add(const std::string& language_tag, std::shared_ptr<const GrammarAdapter> adapter);
  const GrammarAdapter* find(const std::string& language_tag) const;

  /// python/py use the indentation grammar; java, c, cpp, c++, csharp,
  /// javascript, js and clike use the brace grammar.
  static AdapterRegistry with_builtin();

 private:
  std::map<std::string, std::shared_ptr<const GrammarAdapter>> adapters_;
};

const AdapterRegistry& default_adapters();

SyntaxTree parse_code(std::string_view source, const std::string& language_tag,
                      const AdapterRegistry& registry = default_adapters());
SyntaxTree parse_natural(std::string_view text);
SyntaxTree parse_segment(std::string_view text, const SegmentKind& kind,
                         const AdapterRegistry& registry = default_adapters());

/// ROOT whose children are the roots of `parts`, in order.
SyntaxTree combine_trees(std::vector<SyntaxTree> parts);

/// Tree of instruction + input (the masked query).
SyntaxTree query_tree(const TaskSpec& task, const Sample& sample,
                      const AdapterRegistry& registry = default_adapters());
/// Tree of input + output (an example document).
SyntaxTree example_tree(const TaskSpec& task, const Sample& sample,
                        const AdapterRegistry& registry = default_adapters());

/// Node labels in preorder, space-joined.
std::string serialize_preorder(const TreeNode& root);
inline std::string serialize_preorder(const SyntaxTree& tree) { return serialize_preorder(tree.root); }
std::size_t node_count(const TreeNode& root);

}  // namespace icr
