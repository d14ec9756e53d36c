#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icr {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// How a text segment is parsed into a syntax tree: "natural" or
/// "code:<language-tag>".
struct SegmentKind {
  bool is_code = false;
  std::string language;  // empty for natural

  static SegmentKind natural() { return {}; }
  static SegmentKind code(std::string lang) { return {true, std::move(lang)}; }
  static SegmentKind parse(const std::string& s);
  std::string str() const;
  bool operator==(const SegmentKind&) const = default;
};

/// Exemplar layout inside a prompt. Empty prefixes render an exemplar as
/// "input\noutput", identical to ExampleDoc::text.
struct ExemplarTemplate {
  std::string input_prefix;
  std::string output_prefix;
};

class TaskSpec {
 public:
  TaskSpec(std::string task_id, std::string instruction,
           SegmentKind input_kind = SegmentKind::natural(),
           SegmentKind output_kind = SegmentKind::natural(),
           ExemplarTemplate tmpl = {});

  const std::string& task_id() const { return task_id_; }
  const std::string& instruction() const { return instruction_; }
  const SegmentKind& input_kind() const { return input_kind_; }
  const SegmentKind& output_kind() const { return output_kind_; }
  const ExemplarTemplate& exemplar_template() const { return template_; }

 private:
  std::string task_id_;
  std::string instruction_;
  SegmentKind input_kind_;
  SegmentKind output_kind_;
  ExemplarTemplate template_;
};

struct Sample {
  std::string sample_id;
  std::string task_id;
  std::string input;
  std::string output;

  bool operator==(const Sample&) const = default;
};

struct Query {
  std::string sample_id;
  std::string task_id;
  std::string text;                  // instruction + "\n" + input
  std::optional<std::string> gold;   // absent once masked
  bool masked = false;
};

struct ExampleDoc {
  std::string sample_id;
  std::string task_id;
  std::string input;
  std::string output;
  std::string text;  // input + "\n" + output
};

inline constexpr char kSegmentSeparator = '\n';

/// Reads one JSON record per line with fields {id?, input, output}. Blank
/// lines are skipped. Missing ids become "<task_id><id_prefix>-<record:06>".
std::vector<Sample> load_dataset(const std::string& path, const std::string& task_id,
                                 bool require_output = true, const std::string& id_prefix = "");
std::vector<Sample> parse_dataset(const std::string& content, const std::string& task_id,
                                  bool require_output = true, const std::string& id_prefix = "");
std::string serialize_dataset(const std::vector<Sample>& samples);

Query build_query(const TaskSpec& task, const Sample& sample);
Query mask_query(const Query& q);
ExampleDoc make_example_doc(const Sample& sample);

/// Prompt segments are joined by a blank line.
inline constexpr std::string_view kPromptSeparator = "\n\n";

/// input_prefix + input + "\n" + output_prefix + output. With an empty
/// template this equals ExampleDoc::text.
std::string render_exemplar(const ExemplarTemplate& tmpl, const std::string& input, const std::string& output);
/// The open slot the generator continues: input_prefix + input + "\n" + output_prefix.
std::string render_input(const ExemplarTemplate& tmpl, const std::string& input);

/// task_id -> TaskSpec, loaded from a JSON registry:
/// {"tasks": [{"task_id", "instruction", "input_kind"?, "output_kind"?,
///             "template"?: {"input_prefix", "output_prefix"}}]}
class TaskRegistry {
 public:
  void add(TaskSpec spec);
  const TaskSpec& at(const std::string& task_id) const;
  bool contains(const std::string& task_id) const { return tasks_.count(task_id) != 0; }
  std::vector<std::string> ids() const;

  static TaskRegistry from_json_text(const std::string& text);
  static TaskRegistry load(const std::string& path);
  std::string to_json_text() const;

 private:
  std::map<std::string, TaskSpec> tasks_;
};

}  // namespace icr
