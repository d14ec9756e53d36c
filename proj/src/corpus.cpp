#include "icr/corpus.hpp"

#include <cstdio>
#include <sstream>

#include "icr/binio.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

SegmentKind SegmentKind::parse(const std::string& s) {
  if (s.empty() || s == "natural") return natural();
  if (s.rfind("code:", 0) == 0 && s.size() > 5) return code(s.substr(5));
  throw DatasetError("bad segment kind '" + s + "' (expected natural or code:<lang>)");
}

std::string SegmentKind::str() const { return is_code ? "code:" + language : "natural"; }

TaskSpec::TaskSpec(std::string task_id, std::string instruction, SegmentKind input_kind,
                   SegmentKind output_kind, ExemplarTemplate tmpl)
    : task_id_(std::move(task_id)),
      instruction_(std::move(instruction)),
      input_kind_(std::move(input_kind)),
      output_kind_(std::move(output_kind)),
      template_(std::move(tmpl)) {
  if (task_id_.empty()) throw DatasetError("task_id must be non-empty");
  if (instruction_.empty()) throw DatasetError("task " + task_id_ + ": instruction must be non-empty");
}

std::vector<Sample> parse_dataset(const std::string& content, const std::string& task_id,
                                  bool require_output, const std::string& id_prefix) {
  std::vector<Sample> out;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error&) {
      throw DatasetError("line " + std::to_string(lineno) + ": malformed record");
    }
    if (!rec.is_object()) throw DatasetError("line " + std::to_string(lineno) + ": malformed record");
    auto field = [&](const char* name, bool required) -> std::string {
      auto it = rec.find(name);
      if (it == rec.end() || it->is_null()) {
        if (required) throw DatasetError("line " + std::to_string(lineno) + ": missing field " + name);
        return {};
      }
      if (!it->is_string()) throw DatasetError("line " + std::to_string(lineno) + ": field " + name + " is not a string");
      return it->get<std::string>();
    };
    Sample s;
    s.task_id = task_id;
    s.input = field("input", true);
    s.output = field("output", require_output);
    if (s.input.empty()) throw DatasetError("line " + std::to_string(lineno) + ": empty input");
    if (require_output && s.output.empty()) throw DatasetError("line " + std::to_string(lineno) + ": empty output");
    s.sample_id = field("id", false);
    if (s.sample_id.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "-%06zu", out.size());
      s.sample_id = task_id + id_prefix + buf;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_dataset(const std::string& path, const std::string& task_id,
                                 bool require_output, const std::string& id_prefix) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const std::runtime_error& e) {
    throw DatasetError(e.what());
  }
  return parse_dataset(content, task_id, require_output, id_prefix);
}

std::string serialize_dataset(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json rec = {{"id", s.sample_id}, {"input", s.input}, {"output", s.output}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Query build_query(const TaskSpec& task, const Sample& sample) {
  Query q;
  q.sample_id = sample.sample_id;
  q.task_id = task.task_id();
  q.text = task.instruction() + kSegmentSeparator + sample.input;
  q.gold = sample.output;
  return q;
}

Query mask_query(const Query& q) {
  if (q.masked) throw std::logic_error("query " + q.sample_id + " is already masked");
  Query m = q;
  m.gold.reset();
  m.masked = true;
  return m;
}

ExampleDoc make_example_doc(const Sample& sample) {
  return {sample.sample_id, sample.task_id, sample.input, sample.output,
          sample.input + kSegmentSeparator + sample.output};
}

void TaskRegistry::add(TaskSpec spec) {
  auto id = spec.task_id();
  if (!tasks_.emplace(id, std::move(spec)).second) throw DatasetError("duplicate task_id " + id);
}

const TaskSpec& TaskRegistry::at(const std::string& task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw DatasetError("unknown task_id " + task_id);
  return it->second;
}

std::vector<std::string> TaskRegistry::ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : tasks_) ids.push_back(id);
  return ids;
}

TaskRegistry TaskRegistry::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("task registry: ") + e.what());
  }
  if (!doc.contains("tasks") || !doc["tasks"].is_array()) throw DatasetError("task registry: missing field tasks");
  TaskRegistry reg;
  for (const auto& t : doc["tasks"]) {
    if (!t.contains("task_id")) throw DatasetError("task registry: missing field task_id");
    if (!t.contains("instruction")) throw DatasetError("task registry: missing field instruction");
    ExemplarTemplate tmpl;
    if (t.contains("template")) {
      tmpl.input_prefix = t["template"].value("input_prefix", "");
      tmpl.output_prefix = t["template"].value("output_prefix", "");
    }
    reg.add(TaskSpec(t["task_id"].get<std::string>(), t["instruction"].get<std::string>(),
                     SegmentKind::parse(t.value("input_kind", "natural")),
                     SegmentKind::parse(t.value("output_kind", "natural")), tmpl));
  }
  return reg;
}

TaskRegistry TaskRegistry::load(const std::string& path) {
  try {
    return from_json_text(read_file(path));
  } catch (const DatasetError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw DatasetError(e.what());
  }
}

std::string TaskRegistry::to_json_text() const {
  json arr = json::array();
  for (const auto& [id, t] : tasks_) {
    arr.push_back({{"task_id", id},
                   {"instruction", t.instruction()},
                   {"input_kind", t.input_kind().str()},
                   {"output_kind", t.output_kind().str()},
                   {"template",
                    {{"input_prefix", t.exemplar_template().input_prefix},
                     {"output_prefix", t.exemplar_template().output_prefix}}}});
  }
  return json{{"tasks", arr}}.dump(2) + "\n";
}

std::string render_exemplar(const ExemplarTemplate& tmpl, const std::string& input, const std::string& output) {
  return render_input(tmpl, input) + output;
}

std::string render_input(const ExemplarTemplate& tmpl, const std::string& input) {
  return tmpl.input_prefix + input + kSegmentSeparator + tmpl.output_prefix;
}

}  // namespace icr
