#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icr/corpus.hpp"
#include "icr/generator_client.hpp"
#include "icr/retrieval.hpp"
#include "icr/trainer.hpp"

namespace icr {

struct DatasetEntry {
  std::string task_id;
  std::string train;  // absolute after load
  std::string test;   // optional
};

struct GeneratorConfig {
  std::string kind = "nearest-exemplar";  // echo | nearest-exemplar | random-exemplar | remote
  GeneratorEndpoint endpoint;
  int max_tokens = 128;
  ReplayMode replay_mode = ReplayMode::Off;
  std::string replay_path;
};

/// JSON workspace file. Relative paths resolve against the file's directory;
/// unknown keys are rejected.
struct WorkspaceConfig {
  std::string base_dir;
  std::string tasks_path;
  std::vector<DatasetEntry> datasets;
  TrainConfig train;
  RetrieveConfig retrieval;
  std::string scorer_kind = "oracle";  // oracle | remote
  GeneratorConfig generator;
  std::string output_dir;
  std::uint64_t seed = kDefaultSeed;

  static constexpr std::uint64_t kDefaultSeed = 13;

  static WorkspaceConfig load(const std::string& path);
  static WorkspaceConfig from_json_text(const std::string& text, const std::string& base_dir);

  /// Applies a seed to every stochastic component.
  void set_seed(std::uint64_t s);

  TaskRegistry load_registry() const;
  std::vector<Sample> load_train() const;
  std::vector<Sample> load_test() const;  // ConfigError when no dataset declares a test file
};

}  // namespace icr
