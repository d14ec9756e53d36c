#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icr/corpus.hpp"

namespace icr {

/// Cluster task whose outputs are determined by input structure only.
/// Inputs are python assignments whose right-hand side shape (call, index,
/// attribute, binary op, tuple, ...) encodes the cluster; identifiers are
/// drawn from a pool shared by all clusters, so lexical overlap carries no
/// cluster signal. Outputs are permutations of the cluster's six words;
/// neighbouring clusters share two words, giving graded token F1.
struct SyntheticConfig {
  std::size_t clusters = 5;
  std::size_t train_per_cluster = 40;
  std::size_t test_per_cluster = 10;
  std::size_t min_statements = 1;
  std::size_t max_statements = 3;
  std::size_t identifier_pool = 30;
  std::uint64_t seed = 7;
  std::string task_id = "synth";
};

inline constexpr std::size_t kMaxSyntheticClusters = 8;

struct SyntheticTask {
  TaskRegistry registry;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<std::size_t> train_cluster;
  std::vector<std::size_t> test_cluster;
};

SyntheticTask make_synthetic_task(const SyntheticConfig& cfg);

/// Writes tasks.json, train.jsonl, test.jsonl and workspace.json into `dir`.
void write_synthetic_workspace(const std::string& dir, const SyntheticConfig& cfg);

}  // namespace icr
