// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gremc/eval.hpp"
#include "gremc/model.hpp"
#include "gremc/retrieval.hpp"

namespace gremc {

/// One run's complete configuration. JSON config files mirror this structure;
/// command-line flags override file values. The master seed expands into
/// named per-stage streams so no stage's randomness perturbs another's.
struct RunConfig {
  std::string interactions;
  std::vector<std::pair<unsigned, std::string>> features;  // (modality, path)
  std::string mask_path;   // defaults to <out>/mask.csv
  std::string out_dir = "out";
  double rate = 0.4;
  uint64_t seed = 42;
  unsigned min_degree = 0;  // drop items with fewer interactions before projection
  unsigned threads = 1;
  bool synthetic = false;
  int64_t sample = -1;  // cap on evaluated/retrieved queries; -1 = all
  RetrievalConfig retrieval;
  ModelConfig model;
  SyntheticSpec synth;
};

/// Parses a JSON config file over the defaults. Unknown keys are rejected.
RunConfig load_config_file(const std::string& path);

/// Applies the same JSON object parsing to an existing config (used for
/// overlaying a file onto defaults before CLI overrides).
void merge_config_text(RunConfig& cfg, const std::string& json_text);

std::string run_config_json(const RunConfig& cfg);

std::string artifact_path(const RunConfig& cfg, const std::string& name);
std::string mask_artifact_path(const RunConfig& cfg);

// Subcommands. Each writes its artifacts plus manifest_<command>.json into
// out_dir and throws std::runtime_error on any failure.
void cmd_build_graph(const RunConfig& cfg);
void cmd_mask(const RunConfig& cfg);
void cmd_retrieve(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_complete(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);

}  // namespace gremc
