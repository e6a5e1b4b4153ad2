#pragma once

// Operator surface behind the `ggcf` executable: prepare, train, evaluate,
// grid, ablate.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ggcf/eval.hpp"
#include "ggcf/graph.hpp"
#include "ggcf/model.hpp"
#include "ggcf/train.hpp"

namespace ggcf {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

enum class DatasetKind { kMovieLens, kLastFm };

struct RunConfig {
  DatasetKind dataset = DatasetKind::kMovieLens;
  std::filesystem::path data_path;
  // When set, the frozen split is read instead of re-splitting data_path.
  std::filesystem::path split_path;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 2024;
  TrainConfig train;
  AblationFlags flags;
  std::filesystem::path out_dir;
  // Sequential execution, and history records without wall-clock values.
  bool deterministic = true;
  std::vector<int> grid_layers = {1, 2, 3, 4};

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the canonical JSON of everything except the
// output directory.
std::string config_hash(const RunConfig& config);
std::string split_hash(const Split& split);

std::string default_out_dir();

struct DatasetSummary {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  std::size_t train = 0;
  std::size_t test = 0;
  std::string split_hash;
};

// `path` is either the interaction file itself or the dataset directory; a
// directory also contributes its catalogue file (movies.csv / artists.dat),
// so items nobody interacted with still count.
InteractionSet load_dataset(DatasetKind kind, const std::filesystem::path& path);

// Loads the raw dataset, splits it, and writes <out>/split.tsv.
DatasetSummary cmd_prepare(const RunConfig& config, std::ostream& out);

struct TrainOutcome {
  FitResult fit;
  std::filesystem::path checkpoint;
  std::filesystem::path history;
  std::string split_hash;
  std::string config_hash;
};

// Writes <out>/history.jsonl and <out>/checkpoint.ggcf.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& out);

EvalReport cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& split,
                        int k, const std::filesystem::path& out_dir, std::ostream& out);

struct CellResult {
  std::string label;
  int layers = 0;
  std::string ablation;
  std::optional<EvalReport> report;
  std::string error;
  std::string config_hash;
  std::string split_hash;
};

std::vector<CellResult> cmd_grid(const RunConfig& config, std::ostream& out);
std::vector<CellResult> cmd_ablate(const RunConfig& config, std::ostream& out);

// Parses argv and dispatches; returns an ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ggcf
