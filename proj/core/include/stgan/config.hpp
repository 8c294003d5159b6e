#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stgan/nets.hpp"
#include "stgan/phantom.hpp"
#include "stgan/train.hpp"

namespace stgan {

using json = nlohmann::json;

/// Sizes of the auto-generated phantom benchmark.
struct DataConfig {
  int source_patients = 10;
  int target_patients = 10;
  int eval_patients = 5;
  int slices_per_patient = 10;
  /// Existing manifests; empty means "generate under the output directory".
  std::string source_manifest;
  std::string target_manifest;
  std::string eval_manifest;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct RunConfig {
  PhantomSpec phantom;
  ArchConfig arch;
  TrainConfig train;
  DataConfig data;
  AblationConfig ablation;
  std::string out_dir = "runs/default";
  bool deterministic = true;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(json& j, const PhantomSpec& v);
void from_json(const json& j, PhantomSpec& v);
void to_json(json& j, const ArchConfig& v);
void from_json(const json& j, ArchConfig& v);
void to_json(json& j, const LossWeights& v);
void from_json(const json& j, LossWeights& v);
void to_json(json& j, const TrainConfig& v);
void from_json(const json& j, TrainConfig& v);
void to_json(json& j, const DataConfig& v);
void from_json(const json& j, DataConfig& v);
void to_json(json& j, const AblationConfig& v);
void from_json(const json& j, AblationConfig& v);
void to_json(json& j, const RunConfig& v);
void from_json(const json& j, RunConfig& v);

/// Every problem found while validating, in key order. Empty means valid.
std::vector<std::string> config_errors(const RunConfig& cfg);

/// Parses a config document. Unknown keys and type errors throw
/// ValidationError listing every offending key.
RunConfig parse_config(const json& doc);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Name of the environment variable overriding a dotted key path,
/// e.g. "train.weights.lambda_cyc" -> "STX_TRAIN_WEIGHTS_LAMBDA_CYC".
std::string env_var_name(const std::string& key_path);

/// Applies STX_* overrides from `env` to `doc`. Each value is parsed as JSON
/// when possible, otherwise taken as a string. Variables matching no key
/// throw ValidationError. Returns the key paths that were overridden.
std::vector<std::string> apply_env_overrides(json& doc, const std::map<std::string, std::string>& env);

/// STX_* entries of the process environment.
std::map<std::string, std::string> stx_environment();

}  // namespace stgan
