#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stgan/config.hpp"
#include "stgan/data.hpp"
#include "stgan/metrics.hpp"
#include "stgan/train.hpp"

namespace stgan::app {

enum class Mode { kUnet, kNoShape, kShapeTransfer };

inline constexpr std::array<Mode, 3> kModes{Mode::kUnet, Mode::kNoShape, Mode::kShapeTransfer};

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

/// Manifests of one generated phantom benchmark.
struct BenchmarkPaths {
  std::filesystem::path source;  // labelled source-domain training set
  std::filesystem::path target;  // target-domain training set, written without masks
  std::filesystem::path eval;    // held-out target-domain set with masks
};

/// Generates (or reuses, if present) the three phantom sets for `seed`.
BenchmarkPaths prepare_benchmark(const RunConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& dir);

struct TrainingData {
  Dataset source;
  Dataset target;
};

/// Source with masks; target with its mask files never opened.
TrainingData load_training_data(const BenchmarkPaths& paths, int image_size);

struct ModeRun {
  Mode mode = Mode::kUnet;
  ModelBundle bundle;
  std::vector<LogRow> log;  // empty for unet
  OptimizerState optimizer;
  int epochs_completed = 0;
};

/// Trains one method starting from a bundle whose S is pretrained.
ModeRun run_mode(Mode mode, const TrainingData& data, const ModelBundle& pretrained,
                 const TrainConfig& cfg, const TrainOptions& opts = {});

/// Segments `eval` with S and scores it per patient.
std::vector<metrics::PatientMetrics> evaluate_bundle(const ModelBundle& bundle, const Dataset& eval,
                                                     metrics::Spacing spacing = {},
                                                     metrics::DistanceMode mode = {});

/// Mean per-patient Dice per structure (LV, RV, Myo).
std::array<double, 3> mean_dice(const std::vector<metrics::PatientMetrics>& per_patient);

/// Mean of l_cyc per epoch, in epoch order.
std::vector<double> epoch_cycle_means(const std::vector<LogRow>& log);

struct AblationSeedResult {
  std::uint64_t seed = 0;
  std::array<std::array<double, 3>, 3> dice{};  // [kModes index][LV, RV, Myo]
  std::vector<double> pretrain_dice;            // source Myo Dice per pretraining epoch
  std::vector<double> cycle_epoch_means;        // shapetransfer run
  std::int64_t target_mask_reads_in_training = 0;
};

struct AblationResult {
  std::vector<AblationSeedResult> seeds;
  std::array<std::array<double, 3>, 3> mean_dice{};  // over seeds
  std::int64_t target_mask_reads_in_training = 0;
};

/// Runs all three methods per master seed on shared data and evaluates each
/// on held-out target data. Writes per-seed artifacts under `out_dir`.
AblationResult run_ablation(const RunConfig& cfg, const std::filesystem::path& out_dir,
                            std::ostream& log);

// Command-line front end. Every command returns a process exit code and
// writes its resolved config next to its outputs.

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::filesystem::path> out;
};

/// Defaults, then config file, then STX_* environment, then flags.
RunConfig resolve_config(const CommonOptions& opts);

struct PhantomArgs {
  int patients = 10;
  int slices = 10;
  Domain domain = Domain::kSource;
  bool write_masks = true;
  bool overwrite = false;
};

struct TrainArgs {
  Mode mode = Mode::kShapeTransfer;
  std::optional<std::filesystem::path> resume;
};

struct SegmentArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input_manifest;
};

struct EvaluateArgs {
  std::filesystem::path predicted_manifest;
  std::filesystem::path truth_manifest;
  metrics::Spacing spacing;
  metrics::DistanceMode distance_mode = metrics::DistanceMode::kStacked3D;
};

int cmd_phantom(const CommonOptions& common, const PhantomArgs& args, std::ostream& out,
                std::ostream& err);
int cmd_train(const CommonOptions& common, const TrainArgs& args, std::ostream& out,
              std::ostream& err);
int cmd_segment(const CommonOptions& common, const SegmentArgs& args, std::ostream& out,
                std::ostream& err);
int cmd_evaluate(const CommonOptions& common, const EvaluateArgs& args, std::ostream& out,
                 std::ostream& err);
int cmd_ablate(const CommonOptions& common, std::ostream& out, std::ostream& err);

}  // namespace stgan::app
