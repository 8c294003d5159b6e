#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stgan/data.hpp"
#include "stgan/losses.hpp"
#include "stgan/nets.hpp"
#include "stgan/optim.hpp"

namespace stgan {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 4;
  double lr_gan = 1e-4;
  double lr_seg = 1e-5;
  /// Segmentor pretraining rate; 0 means "same as lr_seg".
  double lr_pretrain = 0.0;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  int log_every = 1;         // steps
  int pretrain_epochs = 30;
  /// With lambda_shape = 0, still update S on G1(x) every GAN step. S is
  /// always updated when lambda_shape > 0.
  bool segmentor_joint = false;
  std::string device = "cpu";

  void validate() const;
  double pretrain_lr() const { return lr_pretrain > 0.0 ? lr_pretrain : lr_seg; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
  AdamState g1, g2, d1, d2, s;
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelBundle bundle;
  OptimizerState optimizer;
  TrainConfig config;
  int epoch = 0;  // completed epochs
  std::uint32_t format_version = kCheckpointVersion;
};

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

struct LogRow {
  int epoch = 0;           // 1-based
  std::int64_t step = 0;   // 1-based, global
  LossReport report;
  double wall_time_s = 0;  // 0 in deterministic mode
};

/// Training CSV: epoch,step,l_gan1,l_gan2,l_gan,l_cyc,l_shape,l_total,wall_time_s
std::string log_csv_header();
std::string log_csv_row(const LogRow& row);
void write_log_csv(const std::vector<LogRow>& rows, const std::filesystem::path& path);

enum class Phase { kBeforeStep, kAfterD, kAfterG, kAfterS };

struct TrainOptions {
  bool deterministic = true;
  /// Periodic and diagnostic checkpoints go here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Continue from a saved state instead of starting at epoch 0.
  const Checkpoint* resume = nullptr;
  /// Stop after this many completed epochs (defaults to config.epochs).
  std::optional<int> stop_after_epoch;
  /// Called around each sub-step; used to audit which parameters move.
  std::function<void(Phase, const ModelBundle&)> observer;
  std::function<void(const LogRow&)> on_log;
  std::function<void(int epoch, const ModelBundle&)> on_epoch_end;
};

struct GanResult {
  ModelBundle bundle;
  OptimizerState optimizer;
  std::vector<LogRow> log;
  int epochs_completed = 0;
};

/// Applies D -> G -> S updates on single batches.
class GanTrainer {
 public:
  GanTrainer(ModelBundle bundle, TrainConfig config, OptimizerState state = {});

  /// One full step on a labelled source batch and an unlabelled target batch.
  LossReport step(const Batch& source, const Batch& target,
                  const std::function<void(Phase, const ModelBundle&)>& observer = {});

  const ModelBundle& bundle() const { return bundle_; }
  ModelBundle& bundle() { return bundle_; }
  const OptimizerState& optimizer() const { return state_; }
  const TrainConfig& config() const { return config_; }

 private:
  ModelBundle bundle_;
  TrainConfig config_;
  OptimizerState state_;
};

struct PretrainResult {
  ModelBundle bundle;
  std::vector<double> epoch_myo_dice;  // mean per-slice Myo Dice on the training set
  OptimizerState optimizer;
};

/// Trains S alone on labelled source pairs; G and D stay at initialization.
PretrainResult pretrain_segmentor(const Dataset& source, const ArchConfig& arch,
                                  const TrainConfig& cfg,
                                  const std::function<void(int, double)>& on_epoch = {});

/// Joint adversarial/cycle/shape training. Target masks are never read.
GanResult train_shape_transfer_gan(const Dataset& source, const Dataset& target,
                                   ModelBundle bundle, const TrainConfig& cfg,
                                   const TrainOptions& opts = {});

/// Fine-tunes S on (G1(x), m_x) pairs with G1 frozen, `cfg.epochs` epochs at lr_seg.
ModelBundle train_segmentor_on_translated(const Dataset& source, ModelBundle bundle,
                                          const TrainConfig& cfg);

/// Argmax over class logits; ties go to the lower class index.
LabelTensor segment(const ModelBundle& bundle, const Tensor<float>& images);
LabelTensor argmax_labels(const Tensor<float>& logits);

/// Runs segment() over a whole dataset in chunks of `batch_size`.
std::vector<LabelMask> segment_dataset(const ModelBundle& bundle, const Dataset& ds,
                                       int batch_size = 8);

}  // namespace stgan
