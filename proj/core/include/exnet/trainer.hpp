#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "exnet/dataio.hpp"
#include "exnet/metrics.hpp"
#include "exnet/model.hpp"

namespace exnet {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double dropout_rate = 0.0;
  bool use_batchnorm = true;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;

  /// Throws ConfigError when batch_size or epochs is 0, lr <= 0, the
  /// momentum lies outside [0, 1) or the dropout rate outside [0, 1).
  void validate() const;
};

/// `base` with the regularization switches of `config` applied.
ModelSpec configured_spec(const ModelSpec& base, const TrainConfig& config);

/// Seed used for weight initialization under `config`.
std::uint64_t init_seed(const TrainConfig& config);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running, train-mode predictions over the epoch
  MetricsReport validation;
};

inline constexpr const char* kEpochLogHeader = "epoch,train_loss,train_acc,val_precision,val_recall,val_f1,val_acc";
void write_epoch_log(std::ostream& os, std::span<const EpochLog> logs);

struct FitOptions {
  /// When non-empty, the checkpoint with the highest validation F1 (earliest
  /// on ties) is written here.
  std::filesystem::path best_checkpoint;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitSummary {
  std::vector<EpochLog> logs;
  std::size_t best_epoch = 0;
  double best_f1 = 0.0;
};

/// Trains `model` in place with SGD-M over `epochs` passes of seeded
/// mini-batches, evaluating `validation` after each epoch. Throws
/// TrainingError naming epoch, batch and value on a non-finite loss, and
/// DataError on an empty split.
template <typename T>
FitSummary fit(Model<T>& model, std::span<const LabeledImage> train, std::span<const LabeledImage> validation,
               const TrainConfig& config, const FitOptions& options = {});

/// Argmax class per sample in eval mode; exact ties pick class 0. The
/// model's mode is restored afterwards.
template <typename T>
std::vector<int> predict(Model<T>& model, std::span<const LabeledImage> items, std::size_t batch_size = 32);

/// Confusion-based metrics of predict() against the labels. Throws
/// DataError on an empty split.
template <typename T>
MetricsReport evaluate(Model<T>& model, std::span<const LabeledImage> items, std::size_t batch_size = 32);

struct SweepRow {
  double rate = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double overfit_degree = 0.0;
  double f1 = 0.0;
  bool ok = true;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

inline constexpr const char* kSweepHeader = "rate,train_acc,val_acc,overfit_degree,f1,status";
void write_sweep_csv(std::ostream& os, const SweepResult& result);

/// One fit per rate from the same seed. Rates must be strictly increasing
/// within [0, 1) (ConfigError). A failing rate is recorded and the sweep
/// continues.
template <typename T>
SweepResult sweep_dropout(const ModelSpec& base, std::span<const LabeledImage> train,
                          std::span<const LabeledImage> validation, const TrainConfig& config,
                          std::span<const double> rates);

}  // namespace exnet
