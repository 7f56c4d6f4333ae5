#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "voxmed/classifier.hpp"

namespace voxmed {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  bool stratified = true;
  bool group_by_patient = false;  // leakage-safe split: a patient's recordings stay together

  void validate() const;  // InvalidConfig
};

// First and second moments share the ModelParams layout.
struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ModelParams& params);
};

struct Example {
  std::vector<float> embedding;
  std::size_t label = 0;
  std::int64_t group = -1;  // patient id when known
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // epoch,train_loss,train_acc,val_loss,val_acc,seconds
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

// Mean over the batch of -sum_k y_k ln(max(p_k, 1e-12)). Throws ShapeMismatch.
double cross_entropy(std::span<const std::vector<double>> probs, std::span<const std::vector<double>> onehot);
double cross_entropy(std::span<const std::vector<double>> probs, std::span<const std::size_t> labels);

std::vector<double> one_hot(std::size_t label, std::size_t num_classes);

struct BackwardResult {
  ModelParams gradients;  // d(mean loss)/d(param), same layout as the model
  double loss = 0.0;
  std::size_t correct = 0;
};

// Exact gradient of the mean cross-entropy over the batch. Sample i uses
// dropout_seeds[i] when train_mode is set. Samples are accumulated in order,
// so results are reproducible bit for bit.
BackwardResult backward(const ModelParams& params, std::span<const Example> batch, bool train_mode,
                        std::span<const std::uint64_t> dropout_seeds);

// Bias-corrected Adam, in place.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg);

struct Split {
  std::vector<std::size_t> train;  // ascending indices
  std::vector<std::size_t> test;
};

// Deterministic per seed. Stratified mode allocates round(n * ratio) training
// items across classes by largest remainder. With groups, whole groups are
// assigned to one side. Throws EmptyInput.
Split split_dataset(std::span<const std::size_t> labels, double ratio, std::uint64_t seed, bool stratified,
                    std::span<const std::int64_t> groups = {});

// The split train(dataset, ...) uses: split_dataset over the example labels
// (and patients when cfg.group_by_patient) with a seed derived from cfg.seed.
Split split_examples(std::span<const Example> dataset, const TrainConfig& cfg);

struct TrainResult {
  ModelParams params;  // best-validation checkpoint, float32-exact
  TrainHistory history;
  Split split;         // indices into the dataset (empty when train/val were passed separately)
};

// Mini-batch Adam on train_set with early stopping on validation loss.
// Throws DegenerateDataset when fewer than two classes are present.
TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set, const ArchSpec& arch,
                  const TrainConfig& cfg);

// Splits the dataset per cfg (validation = held-out part), then trains.
TrainResult train(std::span<const Example> dataset, const ArchSpec& arch, const TrainConfig& cfg);

}  // namespace voxmed
