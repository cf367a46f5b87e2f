#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hdl/corpus.hpp"
#include "hdl/models.hpp"

namespace hdl {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double base_lr = 2e-5;
  double warmup_ratio = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t patience = 3;
  double beta = 0.0;  // blend used for HDLN validation accuracy

  // Epoch budget per model family: 10 for EmbedMlp, 20 for HDLN.
  static TrainConfig defaults_for(ModelKind kind);
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
  double last_lr = 0.0;
  bool improved = false;
};

template <typename Model>
struct TrainResult {
  Model model;  // best-validation-accuracy checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_validation_accuracy = 0.0;
  std::size_t total_steps = 0;
  bool stopped_early = false;
};

// Validation accuracy used for model selection: per-block argmax accuracy
// averaged over the five blocks, fine-grained blocks over lonely-labeled
// examples only. HDLN predictions are blended at `beta`.
template <typename Model>
double validation_accuracy(const Model& model, std::span<const LabeledExample> examples, double beta);

template <typename Model>
double mean_loss(const Model& model, std::span<const LabeledExample> examples);

// Mini-batch AdamW with warmup + linear decay; keeps the epoch with the best
// validation accuracy and stops after `patience` epochs without improvement.
template <typename Model>
TrainResult<Model> train(Model model, std::span<const LabeledExample> train_set,
                         std::span<const LabeledExample> validation_set, const TrainConfig& config,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

template <typename Model>
BlockDistributions predict_blocks(const Model& model, std::span<const float> features, double beta);

}  // namespace hdl
