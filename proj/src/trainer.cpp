#include "hdl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <type_traits>

#include "hdl/error.hpp"
#include "hdl/io.hpp"
#include "hdl/rng.hpp"

namespace hdl {

namespace {

template <typename T>
std::vector<T> convert(std::span<const float> x) {
  return std::vector<T>(x.begin(), x.end());
}

// Calls fn with the example features viewed as the model's scalar type.
template <typename T, typename Fn>
decltype(auto) with_input(std::span<const float> features, Fn&& fn) {
  if constexpr (std::is_same_v<T, float>) {
    return fn(features);
  } else {
    const auto x = convert<T>(features);
    return fn(std::span<const T>(x));
  }
}

template <typename Model>
struct ScalarOf;
template <typename T>
struct ScalarOf<EmbedMlpModel<T>> {
  using type = T;
};
template <typename T>
struct ScalarOf<HdlnModel<T>> {
  using type = T;
};

}  // namespace

TrainConfig TrainConfig::defaults_for(ModelKind kind) {
  TrainConfig c;
  c.epochs = kind == ModelKind::hdln ? 20 : 10;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("invalid_argument", "batch size must be at least 1");
  if (epochs < 1) throw Error("invalid_argument", "epochs must be at least 1");
  if (patience < 1) throw Error("invalid_argument", "patience must be at least 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("invalid_argument", "beta must be in [0, 1]");
  nn::LrSchedule{base_lr, warmup_ratio, 1}.validate();
}

template <typename Model>
BlockDistributions predict_blocks(const Model& model, std::span<const float> features, double beta) {
  using T = typename ScalarOf<Model>::type;
  return with_input<T>(features, [&](std::span<const T> x) {
    if constexpr (Model::kind == ModelKind::hdln) {
      return model.predict(x, beta).blended;
    } else {
      return model.predict(x);
    }
  });
}

template <typename Model>
double validation_accuracy(const Model& model, std::span<const LabeledExample> examples, double beta) {
  if (examples.empty()) throw Error("invalid_argument", "empty validation set");
  std::array<double, kNumCategories> hits{};
  std::array<std::size_t, kNumCategories> counts{};
  for (const auto& e : examples) {
    const auto p = predict_blocks(model, e.features.values, beta);
    for (auto c : kAllCategories) {
      const auto& t = e.labels[c];
      if (t.is_all_zero()) continue;
      hits[index_of(c)] += dist_accuracy(p[index_of(c)], t.values);
      ++counts[index_of(c)];
    }
  }
  double total = 0.0;
  std::size_t blocks = 0;
  for (std::size_t b = 0; b < kNumCategories; ++b) {
    if (counts[b] == 0) continue;
    total += hits[b] / static_cast<double>(counts[b]);
    ++blocks;
  }
  return total / static_cast<double>(blocks);
}

template <typename Model>
double mean_loss(const Model& model, std::span<const LabeledExample> examples) {
  using T = typename ScalarOf<Model>::type;
  if (examples.empty()) throw Error("invalid_argument", "empty example set");
  double total = 0.0;
  for (const auto& e : examples) {
    const auto target = e.labels.flatten();
    total += with_input<T>(e.features.values, [&](std::span<const T> x) { return model.loss(x, target); });
  }
  return total / static_cast<double>(examples.size());
}

template <typename Model>
TrainResult<Model> train(Model model, std::span<const LabeledExample> train_set,
                         std::span<const LabeledExample> validation_set, const TrainConfig& config,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  using T = typename ScalarOf<Model>::type;
  config.validate();
  if (train_set.empty() || validation_set.empty()) {
    throw Error("invalid_argument", "training needs non-empty train and validation splits");
  }
  for (const auto& e : train_set) {
    if (e.features.dim() != model.dims().input) {
      throw Error("shape_mismatch", "example '" + e.post_id + "' has dim " + std::to_string(e.features.dim()) +
                                        ", model expects " + std::to_string(model.dims().input));
    }
  }

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const nn::LrSchedule schedule{config.base_lr, config.warmup_ratio, config.epochs * steps_per_epoch};
  schedule.validate();

  auto params = model.parameters();
  auto optimizer = nn::AdamW::for_params<T>(nn::AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay},
                                            std::span<const nn::ParamView<T>>(params));
  auto grads = nn::zero_gradients<T>(params);

  std::vector<std::array<double, kTotalLabelDim>> targets;
  targets.reserve(n);
  for (const auto& e : train_set) targets.push_back(e.labels.flatten());

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(n);

  TrainResult<Model> result{model, {}, 0, -1.0, schedule.total_steps, false};
  std::size_t step = 0;
  std::size_t stale = 0;
  double best_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::clear(grads);
      double batch_loss = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const auto& e = train_set[order[j]];
        batch_loss += with_input<T>(e.features.values, [&](std::span<const T> x) {
          return model.accumulate_gradient(x, targets[order[j]], grads, scale);
        });
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("non_finite", "non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step + 1) + " (lr " + format_double(lr) + ")");
      }
      epoch_loss += batch_loss;
      ++step;
      lr = nn::lr_at_step(schedule, step);
      optimizer.template step<T>(params, grads, lr);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(n);
    log.validation_loss = mean_loss(model, validation_set);
    log.validation_accuracy = validation_accuracy(model, validation_set, config.beta);
    log.last_lr = lr;
    // Accuracy ties on small validation sets are common; lower validation loss breaks them.
    log.improved = result.log.empty() || log.validation_accuracy > result.best_validation_accuracy ||
                   (log.validation_accuracy == result.best_validation_accuracy && log.validation_loss < best_loss);
    if (log.improved) {
      best_loss = log.validation_loss;
      result.model = model;
      result.best_epoch = epoch;
      result.best_validation_accuracy = log.validation_accuracy;
      stale = 0;
    } else {
      ++stale;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stale >= config.patience && epoch < config.epochs) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

#define HDL_INSTANTIATE_TRAINER(M)                                                                          \
  template BlockDistributions predict_blocks<M>(const M&, std::span<const float>, double);                  \
  template double validation_accuracy<M>(const M&, std::span<const LabeledExample>, double);                \
  template double mean_loss<M>(const M&, std::span<const LabeledExample>);                                  \
  template TrainResult<M> train<M>(M, std::span<const LabeledExample>, std::span<const LabeledExample>,     \
                                   const TrainConfig&, const std::function<void(const EpochLog&)>&);

HDL_INSTANTIATE_TRAINER(EmbedMlpModel<float>)
HDL_INSTANTIATE_TRAINER(EmbedMlpModel<double>)
HDL_INSTANTIATE_TRAINER(HdlnModel<float>)
HDL_INSTANTIATE_TRAINER(HdlnModel<double>)

#undef HDL_INSTANTIATE_TRAINER

}  // namespace hdl
