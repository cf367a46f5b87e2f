#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hdl/label_schema.hpp"
#include "hdl/metrics.hpp"
#include "hdl/nn.hpp"

namespace hdl {

enum class ModelKind : std::uint32_t { embed_mlp = 0, hdln = 1 };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

// Weight of each block in the per-sample objective: the lonely block counts
// once, the fine-grained blocks are averaged.
constexpr double block_weight(Category c) {
  return c == Category::lonely ? 1.0 : 1.0 / static_cast<double>(kNumFineGrained);
}

struct HdlnPrediction {
  BlockDistributions local;
  BlockDistributions global;
  BlockDistributions blended;
  double beta = 0.0;
};

// -sum_k p_k log q_k; zero-probability targets contribute nothing.
double cross_entropy(std::span<const double> target, std::span<const double> predicted);

// Mean over samples of CE(lonely) + 1/4 * sum of the fine-grained CEs.
double hdl_objective(std::span<const PostLabelSet> targets, std::span<const BlockDistributions> predictions);

// 1/2 * objective(local) + 1/2 * objective(global).
double hdln_loss(std::span<const PostLabelSet> targets, std::span<const HdlnPrediction> predictions);

// Blockwise beta * local + (1 - beta) * global; beta in [0, 1].
BlockDistributions blend(const HdlnPrediction& prediction, double beta);

// Five independent two-layer heads (input -> hidden -> block size).
template <typename T>
class EmbedMlpModel {
 public:
  static constexpr ModelKind kind = ModelKind::embed_mlp;

  struct Dims {
    std::size_t input = 768;
    std::size_t hidden = 50;
  };

  static EmbedMlpModel create(Dims dims, std::uint64_t seed);

  const Dims& dims() const { return dims_; }
  std::vector<nn::ParamView<T>> parameters();
  std::vector<nn::ParamView<const T>> parameters() const;

  BlockDistributions predict(std::span<const T> x) const;
  // Per-sample objective; adds scale * gradient into grads.
  double accumulate_gradient(std::span<const T> x, std::span<const double> target, nn::Gradients& grads,
                             double scale) const;
  double loss(std::span<const T> x, std::span<const double> target) const;

  template <typename U>
  EmbedMlpModel<U> cast() const {
    EmbedMlpModel<U> m;
    m.dims_ = {dims_.input, dims_.hidden};
    for (std::size_t b = 0; b < kNumCategories; ++b) m.heads_[b] = heads_[b].template cast<U>();
    return m;
  }

  const std::array<nn::Mlp<T>, kNumCategories>& heads() const { return heads_; }

 private:
  template <typename>
  friend class EmbedMlpModel;

  Dims dims_;
  std::array<nn::Mlp<T>, kNumCategories> heads_;
};

// Global flow: level1 = ReLU(W1 x), level2 = ReLU(W2 [level1 ; x]).
// The lonely local head reads level1, the four fine-grained local heads and
// the global head (21 logits, softmaxed per block) read level2.
template <typename T>
class HdlnModel {
 public:
  static constexpr ModelKind kind = ModelKind::hdln;

  struct Dims {
    std::size_t input = 768;
    std::size_t global_hidden = 64;
    std::size_t local_hidden = 64;
  };

  struct Cache {
    std::vector<T> pre1, level1, joined, pre2, level2;
    std::array<nn::MlpCache<T>, kNumCategories> local;
    std::vector<T> global_logits;
  };

  static HdlnModel create(Dims dims, std::uint64_t seed);

  const Dims& dims() const { return dims_; }
  std::vector<nn::ParamView<T>> parameters();
  std::vector<nn::ParamView<const T>> parameters() const;

  void forward(std::span<const T> x, Cache& cache) const;
  HdlnPrediction predict(std::span<const T> x, double beta) const;
  // Level-2 global hidden representation.
  std::vector<T> hidden(std::span<const T> x) const;

  // Per-sample joint loss; adds scale * gradient into grads.
  double accumulate_gradient(std::span<const T> x, std::span<const double> target, nn::Gradients& grads,
                             double scale) const;
  double loss(std::span<const T> x, std::span<const double> target) const;

  template <typename U>
  HdlnModel<U> cast() const {
    HdlnModel<U> m;
    m.dims_ = {dims_.input, dims_.global_hidden, dims_.local_hidden};
    m.level1_ = level1_.template cast<U>();
    m.level2_ = level2_.template cast<U>();
    for (std::size_t b = 0; b < kNumCategories; ++b) m.local_[b] = local_[b].template cast<U>();
    m.global_ = global_.template cast<U>();
    return m;
  }

 private:
  template <typename>
  friend class HdlnModel;

  template <typename V, typename Self>
  static std::vector<nn::ParamView<V>> collect(Self& self);

  Dims dims_;
  nn::DenseLayer<T> level1_;
  nn::DenseLayer<T> level2_;
  std::array<nn::Mlp<T>, kNumCategories> local_;
  nn::DenseLayer<T> global_;
};

}  // namespace hdl
