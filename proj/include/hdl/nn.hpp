#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hdl/label_schema.hpp"
#include "hdl/rng.hpp"

// Small dense-network toolkit. Parameters are stored as T (float for
// training, double for gradient checks); every reduction, gradient and
// optimizer moment is carried in double.
namespace hdl::nn {

template <typename T>
struct ParamView {
  std::string name;
  std::span<T> values;
};

// Gradient buffers aligned one-to-one with a model's parameters().
using Gradients = std::vector<std::vector<double>>;

template <typename T>
Gradients zero_gradients(std::span<const ParamView<T>> params) {
  Gradients g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.values.size(), 0.0);
  return g;
}

inline void clear(Gradients& grads) {
  for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
}

template <typename T>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weight;  // out x in, row-major
  std::vector<T> bias;

  // uniform(-a, a) weights with a = sqrt(6 / (in + out)); zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Rng& rng);
  static DenseLayer zeros(std::size_t in, std::size_t out);

  void forward(std::span<const T> x, std::span<T> y) const;
  // Accumulates into grad_weight / grad_bias; overwrites dx unless it is empty.
  void backward(std::span<const T> x, std::span<const double> dy, std::span<double> grad_weight,
                std::span<double> grad_bias, std::span<double> dx) const;

  template <typename U>
  DenseLayer<U> cast() const {
    return {in, out, std::vector<U>(weight.begin(), weight.end()), std::vector<U>(bias.begin(), bias.end())};
  }
};

template <typename T>
struct MlpCache {
  std::vector<std::vector<T>> inputs;  // input to each layer (post-ReLU for hidden layers)
  std::vector<std::vector<T>> pre;     // pre-activation outputs; pre.back() holds the logits

  std::span<const T> logits() const { return pre.back(); }
};

// Dense layers with ReLU between them and linear output.
template <typename T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  // sizes = {input, hidden..., output}.
  static Mlp create(std::span<const std::size_t> sizes, Rng& rng);

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }
  std::size_t tensor_count() const { return 2 * layers.size(); }

  void forward(std::span<const T> x, MlpCache<T>& cache) const;
  std::vector<T> logits(std::span<const T> x) const;
  // grads holds 2 tensors per layer (weight, bias) in layer order.
  void backward(const MlpCache<T>& cache, std::span<const double> dlogits,
                std::span<std::vector<double>> grads, std::span<double> dx) const;

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> m;
    for (const auto& l : layers) m.layers.push_back(l.template cast<U>());
    return m;
  }
};

// V is T or const T, so the same walk serves mutable and read-only views.
template <typename V, typename Layer>
void append_layer(std::vector<ParamView<V>>& out, const std::string& name, Layer& layer) {
  out.push_back({name + ".weight", std::span<V>(layer.weight)});
  out.push_back({name + ".bias", std::span<V>(layer.bias)});
}

template <typename V, typename Net>
void append_mlp(std::vector<ParamView<V>>& out, const std::string& name, Net& mlp) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    append_layer(out, name + ".layer" + std::to_string(l), mlp.layers[l]);
  }
}

// Max-shifted softmax of one block, computed in double.
template <typename T>
void softmax(std::span<const T> logits, std::span<double> probs);

// Cross-entropy -sum_k p_k log q_k of a target against softmax(logits).
// Adds weight * ((sum_k p_k) q - p) to grad. An all-zero target yields zero
// loss and zero gradient. Throws Error("non_finite") on NaN/Inf logits.
template <typename T>
double softmax_xent(std::span<const T> logits, std::span<const double> target,
                    std::span<double> grad, double weight = 1.0);

struct BlockXent {
  std::array<double, kNumCategories> block_loss{};
  std::array<double, kTotalLabelDim> grad{};
};

// Per-block softmax cross-entropy over 21 concatenated logits.
template <typename T>
BlockXent blockwise_softmax_xent(std::span<const T> logits, std::span<const double> target);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamWConfig config, const std::vector<std::size_t>& shapes);

  template <typename T>
  static AdamW for_params(AdamWConfig config, std::span<const ParamView<T>> params) {
    std::vector<std::size_t> shapes;
    for (const auto& p : params) shapes.push_back(p.values.size());
    return AdamW(config, shapes);
  }

  // One bias-corrected update with decoupled weight decay.
  template <typename T>
  void step(std::span<const ParamView<T>> params, const Gradients& grads, double lr);

  std::uint64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

 private:
  AdamWConfig config_;
  std::uint64_t step_count_ = 0;
  Gradients m_;
  Gradients v_;
};

// Linear warmup from 0 to base_lr over ceil(warmup_ratio * total_steps) steps,
// then linear decay to 0 at total_steps.
struct LrSchedule {
  double base_lr = 2e-5;
  double warmup_ratio = 0.1;
  std::size_t total_steps = 1;

  std::size_t warmup_steps() const;
  void validate() const;
};

double lr_at_step(const LrSchedule& schedule, std::size_t step);

struct GradCheckOptions {
  std::size_t min_coords = 64;  // per tensor; smaller tensors are checked exhaustively
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double denominator_floor = 1e-6;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

// Central differences with h = 1e-5 * max(1, |theta|). Relative error is
// |a - n| / max(|a|, |n|, denominator_floor).
GradCheckReport grad_check(const std::function<double()>& loss, std::span<const ParamView<double>> params,
                           const Gradients& analytic, const GradCheckOptions& options = {});

}  // namespace hdl::nn
