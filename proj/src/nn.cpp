#include "hdl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdl/error.hpp"

namespace hdl::nn {

template <typename T>
DenseLayer<T> DenseLayer<T>::glorot(std::size_t in, std::size_t out, Rng& rng) {
  auto layer = zeros(in, out);
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : layer.weight) w = static_cast<T>(rng.uniform(-a, a));
  return layer;
}

template <typename T>
DenseLayer<T> DenseLayer<T>::zeros(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw Error("invalid_argument", "dense layer dimensions must be positive");
  return {in, out, std::vector<T>(in * out, T{0}), std::vector<T>(out, T{0})};
}

template <typename T>
void DenseLayer<T>::forward(std::span<const T> x, std::span<T> y) const {
  if (x.size() != in || y.size() != out) {
    throw Error("shape_mismatch", "dense forward expects " + std::to_string(in) + " -> " + std::to_string(out) +
                                      ", got " + std::to_string(x.size()) + " -> " + std::to_string(y.size()));
  }
  for (std::size_t o = 0; o < out; ++o) {
    const T* row = weight.data() + o * in;
    double acc = static_cast<double>(bias[o]);
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(x[i]);
    y[o] = static_cast<T>(acc);
  }
}

template <typename T>
void DenseLayer<T>::backward(std::span<const T> x, std::span<const double> dy, std::span<double> grad_weight,
                             std::span<double> grad_bias, std::span<double> dx) const {
  if (x.size() != in || dy.size() != out || grad_weight.size() != weight.size() || grad_bias.size() != out ||
      (!dx.empty() && dx.size() != in)) {
    throw Error("shape_mismatch", "dense backward shape mismatch");
  }
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    grad_bias[o] += g;
    if (g == 0.0) continue;
    double* gw = grad_weight.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) gw[i] += g * static_cast<double>(x[i]);
  }
  if (dx.empty()) return;
  std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const T* row = weight.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) dx[i] += static_cast<double>(row[i]) * g;
  }
}

template <typename T>
Mlp<T> Mlp<T>::create(std::span<const std::size_t> sizes, Rng& rng) {
  if (sizes.size() < 2) throw Error("invalid_argument", "an MLP needs input and output sizes");
  Mlp m;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    m.layers.push_back(DenseLayer<T>::glorot(sizes[i], sizes[i + 1], rng));
  }
  return m;
}

template <typename T>
void Mlp<T>::forward(std::span<const T> x, MlpCache<T>& cache) const {
  if (x.size() != input_dim()) {
    throw Error("shape_mismatch", "MLP input has dim " + std::to_string(x.size()) + ", expected " +
                                      std::to_string(input_dim()));
  }
  cache.inputs.resize(layers.size());
  cache.pre.resize(layers.size());
  cache.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cache.pre[l].resize(layers[l].out);
    layers[l].forward(cache.inputs[l], cache.pre[l]);
    if (l + 1 < layers.size()) {
      auto& next = cache.inputs[l + 1];
      next.resize(layers[l].out);
      for (std::size_t k = 0; k < next.size(); ++k) next[k] = std::max(cache.pre[l][k], T{0});
    }
  }
}

template <typename T>
std::vector<T> Mlp<T>::logits(std::span<const T> x) const {
  MlpCache<T> cache;
  forward(x, cache);
  return cache.pre.back();
}

template <typename T>
void Mlp<T>::backward(const MlpCache<T>& cache, std::span<const double> dlogits,
                      std::span<std::vector<double>> grads, std::span<double> dx) const {
  if (grads.size() != tensor_count()) throw Error("shape_mismatch", "MLP gradient tensor count mismatch");
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  std::vector<double> below;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const bool first = l == 0;
    below.assign(first ? (dx.empty() ? 0 : layers[l].in) : layers[l].in, 0.0);
    layers[l].backward(cache.inputs[l], delta, grads[2 * l], grads[2 * l + 1], below);
    if (first) break;
    // ReLU between layer l-1 and l.
    const auto& pre = cache.pre[l - 1];
    for (std::size_t k = 0; k < below.size(); ++k) {
      if (!(pre[k] > T{0})) below[k] = 0.0;
    }
    delta.swap(below);
  }
  if (!dx.empty()) std::copy(below.begin(), below.end(), dx.begin());
}

template <typename T>
void softmax(std::span<const T> logits, std::span<double> probs) {
  if (logits.size() != probs.size() || logits.empty()) throw Error("shape_mismatch", "softmax size mismatch");
  double peak = -std::numeric_limits<double>::infinity();
  for (T z : logits) {
    if (!std::isfinite(static_cast<double>(z))) throw Error("non_finite", "non-finite logit");
    peak = std::max(peak, static_cast<double>(z));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(static_cast<double>(logits[k]) - peak);
    total += probs[k];
  }
  for (double& p : probs) p /= total;
}

template <typename T>
double softmax_xent(std::span<const T> logits, std::span<const double> target, std::span<double> grad,
                    double weight) {
  const std::size_t k = logits.size();
  if (target.size() != k || grad.size() != k || k == 0) throw Error("shape_mismatch", "cross-entropy size mismatch");
  double peak = -std::numeric_limits<double>::infinity();
  for (T z : logits) {
    if (!std::isfinite(static_cast<double>(z))) throw Error("non_finite", "non-finite logit");
    peak = std::max(peak, static_cast<double>(z));
  }
  double sum_exp = 0.0;
  for (T z : logits) sum_exp += std::exp(static_cast<double>(z) - peak);
  const double log_norm = peak + std::log(sum_exp);

  double mass = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mass += target[i];
    if (target[i] != 0.0) loss -= target[i] * (static_cast<double>(logits[i]) - log_norm);
  }
  if (mass == 0.0) return 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double q = std::exp(static_cast<double>(logits[i]) - log_norm);
    grad[i] += weight * (mass * q - target[i]);
  }
  return loss;
}

template <typename T>
BlockXent blockwise_softmax_xent(std::span<const T> logits, std::span<const double> target) {
  if (logits.size() != kTotalLabelDim || target.size() != kTotalLabelDim) {
    throw Error("shape_mismatch", "blockwise cross-entropy expects 21 logits and 21 targets");
  }
  BlockXent out;
  for (const auto& b : schema().blocks()) {
    out.block_loss[index_of(b.id)] =
        softmax_xent<T>(logits.subspan(b.offset, b.size()), target.subspan(b.offset, b.size()),
                        std::span<double>(out.grad).subspan(b.offset, b.size()));
  }
  return out;
}

AdamW::AdamW(AdamWConfig config, const std::vector<std::size_t>& shapes) : config_(config) {
  for (auto n : shapes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

template <typename T>
void AdamW::step(std::span<const ParamView<T>> params, const Gradients& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error("shape_mismatch", "optimizer tensor count mismatch");
  }
  if (!(lr >= 0.0)) throw Error("invalid_argument", "learning rate must be non-negative");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != m_[t].size() || grads[t].size() != m_[t].size()) {
      throw Error("shape_mismatch", "optimizer shape mismatch for " + params[t].name);
    }
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw Error("non_finite", "non-finite gradient in " + params[t].name);
    }
  }
  ++step_count_;
  const auto step = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, step);
  const double bc2 = 1.0 - std::pow(config_.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].values;
    auto& m = m_[t];
    auto& v = v_[t];
    const auto& g = grads[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      double theta = static_cast<double>(values[i]);
      theta -= lr * config_.weight_decay * theta;
      theta -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      values[i] = static_cast<T>(theta);
    }
  }
}

std::size_t LrSchedule::warmup_steps() const {
  const double raw = warmup_ratio * static_cast<double>(total_steps);
  const double nearest = std::round(raw);
  // ratio * total is often an integer up to rounding (0.1 * 100); don't let
  // the representation error push ceil() one step higher.
  auto steps = static_cast<std::size_t>(std::abs(raw - nearest) < 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw));
  return std::min(steps, total_steps - 1);
}

void LrSchedule::validate() const {
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw Error("invalid_argument", "warmup ratio must be in [0, 1)");
  if (total_steps < 1) throw Error("invalid_argument", "total_steps must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw Error("invalid_argument", "base learning rate must be >= 0");
}

double lr_at_step(const LrSchedule& schedule, std::size_t step) {
  schedule.validate();
  if (step > schedule.total_steps) {
    throw Error("invalid_argument", "step " + std::to_string(step) + " beyond total " +
                                        std::to_string(schedule.total_steps));
  }
  const std::size_t warmup = schedule.warmup_steps();
  if (step < warmup) return schedule.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return schedule.base_lr * static_cast<double>(schedule.total_steps - step) /
         static_cast<double>(schedule.total_steps - warmup);
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<const ParamView<double>> params,
                           const Gradients& analytic, const GradCheckOptions& options) {
  if (analytic.size() != params.size()) throw Error("shape_mismatch", "gradient tensor count mismatch");
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(derive_seed(options.seed, "gradcheck"));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].values;
    if (analytic[t].size() != values.size()) throw Error("shape_mismatch", "gradient shape mismatch for " + params[t].name);

    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > options.min_coords) {
      for (std::size_t i = 0; i < options.min_coords; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.min_coords);
    }

    TensorCheck check{params[t].name, coords.size(), 0.0, 0, 0.0, 0.0};
    for (auto i : coords) {
      const double original = values[i];
      const double h = 1e-5 * std::max(1.0, std::abs(original));
      values[i] = original + h;
      const double up = loss();
      const double h_up = values[i] - original;
      values[i] = original - h;
      const double down = loss();
      const double h_down = original - values[i];
      values[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw Error("non_finite", "non-finite loss while checking " + params[t].name);
      }
      const double numeric = (up - down) / (h_up + h_down);
      const double a = analytic[t][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      if (rel >= check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = i;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(std::move(check));
  }
  return report;
}

template struct DenseLayer<float>;
template struct DenseLayer<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template void softmax<float>(std::span<const float>, std::span<double>);
template void softmax<double>(std::span<const double>, std::span<double>);
template double softmax_xent<float>(std::span<const float>, std::span<const double>, std::span<double>, double);
template double softmax_xent<double>(std::span<const double>, std::span<const double>, std::span<double>, double);
template BlockXent blockwise_softmax_xent<float>(std::span<const float>, std::span<const double>);
template BlockXent blockwise_softmax_xent<double>(std::span<const double>, std::span<const double>);
template void AdamW::step<float>(std::span<const ParamView<float>>, const Gradients&, double);
template void AdamW::step<double>(std::span<const ParamView<double>>, const Gradients&, double);

}  // namespace hdl::nn
