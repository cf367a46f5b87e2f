#include "hdl/models.hpp"

#include <cmath>

#include "hdl/error.hpp"

namespace hdl {

namespace {

constexpr std::size_t kTensorsPerHead = 4;

template <typename T>
std::vector<double> block_softmax(std::span<const T> logits) {
  std::vector<double> probs(logits.size());
  nn::softmax<T>(logits, probs);
  return probs;
}

std::span<const double> target_block(std::span<const double> target, Category c) {
  const auto& b = schema().block(c);
  return target.subspan(b.offset, b.size());
}

bool all_zero(std::span<const double> v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

void check_target(std::span<const double> target) {
  if (target.size() != kTotalLabelDim) throw Error("shape_mismatch", "target must have 21 entries");
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::hdln ? "hdln" : "embed-mlp";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "hdln") return ModelKind::hdln;
  if (text == "embed-mlp") return ModelKind::embed_mlp;
  throw Error("invalid_argument", "unknown model kind '" + std::string(text) + "'");
}

double cross_entropy(std::span<const double> target, std::span<const double> predicted) {
  if (target.size() != predicted.size()) throw Error("shape_mismatch", "cross-entropy dims differ");
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] != 0.0) loss -= target[k] * std::log(predicted[k]);
  }
  return loss;
}

double hdl_objective(std::span<const PostLabelSet> targets, std::span<const BlockDistributions> predictions) {
  if (targets.size() != predictions.size()) {
    throw Error("shape_mismatch", "objective needs one prediction per target (" + std::to_string(targets.size()) +
                                      " vs " + std::to_string(predictions.size()) + ")");
  }
  if (targets.empty()) throw Error("invalid_argument", "objective over an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i].validate();
    for (auto c : kAllCategories) {
      const auto& p = predictions[i][index_of(c)];
      if (p.size() != schema().block(c).size()) throw Error("shape_mismatch", "prediction block size mismatch");
      total += block_weight(c) * cross_entropy(targets[i][c].values, p);
    }
  }
  return total / static_cast<double>(targets.size());
}

double hdln_loss(std::span<const PostLabelSet> targets, std::span<const HdlnPrediction> predictions) {
  if (targets.size() != predictions.size()) throw Error("shape_mismatch", "one prediction per target required");
  std::vector<BlockDistributions> local, global;
  local.reserve(predictions.size());
  global.reserve(predictions.size());
  for (const auto& p : predictions) {
    local.push_back(p.local);
    global.push_back(p.global);
  }
  return 0.5 * hdl_objective(targets, local) + 0.5 * hdl_objective(targets, global);
}

BlockDistributions blend(const HdlnPrediction& prediction, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("invalid_argument", "beta must be in [0, 1]");
  BlockDistributions out;
  for (std::size_t b = 0; b < kNumCategories; ++b) {
    const auto& l = prediction.local[b];
    const auto& g = prediction.global[b];
    if (l.size() != g.size()) throw Error("shape_mismatch", "local/global block sizes differ");
    if (beta == 1.0) {
      out[b] = l;
    } else if (beta == 0.0) {
      out[b] = g;
    } else {
      out[b].resize(l.size());
      for (std::size_t k = 0; k < l.size(); ++k) out[b][k] = beta * l[k] + (1.0 - beta) * g[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// EmbedMlpModel

template <typename T>
EmbedMlpModel<T> EmbedMlpModel<T>::create(Dims dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  EmbedMlpModel m;
  m.dims_ = dims;
  for (const auto& b : schema().blocks()) {
    const std::array<std::size_t, 3> sizes{dims.input, dims.hidden, b.size()};
    m.heads_[index_of(b.id)] = nn::Mlp<T>::create(sizes, rng);
  }
  return m;
}

template <typename T>
std::vector<nn::ParamView<T>> EmbedMlpModel<T>::parameters() {
  std::vector<nn::ParamView<T>> out;
  for (const auto& b : schema().blocks()) nn::append_mlp(out, "head." + std::string(b.name), heads_[index_of(b.id)]);
  return out;
}

template <typename T>
std::vector<nn::ParamView<const T>> EmbedMlpModel<T>::parameters() const {
  std::vector<nn::ParamView<const T>> out;
  for (const auto& b : schema().blocks()) nn::append_mlp(out, "head." + std::string(b.name), heads_[index_of(b.id)]);
  return out;
}

template <typename T>
BlockDistributions EmbedMlpModel<T>::predict(std::span<const T> x) const {
  BlockDistributions out;
  for (std::size_t b = 0; b < kNumCategories; ++b) out[b] = block_softmax<T>(heads_[b].logits(x));
  return out;
}

template <typename T>
double EmbedMlpModel<T>::accumulate_gradient(std::span<const T> x, std::span<const double> target,
                                             nn::Gradients& grads, double scale) const {
  check_target(target);
  if (grads.size() != kNumCategories * kTensorsPerHead) throw Error("shape_mismatch", "gradient layout mismatch");
  double loss = 0.0;
  nn::MlpCache<T> cache;
  std::vector<double> dlogits;
  for (auto c : kAllCategories) {
    const auto b = index_of(c);
    const auto t = target_block(target, c);
    if (all_zero(t)) continue;
    heads_[b].forward(x, cache);
    dlogits.assign(t.size(), 0.0);
    const double w = block_weight(c);
    loss += w * nn::softmax_xent<T>(cache.logits(), t, dlogits, scale * w);
    heads_[b].backward(cache, dlogits, std::span(grads).subspan(b * kTensorsPerHead, kTensorsPerHead), {});
  }
  return loss;
}

template <typename T>
double EmbedMlpModel<T>::loss(std::span<const T> x, std::span<const double> target) const {
  check_target(target);
  double loss = 0.0;
  std::vector<double> scratch;
  for (auto c : kAllCategories) {
    const auto t = target_block(target, c);
    scratch.assign(t.size(), 0.0);
    loss += block_weight(c) * nn::softmax_xent<T>(heads_[index_of(c)].logits(x), t, scratch);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// HdlnModel

template <typename T>
HdlnModel<T> HdlnModel<T>::create(Dims dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  HdlnModel m;
  m.dims_ = dims;
  m.level1_ = nn::DenseLayer<T>::glorot(dims.input, dims.global_hidden, rng);
  m.level2_ = nn::DenseLayer<T>::glorot(dims.global_hidden + dims.input, dims.global_hidden, rng);
  for (const auto& b : schema().blocks()) {
    const std::array<std::size_t, 3> sizes{dims.global_hidden, dims.local_hidden, b.size()};
    m.local_[index_of(b.id)] = nn::Mlp<T>::create(sizes, rng);
  }
  m.global_ = nn::DenseLayer<T>::glorot(dims.global_hidden, kTotalLabelDim, rng);
  return m;
}

template <typename T>
template <typename V, typename Self>
std::vector<nn::ParamView<V>> HdlnModel<T>::collect(Self& self) {
  std::vector<nn::ParamView<V>> out;
  nn::append_layer(out, "level1", self.level1_);
  nn::append_layer(out, "level2", self.level2_);
  for (const auto& b : schema().blocks()) {
    nn::append_mlp(out, "local." + std::string(b.name), self.local_[index_of(b.id)]);
  }
  nn::append_layer(out, "global", self.global_);
  return out;
}

template <typename T>
std::vector<nn::ParamView<T>> HdlnModel<T>::parameters() {
  return collect<T>(*this);
}

template <typename T>
std::vector<nn::ParamView<const T>> HdlnModel<T>::parameters() const {
  return collect<const T>(*this);
}

template <typename T>
void HdlnModel<T>::forward(std::span<const T> x, Cache& c) const {
  if (x.size() != dims_.input) {
    throw Error("shape_mismatch", "HDLN input has dim " + std::to_string(x.size()) + ", expected " +
                                      std::to_string(dims_.input));
  }
  const std::size_t h = dims_.global_hidden;
  c.pre1.resize(h);
  level1_.forward(x, c.pre1);
  c.level1.resize(h);
  for (std::size_t k = 0; k < h; ++k) c.level1[k] = std::max(c.pre1[k], T{0});

  c.joined.resize(h + x.size());
  std::copy(c.level1.begin(), c.level1.end(), c.joined.begin());
  std::copy(x.begin(), x.end(), c.joined.begin() + static_cast<std::ptrdiff_t>(h));
  c.pre2.resize(h);
  level2_.forward(c.joined, c.pre2);
  c.level2.resize(h);
  for (std::size_t k = 0; k < h; ++k) c.level2[k] = std::max(c.pre2[k], T{0});

  for (auto cat : kAllCategories) {
    const auto b = index_of(cat);
    local_[b].forward(cat == Category::lonely ? c.level1 : c.level2, c.local[b]);
  }
  c.global_logits.resize(kTotalLabelDim);
  global_.forward(c.level2, c.global_logits);
}

template <typename T>
HdlnPrediction HdlnModel<T>::predict(std::span<const T> x, double beta) const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("invalid_argument", "beta must be in [0, 1]");
  Cache c;
  forward(x, c);
  HdlnPrediction p;
  p.beta = beta;
  const std::span<const T> global_logits(c.global_logits);
  for (const auto& b : schema().blocks()) {
    const auto i = index_of(b.id);
    p.local[i] = block_softmax<T>(c.local[i].logits());
    p.global[i] = block_softmax<T>(global_logits.subspan(b.offset, b.size()));
  }
  p.blended = blend(p, beta);
  return p;
}

template <typename T>
std::vector<T> HdlnModel<T>::hidden(std::span<const T> x) const {
  Cache c;
  forward(x, c);
  return c.level2;
}

template <typename T>
double HdlnModel<T>::accumulate_gradient(std::span<const T> x, std::span<const double> target,
                                         nn::Gradients& grads, double scale) const {
  check_target(target);
  constexpr std::size_t kLocalBase = 4;
  constexpr std::size_t kGlobalBase = kLocalBase + kNumCategories * kTensorsPerHead;
  if (grads.size() != kGlobalBase + 2) throw Error("shape_mismatch", "gradient layout mismatch");

  Cache c;
  forward(x, c);
  const std::size_t h = dims_.global_hidden;
  std::vector<double> d_level1(h, 0.0), d_level2(h, 0.0), d_head(dims_.global_hidden, 0.0);
  std::vector<double> dlogits;
  double loss = 0.0;

  for (auto cat : kAllCategories) {
    const auto b = index_of(cat);
    const auto t = target_block(target, cat);
    if (all_zero(t)) continue;
    const double w = 0.5 * block_weight(cat);
    dlogits.assign(t.size(), 0.0);
    loss += w * nn::softmax_xent<T>(c.local[b].logits(), t, dlogits, scale * w);
    local_[b].backward(c.local[b], dlogits,
                       std::span(grads).subspan(kLocalBase + b * kTensorsPerHead, kTensorsPerHead), d_head);
    auto& sink = cat == Category::lonely ? d_level1 : d_level2;
    for (std::size_t k = 0; k < h; ++k) sink[k] += d_head[k];
  }

  std::vector<double> d_global(kTotalLabelDim, 0.0);
  const std::span<const T> global_logits(c.global_logits);
  for (const auto& blk : schema().blocks()) {
    const double w = 0.5 * block_weight(blk.id);
    loss += w * nn::softmax_xent<T>(global_logits.subspan(blk.offset, blk.size()),
                                    target.subspan(blk.offset, blk.size()),
                                    std::span<double>(d_global).subspan(blk.offset, blk.size()), scale * w);
  }
  global_.backward(c.level2, d_global, grads[kGlobalBase], grads[kGlobalBase + 1], d_head);
  for (std::size_t k = 0; k < h; ++k) d_level2[k] += d_head[k];

  for (std::size_t k = 0; k < h; ++k) {
    if (!(c.pre2[k] > T{0})) d_level2[k] = 0.0;
  }
  std::vector<double> d_joined(c.joined.size(), 0.0);
  level2_.backward(c.joined, d_level2, grads[2], grads[3], d_joined);
  for (std::size_t k = 0; k < h; ++k) {
    d_level1[k] += d_joined[k];
    if (!(c.pre1[k] > T{0})) d_level1[k] = 0.0;
  }
  level1_.backward(x, d_level1, grads[0], grads[1], {});
  return loss;
}

template <typename T>
double HdlnModel<T>::loss(std::span<const T> x, std::span<const double> target) const {
  check_target(target);
  Cache c;
  forward(x, c);
  double loss = 0.0;
  std::vector<double> scratch;
  const std::span<const T> global_logits(c.global_logits);
  for (const auto& blk : schema().blocks()) {
    const auto t = target.subspan(blk.offset, blk.size());
    const double w = 0.5 * block_weight(blk.id);
    scratch.assign(t.size(), 0.0);
    loss += w * nn::softmax_xent<T>(c.local[index_of(blk.id)].logits(), t, scratch);
    scratch.assign(t.size(), 0.0);
    loss += w * nn::softmax_xent<T>(global_logits.subspan(blk.offset, blk.size()), t, scratch);
  }
  return loss;
}

template class EmbedMlpModel<float>;
template class EmbedMlpModel<double>;
template class HdlnModel<float>;
template class HdlnModel<double>;

}  // namespace hdl
