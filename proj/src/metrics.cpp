#include "hdl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hdl/error.hpp"
#include "hdl/io.hpp"

namespace hdl {

namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error("shape_mismatch", "distribution dims differ: " + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()));
  }
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

BlockDistributions to_blocks(const PostLabelSet& labels) {
  BlockDistributions out;
  for (auto c : kAllCategories) out[index_of(c)] = labels[c].values;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error("shape_mismatch", "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

bool predicts_lonely(std::span<const double> lonely_block) {
  if (lonely_block.size() != 2) throw Error("shape_mismatch", "lonely block must have 2 entries");
  return lonely_block[1] > lonely_block[0];
}

BinaryReport binary_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size()) {
    throw Error("shape_mismatch", "prediction/label length mismatch: " + std::to_string(predicted.size()) +
                                      " vs " + std::to_string(truth.size()));
  }
  if (predicted.empty()) throw Error("invalid_argument", "binary metrics need at least one example");
  BinaryReport r;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && truth[i]) ++r.tp;
    else if (predicted[i] && !truth[i]) ++r.fp;
    else if (!predicted[i] && truth[i]) ++r.fn;
    else ++r.tn;
  }
  const auto n = static_cast<double>(predicted.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;
  r.precision_defined = r.tp + r.fp > 0;
  r.recall_defined = r.tp + r.fn > 0;
  if (r.precision_defined) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.recall_defined) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.f1_defined = r.precision_defined && r.recall_defined && r.precision + r.recall > 0.0;
  if (r.f1_defined) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

int dist_accuracy(std::span<const double> predicted, std::span<const double> target) {
  require_same_dim(predicted, target);
  const double peak = *std::max_element(target.begin(), target.end());
  if (!(peak > 0.0)) throw Error("invalid_argument", "accuracy undefined for an all-zero target");
  return target[argmax(predicted)] == peak ? 1 : 0;
}

double clark(std::span<const double> target, std::span<const double> predicted) {
  require_same_dim(target, predicted);
  double s = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double den = target[k] + predicted[k];
    if (den == 0.0) continue;
    const double r = (target[k] - predicted[k]) / den;
    s += r * r;
  }
  return std::sqrt(s);
}

double canberra(std::span<const double> target, std::span<const double> predicted) {
  require_same_dim(target, predicted);
  double s = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double den = target[k] + predicted[k];
    if (den == 0.0) continue;
    s += std::abs(target[k] - predicted[k]) / den;
  }
  return s;
}

double cosine(std::span<const double> target, std::span<const double> predicted) {
  require_same_dim(target, predicted);
  double dot = 0.0, nt = 0.0, np = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    dot += target[k] * predicted[k];
    nt += target[k] * target[k];
    np += predicted[k] * predicted[k];
  }
  if (nt == 0.0 || np == 0.0) throw Error("invalid_argument", "cosine similarity with a zero vector");
  return dot / (std::sqrt(nt) * std::sqrt(np));
}

double intersection(std::span<const double> target, std::span<const double> predicted) {
  require_same_dim(target, predicted);
  double s = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) s += std::min(target[k], predicted[k]);
  return s;
}

DistReport dist_report(Category category, std::span<const PostLabelSet> targets,
                       std::span<const BlockDistributions> predictions) {
  if (targets.size() != predictions.size()) throw Error("shape_mismatch", "targets/predictions length mismatch");
  DistReport r;
  r.category = category;
  r.k = schema().block(category).size();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& d = targets[i][category];
    if (d.is_all_zero()) continue;
    const auto& p = predictions[i][index_of(category)];
    r.mean.accuracy += dist_accuracy(p, d.values);
    r.mean.clark += clark(d.values, p);
    r.mean.canberra += canberra(d.values, p);
    r.mean.cosine += cosine(d.values, p);
    r.mean.intersection += intersection(d.values, p);
    ++r.n;
  }
  if (r.n == 0) {
    throw Error("no_lonely_examples", "no lonely-labeled examples for " + std::string(schema().block(category).name));
  }
  const auto n = static_cast<double>(r.n);
  r.mean.accuracy /= n;
  r.mean.clark /= n;
  r.mean.canberra /= n;
  r.mean.cosine /= n;
  r.mean.intersection /= n;
  return r;
}

EvaluationReport evaluate(std::span<const RunPredictions> runs, std::span<const EvalTarget> test) {
  if (runs.empty()) throw Error("invalid_argument", "evaluation needs at least one run");
  if (test.empty()) throw Error("invalid_argument", "empty test set");

  std::vector<PostLabelSet> targets;
  targets.reserve(test.size());
  for (const auto& t : test) targets.push_back(t.labels);

  EvaluationReport report;
  report.test_examples = test.size();
  for (const auto& t : targets) report.lonely_examples += t.has_fine_grained() ? 1 : 0;
  if (report.lonely_examples == 0) throw Error("no_lonely_examples", "test set has no lonely-labeled examples");

  // (category, metric) -> per-run values, in emission order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  auto record = [&](const std::string& category, const std::string& metric, double v) {
    auto key = std::make_pair(category, metric);
    auto [it, inserted] = values.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(v);
  };

  for (const auto& run : runs) {
    std::vector<BlockDistributions> preds;
    preds.reserve(test.size());
    for (const auto& t : test) {
      auto it = run.by_post.find(t.post_id);
      if (it == run.by_post.end()) {
        throw Error("missing_prediction", "run '" + run.name + "' has no prediction for '" + t.post_id + "'");
      }
      preds.push_back(it->second);
    }

    std::vector<bool> predicted, truth;
    std::size_t ties = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto& lv = targets[i].lonely().values;
      if (lv[0] == lv[1]) {
        ++ties;
        continue;
      }
      truth.push_back(lv[1] > lv[0]);
      predicted.push_back(predicts_lonely(preds[i][0]));
    }
    const auto bin = binary_metrics(predicted, truth);
    report.ties_excluded = ties;
    record("binary", "accuracy", bin.accuracy);
    record("binary", "precision", bin.precision);
    record("binary", "recall", bin.recall);
    record("binary", "f1", bin.f1);

    for (auto c : kFineGrainedCategories) {
      const auto d = dist_report(c, targets, preds);
      const std::string name(schema().block(c).name);
      record(name, "accuracy", d.mean.accuracy);
      record(name, "clark", d.mean.clark);
      record(name, "canberra", d.mean.canberra);
      record(name, "cosine", d.mean.cosine);
      record(name, "intersection", d.mean.intersection);
    }
  }

  for (const auto& key : keys) {
    const auto& xs = values[key];
    report.rows.push_back(MetricSummary{key.first, key.second, mean_of(xs), sample_std(xs), xs.size()});
  }
  return report;
}

void write_evaluation_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  CsvWriter csv(path);
  csv.row({"category", "metric", "mean", "std", "runs"});
  for (const auto& r : report.rows) {
    csv.row({r.category, r.metric, format_fixed(r.mean, 6), format_fixed(r.std, 6), std::to_string(r.runs)});
  }
}

}  // namespace hdl
