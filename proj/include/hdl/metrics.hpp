#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hdl/label_schema.hpp"

namespace hdl {

// One probability vector per label block, in schema order.
using BlockDistributions = std::array<std::vector<double>, kNumCategories>;

BlockDistributions to_blocks(const PostLabelSet& labels);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

// Binary decision from a lonely block: lonely iff p(lonely) > p(non-lonely).
bool predicts_lonely(std::span<const double> lonely_block);

// Positive class is "lonely". Undefined precision/recall/F1 (zero
// denominators) are reported as 0 with the *_defined flag cleared.
struct BinaryReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
  std::size_t ties_excluded = 0;
};

BinaryReport binary_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth);

// 1 iff argmax(predicted), lowest index on ties, is one of the target's
// argmax indices.
int dist_accuracy(std::span<const double> predicted, std::span<const double> target);
double clark(std::span<const double> target, std::span<const double> predicted);
double canberra(std::span<const double> target, std::span<const double> predicted);
double cosine(std::span<const double> target, std::span<const double> predicted);
double intersection(std::span<const double> target, std::span<const double> predicted);

struct DistMetrics {
  double accuracy = 0.0;
  double clark = 0.0;
  double canberra = 0.0;
  double cosine = 0.0;
  double intersection = 0.0;
};

struct DistReport {
  Category category = Category::duration;
  std::size_t k = 0;
  std::size_t n = 0;  // examples with a non-zero target block
  DistMetrics mean;
};

// Means over the examples whose target block is not all-zero.
DistReport dist_report(Category category, std::span<const PostLabelSet> targets,
                       std::span<const BlockDistributions> predictions);

// Predictions of one trained model (one seed) keyed by post_id.
struct RunPredictions {
  std::string name;
  std::map<std::string, BlockDistributions> by_post;
};

struct MetricSummary {
  std::string category;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across runs; 0 for one run
  std::size_t runs = 0;
};

struct EvaluationReport {
  std::vector<MetricSummary> rows;
  std::size_t test_examples = 0;
  std::size_t lonely_examples = 0;
  std::size_t ties_excluded = 0;
};

struct EvalTarget {
  std::string post_id;
  PostLabelSet labels;
};

// Binary metrics over the lonely block plus distribution metrics for each
// fine-grained category, summarized as mean and std over runs.
EvaluationReport evaluate(std::span<const RunPredictions> runs, std::span<const EvalTarget> test);

// category,metric,mean,std,runs
void write_evaluation_csv(const std::filesystem::path& path, const EvaluationReport& report);

}  // namespace hdl
