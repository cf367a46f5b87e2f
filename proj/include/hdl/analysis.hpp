#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdl/label_schema.hpp"
#include "hdl/metrics.hpp"

namespace hdl {

// One post as seen by the corpus analyses: either its annotation-derived
// labels or a model's predicted distributions.
struct AnalysisItem {
  std::string post_id;
  std::string group;
  std::optional<int> month_index;
  bool lonely = false;
  BlockDistributions blocks;

  // lonely = the post carries fine-grained mass.
  static AnalysisItem from_labels(std::string post_id, std::string group, const PostLabelSet& labels,
                                  std::optional<int> month_index);
  // lonely = the predicted lonely block favors "lonely".
  static AnalysisItem from_prediction(std::string post_id, std::string group, BlockDistributions blocks,
                                      std::optional<int> month_index);
};

struct CompositionRow {
  std::string group;
  Category category;
  std::vector<std::string> labels;
  std::vector<double> percent;  // sums to 100
  std::size_t posts = 0;
};

struct CompositionTable {
  std::vector<CompositionRow> rows;  // by group, then fine-grained category
};

// Per group (lonely posts only) and fine-grained category: the mean
// distribution with NA removed and renormalized, as percentages. Interaction
// has no NA label and is reported as the plain mean.
CompositionTable composition_table(std::span<const AnalysisItem> items);

enum class ConditionalMode { soft, argmax };

std::string_view to_string(ConditionalMode mode);
ConditionalMode parse_conditional_mode(std::string_view text);

struct CopingConditional {
  Category condition;
  std::string condition_label;
  ConditionalMode mode = ConditionalMode::soft;
  std::vector<double> distribution;  // over interaction labels, sums to 1
  double condition_mass = 0.0;
  std::size_t posts = 0;  // lonely posts that entered the denominator
};

// soft:   P(j | i) = sum d_i a_j / sum d_i, with d the NA-dropped condition
//         distribution and a the interaction distribution.
// argmax: fraction of posts whose condition argmax is i that have
//         interaction argmax j.
// Lonely posts only; NA-only condition blocks are skipped.
CopingConditional coping_conditionals(std::span<const AnalysisItem> items, Category condition,
                                      std::string_view condition_label,
                                      ConditionalMode mode = ConditionalMode::soft);

struct ItsSeries {
  std::vector<int> months;  // strictly increasing
  std::vector<double> y;
  int intervention_month = 26;  // March 2020

  void validate() const;
};

struct MonthlySeries {
  ItsSeries series;
  std::vector<std::size_t> posts;     // contributing posts per emitted month
  std::vector<int> missing_months;    // no posts at all
  std::vector<int> excluded_months;   // posts present but all NA-only
};

// Per month, mean mass on `label`. For the lonely category every post counts;
// for fine-grained categories lonely posts only, after NA-dropping.
MonthlySeries monthly_proportions(std::span<const AnalysisItem> items, Category category,
                                  std::string_view label, int intervention_month = 26);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct ItsTerm {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t = 0.0;
  double p_value = 1.0;
  Interval ci95;
  Interval ci90;
};

struct ItsFit {
  std::array<ItsTerm, 4> terms;  // b0 intercept, b1 T, b2 D, b3 M
  std::vector<double> fitted;
  std::vector<double> residuals;
  double r_squared = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
  std::size_t df = 0;
};

// Y = b0 + b1 T + b2 D + b3 M + e with D = 1(T >= intervention) and
// M = max(0, T - intervention), solved by Householder QR. Classical standard
// errors, two-sided t tests on n - 4 degrees of freedom.
ItsFit its_fit(const ItsSeries& series);

// Design matrix rows [1, T, D, M].
std::vector<std::array<double, 4>> its_design(const ItsSeries& series);

void write_composition_csv(const std::filesystem::path& path, const CompositionTable& table);
void write_coping_csv(const std::filesystem::path& path, std::span<const CopingConditional> rows);
void write_monthly_csv(const std::filesystem::path& path, const MonthlySeries& series);
void write_its_csv(const std::filesystem::path& path, const ItsFit& fit);
void write_its_series_csv(const std::filesystem::path& path, const ItsSeries& series, const ItsFit& fit);

}  // namespace hdl
