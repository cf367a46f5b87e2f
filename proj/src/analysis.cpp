#include "hdl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>

#include "hdl/error.hpp"
#include "hdl/io.hpp"

namespace hdl {

namespace {

constexpr std::size_t kItsParams = 4;

std::vector<double> drop_na(Category c, const std::vector<double>& values) {
  return normalize_drop_na(DistributionalLabel{c, values});
}

std::size_t label_index(Category c, std::string_view label) {
  const auto& block = schema().block(c);
  const auto idx = block.index_of(label);
  if (!idx) {
    throw Error("invalid_argument", "unknown label '" + std::string(label) + "' in " + std::string(block.name));
  }
  return *idx;
}

std::vector<std::string> label_names(Category c, bool without_na) {
  const auto& block = schema().block(c);
  std::vector<std::string> out;
  const std::size_t n = without_na && block.has_na ? block.size() - 1 : block.size();
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(block.labels[i]);
  return out;
}

void check_blocks(const BlockDistributions& blocks, const std::string& post_id) {
  for (auto c : kAllCategories) {
    if (blocks[index_of(c)].size() != schema().block(c).size()) {
      throw Error("shape_mismatch", "post '" + post_id + "' has a malformed " +
                                        std::string(schema().block(c).name) + " block");
    }
  }
}

}  // namespace

AnalysisItem AnalysisItem::from_labels(std::string post_id, std::string group, const PostLabelSet& labels,
                                       std::optional<int> month_index) {
  AnalysisItem item{std::move(post_id), std::move(group), month_index, labels.has_fine_grained(),
                    to_blocks(labels)};
  return item;
}

AnalysisItem AnalysisItem::from_prediction(std::string post_id, std::string group, BlockDistributions blocks,
                                           std::optional<int> month_index) {
  check_blocks(blocks, post_id);
  const bool lonely = predicts_lonely(blocks[0]);
  return AnalysisItem{std::move(post_id), std::move(group), month_index, lonely, std::move(blocks)};
}

CompositionTable composition_table(std::span<const AnalysisItem> items) {
  std::map<std::string, std::vector<const AnalysisItem*>> groups;
  for (const auto& item : items) {
    if (item.lonely) groups[item.group].push_back(&item);
  }
  if (groups.empty()) throw Error("no_lonely_examples", "composition needs at least one lonely post");

  CompositionTable table;
  for (const auto& [group, members] : groups) {
    for (auto c : kFineGrainedCategories) {
      const auto& block = schema().block(c);
      std::vector<double> mean(block.size(), 0.0);
      for (const auto* item : members) {
        const auto& v = item->blocks[index_of(c)];
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
      }
      for (double& m : mean) m /= static_cast<double>(members.size());

      std::vector<double> share;
      if (block.has_na) {
        try {
          share = drop_na(c, mean);
        } catch (const Error& e) {
          if (e.code() != "na_only") throw;
          throw Error("na_only", "group '" + group + "' has only NA mass in " + std::string(block.name));
        }
      } else {
        double total = 0.0;
        for (double m : mean) total += m;
        if (!(total > 0.0)) {
          throw Error("invalid_label", "group '" + group + "' has no " + std::string(block.name) + " mass");
        }
        for (double m : mean) share.push_back(m / total);
      }

      CompositionRow row{group, c, label_names(c, true), {}, members.size()};
      for (double s : share) row.percent.push_back(100.0 * s);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string_view to_string(ConditionalMode mode) { return mode == ConditionalMode::soft ? "soft" : "argmax"; }

ConditionalMode parse_conditional_mode(std::string_view text) {
  if (text == "soft") return ConditionalMode::soft;
  if (text == "argmax") return ConditionalMode::argmax;
  throw Error("invalid_argument", "unknown conditional mode '" + std::string(text) + "' (soft|argmax)");
}

CopingConditional coping_conditionals(std::span<const AnalysisItem> items, Category condition,
                                      std::string_view condition_label, ConditionalMode mode) {
  if (condition == Category::lonely || condition == Category::interaction) {
    throw Error("invalid_argument", "condition category must be duration, context or interpersonal");
  }
  const auto& block = schema().block(condition);
  const std::size_t i = label_index(condition, condition_label);
  if (i == block.na_index()) throw Error("invalid_argument", "cannot condition on the NA label");

  const std::size_t k = schema().block(Category::interaction).size();
  CopingConditional out{condition, std::string(condition_label), mode, std::vector<double>(k, 0.0), 0.0, 0};
  for (const auto& item : items) {
    if (!item.lonely) continue;
    std::vector<double> d;
    try {
      d = drop_na(condition, item.blocks[index_of(condition)]);
    } catch (const Error& e) {
      if (e.code() != "na_only") throw;
      continue;
    }
    const auto& a = item.blocks[index_of(Category::interaction)];
    if (mode == ConditionalMode::soft) {
      if (d[i] == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) out.distribution[j] += d[i] * a[j];
      out.condition_mass += d[i];
    } else {
      if (argmax(d) != i) continue;
      out.distribution[argmax(a)] += 1.0;
      out.condition_mass += 1.0;
    }
    ++out.posts;
  }
  if (!(out.condition_mass > 0.0)) {
    throw Error("zero_condition_mass", "no mass on " + std::string(block.name) + "=" + std::string(condition_label));
  }
  for (double& v : out.distribution) v /= out.condition_mass;
  return out;
}

void ItsSeries::validate() const {
  if (months.size() != y.size()) throw Error("shape_mismatch", "series months/values length mismatch");
  for (std::size_t t = 0; t < months.size(); ++t) {
    if (t > 0 && months[t] <= months[t - 1]) throw Error("invalid_series", "months must be strictly increasing");
    if (!std::isfinite(y[t])) throw Error("invalid_series", "non-finite value at month " + std::to_string(months[t]));
  }
}

MonthlySeries monthly_proportions(std::span<const AnalysisItem> items, Category category,
                                  std::string_view label, int intervention_month) {
  const auto& block = schema().block(category);
  const std::size_t idx = label_index(category, label);
  const bool fine = category != Category::lonely;
  if (fine && block.has_na && idx == block.na_index()) {
    throw Error("invalid_argument", "NA is removed before computing proportions");
  }
  if (items.empty()) throw Error("empty_group", "no posts in the selected group");

  struct Acc {
    double mass = 0.0;
    std::size_t posts = 0;
    std::size_t seen = 0;
  };
  std::map<int, Acc> by_month;
  for (const auto& item : items) {
    if (!item.month_index) throw Error("missing_month", "post '" + item.post_id + "' has no month_index");
    auto& acc = by_month[*item.month_index];
    ++acc.seen;
    if (fine && !item.lonely) continue;
    const auto& v = item.blocks[index_of(category)];
    double mass = v[idx];
    if (block.has_na) {
      try {
        mass = drop_na(category, v)[idx];
      } catch (const Error& e) {
        if (e.code() != "na_only") throw;
        continue;
      }
    }
    acc.mass += mass;
    ++acc.posts;
  }

  MonthlySeries out;
  out.series.intervention_month = intervention_month;
  const int first = by_month.begin()->first;
  const int last = by_month.rbegin()->first;
  for (int m = first; m <= last; ++m) {
    auto it = by_month.find(m);
    if (it == by_month.end()) {
      out.missing_months.push_back(m);
    } else if (it->second.posts == 0) {
      out.excluded_months.push_back(m);
    } else {
      out.series.months.push_back(m);
      out.series.y.push_back(it->second.mass / static_cast<double>(it->second.posts));
      out.posts.push_back(it->second.posts);
    }
  }
  return out;
}

std::vector<std::array<double, 4>> its_design(const ItsSeries& series) {
  std::vector<std::array<double, 4>> x;
  x.reserve(series.months.size());
  for (int t : series.months) {
    const bool post = t >= series.intervention_month;
    x.push_back({1.0, static_cast<double>(t), post ? 1.0 : 0.0,
                 post ? static_cast<double>(t - series.intervention_month) : 0.0});
  }
  return x;
}

ItsFit its_fit(const ItsSeries& series) {
  series.validate();
  const std::size_t n = series.months.size();
  if (n < 6) throw Error("insufficient_data", "interrupted time series needs at least 6 months, got " + std::to_string(n));
  const auto pre = static_cast<std::size_t>(
      std::count_if(series.months.begin(), series.months.end(), [&](int t) { return t < series.intervention_month; }));
  if (pre == 0 || pre == n) {
    throw Error("rank_deficient", "series must have months on both sides of the intervention");
  }

  // Householder QR of the n x 4 design, applied in place to a copy of y.
  auto a = its_design(series);
  std::vector<double> qty = series.y;
  std::array<double, kItsParams> col_norm{};
  for (std::size_t j = 0; j < kItsParams; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += a[r][j] * a[r][j];
    col_norm[j] = std::sqrt(s);
  }
  std::vector<double> v(n);
  for (std::size_t k = 0; k < kItsParams; ++k) {
    double norm = 0.0;
    for (std::size_t r = k; r < n; ++r) norm += a[r][k] * a[r][k];
    norm = std::sqrt(norm);
    if (norm <= 1e-10 * col_norm[k] || norm == 0.0) {
      throw Error("rank_deficient", "interrupted time-series design is rank deficient");
    }
    const double alpha = a[k][k] > 0.0 ? -norm : norm;
    double vnorm2 = 0.0;
    for (std::size_t r = k; r < n; ++r) {
      v[r] = a[r][k] - (r == k ? alpha : 0.0);
      vnorm2 += v[r] * v[r];
    }
    for (std::size_t j = k; j < kItsParams; ++j) {
      double dot = 0.0;
      for (std::size_t r = k; r < n; ++r) dot += v[r] * a[r][j];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = k; r < n; ++r) a[r][j] -= f * v[r];
    }
    double dot = 0.0;
    for (std::size_t r = k; r < n; ++r) dot += v[r] * qty[r];
    const double f = 2.0 * dot / vnorm2;
    for (std::size_t r = k; r < n; ++r) qty[r] -= f * v[r];
  }

  // Back substitution, and R^-1 for the covariance.
  std::array<double, kItsParams> b{};
  for (std::size_t i = kItsParams; i-- > 0;) {
    double s = qty[i];
    for (std::size_t j = i + 1; j < kItsParams; ++j) s -= a[i][j] * b[j];
    b[i] = s / a[i][i];
  }
  std::array<std::array<double, kItsParams>, kItsParams> rinv{};
  for (std::size_t c = 0; c < kItsParams; ++c) {
    for (std::size_t i = kItsParams; i-- > 0;) {
      double s = i == c ? 1.0 : 0.0;
      for (std::size_t j = i + 1; j < kItsParams; ++j) s -= a[i][j] * rinv[j][c];
      rinv[i][c] = s / a[i][i];
    }
  }

  ItsFit fit;
  fit.n = n;
  fit.df = n - kItsParams;
  const auto x = its_design(series);
  double sse = 0.0, ybar = 0.0;
  for (double y : series.y) ybar += y;
  ybar /= static_cast<double>(n);
  double sst = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double f = 0.0;
    for (std::size_t j = 0; j < kItsParams; ++j) f += x[r][j] * b[j];
    fit.fitted.push_back(f);
    fit.residuals.push_back(series.y[r] - f);
    sse += fit.residuals.back() * fit.residuals.back();
    sst += (series.y[r] - ybar) * (series.y[r] - ybar);
  }
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : (sse == 0.0 ? 1.0 : 0.0);
  const double s2 = sse / static_cast<double>(fit.df);
  fit.sigma = std::sqrt(s2);

  const boost::math::students_t dist(static_cast<double>(fit.df));
  const double q975 = boost::math::quantile(boost::math::complement(dist, 0.025));
  const double q95 = boost::math::quantile(boost::math::complement(dist, 0.05));
  static const std::array<const char*, kItsParams> names = {"b0_intercept", "b1_time", "b2_level_change",
                                                             "b3_slope_change"};
  for (std::size_t j = 0; j < kItsParams; ++j) {
    double var = 0.0;
    for (std::size_t c = 0; c < kItsParams; ++c) var += rinv[j][c] * rinv[j][c];
    auto& term = fit.terms[j];
    term.name = names[j];
    term.estimate = b[j];
    term.std_error = std::sqrt(s2 * var);
    if (term.std_error > 0.0) {
      term.t = b[j] / term.std_error;
      term.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(term.t)));
    } else {
      term.t = b[j] == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b[j]);
      term.p_value = b[j] == 0.0 ? 1.0 : 0.0;
    }
    term.ci95 = {b[j] - q975 * term.std_error, b[j] + q975 * term.std_error};
    term.ci90 = {b[j] - q95 * term.std_error, b[j] + q95 * term.std_error};
  }
  return fit;
}

void write_composition_csv(const std::filesystem::path& path, const CompositionTable& table) {
  CsvWriter csv(path);
  csv.row({"group", "category", "label", "percent", "posts"});
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.labels.size(); ++k) {
      csv.row({row.group, std::string(schema().block(row.category).name), row.labels[k],
               format_fixed(row.percent[k], 6), std::to_string(row.posts)});
    }
  }
}

void write_coping_csv(const std::filesystem::path& path, std::span<const CopingConditional> rows) {
  CsvWriter csv(path);
  csv.row({"condition_category", "condition_label", "mode", "interaction", "probability", "condition_mass", "posts"});
  const auto names = label_names(Category::interaction, false);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      csv.row({std::string(schema().block(r.condition).name), r.condition_label, std::string(to_string(r.mode)),
               names[j], format_fixed(r.distribution[j], 9), format_fixed(r.condition_mass, 9),
               std::to_string(r.posts)});
    }
  }
}

void write_monthly_csv(const std::filesystem::path& path, const MonthlySeries& series) {
  CsvWriter csv(path);
  csv.row({"month", "y", "posts", "status"});
  std::map<int, std::vector<std::string>> rows;
  for (std::size_t t = 0; t < series.series.months.size(); ++t) {
    const int m = series.series.months[t];
    rows[m] = {std::to_string(m), format_fixed(series.series.y[t], 9), std::to_string(series.posts[t]), "ok"};
  }
  for (int m : series.missing_months) rows[m] = {std::to_string(m), "", "0", "missing"};
  for (int m : series.excluded_months) rows[m] = {std::to_string(m), "", "0", "na_only"};
  for (const auto& [m, row] : rows) csv.row(row);
}

void write_its_csv(const std::filesystem::path& path, const ItsFit& fit) {
  CsvWriter csv(path);
  csv.row({"term", "estimate", "std_error", "t", "p_value", "ci95_low", "ci95_high", "ci90_low", "ci90_high"});
  for (const auto& t : fit.terms) {
    csv.row({t.name, format_fixed(t.estimate, 9), format_fixed(t.std_error, 9), format_fixed(t.t, 6),
             format_fixed(t.p_value, 6), format_fixed(t.ci95.low, 9), format_fixed(t.ci95.high, 9),
             format_fixed(t.ci90.low, 9), format_fixed(t.ci90.high, 9)});
  }
  csv.row({"r_squared", format_fixed(fit.r_squared, 9), "", "", "", "", "", "", ""});
}

void write_its_series_csv(const std::filesystem::path& path, const ItsSeries& series, const ItsFit& fit) {
  CsvWriter csv(path);
  csv.row({"month", "y", "fitted", "segment"});
  for (std::size_t t = 0; t < series.months.size(); ++t) {
    csv.row({std::to_string(series.months[t]), format_fixed(series.y[t], 9), format_fixed(fit.fitted[t], 9),
             series.months[t] < series.intervention_month ? "pre" : "post"});
  }
}

}  // namespace hdl
