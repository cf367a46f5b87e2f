#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hdl/label_schema.hpp"

namespace hdl {

struct Post {
  std::string id;
  std::string subreddit;
  std::int64_t created_utc = 0;
  std::string title;
  std::string body;
};

struct FeatureVector {
  std::string post_id;
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
};

// One row of the labeled dataset file.
struct LabeledRecord {
  std::string post_id;
  PostLabelSet labels;
  std::optional<int> month_index;
};

struct LabeledExample {
  std::string post_id;
  FeatureVector features;
  PostLabelSet labels;
  int month_index = 0;
};

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::map<std::string, Split> by_id;

  std::array<std::size_t, 3> sizes() const;
};

struct CandidateFilterConfig {
  std::set<std::string> loneliness_subreddits{"lonely", "loneliness"};
  std::vector<std::string> keywords{"alone",    "lonely",   "lonesome", "loner",
                                    "loneli",   "loneness", "isolated", "left out"};
  std::size_t min_words = 25;
};

// Lowercased, with any leading "r/" removed.
std::string normalize_subreddit(std::string_view name);

// Whitespace-delimited tokens in title and body combined.
std::size_t word_count(std::string_view title, std::string_view body);

CandidateKind candidate_filter(const Post& post, const CandidateFilterConfig& config = {});

// Months since January 2018 (January 2018 is 0) of a unix timestamp, UTC.
int month_index(std::int64_t created_utc);
int calendar_year(std::int64_t created_utc);

// "<subreddit>|pre-2020" or "<subreddit>|2020".
std::string pandemic_stratum(const Post& post);

// Splits target_n across strata in proportion to their populations, using
// largest-remainder rounding (ties go to the earlier stratum).
std::vector<std::size_t> largest_remainder_quotas(std::span<const std::size_t> populations,
                                                  std::size_t target_n);

// Proportional stratified sample without replacement. The result keeps the
// input order of the chosen posts.
std::vector<Post> stratified_sample(std::span<const Post> posts,
                                    const std::function<std::string(const Post&)>& strata_of,
                                    std::size_t target_n, std::uint64_t seed);

// Seeded 70/20/10 partition with floor sizes for train and validation.
SplitAssignment split_ids(std::span<const std::string> ids, std::uint64_t seed);
SplitAssignment split_dataset(std::span<const LabeledExample> examples, std::uint64_t seed);

struct SplitSets {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
};

SplitSets apply_split(std::span<const LabeledExample> examples, const SplitAssignment& split);

// Signed feature hashing of lowercased whitespace tokens, L2-normalized.
FeatureVector hash_featurize(const Post& post, std::size_t dim, std::uint64_t seed);

struct JoinReport {
  std::size_t joined = 0;
  std::size_t missing_features = 0;
  std::size_t missing_labels = 0;
  std::size_t missing_month = 0;
};

struct JoinResult {
  std::vector<LabeledExample> examples;  // ordered by post_id
  JoinReport report;
};

// Keeps posts that have both labels and features; month_index comes from the
// label record when present, otherwise from the post timestamp.
JoinResult join(std::span<const Post> posts, std::span<const LabeledRecord> labels,
                const std::map<std::string, FeatureVector>& features);
// Same, driven by the label records alone (month_index must be recorded).
JoinResult join(std::span<const LabeledRecord> labels,
                const std::map<std::string, FeatureVector>& features);

std::vector<Post> load_posts(const std::filesystem::path& path);
void write_posts(const std::filesystem::path& path, std::span<const Post> posts);

std::map<std::string, FeatureVector> load_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, std::span<const FeatureVector> rows);

LabeledRecord parse_labeled(const json& doc);
json to_json(const LabeledRecord& record);
std::vector<LabeledRecord> load_labeled(const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, std::span<const LabeledRecord> rows);

}  // namespace hdl
