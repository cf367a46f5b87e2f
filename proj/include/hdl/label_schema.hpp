#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hdl/io.hpp"

namespace hdl {

// Label blocks in their fixed order. `lonely` is the binary root; the other
// four are the fine-grained categories it gates.
enum class Category : std::uint8_t { lonely, duration, context, interpersonal, interaction };

inline constexpr std::size_t kNumCategories = 5;
inline constexpr std::size_t kNumFineGrained = 4;
inline constexpr std::size_t kTotalLabelDim = 21;
inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::lonely, Category::duration, Category::context, Category::interpersonal,
    Category::interaction};
inline constexpr std::array<Category, kNumFineGrained> kFineGrainedCategories = {
    Category::duration, Category::context, Category::interpersonal, Category::interaction};

constexpr std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

struct CategoryBlock {
  Category id;
  std::string_view name;
  std::span<const std::string_view> labels;
  bool has_na;
  std::size_t offset;  // position of the first label in the 21-dim concatenation

  std::size_t size() const { return labels.size(); }
  std::optional<std::size_t> index_of(std::string_view label) const;
  // Only meaningful when has_na; NA is always the last label.
  std::size_t na_index() const { return labels.size() - 1; }
};

class LabelSchema {
 public:
  static const LabelSchema& instance();

  std::span<const CategoryBlock> blocks() const { return blocks_; }
  const CategoryBlock& block(Category c) const { return blocks_[hdl::index_of(c)]; }
  std::size_t total_dim() const { return kTotalLabelDim; }
  std::optional<Category> find(std::string_view name) const;
  // Throws Error("invalid_argument") for unknown names.
  Category category(std::string_view name) const;
  // Stable digest of block names and labels, stored in checkpoints.
  std::uint64_t hash() const;

 private:
  LabelSchema();
  std::array<CategoryBlock, kNumCategories> blocks_;
};

inline const LabelSchema& schema() { return LabelSchema::instance(); }

// Per-block probability vector. Valid iff entries are >= 0 and either sum to 1
// (within 1e-9) or are all exactly zero (fine-grained target of a non-lonely
// post).
struct DistributionalLabel {
  Category category = Category::lonely;
  std::vector<double> values;

  double sum() const;
  bool is_all_zero() const;
  // Throws Error("invalid_label") when the invariants do not hold.
  void validate() const;
};

struct PostLabelSet {
  std::array<DistributionalLabel, kNumCategories> blocks;

  const DistributionalLabel& operator[](Category c) const { return blocks[index_of(c)]; }
  DistributionalLabel& operator[](Category c) { return blocks[index_of(c)]; }
  const DistributionalLabel& lonely() const { return blocks[0]; }

  // True when the fine-grained targets carry mass (a post kept as lonely).
  bool has_fine_grained() const;
  void validate() const;
  std::array<double, kTotalLabelDim> flatten() const;

  static PostLabelSet zeros();
  static PostLabelSet non_lonely();
  static PostLabelSet from_flat(std::span<const double> flat);
};

enum class CandidateKind { lonely_candidate, nonlonely_candidate, excluded };

std::string_view to_string(CandidateKind kind);
CandidateKind parse_candidate_kind(std::string_view text);

struct AnnotationRecord {
  std::string post_id;
  std::string annotator_id;
  bool lonely = false;
  // Chosen label index per fine-grained category, in kFineGrainedCategories
  // order. Present for every category when lonely is true.
  std::array<std::optional<std::size_t>, kNumFineGrained> choices;

  std::optional<std::size_t> choice(Category c) const;
};

// Integer vote counts behind a post's distributional labels.
struct VoteTally {
  std::size_t annotators = 0;
  std::size_t lonely_votes = 0;
  std::array<std::vector<std::size_t>, kNumFineGrained> fine_counts;
};

struct Discarded {
  std::string reason;
};

using AggregateResult = std::variant<PostLabelSet, Discarded>;

VoteTally tally_votes(std::span<const AnnotationRecord> records);

// Majority-rule retention plus vote-fraction targets. Lonely-candidates are
// kept only when a strict majority voted lonely; nonlonely-candidates only
// when a strict majority voted non-lonely. Even splits are discarded.
AggregateResult aggregate_annotations(std::span<const AnnotationRecord> records,
                                      CandidateKind kind);

// Drops the NA coordinate and rescales the rest to sum to 1.
std::vector<double> normalize_drop_na(const DistributionalLabel& label);

struct PairAgreement {
  std::string annotator_a;
  std::string annotator_b;
  std::size_t shared = 0;
  std::size_t matches = 0;
  double agreement = 0.0;
};

// Exact-match rate of two annotators over posts where both chose a label in
// `category`.
PairAgreement pair_agreement(std::span<const AnnotationRecord> records, Category category,
                             std::string_view annotator_a, std::string_view annotator_b);

// Every annotator pair (a < b) with at least one shared post.
std::vector<PairAgreement> interrater_agreement(std::span<const AnnotationRecord> records,
                                                Category category);

AnnotationRecord parse_annotation(const json& doc);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

}  // namespace hdl
