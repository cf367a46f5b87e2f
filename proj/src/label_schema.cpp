#include "hdl/label_schema.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hdl/error.hpp"
#include "hdl/rng.hpp"

namespace hdl {

namespace {

constexpr std::array<std::string_view, 2> kLonelyLabels = {"non-lonely", "lonely"};
constexpr std::array<std::string_view, 4> kDurationLabels = {"transient", "enduring",
                                                             "ambiguous", "na"};
constexpr std::array<std::string_view, 5> kContextLabels = {"social", "physical", "somatic",
                                                            "romantic", "na"};
constexpr std::array<std::string_view, 5> kInterpersonalLabels = {"romantic", "friendship",
                                                                  "family", "peers", "na"};
constexpr std::array<std::string_view, 5> kInteractionLabels = {
    "seek-advice", "provide-support", "seek-validation-affirmation", "reach-out",
    "non-directed"};

constexpr double kSumTolerance = 1e-9;

std::size_t fine_slot(Category c) {
  if (c == Category::lonely) throw Error("invalid_argument", "lonely is not a fine-grained category");
  return index_of(c) - 1;
}

}  // namespace

std::optional<std::size_t> CategoryBlock::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return std::nullopt;
}

LabelSchema::LabelSchema()
    : blocks_{{
          {Category::lonely, "lonely", kLonelyLabels, false, 0},
          {Category::duration, "duration", kDurationLabels, true, 2},
          {Category::context, "context", kContextLabels, true, 6},
          {Category::interpersonal, "interpersonal", kInterpersonalLabels, true, 11},
          {Category::interaction, "interaction", kInteractionLabels, false, 16},
      }} {}

const LabelSchema& LabelSchema::instance() {
  static const LabelSchema schema;
  return schema;
}

std::optional<Category> LabelSchema::find(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b.id;
  }
  return std::nullopt;
}

Category LabelSchema::category(std::string_view name) const {
  if (auto c = find(name)) return *c;
  throw Error("invalid_argument", "unknown category '" + std::string(name) + "'");
}

std::uint64_t LabelSchema::hash() const {
  std::uint64_t h = fnv1a64("hdl-label-schema");
  for (const auto& b : blocks_) {
    h = fnv1a64(b.name, h);
    h = fnv1a64(b.has_na ? "+na" : "-na", h);
    for (auto label : b.labels) h = fnv1a64(label, fnv1a64("|", h));
  }
  return h;
}

double DistributionalLabel::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

bool DistributionalLabel::is_all_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void DistributionalLabel::validate() const {
  const auto& block = schema().block(category);
  const std::string name(block.name);
  if (values.size() != block.size()) {
    throw Error("invalid_label", name + ": expected " + std::to_string(block.size()) +
                                     " values, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw Error("invalid_label", name + ": negative or non-finite entry");
  }
  if (is_all_zero()) return;
  if (std::abs(sum() - 1.0) > kSumTolerance) {
    throw Error("invalid_label", name + ": values sum to " + format_double(sum()));
  }
}

bool PostLabelSet::has_fine_grained() const {
  return std::any_of(kFineGrainedCategories.begin(), kFineGrainedCategories.end(),
                     [&](Category c) { return !(*this)[c].is_all_zero(); });
}

void PostLabelSet::validate() const {
  for (auto c : kAllCategories) {
    if ((*this)[c].category != c) throw Error("invalid_label", "label blocks out of order");
    (*this)[c].validate();
  }
  if (lonely().is_all_zero()) throw Error("invalid_label", "lonely block must sum to 1");
  const auto& lv = lonely().values;
  if (lv[0] == 1.0 && lv[1] == 0.0 && has_fine_grained()) {
    throw Error("invalid_label", "non-lonely post carries fine-grained mass");
  }
}

std::array<double, kTotalLabelDim> PostLabelSet::flatten() const {
  std::array<double, kTotalLabelDim> flat{};
  for (const auto& b : schema().blocks()) {
    const auto& v = (*this)[b.id].values;
    std::copy(v.begin(), v.end(), flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return flat;
}

PostLabelSet PostLabelSet::zeros() {
  PostLabelSet set;
  for (const auto& b : schema().blocks()) {
    set[b.id] = DistributionalLabel{b.id, std::vector<double>(b.size(), 0.0)};
  }
  return set;
}

PostLabelSet PostLabelSet::non_lonely() {
  auto set = zeros();
  set[Category::lonely].values = {1.0, 0.0};
  return set;
}

PostLabelSet PostLabelSet::from_flat(std::span<const double> flat) {
  if (flat.size() != kTotalLabelDim) throw Error("invalid_label", "flat label vector must have 21 entries");
  auto set = zeros();
  for (const auto& b : schema().blocks()) {
    auto part = flat.subspan(b.offset, b.size());
    set[b.id].values.assign(part.begin(), part.end());
  }
  return set;
}

std::string_view to_string(CandidateKind kind) {
  switch (kind) {
    case CandidateKind::lonely_candidate: return "lonely-candidate";
    case CandidateKind::nonlonely_candidate: return "nonlonely-candidate";
    case CandidateKind::excluded: return "excluded";
  }
  return "excluded";
}

CandidateKind parse_candidate_kind(std::string_view text) {
  for (auto k : {CandidateKind::lonely_candidate, CandidateKind::nonlonely_candidate,
                 CandidateKind::excluded}) {
    if (to_string(k) == text) return k;
  }
  throw Error("invalid_argument", "unknown candidate kind '" + std::string(text) + "'");
}

std::optional<std::size_t> AnnotationRecord::choice(Category c) const {
  return choices[fine_slot(c)];
}

VoteTally tally_votes(std::span<const AnnotationRecord> records) {
  if (records.empty()) throw Error("invalid_argument", "no annotation records");
  const auto& post = records.front().post_id;
  VoteTally tally;
  for (auto c : kFineGrainedCategories) {
    tally.fine_counts[fine_slot(c)].assign(schema().block(c).size(), 0);
  }
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.post_id != post) {
      throw Error("invalid_argument", "records span posts '" + post + "' and '" + r.post_id + "'");
    }
    if (!seen.insert(r.annotator_id).second) {
      throw Error("invalid_argument", "annotator '" + r.annotator_id + "' labeled post '" + post + "' twice");
    }
    ++tally.annotators;
    if (!r.lonely) continue;
    ++tally.lonely_votes;
    for (auto c : kFineGrainedCategories) {
      const auto pick = r.choice(c);
      const auto& block = schema().block(c);
      if (!pick) {
        throw Error("invalid_annotation", "annotator '" + r.annotator_id + "' marked post '" + post +
                                              "' lonely without a " + std::string(block.name) + " label");
      }
      if (*pick >= block.size()) throw Error("invalid_annotation", "label index out of range");
      ++tally.fine_counts[fine_slot(c)][*pick];
    }
  }
  return tally;
}

AggregateResult aggregate_annotations(std::span<const AnnotationRecord> records,
                                      CandidateKind kind) {
  const auto tally = tally_votes(records);
  const std::size_t n = tally.annotators;
  const std::size_t lonely = tally.lonely_votes;
  const std::size_t non_lonely = n - lonely;

  switch (kind) {
    case CandidateKind::excluded:
      throw Error("invalid_argument", "post '" + records.front().post_id + "' is not an annotation candidate");
    case CandidateKind::nonlonely_candidate:
      if (2 * non_lonely > n) return PostLabelSet::non_lonely();
      return Discarded{2 * non_lonely == n ? "tied vote" : "majority lonely on a nonlonely-candidate"};
    case CandidateKind::lonely_candidate:
      break;
  }
  if (2 * lonely <= n) {
    return Discarded{2 * lonely == n ? "tied vote" : "majority non-lonely"};
  }

  auto set = PostLabelSet::zeros();
  const auto total = static_cast<double>(n);
  set[Category::lonely].values = {static_cast<double>(non_lonely) / total,
                                  static_cast<double>(lonely) / total};
  const auto voters = static_cast<double>(lonely);
  for (auto c : kFineGrainedCategories) {
    const auto& counts = tally.fine_counts[fine_slot(c)];
    auto& values = set[c].values;
    for (std::size_t k = 0; k < counts.size(); ++k) values[k] = static_cast<double>(counts[k]) / voters;
  }
  return set;
}

std::vector<double> normalize_drop_na(const DistributionalLabel& label) {
  const auto& block = schema().block(label.category);
  if (!block.has_na) {
    throw Error("invalid_argument", std::string(block.name) + " has no NA label");
  }
  if (label.values.size() != block.size()) throw Error("invalid_label", "block size mismatch");
  std::vector<double> out(label.values.begin(), label.values.end() - 1);
  double mass = 0.0;
  for (double v : out) mass += v;
  if (!(mass > 0.0)) throw Error("na_only", "NA-only distribution");
  for (double& v : out) v /= mass;
  return out;
}

namespace {

// Label an annotator gave in `category`, if any: lonely maps to 0/1.
std::optional<std::size_t> label_in(const AnnotationRecord& r, Category category) {
  if (category == Category::lonely) return r.lonely ? 1 : 0;
  return r.choice(category);
}

using LabelsByAnnotator = std::map<std::string, std::map<std::string, std::size_t>>;

LabelsByAnnotator index_labels(std::span<const AnnotationRecord> records, Category category) {
  LabelsByAnnotator out;
  for (const auto& r : records) {
    if (auto l = label_in(r, category)) out[r.annotator_id][r.post_id] = *l;
  }
  return out;
}

PairAgreement compare(const std::string& a, const std::map<std::string, std::size_t>& la,
                      const std::string& b, const std::map<std::string, std::size_t>& lb) {
  PairAgreement pa{a, b, 0, 0, 0.0};
  for (const auto& [post, label] : la) {
    auto it = lb.find(post);
    if (it == lb.end()) continue;
    ++pa.shared;
    if (it->second == label) ++pa.matches;
  }
  if (pa.shared) pa.agreement = static_cast<double>(pa.matches) / static_cast<double>(pa.shared);
  return pa;
}

}  // namespace

PairAgreement pair_agreement(std::span<const AnnotationRecord> records, Category category,
                             std::string_view annotator_a, std::string_view annotator_b) {
  const auto labels = index_labels(records, category);
  const std::string a(annotator_a), b(annotator_b);
  static const std::map<std::string, std::size_t> kEmpty;
  auto ia = labels.find(a);
  auto ib = labels.find(b);
  auto pa = compare(a, ia == labels.end() ? kEmpty : ia->second, b,
                    ib == labels.end() ? kEmpty : ib->second);
  if (pa.shared == 0) {
    throw Error("no_shared_posts", "annotators '" + a + "' and '" + b + "' share no posts in " +
                                       std::string(schema().block(category).name));
  }
  return pa;
}

std::vector<PairAgreement> interrater_agreement(std::span<const AnnotationRecord> records,
                                                Category category) {
  const auto labels = index_labels(records, category);
  std::vector<PairAgreement> out;
  for (auto ia = labels.begin(); ia != labels.end(); ++ia) {
    for (auto ib = std::next(ia); ib != labels.end(); ++ib) {
      auto pa = compare(ia->first, ia->second, ib->first, ib->second);
      if (pa.shared) out.push_back(std::move(pa));
    }
  }
  if (out.empty()) {
    throw Error("no_shared_posts", "no annotator pair shares a post in " +
                                       std::string(schema().block(category).name));
  }
  return out;
}

AnnotationRecord parse_annotation(const json& doc) {
  AnnotationRecord r;
  r.post_id = doc.at("post_id").get<std::string>();
  r.annotator_id = doc.at("annotator_id").get<std::string>();
  r.lonely = doc.at("lonely").get<bool>();
  for (auto c : kFineGrainedCategories) {
    const auto& block = schema().block(c);
    const std::string key(block.name);
    auto it = doc.find(key);
    const bool absent = it == doc.end() || it->is_null();
    if (absent) {
      if (r.lonely) {
        throw Error("invalid_annotation", "lonely record for post '" + r.post_id + "' lacks '" + key + "'");
      }
      continue;
    }
    const auto text = it->get<std::string>();
    auto idx = block.index_of(text);
    if (!idx) throw Error("invalid_annotation", "unknown " + key + " label '" + text + "'");
    // Non-lonely annotators are not asked for fine-grained labels.
    if (r.lonely) r.choices[fine_slot(c)] = *idx;
  }
  return r;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  for_each_jsonl(path, [&](const json& doc, std::size_t) { out.push_back(parse_annotation(doc)); });
  return out;
}

}  // namespace hdl
