#include "hdl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "hdl/error.hpp"
#include "hdl/rng.hpp"

namespace hdl {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <typename Fn>
void for_each_token(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) fn(text.substr(start, i - start));
  }
}

}  // namespace

std::string normalize_subreddit(std::string_view name) {
  auto lower = ascii_lower(name);
  if (lower.rfind("r/", 0) == 0) lower.erase(0, 2);
  return lower;
}

namespace {

struct CivilDate {
  int year;
  unsigned month;
};

// Days since 1970-01-01 to proleptic Gregorian year/month.
CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const auto y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), m};
}

CivilDate civil_from_unix(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  if (seconds % 86400 < 0) --days;
  return civil_from_days(days);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  for (auto s : {Split::train, Split::validation, Split::test}) {
    if (to_string(s) == text) return s;
  }
  throw Error("invalid_argument", "unknown split '" + std::string(text) + "'");
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
  std::array<std::size_t, 3> counts{};
  for (const auto& [id, s] : by_id) ++counts[static_cast<std::size_t>(s)];
  return counts;
}

std::size_t word_count(std::string_view title, std::string_view body) {
  std::size_t n = 0;
  for_each_token(title, [&](std::string_view) { ++n; });
  for_each_token(body, [&](std::string_view) { ++n; });
  return n;
}

CandidateKind candidate_filter(const Post& post, const CandidateFilterConfig& config) {
  if (word_count(post.title, post.body) < config.min_words) return CandidateKind::excluded;
  const auto sub = normalize_subreddit(post.subreddit);
  for (const auto& s : config.loneliness_subreddits) {
    if (normalize_subreddit(s) == sub) return CandidateKind::lonely_candidate;
  }
  const auto text = ascii_lower(post.title + " " + post.body);
  for (const auto& kw : config.keywords) {
    if (text.find(ascii_lower(kw)) != std::string::npos) return CandidateKind::lonely_candidate;
  }
  return CandidateKind::nonlonely_candidate;
}

int month_index(std::int64_t created_utc) {
  const auto date = civil_from_unix(created_utc);
  return (date.year - 2018) * 12 + static_cast<int>(date.month) - 1;
}

int calendar_year(std::int64_t created_utc) { return civil_from_unix(created_utc).year; }

std::string pandemic_stratum(const Post& post) {
  return normalize_subreddit(post.subreddit) +
         (calendar_year(post.created_utc) < 2020 ? "|pre-2020" : "|2020");
}

std::vector<std::size_t> largest_remainder_quotas(std::span<const std::size_t> populations,
                                                  std::size_t target_n) {
  const std::size_t total = std::accumulate(populations.begin(), populations.end(), std::size_t{0});
  if (target_n > total) {
    throw Error("invalid_argument", "sample size " + std::to_string(target_n) +
                                        " exceeds population " + std::to_string(total));
  }
  std::vector<std::size_t> quotas(populations.size(), 0);
  if (total == 0) return quotas;
  std::vector<std::size_t> remainders(populations.size(), 0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < populations.size(); ++i) {
    const auto scaled = static_cast<unsigned __int128>(target_n) * populations[i];
    quotas[i] = static_cast<std::size_t>(scaled / total);
    remainders[i] = static_cast<std::size_t>(scaled % total);
    assigned += quotas[i];
  }
  std::vector<std::size_t> order(populations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < target_n; ++k, ++assigned) ++quotas[order[k]];
  return quotas;
}

std::vector<Post> stratified_sample(std::span<const Post> posts,
                                    const std::function<std::string(const Post&)>& strata_of,
                                    std::size_t target_n, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < posts.size(); ++i) strata[strata_of(posts[i])].push_back(i);

  std::vector<std::size_t> populations;
  for (const auto& [key, members] : strata) populations.push_back(members.size());
  const auto quotas = largest_remainder_quotas(populations, target_n);

  Rng rng(derive_seed(seed, "sample"));
  std::vector<std::size_t> chosen;
  std::size_t s = 0;
  for (auto& [key, members] : strata) {
    rng.shuffle(std::span<std::size_t>(members));
    chosen.insert(chosen.end(), members.begin(),
                  members.begin() + static_cast<std::ptrdiff_t>(quotas[s++]));
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Post> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(posts[i]);
  return out;
}

SplitAssignment split_ids(std::span<const std::string> ids, std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (n < 10) throw Error("invalid_argument", "need at least 10 examples to split, got " + std::to_string(n));
  std::vector<std::string> order(ids.begin(), ids.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw Error("invalid_argument", "duplicate post_id in split input");
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::string>(order));

  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_valid = n * 2 / 10;
  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::train : (i < n_train + n_valid ? Split::validation : Split::test);
    out.by_id.emplace(order[i], s);
  }
  return out;
}

SplitAssignment split_dataset(std::span<const LabeledExample> examples, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& e : examples) ids.push_back(e.post_id);
  return split_ids(ids, seed);
}

SplitSets apply_split(std::span<const LabeledExample> examples, const SplitAssignment& split) {
  SplitSets sets;
  for (const auto& e : examples) {
    auto it = split.by_id.find(e.post_id);
    if (it == split.by_id.end()) throw Error("invalid_argument", "post '" + e.post_id + "' missing from split");
    switch (it->second) {
      case Split::train: sets.train.push_back(e); break;
      case Split::validation: sets.validation.push_back(e); break;
      case Split::test: sets.test.push_back(e); break;
    }
  }
  return sets;
}

FeatureVector hash_featurize(const Post& post, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("invalid_argument", "hash dimension must be positive");
  const std::uint64_t key = derive_seed(seed, "hash");
  std::vector<std::int64_t> counts(dim, 0);
  auto add = [&](std::string_view token) {
    const std::uint64_t h = splitmix64(fnv1a64(ascii_lower(token)) ^ key);
    const auto bucket = static_cast<std::size_t>(h % dim);
    counts[bucket] += (splitmix64(h) >> 63) ? -1 : 1;
  };
  for_each_token(post.title, add);
  for_each_token(post.body, add);

  double norm2 = 0.0;
  for (auto c : counts) norm2 += static_cast<double>(c) * static_cast<double>(c);
  FeatureVector fv{post.id, std::vector<float>(dim, 0.0f)};
  if (norm2 == 0.0) return fv;
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < dim; ++i) fv.values[i] = static_cast<float>(static_cast<double>(counts[i]) * inv);
  return fv;
}

namespace {

JoinResult join_impl(std::span<const LabeledRecord> labels, const std::map<std::string, const Post*>& posts,
                     bool require_post, const std::map<std::string, FeatureVector>& features,
                     std::size_t posts_without_labels) {
  JoinResult result;
  result.report.missing_labels = posts_without_labels;
  std::size_t dim = 0;
  for (const auto& rec : labels) {
    auto post = posts.find(rec.post_id);
    if (require_post && post == posts.end()) continue;
    auto feat = features.find(rec.post_id);
    if (feat == features.end()) {
      ++result.report.missing_features;
      continue;
    }
    std::optional<int> month = rec.month_index;
    if (!month && post != posts.end()) month = month_index(post->second->created_utc);
    if (!month) {
      ++result.report.missing_month;
      continue;
    }
    if (dim == 0) dim = feat->second.dim();
    if (feat->second.dim() != dim) throw Error("mixed_dims", "feature dims differ at '" + rec.post_id + "'");
    rec.labels.validate();
    result.examples.push_back(LabeledExample{rec.post_id, feat->second, rec.labels, *month});
  }
  std::sort(result.examples.begin(), result.examples.end(),
            [](const auto& a, const auto& b) { return a.post_id < b.post_id; });
  if (std::adjacent_find(result.examples.begin(), result.examples.end(), [](const auto& a, const auto& b) {
        return a.post_id == b.post_id;
      }) != result.examples.end()) {
    throw Error("invalid_argument", "duplicate post_id in labeled dataset");
  }
  result.report.joined = result.examples.size();
  return result;
}

}  // namespace

JoinResult join(std::span<const Post> posts, std::span<const LabeledRecord> labels,
                const std::map<std::string, FeatureVector>& features) {
  std::map<std::string, const Post*> by_id;
  for (const auto& p : posts) by_id.emplace(p.id, &p);
  std::set<std::string> labeled;
  for (const auto& r : labels) labeled.insert(r.post_id);
  std::size_t unlabeled = 0;
  for (const auto& [id, p] : by_id) unlabeled += labeled.count(id) ? 0 : 1;
  return join_impl(labels, by_id, true, features, unlabeled);
}

JoinResult join(std::span<const LabeledRecord> labels, const std::map<std::string, FeatureVector>& features) {
  return join_impl(labels, {}, false, features, 0);
}

std::vector<Post> load_posts(const std::filesystem::path& path) {
  std::vector<Post> out;
  std::set<std::string> ids;
  for_each_jsonl(path, [&](const json& doc, std::size_t) {
    Post p;
    p.id = doc.at("id").get<std::string>();
    p.subreddit = doc.at("subreddit").get<std::string>();
    p.created_utc = doc.at("created_utc").get<std::int64_t>();
    p.title = doc.value("title", "");
    p.body = doc.value("body", "");
    if (p.created_utc <= 0) throw Error("parse_error", "created_utc must be positive");
    if (!ids.insert(p.id).second) throw Error("duplicate_id", "duplicate post id '" + p.id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

void write_posts(const std::filesystem::path& path, std::span<const Post> posts) {
  auto out = open_output(path);
  for (const auto& p : posts) {
    json doc = {{"id", p.id}, {"subreddit", p.subreddit}, {"created_utc", p.created_utc},
                {"title", p.title}, {"body", p.body}};
    out << doc.dump() << '\n';
  }
}

std::map<std::string, FeatureVector> load_embeddings(const std::filesystem::path& path) {
  std::map<std::string, FeatureVector> out;
  std::size_t dim = 0;
  std::string first_id;
  for_each_line(path, [&](std::string_view text, std::size_t line) {
    const auto where = path.string() + ":" + std::to_string(line) + ": ";
    float_json doc;
    try {
      doc = float_json::parse(text);
    } catch (const float_json::exception& e) {
      throw Error("parse_error", where + "malformed JSON (" + e.what() + ")");
    }
    if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_string() || !doc.contains("v") ||
        !doc["v"].is_array()) {
      throw Error("parse_error", where + "expected {\"id\": string, \"v\": [numbers]}");
    }
    FeatureVector fv;
    fv.post_id = doc["id"].get<std::string>();
    fv.values.reserve(doc["v"].size());
    for (const auto& x : doc["v"]) {
      if (!x.is_number()) throw Error("parse_error", where + "non-numeric entry in 'v'");
      const float f = x.get<float>();
      if (!std::isfinite(f)) throw Error("parse_error", where + "non-finite value in 'v'");
      fv.values.push_back(f);
    }
    if (fv.values.empty()) throw Error("parse_error", where + "empty vector for '" + fv.post_id + "'");
    if (dim == 0) {
      dim = fv.dim();
      first_id = fv.post_id;
    } else if (fv.dim() != dim) {
      throw Error("mixed_dims", where + "mixed dims: '" + fv.post_id + "' has " + std::to_string(fv.dim()) +
                                    ", '" + first_id + "' has " + std::to_string(dim));
    }
    const auto id = fv.post_id;
    if (!out.emplace(id, std::move(fv)).second) {
      throw Error("duplicate_id", where + "duplicate embedding id '" + id + "'");
    }
  });
  return out;
}

void write_embeddings(const std::filesystem::path& path, std::span<const FeatureVector> rows) {
  auto out = open_output(path);
  for (const auto& row : rows) {
    out << "{\"id\":" << json(row.post_id).dump() << ",\"v\":[";
    for (std::size_t i = 0; i < row.values.size(); ++i) {
      if (i) out << ',';
      out << format_float(row.values[i]);
    }
    out << "]}\n";
  }
}

LabeledRecord parse_labeled(const json& doc) {
  LabeledRecord rec;
  rec.post_id = doc.at("post_id").get<std::string>();
  rec.labels = PostLabelSet::zeros();
  for (const auto& b : schema().blocks()) {
    rec.labels[b.id].values = doc.at(std::string(b.name)).get<std::vector<double>>();
  }
  if (auto it = doc.find("month_index"); it != doc.end() && !it->is_null()) rec.month_index = it->get<int>();
  rec.labels.validate();
  return rec;
}

json to_json(const LabeledRecord& record) {
  json doc = {{"post_id", record.post_id}};
  for (const auto& b : schema().blocks()) doc[std::string(b.name)] = record.labels[b.id].values;
  if (record.month_index) doc["month_index"] = *record.month_index;
  return doc;
}

std::vector<LabeledRecord> load_labeled(const std::filesystem::path& path) {
  std::vector<LabeledRecord> out;
  for_each_jsonl(path, [&](const json& doc, std::size_t) { out.push_back(parse_labeled(doc)); });
  return out;
}

void write_labeled(const std::filesystem::path& path, std::span<const LabeledRecord> rows) {
  auto out = open_output(path);
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

}  // namespace hdl
