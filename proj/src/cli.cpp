#include "hdl/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdl/analysis.hpp"
#include "hdl/checkpoint.hpp"
#include "hdl/corpus.hpp"
#include "hdl/error.hpp"
#include "hdl/io.hpp"
#include "hdl/trainer.hpp"

namespace fs = std::filesystem;

namespace hdl {

namespace {

// ---------------------------------------------------------------- logging

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level() {
  const char* env = std::getenv("HDL_LOG");
  if (!env) return LogLevel::warn;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

void log(LogLevel level, const std::string& message) {
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[hdl " << names[static_cast<int>(level)] << "] " << message << '\n';
}

// ------------------------------------------------------------------ flags

enum class FlagType { text, path, real, count, seed, integer, list };

struct FlagSpec {
  const char* name;  // without dashes; config key is the same with '-' -> '_'
  FlagType type;
  const char* help;
};

const std::vector<FlagSpec>& flag_specs() {
  static const std::vector<FlagSpec> specs = {
      {"posts", FlagType::path, "posts JSONL"},
      {"annotations", FlagType::path, "annotation JSONL"},
      {"embeddings", FlagType::path, "embedding JSONL"},
      {"labels", FlagType::path, "labeled dataset JSONL"},
      {"checkpoint", FlagType::path, "model checkpoint"},
      {"split", FlagType::path, "split CSV (post_id,split)"},
      {"predictions", FlagType::list, "prediction JSONL (repeatable for eval)"},
      {"out", FlagType::text, "output directory"},
      {"model", FlagType::text, "embed-mlp | hdln"},
      {"beta", FlagType::real, "HDLN blend coefficient in [0,1]"},
      {"seed", FlagType::seed, "64-bit seed"},
      {"epochs", FlagType::count, "training epochs"},
      {"batch-size", FlagType::count, "mini-batch size"},
      {"lr", FlagType::real, "peak learning rate"},
      {"warmup-ratio", FlagType::real, "fraction of steps spent warming up"},
      {"patience", FlagType::count, "early-stopping patience in epochs"},
      {"intervention-month", FlagType::integer, "intervention month index (0 = Jan 2018)"},
      {"category", FlagType::text, "label category"},
      {"label", FlagType::text, "label name"},
      {"group", FlagType::text, "all | subreddit | subreddit:a,b"},
      {"features", FlagType::text, "hash | embeddings"},
      {"hash-dim", FlagType::count, "hashed feature dimension"},
      {"subset", FlagType::text, "train | validation | test"},
      {"sample-size", FlagType::count, "number of posts to sample"},
      {"coping-mode", FlagType::text, "soft | argmax"},
      {"min-words", FlagType::count, "minimum word count for candidates"},
  };
  return specs;
}

const FlagSpec& spec_of(const std::string& name) {
  for (const auto& s : flag_specs()) {
    if (name == s.name) return s;
  }
  throw Error("internal", "unknown flag " + name);
}

std::string config_key(std::string name) {
  for (char& c : name) c = c == '-' ? '_' : c;
  return name;
}

json typed_value(const FlagSpec& spec, const std::string& text) {
  try {
    switch (spec.type) {
      case FlagType::real: {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) break;
        return v;
      }
      case FlagType::count:
      case FlagType::seed: {
        if (text.empty() || text[0] == '-') break;
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size()) break;
        return static_cast<std::uint64_t>(v);
      }
      case FlagType::integer: {
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used != text.size()) break;
        return static_cast<std::int64_t>(v);
      }
      default:
        return text;
    }
  } catch (const std::logic_error&) {
  }
  throw Error("invalid_argument", "--" + std::string(spec.name) + ": cannot parse '" + text + "'");
}

// Flag values over config-file values; every value read is recorded so the
// manifest describes the effective configuration.
class Options {
 public:
  Options(std::string command, json values) : command_(std::move(command)), values_(std::move(values)) {}

  const std::string& command() const { return command_; }

  bool has(const std::string& name) const { return values_.contains(config_key(name)); }

  template <typename T>
  std::optional<T> maybe(const std::string& name) {
    const auto key = config_key(name);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    try {
      T v = it->template get<T>();
      used_[key] = *it;
      return v;
    } catch (const json::exception&) {
      throw Error("invalid_config", "'" + key + "' has the wrong type");
    }
  }

  template <typename T>
  T get(const std::string& name, T fallback) {
    if (auto v = maybe<T>(name)) return *v;
    used_[config_key(name)] = fallback;
    return fallback;
  }

  template <typename T>
  T require(const std::string& name) {
    if (auto v = maybe<T>(name)) return *v;
    throw Error("missing_argument", command_ + " requires --" + name);
  }

  fs::path input(const std::string& name) {
    const fs::path p = require<std::string>(name);
    return track(name, p);
  }

  std::optional<fs::path> optional_input(const std::string& name) {
    if (!has(name)) return std::nullopt;
    return input(name);
  }

  std::vector<fs::path> inputs(const std::string& name) {
    std::vector<fs::path> out;
    if (!has(name)) return out;
    for (const auto& p : require<std::vector<std::string>>(name)) out.push_back(track(name, p));
    return out;
  }

  fs::path out_dir() {
    const fs::path dir = require<std::string>("out");
    fs::create_directories(dir);
    return dir;
  }

  std::uint64_t seed() { return get<std::uint64_t>("seed", 0); }

  const json& used() const { return used_; }
  const json& input_records() const { return inputs_; }

 private:
  fs::path track(const std::string& name, const fs::path& p) {
    if (!fs::is_regular_file(p)) throw Error("missing_input", "--" + name + ": no such file " + p.string());
    inputs_.push_back({{"flag", name}, {"path", p.string()}, {"fnv1a64", hash_file(p)}});
    return p;
  }

  std::string command_;
  json values_;
  json used_ = json::object();
  json inputs_ = json::array();
};

using Outputs = std::vector<fs::path>;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const Options& o, const Outputs& outputs) {
  json outs = json::array();
  for (const auto& p : outputs) outs.push_back({{"path", p.string()}, {"fnv1a64", hash_file(p)}});
  json manifest = {{"tool", "hdl"},
                   {"version", kToolVersion},
                   {"command", o.command()},
                   {"schema_hash", schema().hash()},
                   {"seed", o.used().contains("seed") ? o.used()["seed"] : json()},
                   {"config", o.used()},
                   {"inputs", o.input_records()},
                   {"outputs", outs},
                   {"created_at", utc_timestamp()}};
  auto file = open_output(dir / "manifest.json");
  file << manifest.dump(2) << '\n';
}

// ------------------------------------------------------------- shared I/O

void write_split_csv(const fs::path& path, const SplitAssignment& split) {
  CsvWriter csv(path);
  csv.row({"post_id", "split"});
  for (const auto& [id, s] : split.by_id) csv.row({id, std::string(to_string(s))});
}

SplitAssignment read_split_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0] != std::vector<std::string>{"post_id", "split"}) {
    throw Error("parse_error", path.string() + ": expected header post_id,split");
  }
  SplitAssignment split;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw Error("parse_error", path.string() + ": malformed row " + std::to_string(i + 1));
    if (!split.by_id.emplace(rows[i][0], parse_split(rows[i][1])).second) {
      throw Error("duplicate_id", path.string() + ": duplicate post id '" + rows[i][0] + "'");
    }
  }
  return split;
}

std::map<std::string, Post> posts_by_id(const std::vector<Post>& posts) {
  std::map<std::string, Post> out;
  for (const auto& p : posts) out.emplace(p.id, p);
  return out;
}

// Features from --embeddings, or hashed from --posts.
std::map<std::string, FeatureVector> load_features(Options& o, std::uint64_t hash_seed) {
  const auto mode = o.get<std::string>("features", o.has("embeddings") ? "embeddings" : "hash");
  if (mode == "embeddings") return load_embeddings(o.input("embeddings"));
  if (mode != "hash") throw Error("invalid_argument", "--features must be hash or embeddings");
  const auto posts = load_posts(o.input("posts"));
  const auto dim = o.get<std::size_t>("hash-dim", 768);
  std::map<std::string, FeatureVector> out;
  for (const auto& p : posts) out.emplace(p.id, hash_featurize(p, dim, hash_seed));
  return out;
}

// Post ids restricted by --split/--subset when given.
std::optional<std::set<std::string>> subset_ids(Options& o) {
  if (!o.has("subset")) return std::nullopt;
  const auto which = parse_split(o.require<std::string>("subset"));
  const auto split = read_split_csv(o.input("split"));
  std::set<std::string> ids;
  for (const auto& [id, s] : split.by_id) {
    if (s == which) ids.insert(id);
  }
  return ids;
}

// Prediction records share the labeled JSONL layout plus "source":"prediction".
json prediction_json(const std::string& post_id, const BlockDistributions& blocks, std::optional<int> month,
                     ModelKind kind, std::optional<double> beta) {
  json doc = {{"post_id", post_id}, {"source", "prediction"}, {"model", std::string(to_string(kind))}};
  if (beta) doc["beta"] = *beta;
  for (auto c : kAllCategories) doc[std::string(schema().block(c).name)] = blocks[index_of(c)];
  if (month) doc["month_index"] = *month;
  return doc;
}

struct PredictionRecord {
  std::string post_id;
  BlockDistributions blocks;
  std::optional<int> month_index;
};

std::vector<PredictionRecord> load_predictions(const fs::path& path) {
  std::vector<PredictionRecord> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& doc, std::size_t) {
    if (doc.value("source", "") != "prediction") {
      throw Error("parse_error", "not a prediction record (missing \"source\":\"prediction\")");
    }
    PredictionRecord r;
    r.post_id = doc.at("post_id").get<std::string>();
    for (auto c : kAllCategories) {
      r.blocks[index_of(c)] = doc.at(std::string(schema().block(c).name)).get<std::vector<double>>();
      if (r.blocks[index_of(c)].size() != schema().block(c).size()) {
        throw Error("shape_mismatch", "wrong block size for " + std::string(schema().block(c).name));
      }
    }
    if (doc.contains("month_index")) r.month_index = doc.at("month_index").get<int>();
    if (!seen.insert(r.post_id).second) throw Error("duplicate_id", "duplicate post id '" + r.post_id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

// Annotation-derived labels (--labels) or model predictions (--predictions),
// grouped by --group.
std::vector<AnalysisItem> load_items(Options& o) {
  const bool from_labels = o.has("labels");
  const auto predictions = o.inputs("predictions");
  if (from_labels == !predictions.empty()) {
    throw Error("invalid_flag_combination", o.command() + " takes exactly one of --labels or --predictions");
  }
  if (predictions.size() > 1) throw Error("invalid_flag_combination", o.command() + " takes one --predictions file");

  std::optional<std::map<std::string, Post>> posts;
  if (auto p = o.optional_input("posts")) posts = posts_by_id(load_posts(*p));

  const auto expr = o.get<std::string>("group", "all");
  std::optional<std::set<std::string>> keep;
  std::string keep_name;
  if (expr.rfind("subreddit:", 0) == 0) {
    keep.emplace();
    std::stringstream ss(expr.substr(10));
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      keep->insert(normalize_subreddit(name));
      keep_name += (keep_name.empty() ? "" : "+") + normalize_subreddit(name);
    }
    if (keep->empty()) throw Error("invalid_argument", "--group subreddit: needs at least one name");
  } else if (expr != "all" && expr != "subreddit") {
    throw Error("invalid_argument", "--group must be all, subreddit or subreddit:a,b");
  }
  if (expr != "all" && !posts) throw Error("missing_argument", "--group " + expr + " requires --posts");

  std::vector<AnalysisItem> items;
  auto add = [&](AnalysisItem item) {
    const Post* post = nullptr;
    if (posts) {
      auto it = posts->find(item.post_id);
      if (it != posts->end()) post = &it->second;
    }
    if (!item.month_index && post) item.month_index = month_index(post->created_utc);
    if (expr != "all") {
      if (!post) throw Error("missing_post", "no post record for '" + item.post_id + "'");
      const auto sub = normalize_subreddit(post->subreddit);
      if (keep) {
        if (!keep->count(sub)) return;
        item.group = keep_name;
      } else {
        item.group = sub;
      }
    }
    items.push_back(std::move(item));
  };
  if (from_labels) {
    for (const auto& r : load_labeled(o.input("labels"))) {
      add(AnalysisItem::from_labels(r.post_id, "all", r.labels, r.month_index));
    }
  } else {
    for (auto& r : load_predictions(predictions.front())) {
      add(AnalysisItem::from_prediction(r.post_id, "all", std::move(r.blocks), r.month_index));
    }
  }
  if (items.empty()) throw Error("empty_group", "no posts match --group " + expr);
  return items;
}

template <typename Model>
BlockDistributions predict_one(const Model& model, std::span<const float> x, double beta) {
  return predict_blocks(model, x, beta);
}

// ------------------------------------------------------------ subcommands

void cmd_aggregate(Options& o, Outputs& outs) {
  const auto annotations = load_annotations(o.input("annotations"));
  const auto posts = posts_by_id(load_posts(o.input("posts")));
  CandidateFilterConfig filter;
  filter.min_words = o.get<std::size_t>("min-words", filter.min_words);
  const auto dir = o.out_dir();

  std::map<std::string, std::vector<AnnotationRecord>> by_post;
  for (const auto& a : annotations) by_post[a.post_id].push_back(a);

  std::vector<LabeledRecord> kept;
  CsvWriter report(dir / "aggregate_report.csv");
  report.row({"post_id", "candidate", "annotators", "lonely_votes", "status", "reason"});
  for (const auto& [id, records] : by_post) {
    auto post = posts.find(id);
    if (post == posts.end()) throw Error("missing_post", "annotations reference unknown post '" + id + "'");
    const auto kind = candidate_filter(post->second, filter);
    const auto tally = tally_votes(records);
    AggregateResult result = kind == CandidateKind::excluded ? AggregateResult(Discarded{"not a candidate"})
                                                              : aggregate_annotations(records, kind);
    std::string status = "kept", reason;
    if (auto* d = std::get_if<Discarded>(&result)) {
      status = "discarded";
      reason = d->reason;
    } else {
      kept.push_back({id, std::get<PostLabelSet>(result), month_index(post->second.created_utc)});
    }
    report.row({id, std::string(to_string(kind)), std::to_string(tally.annotators),
                std::to_string(tally.lonely_votes), status, reason});
  }
  write_labeled(dir / "labeled.jsonl", kept);

  CsvWriter agreement(dir / "agreement.csv");
  agreement.row({"category", "annotator_a", "annotator_b", "shared", "matches", "agreement"});
  for (auto c : kAllCategories) {
    std::vector<PairAgreement> pairs;
    try {
      pairs = interrater_agreement(annotations, c);
    } catch (const Error& e) {
      log(LogLevel::warn, "agreement for " + std::string(schema().block(c).name) + ": " + e.what());
      continue;
    }
    for (const auto& p : pairs) {
      agreement.row({std::string(schema().block(c).name), p.annotator_a, p.annotator_b, std::to_string(p.shared),
                     std::to_string(p.matches), format_fixed(p.agreement, 6)});
    }
  }
  log(LogLevel::info, "kept " + std::to_string(kept.size()) + " of " + std::to_string(by_post.size()) + " posts");
  outs = {dir / "labeled.jsonl", dir / "aggregate_report.csv", dir / "agreement.csv"};
}

void cmd_filter(Options& o, Outputs& outs) {
  const auto posts = load_posts(o.input("posts"));
  CandidateFilterConfig filter;
  filter.min_words = o.get<std::size_t>("min-words", filter.min_words);
  const auto dir = o.out_dir();
  std::vector<Post> kept;
  CsvWriter csv(dir / "candidates.csv");
  csv.row({"post_id", "subreddit", "candidate", "words"});
  for (const auto& p : posts) {
    const auto kind = candidate_filter(p, filter);
    csv.row({p.id, p.subreddit, std::string(to_string(kind)), std::to_string(word_count(p.title, p.body))});
    if (kind != CandidateKind::excluded) kept.push_back(p);
  }
  write_posts(dir / "candidates.jsonl", kept);
  outs = {dir / "candidates.csv", dir / "candidates.jsonl"};
}

void cmd_sample(Options& o, Outputs& outs) {
  const auto posts = load_posts(o.input("posts"));
  const auto n = o.require<std::size_t>("sample-size");
  const auto seed = o.seed();
  const auto dir = o.out_dir();
  const auto sample = stratified_sample(posts, pandemic_stratum, n, seed);
  write_posts(dir / "sample.jsonl", sample);

  std::map<std::string, std::pair<std::size_t, std::size_t>> strata;
  for (const auto& p : posts) ++strata[pandemic_stratum(p)].first;
  for (const auto& p : sample) ++strata[pandemic_stratum(p)].second;
  CsvWriter csv(dir / "strata.csv");
  csv.row({"stratum", "population", "sampled"});
  for (const auto& [s, counts] : strata) csv.row({s, std::to_string(counts.first), std::to_string(counts.second)});
  outs = {dir / "sample.jsonl", dir / "strata.csv"};
}

void cmd_featurize(Options& o, Outputs& outs) {
  const auto posts = load_posts(o.input("posts"));
  const auto dim = o.get<std::size_t>("hash-dim", 768);
  const auto seed = o.seed();
  const auto dir = o.out_dir();
  std::vector<FeatureVector> rows;
  rows.reserve(posts.size());
  for (const auto& p : posts) rows.push_back(hash_featurize(p, dim, seed));
  write_embeddings(dir / "features.jsonl", rows);
  outs = {dir / "features.jsonl"};
}

void cmd_split(Options& o, Outputs& outs) {
  const auto labels = load_labeled(o.input("labels"));
  const auto seed = o.seed();
  const auto dir = o.out_dir();
  std::vector<std::string> ids;
  for (const auto& r : labels) ids.push_back(r.post_id);
  const auto split = split_ids(ids, seed);
  write_split_csv(dir / "split.csv", split);
  const auto sizes = split.sizes();
  log(LogLevel::info, "split sizes " + std::to_string(sizes[0]) + "/" + std::to_string(sizes[1]) + "/" +
                          std::to_string(sizes[2]));
  outs = {dir / "split.csv"};
}

void cmd_train(Options& o, Outputs& outs) {
  const auto kind = parse_model_kind(o.get<std::string>("model", "hdln"));
  if (kind == ModelKind::embed_mlp && o.has("beta")) {
    throw Error("invalid_flag_combination", "--beta applies only to --model hdln");
  }
  const auto seed = o.seed();
  const auto labels = load_labeled(o.input("labels"));
  const auto features = load_features(o, seed);
  JoinResult joined;
  if (o.has("posts")) {
    joined = join(load_posts(o.input("posts")), labels, features);
  } else {
    joined = join(labels, features);
  }
  const auto& r = joined.report;
  log(LogLevel::info, "joined " + std::to_string(r.joined) + " examples (missing features " +
                          std::to_string(r.missing_features) + ", missing month " + std::to_string(r.missing_month) +
                          ")");
  if (r.missing_features > 0 || r.missing_month > 0) {
    log(LogLevel::warn, std::to_string(r.missing_features + r.missing_month) + " labeled posts were dropped");
  }

  const auto split = o.has("split") ? read_split_csv(o.input("split")) : split_dataset(joined.examples, seed);
  const auto sets = apply_split(joined.examples, split);

  auto config = TrainConfig::defaults_for(kind);
  config.seed = seed;
  config.epochs = o.get<std::size_t>("epochs", config.epochs);
  config.batch_size = o.get<std::size_t>("batch-size", config.batch_size);
  config.base_lr = o.get<double>("lr", config.base_lr);
  config.warmup_ratio = o.get<double>("warmup-ratio", config.warmup_ratio);
  config.patience = o.get<std::size_t>("patience", config.patience);
  if (kind == ModelKind::hdln) config.beta = o.get<double>("beta", 0.0);
  config.validate();

  const auto dir = o.out_dir();
  if (joined.examples.empty()) throw Error("empty_split", "no labeled examples with features");
  const std::size_t dim = joined.examples.front().features.dim();
  CsvWriter log_csv(dir / "train_log.csv");
  log_csv.row({"epoch", "train_loss", "validation_loss", "validation_accuracy", "lr", "improved"});
  auto on_epoch = [&](const EpochLog& e) {
    log_csv.row({std::to_string(e.epoch), format_double(e.train_loss), format_double(e.validation_loss),
                 format_double(e.validation_accuracy), format_double(e.last_lr), e.improved ? "1" : "0"});
    log(LogLevel::info, "epoch " + std::to_string(e.epoch) + " loss " + format_fixed(e.train_loss, 4) +
                            " val_acc " + format_fixed(e.validation_accuracy, 4));
  };

  AnyModel best = EmbedMlpModel<float>{};
  if (kind == ModelKind::hdln) {
    auto model = HdlnModel<float>::create({dim, 64, 64}, seed);
    auto result = train(std::move(model), sets.train, sets.validation, config, on_epoch);
    best = std::move(result.model);
  } else {
    auto model = EmbedMlpModel<float>::create({dim, 50}, seed);
    auto result = train(std::move(model), sets.train, sets.validation, config, on_epoch);
    best = std::move(result.model);
  }
  save_checkpoint(dir / "model.ckpt", best, seed);
  write_split_csv(dir / "split.csv", split);
  outs = {dir / "train_log.csv", dir / "split.csv", dir / "model.ckpt"};
}

void cmd_predict(Options& o, Outputs& outs) {
  const auto loaded = load_checkpoint(o.input("checkpoint"));
  const auto kind = kind_of(loaded.model);
  if (kind == ModelKind::embed_mlp && o.has("beta")) {
    throw Error("invalid_flag_combination", "--beta applies only to HDLN checkpoints");
  }
  const std::optional<double> beta =
      kind == ModelKind::hdln ? std::optional<double>(o.get<double>("beta", 0.0)) : std::nullopt;
  if (beta && !(*beta >= 0.0 && *beta <= 1.0)) throw Error("invalid_argument", "--beta must be in [0, 1]");
  const auto features = load_features(o, o.get<std::uint64_t>("seed", loaded.seed));
  const auto ids = subset_ids(o);

  std::map<std::string, int> months;
  if (o.has("posts")) {
    for (const auto& p : load_posts(o.input("posts"))) months[p.id] = month_index(p.created_utc);
  }
  if (auto l = o.optional_input("labels")) {
    for (const auto& r : load_labeled(*l)) {
      if (r.month_index) months[r.post_id] = *r.month_index;
    }
  }

  const auto dir = o.out_dir();
  auto file = open_output(dir / "predictions.jsonl");
  const std::size_t dim = input_dim(loaded.model);
  std::size_t written = 0;
  for (const auto& [id, fv] : features) {
    if (ids && !ids->count(id)) continue;
    if (fv.dim() != dim) {
      throw Error("shape_mismatch", "features of '" + id + "' have dim " + std::to_string(fv.dim()) +
                                        ", checkpoint expects " + std::to_string(dim));
    }
    const auto blocks = std::visit([&](const auto& m) { return predict_one(m, fv.values, beta.value_or(0.0)); },
                                   loaded.model);
    auto month = months.find(id);
    file << prediction_json(id, blocks, month == months.end() ? std::nullopt : std::optional<int>(month->second),
                            kind, beta)
                .dump()
         << '\n';
    ++written;
  }
  file.close();
  log(LogLevel::info, "wrote " + std::to_string(written) + " predictions");
  outs = {dir / "predictions.jsonl"};
}

void cmd_eval(Options& o, Outputs& outs) {
  const auto labels = load_labeled(o.input("labels"));
  const auto prediction_files = o.inputs("predictions");
  if (prediction_files.empty()) throw Error("missing_argument", "eval requires --predictions");
  const auto ids = subset_ids(o);

  std::vector<EvalTarget> test;
  for (const auto& r : labels) {
    if (!ids || ids->count(r.post_id)) test.push_back({r.post_id, r.labels});
  }
  std::vector<RunPredictions> runs;
  for (const auto& path : prediction_files) {
    RunPredictions run{path.string(), {}};
    for (auto& r : load_predictions(path)) run.by_post.emplace(r.post_id, std::move(r.blocks));
    runs.push_back(std::move(run));
  }
  const auto report = evaluate(runs, test);
  if (report.ties_excluded > 0) {
    log(LogLevel::warn, std::to_string(report.ties_excluded) + " tied lonely targets excluded from binary metrics");
  }
  const auto dir = o.out_dir();
  write_evaluation_csv(dir / "evaluation.csv", report);
  outs = {dir / "evaluation.csv"};
}

void cmd_compose(Options& o, Outputs& outs) {
  const auto items = load_items(o);
  const auto table = composition_table(items);
  const auto dir = o.out_dir();
  write_composition_csv(dir / "composition.csv", table);
  outs = {dir / "composition.csv"};
}

void cmd_coping(Options& o, Outputs& outs) {
  const auto items = load_items(o);
  const auto mode = parse_conditional_mode(o.get<std::string>("coping-mode", "soft"));
  std::vector<Category> categories;
  if (auto name = o.maybe<std::string>("category")) {
    categories.push_back(schema().category(*name));
  } else {
    categories = {Category::duration, Category::context, Category::interpersonal};
  }
  const auto label = o.maybe<std::string>("label");
  if (label && categories.size() != 1) throw Error("invalid_flag_combination", "--label requires --category");

  std::vector<CopingConditional> rows;
  for (auto c : categories) {
    if (label) {
      rows.push_back(coping_conditionals(items, c, *label, mode));
      continue;
    }
    const auto& block = schema().block(c);
    for (std::size_t i = 0; i + 1 < block.size(); ++i) {
      try {
        rows.push_back(coping_conditionals(items, c, block.labels[i], mode));
      } catch (const Error& e) {
        if (e.code() != "zero_condition_mass") throw;
        log(LogLevel::warn, e.what());
      }
    }
  }
  const auto dir = o.out_dir();
  write_coping_csv(dir / "coping.csv", rows);
  outs = {dir / "coping.csv"};
}

void cmd_its(Options& o, Outputs& outs) {
  const auto items = load_items(o);
  const auto category = schema().category(o.require<std::string>("category"));
  const auto label = o.require<std::string>("label");
  const auto intervention = static_cast<int>(o.get<std::int64_t>("intervention-month", 26));
  const auto monthly = monthly_proportions(items, category, label, intervention);
  for (int m : monthly.excluded_months) log(LogLevel::warn, "month " + std::to_string(m) + " has only NA mass; excluded");
  if (!monthly.missing_months.empty()) {
    log(LogLevel::warn, std::to_string(monthly.missing_months.size()) + " months without posts excluded");
  }
  const auto fit = its_fit(monthly.series);
  const auto dir = o.out_dir();
  write_monthly_csv(dir / "monthly.csv", monthly);
  write_its_csv(dir / "its.csv", fit);
  write_its_series_csv(dir / "its_series.csv", monthly.series, fit);
  outs = {dir / "monthly.csv", dir / "its.csv", dir / "its_series.csv"};
}

void cmd_export_embeddings(Options& o, Outputs& outs) {
  const auto loaded = load_checkpoint(o.input("checkpoint"));
  const auto kind = kind_of(loaded.model);
  if (kind == ModelKind::embed_mlp && o.has("beta")) {
    throw Error("invalid_flag_combination", "--beta applies only to HDLN checkpoints");
  }
  const double beta = kind == ModelKind::hdln ? o.get<double>("beta", 0.0) : 0.0;
  const auto features = load_features(o, o.get<std::uint64_t>("seed", loaded.seed));
  const auto ids = subset_ids(o);
  const std::size_t dim = input_dim(loaded.model);

  const auto dir = o.out_dir();
  CsvWriter csv(dir / "export.csv");
  bool header = false;
  for (const auto& [id, fv] : features) {
    if (ids && !ids->count(id)) continue;
    if (fv.dim() != dim) throw Error("shape_mismatch", "features of '" + id + "' do not match the checkpoint");
    const auto blocks = std::visit([&](const auto& m) { return predict_one(m, fv.values, beta); }, loaded.model);
    // HDLN exports its level-2 hidden; EmbedMlp has no shared hidden, so the input is exported.
    std::vector<float> embedding;
    if (const auto* h = std::get_if<HdlnModel<float>>(&loaded.model)) {
      embedding = h->hidden(fv.values);
    } else {
      embedding = fv.values;
    }
    if (!header) {
      std::vector<std::string> cols = {"post_id", "p_lonely"};
      for (auto c : kAllCategories) cols.emplace_back(schema().block(c).name);
      for (std::size_t i = 0; i < embedding.size(); ++i) cols.push_back("e" + std::to_string(i));
      csv.row(cols);
      header = true;
    }
    std::vector<std::string> row = {id, format_double(blocks[0][1])};
    for (auto c : kAllCategories) {
      row.emplace_back(schema().block(c).labels[argmax(blocks[index_of(c)])]);
    }
    for (float v : embedding) row.push_back(format_float(v));
    csv.row(row);
  }
  if (!header) throw Error("empty_group", "no posts to export");
  outs = {dir / "export.csv"};
}

struct Command {
  const char* name;
  const char* help;
  std::vector<std::string> flags;
  std::function<void(Options&, Outputs&)> run;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> table = {
      {"aggregate", "aggregate annotations into distributional labels",
       {"annotations", "posts", "min-words", "out"}, cmd_aggregate},
      {"filter", "apply candidate keyword/length filters", {"posts", "min-words", "out"}, cmd_filter},
      {"sample", "stratified sample by subreddit and period", {"posts", "sample-size", "seed", "out"}, cmd_sample},
      {"featurize", "hashed bag-of-words features", {"posts", "hash-dim", "seed", "out"}, cmd_featurize},
      {"split", "seeded 70/20/10 split", {"labels", "seed", "out"}, cmd_split},
      {"train", "train an embed-mlp or hdln model",
       {"labels", "posts", "embeddings", "features", "hash-dim", "model", "beta", "seed", "epochs", "batch-size", "lr",
        "warmup-ratio", "patience", "split", "out"},
       cmd_train},
      {"predict", "predict distributions from a checkpoint",
       {"checkpoint", "embeddings", "posts", "features", "hash-dim", "seed", "beta", "labels", "split", "subset",
        "out"},
       cmd_predict},
      {"eval", "binary and distributional metrics", {"labels", "predictions", "split", "subset", "out"}, cmd_eval},
      {"compose", "category composition table", {"labels", "predictions", "posts", "group", "out"}, cmd_compose},
      {"coping", "interaction conditionals given a loneliness form",
       {"labels", "predictions", "category", "label", "coping-mode", "out"},
       cmd_coping},
      {"its", "monthly proportions and interrupted time-series fit",
       {"labels", "predictions", "posts", "category", "label", "group", "intervention-month", "out"},
       cmd_its},
      {"export-embeddings", "export predictions with hidden representations",
       {"checkpoint", "embeddings", "posts", "features", "hash-dim", "seed", "beta", "split", "subset", "out"},
       cmd_export_embeddings},
  };
  return table;
}

void print_error(const std::string& command, const std::string& code, const std::string& message) {
  json record = {{"error", {{"code", code}, {"message", message}}}};
  if (!command.empty()) record["error"]["command"] = command;
  std::cerr << record.dump() << '\n';
}

json read_config(const fs::path& path, const Command& cmd) {
  if (!fs::is_regular_file(path)) throw Error("missing_input", "--config: no such file " + path.string());
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("invalid_config", path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw Error("invalid_config", path.string() + ": expected a JSON object");
  json out = json::object();
  for (auto& [key, value] : doc.items()) {
    bool known = false;
    for (const auto& s : flag_specs()) known = known || config_key(s.name) == key;
    if (!known) throw Error("invalid_config", path.string() + ": unknown key '" + key + "'");
    for (const auto& f : cmd.flags) {
      if (config_key(f) == key) out[key] = value;
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Hierarchical distributional loneliness toolkit", "hdl"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  struct Bound {
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
    std::string config;
  };
  std::map<std::string, Bound> bound;
  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& b = bound[cmd.name];
    sub->add_option("--config", b.config, "JSON config; flags override its values");
    for (const auto& f : cmd.flags) {
      const auto& spec = spec_of(f);
      const std::string flag = "--" + f;
      if (spec.type == FlagType::list) {
        sub->add_option(flag, b.lists[f], spec.help);
      } else {
        sub->add_option(flag, b.scalars[f], spec.help);
      }
    }
  }

  std::string command;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("", "usage", e.what());
    return 64;
  }

  const auto* sub = app.get_subcommands().front();
  command = sub->get_name();
  const Command* cmd = nullptr;
  for (const auto& c : commands()) {
    if (command == c.name) cmd = &c;
  }
  const auto& b = bound[command];
  try {
    json values = b.config.empty() ? json::object() : read_config(b.config, *cmd);
    for (const auto& f : cmd->flags) {
      if (sub->get_option("--" + f)->count() == 0) continue;
      const auto& spec = spec_of(f);
      if (spec.type == FlagType::list) {
        values[config_key(f)] = b.lists.at(f);
      } else {
        values[config_key(f)] = typed_value(spec, b.scalars.at(f));
      }
    }
    if (values.contains("predictions") && values["predictions"].is_string()) {
      values["predictions"] = json::array({values["predictions"]});
    }
    Options options(command, values);
    Outputs outputs;
    cmd->run(options, outputs);
    write_manifest(options.out_dir(), options, outputs);
    return 0;
  } catch (const Error& e) {
    print_error(command, e.code(), e.what());
    return 2;
  } catch (const json::exception& e) {
    print_error(command, "parse_error", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error(command, "internal", e.what());
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace hdl
