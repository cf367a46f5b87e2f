#include <fstream>

#include "cli_runner.hpp"
#include "doctest.h"
#include "hdl/corpus.hpp"
#include "hdl/io.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

using namespace hdl;
using testing_support::CliResult;
using testing_support::TempDir;

namespace {

CliResult run(const std::vector<std::string>& args, const TempDir& dir) {
  return testing_support::run_cli_process(args, dir.path());
}

json error_record(const CliResult& r) {
  const auto start = r.err.find("{\"error\"");
  if (start == std::string::npos) return json::object();
  return json::parse(r.err.substr(start, r.err.find('\n', start) - start));
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<LabeledRecord> fixture_labels() {
  std::vector<LabeledRecord> rows;
  for (int i = 0; i < 6; ++i) {
    LabeledRecord r;
    r.post_id = "q" + std::to_string(i);
    r.month_index = i;
    if (i % 2 == 0) {
      r.labels = PostLabelSet::zeros();
      r.labels[Category::lonely].values = {0, 1};
      for (auto c : kFineGrainedCategories) {
        r.labels[c].values.assign(schema().block(c).size(), 0.0);
        r.labels[c].values[static_cast<std::size_t>(i) % 3] = 1.0;
      }
    } else {
      r.labels = PostLabelSet::non_lonely();
    }
    rows.push_back(r);
  }
  return rows;
}

void write_predictions_like(const std::filesystem::path& p, const std::vector<LabeledRecord>& rows) {
  auto out = open_output(p);
  for (const auto& r : rows) {
    auto doc = to_json(r);
    doc["source"] = "prediction";
    doc["model"] = "hdln";
    out << doc.dump() << '\n';
  }
}

}  // namespace

TEST_CASE("usage errors exit 64 with a JSON error record") {
  TempDir dir;
  const auto r = run({"frobnicate"}, dir);
  CHECK(r.exit_code == 64);
  CHECK(error_record(r)["error"]["code"] == "usage");
  CHECK(run({}, dir).exit_code == 64);
  CHECK(run({"split", "--bogus", "1"}, dir).exit_code == 64);
  CHECK(run({"--version"}, dir).exit_code == 0);
}

TEST_CASE("missing inputs are reported with the failing command") {
  TempDir dir;
  const auto r = run({"split", "--labels", (dir / "nope.jsonl").string(), "--out", (dir / "o").string()}, dir);
  CHECK(r.exit_code == 2);
  const auto e = error_record(r);
  CHECK(e["error"]["code"] == "missing_input");
  CHECK(e["error"]["command"] == "split");

  const auto m = run({"split", "--out", (dir / "o").string()}, dir);
  CHECK(m.exit_code == 2);
  CHECK(error_record(m)["error"]["code"] == "missing_argument");

  const auto bad = run({"featurize", "--posts", "x", "--hash-dim", "many", "--out", (dir / "o").string()}, dir);
  CHECK(bad.exit_code == 2);
  CHECK(error_record(bad)["error"]["code"] == "invalid_argument");
}

TEST_CASE("beta with an embed-mlp model is an invalid flag combination") {
  TempDir dir;
  write_labeled(dir / "l.jsonl", fixture_labels());
  const auto r = run({"train", "--model", "embed-mlp", "--beta", "0.5", "--labels", (dir / "l.jsonl").string(),
                      "--out", (dir / "o").string()},
                     dir);
  CHECK(r.exit_code == 2);
  CHECK(error_record(r)["error"]["code"] == "invalid_flag_combination");
}

TEST_CASE("flags override config values and the manifest records the effective config") {
  TempDir dir;
  const auto corpus = testing_support::write_synthetic_corpus(dir.path(), 5, 3);
  {
    std::ofstream(dir / "cfg.json") << R"({"seed": 5, "hash_dim": 16, "model": "hdln"})";
  }
  const auto out = dir / "o";
  const auto r = run({"featurize", "--config", (dir / "cfg.json").string(), "--posts", corpus.posts.string(),
                      "--seed", "7", "--out", out.string()},
                     dir);
  REQUIRE(r.exit_code == 0);
  const auto manifest = read_json(out / "manifest.json");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["hash_dim"] == 16);
  CHECK_FALSE(manifest["config"].contains("model"));
  CHECK(manifest["command"] == "featurize");
  CHECK(manifest["inputs"][0]["fnv1a64"] == hash_file(corpus.posts));
  CHECK(manifest["outputs"][0]["fnv1a64"] == hash_file(out / "features.jsonl"));
  const auto features = load_embeddings(out / "features.jsonl");
  CHECK(features.size() == 5);
  CHECK(features.begin()->second.dim() == 16);

  {
    std::ofstream(dir / "bad.json") << R"({"sead": 5})";
  }
  const auto bad = run({"featurize", "--config", (dir / "bad.json").string(), "--out", out.string()}, dir);
  CHECK(bad.exit_code == 2);
  CHECK(error_record(bad)["error"]["code"] == "invalid_config");
}

TEST_CASE("eval of perfect predictions reports unit accuracies") {
  TempDir dir;
  const auto rows = fixture_labels();
  write_labeled(dir / "l.jsonl", rows);
  write_predictions_like(dir / "p.jsonl", rows);
  const auto out = dir / "o";
  const auto r = run({"eval", "--labels", (dir / "l.jsonl").string(), "--predictions", (dir / "p.jsonl").string(),
                      "--out", out.string()},
                     dir);
  REQUIRE(r.exit_code == 0);
  const auto csv = read_csv(out / "evaluation.csv");
  REQUIRE(csv.size() == 1 + 4 + 4 * 5);
  for (std::size_t i = 1; i < csv.size(); ++i) {
    if (csv[i][1] == "accuracy" || csv[i][1] == "f1") CHECK(csv[i][2] == "1.000000");
    if (csv[i][1] == "clark") CHECK(csv[i][2] == "0.000000");
    CHECK(csv[i][3] == "0.000000");
  }

  const auto unlabeled = run({"eval", "--labels", (dir / "l.jsonl").string(), "--predictions",
                              (dir / "l.jsonl").string(), "--out", out.string()},
                             dir);
  CHECK(unlabeled.exit_code == 2);
  CHECK(error_record(unlabeled)["error"]["code"] == "parse_error");
}

TEST_CASE("analysis subcommands accept labels or predictions but not both") {
  TempDir dir;
  const auto rows = fixture_labels();
  write_labeled(dir / "l.jsonl", rows);
  write_predictions_like(dir / "p.jsonl", rows);
  const auto out = dir / "o";
  CHECK(run({"compose", "--labels", (dir / "l.jsonl").string(), "--out", out.string()}, dir).exit_code == 0);
  const auto from_labels = testing_support::slurp(out / "composition.csv");
  CHECK(run({"compose", "--predictions", (dir / "p.jsonl").string(), "--out", out.string()}, dir).exit_code == 0);
  CHECK(testing_support::slurp(out / "composition.csv") == from_labels);

  const auto both = run({"compose", "--labels", (dir / "l.jsonl").string(), "--predictions",
                         (dir / "p.jsonl").string(), "--out", out.string()},
                        dir);
  CHECK(both.exit_code == 2);
  CHECK(error_record(both)["error"]["code"] == "invalid_flag_combination");

  const auto grouped = run({"compose", "--labels", (dir / "l.jsonl").string(), "--group", "subreddit",
                            "--out", out.string()},
                           dir);
  CHECK(grouped.exit_code == 2);
  CHECK(error_record(grouped)["error"]["code"] == "missing_argument");

  CHECK(run({"coping", "--labels", (dir / "l.jsonl").string(), "--category", "duration", "--label", "transient",
             "--out", out.string()},
            dir)
            .exit_code == 0);
  const auto coping = read_csv(out / "coping.csv");
  CHECK(coping.size() == 6);
}

TEST_CASE("a small pipeline runs end to end") {
  TempDir dir;
  const auto corpus = testing_support::write_synthetic_corpus(dir.path(), 300, 8);
  const auto agg = dir / "agg";
  REQUIRE(run({"aggregate", "--posts", corpus.posts.string(), "--annotations", corpus.annotations.string(), "--out",
               agg.string()},
              dir)
              .exit_code == 0);
  const auto labels = (agg / "labeled.jsonl").string();
  CHECK(load_labeled(labels).size() > 100);

  const auto tr = dir / "train";
  REQUIRE(run({"train", "--labels", labels, "--posts", corpus.posts.string(), "--hash-dim", "32", "--epochs", "2",
               "--model", "hdln", "--seed", "3", "--out", tr.string()},
              dir)
              .exit_code == 0);
  CHECK(read_csv(tr / "train_log.csv").size() == 3);

  const auto pr = dir / "pred";
  REQUIRE(run({"predict", "--checkpoint", (tr / "model.ckpt").string(), "--posts", corpus.posts.string(),
               "--hash-dim", "32", "--split", (tr / "split.csv").string(), "--subset", "test", "--out", pr.string()},
              dir)
              .exit_code == 0);
  REQUIRE(run({"eval", "--labels", labels, "--predictions", (pr / "predictions.jsonl").string(), "--split",
               (tr / "split.csv").string(), "--subset", "test", "--out", pr.string()},
              dir)
              .exit_code == 0);
  CHECK(read_csv(pr / "evaluation.csv").size() == 25);

  const auto its = dir / "its";
  REQUIRE(run({"its", "--labels", labels, "--category", "lonely", "--label", "lonely", "--out", its.string()}, dir)
              .exit_code == 0);
  CHECK(read_csv(its / "its.csv").size() == 6);

  const auto ex = dir / "export";
  REQUIRE(run({"export-embeddings", "--checkpoint", (tr / "model.ckpt").string(), "--posts", corpus.posts.string(),
               "--hash-dim", "32", "--out", ex.string()},
              dir)
              .exit_code == 0);
  const auto exported = read_csv(ex / "export.csv");
  CHECK(exported.size() == 301);
  CHECK(exported[0].size() == 2 + 5 + 64);
}
