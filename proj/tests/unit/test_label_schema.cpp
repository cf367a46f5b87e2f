#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "hdl/error.hpp"
#include "hdl/label_schema.hpp"
#include "hdl/rng.hpp"

using namespace hdl;

namespace {

AnnotationRecord vote(const std::string& post, const std::string& who, bool lonely,
                      std::array<std::size_t, 4> choices = {0, 0, 0, 0}) {
  AnnotationRecord r;
  r.post_id = post;
  r.annotator_id = who;
  r.lonely = lonely;
  if (lonely) {
    for (std::size_t i = 0; i < 4; ++i) r.choices[i] = choices[i];
  }
  return r;
}

const PostLabelSet& kept(const AggregateResult& r) {
  REQUIRE(std::holds_alternative<PostLabelSet>(r));
  return std::get<PostLabelSet>(r);
}

}  // namespace

TEST_CASE("schema has five blocks with fixed labels") {
  const auto& s = schema();
  REQUIRE(s.blocks().size() == 5);
  std::size_t total = 0;
  for (const auto& b : s.blocks()) {
    CHECK(b.offset == total);
    total += b.size();
    std::set<std::string_view> unique(b.labels.begin(), b.labels.end());
    CHECK(unique.size() == b.size());
  }
  CHECK(total == 21);
  CHECK(s.block(Category::lonely).size() == 2);
  CHECK(s.block(Category::duration).size() == 4);
  CHECK(s.block(Category::context).size() == 5);
  CHECK(s.block(Category::interpersonal).size() == 5);
  CHECK(s.block(Category::interaction).size() == 5);
  CHECK(s.block(Category::lonely).labels[1] == "lonely");
  CHECK(s.block(Category::interaction).labels[2] == "seek-validation-affirmation");
  CHECK(s.block(Category::context).labels[4] == "na");
  CHECK_FALSE(s.block(Category::lonely).has_na);
  CHECK(s.block(Category::duration).has_na);
  CHECK(s.block(Category::context).has_na);
  CHECK(s.block(Category::interpersonal).has_na);
  CHECK_FALSE(s.block(Category::interaction).has_na);
  CHECK(s.category("interpersonal") == Category::interpersonal);
  CHECK_THROWS_AS(s.category("mood"), Error);
}

TEST_CASE("distributional label invariants") {
  DistributionalLabel ok{Category::duration, {0.25, 0.25, 0.5, 0.0}};
  CHECK_NOTHROW(ok.validate());
  DistributionalLabel zero{Category::duration, {0, 0, 0, 0}};
  CHECK(zero.is_all_zero());
  CHECK_NOTHROW(zero.validate());
  CHECK_THROWS_AS((DistributionalLabel{Category::duration, {0.5, 0.5, 0.5, 0.0}}.validate()), Error);
  CHECK_THROWS_AS((DistributionalLabel{Category::duration, {1.5, -0.5, 0, 0}}.validate()), Error);
  CHECK_THROWS_AS((DistributionalLabel{Category::duration, {1, 0, 0}}.validate()), Error);

  auto labels = PostLabelSet::non_lonely();
  CHECK_NOTHROW(labels.validate());
  labels[Category::context].values = {1, 0, 0, 0, 0};
  CHECK_THROWS_AS(labels.validate(), Error);
}

TEST_CASE("worked interaction example gives (2/3, 0, 1/3, 0, 0)") {
  std::vector<AnnotationRecord> records = {vote("p", "a", true, {0, 0, 0, 0}), vote("p", "b", true, {0, 0, 0, 0}),
                                           vote("p", "c", true, {0, 0, 0, 2})};
  const auto result = aggregate_annotations(records, CandidateKind::lonely_candidate);
  const auto& l = kept(result);
  const auto& v = l[Category::interaction].values;
  CHECK(v == std::vector<double>{2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0, 0.0});
  CHECK(l.lonely().values == std::vector<double>{0.0, 1.0});
}

TEST_CASE("majority rule over every 3-annotator vote count") {
  for (std::size_t lonely_votes = 0; lonely_votes <= 3; ++lonely_votes) {
    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < 3; ++i) records.push_back(vote("p", "a" + std::to_string(i), i < lonely_votes));
    const auto lc = aggregate_annotations(records, CandidateKind::lonely_candidate);
    const auto nc = aggregate_annotations(records, CandidateKind::nonlonely_candidate);
    CAPTURE(lonely_votes);
    if (lonely_votes >= 2) {
      const auto& l = kept(lc);
      CHECK(l.lonely().values[1] == static_cast<double>(lonely_votes) / 3.0);
      CHECK(l.has_fine_grained());
      CHECK(std::holds_alternative<Discarded>(nc));
    } else {
      CHECK(std::holds_alternative<Discarded>(lc));
      const auto& n = kept(nc);
      CHECK(n.lonely().values == std::vector<double>{1.0, 0.0});
      CHECK_FALSE(n.has_fine_grained());
    }
  }
}

TEST_CASE("even splits are discarded") {
  std::vector<AnnotationRecord> two = {vote("p", "a", true), vote("p", "b", false)};
  CHECK(std::holds_alternative<Discarded>(aggregate_annotations(two, CandidateKind::lonely_candidate)));
  CHECK(std::holds_alternative<Discarded>(aggregate_annotations(two, CandidateKind::nonlonely_candidate)));
}

TEST_CASE("aggregation preconditions") {
  CHECK_THROWS_AS(aggregate_annotations({}, CandidateKind::lonely_candidate), Error);
  std::vector<AnnotationRecord> mixed = {vote("p", "a", true), vote("q", "b", true)};
  CHECK_THROWS_AS(aggregate_annotations(mixed, CandidateKind::lonely_candidate), Error);
  auto missing = vote("p", "a", true);
  missing.choices[1].reset();
  std::vector<AnnotationRecord> bad = {missing};
  CHECK_THROWS_AS(aggregate_annotations(bad, CandidateKind::lonely_candidate), Error);
  std::vector<AnnotationRecord> dup = {vote("p", "a", true), vote("p", "a", true)};
  CHECK_THROWS_AS(aggregate_annotations(dup, CandidateKind::lonely_candidate), Error);
  std::vector<AnnotationRecord> one = {vote("p", "a", true)};
  CHECK_THROWS_AS(aggregate_annotations(one, CandidateKind::excluded), Error);
}

TEST_CASE("fine-grained fractions count lonely voters only") {
  std::vector<AnnotationRecord> records = {vote("p", "a", true, {1, 2, 3, 4}), vote("p", "b", true, {0, 2, 3, 4}),
                                           vote("p", "c", false)};
  const auto result = aggregate_annotations(records, CandidateKind::lonely_candidate);
  const auto& l = kept(result);
  CHECK(l.lonely().values == std::vector<double>{1.0 / 3.0, 2.0 / 3.0});
  CHECK(l[Category::duration].values == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  CHECK(l[Category::context].values == std::vector<double>{0, 0, 1, 0, 0});
}

TEST_CASE("property: aggregation is permutation invariant and always valid") {
  Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 1 + rng.uniform_index(6);
    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      std::array<std::size_t, 4> c{};
      for (std::size_t k = 0; k < 4; ++k) {
        c[k] = rng.uniform_index(schema().block(kFineGrainedCategories[k]).size());
      }
      records.push_back(vote("p", "a" + std::to_string(i), rng.uniform_index(2) == 1, c));
    }
    const auto kind = rng.uniform_index(2) ? CandidateKind::lonely_candidate : CandidateKind::nonlonely_candidate;
    const auto base = aggregate_annotations(records, kind);
    auto shuffled = records;
    rng.shuffle(std::span<AnnotationRecord>(shuffled));
    const auto again = aggregate_annotations(shuffled, kind);
    REQUIRE(base.index() == again.index());
    if (const auto* l = std::get_if<PostLabelSet>(&base)) {
      CHECK_NOTHROW(l->validate());
      CHECK(l->flatten() == std::get<PostLabelSet>(again).flatten());
    }
  }
}

TEST_CASE("normalize_drop_na examples") {
  auto v = normalize_drop_na({Category::duration, {1.0 / 3, 1.0 / 3, 0, 1.0 / 3}});
  CHECK(v[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v[2] == 0.0);
  CHECK(normalize_drop_na({Category::duration, {1, 0, 0, 0}}) == std::vector<double>{1, 0, 0});
  v = normalize_drop_na({Category::context, {0.5, 0.25, 0, 0, 0.25}});
  CHECK(v[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  try {
    normalize_drop_na({Category::duration, {0, 0, 0, 1}});
    FAIL("expected na_only");
  } catch (const Error& e) {
    CHECK(e.code() == "na_only");
    CHECK(std::string(e.what()) == "NA-only distribution");
  }
  CHECK_THROWS_AS(normalize_drop_na({Category::interaction, {1, 0, 0, 0, 0}}), Error);
}

TEST_CASE("property: normalize_drop_na sums to one and keeps order") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> d(5);
    double s = 0.0;
    for (auto& x : d) s += (x = rng.uniform01());
    for (auto& x : d) x /= s;
    const auto out = normalize_drop_na({Category::context, d});
    CHECK(std::accumulate(out.begin(), out.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (d[i] < d[j]) CHECK(out[i] <= out[j]);
      }
    }
  }
}

TEST_CASE("interrater agreement by exact match") {
  std::vector<AnnotationRecord> r = {
      vote("p1", "a", true, {0, 0, 0, 0}), vote("p1", "b", true, {0, 1, 0, 0}),
      vote("p2", "a", true, {1, 1, 0, 0}), vote("p2", "b", true, {1, 1, 0, 0}),
      vote("p3", "a", true, {2, 2, 0, 0}), vote("p3", "b", true, {2, 3, 0, 0}),
      vote("p4", "c", true, {0, 0, 0, 0}),
  };
  const auto dur = pair_agreement(r, Category::duration, "a", "b");
  CHECK(dur.shared == 3);
  CHECK(dur.agreement == 1.0);
  const auto ctx = pair_agreement(r, Category::context, "a", "b");
  CHECK(ctx.matches == 1);
  CHECK(ctx.agreement == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(pair_agreement(r, Category::duration, "a", "c"), Error);

  std::vector<AnnotationRecord> disagree = {vote("p1", "a", true, {0, 0, 0, 0}), vote("p1", "b", true, {1, 0, 0, 0})};
  CHECK(pair_agreement(disagree, Category::duration, "a", "b").agreement == 0.0);
  const auto all = interrater_agreement(r, Category::lonely);
  REQUIRE(all.size() == 1);
  CHECK(all[0].annotator_a == "a");
  CHECK(all[0].agreement == 1.0);
}

TEST_CASE("annotation JSON parsing") {
  const auto r = parse_annotation(json::parse(
      R"({"post_id":"p","annotator_id":"x","lonely":true,"duration":"enduring","context":"na",)"
      R"("interpersonal":"peers","interaction":"reach-out"})"));
  CHECK(r.choice(Category::duration) == 1u);
  CHECK(r.choice(Category::context) == 4u);
  CHECK(r.choice(Category::interaction) == 3u);
  CHECK_THROWS_AS(parse_annotation(json::parse(
                      R"({"post_id":"p","annotator_id":"x","lonely":true,"duration":"Enduring","context":"na",)"
                      R"("interpersonal":"peers","interaction":"reach-out"})")),
                  Error);
  CHECK_THROWS_AS(parse_annotation(json::parse(R"({"post_id":"p","annotator_id":"x","lonely":true})")), Error);
  const auto n = parse_annotation(json::parse(R"({"post_id":"p","annotator_id":"x","lonely":false,"duration":null})"));
  CHECK_FALSE(n.choice(Category::duration).has_value());
}
