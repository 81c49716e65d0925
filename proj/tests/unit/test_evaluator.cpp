#include <doctest.h>

#include <cmath>

#include "kiwi/evaluator.hpp"
#include "support.hpp"

using namespace kiwi;

namespace {

Detection det(const std::string& id, BBox b, double score = 1.0) {
  Detection d;
  d.image_id = id;
  d.bbox = b;
  d.score = score;
  return d;
}

EvalConfig no_groups() {
  EvalConfig cfg;
  cfg.group_key = GroupKey::none;
  return cfg;
}

}  // namespace

TEST_CASE("compute_metrics") {
  const auto m = compute_metrics(10, 2, 3);
  CHECK(m.precision == doctest::Approx(10.0 / 12.0).epsilon(1e-12));
  CHECK(m.recall == doctest::Approx(10.0 / 13.0).epsilon(1e-12));
  CHECK(m.f1 == doctest::Approx(0.8).epsilon(1e-12));

  const auto zero = compute_metrics(0, 0, 0);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  const auto perfect = compute_metrics(5, 0, 0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  CHECK(compute_metrics(0, 4, 0).precision == 0.0);
  CHECK(compute_metrics(0, 0, 4).recall == 0.0);
}

TEST_CASE("match_image examples") {
  const std::vector<Detection> gts{det("a", {0, 0, 10, 10}), det("a", {50, 50, 10, 10})};
  const auto same = match_image(gts, gts, 0.5);
  CHECK(same.tp_pairs.size() == 2);
  CHECK(same.fp_preds.empty());
  CHECK(same.fn_gts.empty());

  const std::vector<Detection> lone{det("a", {0, 0, 10, 10})};
  const auto fp = match_image(lone, {}, 0.5);
  CHECK(fp.fp_preds.size() == 1);
  CHECK(fp.tp_pairs.empty());

  const std::vector<Detection> two{det("a", {1, 0, 10, 10}, 0.8), det("a", {0, 1, 10, 10}, 0.9)};
  const auto dup = match_image(two, lone, 0.5);
  REQUIRE(dup.tp_pairs.size() == 1);
  CHECK(dup.tp_pairs[0].first == 1);
  REQUIRE(dup.fp_preds.size() == 1);
  CHECK(dup.fp_preds[0] == 0);

  const std::vector<Detection> mixed{det("a", {0, 0, 1, 1}), det("b", {0, 0, 1, 1})};
  CHECK_THROWS_AS(match_image(mixed, {}, 0.5), Error);
}

TEST_CASE("greedy matching never beats the optimum") {
  test::Gen gen(41);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Detection> preds, gts;
    std::vector<BBox> pb, gb;
    for (int i = gen.integer(0, 6); i > 0; --i) {
      gb.push_back(gen.box(60, 5, 30));
      gts.push_back(det("x", gb.back()));
    }
    for (int i = gen.integer(0, 6); i > 0; --i) {
      pb.push_back(gen.box(60, 5, 30));
      preds.push_back(det("x", pb.back(), gen.uniform(0, 1)));
    }
    const auto m = match_image(preds, gts, 0.5);
    CHECK(m.tp_pairs.size() + m.fp_preds.size() == preds.size());
    CHECK(m.tp_pairs.size() + m.fn_gts.size() == gts.size());
    for (const auto& [p, g] : m.tp_pairs) CHECK(iou(pb[p], gb[g]) >= 0.5);
    const auto best = test::optimal_matches(pb, gb, 0.5);
    CHECK(m.tp_pairs.size() <= best);

    bool unambiguous = true;
    for (const auto& p : pb) {
      int candidates = 0;
      for (const auto& g : gb) candidates += iou(p, g) >= 0.5;
      unambiguous = unambiguous && candidates <= 1;
    }
    if (unambiguous) CHECK(m.tp_pairs.size() == best);
  }
}

TEST_CASE("evaluate tallies and scale invariance") {
  test::Gen gen(43);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> preds, gts;
    for (int img = 0; img < 5; ++img) {
      const std::string id = "im" + std::to_string(img);
      for (int i = gen.integer(1, 8); i > 0; --i) {
        const BBox g = gen.box(300, 5, 40);
        gts.push_back(det(id, g));
        if (gen.coin(0.7)) preds.push_back(det(id, translated(g, gen.uniform(-3, 3), gen.uniform(-3, 3)), gen.uniform(0.5, 1)));
      }
      for (int i = gen.integer(0, 3); i > 0; --i) preds.push_back(det(id, gen.box(300, 5, 40), gen.uniform(0.5, 1)));
    }
    const auto r = evaluate(preds, gts, std::nullopt, no_groups());
    CHECK(r.overall.tally.tp + r.overall.tally.fn == gts.size());
    CHECK(r.overall.tally.tp + r.overall.tally.fp == preds.size());

    const double k = gen.uniform(0.25, 4.0);
    auto sp = preds, sg = gts;
    for (auto& d : sp) d.bbox = scaled(d.bbox, k);
    for (auto& d : sg) d.bbox = scaled(d.bbox, k);
    const auto s = evaluate(sp, sg, std::nullopt, no_groups());
    CHECK(s.overall.tally.tp == r.overall.tally.tp);
    CHECK(s.overall.tally.fp == r.overall.tally.fp);
    CHECK(s.overall.tally.fn == r.overall.tally.fn);
  }
}

TEST_CASE("ground truth against itself is perfect") {
  test::Gen gen(47);
  std::vector<Detection> gts;
  for (int i = 0; i < 200; ++i) gts.push_back(det("g" + std::to_string(i % 7), gen.box(500, 4, 50)));
  const auto r = evaluate(gts, gts, std::nullopt, no_groups());
  CHECK(r.overall.metrics.precision == 1.0);
  CHECK(r.overall.metrics.recall == 1.0);
  CHECK(r.overall.metrics.f1 == 1.0);
}

TEST_CASE("score filter and groups") {
  const std::vector<Detection> gts{det("b1_0", {0, 0, 10, 10}), det("a_0", {0, 0, 10, 10}),
                                   det("a_1", {20, 20, 10, 10})};
  const std::vector<Detection> preds{det("b1_0", {0, 0, 10, 10}, 0.4), det("a_0", {0, 0, 10, 10}, 0.9),
                                     det("a_1", {100, 100, 10, 10}, 0.6)};
  const Manifest manifest{{"a_0", "A"}, {"a_1", "A"}, {"b1_0", "B1"}, {"b2_0", "B2"}};
  const auto r = evaluate(preds, gts, manifest, EvalConfig{});
  REQUIRE(r.groups.size() == 3);
  CHECK(r.groups[0].name == "A");
  CHECK(r.groups[0].tally.tp == 1);
  CHECK(r.groups[0].tally.fp == 1);
  CHECK(r.groups[0].tally.fn == 1);
  CHECK(r.groups[1].name == "B1");
  CHECK(r.groups[1].tally.tp == 0);  // below score_min
  CHECK(r.groups[1].tally.fn == 1);
  CHECK(r.groups[2].name == "B2");
  CHECK(r.groups[2].tally.tp + r.groups[2].tally.fp + r.groups[2].tally.fn == 0);
  CHECK(r.overall.tally.tp == 1);
  CHECK(r.overall.tally.fn == 2);
  CHECK(confusion_summary(r) == "group,tp,fp,fn\nA,1,1,1\nB1,0,0,1\nB2,0,0,0\n");

  const std::vector<Detection> stray{det("zzz", {0, 0, 1, 1})};
  CHECK_THROWS_AS(evaluate(stray, gts, manifest, EvalConfig{}), Error);
  CHECK_THROWS_AS(evaluate(stray, gts, std::nullopt, no_groups()), Error);
}

TEST_CASE("empty inputs and report text") {
  const auto r = evaluate({}, {}, std::nullopt, no_groups());
  CHECK(r.groups.empty());
  CHECK(confusion_summary(r) == "group,tp,fp,fn\n");
  CHECK(r.overall.metrics.f1 == 0.0);

  const std::vector<Detection> gts{det("a", {0, 0, 10, 10})};
  const auto text = render_report(evaluate(gts, gts, std::nullopt, no_groups()), "model");
  CHECK(text.find("overall") != std::string::npos);
  CHECK(text.find("1.000") != std::string::npos);

  EvalConfig bad;
  bad.iou_threshold = 1.5;
  CHECK_THROWS_AS(evaluate({}, {}, std::nullopt, bad), Error);
}
