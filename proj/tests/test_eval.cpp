#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "annot/error.hpp"
#include "annot/experiments.hpp"
#include "annot/metrics.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace annot;
using namespace annot::eval;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an annot::Error");
  return Errc::BadConfig;
}

net::ModelConfig tiny_model() {
  net::ModelConfig c;
  c.n_channels = 3;
  c.n_samples = 32;
  c.temporal_filters = 2;
  c.temporal_kernel = 5;
  c.depth_multiplier = 2;
  c.separable_kernel = 3;
  c.pool1 = 4;
  c.pool2 = 2;
  return c;
}

ClassifierConfig tiny_classifier() {
  ClassifierConfig c;
  c.model = tiny_model();
  c.train.lr = 0.01;
  c.train.batch_size = 16;
  c.train.max_epochs = 15;
  return c;
}

// Gaussian windows, every 4th one a target. Informative targets carry a
// bump on channel 0; otherwise labels are drawn independently of the data.
dsp::EpochSet toy_set(std::size_t n, std::uint64_t seed, bool informative) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.25);
  dsp::EpochSet set;
  for (std::size_t i = 0; i < n; ++i) {
    dsp::Epoch e;
    e.stimulus_index = i;
    e.samples.resize(3, 32);
    for (Eigen::Index r = 0; r < 3; ++r)
      for (Eigen::Index c = 0; c < 32; ++c) e.samples(r, c) = g(rng);
    const bool target = informative ? i % 4 == 0 : coin(rng);
    if (informative && target)
      for (Eigen::Index c = 0; c < 32; ++c) e.samples(0, c) += 3.0 * std::exp(-0.5 * std::pow((c - 13.0) / 2.5, 2.0));
    e.label = target;
    set.epochs.push_back(std::move(e));
  }
  return set;
}

dsp::EpochSet labels_only(std::size_t n, std::size_t n_targets) {
  dsp::EpochSet set;
  for (std::size_t i = 0; i < n; ++i) {
    dsp::Epoch e;
    e.stimulus_index = i;
    e.label = i < n_targets;
    set.epochs.push_back(std::move(e));
  }
  return set;
}

} // namespace

TEST_CASE("metrics on worked examples") {
  auto m = metrics({.tp = 8, .fp = 2, .tn = 86, .fn = 4});
  CHECK(m.precision == doctest::Approx(0.8));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(16.0 / 22.0));
  CHECK_FALSE(m.degenerate);

  auto none = metrics({.tp = 0, .fp = 0, .tn = 10, .fn = 5});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.degenerate);

  auto perfect = metrics({.tp = 5, .fp = 0, .tn = 5, .fn = 0});
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("confusion counts and F1 as harmonic mean") {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<bool> truth(200), pred(200);
    for (std::size_t i = 0; i < 200; ++i) {
      truth[i] = coin(rng);
      pred[i] = coin(rng);
    }
    std::vector<char> t(truth.begin(), truth.end()), p(pred.begin(), pred.end());
    bool tb[200], pb[200];
    for (std::size_t i = 0; i < 200; ++i) {
      tb[i] = t[i];
      pb[i] = p[i];
    }
    auto c = confusion(std::span<const bool>(tb, 200), std::span<const bool>(pb, 200));
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < 200; ++i) {
      tp += t[i] && p[i];
      fp += !t[i] && p[i];
      fn += t[i] && !p[i];
      tn += !t[i] && !p[i];
    }
    CHECK(c == ConfusionCounts{tp, fp, tn, fn});
    auto m = metrics(c);
    if (!m.degenerate && m.precision + m.recall > 0)
      CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
    CHECK(m.f1 >= 0.0);
    CHECK(m.f1 <= 1.0);
  }
}

TEST_CASE("stratified folds balance classes") {
  auto set = labels_only(500, 200);
  auto folds = stratified_folds(set, 5, 3);
  REQUIRE(folds.size() == 500);
  std::vector<std::size_t> size(5, 0), targets(5, 0);
  for (std::size_t i = 0; i < 500; ++i) {
    REQUIRE(folds[i] < 5);
    ++size[folds[i]];
    targets[folds[i]] += set.epochs[i].label.value();
  }
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(size[f] == 100);
    CHECK(targets[f] >= 39);
    CHECK(targets[f] <= 41);
  }
  // Uneven counts still differ by at most one per class.
  auto odd = labels_only(503, 37);
  auto fo = stratified_folds(odd, 5, 1);
  std::vector<std::size_t> t5(5, 0), n5(5, 0);
  for (std::size_t i = 0; i < 503; ++i) (odd.epochs[i].label.value() ? t5 : n5)[fo[i]]++;
  CHECK(*std::max_element(t5.begin(), t5.end()) - *std::min_element(t5.begin(), t5.end()) <= 1);
  CHECK(*std::max_element(n5.begin(), n5.end()) - *std::min_element(n5.begin(), n5.end()) <= 1);

  CHECK(stratified_folds(set, 5, 3) == folds);
  CHECK(code_of([&] { stratified_folds(set, 1, 0); }) == Errc::BadConfig);
  CHECK(code_of([&] { stratified_folds(labels_only(100, 3), 5, 0); }) == Errc::InsufficientClassMembers);
}

TEST_CASE("summary statistics") {
  auto s = summarize({0.6, 0.7, 0.8});
  CHECK(s.mean == doctest::Approx(0.7));
  CHECK(s.std == doctest::Approx(0.1));
  CHECK(summarize({0.5}).std == 0.0);
}

TEST_CASE("Spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ties use average ranks: ranks (1.5, 1.5, 3) vs (1, 2, 3).
  CHECK(spearman({1, 1, 2}, {1, 2, 3}) == doctest::Approx(std::sqrt(3.0) / 2.0));
  CHECK(spearman({1, 1, 1}, {1, 2, 3}) == 0.0);
  CHECK(code_of([] { spearman({1}, {1}); }) == Errc::ShapeMismatch);
}

TEST_CASE("k-fold evaluation predicts every epoch once and is reproducible") {
  auto set = toy_set(160, 1, true);
  auto cfg = tiny_classifier();
  auto a = kfold_evaluate(set, 4, cfg, std::nullopt, 7);
  auto b = kfold_evaluate(set, 4, cfg, std::nullopt, 7);
  CHECK(a.fingerprint == b.fingerprint);
  REQUIRE(a.predictions.size() == 160);
  for (std::size_t i = 0; i < 160; ++i) {
    CHECK(a.predictions[i].stimulus_index == i);
    CHECK(a.predictions[i].score == b.predictions[i].score);
  }
  CHECK(a.folds.size() == 4);
  std::size_t n = 0;
  ConfusionCounts sum{};
  for (const auto& f : a.folds) {
    n += f.n_test;
    sum.tp += f.before.tp;
    sum.fp += f.before.fp;
    sum.tn += f.before.tn;
    sum.fn += f.before.fn;
  }
  CHECK(n == 160);
  CHECK(sum == a.pooled_before);
  CHECK_FALSE(a.refinement.has_value());
  CHECK(a.pooled_after == a.pooled_before);
  // The planted pattern is learnable.
  CHECK(a.pooled_before_metrics.f1 > 0.8);
}

TEST_CASE("labels independent of the data give precision near prevalence") {
  auto set = toy_set(400, 5, false);
  auto cfg = tiny_classifier();
  auto r = kfold_evaluate(set, 5, cfg, std::nullopt, 2);
  const auto& c = r.pooled_before;
  REQUIRE(c.tp + c.fp > 20);
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  CHECK(std::abs(precision - 0.25) < 0.12);
}

TEST_CASE("refined counts convert removed predictions to negatives") {
  rsvp::SequencePlan plan;
  for (std::size_t i = 0; i < 6; ++i) plan.stimuli.push_back({i, "id" + std::to_string(i), i < 3, 0});
  std::vector<net::Prediction> preds;
  for (std::size_t i = 0; i < 6; ++i) preds.push_back({i, 0.5, i != 2 && i != 5});
  // Predicted targets: 0, 1, 3, 4. Truth targets: 0, 1, 2.
  CHECK(predicted_target_ids(plan, preds) == std::vector<std::string>{"id0", "id1", "id3", "id4"});
  refine::RefinementResult r;
  r.kept = {"id0", "id3"};
  r.removed = {"id1", "id4"};
  auto c = refined_counts(plan, preds, r);
    // After: positives 0 (hit) and 3 (false alarm); 1 and 2 missed; 4 and 5 rejected.
  CHECK(c == ConfusionCounts{.tp = 1, .fp = 1, .tn = 2, .fn = 2});
}

TEST_CASE("identical populations give zero transfer gap") {
  auto cfg = tiny_classifier();
  auto train_a = toy_set(120, 1, true);
  std::vector<dsp::EpochSet> held{toy_set(80, 2, true), toy_set(80, 3, true)};
  auto r = transfer_experiment(train_a, held, held, cfg, 4);
  CHECK(r.specific_f1 == r.agnostic_f1);
  CHECK(r.difference == 0.0);
  CHECK(code_of([&] { transfer_experiment(train_a, {}, held, cfg, 4); }) == Errc::BadConfig);
}

TEST_CASE("transfer classes must not share images") {
  TransferConfig cfg;
  cfg.class_a.target_class = "cats";
  cfg.class_b.target_class = "dogs";
  // Without prefixes both draw non-targets from the same c00_0000... ids.
  CHECK(code_of([&] { transfer_experiment(cfg); }) == Errc::OverlappingSets);
  cfg.class_b.target_class = "cats";
  cfg.class_b.id_prefix = "";
  CHECK(code_of([&] { transfer_experiment(cfg); }) == Errc::OverlappingSets);
}

TEST_CASE("image ids and session simulation") {
  SessionSpec spec;
  spec.n_targets = 20;
  spec.n_nontargets = 230;
  spec.n_categories = 10;
  spec.id_prefix = "x_";
  auto ids = make_image_ids(spec);
  CHECK(ids.targets.front() == "x_target_0000");
  CHECK(ids.nontargets[3] == "x_c03_0000");
  CHECK(ids.nontargets[13] == "x_c03_0001");
  std::set<std::string> all(ids.targets.begin(), ids.targets.end());
  all.insert(ids.nontargets.begin(), ids.nontargets.end());
  CHECK(all.size() == 250);

  auto data = simulate_epochs(spec, {}, {}, 11);
  CHECK(data.plan.stimuli.size() == 250);
  CHECK(data.epochs.size() + data.epochs.dropped.size() == 250);
  auto again = simulate_epochs(spec, {}, {}, 11);
  CHECK(again.plan == data.plan);
  CHECK(again.epochs.epochs.back().samples == data.epochs.epochs.back().samples);
}

TEST_CASE("rate sweep argument checks and single-rate trend") {
  SweepConfig cfg;
  cfg.session.n_targets = 10;
  cfg.session.n_nontargets = 120;
  cfg.session.n_categories = 4;
  cfg.classifier.train.max_epochs = 2;
  cfg.repetitions = 1;
  CHECK(code_of([&] { rate_sweep({0.5}, cfg); }) == Errc::BadConfig);
  CHECK(code_of([&] { rate_sweep({25.0}, cfg); }) == Errc::BadConfig);
  CHECK(code_of([&] { rate_sweep({}, cfg); }) == Errc::BadConfig);
  auto r = rate_sweep({6.0}, cfg);
  REQUIRE(r.points.size() == 1);
  CHECK(r.points[0].f1.size() == 1);
  CHECK_FALSE(r.trend.has_value());
  CHECK(r.points[0].mean_f1 == r.points[0].f1[0]);
  CHECK(rate_trial(6.0, cfg, 0) == r.points[0].f1[0]);
}
