#include "annot/experiments.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

namespace annot::eval {

namespace {

std::string numbered(const std::string& stem, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return stem + buf;
}

dsp::EpochSet subset(const dsp::EpochSet& set, const std::vector<std::size_t>& rows) {
  dsp::EpochSet out;
  out.rate_hz_sampling = set.rate_hz_sampling;
  out.channel_names = set.channel_names;
  out.epochs.reserve(rows.size());
  for (auto r : rows) out.epochs.push_back(set.epochs[r]);
  return out;
}

bool is_target(const dsp::Epoch& e) { return e.label.value_or(false); }

ClassifierConfig fitted_to(const ClassifierConfig& cfg, const dsp::EpochSet& set) {
  auto c = cfg;
  if (!set.epochs.empty()) c.model.n_channels = static_cast<std::size_t>(set.epochs.front().samples.rows());
  return c;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

ImageIds make_image_ids(const SessionSpec& spec) {
  if (spec.n_categories == 0) throw Error(Errc::BadConfig, "session needs at least one non-target category");
  ImageIds ids;
  for (std::size_t i = 0; i < spec.n_targets; ++i) ids.targets.push_back(numbered(spec.id_prefix + spec.target_class, i));
  for (std::size_t i = 0; i < spec.n_nontargets; ++i) {
    char cat[24];
    std::snprintf(cat, sizeof cat, "c%02zu", i % spec.n_categories);
    ids.nontargets.push_back(numbered(spec.id_prefix + cat, i / spec.n_categories));
  }
  return ids;
}

SessionData simulate_epochs(const SessionSpec& spec, const sim::SimConfig& sim_cfg, const dsp::PreprocessConfig& pre,
                            std::uint64_t seed) {
  auto ids = make_image_ids(spec);
  auto plan_cfg = spec.plan;
  plan_cfg.seed = derive_seed(seed, "plan");
  SessionData out;
  out.plan = rsvp::generate_plan(ids.targets, ids.nontargets, plan_cfg);
  out.timeline = rsvp::build_timeline(out.plan);

  auto s = sim_cfg;
  s.seed = derive_seed(seed, "sim");
  auto rec = sim::simulate_session(out.plan, out.timeline, s, ChannelLayout::emotiv14());

  auto p = pre;
  p.ica_config.seed = derive_seed(seed, "ica");
  auto result = dsp::preprocess(rec, p);
  out.epochs = std::move(result.epochs);
  out.report = std::move(result.report);
  return out;
}

std::pair<dsp::EpochSet, dsp::EpochSet> split_stratified(const dsp::EpochSet& set, double fraction,
                                                         std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error(Errc::BadConfig, "validation fraction must be in [0, 1)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < set.size(); ++i) (is_target(set.epochs[i]) ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  std::vector<std::size_t> first, second;
  for (auto* cls : {&pos, &neg}) {
    auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cls->size())));
    for (std::size_t i = 0; i < cls->size(); ++i) (i < n_val ? second : first).push_back((*cls)[i]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {subset(set, first), subset(set, second)};
}

net::TrainResult fit_classifier(const dsp::EpochSet& train_session, const ClassifierConfig& cfg, std::uint64_t seed) {
  auto c = fitted_to(cfg, train_session);
  auto [train_set, val_set] = split_stratified(train_session, c.validation_fraction, derive_seed(seed, "split"));
  auto model = net::init_model(c.model, derive_seed(seed, "init"));
  auto tc = c.train;
  tc.seed = derive_seed(seed, "train");
  return net::train(model, train_set, val_set, tc);
}

ConfusionCounts score_predictions(const dsp::EpochSet& truth, const std::vector<net::Prediction>& predictions) {
  if (truth.size() != predictions.size()) throw Error(Errc::ShapeMismatch, "predictions do not match epochs");
  std::vector<char> t(truth.size()), p(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth.epochs[i].stimulus_index != predictions[i].stimulus_index)
      throw Error(Errc::ShapeMismatch, "prediction order does not match epochs");
    t[i] = is_target(truth.epochs[i]);
    p[i] = predictions[i].label;
  }
  return confusion(std::span<const bool>(reinterpret_cast<const bool*>(t.data()), t.size()),
                   std::span<const bool>(reinterpret_cast<const bool*>(p.data()), p.size()));
}

std::vector<std::string> predicted_target_ids(const rsvp::SequencePlan& plan,
                                              const std::vector<net::Prediction>& predictions) {
  std::vector<std::string> out;
  for (const auto& p : predictions) {
    if (!p.label) continue;
    if (p.stimulus_index >= plan.stimuli.size())
      throw Error(Errc::ShapeMismatch, "prediction refers to a stimulus outside the plan");
    out.push_back(plan.stimuli[p.stimulus_index].image_id);
  }
  return out;
}

ConfusionCounts refined_counts(const rsvp::SequencePlan& plan, const std::vector<net::Prediction>& predictions,
                               const refine::RefinementResult& refined) {
  std::set<std::string> removed(refined.removed.begin(), refined.removed.end());
  ConfusionCounts c;
  for (const auto& p : predictions) {
    const auto& item = plan.stimuli.at(p.stimulus_index);
    bool label = p.label && !removed.count(item.image_id);
    if (item.is_target)
      ++(label ? c.tp : c.fn);
    else
      ++(label ? c.fp : c.tn);
  }
  return c;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = mean_of(values);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<std::size_t> stratified_folds(const dsp::EpochSet& set, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::BadConfig, "k-fold evaluation needs k >= 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < set.size(); ++i) (is_target(set.epochs[i]) ? pos : neg).push_back(i);
  if (pos.size() < k || neg.size() < k)
    throw Error(Errc::InsufficientClassMembers, "each class needs at least k = " + std::to_string(k) + " members (" +
                                                    std::to_string(pos.size()) + " targets, " +
                                                    std::to_string(neg.size()) + " non-targets)");
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::size_t> fold(set.size());
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = i % k;
  // Continue the deal where the targets stopped so fold sizes stay within one.
  for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = (pos.size() + i) % k;
  return fold;
}

ExperimentReport kfold_evaluate(const dsp::EpochSet& set, std::size_t k, const ClassifierConfig& cfg,
                                const std::optional<RefineContext>& refine_ctx, std::uint64_t seed) {
  auto fold_of = stratified_folds(set, k, derive_seed(seed, "folds"));
  ExperimentReport report;
  report.predictions.resize(set.size());
  std::vector<std::vector<std::size_t>> test_rows(k);
  for (std::size_t i = 0; i < set.size(); ++i) test_rows[fold_of[i]].push_back(i);

  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> tr;
    for (std::size_t i = 0; i < set.size(); ++i)
      if (fold_of[i] != f) tr.push_back(i);
    auto fit = fit_classifier(subset(set, tr), cfg, derive_seed(seed, "fold" + std::to_string(f)));
    auto preds = net::predict(fit.model, subset(set, test_rows[f]));
    for (std::size_t j = 0; j < preds.size(); ++j) report.predictions[test_rows[f][j]] = preds[j];
  }
  report.pooled_before = score_predictions(set, report.predictions);
  report.pooled_after = report.pooled_before;

  std::set<std::string> removed;
  if (refine_ctx && refine_ctx->plan && refine_ctx->features) {
    auto rc = refine_ctx->config;
    rc.seed = derive_seed(seed, "refine");
    report.refinement = refine::refine(predicted_target_ids(*refine_ctx->plan, report.predictions),
                                       *refine_ctx->features, rc);
    removed.insert(report.refinement->removed.begin(), report.refinement->removed.end());
    report.pooled_after = refined_counts(*refine_ctx->plan, report.predictions, *report.refinement);
  }
  report.pooled_before_metrics = metrics(report.pooled_before);
  report.pooled_after_metrics = metrics(report.pooled_after);

  std::vector<double> f1b, pb, rb, f1a, pa, ra;
  for (std::size_t f = 0; f < k; ++f) {
    FoldResult fr;
    fr.fold = f;
    fr.n_test = test_rows[f].size();
    fr.refined = report.refinement.has_value();
    for (auto i : test_rows[f]) {
      const bool truth = is_target(set.epochs[i]);
      const auto& p = report.predictions[i];
      bool after = p.label;
      if (after && fr.refined) after = !removed.count(refine_ctx->plan->stimuli.at(p.stimulus_index).image_id);
      fr.n_test_targets += truth;
      if (truth) {
        ++(p.label ? fr.before.tp : fr.before.fn);
        ++(after ? fr.after.tp : fr.after.fn);
      } else {
        ++(p.label ? fr.before.fp : fr.before.tn);
        ++(after ? fr.after.fp : fr.after.tn);
      }
    }
    fr.before_metrics = metrics(fr.before);
    fr.after_metrics = metrics(fr.after);
    f1b.push_back(fr.before_metrics.f1);
    pb.push_back(fr.before_metrics.precision);
    rb.push_back(fr.before_metrics.recall);
    f1a.push_back(fr.after_metrics.f1);
    pa.push_back(fr.after_metrics.precision);
    ra.push_back(fr.after_metrics.recall);
    report.folds.push_back(fr);
  }
  report.f1_before = summarize(f1b);
  report.precision_before = summarize(pb);
  report.recall_before = summarize(rb);
  report.f1_after = summarize(f1a);
  report.precision_after = summarize(pa);
  report.recall_after = summarize(ra);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[order[m]] = avg;
    i = j + 1;
  }
  return r;
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::ShapeMismatch, "spearman needs two equal-length series");
  auto ra = ranks(a), rb = ranks(b);
  double ma = mean_of(ra), mb = mean_of(rb);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double rate_trial(double rate_hz, const SweepConfig& cfg, std::size_t repetition) {
  if (!(rate_hz >= 1.0 && rate_hz <= 20.0)) throw Error(Errc::BadConfig, "presentation rates must lie in [1, 20] Hz");
  char tag[64];
  std::snprintf(tag, sizeof tag, "rate%.6g/rep%zu", rate_hz, repetition);
  auto spec = cfg.session;
  spec.plan.rate_hz = rate_hz;
  auto train_data = simulate_epochs(spec, cfg.sim, cfg.preprocess, derive_seed(cfg.seed, std::string(tag) + "/train"));
  auto test_data = simulate_epochs(spec, cfg.sim, cfg.preprocess, derive_seed(cfg.seed, std::string(tag) + "/test"));
  auto fit = fit_classifier(train_data.epochs, cfg.classifier, derive_seed(cfg.seed, std::string(tag) + "/fit"));
  auto preds = net::predict(fit.model, test_data.epochs);
  return metrics(score_predictions(test_data.epochs, preds)).f1;
}

SweepResult rate_sweep(const std::vector<double>& rates, const SweepConfig& cfg) {
  if (rates.empty()) throw Error(Errc::BadConfig, "rate sweep needs at least one rate");
  if (cfg.repetitions == 0) throw Error(Errc::BadConfig, "rate sweep needs at least one repetition");
  for (double r : rates)
    if (!(r >= 1.0 && r <= 20.0)) throw Error(Errc::BadConfig, "presentation rates must lie in [1, 20] Hz");
  SweepResult out;
  for (double r : rates) {
    RatePoint p;
    p.rate_hz = r;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) p.f1.push_back(rate_trial(r, cfg, rep));
    p.mean_f1 = mean_of(p.f1);
    out.points.push_back(std::move(p));
  }
  if (rates.size() >= 2) {
    std::vector<double> neg_rate, f1;
    for (const auto& p : out.points) {
      neg_rate.push_back(-p.rate_hz);
      f1.push_back(p.mean_f1);
    }
    out.trend = spearman(neg_rate, f1);
  }
  return out;
}

// ---------------------------------------------------------------------------

TransferResult transfer_experiment(const dsp::EpochSet& train_a, const std::vector<dsp::EpochSet>& heldout_a,
                                   const std::vector<dsp::EpochSet>& sessions_b, const ClassifierConfig& cfg,
                                   std::uint64_t seed) {
  if (heldout_a.empty() || sessions_b.empty())
    throw Error(Errc::BadConfig, "transfer experiment needs at least one test session per class");
  auto fit = fit_classifier(train_a, cfg, derive_seed(seed, "fit"));
  TransferResult out;
  for (const auto& s : heldout_a) out.specific_f1.push_back(metrics(score_predictions(s, net::predict(fit.model, s))).f1);
  for (const auto& s : sessions_b) out.agnostic_f1.push_back(metrics(score_predictions(s, net::predict(fit.model, s))).f1);
  out.mean_specific = mean_of(out.specific_f1);
  out.mean_agnostic = mean_of(out.agnostic_f1);
  out.difference = out.mean_specific - out.mean_agnostic;
  return out;
}

TransferResult transfer_experiment(const TransferConfig& cfg) {
  if (cfg.test_sessions == 0) throw Error(Errc::BadConfig, "transfer experiment needs at least one test session");
  auto a = make_image_ids(cfg.class_a);
  auto b = make_image_ids(cfg.class_b);
  std::set<std::string> seen(a.targets.begin(), a.targets.end());
  seen.insert(a.nontargets.begin(), a.nontargets.end());
  for (const auto* list : {&b.targets, &b.nontargets})
    for (const auto& id : *list)
      if (seen.count(id)) throw Error(Errc::OverlappingSets, "class A and class B share image id " + id);

  auto train_a = simulate_epochs(cfg.class_a, cfg.sim, cfg.preprocess, derive_seed(cfg.seed, "a/train")).epochs;
  std::vector<dsp::EpochSet> held, other;
  for (std::size_t i = 0; i < cfg.test_sessions; ++i) {
    held.push_back(simulate_epochs(cfg.class_a, cfg.sim, cfg.preprocess,
                                   derive_seed(cfg.seed, "a/test" + std::to_string(i))).epochs);
    other.push_back(simulate_epochs(cfg.class_b, cfg.sim, cfg.preprocess,
                                    derive_seed(cfg.seed, "b/test" + std::to_string(i))).epochs);
  }
  return transfer_experiment(train_a, held, other, cfg.classifier, derive_seed(cfg.seed, "classifier"));
}

} // namespace annot::eval
