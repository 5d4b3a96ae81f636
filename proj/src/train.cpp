#include "annot/net.hpp"

#include "annot/error.hpp"
#include "annot/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace annot::net {

AdamState make_adam_state(const P300Model& model) {
  AdamState s;
  for (const auto& p : model.params) {
    s.m.emplace_back(p.data.size(), 0.0);
    s.v.emplace_back(p.data.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const TrainConfig& cfg, long t) {
  if (t < 1) throw Error(Errc::InvalidConfig, "Adam step counter starts at 1");
  if (params.size() != grads.size() || m.size() != grads.size() || v.size() != grads.size())
    throw Error(Errc::ShapeMismatch, "Adam buffers differ in size");
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, "gradient contains NaN or Inf");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adam_step(P300Model& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg, long t) {
  if (grads.size() != model.params.size()) throw Error(Errc::ShapeMismatch, "gradient count mismatch");
  for (const auto& g : grads)
    for (double x : g)
      if (!std::isfinite(x)) throw Error(Errc::NonFiniteGradient, "gradient contains NaN or Inf");
  for (std::size_t p = 0; p < grads.size(); ++p)
    adam_step(model.params[p].data, grads[p], state.m[p], state.v[p], cfg, t);
}

std::array<double, 2> class_weights_for(std::span<const int> labels, bool weighting) {
  if (!weighting) return {1.0, 1.0};
  std::array<double, 2> counts{0.0, 0.0};
  for (int y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
  const double n = counts[0] + counts[1];
  std::array<double, 2> w{1.0, 1.0};
  for (std::size_t c = 0; c < 2; ++c) w[c] = counts[c] > 0.0 ? n / (2.0 * counts[c]) : 0.0;
  return w;
}

namespace {

struct Prepared {
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
};

Prepared prepare(const ModelConfig& cfg, const dsp::EpochSet& set) {
  Prepared p;
  p.inputs.reserve(set.size());
  p.labels.reserve(set.size());
  for (const auto& e : set.epochs) {
    p.inputs.push_back(standardize(classifier_window(e, cfg)));
    p.labels.push_back(e.label.value_or(false) ? 1 : 0);
  }
  return p;
}

double f1_of(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  eval::ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool t = labels[i] == 1;
    const bool p = probs(static_cast<Eigen::Index>(i), 1) > probs(static_cast<Eigen::Index>(i), 0);
    if (t) {
      p ? ++c.tp : ++c.fn;
    } else {
      p ? ++c.fp : ++c.tn;
    }
  }
  return eval::metrics(c).f1;
}

} // namespace

TrainResult train(const P300Model& initial, const dsp::EpochSet& train_set, const dsp::EpochSet& validation_set,
                  const TrainConfig& cfg) {
  if (train_set.size() == 0 || validation_set.size() == 0)
    throw Error(Errc::InvalidConfig, "training and validation sets must be nonempty");
  if (!(cfg.lr > 0.0) || !(cfg.beta1 > 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 > 0.0 && cfg.beta2 < 1.0) ||
      cfg.batch_size == 0)
    throw Error(Errc::InvalidConfig, "lr > 0, 0 < beta1, beta2 < 1 and batch_size > 0 required");
  const auto& mc = initial.config;
  const auto tr = prepare(mc, train_set);
  const auto va = prepare(mc, validation_set);
  const auto n_pos = static_cast<std::size_t>(std::count(tr.labels.begin(), tr.labels.end(), 1));
  if (n_pos == 0 || n_pos == tr.labels.size())
    throw Error(Errc::SingleClassTrainingSet, "training set holds a single class");

  const auto weights = class_weights_for(tr.labels, cfg.class_weighting);
  TrainResult result{initial, {}};
  P300Model& model = result.model;
  P300Model best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  AdamState adam = make_adam_state(model);
  std::mt19937_64 rng(cfg.seed);
  long step = 0;

  std::vector<std::size_t> order(tr.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> batch_x;
  std::vector<int> batch_y;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch_x.push_back(tr.inputs[order[i]]);
        batch_y.push_back(tr.labels[order[i]]);
      }
      double wsum = 0.0;
      for (int y : batch_y) wsum += weights[static_cast<std::size_t>(y)];
      if (!(wsum > 0.0)) continue;
      auto lg = loss_and_gradients_standardized(model, batch_x, batch_y, weights, true, &rng);
      adam_step(model, lg.grads, adam, cfg, ++step);
      loss_sum += lg.loss;
      ++n_batches;
    }

    const auto probs = forward_standardized(model, va.inputs, false, nullptr);
    double val_loss = 0.0, val_w = 0.0;
    for (std::size_t i = 0; i < va.labels.size(); ++i) {
      const auto y = static_cast<std::size_t>(va.labels[i]);
      val_loss += -weights[y] * std::log(std::max(probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y)), 1e-300));
      val_w += weights[y];
    }
    val_loss = val_w > 0.0 ? val_loss / val_w : 0.0;

    result.history.epochs.push_back(
        EpochStats{epoch, n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0, val_loss, f1_of(probs, va.labels)});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.history.early_stopped = true;
      break;
    }
  }
  best.rng_state = model.rng_state;
  result.model = std::move(best);
  return result;
}

std::vector<Prediction> predict(const P300Model& model, const dsp::EpochSet& set, std::optional<double> threshold) {
  std::vector<Prediction> out;
  if (set.size() == 0) return out;
  std::vector<std::vector<double>> inputs;
  inputs.reserve(set.size());
  for (const auto& e : set.epochs) inputs.push_back(standardize(classifier_window(e, model.config)));
  const auto probs = forward_standardized(model, inputs, false, nullptr);
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double score = probs(row, 1);
    const bool label = threshold ? score >= *threshold : probs(row, 1) > probs(row, 0);
    out.push_back(Prediction{set.epochs[i].stimulus_index, score, label});
  }
  return out;
}

} // namespace annot::net
