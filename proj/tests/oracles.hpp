#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls the code under test except to obtain
// the quantity being checked.

#include "annot/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

// Textbook Adam, written out step by step.
struct Adam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  long t{0};

  Adam(std::size_t n, double lr_, double b1_, double b2_, double eps_)
      : lr(lr_), b1(b1_), b2(b2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      theta[i] = theta[i] - lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

struct GradCheck {
  double max_rel_error{0.0};
  std::size_t checked{0};
};

// Central differences against the analytic gradient. With dropout on, every
// evaluation replays the same mask stream from a copied generator.
inline GradCheck gradient_check(const annot::net::P300Model& model, const std::vector<Eigen::MatrixXd>& batch,
                                const std::vector<int>& labels, const std::vector<double>& weights, bool train_mode,
                                std::uint64_t mask_seed, std::size_t per_tensor, double h = 1e-5) {
  using namespace annot::net;
  const std::mt19937_64 rng0(mask_seed);
  auto eval = [&](const P300Model& m, bool grads) {
    auto rng = rng0;
    auto lg = loss_and_gradients(m, batch, labels, weights, train_mode, &rng);
    if (!grads) lg.grads.clear();
    return lg;
  };
  const auto base = eval(model, true);
  GradCheck out;
  std::mt19937_64 pick(mask_seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    const std::size_t n = model.params[p].data.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), pick);
    idx.resize(std::min(n, per_tensor));
    for (auto i : idx) {
      P300Model plus = model, minus = model;
      plus.params[p].data[i] += h;
      minus.params[p].data[i] -= h;
      const double num = (eval(plus, false).loss - eval(minus, false).loss) / (2 * h);
      const double ana = base.grads[p][i];
      const double denom = std::max(1e-7, std::abs(num) + std::abs(ana));
      out.max_rel_error = std::max(out.max_rel_error, std::abs(num - ana) / denom);
      ++out.checked;
    }
  }
  return out;
}

// Random standardized-scale windows with a planted bump in half of them.
inline void toy_batch(const annot::net::ModelConfig& cfg, std::size_t n, std::uint64_t seed,
                      std::vector<Eigen::MatrixXd>& batch, std::vector<int>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  batch.clear();
  labels.clear();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(cfg.n_channels), static_cast<Eigen::Index>(cfg.n_samples));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = g(rng);
    const int y = static_cast<int>(i % 2);
    if (y == 1) {
      const double mid = static_cast<double>(cfg.n_samples) * 0.4, width = static_cast<double>(cfg.n_samples) * 0.08;
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double d = (static_cast<double>(c) - mid) / width;
        w.row(0)(c) += 3.0 * std::exp(-0.5 * d * d);
      }
    }
    batch.push_back(std::move(w));
    labels.push_back(y);
  }
}

} // namespace oracle
