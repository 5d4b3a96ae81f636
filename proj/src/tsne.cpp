#include "annot/error.hpp"
#include "annot/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace annot::refine {

std::size_t minimum_points(double perplexity) {
  return static_cast<std::size_t>(std::ceil(3.0 * perplexity)) + 1;
}

namespace {

// Row-conditional affinities with per-row precision found by bisection so
// that the row entropy equals log(perplexity).
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sq_dist, double perplexity, Eigen::VectorXd& achieved) {
  const Eigen::Index n = sq_dist.rows();
  const double target = std::log(perplexity);
  constexpr double kTol = 1e-7;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  achieved.resize(n);
  std::vector<double> row(static_cast<std::size_t>(n));

  for (Eigen::Index i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, sq_dist(i, j));

    double beta = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (j == i) {
          row[jj] = 0.0;
          continue;
        }
        const double shifted = sq_dist(i, j) - dmin;
        row[jj] = std::exp(-beta * shifted);
        sum += row[jj];
        weighted += shifted * row[jj];
      }
      entropy = std::log(sum) + beta * weighted / sum;
      for (auto& v : row) v /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < kTol) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : (beta + lo) / 2.0;
      }
    }
    achieved(i) = std::exp(entropy);
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = row[static_cast<std::size_t>(j)];
  }
  return p;
}

// Squared distances scaled by their maximum, which makes the affinities
// invariant to a global rescaling of the input.
Eigen::MatrixXd scaled_sq_distances(const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sq(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  sq /= std::max(sq.maxCoeff(), 1e-12);
  return sq;
}

} // namespace

Eigen::MatrixXd tsne_conditional_affinities(const Eigen::MatrixXd& points, double perplexity) {
  Eigen::VectorXd achieved;
  return conditional_affinities(scaled_sq_distances(points), perplexity, achieved);
}

TsneResult tsne_embed(const Eigen::MatrixXd& points, const RefineConfig& cfg) {
  const Eigen::Index n = points.rows();
  if (static_cast<std::size_t>(n) < minimum_points(cfg.tsne_perplexity) || !(cfg.tsne_perplexity > 0.0)) {
    throw Error(Errc::PerplexityInfeasible, "perplexity " + std::to_string(cfg.tsne_perplexity) + " needs at least " +
                                                std::to_string(minimum_points(cfg.tsne_perplexity)) + " points, got " +
                                                std::to_string(n));
  }
  if (cfg.tsne_out_dims < 2 || cfg.tsne_out_dims > 5) throw Error(Errc::BadConfig, "tsne_out_dims must be in 2..5");
  const auto dims = static_cast<Eigen::Index>(cfg.tsne_out_dims);

  const Eigen::MatrixXd sq = scaled_sq_distances(points);

  TsneResult res;
  Eigen::MatrixXd p = conditional_affinities(sq, cfg.tsne_perplexity, res.row_perplexity);
  p = (p + p.transpose()).eval();
  p /= p.sum();
  p = p.cwiseMax(1e-12);

  constexpr std::size_t kStopLying = 250;
  constexpr std::size_t kMomentumSwitch = 250;
  constexpr double kExaggeration = 12.0;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1e-4);
  Eigen::MatrixXd y(n, dims);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < dims; ++d) y(i, d) = gauss(rng);

  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, dims);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, dims);
  Eigen::MatrixXd num(n, n);
  Eigen::MatrixXd grad(n, dims);

  for (std::size_t iter = 0; iter < cfg.tsne_iters; ++iter) {
    const double exaggeration = iter < kStopLying ? kExaggeration : 1.0;
    const double momentum = iter < kMomentumSwitch ? 0.5 : 0.8;

    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = q;
        num(j, i) = q;
        z += 2.0 * q;
      }
    }
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double mult = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
        grad.row(i) += 4.0 * mult * (y.row(i) - y.row(j));
      }
    }
    if (!grad.allFinite())
      throw Error(Errc::NonFiniteGradientDuringEmbedding, "t-SNE gradient not finite at iteration " + std::to_string(iter));

    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index d = 0; d < dims; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (update(i, d) > 0.0);
        gains(i, d) = same_sign ? gains(i, d) * 0.8 : gains(i, d) + 0.2;
        gains(i, d) = std::max(gains(i, d), 0.01);
        update(i, d) = momentum * update(i, d) - cfg.tsne_learning_rate * gains(i, d) * grad(i, d);
      }
    }
    y += update;
    y.rowwise() -= y.colwise().mean();
  }

  double z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) z += 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = std::max(1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm()) / z, 1e-300);
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  }
  res.embedding = std::move(y);
  res.kl_divergence = kl;
  return res;
}

} // namespace annot::refine
