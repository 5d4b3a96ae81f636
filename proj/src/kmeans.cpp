#include "annot/error.hpp"
#include "annot/refine.hpp"

#include <limits>
#include <random>

namespace annot::refine {

namespace {

struct Run {
  std::vector<std::size_t> assign;
  Eigen::MatrixXd centroids;
  double inertia{0.0};
  std::vector<double> trace;
  std::size_t iterations{0};
};

Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& x, std::size_t k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd c(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  c.row(0) = x.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - c.row(0)).squaredNorm();
  for (std::size_t j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r <= 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    c.row(static_cast<Eigen::Index>(j)) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (x.row(i) - c.row(static_cast<Eigen::Index>(j))).squaredNorm());
  }
  return c;
}

Run lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centroids, std::size_t max_iterations) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = centroids.rows();
  Run run;
  run.assign.assign(static_cast<std::size_t>(n), std::numeric_limits<std::size_t>::max());
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < k; ++j) {
        const double d = (x.row(i) - centroids.row(j)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::size_t>(j);
        }
      }
      const auto ii = static_cast<std::size_t>(i);
      if (run.assign[ii] != best) changed = true;
      run.assign[ii] = best;
      dist[ii] = best_d;
      inertia += best_d;
    }
    run.trace.push_back(inertia);
    run.inertia = inertia;
    run.iterations = it + 1;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = run.assign[static_cast<std::size_t>(i)];
      sums.row(static_cast<Eigen::Index>(c)) += x.row(i);
      ++counts[c];
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: re-seed at the point farthest from its centroid.
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      centroids.row(j) = x.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  run.centroids = std::move(centroids);
  return run;
}

} // namespace

KmeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t restarts, std::uint64_t seed,
                    std::size_t max_iterations) {
  if (k == 0) throw Error(Errc::BadConfig, "k must be positive");
  if (static_cast<std::size_t>(points.rows()) < k)
    throw Error(Errc::FewerPointsThanClusters, std::to_string(points.rows()) + " points for k=" + std::to_string(k));
  std::mt19937_64 rng(seed);
  Run best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    auto run = lloyd(points, plus_plus_init(points, k, rng), max_iterations);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return KmeansResult{std::move(best.assign), std::move(best.centroids), best.inertia, std::move(best.trace),
                      best.iterations};
}

ClusterChoice select_target_cluster(const Eigen::MatrixXd& embedding, const std::vector<std::size_t>& assignments) {
  if (static_cast<std::size_t>(embedding.rows()) != assignments.size())
    throw Error(Errc::ShapeMismatch, "assignment count differs from embedding rows");
  ClusterChoice out;
  out.sizes.assign(2, 0);
  Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(2, embedding.cols());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] > 1) throw Error(Errc::ShapeMismatch, "exactly two clusters expected");
    centroid.row(static_cast<Eigen::Index>(assignments[i])) += embedding.row(static_cast<Eigen::Index>(i));
    ++out.sizes[assignments[i]];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    if (out.sizes[c] == 0) throw Error(Errc::EmptyCluster, "cluster " + std::to_string(c) + " has no members");
    centroid.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(out.sizes[c]);
  }
  std::vector<double> spread(2, 0.0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto c = assignments[i];
    spread[c] += (embedding.row(static_cast<Eigen::Index>(i)) - centroid.row(static_cast<Eigen::Index>(c))).norm();
  }
  out.density.resize(2);
  for (std::size_t c = 0; c < 2; ++c) {
    const double mean = spread[c] / static_cast<double>(out.sizes[c]);
    out.density[c] = (out.sizes[c] == 1 || mean == 0.0) ? std::numeric_limits<double>::infinity() : 1.0 / mean;
  }

  const double d0 = out.density[0], d1 = out.density[1];
  bool tie = false;
  if (std::isinf(d0) && std::isinf(d1)) {
    tie = true;
  } else if (!std::isinf(d0) && !std::isinf(d1)) {
    tie = std::abs(d0 - d1) / std::max(d0, d1) < 0.01;
  }
  if (tie) {
    out.cluster = out.sizes[1] > out.sizes[0] ? 1 : 0;
    out.low_confidence = true;
  } else {
    out.cluster = d1 > d0 ? 1 : 0;
  }
  if (out.sizes[0] == 1 || out.sizes[1] == 1) out.low_confidence = true;
  return out;
}

} // namespace annot::refine
