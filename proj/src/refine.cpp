#include "annot/error.hpp"
#include "annot/refine.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <limits>

namespace annot::refine {

using nlohmann::ordered_json;

double cluster_separation(const Eigen::MatrixXd& embedding, const std::vector<std::size_t>& assignments) {
  Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(2, embedding.cols());
  std::array<double, 2> count{0.0, 0.0};
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    centroid.row(static_cast<Eigen::Index>(assignments[i])) += embedding.row(static_cast<Eigen::Index>(i));
    count[assignments[i]] += 1.0;
  }
  if (count[0] == 0.0 || count[1] == 0.0) return 0.0;
  centroid.row(0) /= count[0];
  centroid.row(1) /= count[1];
  double within = 0.0;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    within += (embedding.row(static_cast<Eigen::Index>(i)) - centroid.row(static_cast<Eigen::Index>(assignments[i]))).squaredNorm();
  const double rms = std::sqrt(within / static_cast<double>(assignments.size()));
  const double gap = (centroid.row(0) - centroid.row(1)).norm();
  return rms > 0.0 ? gap / rms : std::numeric_limits<double>::infinity();
}

RefinementResult refine(const std::vector<std::string>& predicted_targets, const FeatureTable& features,
                        const RefineConfig& cfg) {
  std::vector<std::string> missing;
  for (const auto& id : predicted_targets)
    if (!features.contains(id)) missing.push_back(id);
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? "," : "") + missing[i];
    throw Error(Errc::MissingFeatures, std::to_string(missing.size()) + " ids without features: " + list);
  }

  RefinementResult res;
  const std::size_t n = predicted_targets.size();
  auto pass_through = [&] {
    res.kept = predicted_targets;
    res.removed.clear();
    return res;
  };
  if (n < minimum_points(cfg.tsne_perplexity)) {
    res.pass_through = true;
    return pass_through();
  }
  if (cfg.kmeans_k != 2) throw Error(Errc::BadConfig, "refinement clusters into exactly two groups");

  const auto dim = static_cast<Eigen::Index>(features.dimension);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = features.rows.at(predicted_targets[i]);
    for (Eigen::Index d = 0; d < dim; ++d) x(static_cast<Eigen::Index>(i), d) = row[static_cast<std::size_t>(d)];
  }

  const std::size_t k = std::min<std::size_t>({cfg.pca_components, n - 1, features.dimension});
  const auto pca = pca_reduce(x, k);
  res.rank_deficient = pca.rank_deficient;
  res.pca_components_used = static_cast<std::size_t>(pca.scores.cols());

  const auto tsne = tsne_embed(pca.scores, cfg);
  res.embedding = tsne.embedding;
  res.kl_divergence = tsne.kl_divergence;

  const auto km = kmeans(tsne.embedding, 2, cfg.kmeans_restarts, cfg.seed);
  res.cluster_assignments = km.assignments;

  std::array<std::size_t, 2> sizes{0, 0};
  for (auto a : km.assignments) ++sizes[a];
  if (sizes[0] == 0 || sizes[1] == 0) {
    res.no_cluster_structure = true;
    res.low_confidence = true;
    return pass_through();
  }

  const auto choice = select_target_cluster(cfg.density_in_embedding ? tsne.embedding : pca.scores, km.assignments);
  res.density_per_cluster = choice.density;
  res.target_cluster = choice.cluster;
  res.low_confidence = choice.low_confidence;
  res.separation = cluster_separation(tsne.embedding, km.assignments);
  if (res.separation < cfg.min_separation) {
    res.no_cluster_structure = true;
    return pass_through();
  }

  for (std::size_t i = 0; i < n; ++i) {
    (km.assignments[i] == choice.cluster ? res.kept : res.removed).push_back(predicted_targets[i]);
  }
  return res;
}

std::string refinement_report_json(const RefinementResult& r, const RefineConfig& cfg) {
  ordered_json j;
  j["version"] = 1;
  ordered_json c;
  c["pca_components"] = cfg.pca_components;
  c["tsne_perplexity"] = cfg.tsne_perplexity;
  c["tsne_out_dims"] = cfg.tsne_out_dims;
  c["tsne_iters"] = cfg.tsne_iters;
  c["tsne_learning_rate"] = cfg.tsne_learning_rate;
  c["kmeans_k"] = cfg.kmeans_k;
  c["kmeans_restarts"] = cfg.kmeans_restarts;
  c["min_separation"] = cfg.min_separation;
  c["density_space"] = cfg.density_in_embedding ? "embedding" : "pca";
  c["seed"] = cfg.seed;
  j["config"] = c;
  auto& dens = j["density_per_cluster"] = ordered_json::array();
  for (double d : r.density_per_cluster) dens.push_back(std::isinf(d) ? ordered_json("inf") : ordered_json(d));
  j["target_cluster"] = r.target_cluster;
  j["separation"] = std::isinf(r.separation) ? ordered_json("inf") : ordered_json(r.separation);
  j["kl_divergence"] = r.kl_divergence;
  j["pca_components_used"] = r.pca_components_used;
  j["flags"] = {{"pass_through", r.pass_through},
                {"low_confidence", r.low_confidence},
                {"rank_deficient", r.rank_deficient},
                {"no_cluster_structure", r.no_cluster_structure}};
  j["kept"] = r.kept;
  j["removed"] = r.removed;
  return j.dump(1) + "\n";
}

} // namespace annot::refine
