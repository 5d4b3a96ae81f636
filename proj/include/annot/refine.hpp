#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace annot::refine {

// image_id -> feature vector; all rows share one dimension.
struct FeatureTable {
  std::size_t dimension{0};
  std::map<std::string, std::vector<double>> rows;

  void add(const std::string& image_id, std::vector<double> values);
  bool contains(const std::string& image_id) const { return rows.count(image_id) != 0; }
};

// features.csv: "image_id,f0,...,f{D-1}".
std::string features_to_csv(const FeatureTable& table);
FeatureTable features_from_csv(const std::string& text);

struct SyntheticFeatureConfig {
  std::size_t dimension{256};
  double centre_spread{1.0};     // std of category centres around the origin, per dimension
  double target_spread{0.15};    // within-category std for the target category
  double nontarget_spread{0.6};  // within-category std for every other category
  double target_offset{2.0};     // target centre shift along the diagonal, in centre_spread units
  std::uint64_t seed{0};
};

// Gaussian blob per category. The category of an id is the text before its
// last '_' (e.g. "pizza_0042" -> "pizza").
FeatureTable synthetic_features(const std::vector<std::string>& image_ids, const std::string& target_category,
                                const SyntheticFeatureConfig& cfg);
std::string category_of(const std::string& image_id);

struct RefineConfig {
  std::size_t pca_components{50};
  double tsne_perplexity{20.0};
  std::size_t tsne_out_dims{3};
  std::size_t tsne_iters{1000};
  double tsne_learning_rate{200.0};
  std::size_t kmeans_k{2};
  std::size_t kmeans_restarts{10};
  // Centroid distance over pooled RMS member-to-centroid distance. Below it
  // the two clusters are treated as one group and nothing is removed.
  double min_separation{2.0};
  // Cluster density is measured on the PCA scores by default: t-SNE evens out
  // local density, so in the embedding the smaller cluster tends to look
  // tighter regardless of how compact it is in feature space.
  bool density_in_embedding{false};
  std::uint64_t seed{0};
};

// ---------------------------------------------------------------------------

struct PcaResult {
  Eigen::MatrixXd scores;  // n x k
  Eigen::MatrixXd basis;   // D x k, orthonormal columns
  Eigen::VectorXd explained_variance;
  Eigen::RowVectorXd mean;
  // Fewer informative directions than requested; scores/basis truncated.
  bool rank_deficient{false};
};

PcaResult pca_reduce(const Eigen::MatrixXd& features, std::size_t n_components);

struct TsneResult {
  Eigen::MatrixXd embedding;          // n x out_dims
  Eigen::VectorXd row_perplexity;     // achieved, per point
  double kl_divergence{0.0};
};

TsneResult tsne_embed(const Eigen::MatrixXd& points, const RefineConfig& cfg);

// Row-conditional input affinities p(j|i) as calibrated by tsne_embed (each
// row sums to 1 with entropy log(perplexity)).
Eigen::MatrixXd tsne_conditional_affinities(const Eigen::MatrixXd& points, double perplexity);

struct KmeansResult {
  std::vector<std::size_t> assignments;
  Eigen::MatrixXd centroids;  // k x d
  double inertia{0.0};
  // Inertia after each Lloyd iteration of the winning run.
  std::vector<double> inertia_trace;
  std::size_t iterations{0};
};

KmeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::size_t restarts, std::uint64_t seed,
                    std::size_t max_iterations = 300);

struct ClusterChoice {
  std::size_t cluster{0};
  std::vector<double> density;  // per cluster; +inf for singletons
  std::vector<std::size_t> sizes;
  bool low_confidence{false};
};

ClusterChoice select_target_cluster(const Eigen::MatrixXd& embedding, const std::vector<std::size_t>& assignments);

struct RefinementResult {
  std::vector<std::string> kept;
  std::vector<std::string> removed;
  Eigen::MatrixXd embedding;
  std::vector<std::size_t> cluster_assignments;
  std::vector<double> density_per_cluster;
  std::size_t target_cluster{0};
  double kl_divergence{0.0};
  std::size_t pca_components_used{0};
  bool pass_through{false};
  bool low_confidence{false};
  bool rank_deficient{false};
  bool no_cluster_structure{false};
  double separation{0.0};
};

// Separation statistic used by refine(); see RefineConfig::min_separation.
double cluster_separation(const Eigen::MatrixXd& embedding, const std::vector<std::size_t>& assignments);

std::size_t minimum_points(double perplexity);

RefinementResult refine(const std::vector<std::string>& predicted_targets, const FeatureTable& features,
                        const RefineConfig& cfg);

std::string refinement_report_json(const RefinementResult& result, const RefineConfig& cfg);

} // namespace annot::refine
