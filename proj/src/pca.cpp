#include "annot/error.hpp"
#include "annot/refine.hpp"

#include <Eigen/SVD>

namespace annot::refine {

PcaResult pca_reduce(const Eigen::MatrixXd& features, std::size_t n_components) {
  const Eigen::Index n = features.rows();
  const Eigen::Index dim = features.cols();
  if (n < 2) throw Error(Errc::RankDeficiency, "PCA needs at least 2 rows");
  if (n_components == 0 || static_cast<Eigen::Index>(n_components) > std::min(n - 1, dim))
    throw Error(Errc::BadConfig, "n_components must be in [1, min(n-1, D)]");

  PcaResult res;
  res.mean = features.colwise().mean();
  const Eigen::MatrixXd centred = features.rowwise() - res.mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  Eigen::Index informative = 0;
  while (informative < sv.size() && sv(informative) > 1e-9 * top && top > 0.0) ++informative;

  Eigen::Index k = static_cast<Eigen::Index>(n_components);
  if (informative < k) {
    res.rank_deficient = true;
    k = informative;
  }
  res.basis = svd.matrixV().leftCols(k);
  // Deterministic sign: the largest-magnitude entry of each axis is positive.
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    res.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (res.basis(arg, j) < 0.0) res.basis.col(j) *= -1.0;
  }
  res.scores = centred * res.basis;
  res.explained_variance = sv.head(k).array().square() / static_cast<double>(n - 1);
  return res;
}

} // namespace annot::refine
