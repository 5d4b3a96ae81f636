#include "annot/dsp.hpp"

#include "annot/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace annot::dsp {

namespace {

// (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelate(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

} // namespace

IcaResult fastica(const Eigen::MatrixXd& data, IcaConfig cfg) {
  const Eigen::Index n_ch = data.rows();
  const Eigen::Index n_all = data.cols();
  const auto n_comp = static_cast<Eigen::Index>(cfg.n_components == 0 ? static_cast<std::size_t>(n_ch) : cfg.n_components);
  if (n_comp > n_ch || n_comp < 1)
    throw Error(Errc::BadConfig, "n_components must be in [1, n_channels]");
  if (n_all < 2 * n_ch) throw Error(Errc::DegenerateLength, "too few samples for ICA");

  IcaResult res;
  res.channel_means = data.rowwise().mean();
  const Eigen::MatrixXd centred = data.colwise() - res.channel_means;

  const auto step = static_cast<Eigen::Index>(std::max<std::size_t>(1, cfg.decimate));
  const Eigen::Index n_fit = (n_all + step - 1) / step;
  Eigen::MatrixXd fit(n_ch, n_fit);
  for (Eigen::Index i = 0; i < n_fit; ++i) fit.col(i) = centred.col(i * step);

  // Whitening on the top n_comp principal directions.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit * fit.transpose() / static_cast<double>(n_fit));
  const Eigen::VectorXd evals = es.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
  const double top = evals(0);
  if (!(top > 0.0)) throw Error(Errc::RankDeficiency, "data has zero variance");
  for (Eigen::Index k = 0; k < n_comp; ++k) {
    if (evals(k) <= 1e-10 * top) {
      throw Error(Errc::RankDeficiency, "only " + std::to_string(k) + " of " + std::to_string(n_comp) +
                                            " requested components carry variance");
    }
  }
  const Eigen::VectorXd d = evals.head(n_comp);
  const Eigen::MatrixXd e = evecs.leftCols(n_comp);
  const Eigen::MatrixXd whitening = d.cwiseSqrt().cwiseInverse().asDiagonal() * e.transpose();
  const Eigen::MatrixXd z = whitening * fit;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd w(n_comp, n_comp);
  for (Eigen::Index i = 0; i < n_comp; ++i)
    for (Eigen::Index j = 0; j < n_comp; ++j) w(i, j) = gauss(rng);
  w = symmetric_decorrelate(w);

  const double inv_n = 1.0 / static_cast<double>(n_fit);
  double lim = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < cfg.max_iterations) {
    ++it;
    const Eigen::MatrixXd g = (w * z).array().tanh().matrix();
    const Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().mean();
    Eigen::MatrixXd w_new = g * z.transpose() * inv_n - g_prime_mean.asDiagonal() * w;
    w_new = symmetric_decorrelate(w_new);
    lim = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = std::move(w_new);
    if (lim < cfg.tolerance) break;
  }
  res.iterations = it;
  res.residual = lim;
  if (!(lim < cfg.tolerance)) {
    throw Error(Errc::ConvergenceFailure, "no convergence after " + std::to_string(it) +
                                              " iterations, residual " + std::to_string(lim));
  }

  res.unmixing = w * whitening;
  res.mixing = e * d.cwiseSqrt().asDiagonal() * w.transpose();
  // Sign convention: the largest loading of every component is positive.
  for (Eigen::Index k = 0; k < n_comp; ++k) {
    Eigen::Index arg = 0;
    res.mixing.col(k).cwiseAbs().maxCoeff(&arg);
    if (res.mixing(arg, k) < 0.0) {
      res.mixing.col(k) *= -1.0;
      res.unmixing.row(k) *= -1.0;
    }
  }
  res.sources = res.unmixing * centred;
  return res;
}

IcaResult fastica(const EegRecording& rec, std::size_t n_components, std::uint64_t seed) {
  if (rec.n_samples() < static_cast<std::size_t>(10.0 * rec.rate_hz_sampling))
    throw Error(Errc::DegenerateLength, "ICA needs at least 10 s of data");
  IcaConfig cfg;
  cfg.n_components = n_components;
  cfg.seed = seed;
  return fastica(rec.samples, cfg);
}

double excess_kurtosis(std::span<const double> x) {
  if (x.size() < 4) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= static_cast<double>(x.size());
  m4 /= static_cast<double>(x.size());
  if (!(m2 > 1e-300)) return 0.0;
  return m4 / (m2 * m2) - 3.0;
}

std::set<std::size_t> reject_artifact_components(const IcaResult& ica, const ChannelLayout& layout,
                                                 const ArtifactRule& rule) {
  std::vector<Eigen::Index> frontal;
  for (const auto& name : rule.frontal) {
    const int idx = layout.find(name);
    if (idx >= 0 && idx < ica.mixing.rows()) frontal.push_back(idx);
  }
  std::set<std::size_t> out;
  std::vector<double> row(static_cast<std::size_t>(ica.sources.cols()));
  for (Eigen::Index k = 0; k < ica.sources.rows(); ++k) {
    for (Eigen::Index s = 0; s < ica.sources.cols(); ++s) row[static_cast<std::size_t>(s)] = ica.sources(k, s);
    const double kurt = excess_kurtosis(row);
    const double total = ica.mixing.col(k).squaredNorm();
    if (!(total > 0.0)) continue;
    double front = 0.0;
    for (auto c : frontal) front += ica.mixing(c, k) * ica.mixing(c, k);
    if (kurt > rule.kurtosis_threshold && front / total > rule.frontal_fraction) out.insert(static_cast<std::size_t>(k));
  }
  return out;
}

EegRecording remove_components(const EegRecording& rec, const IcaResult& ica, const std::set<std::size_t>& drop) {
  EegRecording out = rec;
  for (auto k : drop) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.samples.noalias() -= ica.mixing.col(kk) * ica.sources.row(kk);
  }
  return out;
}

} // namespace annot::dsp
