#include "annot/net.hpp"

#include "annot/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace annot::net {

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidConfig, why); };
  if (c.n_channels == 0 || c.n_samples == 0 || c.temporal_filters == 0 || c.depth_multiplier == 0)
    fail("dimensions must be positive");
  if (c.temporal_kernel % 2 == 0) fail("temporal_kernel must be odd");
  if (c.separable_kernel % 2 == 0) fail("separable_kernel must be odd");
  if (c.pool1 == 0 || c.n_samples % c.pool1 != 0) fail("pool1 must divide n_samples");
  if (c.pool2 == 0 || c.t1() % c.pool2 != 0) fail("pool2 must divide n_samples / pool1");
  if (c.t2() == 0) fail("pooling leaves no samples");
  if (!(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) fail("dropout_p must be in [0, 1)");
  if (!(c.elu_alpha > 0.0)) fail("elu_alpha must be positive");
  if (c.n_classes < 2) fail("n_classes must be >= 2");
}

std::size_t P300Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.data.size();
  return n;
}

P300Model init_model(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  const std::size_t c = config.n_channels, f1 = config.temporal_filters, m = config.spatial_maps();
  const std::size_t k1 = config.temporal_kernel, k2 = config.separable_kernel;
  const std::size_t nc = config.n_classes, dense_in = config.dense_inputs();

  P300Model model;
  model.config = config;
  model.rng_state = seed;
  std::mt19937_64 rng(seed);
  auto make = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan_in) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    Tensor t{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
    if (fan_in > 0) {
      const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : t.data) v = u(rng);
    }
    model.params.push_back(std::move(t));
  };
  make("temporal.weight", {f1, k1}, k1);
  make("spatial.weight", {m, c}, c);
  make("spatial.bias", {m}, 0);
  make("separable.depthwise", {m, k2}, k2);
  make("separable.pointwise", {m, m}, m);
  make("separable.bias", {m}, 0);
  make("dense.weight", {nc, dense_in}, dense_in);
  make("dense.bias", {nc}, 0);
  return model;
}

Eigen::MatrixXd classifier_window(const dsp::Epoch& epoch, const ModelConfig& config) {
  if (static_cast<std::size_t>(epoch.samples.rows()) != config.n_channels ||
      epoch.onset_offset + config.n_samples > static_cast<std::size_t>(epoch.samples.cols())) {
    throw Error(Errc::ShapeMismatch, "epoch does not hold " + std::to_string(config.n_channels) + " x " +
                                         std::to_string(config.n_samples) + " post-stimulus samples");
  }
  return epoch.samples.middleCols(static_cast<Eigen::Index>(epoch.onset_offset),
                                  static_cast<Eigen::Index>(config.n_samples));
}

std::vector<double> standardize(const Eigen::MatrixXd& window) {
  const auto rows = static_cast<std::size_t>(window.rows());
  const auto cols = static_cast<std::size_t>(window.cols());
  std::vector<double> out(rows * cols);
  for (std::size_t c = 0; c < rows; ++c) {
    const auto row = window.row(static_cast<Eigen::Index>(c));
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t t = 0; t < cols; ++t) out[c * cols + t] = (row(static_cast<Eigen::Index>(t)) - mean) * inv;
  }
  return out;
}

namespace {

struct Workspace {
  std::vector<double> u, a, e1, p1, d1, mask1, b, q, e2, p2, z, mask2, logits, prob;
  // backward
  std::vector<double> dz, dp2, dq, db, dd1, da, du;

  explicit Workspace(const ModelConfig& c) {
    const std::size_t m = c.spatial_maps(), t = c.n_samples, t1 = c.t1(), t2 = c.t2();
    u.resize(m * t);
    a.resize(m * t);
    e1.resize(m * t);
    p1.resize(m * t1);
    d1.resize(m * t1);
    mask1.assign(m * t1, 1.0);
    b.resize(m * t1);
    q.resize(m * t1);
    e2.resize(m * t1);
    p2.resize(m * t2);
    z.resize(m * t2);
    mask2.assign(m * t2, 1.0);
    logits.resize(c.n_classes);
    prob.resize(c.n_classes);
    dz.resize(m * t2);
    dq.resize(m * t1);
    db.resize(m * t1);
    dd1.resize(m * t1);
    da.resize(m * t);
    du.resize(m * t);
  }
};

inline double elu(double x, double alpha) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); }
// Derivative expressed through the activation output.
inline double elu_grad(double x, double y, double alpha) { return x > 0.0 ? 1.0 : y + alpha; }

void fill_masks(Workspace& ws, double p, std::mt19937_64& rng) {
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : ws.mask1) v = u(rng) < keep ? 1.0 / keep : 0.0;
  for (auto& v : ws.mask2) v = u(rng) < keep ? 1.0 / keep : 0.0;
}

void forward_one(const P300Model& model, const double* x, Workspace& ws) {
  const auto& cfg = model.config;
  const std::size_t C = cfg.n_channels, T = cfg.n_samples, D = cfg.depth_multiplier, M = cfg.spatial_maps();
  const std::size_t K1 = cfg.temporal_kernel, h1 = K1 / 2, K2 = cfg.separable_kernel, h2 = K2 / 2;
  const std::size_t P1 = cfg.pool1, T1 = cfg.t1(), P2 = cfg.pool2, T2 = cfg.t2();
  const double alpha = cfg.elu_alpha;
  const auto& H = model.params[kTemporal].data;
  const auto& S = model.params[kSpatial].data;
  const auto& b1 = model.params[kSpatialBias].data;
  const auto& G = model.params[kSepDepth].data;
  const auto& R = model.params[kSepPoint].data;
  const auto& b2 = model.params[kSepBias].data;
  const auto& W = model.params[kDense].data;
  const auto& bd = model.params[kDenseBias].data;

  // Spatial mixing first: temporal and depthwise-spatial convolutions are both
  // linear with zero padding in time only, so their order commutes.
  std::fill(ws.u.begin(), ws.u.end(), 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    double* um = &ws.u[m * T];
    for (std::size_t c = 0; c < C; ++c) {
      const double s = S[m * C + c];
      const double* xc = x + c * T;
      for (std::size_t t = 0; t < T; ++t) um[t] += s * xc[t];
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    const double* h = &H[(m / D) * K1];
    const double* um = &ws.u[m * T];
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t k_lo = t < h1 ? h1 - t : 0;
      const std::size_t k_hi = std::min(K1, T + h1 - t);
      double acc = b1[m];
      for (std::size_t k = k_lo; k < k_hi; ++k) acc += h[k] * um[t + k - h1];
      ws.a[m * T + t] = acc;
      ws.e1[m * T + t] = elu(acc, alpha);
    }
    for (std::size_t j = 0; j < T1; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < P1; ++q) s += ws.e1[m * T + j * P1 + q];
      ws.p1[m * T1 + j] = s / static_cast<double>(P1);
      ws.d1[m * T1 + j] = ws.p1[m * T1 + j] * ws.mask1[m * T1 + j];
    }
    const double* g = &G[m * K2];
    for (std::size_t t = 0; t < T1; ++t) {
      const std::size_t k_lo = t < h2 ? h2 - t : 0;
      const std::size_t k_hi = std::min(K2, T1 + h2 - t);
      double acc = 0.0;
      for (std::size_t k = k_lo; k < k_hi; ++k) acc += g[k] * ws.d1[m * T1 + t + k - h2];
      ws.b[m * T1 + t] = acc;
    }
  }
  for (std::size_t o = 0; o < M; ++o) {
    double* qo = &ws.q[o * T1];
    std::fill(qo, qo + T1, b2[o]);
    for (std::size_t m = 0; m < M; ++m) {
      const double r = R[o * M + m];
      const double* bm = &ws.b[m * T1];
      for (std::size_t t = 0; t < T1; ++t) qo[t] += r * bm[t];
    }
    for (std::size_t t = 0; t < T1; ++t) ws.e2[o * T1 + t] = elu(qo[t], alpha);
    for (std::size_t j = 0; j < T2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < P2; ++k) s += ws.e2[o * T1 + j * P2 + k];
      ws.p2[o * T2 + j] = s / static_cast<double>(P2);
      ws.z[o * T2 + j] = ws.p2[o * T2 + j] * ws.mask2[o * T2 + j];
    }
  }
  const std::size_t NC = cfg.n_classes, NZ = cfg.dense_inputs();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < NC; ++k) {
    double acc = bd[k];
    for (std::size_t i = 0; i < NZ; ++i) acc += W[k * NZ + i] * ws.z[i];
    ws.logits[k] = acc;
    mx = std::max(mx, acc);
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < NC; ++k) {
    ws.prob[k] = std::exp(ws.logits[k] - mx);
    denom += ws.prob[k];
  }
  for (auto& p : ws.prob) p /= denom;
}

// Accumulates dLoss/dParams given dLoss/dLogits (stored in dlogits).
void backward_one(const P300Model& model, const double* x, Workspace& ws, std::span<const double> dlogits,
                  Gradients& grads) {
  const auto& cfg = model.config;
  const std::size_t C = cfg.n_channels, T = cfg.n_samples, D = cfg.depth_multiplier, M = cfg.spatial_maps();
  const std::size_t K1 = cfg.temporal_kernel, h1 = K1 / 2, K2 = cfg.separable_kernel, h2 = K2 / 2;
  const std::size_t P1 = cfg.pool1, T1 = cfg.t1(), P2 = cfg.pool2, T2 = cfg.t2();
  const double alpha = cfg.elu_alpha;
  const auto& H = model.params[kTemporal].data;
  const auto& S = model.params[kSpatial].data;
  const auto& G = model.params[kSepDepth].data;
  const auto& R = model.params[kSepPoint].data;
  const auto& W = model.params[kDense].data;
  auto& gH = grads[kTemporal];
  auto& gS = grads[kSpatial];
  auto& gb1 = grads[kSpatialBias];
  auto& gG = grads[kSepDepth];
  auto& gR = grads[kSepPoint];
  auto& gb2 = grads[kSepBias];
  auto& gW = grads[kDense];
  auto& gbd = grads[kDenseBias];

  const std::size_t NC = cfg.n_classes, NZ = cfg.dense_inputs();
  std::fill(ws.dz.begin(), ws.dz.end(), 0.0);
  for (std::size_t k = 0; k < NC; ++k) {
    const double dl = dlogits[k];
    gbd[k] += dl;
    for (std::size_t i = 0; i < NZ; ++i) {
      gW[k * NZ + i] += dl * ws.z[i];
      ws.dz[i] += W[k * NZ + i] * dl;
    }
  }
  // pool2 + dropout2 + ELU -> dQ
  for (std::size_t o = 0; o < M; ++o) {
    for (std::size_t t = 0; t < T1; ++t) {
      const std::size_t j = t / P2;
      const double de2 = ws.dz[o * T2 + j] * ws.mask2[o * T2 + j] / static_cast<double>(P2);
      ws.dq[o * T1 + t] = de2 * elu_grad(ws.q[o * T1 + t], ws.e2[o * T1 + t], alpha);
    }
  }
  // pointwise
  std::fill(ws.db.begin(), ws.db.end(), 0.0);
  for (std::size_t o = 0; o < M; ++o) {
    const double* dqo = &ws.dq[o * T1];
    double bias = 0.0;
    for (std::size_t t = 0; t < T1; ++t) bias += dqo[t];
    gb2[o] += bias;
    for (std::size_t m = 0; m < M; ++m) {
      const double* bm = &ws.b[m * T1];
      double* dbm = &ws.db[m * T1];
      const double r = R[o * M + m];
      double acc = 0.0;
      for (std::size_t t = 0; t < T1; ++t) {
        acc += dqo[t] * bm[t];
        dbm[t] += r * dqo[t];
      }
      gR[o * M + m] += acc;
    }
  }
  // depthwise temporal (separable), then pool1 + dropout1 + ELU -> dA
  for (std::size_t m = 0; m < M; ++m) {
    const double* g = &G[m * K2];
    const double* dbm = &ws.db[m * T1];
    const double* d1m = &ws.d1[m * T1];
    double* dd1m = &ws.dd1[m * T1];
    std::fill(dd1m, dd1m + T1, 0.0);
    for (std::size_t t = 0; t < T1; ++t) {
      const std::size_t k_lo = t < h2 ? h2 - t : 0;
      const std::size_t k_hi = std::min(K2, T1 + h2 - t);
      for (std::size_t k = k_lo; k < k_hi; ++k) {
        gG[m * K2 + k] += dbm[t] * d1m[t + k - h2];
        dd1m[t + k - h2] += dbm[t] * g[k];
      }
    }
    double bias = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t j = t / P1;
      const double de1 = dd1m[j] * ws.mask1[m * T1 + j] / static_cast<double>(P1);
      const double da = de1 * elu_grad(ws.a[m * T + t], ws.e1[m * T + t], alpha);
      ws.da[m * T + t] = da;
      bias += da;
    }
    gb1[m] += bias;
  }
  // temporal conv over spatially mixed signal, then spatial weights
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t f = m / D;
    const double* h = &H[f * K1];
    const double* um = &ws.u[m * T];
    const double* dam = &ws.da[m * T];
    double* dum = &ws.du[m * T];
    std::fill(dum, dum + T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double d = dam[t];
      if (d == 0.0) continue;
      const std::size_t k_lo = t < h1 ? h1 - t : 0;
      const std::size_t k_hi = std::min(K1, T + h1 - t);
      for (std::size_t k = k_lo; k < k_hi; ++k) {
        gH[f * K1 + k] += d * um[t + k - h1];
        dum[t + k - h1] += d * h[k];
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x + c * T;
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += dum[t] * xc[t];
      gS[m * C + c] += acc;
    }
  }
  (void)S;
}

void check_input(const ModelConfig& cfg, const std::vector<double>& x) {
  if (x.size() != cfg.n_channels * cfg.n_samples)
    throw Error(Errc::ShapeMismatch, "input has " + std::to_string(x.size()) + " values, expected " +
                                         std::to_string(cfg.n_channels * cfg.n_samples));
}

std::vector<std::vector<double>> standardize_batch(const ModelConfig& cfg, std::span<const Eigen::MatrixXd> batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& w : batch) {
    if (static_cast<std::size_t>(w.rows()) != cfg.n_channels || static_cast<std::size_t>(w.cols()) != cfg.n_samples)
      throw Error(Errc::ShapeMismatch, "batch item is " + std::to_string(w.rows()) + " x " + std::to_string(w.cols()));
    out.push_back(standardize(w));
  }
  return out;
}

} // namespace

Eigen::MatrixXd forward_standardized(const P300Model& model, std::span<const std::vector<double>> inputs,
                                     bool train_mode, std::mt19937_64* rng) {
  const auto& cfg = model.config;
  Workspace ws(cfg);
  std::mt19937_64 local(model.rng_state);
  if (rng == nullptr) rng = &local;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(cfg.n_classes));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_input(cfg, inputs[i]);
    if (train_mode && cfg.dropout_p > 0.0) fill_masks(ws, cfg.dropout_p, *rng);
    forward_one(model, inputs[i].data(), ws);
    for (std::size_t k = 0; k < cfg.n_classes; ++k)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ws.prob[k];
  }
  return out;
}

Eigen::MatrixXd forward(const P300Model& model, std::span<const Eigen::MatrixXd> batch, bool train_mode,
                        std::mt19937_64* rng) {
  const auto inputs = standardize_batch(model.config, batch);
  return forward_standardized(model, inputs, train_mode, rng);
}

LossAndGradients loss_and_gradients_standardized(const P300Model& model,
                                                 std::span<const std::vector<double>> inputs,
                                                 std::span<const int> labels, std::span<const double> class_weights,
                                                 bool train_mode, std::mt19937_64* rng) {
  const auto& cfg = model.config;
  if (labels.size() != inputs.size()) throw Error(Errc::ShapeMismatch, "labels and batch sizes differ");
  if (class_weights.size() != cfg.n_classes) throw Error(Errc::ShapeMismatch, "one class weight per class required");
  LossAndGradients out;
  out.grads.resize(model.params.size());
  for (std::size_t p = 0; p < model.params.size(); ++p) out.grads[p].assign(model.params[p].data.size(), 0.0);
  if (inputs.empty()) return out;

  double weight_sum = 0.0;
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= cfg.n_classes) throw Error(Errc::ShapeMismatch, "label out of range");
    weight_sum += class_weights[static_cast<std::size_t>(y)];
  }
  if (!(weight_sum > 0.0)) throw Error(Errc::InvalidConfig, "class weights sum to zero over the batch");

  Workspace ws(cfg);
  std::mt19937_64 local(model.rng_state);
  if (rng == nullptr) rng = &local;
  std::vector<double> dlogits(cfg.n_classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_input(cfg, inputs[i]);
    if (train_mode && cfg.dropout_p > 0.0) {
      fill_masks(ws, cfg.dropout_p, *rng);
    } else {
      std::fill(ws.mask1.begin(), ws.mask1.end(), 1.0);
      std::fill(ws.mask2.begin(), ws.mask2.end(), 1.0);
    }
    forward_one(model, inputs[i].data(), ws);
    const auto y = static_cast<std::size_t>(labels[i]);
    const double w = class_weights[y] / weight_sum;
    loss += -w * std::log(std::max(ws.prob[y], 1e-300));
    for (std::size_t k = 0; k < cfg.n_classes; ++k) dlogits[k] = w * (ws.prob[k] - (k == y ? 1.0 : 0.0));
    backward_one(model, inputs[i].data(), ws, dlogits, out.grads);
  }
  out.loss = loss;
  return out;
}

LossAndGradients loss_and_gradients(const P300Model& model, std::span<const Eigen::MatrixXd> batch,
                                    std::span<const int> labels, std::span<const double> class_weights,
                                    bool train_mode, std::mt19937_64* rng) {
  const auto inputs = standardize_batch(model.config, batch);
  return loss_and_gradients_standardized(model, inputs, labels, class_weights, train_mode, rng);
}

} // namespace annot::net
