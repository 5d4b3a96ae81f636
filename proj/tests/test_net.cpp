#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/net.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace annot;
using namespace annot::net;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.n_channels = 3;
  c.n_samples = 32;
  c.temporal_filters = 2;
  c.temporal_kernel = 5;
  c.depth_multiplier = 2;
  c.separable_kernel = 3;
  c.pool1 = 4;
  c.pool2 = 2;
  return c;
}

// Epochs whose post-stimulus window carries a bump on channel 0 for targets.
dsp::EpochSet toy_epochs(const ModelConfig& cfg, std::size_t n, std::uint64_t seed, bool shuffle_labels = false) {
  std::vector<Eigen::MatrixXd> batch;
  std::vector<int> labels;
  oracle::toy_batch(cfg, n, seed, batch, labels);
  if (shuffle_labels) {
    std::mt19937_64 rng(seed + 1);
    std::shuffle(labels.begin(), labels.end(), rng);
  }
  dsp::EpochSet set;
  for (std::size_t i = 0; i < n; ++i) {
    dsp::Epoch e;
    e.stimulus_index = i;
    e.onset_offset = 4;
    e.samples = Eigen::MatrixXd::Zero(batch[i].rows(), batch[i].cols() + 4);
    e.samples.rightCols(batch[i].cols()) = batch[i];
    e.label = labels[i] == 1;
    set.epochs.push_back(std::move(e));
  }
  return set;
}

} // namespace

TEST_CASE("softmax rows are probability distributions") {
  auto model = init_model(ModelConfig{}, 3);
  std::vector<Eigen::MatrixXd> batch;
  std::vector<int> labels;
  oracle::toy_batch(model.config, 12, 5, batch, labels);
  for (bool train : {false, true}) {
    auto p = forward(model, batch, train);
    REQUIRE(p.rows() == 12);
    REQUIRE(p.cols() == 2);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(p.row(i).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("zero output layer gives chance probabilities and ln 2 loss") {
  auto model = init_model(ModelConfig{}, 8);
  std::fill(model.params[kDense].data.begin(), model.params[kDense].data.end(), 0.0);
  std::fill(model.params[kDenseBias].data.begin(), model.params[kDenseBias].data.end(), 0.0);
  std::vector<Eigen::MatrixXd> batch;
  std::vector<int> labels;
  oracle::toy_batch(model.config, 6, 1, batch, labels);
  auto p = forward(model, batch, false);
  CHECK((p.array() - 0.5).abs().maxCoeff() < 1e-15);
  const std::vector<double> w{1.0, 3.0};
  auto lg = loss_and_gradients(model, batch, labels, w);
  CHECK(lg.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
}

TEST_CASE("weighted cross-entropy matches its definition") {
  auto model = init_model(small(), 4);
  std::vector<Eigen::MatrixXd> batch;
  std::vector<int> labels;
  oracle::toy_batch(model.config, 7, 2, batch, labels);
  const std::vector<double> w{0.6, 2.5};
  auto p = forward(model, batch, false);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    num += w[y] * -std::log(p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y)));
    den += w[y];
  }
  CHECK(loss_and_gradients(model, batch, labels, w).loss == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("analytic gradients agree with central differences") {
  struct Case {
    ModelConfig cfg;
    bool train;
  };
  std::vector<Case> cases;
  cases.push_back({small(), false});
  cases.push_back({small(), true});
  auto c2 = small();
  c2.elu_alpha = 0.5;
  c2.n_classes = 3;
  cases.push_back({c2, true});
  auto c3 = small();
  c3.n_channels = 5;
  c3.n_samples = 48;
  c3.temporal_kernel = 7;
  c3.pool1 = 3;
  c3.pool2 = 4;
  cases.push_back({c3, false});

  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    auto model = init_model(c.cfg, seed);
    // Non-zero biases so every parameter is exercised.
    for (auto p : {kSpatialBias, kSepBias, kDenseBias})
      for (auto& v : model.params[p].data) v = 0.1 * static_cast<double>(&v - model.params[p].data.data()) - 0.05;
    std::vector<Eigen::MatrixXd> batch;
    std::vector<int> labels;
    oracle::toy_batch(c.cfg, 5, seed, batch, labels);
    for (auto& y : labels) y %= static_cast<int>(c.cfg.n_classes);
    labels.back() = static_cast<int>(c.cfg.n_classes) - 1;
    std::vector<double> w(c.cfg.n_classes, 1.0);
    w.back() = 2.0;
    auto r = oracle::gradient_check(model, batch, labels, w, c.train, seed, 1000);
    CHECK(r.checked == model.parameter_count());
    CHECK(r.max_rel_error < 1e-5);
    ++seed;
  }
}

TEST_CASE("Adam matches the reference update") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  TrainConfig cfg;
  cfg.lr = 0.01;
  std::vector<double> theta(50), mine;
  for (auto& v : theta) v = g(rng);
  mine = theta;
  std::vector<double> m(50, 0.0), v(50, 0.0);
  oracle::Adam ref(50, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  for (long t = 1; t <= 200; ++t) {
    std::vector<double> grad(50);
    for (auto& x : grad) x = g(rng) * (t % 7 == 0 ? 1e-6 : 1.0);
    ref.step(theta, grad);
    adam_step(mine, grad, m, v, cfg, t);
  }
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(std::abs(mine[i] - theta[i]) <= 1e-12);

  // First step moves every coordinate by exactly lr against the gradient sign.
  std::vector<double> p{0.0, 0.0}, m1(2, 0.0), v1(2, 0.0);
  adam_step(p, std::vector<double>{3.0, -0.2}, m1, v1, cfg, 1);
  CHECK(p[0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(cfg.lr).epsilon(1e-6));

  std::vector<double> bad{std::nan("")};
  std::vector<double> q{1.0}, mq{0.0}, vq{0.0};
  CHECK_THROWS_AS(adam_step(q, bad, mq, vq, cfg, 1), Error);
  try {
    adam_step(q, bad, mq, vq, cfg, 1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteGradient);
  }
}

TEST_CASE("class weights") {
  std::vector<int> y{0, 0, 0, 1};
  auto w = class_weights_for(y, true);
  CHECK(w[0] == doctest::Approx(4.0 / 6.0));
  CHECK(w[1] == doctest::Approx(2.0));
  auto u = class_weights_for(y, false);
  CHECK(u[0] == 1.0);
  CHECK(u[1] == 1.0);
}

TEST_CASE("training learns a planted pattern and is deterministic") {
  auto cfg = small();
  auto tr = toy_epochs(cfg, 120, 1);
  auto va = toy_epochs(cfg, 60, 2);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch_size = 16;
  tc.max_epochs = 40;
  tc.seed = 3;
  auto model = init_model(cfg, 9);
  auto a = train(model, tr, va, tc);
  auto b = train(model, tr, va, tc);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t p = 0; p < a.model.params.size(); ++p) CHECK(a.model.params[p].data == b.model.params[p].data);
  CHECK(history_to_csv(a.history) == history_to_csv(b.history));

  auto te = toy_epochs(cfg, 100, 5);
  auto preds = predict(a.model, te);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == te.epochs[i].label.value();
  CHECK(correct >= 90);
  CHECK(a.history.best_epoch >= 1);
  // Best-epoch validation loss is the minimum recorded.
  double best = 1e300;
  for (const auto& e : a.history.epochs) best = std::min(best, e.val_loss);
  CHECK(a.history.epochs[a.history.best_epoch - 1].val_loss == best);
}

TEST_CASE("shuffled labels give chance-level predictions") {
  auto cfg = small();
  auto tr = toy_epochs(cfg, 120, 11, true);
  auto va = toy_epochs(cfg, 60, 12, true);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch_size = 16;
  tc.max_epochs = 30;
  tc.seed = 1;
  auto a = train(init_model(cfg, 2), tr, va, tc);
  // Held-out labels are independent of the inputs, so whatever the model
  // picked up from the training noise, accuracy is binomial around 1/2.
  auto te = toy_epochs(cfg, 400, 13, true);
  auto preds = predict(a.model, te);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == te.epochs[i].label.value();
  const double acc = static_cast<double>(correct) / 400.0;
  // 400 balanced trials: chance +/- ~4 standard deviations.
  CHECK(acc > 0.4);
  CHECK(acc < 0.6);
}

TEST_CASE("training preconditions") {
  auto cfg = small();
  auto tr = toy_epochs(cfg, 20, 1);
  for (auto& e : tr.epochs) e.label = false;
  auto code = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::BadConfig;
  };
  CHECK(code([&] { train(init_model(cfg, 1), tr, tr, {}); }) == Errc::SingleClassTrainingSet);
  auto bad = cfg;
  bad.temporal_kernel = 4;
  CHECK(code([&] { init_model(bad, 1); }) == Errc::InvalidConfig);
  bad = cfg;
  bad.pool1 = 5;
  CHECK(code([&] { init_model(bad, 1); }) == Errc::InvalidConfig);
  dsp::Epoch e;
  e.samples = Eigen::MatrixXd::Zero(3, 20);
  e.onset_offset = 4;
  CHECK(code([&] { classifier_window(e, cfg); }) == Errc::ShapeMismatch);
}

TEST_CASE("standardize gives zero mean, unit variance rows") {
  Eigen::MatrixXd w(2, 6);
  w << 1, 2, 3, 4, 5, 6, 5, 5, 5, 5, 5, 5;
  auto s = standardize(w);
  double mean = 0, var = 0;
  for (int i = 0; i < 6; ++i) mean += s[static_cast<std::size_t>(i)];
  for (int i = 0; i < 6; ++i) var += s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / 6 == doctest::Approx(1.0));
  for (int i = 6; i < 12; ++i) CHECK(s[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("checkpoint round trip") {
  auto model = init_model(ModelConfig{}, 21);
  const auto dir = std::filesystem::temp_directory_path() / "annot_test_model";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_model(dir, model);
  auto back = load_model(dir);
  CHECK(back.config.temporal_kernel == model.config.temporal_kernel);
  CHECK(back.rng_state == model.rng_state);
  REQUIRE(back.params.size() == model.params.size());
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    CHECK(back.params[p].shape == model.params[p].shape);
    for (std::size_t i = 0; i < model.params[p].data.size(); ++i)
      REQUIRE(back.params[p].data[i] == static_cast<double>(static_cast<float>(model.params[p].data[i])));
  }
  // Saving what was loaded reproduces the files byte for byte.
  const auto dir2 = dir.string() + "_again";
  std::filesystem::create_directories(dir2);
  save_model(dir2, back);
  CHECK(read_file(dir / "model.json") == read_file(std::filesystem::path(dir2) / "model.json"));
  CHECK(read_file(dir / "params.f32le") == read_file(std::filesystem::path(dir2) / "params.f32le"));

  std::filesystem::remove(dir / "params.f32le");
  try {
    load_model(dir);
    FAIL("expected MissingInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingInput);
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
