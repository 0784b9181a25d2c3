#include <doctest.h>

#include <cmath>

#include "tsearch/error.hpp"
#include "tsearch/train.hpp"

using namespace tsearch;

namespace {

Dataset random_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GridEncoding> samples(n);
  for (GridEncoding& s : samples) {
    s.channels.resize(arch::kInputSize);
    for (double& v : s.channels) v = uniform01(rng);
    s.label = std::array<double, 2>{uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
  }
  return make_dataset(samples, {});
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 29) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 30) == doctest::Approx(1e-4));
  CHECK(learning_rate(cfg, 60) == doctest::Approx(1e-5));
  CHECK(learning_rate(TrainConfig{}, 0) == TrainConfig{}.lr0);
}

TEST_CASE("adam first step moves by lr") {
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g{0.3, -4.0, 1e-2, -7e2};
  std::vector<double> m(4, 0.0), v(4, 0.0);
  const std::vector<double> p0 = p;
  adam_update(p, g, m, v, 1, 1e-3);
  for (int i = 0; i < 4; ++i) {
    const double step = p[i] - p0[i];
    CHECK(std::abs(step) == doctest::Approx(1e-3).epsilon(0.01));
    CHECK((step < 0) == (g[i] > 0));
  }

  std::vector<double> q = p0, m2(4, 0.0), v2(4, 0.0);
  adam_update(q, g, m2, v2, 1, 2e-3);
  for (int i = 0; i < 4; ++i) CHECK(q[i] - p0[i] == doctest::Approx(2.0 * (p[i] - p0[i])).epsilon(1e-12));

  std::vector<double> z = p0, mz(4, 0.0), vz(4, 0.0);
  const std::vector<double> zero(4, 0.0);
  for (int t = 1; t <= 5; ++t) adam_update(z, zero, mz, vz, t, 1e-3);
  CHECK(z == p0);
}

TEST_CASE("adam_step counts steps and touches every array") {
  Rng rng(1);
  CnnModel m = CnnModel::initialize(rng);
  const CnnModel before = m;
  CnnParams g = CnnParams::zeros();
  for (auto& [name, t] : g.named()) t->data[0] = 1.0;
  AdamState s;
  adam_step(m.params, g, s, 1e-3);
  CHECK(s.t == 1);
  const auto a = m.params.named();
  const auto b = before.params.named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].second->data[0] == doctest::Approx(b[i].second->data[0] - 1e-3).epsilon(1e-9));
    if (a[i].second->data.size() > 1) CHECK(a[i].second->data[1] == b[i].second->data[1]);
  }
}

TEST_CASE("training stops early on a flat validation loss") {
  const Dataset d = random_dataset(24, 3);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.lr0 = 1e-12;
  cfg.patience = 3;
  cfg.max_epochs = 50;
  const TrainResult r = train(d, cfg);
  CHECK(r.stopped_early);
  CHECK(r.history.size() == 4);
  CHECK(r.best_epoch == 0);
}

TEST_CASE("training is deterministic and reports every epoch") {
  const Dataset d = random_dataset(24, 4);
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_epochs = 2;
  cfg.seed = 11;
  int calls = 0;
  const TrainResult a = train(d, cfg, [&](const EpochRecord& rec) {
    CHECK(rec.epoch == calls);
    ++calls;
  });
  const TrainResult b = train(d, cfg);
  CHECK(calls == 2);
  CHECK(a.history.size() == 2);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(a.model.params.fc1_w.data == b.model.params.fc1_w.data);
  cfg.seed = 12;
  CHECK(train(d, cfg).model.params.fc1_w.data != a.model.params.fc1_w.data);
}

TEST_CASE("training rejects small datasets and bad configs") {
  const Dataset d = random_dataset(10, 5);
  TrainConfig cfg;
  cfg.batch = 8;
  try {
    train(d, cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInsufficientData);
  }
  cfg.batch = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  TrainConfig bad;
  bad.dropout_p = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  GridEncoding nan_sample;
  nan_sample.channels.assign(arch::kInputSize, 0.0);
  nan_sample.channels[700] = std::nan("");
  nan_sample.label = std::array<double, 2>{0.5, 0.5};
  CHECK_THROWS_AS(make_dataset({nan_sample}, {}), Error);
}

TEST_CASE("a few steps reduce the loss on a small batch") {
  const Dataset d = random_dataset(16, 6);
  Rng rng(7);
  CnnModel m = CnnModel::initialize(rng);
  m.dropout_p = 0.0;
  AdamState adam;
  const double first = train_step(m, adam, d.inputs, d.labels, 1e-4, rng);
  double last = first;
  for (int i = 0; i < 30; ++i) last = train_step(m, adam, d.inputs, d.labels, 1e-4, rng);
  CHECK(last < 0.5 * first);
  CHECK(evaluate_loss(m, d.inputs, d.labels) < first);
}

TEST_CASE("smoothing and prediction") {
  CHECK(smooth({100, 100}, {200, 100}, 0.7) == Vec2{130, 100});
  CHECK(smooth({100, 100}, {200, 50}, 0.0) == Vec2{200, 50});
  CHECK_THROWS_AS(smooth({0, 0}, {1, 1}, 1.0), Error);

  CnnModel zero;
  zero.params = CnnParams::zeros();
  const InferenceModel im(zero);
  GridEncoding e;
  e.channels.assign(arch::kInputSize, 0.0);
  CHECK(distance(predict_waypoint(im, e, Environment{}), {130, 130}) < 1e-4);
}

TEST_CASE("float inference tracks the double model") {
  Rng rng(8);
  const CnnModel m = CnnModel::initialize(rng);
  const InferenceModel im(m);
  Tensor x({1, arch::kInChannels, arch::kGrid, arch::kGrid});
  for (double& v : x.data) v = uniform01(rng);
  Rng unused(0);
  const Tensor ref = forward(m, x, Mode::kInfer, unused);
  const auto got = im.predict(x.data);
  CHECK(got[0] == doctest::Approx(ref.data[0]).epsilon(1e-4));
  CHECK(got[1] == doctest::Approx(ref.data[1]).epsilon(1e-4));
}
