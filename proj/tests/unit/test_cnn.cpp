#include <doctest.h>

#include <cmath>

#include "tsearch/cnn.hpp"
#include "tsearch/error.hpp"
#include "../support/gradient_check.hpp"

using namespace tsearch;

namespace {

Tensor random_inputs(int n, Rng& rng) {
  Tensor x({n, arch::kInChannels, arch::kGrid, arch::kGrid});
  for (double& v : x.data) v = standard_normal(rng);
  return x;
}

Tensor random_labels(int n, Rng& rng) {
  Tensor y({n, 2});
  for (double& v : y.data) v = uniform01(rng);
  return y;
}

double train_loss(const CnnModel& m, const Tensor& x, const Tensor& y) {
  Rng rng(0);
  return mse_loss(forward(m, x, Mode::kTrain, rng), y);
}

}  // namespace

TEST_CASE("conv2d_same hand-computed values") {
  Tensor x({1, 1, 3, 3}, 1.0);
  Tensor w({1, 1, 3, 3}, 1.0);
  std::vector<double> b{0.0};
  Tensor y = conv2d_same(x, w, std::span<const double>(b));
  CHECK(y.data[4] == 9.0);
  CHECK(y.data[0] == 4.0);
  CHECK(y.data[1] == 6.0);

  Tensor id({1, 1, 1, 1}, 1.0);
  Tensor in({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) in.data[i] = i;
  CHECK(conv2d_same(in, id, std::span<const double>(b)).data == in.data);

  Tensor zero({2, 1, 3, 3});
  std::vector<double> bias{1.5, -2.0};
  Tensor z = conv2d_same(in, zero, std::span<const double>(bias));
  for (int i = 0; i < 9; ++i) {
    CHECK(z.data[i] == 1.5);
    CHECK(z.data[9 + i] == -2.0);
  }
  CHECK_THROWS_AS(conv2d_same(in, Tensor({1, 2, 3, 3}), std::span<const double>(b)), Error);
}

TEST_CASE("batchnorm train and infer") {
  std::vector<double> g{1.0}, b0{0.0}, rm{0.0}, rv{1.0};
  Tensor c({1, 4, 2, 2}, 3.0);
  Tensor out = batchnorm(c, std::span<const double>(g), std::span<const double>(b0),
                         std::span<const double>(rm), std::span<const double>(rv), Mode::kTrain, 1e-5);
  for (double v : out.data) CHECK(std::abs(v) < 1e-9);

  Rng rng(3);
  Tensor x({3, 5, 4, 4});
  for (double& v : x.data) v = 2.0 + 3.0 * standard_normal(rng);
  std::vector<double> g3(3, 1.0), b3(3, 0.0), rm3(3, 0.0), rv3(3, 1.0);
  Tensor y = batchnorm(x, std::span<const double>(g3), std::span<const double>(b3),
                       std::span<const double>(rm3), std::span<const double>(rv3), Mode::kTrain, 1e-5);
  const std::size_t m = y.size() / 3;
  for (int ch = 0; ch < 3; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < m; ++i) mean += y.data[ch * m + i];
    mean /= m;
    for (std::size_t i = 0; i < m; ++i) var += std::pow(y.data[ch * m + i] - mean, 2);
    var /= m;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-5);
  }

  std::vector<double> b5{5.0};
  Tensor u({1, 3});
  u.data = {-1.0, 0.0, 2.0};
  Tensor v = batchnorm(u, std::span<const double>(g), std::span<const double>(b5),
                       std::span<const double>(rm), std::span<const double>(rv), Mode::kInfer, 0.0);
  CHECK(v.data == AlignedVector<double>{4.0, 5.0, 7.0});
}

TEST_CASE("elementwise layers") {
  Tensor a({2});
  a.data = {-1.0, 2.0};
  CHECK(leaky_relu(a).data == AlignedVector<double>{-0.01, 2.0});
  Tensor p({1, 1, 2, 2});
  p.data = {1, 2, 3, 4};
  CHECK(maxpool2(p).data == AlignedVector<double>{4.0});
  CHECK(sigmoid(Tensor({1}, 0.0)).data[0] == 0.5);

  Rng rng(1);
  Tensor ones({10000}, 1.0);
  CHECK(dropout(ones, 0.5, Mode::kInfer, rng).data == ones.data);
  Tensor d = dropout(ones, 0.5, Mode::kTrain, rng);
  int zeros = 0;
  for (double v : d.data) {
    CHECK((v == 0.0 || v == 2.0));
    zeros += v == 0.0;
  }
  CHECK(zeros > 4800);
  CHECK(zeros < 5200);
}

TEST_CASE("mse_loss") {
  Tensor p({1, 2}), l({1, 2});
  p.data = {1, 0};
  CHECK(mse_loss(p, l) == 1.0);
  CHECK(mse_loss(p, p) == 0.0);
  Tensor p2({2, 2}), l2({2, 2});
  p2.data = {1, 0, 0, 1};
  CHECK(mse_loss(p2, l2) == 1.0);
}

TEST_CASE("parameter count matches the architecture") {
  CnnParams p;
  const std::size_t expected = (32 * 5 * 5 * 4 + 32) + (64 * 3 * 3 * 32 + 64) + (128 * 10816 + 128) +
                               (2 * 128 + 2) + 2 * 32 + 2 * 64;
  CHECK(p.parameter_count() == expected);
}

TEST_CASE("forward shapes and ranges") {
  CnnModel zero;
  for (auto& [name, t] : zero.params.named())
    if (name.find("gamma") == std::string::npos) std::fill(t->data.begin(), t->data.end(), 0.0);
  Rng rng(2);
  Tensor x({1, 4, 26, 26});
  Tensor out = forward(zero, x, Mode::kInfer, rng);
  CHECK(out.data == AlignedVector<double>{0.5, 0.5});

  CnnModel m = CnnModel::initialize(rng);
  ForwardCache cache;
  Tensor in = random_inputs(3, rng);
  Tensor y = forward(m, in, Mode::kTrain, rng, &cache);
  CHECK(cache.p1.shape == std::vector<int>{32, 3, 13, 13});
  CHECK(cache.flat.shape == std::vector<int>{3, 10816});
  for (double v : y.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(forward(m, random_inputs(1, rng), Mode::kTrain, rng), Error);
}

TEST_CASE("backward matches finite differences") {
  const auto res = testing::gradient_check(11, 2, 200);
  MESSAGE("checked " << res.checked << ", kink-crossing probes skipped " << res.skipped_kinks
                     << ", worst " << res.worst_rel << " at " << res.worst_param);
  CHECK(res.checked >= 1000);
  CHECK(res.worst_rel <= 1e-3);
  CHECK(res.skipped_kinks < res.checked / 4);
}

TEST_CASE("fc2 bias gradient by hand") {
  Rng rng(5);
  CnnModel m = CnnModel::initialize(rng);
  m.dropout_p = 0.0;
  const Tensor x = random_inputs(4, rng);
  const Tensor y = random_labels(4, rng);
  ForwardCache c;
  forward(m, x, Mode::kTrain, rng, &c);
  const CnnParams g = backward(m, c, y);
  for (int j = 0; j < 2; ++j) {
    double expect = 0.0;
    for (int s = 0; s < 4; ++s) {
      const double p = c.pred.data[s * 2 + j];
      expect += 2.0 * (p - y.data[s * 2 + j]) * p * (1.0 - p);
    }
    CHECK(g.fc2_b.data[j] == doctest::Approx(expect / 4).epsilon(1e-12));
  }
  ForwardCache c2;
  forward(m, x, Mode::kTrain, rng, &c2);
  const CnnParams zero = backward(m, c2, c2.pred);
  for (const auto& [name, t] : zero.named())
    for (double v : t->data) REQUIRE(v == 0.0);
}
