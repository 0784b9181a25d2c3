#include "tsearch/cnn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "tsearch/error.hpp"
#include "tsearch/nnt.hpp"

namespace tsearch {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kShapeMismatch, what);
}

// Unfolds (C, N, H, W) into rows (c, ky, kx) x columns (n, y, x).
template <typename T>
void im2col(const T* x, int C, int N, int H, int W, int k, T* cols) {
  const int pad = k / 2;
  const std::size_t nhw = static_cast<std::size_t>(N) * H * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * nhw;
        for (int n = 0; n < N; ++n) {
          const T* src = x + static_cast<std::size_t>(c * N + n) * H * W;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - pad;
            T* row = dst + (static_cast<std::size_t>(n) * H + y) * W;
            if (sy < 0 || sy >= H) {
              std::fill(row, row + W, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(sy) * W;
            for (int xx = 0; xx < W; ++xx) {
              const int sx = xx + kx - pad;
              row[xx] = (sx >= 0 && sx < W) ? srow[sx] : T(0);
            }
          }
        }
      }
}

void col2im(const double* cols, int C, int N, int H, int W, int k, double* dx) {
  const int pad = k / 2;
  const std::size_t nhw = static_cast<std::size_t>(N) * H * W;
  std::fill(dx, dx + static_cast<std::size_t>(C) * nhw, 0.0);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * nhw;
        for (int n = 0; n < N; ++n) {
          double* dst = dx + static_cast<std::size_t>(c * N + n) * H * W;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) continue;
            const double* row = src + (static_cast<std::size_t>(n) * H + y) * W;
            double* drow = dst + static_cast<std::size_t>(sy) * W;
            for (int xx = 0; xx < W; ++xx) {
              const int sx = xx + kx - pad;
              if (sx >= 0 && sx < W) drow[sx] += row[xx];
            }
          }
        }
      }
}

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_num(const std::map<std::string, std::string>& meta, const std::string& key,
                 double fallback) {
  auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  double v = fallback;
  auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (res.ec != std::errc{}) throw Error(ErrorCode::kCorruptFile, "bad numeric meta '" + key + "'");
  return v;
}

}  // namespace

// --- layers -----------------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& x, const BasicTensor<T>& w, std::span<const T> bias) {
  require(x.shape.size() == 4 && w.shape.size() == 4, "conv2d_same expects 4-d input and filters");
  const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == cin, "conv2d_same: filter depth does not match input channels");
  require(w.dim(3) == k && k % 2 == 1, "conv2d_same: filters must be square with odd size");
  require(static_cast<int>(bias.size()) == cout, "conv2d_same: bias length mismatch");

  const std::size_t nhw = static_cast<std::size_t>(n) * h * wd;
  const int kk = cin * k * k;
  AlignedVector<T> cols(static_cast<std::size_t>(kk) * nhw);
  im2col(x.ptr(), cin, n, h, wd, k, cols.data());

  BasicTensor<T> y({cout, n, h, wd});
  MapR<T> out(y.ptr(), cout, static_cast<Eigen::Index>(nhw));
  out.noalias() = CMapR<T>(w.ptr(), cout, kk) * CMapR<T>(cols.data(), kk, static_cast<Eigen::Index>(nhw));
  for (int c = 0; c < cout; ++c) out.row(c).array() += bias[c];
  return y;
}

Conv2dGrads conv2d_same_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool need_dx) {
  const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  require(dy.shape == std::vector<int>({cout, n, h, wd}), "conv2d_same_backward: dy shape mismatch");
  const auto nhw = static_cast<Eigen::Index>(n) * h * wd;
  const int kk = cin * k * k;
  AlignedVector<double> cols(static_cast<std::size_t>(kk) * nhw);
  im2col(x.ptr(), cin, n, h, wd, k, cols.data());

  CMapR<double> dY(dy.ptr(), cout, nhw);
  CMapR<double> C(cols.data(), kk, nhw);
  Conv2dGrads g;
  g.dw = Tensor(w.shape);
  MapR<double>(g.dw.ptr(), cout, kk).noalias() = dY * C.transpose();
  g.db.resize(cout);
  for (int c = 0; c < cout; ++c) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nhw; ++i) acc += dY(c, i);
    g.db[c] = acc;
  }
  if (need_dx) {
    AlignedVector<double> dcols(static_cast<std::size_t>(kk) * nhw);
    MapR<double>(dcols.data(), kk, nhw).noalias() = CMapR<double>(w.ptr(), cout, kk).transpose() * dY;
    g.dx = Tensor(x.shape);
    col2im(dcols.data(), cin, n, h, wd, k, g.dx.ptr());
  }
  return g;
}

template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                         std::span<const T> running_mean, std::span<const T> running_var,
                         Mode mode, double eps, BatchNormCache* cache) {
  require(!x.shape.empty(), "batchnorm expects channel-major input");
  const int channels = x.dim(0);
  require(static_cast<int>(gamma.size()) == channels && static_cast<int>(beta.size()) == channels,
          "batchnorm: parameter length mismatch");
  const std::size_t m = x.size() / channels;
  BasicTensor<T> y(x.shape);

  if (mode == Mode::kInfer) {
    for (int c = 0; c < channels; ++c) {
      const double scale = gamma[c] / std::sqrt(static_cast<double>(running_var[c]) + eps);
      const double shift = beta[c] - running_mean[c] * scale;
      const T* src = x.ptr() + c * m;
      T* dst = y.ptr() + c * m;
      for (std::size_t i = 0; i < m; ++i) dst[i] = static_cast<T>(scale * src[i] + shift);
    }
    return y;
  }

  require(m >= 2, "batchnorm train mode needs at least two values per channel");
  if (cache) {
    cache->xhat = Tensor(x.shape);
    cache->inv_std.assign(channels, 0.0);
    cache->batch_mean.assign(channels, 0.0);
    cache->batch_var.assign(channels, 0.0);
  }
  for (int c = 0; c < channels; ++c) {
    const T* src = x.ptr() + c * m;
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += src[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    T* dst = y.ptr() + c * m;
    double* xh = cache ? cache->xhat.ptr() + c * m : nullptr;
    for (std::size_t i = 0; i < m; ++i) {
      const double v = (src[i] - mean) * inv;
      if (xh) xh[i] = v;
      dst[i] = static_cast<T>(gamma[c] * v + beta[c]);
    }
    if (cache) {
      cache->inv_std[c] = inv;
      cache->batch_mean[c] = mean;
      cache->batch_var[c] = var;
    }
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& dy, std::span<const double> gamma,
                                  const BatchNormCache& cache) {
  const int channels = dy.dim(0);
  const std::size_t m = dy.size() / channels;
  BatchNormGrads g;
  g.dx = Tensor(dy.shape);
  g.dgamma.assign(channels, 0.0);
  g.dbeta.assign(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* d = dy.ptr() + c * m;
    const double* xh = cache.xhat.ptr() + c * m;
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sum_d += d[i];
      sum_dx += d[i] * xh[i];
    }
    g.dbeta[c] = sum_d;
    g.dgamma[c] = sum_dx;
    const double k = gamma[c] * cache.inv_std[c] / static_cast<double>(m);
    double* out = g.dx.ptr() + c * m;
    for (std::size_t i = 0; i < m; ++i)
      out[i] = k * (static_cast<double>(m) * d[i] - sum_d - xh[i] * sum_dx);
  }
  return g;
}

template <typename T>
BasicTensor<T> leaky_relu(BasicTensor<T> x, double slope) {
  const T s = static_cast<T>(slope);
  for (T& v : x.data) v = v > T(0) ? v : s * v;
  return x;
}

Tensor leaky_relu_backward(const Tensor& x, Tensor dy, double slope) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(x.data[i] > 0.0)) dy.data[i] *= slope;
  return dy;
}

template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, std::vector<std::int32_t>* argmax) {
  require(x.shape.size() == 4, "maxpool2 expects (C, N, H, W)");
  const int c = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2 needs even spatial dimensions");
  const int ho = h / 2, wo = w / 2;
  BasicTensor<T> y({c, n, ho, wo});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int plane = 0; plane < c * n; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * yy) * w + 2 * xx;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : cand)
          if (x.data[idx] > x.data[best]) best = idx;
        y.data[o] = x.data[best];
        if (argmax) (*argmax)[o] = static_cast<std::int32_t>(best);
      }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& input_shape,
                         const std::vector<std::int32_t>& argmax) {
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax[o]] += dy.data[o];
  return dx;
}

Tensor dropout(Tensor x, double p, Mode mode, Rng& rng, std::vector<double>* mask) {
  if (mode == Mode::kInfer || p <= 0.0) {
    if (mask) mask->clear();
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  if (mask) mask->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = uniform01(rng) < p ? 0.0 : keep_scale;
    x.data[i] *= m;
    if (mask) (*mask)[i] = m;
  }
  return x;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, std::span<const T> b) {
  require(x.shape.size() == 2 && w.shape.size() == 2 && x.dim(1) == w.dim(1),
          "dense: input width does not match weight columns");
  require(static_cast<int>(b.size()) == w.dim(0), "dense: bias length mismatch");
  const int n = x.dim(0), d = x.dim(1), m = w.dim(0);
  BasicTensor<T> y({n, m});
  MapR<T> out(y.ptr(), n, m);
  out.noalias() = CMapR<T>(x.ptr(), n, d) * CMapR<T>(w.ptr(), m, d).transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) += b[j];
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  const int n = x.dim(0), d = x.dim(1), m = w.dim(0);
  require(dy.shape == std::vector<int>({n, m}), "dense_backward: dy shape mismatch");
  CMapR<double> X(x.ptr(), n, d), W(w.ptr(), m, d), dY(dy.ptr(), n, m);
  DenseGrads g;
  g.dx = Tensor({n, d});
  MapR<double>(g.dx.ptr(), n, d).noalias() = dY * W;
  g.dw = Tensor({m, d});
  MapR<double>(g.dw.ptr(), m, d).noalias() = dY.transpose() * X;
  g.db.assign(m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) g.db[j] += dY(i, j);
  return g;
}

template <typename T>
BasicTensor<T> sigmoid(BasicTensor<T> x) {
  for (T& v : x.data) v = T(1) / (T(1) + std::exp(-v));
  return x;
}

template <typename T>
BasicTensor<T> flatten_cnhw(const BasicTensor<T>& x) {
  const int c = x.dim(0), n = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  BasicTensor<T> y({n, c * hw});
  for (int ch = 0; ch < c; ++ch)
    for (int s = 0; s < n; ++s)
      std::copy_n(x.ptr() + (static_cast<std::size_t>(ch) * n + s) * hw, hw,
                  y.ptr() + static_cast<std::size_t>(s) * c * hw + static_cast<std::size_t>(ch) * hw);
  return y;
}

Tensor unflatten_cnhw(const Tensor& flat, const std::vector<int>& shape) {
  const int c = shape[0], n = shape[1];
  const int hw = shape[2] * shape[3];
  Tensor y(shape);
  for (int ch = 0; ch < c; ++ch)
    for (int s = 0; s < n; ++s)
      std::copy_n(flat.ptr() + static_cast<std::size_t>(s) * c * hw + static_cast<std::size_t>(ch) * hw, hw,
                  y.ptr() + (static_cast<std::size_t>(ch) * n + s) * hw);
  return y;
}

template <typename T>
BasicTensor<T> to_cnhw(const BasicTensor<T>& x) {
  require(x.shape.size() == 4, "to_cnhw expects (N, C, H, W)");
  const int n = x.dim(0), c = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  BasicTensor<T> y({c, n, x.dim(2), x.dim(3)});
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(x.ptr() + (static_cast<std::size_t>(s) * c + ch) * hw, hw,
                  y.ptr() + (static_cast<std::size_t>(ch) * n + s) * hw);
  return y;
}

double mse_loss(const Tensor& preds, const Tensor& labels) {
  require(preds.shape == labels.shape && preds.shape.size() == 2 && preds.dim(0) >= 1,
          "mse_loss: prediction/label shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds.data[i] - labels.data[i];
    s += d * d;
  }
  return s / preds.dim(0);
}

template Tensor conv2d_same<double>(const Tensor&, const Tensor&, std::span<const double>);
template TensorF conv2d_same<float>(const TensorF&, const TensorF&, std::span<const float>);
template Tensor batchnorm<double>(const Tensor&, std::span<const double>, std::span<const double>,
                                  std::span<const double>, std::span<const double>, Mode, double,
                                  BatchNormCache*);
template Tensor leaky_relu<double>(Tensor, double);
template TensorF leaky_relu<float>(TensorF, double);
template Tensor maxpool2<double>(const Tensor&, std::vector<std::int32_t>*);
template TensorF maxpool2<float>(const TensorF&, std::vector<std::int32_t>*);
template Tensor dense<double>(const Tensor&, const Tensor&, std::span<const double>);
template TensorF dense<float>(const TensorF&, const TensorF&, std::span<const float>);
template Tensor sigmoid<double>(Tensor);
template TensorF sigmoid<float>(TensorF);
template Tensor flatten_cnhw<double>(const Tensor&);
template TensorF flatten_cnhw<float>(const TensorF&);
template Tensor to_cnhw<double>(const Tensor&);

// --- model ------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> CnnParams::named() {
  return {{"conv1.weight", &conv1_w}, {"conv1.bias", &conv1_b}, {"bn1.gamma", &bn1_gamma},
          {"bn1.beta", &bn1_beta},    {"conv2.weight", &conv2_w}, {"conv2.bias", &conv2_b},
          {"bn2.gamma", &bn2_gamma},  {"bn2.beta", &bn2_beta},    {"fc1.weight", &fc1_w},
          {"fc1.bias", &fc1_b},       {"fc2.weight", &fc2_w},     {"fc2.bias", &fc2_b}};
}

std::vector<std::pair<std::string, const Tensor*>> CnnParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<CnnParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::size_t CnnParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& entry : named()) n += entry.second->size();
  return n;
}

CnnParams CnnParams::zeros() {
  CnnParams p;
  for (auto& entry : p.named()) std::fill(entry.second->data.begin(), entry.second->data.end(), 0.0);
  return p;
}

CnnModel CnnModel::initialize(Rng& rng) {
  CnnModel m;
  auto he = [&](Tensor& w, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : w.data) v = uniform(rng, -bound, bound);
  };
  using namespace arch;
  he(m.params.conv1_w, kInChannels * kConv1Kernel * kConv1Kernel);
  he(m.params.conv2_w, kConv1Filters * kConv2Kernel * kConv2Kernel);
  he(m.params.fc1_w, kFlat);
  he(m.params.fc2_w, kHidden);
  return m;
}

Tensor forward(const CnnModel& model, const Tensor& inputs, Mode mode, Rng& rng, ForwardCache* cache) {
  using namespace arch;
  require(inputs.shape.size() == 4 && inputs.dim(1) == kInChannels && inputs.dim(2) == kGrid &&
              inputs.dim(3) == kGrid,
          "forward expects (N, 4, 26, 26) input");
  const int n = inputs.dim(0);
  require(n >= 1, "forward needs at least one sample");
  if (mode == Mode::kTrain) require(n >= 2, "train-mode forward needs a batch of at least 2");
  const CnnParams& p = model.params;
  auto span_of = [](const Tensor& t) { return std::span<const double>(t.data); };

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.x0 = to_cnhw(inputs);
  c.z1 = conv2d_same(c.x0, p.conv1_w, span_of(p.conv1_b));
  c.y1 = batchnorm(c.z1, span_of(p.bn1_gamma), span_of(p.bn1_beta),
                   std::span<const double>(model.bn1.mean), std::span<const double>(model.bn1.var),
                   mode, model.bn_eps, &c.bn1);
  c.p1 = maxpool2(leaky_relu(c.y1), &c.pool_argmax);
  c.z2 = conv2d_same(c.p1, p.conv2_w, span_of(p.conv2_b));
  c.y2 = batchnorm(c.z2, span_of(p.bn2_gamma), span_of(p.bn2_beta),
                   std::span<const double>(model.bn2.mean), std::span<const double>(model.bn2.var),
                   mode, model.bn_eps, &c.bn2);
  Tensor a2 = dropout(leaky_relu(c.y2), model.dropout_p, mode, rng, &c.dropout_mask);
  c.flat = flatten_cnhw(a2);
  c.h1 = dense(c.flat, p.fc1_w, span_of(p.fc1_b));
  c.a3 = leaky_relu(c.h1);
  c.pred = sigmoid(dense(c.a3, p.fc2_w, span_of(p.fc2_b)));
  return c.pred;
}

CnnParams backward(const CnnModel& model, const ForwardCache& c, const Tensor& labels) {
  using namespace arch;
  require(labels.shape == c.pred.shape, "backward: label shape mismatch");
  const CnnParams& p = model.params;
  const int n = c.pred.dim(0);
  CnnParams g = CnnParams::zeros();

  Tensor dout(c.pred.shape);
  for (std::size_t i = 0; i < dout.size(); ++i) {
    const double y = c.pred.data[i];
    dout.data[i] = 2.0 * (y - labels.data[i]) / n * y * (1.0 - y);
  }
  DenseGrads fc2 = dense_backward(c.a3, p.fc2_w, dout);
  g.fc2_w = std::move(fc2.dw);
  g.fc2_b.data.assign(fc2.db.begin(), fc2.db.end());

  DenseGrads fc1 = dense_backward(c.flat, p.fc1_w, leaky_relu_backward(c.h1, std::move(fc2.dx)));
  g.fc1_w = std::move(fc1.dw);
  g.fc1_b.data.assign(fc1.db.begin(), fc1.db.end());

  Tensor da2 = unflatten_cnhw(fc1.dx, c.y2.shape);
  if (!c.dropout_mask.empty())
    for (std::size_t i = 0; i < da2.size(); ++i) da2.data[i] *= c.dropout_mask[i];
  BatchNormGrads bn2 = batchnorm_backward(leaky_relu_backward(c.y2, std::move(da2)),
                                          std::span<const double>(p.bn2_gamma.data), c.bn2);
  g.bn2_gamma.data.assign(bn2.dgamma.begin(), bn2.dgamma.end());
  g.bn2_beta.data.assign(bn2.dbeta.begin(), bn2.dbeta.end());

  Conv2dGrads conv2 = conv2d_same_backward(c.p1, p.conv2_w, bn2.dx, true);
  g.conv2_w = std::move(conv2.dw);
  g.conv2_b.data.assign(conv2.db.begin(), conv2.db.end());

  Tensor da1 = maxpool2_backward(conv2.dx, c.y1.shape, c.pool_argmax);
  BatchNormGrads bn1 = batchnorm_backward(leaky_relu_backward(c.y1, std::move(da1)),
                                          std::span<const double>(p.bn1_gamma.data), c.bn1);
  g.bn1_gamma.data.assign(bn1.dgamma.begin(), bn1.dgamma.end());
  g.bn1_beta.data.assign(bn1.dbeta.begin(), bn1.dbeta.end());

  Conv2dGrads conv1 = conv2d_same_backward(c.x0, p.conv1_w, bn1.dx, false);
  g.conv1_w = std::move(conv1.dw);
  g.conv1_b.data.assign(conv1.db.begin(), conv1.db.end());
  return g;
}

void update_running_stats(CnnModel& model, const ForwardCache& c) {
  auto apply = [&](BnRunningStats& s, const BatchNormCache& bc, const Tensor& z) {
    const double m = static_cast<double>(z.size() / z.dim(0));
    const double mom = model.bn_momentum;
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      s.mean[i] = (1.0 - mom) * s.mean[i] + mom * bc.batch_mean[i];
      s.var[i] = (1.0 - mom) * s.var[i] + mom * bc.batch_var[i] * m / (m - 1.0);
    }
  };
  apply(model.bn1, c.bn1, c.z1);
  apply(model.bn2, c.bn2, c.z2);
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::int64_t t, double lr, const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

void adam_step(CnnParams& params, const CnnParams& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  ++state.t;
  auto p = params.named();
  auto g = grads.named();
  auto m = state.m.named();
  auto v = state.v.named();
  for (std::size_t i = 0; i < p.size(); ++i)
    adam_update(p[i].second->data, g[i].second->data, m[i].second->data, v[i].second->data,
                state.t, lr, cfg);
}

// --- persistence ------------------------------------------------------------

namespace {

constexpr const char* kModelFormat = "tsearch-cnn";
constexpr const char* kModelVersion = "1";

std::vector<std::int64_t> shape64(const std::vector<int>& s) {
  return {s.begin(), s.end()};
}

void load_into(const NntContainer& c, const std::string& name, Tensor& dst) {
  const NamedArray& a = c.at(name);
  if (a.shape != shape64(dst.shape))
    throw Error(ErrorCode::kCorruptFile, "array '" + name + "' has unexpected shape");
  dst.data.assign(a.data.begin(), a.data.end());
}

void load_into(const NntContainer& c, const std::string& name, std::vector<double>& dst) {
  const NamedArray& a = c.at(name);
  if (a.shape != std::vector<std::int64_t>{static_cast<std::int64_t>(dst.size())})
    throw Error(ErrorCode::kCorruptFile, "array '" + name + "' has unexpected shape");
  dst = a.data;
}

}  // namespace

void save_model(const CnnModel& model, const std::string& path,
                const std::map<std::string, std::string>& meta, const AdamState* adam) {
  NntContainer c;
  c.meta = meta;
  c.meta["format"] = kModelFormat;
  c.meta["format_version"] = kModelVersion;
  c.meta["dropout_p"] = num(model.dropout_p);
  c.meta["bn_momentum"] = num(model.bn_momentum);
  c.meta["bn_eps"] = num(model.bn_eps);
  for (const auto& [name, t] : model.params.named()) c.add(name, shape64(t->shape), {t->data.begin(), t->data.end()});
  const auto stat = [&](const std::string& name, const std::vector<double>& v) {
    c.add(name, {static_cast<std::int64_t>(v.size())}, v);
  };
  stat("bn1.running_mean", model.bn1.mean);
  stat("bn1.running_var", model.bn1.var);
  stat("bn2.running_mean", model.bn2.mean);
  stat("bn2.running_var", model.bn2.var);
  if (adam) {
    c.meta["adam_t"] = std::to_string(adam->t);
    for (const auto& [name, t] : adam->m.named()) c.add("adam.m." + name, shape64(t->shape), {t->data.begin(), t->data.end()});
    for (const auto& [name, t] : adam->v.named()) c.add("adam.v." + name, shape64(t->shape), {t->data.begin(), t->data.end()});
  }
  write_nnt(c, path);
}

LoadedModel load_model(const std::string& path) {
  const NntContainer c = read_nnt(path);
  auto fmt = c.meta.find("format");
  auto ver = c.meta.find("format_version");
  if (fmt == c.meta.end() || fmt->second != kModelFormat)
    throw Error(ErrorCode::kVersionMismatch, "'" + path + "' is not a model file");
  if (ver == c.meta.end() || ver->second != kModelVersion)
    throw Error(ErrorCode::kVersionMismatch, "unsupported model format version in '" + path + "'");

  LoadedModel out;
  out.meta = c.meta;
  CnnModel& m = out.model;
  m.dropout_p = parse_num(c.meta, "dropout_p", m.dropout_p);
  m.bn_momentum = parse_num(c.meta, "bn_momentum", m.bn_momentum);
  m.bn_eps = parse_num(c.meta, "bn_eps", m.bn_eps);
  for (auto& [name, t] : m.params.named()) load_into(c, name, *t);
  load_into(c, "bn1.running_mean", m.bn1.mean);
  load_into(c, "bn1.running_var", m.bn1.var);
  load_into(c, "bn2.running_mean", m.bn2.mean);
  load_into(c, "bn2.running_var", m.bn2.var);
  if (auto t = c.meta.find("adam_t"); t != c.meta.end()) {
    out.has_adam = true;
    out.adam.t = std::stoll(t->second);
    for (auto& [name, a] : out.adam.m.named()) load_into(c, "adam.m." + name, *a);
    for (auto& [name, a] : out.adam.v.named()) load_into(c, "adam.v." + name, *a);
  }
  return out;
}

// --- single-precision inference -------------------------------------------

namespace {

TensorF to_float(const Tensor& t) {
  TensorF f(t.shape);
  std::transform(t.data.begin(), t.data.end(), f.data.begin(), [](double v) { return static_cast<float>(v); });
  return f;
}

template <typename V>
std::vector<float> to_float(const V& v) { return {v.begin(), v.end()}; }

void fold_bn(const Tensor& gamma, const Tensor& beta, const BnRunningStats& s, double eps,
             std::vector<float>& scale, std::vector<float>& shift) {
  scale.resize(gamma.size());
  shift.resize(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double sc = gamma.data[i] / std::sqrt(s.var[i] + eps);
    scale[i] = static_cast<float>(sc);
    shift[i] = static_cast<float>(beta.data[i] - s.mean[i] * sc);
  }
}

void scale_shift_leaky(TensorF& t, const std::vector<float>& scale, const std::vector<float>& shift) {
  const std::size_t m = t.size() / scale.size();
  for (std::size_t c = 0; c < scale.size(); ++c) {
    float* p = t.ptr() + c * m;
    for (std::size_t i = 0; i < m; ++i) {
      const float v = scale[c] * p[i] + shift[c];
      p[i] = v > 0.0f ? v : static_cast<float>(kLeakySlope) * v;
    }
  }
}

}  // namespace

InferenceModel::InferenceModel(const CnnModel& model)
    : conv1_w_(to_float(model.params.conv1_w)),
      conv2_w_(to_float(model.params.conv2_w)),
      fc1_w_(to_float(model.params.fc1_w)),
      fc2_w_(to_float(model.params.fc2_w)),
      conv1_b_(to_float(model.params.conv1_b.data)),
      conv2_b_(to_float(model.params.conv2_b.data)),
      fc1_b_(to_float(model.params.fc1_b.data)),
      fc2_b_(to_float(model.params.fc2_b.data)) {
  fold_bn(model.params.bn1_gamma, model.params.bn1_beta, model.bn1, model.bn_eps, bn1_scale_, bn1_shift_);
  fold_bn(model.params.bn2_gamma, model.params.bn2_beta, model.bn2, model.bn_eps, bn2_scale_, bn2_shift_);
}

std::array<double, 2> InferenceModel::predict(std::span<const double> encoding) const {
  using namespace arch;
  require(encoding.size() == static_cast<std::size_t>(kInputSize), "predict expects a 4x26x26 encoding");
  // With N = 1 the (N, C, H, W) and (C, N, H, W) layouts coincide.
  TensorF x({kInChannels, 1, kGrid, kGrid});
  std::transform(encoding.begin(), encoding.end(), x.data.begin(), [](double v) { return static_cast<float>(v); });
  TensorF h = conv2d_same(x, conv1_w_, std::span<const float>(conv1_b_));
  scale_shift_leaky(h, bn1_scale_, bn1_shift_);
  h = maxpool2(h);
  h = conv2d_same(h, conv2_w_, std::span<const float>(conv2_b_));
  scale_shift_leaky(h, bn2_scale_, bn2_shift_);
  h = leaky_relu(dense(flatten_cnhw(h), fc1_w_, std::span<const float>(fc1_b_)));
  h = sigmoid(dense(h, fc2_w_, std::span<const float>(fc2_b_)));
  return {static_cast<double>(h.data[0]), static_cast<double>(h.data[1])};
}

}  // namespace tsearch
