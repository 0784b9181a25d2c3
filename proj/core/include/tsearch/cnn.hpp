#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsearch/rng.hpp"

namespace tsearch {

/// 64-byte aligned storage. Vectorized kernels peel unaligned heads, so the
/// summation order (and the rounding) would otherwise depend on where the
/// allocator happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major tensor. Convolutional activations use the (C, N, H, W)
/// layout: each channel's values for the whole batch are contiguous, which
/// turns convolutions into one GEMM per batch and batch norm into row
/// reductions.
template <typename T>
struct BasicTensor {
  std::vector<int> shape;
  AlignedVector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), fill);
  }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

// Layer primitives. Every one is used by the model's forward/backward pass.

/// Stride-1 zero-padded cross-correlation. x: (Cin, N, H, W); w: (Cout, Cin, k, k), k odd.
template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& x, const BasicTensor<T>& w, std::span<const T> bias);

struct Conv2dGrads {
  Tensor dx;  ///< empty when not requested
  Tensor dw;
  std::vector<double> db;
};
Conv2dGrads conv2d_same_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool need_dx);

enum class Mode { kTrain, kInfer };

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  ///< biased
};

/// Per-channel normalization over (N, H, W) for (C, N, H, W) input, or over N
/// for (C, N). Train mode uses batch statistics (requires N >= 2 for
/// meaningful variance) and fills `cache`; infer mode uses running statistics.
template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                         std::span<const T> running_mean, std::span<const T> running_var,
                         Mode mode, double eps, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};
BatchNormGrads batchnorm_backward(const Tensor& dy, std::span<const double> gamma,
                                  const BatchNormCache& cache);

inline constexpr double kLeakySlope = 0.01;

template <typename T>
BasicTensor<T> leaky_relu(BasicTensor<T> x, double slope = kLeakySlope);
/// dy scaled by the leaky-ReLU derivative at pre-activation x.
Tensor leaky_relu_backward(const Tensor& x, Tensor dy, double slope = kLeakySlope);

/// 2x2 stride-2 max pooling over (C, N, H, W) with even H and W. `argmax`
/// receives the flat input index of each output's maximum (first on ties).
template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, std::vector<std::int32_t>* argmax = nullptr);
Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& input_shape,
                         const std::vector<std::int32_t>& argmax);

/// Inverted dropout. Identity in infer mode or with p = 0; otherwise each
/// element is zeroed with probability p and survivors scaled by 1/(1-p).
/// `mask` receives the per-element multiplier.
Tensor dropout(Tensor x, double p, Mode mode, Rng& rng, std::vector<double>* mask = nullptr);

/// x: (N, D), w: (M, D) -> (N, M) = x w^T + b.
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, std::span<const T> b);

struct DenseGrads {
  Tensor dx;
  Tensor dw;
  std::vector<double> db;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

template <typename T>
BasicTensor<T> sigmoid(BasicTensor<T> x);

/// (C, N, H, W) -> (N, C*H*W), per-sample order (c, h, w).
template <typename T>
BasicTensor<T> flatten_cnhw(const BasicTensor<T>& x);
Tensor unflatten_cnhw(const Tensor& flat, const std::vector<int>& cnhw_shape);

/// (N, C, H, W) sample-major <-> (C, N, H, W).
template <typename T>
BasicTensor<T> to_cnhw(const BasicTensor<T>& nchw);

/// (1/S) * sum over samples of the squared Euclidean error. preds/labels: (S, 2).
double mse_loss(const Tensor& preds, const Tensor& labels);

// ---------------------------------------------------------------------------
// Fixed waypoint network: conv(32, 5x5) -> BN -> LReLU -> maxpool ->
// conv(64, 3x3) -> BN -> LReLU -> dropout -> flatten(10816) -> fc(128) ->
// LReLU -> fc(2) -> sigmoid.

namespace arch {
inline constexpr int kGrid = 26;
inline constexpr int kInChannels = 4;
inline constexpr int kConv1Filters = 32;
inline constexpr int kConv1Kernel = 5;
inline constexpr int kPooled = 13;
inline constexpr int kConv2Filters = 64;
inline constexpr int kConv2Kernel = 3;
inline constexpr int kFlat = kConv2Filters * kPooled * kPooled;  // 10816
inline constexpr int kHidden = 128;
inline constexpr int kOutputs = 2;
inline constexpr int kInputSize = kInChannels * kGrid * kGrid;  // 2704
}  // namespace arch

/// Trainable parameters. Also used as the gradient and Adam-moment containers.
struct CnnParams {
  Tensor conv1_w{{arch::kConv1Filters, arch::kInChannels, arch::kConv1Kernel, arch::kConv1Kernel}};
  Tensor conv1_b{{arch::kConv1Filters}};
  Tensor bn1_gamma{{arch::kConv1Filters}, 1.0};
  Tensor bn1_beta{{arch::kConv1Filters}};
  Tensor conv2_w{{arch::kConv2Filters, arch::kConv1Filters, arch::kConv2Kernel, arch::kConv2Kernel}};
  Tensor conv2_b{{arch::kConv2Filters}};
  Tensor bn2_gamma{{arch::kConv2Filters}, 1.0};
  Tensor bn2_beta{{arch::kConv2Filters}};
  Tensor fc1_w{{arch::kHidden, arch::kFlat}};
  Tensor fc1_b{{arch::kHidden}};
  Tensor fc2_w{{arch::kOutputs, arch::kHidden}};
  Tensor fc2_b{{arch::kOutputs}};

  /// Fixed-order (name, tensor) view over all arrays.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;
  /// Same shapes, all zero.
  static CnnParams zeros();
};

struct BnRunningStats {
  std::vector<double> mean;
  std::vector<double> var;
};

struct CnnModel {
  CnnParams params;
  BnRunningStats bn1{std::vector<double>(arch::kConv1Filters, 0.0),
                     std::vector<double>(arch::kConv1Filters, 1.0)};
  BnRunningStats bn2{std::vector<double>(arch::kConv2Filters, 0.0),
                     std::vector<double>(arch::kConv2Filters, 1.0)};
  double dropout_p = 0.5;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// He-uniform (fan-in) weights, zero biases, unit BN scale.
  static CnnModel initialize(Rng& rng);
};

/// Activations kept by a train-mode forward pass for the backward pass.
struct ForwardCache {
  Tensor x0, z1, y1, p1, z2, y2, flat, h1, a3, pred;
  std::vector<std::int32_t> pool_argmax;
  BatchNormCache bn1, bn2;
  std::vector<double> dropout_mask;
};

/// inputs: (N, 4, 26, 26) sample-major encodings. Returns (N, 2) in (0, 1).
/// Train mode requires N >= 2 and a cache; running statistics are left
/// untouched (see update_running_stats).
Tensor forward(const CnnModel& model, const Tensor& inputs, Mode mode, Rng& rng,
               ForwardCache* cache = nullptr);

/// Exact gradients of mse_loss(cache.pred, labels) for every trainable parameter.
CnnParams backward(const CnnModel& model, const ForwardCache& cache, const Tensor& labels);

/// Momentum update of the BN running statistics from a train-mode pass
/// (running variance tracks the unbiased batch variance).
void update_running_stats(CnnModel& model, const ForwardCache& cache);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  CnnParams m = CnnParams::zeros();
  CnnParams v = CnnParams::zeros();
  std::int64_t t = 0;
};

/// Bias-corrected Adam on one flat parameter array.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::int64_t t, double lr, const AdamConfig& cfg = {});

/// Increments the step counter and updates every parameter array.
void adam_step(CnnParams& params, const CnnParams& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// Model file I/O. `meta` carries caller annotations (planner, channel
/// variant, config hash...). Adam moments are stored when given.
void save_model(const CnnModel& model, const std::string& path,
                const std::map<std::string, std::string>& meta = {},
                const AdamState* adam = nullptr);

struct LoadedModel {
  CnnModel model;
  std::map<std::string, std::string> meta;
  bool has_adam = false;
  AdamState adam;
};
LoadedModel load_model(const std::string& path);

/// Single-precision infer-mode copy of a model for low-latency inference.
class InferenceModel {
 public:
  explicit InferenceModel(const CnnModel& model);
  /// One encoding (4 * 26 * 26, channel-major) -> normalized waypoint.
  std::array<double, 2> predict(std::span<const double> encoding) const;

 private:
  TensorF conv1_w_, conv2_w_, fc1_w_, fc2_w_;
  std::vector<float> conv1_b_, conv2_b_, fc1_b_, fc2_b_;
  std::vector<float> bn1_scale_, bn1_shift_, bn2_scale_, bn2_shift_;
};

}  // namespace tsearch
