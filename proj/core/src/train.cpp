#include "tsearch/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsearch/error.hpp"
#include "tsearch/nnt.hpp"

namespace tsearch {

Dataset make_dataset(const std::vector<GridEncoding>& samples,
                     const std::vector<std::vector<double>>& raw_density) {
  const int s = static_cast<int>(samples.size());
  if (!raw_density.empty() && raw_density.size() != samples.size())
    throw Error(ErrorCode::kShapeMismatch, "raw density count differs from sample count");
  Dataset d;
  d.inputs = Tensor({s, arch::kInChannels, arch::kGrid, arch::kGrid});
  d.labels = Tensor({s, 2});
  const std::size_t n = arch::kInputSize;
  for (int i = 0; i < s; ++i) {
    const GridEncoding& e = samples[i];
    if (e.channels.size() != n) throw Error(ErrorCode::kShapeMismatch, "encoding has wrong size");
    if (!e.label) throw Error(ErrorCode::kInvalidArgument, "training sample without label");
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(e.channels.begin(), e.channels.end(), finite) || !finite((*e.label)[0]) || !finite((*e.label)[1]))
      throw Error(ErrorCode::kInvalidArgument, "sample " + std::to_string(i) + " is not finite");
    std::copy(e.channels.begin(), e.channels.end(), d.inputs.data.begin() + i * n);
    d.labels.data[2 * i] = (*e.label)[0];
    d.labels.data[2 * i + 1] = (*e.label)[1];
  }
  for (const auto& r : raw_density) d.raw_density.insert(d.raw_density.end(), r.begin(), r.end());
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  NntContainer c;
  c.meta = d.meta;
  c.meta["format"] = "tsearch-dataset";
  c.meta["format_version"] = "1";
  const std::vector<std::int64_t> in_shape(d.inputs.shape.begin(), d.inputs.shape.end());
  c.add("inputs", in_shape, {d.inputs.data.begin(), d.inputs.data.end()});
  c.add("labels", {d.size(), 2}, {d.labels.data.begin(), d.labels.data.end()});
  if (!d.raw_density.empty())
    c.add("raw_density", {d.size(), d.inputs.dim(2), d.inputs.dim(3)}, d.raw_density);
  write_nnt(c, path);
}

Dataset load_dataset(const std::string& path) {
  NntContainer c = read_nnt(path);
  auto fmt = c.meta.find("format");
  if (fmt == c.meta.end() || fmt->second != "tsearch-dataset")
    throw Error(ErrorCode::kVersionMismatch, "'" + path + "' is not a dataset file");
  if (c.meta["format_version"] != "1")
    throw Error(ErrorCode::kVersionMismatch, "unsupported dataset version in '" + path + "'");
  Dataset d;
  d.meta = c.meta;
  const NamedArray& in = c.at("inputs");
  const NamedArray& lab = c.at("labels");
  if (in.shape.size() != 4 || in.shape[1] != arch::kInChannels || in.shape[2] != arch::kGrid ||
      in.shape[3] != arch::kGrid || lab.shape != std::vector<std::int64_t>{in.shape[0], 2})
    throw Error(ErrorCode::kCorruptFile, "dataset arrays have unexpected shapes");
  d.inputs.shape.assign(in.shape.begin(), in.shape.end());
  d.inputs.data.assign(in.data.begin(), in.data.end());
  d.labels.shape = {static_cast<int>(lab.shape[0]), 2};
  d.labels.data.assign(lab.data.begin(), lab.data.end());
  if (const NamedArray* raw = c.find("raw_density")) {
    if (raw->element_count() != in.shape[0] * in.shape[2] * in.shape[3])
      throw Error(ErrorCode::kCorruptFile, "raw_density has unexpected shape");
    d.raw_density = raw->data;
  }
  return d;
}

Dataset with_variant(const Dataset& d, ChannelVariant variant, const GridSpec& grid) {
  if (variant == ChannelVariant::kFull) return d;
  if (variant == ChannelVariant::kNoSmoothing && d.raw_density.empty())
    throw Error(ErrorCode::kInvalidArgument, "dataset lacks raw_density needed for the no-smoothing variant");
  Dataset out = d;
  const std::size_t n = arch::kInputSize;
  const std::size_t cells = grid.cells();
  std::vector<double> channels(n);
  std::vector<double> raw;
  for (int i = 0; i < d.size(); ++i) {
    std::copy_n(d.inputs.data.begin() + i * n, n, channels.begin());
    if (!d.raw_density.empty())
      raw.assign(d.raw_density.begin() + i * cells, d.raw_density.begin() + (i + 1) * cells);
    apply_variant(channels, raw, grid, variant);
    std::copy(channels.begin(), channels.end(), out.inputs.data.begin() + i * n);
  }
  out.meta["variant"] = to_string(variant);
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, "training: " + what); };
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (decay_period < 1) fail("decay_period must be >= 1");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) fail("decay_factor must be in (0, 1]");
  if (batch < 2) fail("batch must be >= 2");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (!(val_split > 0.0 && val_split < 1.0)) fail("val_split must be in (0, 1)");
  if (patience < 1) fail("patience must be >= 1");
  if (!(min_delta >= 0.0)) fail("min_delta must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must be in [0, 1)");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_period);
}

Tensor gather_rows(const Tensor& src, std::span<const int> idx) {
  std::vector<int> shape = src.shape;
  shape[0] = static_cast<int>(idx.size());
  Tensor out(shape);
  const std::size_t row = src.size() / src.dim(0);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data.begin() + static_cast<std::size_t>(idx[i]) * row, row, out.data.begin() + i * row);
  return out;
}

double train_step(CnnModel& model, AdamState& adam, const Tensor& inputs, const Tensor& labels,
                  double lr, Rng& rng) {
  ForwardCache cache;
  forward(model, inputs, Mode::kTrain, rng, &cache);
  const double loss = mse_loss(cache.pred, labels);
  const CnnParams grads = backward(model, cache, labels);
  update_running_stats(model, cache);
  adam_step(model.params, grads, adam, lr);
  return loss;
}

double evaluate_loss(const CnnModel& model, const Tensor& inputs, const Tensor& labels) {
  const int s = inputs.dim(0);
  if (s == 0) return 0.0;
  Rng unused(0);
  double total = 0.0;
  constexpr int kChunk = 128;
  std::vector<int> idx;
  for (int start = 0; start < s; start += kChunk) {
    const int end = std::min(s, start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor pred = forward(model, gather_rows(inputs, idx), Mode::kInfer, unused);
    total += mse_loss(pred, gather_rows(labels, idx)) * (end - start);
  }
  return total / s;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const int s = data.size();
  if (s < 2 * cfg.batch)
    throw Error(ErrorCode::kInsufficientData, "training needs at least " + std::to_string(2 * cfg.batch) +
                                                  " samples, dataset has " + std::to_string(s));

  Rng split_rng = make_stream(cfg.seed, "split");
  Rng init_rng = make_stream(cfg.seed, "init");
  Rng shuffle_rng = make_stream(cfg.seed, "shuffle");
  Rng dropout_rng = make_stream(cfg.seed, "dropout");

  std::vector<int> order(s);
  std::iota(order.begin(), order.end(), 0);
  for (int i = s - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<int>(uniform01(split_rng) * (i + 1))]);
  const int n_val = std::clamp(static_cast<int>(std::lround(s * cfg.val_split)), 1, s - 2);
  const std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());
  const Tensor val_x = gather_rows(data.inputs, val_idx);
  const Tensor val_y = gather_rows(data.labels, val_idx);

  TrainResult result;
  CnnModel model = CnnModel::initialize(init_rng);
  model.dropout_p = cfg.dropout_p;
  AdamState adam;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    const int n = static_cast<int>(train_idx.size());
    for (int i = n - 1; i > 0; --i)
      std::swap(train_idx[i], train_idx[static_cast<int>(uniform01(shuffle_rng) * (i + 1))]);
    double loss_sum = 0.0;
    int seen = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int len = std::min(cfg.batch, n - start);
      if (len < 2) break;
      const std::span<const int> idx(train_idx.data() + start, len);
      loss_sum += train_step(model, adam, gather_rows(data.inputs, idx), gather_rows(data.labels, idx), lr,
                             dropout_rng) * len;
      seen += len;
    }
    EpochRecord rec{epoch, loss_sum / seen, evaluate_loss(model, val_x, val_y), lr};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best - cfg.min_delta) {
      best = rec.val_loss;
      since_best = 0;
      result.model = model;
      result.adam = adam;
      result.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.best_epoch < 0) {
    result.model = model;
    result.adam = adam;
    result.best_epoch = static_cast<int>(result.history.size()) - 1;
  }
  return result;
}

Vec2 predict_waypoint(const InferenceModel& model, const GridEncoding& encoding, const Environment& env) {
  return denormalize_label(model.predict(encoding.channels), env);
}

Vec2 smooth(const Vec2& prev, const Vec2& raw, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorCode::kInvalidArgument, "smoothing alpha must be in [0, 1)");
  return prev * alpha + raw * (1.0 - alpha);
}

}  // namespace tsearch
