#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tsearch/cnn.hpp"
#include "tsearch/encoding.hpp"

namespace tsearch {

/// Behavior-cloning samples. `raw_density` holds the unsmoothed per-cell
/// intensity of each sample so the no-smoothing ablation can be rebuilt
/// from the same recording.
struct Dataset {
  Tensor inputs;  ///< (S, 4, n_g, n_g)
  Tensor labels;  ///< (S, 2), normalized waypoints
  std::vector<double> raw_density;  ///< S * n_g * n_g, may be empty
  std::map<std::string, std::string> meta;

  int size() const { return inputs.shape.empty() ? 0 : inputs.dim(0); }
};

Dataset make_dataset(const std::vector<GridEncoding>& samples,
                     const std::vector<std::vector<double>>& raw_density);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Copy of `d` with every sample's channels rewritten for `variant`.
Dataset with_variant(const Dataset& d, ChannelVariant variant, const GridSpec& grid);

struct TrainConfig {
  double lr0 = 1e-4;
  int decay_period = 30;
  double decay_factor = 0.1;
  int batch = 64;
  int max_epochs = 100;
  double val_split = 0.15;
  int patience = 7;
  double min_delta = 1e-4;
  double dropout_p = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Piecewise-constant schedule lr0 * decay_factor^floor(epoch / decay_period).
double learning_rate(const TrainConfig& cfg, int epoch);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  CnnModel model;  ///< best-validation snapshot
  AdamState adam;  ///< optimizer state of the snapshot
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  bool stopped_early = false;
};

/// Gathers rows `idx` of (S, ...) tensor `src` into a new (|idx|, ...) tensor.
Tensor gather_rows(const Tensor& src, std::span<const int> idx);

/// One Adam step on a mini-batch. Returns the batch loss before the step.
double train_step(CnnModel& model, AdamState& adam, const Tensor& inputs, const Tensor& labels,
                  double lr, Rng& rng);

/// Infer-mode MSE over all rows, evaluated in chunks.
double evaluate_loss(const CnnModel& model, const Tensor& inputs, const Tensor& labels);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with a seeded up-front validation split and early
/// stopping. Throws kInsufficientData when fewer than 2 * batch samples.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Denormalized network output for one encoding.
Vec2 predict_waypoint(const InferenceModel& model, const GridEncoding& encoding, const Environment& env);

/// Exponential averaging alpha * prev + (1 - alpha) * raw.
Vec2 smooth(const Vec2& prev, const Vec2& raw, double alpha);

}  // namespace tsearch
