#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tsearch/cnn.hpp"

namespace tsearch::testing {

struct GradientCheckResult {
  int checked = 0;
  int skipped_kinks = 0;
  double worst_rel = 0.0;
  std::string worst_param;
};

// Sign pattern of every piecewise-linear point plus the pooling choices.
inline std::vector<std::int32_t> kink_signature(const ForwardCache& c) {
  std::vector<std::int32_t> sig(c.pool_argmax);
  for (const Tensor* t : {&c.y1, &c.y2, &c.h1})
    for (double v : t->data) sig.push_back(v > 0.0);
  return sig;
}

// Central differences on randomly sampled parameters of every array. Probes
// whose +-h perturbation moves any activation across a kink are not
// differentiable there and are resampled.
inline GradientCheckResult gradient_check(std::uint64_t seed, int batch, int per_array, double h = 1e-4) {
  Rng rng(seed);
  CnnModel m = CnnModel::initialize(rng);
  m.dropout_p = 0.0;
  for (double& v : m.params.bn1_gamma.data) v = uniform(rng, 0.5, 1.5);
  for (double& v : m.params.bn2_gamma.data) v = uniform(rng, 0.5, 1.5);
  for (double& v : m.params.bn1_beta.data) v = uniform(rng, -0.2, 0.2);
  for (double& v : m.params.bn2_beta.data) v = uniform(rng, -0.2, 0.2);
  Tensor x({batch, arch::kInChannels, arch::kGrid, arch::kGrid});
  for (double& v : x.data) v = standard_normal(rng);
  Tensor y({batch, 2});
  for (double& v : y.data) v = uniform01(rng);

  ForwardCache base;
  Rng frng(0);
  forward(m, x, Mode::kTrain, frng, &base);
  const CnnParams grads = backward(m, base, y);
  const auto base_sig = kink_signature(base);

  auto probe = [&](ForwardCache& c) {
    Rng r(0);
    return mse_loss(forward(m, x, Mode::kTrain, r, &c), y);
  };

  GradientCheckResult res;
  auto params = m.params.named();
  auto gnamed = grads.named();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t].second;
    const Tensor& g = *gnamed[t].second;
    const int want = std::min<int>(per_array, static_cast<int>(p.size()));
    int done = 0;
    for (int attempt = 0; done < want && attempt < 20 * want; ++attempt) {
      const std::size_t i = static_cast<int>(p.size()) <= per_array
                                ? static_cast<std::size_t>(attempt)
                                : static_cast<std::size_t>(uniform01(rng) * p.size());
      if (i >= p.size()) break;
      const double orig = p.data[i];
      ForwardCache cp, cm;
      p.data[i] = orig + h;
      const double lp = probe(cp);
      p.data[i] = orig - h;
      const double lm = probe(cm);
      p.data[i] = orig;
      if (kink_signature(cp) != base_sig || kink_signature(cm) != base_sig) {
        ++res.skipped_kinks;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * h);
      const double an = g.data[i];
      const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_param = params[t].first + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
      ++done;
    }
  }
  return res;
}

}  // namespace tsearch::testing
