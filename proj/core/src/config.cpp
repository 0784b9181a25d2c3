#include "tsearch/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tsearch/error.hpp"

namespace tsearch {
namespace {

using nlohmann::ordered_json;

// Binds JSON keys to struct fields in both directions so reading and writing
// share one schema.
class Binder {
 public:
  Binder(ordered_json* out, const ordered_json* in, std::string path)
      : out_(out), in_(in), path_(std::move(path)) {
    if (in_ && !in_->is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  template <typename T>
  void field(const char* key, T& value) {
    seen_.push_back(key);
    if (out_) {
      (*out_)[key] = value;
      return;
    }
    auto it = in_->find(key);
    if (it == in_->end()) return;
    read(*it, value, join(key));
  }

  void field(const char* key, Vec2& value) {
    seen_.push_back(key);
    if (out_) {
      (*out_)[key] = ordered_json::array({value.x, value.y});
      return;
    }
    auto it = in_->find(key);
    if (it == in_->end()) return;
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      fail(join(key), "expected [x, y]");
    value = {(*it)[0].get<double>(), (*it)[1].get<double>()};
  }

  template <typename F>
  void section(const char* key, F&& bind) {
    seen_.push_back(key);
    if (out_) {
      ordered_json sub = ordered_json::object();
      Binder b(&sub, nullptr, join(key));
      bind(b);
      (*out_)[key] = std::move(sub);
      return;
    }
    auto it = in_->find(key);
    if (it == in_->end()) return;
    Binder b(nullptr, &*it, join(key));
    bind(b);
    b.reject_unknown();
  }

  void reject_unknown() const {
    if (!in_) return;
    for (auto it = in_->begin(); it != in_->end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        fail(join(it.key().c_str()), "unknown key");
  }

 private:
  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::kConfig, "config '" + where + "': " + what);
  }
  std::string join(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  static void read(const ordered_json& j, double& v, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    v = j.get<double>();
  }
  static void read(const ordered_json& j, int& v, const std::string& where) {
    if (!j.is_number_integer()) fail(where, "expected an integer");
    v = j.get<int>();
  }
  static void read(const ordered_json& j, std::uint64_t& v, const std::string& where) {
    if (!j.is_number_unsigned()) fail(where, "expected a non-negative integer");
    v = j.get<std::uint64_t>();
  }
  static void read(const ordered_json& j, bool& v, const std::string& where) {
    if (!j.is_boolean()) fail(where, "expected true or false");
    v = j.get<bool>();
  }
  static void read(const ordered_json& j, std::string& v, const std::string& where) {
    if (!j.is_string()) fail(where, "expected a string");
    v = j.get<std::string>();
  }

  ordered_json* out_;
  const ordered_json* in_;
  std::string path_;
  std::vector<std::string> seen_;
};

void bind(Binder& b, RunConfig& c) {
  b.field("seed", c.seed);
  b.field("out_dir", c.out_dir);
  b.field("jobs", c.jobs);
  b.section("env", [&](Binder& s) {
    s.field("width", c.env.width);
    s.field("height", c.env.height);
  });
  b.section("sensor", [&](Binder& s) {
    s.field("gain", c.sensor.gain);
    s.field("fov_x", c.sensor.fov_x);
    s.field("fov_y", c.sensor.fov_y);
    s.field("sigma_range", c.sensor.sigma_range);
    s.field("sigma_bearing", c.sensor.sigma_bearing);
  });
  b.section("filter", [&](Binder& s) {
    s.field("survival_prob", c.filter.survival_prob);
    s.field("birth_mass", c.filter.birth.total_mass);
    s.field("birth_particles", c.filter.birth.n_particles);
    s.field("cap", c.filter.cap);
    s.field("initial_particles", c.filter.initial_particles);
    s.field("initial_mass", c.filter.initial_mass);
    s.field("kmeans_restarts", c.filter.kmeans.restarts);
    s.field("kmeans_iterations", c.filter.kmeans.max_iterations);
    s.field("kmeans_tolerance", c.filter.kmeans.tolerance);
    s.field("k_max", c.filter.k_max);
    s.field("confirm_mass", c.filter.confirm_mass);
    s.field("confirm_spread", c.filter.confirm_spread);
    s.field("core_radius", c.filter.core_radius);
    s.field("confirm_min_pd", c.filter.confirm_min_pd);
    s.field("jitter_sigma", c.filter.jitter_sigma);
    s.field("gate_radius", c.filter.gate_radius);
    s.field("gate_sigma", c.filter.gate_sigma);
    s.field("delete_promoted_particles", c.filter.delete_promoted_particles);
  });
  b.section("asi_filter", [&](Binder& s) {
    s.field("survival_prob", c.asi_filter.survival_prob);
    s.field("birth_mass", c.asi_filter.birth_mass);
    s.field("birth_particles", c.asi_filter.birth_particles);
    s.field("jitter_sigma", c.asi_filter.jitter_sigma);
    s.field("confirm_min_pd", c.asi_filter.confirm_min_pd);
  });
  b.section("asi", [&](Binder& s) {
    s.field("beta", c.asi.beta);
    s.field("measurement_period", c.asi.measurement_period);
  });
  b.section("controller", [&](Binder& s) {
    s.field("kp", c.controller.kp);
    s.field("kd", c.controller.kd);
    s.field("v_max", c.controller.v_max);
    s.field("u_max", c.controller.u_max);
    s.field("ts", c.controller.ts);
    s.field("arrival_radius", c.controller.arrival_radius);
    s.field("max_steps", c.controller.max_steps);
  });
  b.section("encoding", [&](Binder& s) {
    s.field("n_g", c.encoding.grid.n_g);
    s.field("cell_size", c.encoding.grid.cell_size);
    s.field("sigma_cells", c.encoding.sigma_cells);
    s.field("boundary_thickness", c.encoding.boundary_thickness);
  });
  b.section("training", [&](Binder& s) {
    s.field("lr0", c.training.lr0);
    s.field("decay_period", c.training.decay_period);
    s.field("decay_factor", c.training.decay_factor);
    s.field("batch", c.training.batch);
    s.field("max_epochs", c.training.max_epochs);
    s.field("val_split", c.training.val_split);
    s.field("patience", c.training.patience);
    s.field("min_delta", c.training.min_delta);
    s.field("dropout_p", c.training.dropout_p);
    s.field("seed", c.training.seed);
  });
  b.section("experiment", [&](Binder& s) {
    s.field("as_steps", c.experiment.as_steps);
    s.field("asi_decisions", c.experiment.asi_decisions);
    s.field("trials", c.experiment.trials);
    s.field("n_targets", c.experiment.n_targets);
    s.field("n_clusters", c.experiment.clusters.n_clusters);
    s.field("per_cluster", c.experiment.clusters.per_cluster);
    s.field("cluster_min_separation", c.experiment.clusters.min_separation);
    s.field("cluster_margin", c.experiment.clusters.margin);
    s.field("cluster_spread", c.experiment.clusters.spread);
    s.field("start", c.experiment.start);
    s.field("as_dirs", c.experiment.as_dirs);
    s.field("as_radius", c.experiment.as_radius);
    s.field("asi_spacing", c.experiment.asi_spacing);
    s.field("match_radius", c.experiment.match_radius);
    s.field("smoothing_alpha", c.experiment.smoothing_alpha);
  });
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, what); };
  if (!(env.width > 0.0 && env.height > 0.0)) fail("env: width and height must be positive");
  if (jobs < 1) fail("jobs must be >= 1");
  sensor.validate();
  filter.validate();
  if (!(asi_filter.survival_prob > 0.0 && asi_filter.survival_prob <= 1.0))
    fail("asi_filter.survival_prob must be in (0, 1]");
  if (!(asi_filter.birth_mass >= 0.0)) fail("asi_filter.birth_mass must be >= 0");
  if (!(asi_filter.confirm_min_pd >= 0.0 && asi_filter.confirm_min_pd <= 1.0))
    fail("asi_filter.confirm_min_pd must be in [0, 1]");
  if (asi_filter.birth_mass > 0.0 && asi_filter.birth_particles < 1)
    fail("asi_filter.birth_particles must be >= 1 when birth_mass > 0");
  if (!(asi.beta >= 0.0)) fail("asi.beta must be >= 0");
  if (asi.measurement_period < 1) fail("asi.measurement_period must be >= 1");
  controller.validate();
  encoding.validate();
  if (std::abs(encoding.grid.n_g * encoding.grid.cell_size - env.width) > 1e-9 ||
      std::abs(encoding.grid.n_g * encoding.grid.cell_size - env.height) > 1e-9)
    fail("encoding: n_g * cell_size must equal the environment size");
  if (encoding.grid.n_g != arch::kGrid) fail("encoding.n_g must be 26 for the fixed network");
  training.validate();
  const ExperimentConfig& e = experiment;
  if (e.as_steps < 1 || e.asi_decisions < 1) fail("experiment: step counts must be >= 1");
  if (e.trials < 1) fail("experiment.trials must be >= 1");
  if (e.n_targets < 0) fail("experiment.n_targets must be >= 0");
  if (e.clusters.n_clusters < 1 || e.clusters.per_cluster < 1) fail("experiment: cluster counts must be >= 1");
  if (!(e.clusters.min_separation > 0.0 && e.clusters.margin > 0.0 && e.clusters.spread > 0.0))
    fail("experiment: cluster geometry must be positive");
  if (!env.contains(e.start)) fail("experiment.start must lie inside the environment");
  if (e.as_dirs < 1) fail("experiment.as_dirs must be >= 1");
  if (!(e.as_radius > 0.0)) fail("experiment.as_radius must be positive");
  if (!(e.asi_spacing > 0.0)) fail("experiment.asi_spacing must be positive");
  if (!(e.match_radius > 0.0)) fail("experiment.match_radius must be positive");
  if (!(e.smoothing_alpha >= 0.0 && e.smoothing_alpha < 1.0)) fail("experiment.smoothing_alpha must be in [0, 1)");
}

RunConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Binder b(nullptr, &j, "");
  bind(b, cfg);
  b.reject_unknown();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  RunConfig copy = cfg;
  Binder b(&j, nullptr, "");
  bind(b, copy);
  return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tsearch
