#pragma once

// Experiment configuration (a single JSON document), validation, and the
// single-seed train/evaluate pipeline shared by the train and sweep commands.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dip/bounds.hpp"
#include "dip/data.hpp"
#include "dip/errors.hpp"
#include "dip/mixing.hpp"
#include "dip/model_io.hpp"
#include "dip/objective.hpp"
#include "dip/predictor.hpp"
#include "dip/tensor_nn.hpp"

namespace dip {

/// Validation failures, all of them at once.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::string> problems)
      : ConfigError(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "invalid configuration:";
    for (const auto& e : p) s += "\n  - " + e;
    return s;
  }
  std::vector<std::string> problems_;
};

struct DataSpec {
  std::string source = "spirals";  // spirals | csv
  int n_per_class = 500;
  double noise_std = 0.05;
  double turns = 1.75;
  std::optional<std::uint64_t> seed;  // generator seed; defaults to the run seed
  std::string csv_path;
  std::string test_csv_path;  // optional explicit test set for csv sources
  double test_fraction = 0.5;
  bool standardize = true;
};

struct ModelSpec {
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::relu;
};

struct PredictorSpec {
  PredictMode mode = PredictMode::dip;
  int S_test = 500;
  std::optional<double> alpha;  // defaults to the training alpha
  std::string partner_pool = "train";
  std::optional<std::uint64_t> seed;
};

struct ExperimentConfig {
  DataSpec data;
  ModelSpec model;
  MixConfig mix;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::vector<ScheduleEntry> schedule = {{100, 0.1}, {150, 0.1}};
  int epochs = 200;
  int batch_size = 64;
  PredictorSpec predictor;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir;

  double prediction_alpha() const {
    if (predictor.alpha) return *predictor.alpha;
    return mix.mode == MixMode::none ? 0.0 : mix.alpha;
  }

  OptimState optim_state() const {
    OptimState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    s.schedule = schedule;
    return s;
  }
};

inline std::string default_output_dir() {
  if (const char* env = std::getenv("DIP_OUTPUT_DIR"); env && *env) return env;
  return "runs";
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json data = {{"source", c.data.source},
               {"n_per_class", c.data.n_per_class},
               {"noise_std", c.data.noise_std},
               {"turns", c.data.turns},
               {"seed", c.data.seed ? json(*c.data.seed) : json(nullptr)},
               {"csv_path", c.data.csv_path},
               {"test_csv_path", c.data.test_csv_path},
               {"test_fraction", c.data.test_fraction},
               {"standardize", c.data.standardize}};
  json schedule = json::array();
  for (const auto& s : c.schedule) schedule.push_back({s.epoch, s.multiplier});
  return {{"data", data},
          {"model", {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}}},
          {"mix",
           {{"mode", to_string(c.mix.mode)},
            {"alpha", c.mix.alpha},
            {"S", c.mix.S},
            {"partner", to_string(c.mix.partner)}}},
          {"optim", {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"schedule", schedule}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"predictor",
           {{"mode", to_string(c.predictor.mode)},
            {"S_test", c.predictor.S_test},
            {"alpha", c.predictor.alpha ? json(*c.predictor.alpha) : json(nullptr)},
            {"partner_pool", c.predictor.partner_pool},
            {"seed", c.predictor.seed ? json(*c.predictor.seed) : json(nullptr)}}},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir}};
}

namespace detail {

/// Reads known keys from a JSON object, recording type errors and unknown keys.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path_ + ": expected an object");
  }

  ~ConfigReader() = default;

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key) || obj_.at(key).is_null()) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where(key) + ": wrong type");
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key) || obj_.at(key).is_null()) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where(key) + ": wrong type");
    }
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key) || obj_.at(key).is_null()) return nullptr;
    return &obj_.at(key);
  }

  void ignore(const std::string& key) { seen_.insert(key); }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) errors_.push_back(where(k) + ": unknown key");
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Parses a config (or a run manifest, whose "manifest" block is ignored).
/// Type errors and unknown keys are collected into `errors`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
  ExperimentConfig c;
  detail::ConfigReader top(j, "", errors);
  top.ignore("manifest");
  if (const auto* d = top.child("data")) {
    detail::ConfigReader r(*d, "data", errors);
    r.get("source", c.data.source);
    r.get("n_per_class", c.data.n_per_class);
    r.get("noise_std", c.data.noise_std);
    r.get("turns", c.data.turns);
    r.get_optional("seed", c.data.seed);
    r.get("csv_path", c.data.csv_path);
    r.get("test_csv_path", c.data.test_csv_path);
    r.get("test_fraction", c.data.test_fraction);
    r.get("standardize", c.data.standardize);
    r.finish();
  }
  if (const auto* m = top.child("model")) {
    detail::ConfigReader r(*m, "model", errors);
    r.get("hidden", c.model.hidden);
    std::string act = to_string(c.model.activation);
    r.get("activation", act);
    try {
      c.model.activation = activation_from_string(act);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("model.activation: ") + e.what());
    }
    r.finish();
  }
  if (const auto* m = top.child("mix")) {
    detail::ConfigReader r(*m, "mix", errors);
    std::string mode = to_string(c.mix.mode), partner = to_string(c.mix.partner);
    r.get("mode", mode);
    r.get("alpha", c.mix.alpha);
    r.get("S", c.mix.S);
    r.get("partner", partner);
    try {
      c.mix.mode = mix_mode_from_string(mode);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("mix.mode: ") + e.what());
    }
    try {
      c.mix.partner = partner_strategy_from_string(partner);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("mix.partner: ") + e.what());
    }
    r.finish();
  }
  if (const auto* o = top.child("optim")) {
    detail::ConfigReader r(*o, "optim", errors);
    r.get("learning_rate", c.learning_rate);
    r.get("momentum", c.momentum);
    if (const auto* s = r.child("schedule")) {
      c.schedule.clear();
      if (!s->is_array()) {
        errors.push_back("optim.schedule: expected an array of [epoch, multiplier] pairs");
      } else {
        for (const auto& e : *s) {
          if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
            errors.push_back("optim.schedule: each entry must be [epoch, multiplier]");
            continue;
          }
          c.schedule.push_back({e[0].get<int>(), e[1].get<double>()});
        }
      }
    }
    r.finish();
  }
  top.get("epochs", c.epochs);
  top.get("batch_size", c.batch_size);
  if (const auto* p = top.child("predictor")) {
    detail::ConfigReader r(*p, "predictor", errors);
    std::string mode = to_string(c.predictor.mode);
    r.get("mode", mode);
    try {
      c.predictor.mode = predict_mode_from_string(mode);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("predictor.mode: ") + e.what());
    }
    r.get("S_test", c.predictor.S_test);
    r.get_optional("alpha", c.predictor.alpha);
    r.get("partner_pool", c.predictor.partner_pool);
    r.get_optional("seed", c.predictor.seed);
    r.finish();
  }
  top.get("seeds", c.seeds);
  top.get("output_dir", c.output_dir);
  top.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigErrors({"config " + path + " is not valid JSON: " + e.what()});
  }
  std::vector<std::string> errors;
  auto cfg = config_from_json(j, errors);
  if (!errors.empty()) throw ConfigErrors(errors);
  return cfg;
}

/// Input dimension and class count implied by the data section, read from the
/// CSV header and labels when the source is a file.
struct DataShape {
  Eigen::Index dim = 0;
  Eigen::Index classes = 0;
};

/// Every cross-field problem; empty when the config is runnable.
inline std::vector<std::string> validate_config(const ExperimentConfig& c, DataShape* shape_out = nullptr) {
  std::vector<std::string> errors;
  const auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  DataShape shape;
  if (c.data.source == "spirals") {
    check(c.data.n_per_class >= 1, "data.n_per_class must be >= 1");
    check(c.data.noise_std >= 0.0, "data.noise_std must be >= 0");
    check(c.data.turns > 0.0, "data.turns must be > 0");
    shape = {2, 2};
  } else if (c.data.source == "csv") {
    if (c.data.csv_path.empty()) {
      errors.push_back("data.csv_path is required for source csv");
    } else {
      try {
        const auto ds = load_csv(c.data.csv_path);
        shape = {ds.dim(), ds.num_classes()};
      } catch (const Error& e) {
        errors.push_back(std::string("data.csv_path: ") + e.what());
      }
    }
  } else {
    errors.push_back("data.source must be 'spirals' or 'csv'");
  }
  if (c.data.test_csv_path.empty())
    check(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0, "data.test_fraction must be in (0, 1)");
  for (int h : c.model.hidden) check(h >= 1, "model.hidden sizes must be >= 1");
  try {
    c.mix.validate();
  } catch (const ConfigError& e) {
    errors.push_back(std::string("mix: ") + e.what());
  }
  try {
    c.optim_state().validate();
  } catch (const ConfigError& e) {
    errors.push_back(std::string("optim: ") + e.what());
  }
  check(c.epochs >= 1, "epochs must be >= 1");
  check(c.batch_size >= 1, "batch_size must be >= 1");
  if (c.data.source == "spirals" && c.data.test_csv_path.empty() && c.data.n_per_class >= 1 &&
      c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0) {
    const auto n_train = 2 * (c.data.n_per_class - std::llround(c.data.n_per_class * c.data.test_fraction));
    check(c.batch_size <= n_train, "batch_size exceeds the training set size");
  }
  check(c.predictor.S_test >= 1, "predictor.S_test must be >= 1");
  check(c.predictor.partner_pool == "train" || c.predictor.partner_pool == "test",
        "predictor.partner_pool must be 'train' or 'test'");
  check(c.prediction_alpha() >= 0.0, "predictor.alpha must be >= 0");
  check(!c.seeds.empty(), "seeds must list at least one seed");
  if (shape_out) *shape_out = shape;
  return errors;
}

inline std::vector<int> layer_sizes_for(const ExperimentConfig& c, const DataShape& shape) {
  std::vector<int> sizes{static_cast<int>(shape.dim)};
  sizes.insert(sizes.end(), c.model.hidden.begin(), c.model.hidden.end());
  sizes.push_back(static_cast<int>(shape.classes));
  return sizes;
}

/// Train and test sets as the model sees them (standardized when enabled).
struct PreparedData {
  Dataset train;
  Dataset test;
  std::optional<StandardizeStats> stats;
};

inline PreparedData prepare_data(const ExperimentConfig& c, std::uint64_t seed) {
  Dataset full;
  const std::uint64_t data_seed = c.data.seed.value_or(seed);
  PreparedData out;
  if (c.data.source == "spirals") {
    full = gen_spirals(c.data.n_per_class, c.data.noise_std, c.data.turns, data_seed);
  } else {
    full = load_csv(c.data.csv_path);
  }
  if (!c.data.test_csv_path.empty()) {
    out.train = full;
    out.test = load_csv(c.data.test_csv_path);
    if (out.test.dim() != out.train.dim() || out.test.num_classes() != out.train.num_classes())
      throw DataError("test CSV does not match the training CSV shape");
  } else {
    std::tie(out.train, out.test) = split(full, c.data.test_fraction, RngStream(data_seed).split(17).next_u64());
  }
  if (c.data.standardize) {
    auto [tr, stats] = standardize(out.train);
    out.test = apply_stats(out.test, stats);
    out.train = std::move(tr);
    out.stats = stats;
  }
  return out;
}

inline PredictorConfig predictor_for(const ExperimentConfig& c, const PreparedData& data, std::uint64_t seed) {
  PredictorConfig p;
  p.mode = c.predictor.mode;
  p.S_test = c.predictor.S_test;
  p.prior = prediction_prior(c.prediction_alpha());
  p.partner_pool =
      std::make_shared<const Matrix>(c.predictor.partner_pool == "test" ? data.test.features : data.train.features);
  p.seed = c.predictor.seed.value_or(seed);
  return p;
}

struct RunOutcome {
  std::uint64_t seed = 0;
  PreparedData data;
  TrainResult trained;
  PredictorConfig predictor;
  EvalResult train_eval{};
  EvalResult test_eval{};
};

/// Full pipeline for one seed: data, init, training, evaluation.
inline RunOutcome run_single(const ExperimentConfig& c, std::uint64_t seed) {
  DataShape shape;
  if (auto errors = validate_config(c, &shape); !errors.empty()) throw ConfigErrors(errors);
  RunOutcome out;
  out.seed = seed;
  out.data = prepare_data(c, seed);
  if (c.batch_size > out.data.train.size()) throw ConfigErrors({"batch_size exceeds the training set size"});
  auto params = mlp_init(layer_sizes_for(c, shape), c.model.activation, seed);
  auto optim = c.optim_state();
  RngStream rng = RngStream(seed).split(1);
  out.trained = train(std::move(params), out.data.train, c.mix, optim, c.epochs, c.batch_size, rng);
  out.predictor = predictor_for(c, out.data, seed);
  out.train_eval = evaluate(out.trained.params, out.data.train, out.predictor);
  out.test_eval = evaluate(out.trained.params, out.data.test, out.predictor);
  return out;
}

inline nlohmann::json to_json(const EvalResult& e) {
  return {{"accuracy", e.accuracy}, {"misclassification_rate", e.misclassification_rate}, {"mean_loss", e.mean_loss}};
}

inline nlohmann::json prior_json(const BetaParams& p) {
  if (p.degenerate) return {{"kind", "point_mass_at_one"}};
  return {{"kind", "beta"}, {"a", p.a}, {"b", p.b}};
}

}  // namespace dip
