#pragma once

// Subcommand implementations behind the `dip` CLI. Each returns a process
// exit code: 0 success, 1 runtime failure, 2 invalid configuration/arguments.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "dip/bounds.hpp"
#include "dip/data.hpp"
#include "dip/errors.hpp"
#include "dip/experiment.hpp"
#include "dip/model_io.hpp"
#include "dip/predictor.hpp"

namespace dip::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kInvalidArgs = 2 };

namespace detail {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigErrors& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArgs;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidArgs;
  } catch (const ShapeError& e) {
    err << "error: incompatible inputs: " << e.what() << '\n';
    return kInvalidArgs;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

inline void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

inline void ensure_parent(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
}

inline std::string fmt(double v) { return dip::detail::format_double(v); }

}  // namespace detail

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  int n_per_class = 500;
  double noise_std = 0.05;
  double turns = 1.75;
  std::uint64_t seed = 0;
  std::string out;  // defaults to <output dir>/spirals.csv
};

inline int cmd_gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto ds = gen_spirals(a.n_per_class, a.noise_std, a.turns, a.seed);
    const fs::path path = a.out.empty() ? fs::path(default_output_dir()) / "spirals.csv" : fs::path(a.out);
    detail::ensure_parent(path);
    save_csv(ds, path.string());
    const auto counts = ds.class_counts();
    out << path.string() << '\n';
    for (std::size_t k = 0; k < counts.size(); ++k) out << "class " << ds.class_names[k] << ": " << counts[k] << '\n';
    return int{kOk};
  });
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string output_dir;              // overrides the config
  std::vector<std::uint64_t> seeds;    // overrides the config when nonempty
};

inline fs::path run_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed_" + std::to_string(seed)); }

/// Writes model.json, metrics.csv, train.csv, test.csv, eval.json and
/// manifest.json for one seed. The manifest is itself a loadable config.
inline void write_run(const ExperimentConfig& cfg, const RunOutcome& run, const fs::path& dir) {
  fs::create_directories(dir);
  save_model(run.trained.params, (dir / "model.json").string());
  write_metrics_csv(run.trained.metrics, (dir / "metrics.csv").string());
  save_csv(run.data.train, (dir / "train.csv").string());
  save_csv(run.data.test, (dir / "test.csv").string());
  detail::write_json({{"train", to_json(run.train_eval)},
                      {"test", to_json(run.test_eval)},
                      {"generalization_gap", generalization_gap(run.train_eval, run.test_eval)}},
                     dir / "eval.json");

  ExperimentConfig resolved = cfg;
  resolved.seeds = {run.seed};
  json manifest = to_json(resolved);
  json stats = nullptr;
  if (run.data.stats) {
    stats = {{"mean", std::vector<double>(run.data.stats->mean.data(), run.data.stats->mean.data() + run.data.stats->mean.size())},
             {"std", std::vector<double>(run.data.stats->std.data(), run.data.stats->std.data() + run.data.stats->std.size())}};
  }
  manifest["manifest"] = {{"seed", run.seed},
                          {"training_prior", prior_json(lambda_prior(cfg.mix.mode, cfg.mix.alpha))},
                          {"prediction_prior", prior_json(run.predictor.prior)},
                          {"layer_sizes", run.trained.params.layer_sizes},
                          {"n_train", run.data.train.size()},
                          {"n_test", run.data.test.size()},
                          {"standardize_stats", stats},
                          {"files", {"model.json", "metrics.csv", "train.csv", "test.csv", "eval.json"}}};
  detail::write_json(manifest, dir / "manifest.json");
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    auto cfg = load_config(a.config_path);
    if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
    if (cfg.output_dir.empty()) cfg.output_dir = default_output_dir();
    if (!a.seeds.empty()) cfg.seeds = a.seeds;
    if (auto errors = validate_config(cfg); !errors.empty()) throw ConfigErrors(errors);
    for (auto seed : cfg.seeds) {
      const auto run = run_single(cfg, seed);
      const auto dir = run_dir(cfg.output_dir, seed);
      write_run(cfg, run, dir);
      const auto& last = run.trained.metrics.back();
      out << dir.string() << ": train_acc=" << last.train_acc << " test_acc(" << to_string(run.predictor.mode)
          << ")=" << run.test_eval.accuracy << '\n';
    }
    return int{kOk};
  });
}

// -------------------------------------------------------------------- eval

struct PredictorArgs {
  std::string mode = "raw";
  int S_test = 500;
  double alpha = 1.0;
  std::string pool;  // CSV of partner features; defaults to train.csv next to the model
  std::uint64_t seed = 0;
};

inline PredictorConfig predictor_from_args(const PredictorArgs& a, const std::string& model_path, Eigen::Index dim) {
  PredictorConfig p;
  p.mode = predict_mode_from_string(a.mode);
  p.S_test = a.S_test;
  if (a.alpha < 0.0) throw ConfigError("--alpha must be >= 0");
  p.prior = prediction_prior(a.alpha);
  p.seed = a.seed;
  if (p.mode == PredictMode::dip) {
    fs::path pool = a.pool;
    if (pool.empty()) pool = fs::path(model_path).parent_path() / "train.csv";
    if (!fs::exists(pool)) throw ConfigError("dip mode needs --pool (no " + pool.string() + ")");
    const auto ds = load_csv(pool.string());
    if (ds.dim() != dim) throw ShapeError("partner pool dimension does not match the model input");
    p.partner_pool = std::make_shared<const Matrix>(ds.features);
  }
  p.validate();
  return p;
}

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  PredictorArgs predictor;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto model = load_model(a.model_path);
    const auto ds = load_csv(a.data_path);
    if (ds.dim() != model.input_dim())
      throw ShapeError("data has " + std::to_string(ds.dim()) + " features, model expects " +
                       std::to_string(model.input_dim()));
    if (ds.num_classes() > model.output_dim())
      throw ShapeError("data has " + std::to_string(ds.num_classes()) + " classes, model outputs " +
                       std::to_string(model.output_dim()));
    Dataset eval_ds = ds;
    if (ds.num_classes() < model.output_dim()) {
      // class ids are column indices when the file lacks some classes
      eval_ds.labels = Matrix::Zero(ds.size(), model.output_dim());
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const int id = std::stoi(ds.class_names[static_cast<std::size_t>(ds.label_of(i))]);
        if (id < 0 || id >= model.output_dim()) throw ShapeError("label id outside the model's classes");
        eval_ds.labels(i, id) = 1.0;
      }
      eval_ds.class_names.clear();
    }
    const auto pcfg = predictor_from_args(a.predictor, a.model_path, model.input_dim());
    const auto r = evaluate(model, eval_ds, pcfg);
    json j = to_json(r);
    j["mode"] = to_string(pcfg.mode);
    j["S_test"] = pcfg.S_test;
    j["prior"] = prior_json(pcfg.prior);
    j["seed"] = pcfg.seed;
    j["n"] = ds.size();
    out << j.dump(2) << '\n';
    return int{kOk};
  });
}

// ------------------------------------------------------------------- bound

struct BoundArgs {
  std::string data_path;
  double alpha = 1.0;
  std::string mode = "label_preserving";
  double rho = 1.0;
  double c_h = 1.0;
  double B = 10.0;
  double delta = 0.05;
  bool standardize = false;
  std::string out;  // optional file copy of the report
};

inline int cmd_bound(const BoundArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto mode = mix_mode_from_string(a.mode);
    const auto prior = lambda_prior(mode, a.alpha);
    auto ds = load_csv(a.data_path);
    if (a.standardize) ds = standardize(ds).first;
    const auto report = bound_report(ds.features, prior, a.rho, a.c_h, a.B, a.delta);
    json j = to_json(report);
    j["inputs"] = {{"data", a.data_path}, {"alpha", a.alpha},  {"mode", a.mode},   {"rho", a.rho},
                   {"c_h", a.c_h},        {"B", a.B},          {"delta", a.delta}, {"standardize", a.standardize}};
    if (!a.out.empty()) {
      detail::ensure_parent(a.out);
      detail::write_json(j, a.out);
    }
    out << j.dump(2) << '\n';
    return int{kOk};
  });
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string config_path;
  std::vector<double> alphas = {0.0, 1.0, 2.0};
  std::vector<int> s_values = {1};
  std::vector<std::uint64_t> seeds;  // defaults to the config's seeds
  std::string mode;                  // mixing mode for alpha > 0 cells; defaults to config / label_mixing
  std::string output_dir;            // defaults to the config's output_dir
};

struct SweepRow {
  double alpha;
  int S;
  std::string mode;
  std::uint64_t seed;
  double train_err;
  double test_err;
  double gap;
};

struct SweepCellSummary {
  double alpha;
  int S;
  std::string mode;
  int n;
  LossEstimate train_err;
  LossEstimate test_err;
  LossEstimate gap;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepCellSummary> cells;
  std::vector<std::string> failures;
};

namespace detail {

inline std::string cell_key(double alpha, int S, const std::string& mode, std::uint64_t seed) {
  return fmt(alpha) + "|" + std::to_string(S) + "|" + mode + "|" + std::to_string(seed);
}

}  // namespace detail

/// Runs every (alpha, S, seed) cell, appending each outcome to
/// sweep_progress.jsonl; completed cells found there are not rerun.
inline SweepResult run_sweep(const SweepArgs& a, std::ostream& log) {
  auto base = load_config(a.config_path);
  const fs::path root = !a.output_dir.empty() ? fs::path(a.output_dir)
                                              : fs::path(base.output_dir.empty() ? default_output_dir() : base.output_dir);
  const auto seeds = a.seeds.empty() ? base.seeds : a.seeds;
  if (a.alphas.empty() || a.s_values.empty() || seeds.empty()) throw ConfigError("sweep grid is empty");
  for (double al : a.alphas)
    if (!(al >= 0.0)) throw ConfigError("sweep alphas must be >= 0");
  MixMode mix_mode = base.mix.mode == MixMode::none ? MixMode::label_mixing : base.mix.mode;
  if (!a.mode.empty()) mix_mode = mix_mode_from_string(a.mode);
  if (mix_mode == MixMode::none) throw ConfigError("sweep --mode must be a mixing mode");

  fs::create_directories(root);
  const fs::path progress = root / "sweep_progress.jsonl";
  std::map<std::string, SweepRow> done;
  if (std::ifstream in(progress); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = json::parse(line);
        if (j.at("status") != "ok") continue;
        SweepRow r{j.at("alpha"), j.at("S"), j.at("mode"), j.at("seed"), j.at("train_err"), j.at("test_err"), j.at("gap")};
        done[detail::cell_key(r.alpha, r.S, r.mode, r.seed)] = r;
      } catch (const json::exception&) {
        // truncated trailing line from an interrupted run
      }
    }
  }
  std::ofstream progress_out(progress, std::ios::app | std::ios::binary);
  if (!progress_out) throw IoError("cannot append to " + progress.string());

  struct Cell {
    double alpha;
    int S;
    MixMode mode;
  };
  std::vector<Cell> cells;
  bool baseline_added = false;
  for (double al : a.alphas) {
    if (al == 0.0) {
      if (!baseline_added) cells.push_back({0.0, 1, MixMode::none});
      baseline_added = true;
      continue;
    }
    for (int S : a.s_values) cells.push_back({al, S, mix_mode});
  }

  SweepResult result;
  for (const auto& cell : cells) {
    const std::string mode_name = to_string(cell.mode);
    std::vector<SweepRow> cell_rows;
    for (auto seed : seeds) {
      const auto key = detail::cell_key(cell.alpha, cell.S, mode_name, seed);
      if (auto it = done.find(key); it != done.end()) {
        cell_rows.push_back(it->second);
        continue;
      }
      ExperimentConfig cfg = base;
      cfg.mix.mode = cell.mode;
      cfg.mix.alpha = cell.alpha;
      cfg.mix.S = cell.S;
      cfg.predictor.alpha = cell.alpha;
      try {
        const auto run = run_single(cfg, seed);
        const SweepRow row{cell.alpha,
                           cell.S,
                           mode_name,
                           seed,
                           run.train_eval.misclassification_rate,
                           run.test_eval.misclassification_rate,
                           generalization_gap(run.train_eval, run.test_eval)};
        progress_out << json{{"alpha", row.alpha}, {"S", row.S},         {"mode", row.mode},         {"seed", row.seed},
                             {"status", "ok"},     {"train_err", row.train_err}, {"test_err", row.test_err}, {"gap", row.gap}}
                            .dump()
                     << '\n'
                     << std::flush;
        cell_rows.push_back(row);
        log << "alpha=" << cell.alpha << " S=" << cell.S << " mode=" << mode_name << " seed=" << seed
            << " gap=" << row.gap << '\n';
      } catch (const std::exception& e) {
        progress_out << json{{"alpha", cell.alpha}, {"S", cell.S},        {"mode", mode_name},
                             {"seed", seed},        {"status", "failed"}, {"error", e.what()}}
                            .dump()
                     << '\n'
                     << std::flush;
        result.failures.push_back(detail::cell_key(cell.alpha, cell.S, mode_name, seed) + ": " + e.what());
        log << "FAILED alpha=" << cell.alpha << " S=" << cell.S << " seed=" << seed << ": " << e.what() << '\n';
      }
    }
    if (cell_rows.empty()) continue;
    std::vector<double> tr, te, gp;
    for (const auto& r : cell_rows) {
      tr.push_back(r.train_err);
      te.push_back(r.test_err);
      gp.push_back(r.gap);
      result.rows.push_back(r);
    }
    result.cells.push_back(
        {cell.alpha, cell.S, mode_name, static_cast<int>(cell_rows.size()), summarize(tr), summarize(te), summarize(gp)});
  }
  return result;
}

/// Long format: one row per run, then one aggregate row per cell (seed
/// "mean") carrying means and standard errors.
inline void write_sweep_csv(const SweepResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "alpha,S,mode,seed,train_err,test_err,gap,train_err_se,test_err_se,gap_se\n";
  std::size_t row = 0;
  for (const auto& c : r.cells) {
    for (int k = 0; k < c.n; ++k, ++row) {
      const auto& s = r.rows[row];
      out << detail::fmt(s.alpha) << ',' << s.S << ',' << s.mode << ',' << s.seed << ',' << detail::fmt(s.train_err)
          << ',' << detail::fmt(s.test_err) << ',' << detail::fmt(s.gap) << ",,,\n";
    }
    out << detail::fmt(c.alpha) << ',' << c.S << ',' << c.mode << ",mean," << detail::fmt(c.train_err.value) << ','
        << detail::fmt(c.test_err.value) << ',' << detail::fmt(c.gap.value) << ',' << detail::fmt(c.train_err.std_error)
        << ',' << detail::fmt(c.test_err.std_error) << ',' << detail::fmt(c.gap.std_error) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto result = run_sweep(a, err);
    auto base = load_config(a.config_path);
    const fs::path root = !a.output_dir.empty() ? fs::path(a.output_dir)
                                                : fs::path(base.output_dir.empty() ? default_output_dir() : base.output_dir);
    const auto path = root / "sweep.csv";
    write_sweep_csv(result, path.string());
    out << path.string() << '\n';
    for (const auto& c : result.cells)
      out << "alpha=" << c.alpha << " S=" << c.S << " mode=" << c.mode << " gap=" << c.gap.value << " (se "
          << c.gap.std_error << ", n=" << c.n << ")\n";
    if (!result.failures.empty()) {
      err << result.failures.size() << " run(s) failed\n";
      return int{kRuntimeFailure};
    }
    return int{kOk};
  });
}

// -------------------------------------------------------------------- grid

struct GridArgs {
  std::string model_path;
  double xmin = -3.0, xmax = 3.0, ymin = -3.0, ymax = 3.0;
  int resolution = 128;
  PredictorArgs predictor;
  std::string out_prefix;  // writes <prefix>.csv and <prefix>.pgm
};

inline int cmd_grid(const GridArgs& a, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto model = load_model(a.model_path);
    if (model.input_dim() != 2) throw ConfigError("grid export needs a 2-D model");
    if (!(a.xmax > a.xmin) || !(a.ymax > a.ymin)) throw ConfigError("grid box must have xmax > xmin and ymax > ymin");
    const auto pcfg = predictor_from_args(a.predictor, a.model_path, 2);
    const auto grid = decision_grid(model, pcfg, {a.xmin, a.xmax}, {a.ymin, a.ymax}, a.resolution);
    const std::string prefix =
        a.out_prefix.empty() ? (fs::path(default_output_dir()) / ("grid_" + a.predictor.mode)).string() : a.out_prefix;
    detail::ensure_parent(prefix + ".csv");
    write_grid_csv(grid, prefix + ".csv");
    write_grid_pgm(grid, prefix + ".pgm");
    out << prefix << ".csv\n" << prefix << ".pgm\n";
    return int{kOk};
  });
}

}  // namespace dip::cli
