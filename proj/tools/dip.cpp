#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dip/commands.hpp"

namespace {

void add_predictor_flags(CLI::App* cmd, dip::cli::PredictorArgs& p) {
  cmd->add_option("--mode", p.mode, "Prediction mode")->check(CLI::IsMember({"raw", "dip"}))->capture_default_str();
  cmd->add_option("--s-test", p.S_test, "Monte-Carlo draws per prediction (dip mode)")->capture_default_str();
  cmd->add_option("--alpha", p.alpha, "Prediction prior Beta(alpha+1, alpha); 0 disables mixing")
      ->capture_default_str();
  cmd->add_option("--pool", p.pool, "CSV of partner features (default: train.csv next to the model)");
  cmd->add_option("--seed", p.seed, "Seed for Monte-Carlo draws")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data interpolating prediction: mixing-marginalized classifiers on synthetic data"};
  app.require_subcommand(1);

  dip::cli::GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a two-spirals dataset CSV");
  gen_cmd->add_option("--n", gen.n_per_class, "Points per class")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise_std, "Gaussian noise std")->capture_default_str();
  gen_cmd->add_option("--turns", gen.turns, "Spiral turns")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV (default: $DIP_OUTPUT_DIR/spirals.csv)");

  dip::cli::TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train per a JSON config (or a run manifest)");
  train_cmd->add_option("config", tr.config_path, "Config JSON")->required();
  train_cmd->add_option("--output-dir", tr.output_dir, "Override the config's output_dir");
  train_cmd->add_option("--seeds", tr.seeds, "Override the config's seeds")->delimiter(',');

  dip::cli::EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset CSV; prints JSON");
  eval_cmd->add_option("--model", ev.model_path, "Model JSON")->required();
  eval_cmd->add_option("--data", ev.data_path, "Dataset CSV (model-input features)")->required();
  add_predictor_flags(eval_cmd, ev.predictor);

  dip::cli::BoundArgs bd;
  auto* bound_cmd = app.add_subcommand("bound", "Rademacher bound report for a dataset; prints JSON");
  bound_cmd->add_option("--data", bd.data_path, "Dataset CSV")->required();
  bound_cmd->add_option("--alpha", bd.alpha, "Mixing hyperparameter")->capture_default_str();
  bound_cmd->add_option("--mode", bd.mode, "Mixing mode")
      ->check(CLI::IsMember({"none", "label_mixing", "label_preserving"}))
      ->capture_default_str();
  bound_cmd->add_option("--rho", bd.rho, "Lipschitz constant of the loss")->capture_default_str();
  bound_cmd->add_option("--c-h", bd.c_h, "Complexity constant of the base class")->capture_default_str();
  bound_cmd->add_option("--B", bd.B, "Loss bound")->capture_default_str();
  bound_cmd->add_option("--delta", bd.delta, "Confidence parameter")->capture_default_str();
  bound_cmd->add_flag("--standardize", bd.standardize, "Standardize features first");
  bound_cmd->add_option("--out", bd.out, "Also write the report to this file");

  dip::cli::SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Generalization-gap sweep over alpha and S");
  sweep_cmd->add_option("config", sw.config_path, "Base config JSON")->required();
  sweep_cmd->add_option("--alphas", sw.alphas, "Alpha grid (0 = no mixing)")->delimiter(',');
  sweep_cmd->add_option("--s-values", sw.s_values, "S grid")->delimiter(',');
  sweep_cmd->add_option("--seeds", sw.seeds, "Seeds (default: config seeds)")->delimiter(',');
  sweep_cmd->add_option("--mode", sw.mode, "Mixing mode for alpha > 0 cells")
      ->check(CLI::IsMember({"label_mixing", "label_preserving"}));
  sweep_cmd->add_option("--output-dir", sw.output_dir, "Override the config's output_dir");

  dip::cli::GridArgs gr;
  auto* grid_cmd = app.add_subcommand("grid", "Export a decision grid as CSV and PGM");
  grid_cmd->add_option("--model", gr.model_path, "Model JSON")->required();
  grid_cmd->add_option("--xmin", gr.xmin)->capture_default_str();
  grid_cmd->add_option("--xmax", gr.xmax)->capture_default_str();
  grid_cmd->add_option("--ymin", gr.ymin)->capture_default_str();
  grid_cmd->add_option("--ymax", gr.ymax)->capture_default_str();
  grid_cmd->add_option("--res", gr.resolution, "Cells per axis")->capture_default_str();
  grid_cmd->add_option("--out-prefix", gr.out_prefix, "Writes <prefix>.csv and <prefix>.pgm");
  add_predictor_flags(grid_cmd, gr.predictor);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dip::cli::kInvalidArgs;
  }

  if (*gen_cmd) return dip::cli::cmd_gen_data(gen, std::cout, std::cerr);
  if (*train_cmd) return dip::cli::cmd_train(tr, std::cout, std::cerr);
  if (*eval_cmd) return dip::cli::cmd_eval(ev, std::cout, std::cerr);
  if (*bound_cmd) return dip::cli::cmd_bound(bd, std::cout, std::cerr);
  if (*sweep_cmd) return dip::cli::cmd_sweep(sw, std::cout, std::cerr);
  if (*grid_cmd) return dip::cli::cmd_grid(gr, std::cout, std::cerr);
  return dip::cli::kInvalidArgs;
}
