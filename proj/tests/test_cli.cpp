#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dip/commands.hpp"

using namespace dip;
using namespace dip::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "dip_cli_test" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Small, quick config in the config-file schema.
  json small_config() const {
    return {{"data", {{"n_per_class", 40}, {"noise_std", 0.05}}},
            {"model", {{"hidden", {16}}}},
            {"mix", {{"mode", "label_mixing"}, {"alpha", 1.0}}},
            {"optim", {{"learning_rate", 0.1}, {"momentum", 0.9}, {"schedule", json::array()}}},
            {"epochs", 5},
            {"batch_size", 16},
            {"predictor", {{"mode", "dip"}, {"S_test", 20}}},
            {"seeds", {0}},
            {"output_dir", (dir_ / "runs").string()}};
  }

  fs::path write_config(const json& j, const std::string& name = "config.json") const {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, GenDataDefaultsAndDeterminism) {
  GenDataArgs a;
  a.out = (dir_ / "a.csv").string();
  ASSERT_EQ(cmd_gen_data(a, out_, err_), kOk);
  EXPECT_EQ(count_lines(a.out), 1001u);
  GenDataArgs b = a;
  b.out = (dir_ / "b.csv").string();
  ASSERT_EQ(cmd_gen_data(b, out_, err_), kOk);
  EXPECT_EQ(slurp(a.out), slurp(b.out));

  GenDataArgs small;
  small.n_per_class = 10;
  small.out = (dir_ / "nested" / "small.csv").string();
  ASSERT_EQ(cmd_gen_data(small, out_, err_), kOk);
  EXPECT_EQ(load_csv(small.out).size(), 20);

  GenDataArgs bad;
  bad.n_per_class = 0;
  bad.out = (dir_ / "bad.csv").string();
  EXPECT_EQ(cmd_gen_data(bad, out_, err_), kInvalidArgs);
}

TEST_F(CliTest, TrainWritesRunDirectory) {
  TrainArgs a;
  a.config_path = write_config(small_config()).string();
  ASSERT_EQ(cmd_train(a, out_, err_), kOk) << err_.str();
  const auto run = dir_ / "runs" / "seed_0";
  for (const char* f : {"model.json", "metrics.csv", "train.csv", "test.csv", "eval.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_EQ(count_lines(run / "metrics.csv"), 6u);
  const auto manifest = json::parse(slurp(run / "manifest.json"));
  EXPECT_EQ(manifest["manifest"]["training_prior"]["a"], 1.0);
  EXPECT_EQ(manifest["manifest"]["training_prior"]["b"], 1.0);
  EXPECT_EQ(manifest["manifest"]["prediction_prior"]["a"], 2.0);
  EXPECT_EQ(manifest["manifest"]["layer_sizes"], json({2, 16, 2}));
  const auto eval = json::parse(slurp(run / "eval.json"));
  EXPECT_NEAR(eval["generalization_gap"].get<double>(),
              eval["test"]["misclassification_rate"].get<double>() - eval["train"]["misclassification_rate"].get<double>(),
              1e-15);
}

TEST_F(CliTest, TrainFromManifestReproducesMetrics) {
  TrainArgs a;
  a.config_path = write_config(small_config()).string();
  ASSERT_EQ(cmd_train(a, out_, err_), kOk) << err_.str();
  const auto first = dir_ / "runs" / "seed_0";
  TrainArgs again;
  again.config_path = (first / "manifest.json").string();
  again.output_dir = (dir_ / "rerun").string();
  ASSERT_EQ(cmd_train(again, out_, err_), kOk) << err_.str();
  EXPECT_EQ(slurp(first / "metrics.csv"), slurp(dir_ / "rerun" / "seed_0" / "metrics.csv"));
  EXPECT_EQ(slurp(first / "model.json"), slurp(dir_ / "rerun" / "seed_0" / "model.json"));
}

TEST_F(CliTest, TrainNoMixingLearnsCleanSpirals) {
  auto cfg = small_config();
  cfg["data"] = {{"n_per_class", 500}, {"noise_std", 0.0}};
  cfg["model"]["hidden"] = {64, 64};
  cfg["mix"] = {{"mode", "none"}};
  cfg["epochs"] = 200;
  cfg["optim"]["schedule"] = {{100, 0.1}, {150, 0.1}};
  cfg["predictor"] = {{"mode", "raw"}};
  TrainArgs a;
  a.config_path = write_config(cfg).string();
  ASSERT_EQ(cmd_train(a, out_, err_), kOk) << err_.str();
  const auto eval = json::parse(slurp(dir_ / "runs" / "seed_0" / "eval.json"));
  EXPECT_GE(eval["train"]["accuracy"].get<double>(), 0.99);
  const auto manifest = json::parse(slurp(dir_ / "runs" / "seed_0" / "manifest.json"));
  EXPECT_EQ(manifest["manifest"]["training_prior"]["kind"], "point_mass_at_one");
}

TEST_F(CliTest, MalformedConfigExitsTwoWithoutOutputs) {
  auto cfg = small_config();
  cfg["mix"]["alpha"] = -1.0;
  cfg["epochs"] = 0;
  cfg["typo_key"] = 3;
  TrainArgs a;
  a.config_path = write_config(cfg).string();
  EXPECT_EQ(cmd_train(a, out_, err_), kInvalidArgs);
  EXPECT_FALSE(fs::exists(dir_ / "runs"));
  // every problem is reported at once
  EXPECT_NE(err_.str().find("typo_key"), std::string::npos);

  std::ofstream(dir_ / "broken.json") << "{ not json";
  a.config_path = (dir_ / "broken.json").string();
  EXPECT_EQ(cmd_train(a, out_, err_), kInvalidArgs);

  auto mixing_s = small_config();
  mixing_s["mix"]["S"] = 4;
  a.config_path = write_config(mixing_s, "s4.json").string();
  EXPECT_EQ(cmd_train(a, out_, err_), kInvalidArgs);
}

TEST_F(CliTest, EvalIsDeterministicAndDegenerateDipIsRaw) {
  TrainArgs t;
  t.config_path = write_config(small_config()).string();
  ASSERT_EQ(cmd_train(t, out_, err_), kOk);
  const auto run = dir_ / "runs" / "seed_0";
  EvalArgs e;
  e.model_path = (run / "model.json").string();
  e.data_path = (run / "test.csv").string();
  e.predictor.mode = "dip";
  e.predictor.S_test = 50;
  std::ostringstream o1, o2;
  ASSERT_EQ(cmd_eval(e, o1, err_), kOk) << err_.str();
  ASSERT_EQ(cmd_eval(e, o2, err_), kOk);
  EXPECT_EQ(o1.str(), o2.str());

  e.predictor.alpha = 0.0;
  std::ostringstream dip0, raw;
  ASSERT_EQ(cmd_eval(e, dip0, err_), kOk);
  e.predictor.mode = "raw";
  ASSERT_EQ(cmd_eval(e, raw, err_), kOk);
  const auto a = json::parse(dip0.str()), b = json::parse(raw.str());
  EXPECT_EQ(a["accuracy"], b["accuracy"]);
  EXPECT_EQ(a["mean_loss"], b["mean_loss"]);

  EvalArgs bad = e;
  bad.data_path = (dir_ / "missing.csv").string();
  EXPECT_EQ(cmd_eval(bad, out_, err_), kRuntimeFailure);
}

TEST_F(CliTest, EvalRejectsMismatchedData) {
  TrainArgs t;
  t.config_path = write_config(small_config()).string();
  ASSERT_EQ(cmd_train(t, out_, err_), kOk);
  std::ofstream(dir_ / "3d.csv") << "x1,x2,x3,label\n1,2,3,0\n";
  EvalArgs e;
  e.model_path = (dir_ / "runs" / "seed_0" / "model.json").string();
  e.data_path = (dir_ / "3d.csv").string();
  EXPECT_EQ(cmd_eval(e, out_, err_), kInvalidArgs);
}

TEST_F(CliTest, BoundReportValues) {
  GenDataArgs g;
  g.n_per_class = 100;
  g.out = (dir_ / "d.csv").string();
  ASSERT_EQ(cmd_gen_data(g, out_, err_), kOk);
  BoundArgs b;
  b.data_path = g.out;
  std::ostringstream one, two, none;
  ASSERT_EQ(cmd_bound(b, one, err_), kOk);
  b.alpha = 2.0;
  ASSERT_EQ(cmd_bound(b, two, err_), kOk);
  const auto j1 = json::parse(one.str()), j2 = json::parse(two.str());
  EXPECT_NEAR(j1["c_lambda"].get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(j2["c_lambda"].get<double>(), 0.6, 1e-12);
  EXPECT_LT(j2["rad_bound"].get<double>(), j1["rad_bound"].get<double>());

  b.mode = "none";
  b.alpha = 0.0;
  b.standardize = true;
  b.out = (dir_ / "report" / "bound.json").string();
  ASSERT_EQ(cmd_bound(b, none, err_), kOk);
  const auto j0 = json::parse(slurp(b.out));
  EXPECT_EQ(j0["c_lambda"], 1.0);
  EXPECT_LT(j0["sq_norm_mean"].get<double>(), 1e-20);

  b.delta = 1.5;
  EXPECT_EQ(cmd_bound(b, out_, err_), kInvalidArgs);
}

TEST_F(CliTest, SweepRowsAndAggregates) {
  SweepArgs s;
  s.config_path = write_config(small_config()).string();
  s.alphas = {0.0, 1.0};
  s.s_values = {1};
  s.seeds = {0, 1, 2};
  ASSERT_EQ(cmd_sweep(s, out_, err_), kOk) << err_.str();
  const auto csv = dir_ / "runs" / "sweep.csv";
  // header + 2 cells x (3 runs + 1 aggregate)
  EXPECT_EQ(count_lines(csv), 9u);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "alpha,S,mode,seed,train_err,test_err,gap,train_err_se,test_err_se,gap_se");
  std::vector<double> gaps;
  std::vector<std::string> modes;
  double agg_gap = 0, agg_se = 0;
  for (int i = 0; i < 4; ++i) {
    std::getline(in, line);
    const auto cells = dip::detail::split_csv_line(line);
    modes.push_back(cells[2]);
    if (cells[3] == "mean") {
      agg_gap = std::stod(cells[6]);
      agg_se = std::stod(cells[9]);
    } else {
      gaps.push_back(std::stod(cells[6]));
    }
  }
  for (const auto& m : modes) EXPECT_EQ(m, "none");
  const double mean = (gaps[0] + gaps[1] + gaps[2]) / 3.0;
  double ss = 0;
  for (double g : gaps) ss += (g - mean) * (g - mean);
  EXPECT_NEAR(agg_gap, mean, 1e-15);
  EXPECT_NEAR(agg_se, std::sqrt(ss / 2.0) / std::sqrt(3.0), 1e-15);

  // a second invocation reuses the progress log
  std::ostringstream log;
  const auto again = run_sweep(s, log);
  EXPECT_EQ(log.str(), "");
  EXPECT_EQ(again.rows.size(), 6u);
}

TEST_F(CliTest, GridExport) {
  TrainArgs t;
  t.config_path = write_config(small_config()).string();
  ASSERT_EQ(cmd_train(t, out_, err_), kOk);
  GridArgs g;
  g.model_path = (dir_ / "runs" / "seed_0" / "model.json").string();
  g.out_prefix = (dir_ / "grid").string();
  g.predictor.mode = "dip";
  g.predictor.S_test = 5;
  ASSERT_EQ(cmd_grid(g, out_, err_), kOk) << err_.str();
  EXPECT_EQ(count_lines(dir_ / "grid.csv"), 128u * 128u + 1u);
  EXPECT_EQ(count_lines(dir_ / "grid.pgm"), 3u + 128u);
  g.xmax = g.xmin;
  EXPECT_EQ(cmd_grid(g, out_, err_), kInvalidArgs);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string bin = DIP_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("gen-data --n notanumber"), 2);
  EXPECT_EQ(run("gen-data --n 5 --out " + (dir_ / "x.csv").string()), 0);
  EXPECT_EQ(count_lines(dir_ / "x.csv"), 11u);
  EXPECT_EQ(run("eval --model " + (dir_ / "none.json").string() + " --data " + (dir_ / "x.csv").string()), 1);
}
