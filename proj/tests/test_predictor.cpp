#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dip/experiment.hpp"
#include "dip/predictor.hpp"
#include "oracles.hpp"

using namespace dip;
namespace fs = std::filesystem;

namespace {

Dataset spirals(int per_class, std::uint64_t seed) { return standardize(gen_spirals(per_class, 0.05, 1.75, seed)).first; }

PredictorConfig dip_config(const Matrix& pool, double alpha, int S_test, std::uint64_t seed = 0) {
  PredictorConfig c;
  c.mode = PredictMode::dip;
  c.S_test = S_test;
  c.prior = prediction_prior(alpha);
  c.partner_pool = std::make_shared<const Matrix>(pool);
  c.seed = seed;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Predict, DegeneratePriorEqualsRaw) {
  const auto ds = spirals(10, 1);
  const auto p = oracle::random_params({2, 8, 3}, Activation::relu, 2);
  auto cfg = dip_config(ds.features, 1.0, 50);
  cfg.prior = BetaParams::point_mass_at_one();
  PredictorConfig raw;
  EXPECT_EQ(predict_log_probs(p, ds.features, cfg), predict_log_probs(p, ds.features, raw));
  EXPECT_EQ(prediction_prior(0.0), BetaParams::point_mass_at_one());
}

TEST(Predict, SelfPoolEqualsRawAtEveryLambda) {
  // with the pool holding only x itself, every mix is x
  const auto p = oracle::random_params({2, 8, 2}, Activation::tanh, 3);
  Vector x(2);
  x << 0.3, -0.7;
  const auto cfg = dip_config(x.transpose(), 1.0, 64);
  PredictorConfig raw;
  EXPECT_LT((predict(p, x, cfg) - predict(p, x, raw)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, ProbabilitiesSumToOne) {
  const auto ds = spirals(10, 4);
  const auto p = oracle::random_params({2, 8, 4}, Activation::relu, 5, 3.0);
  for (const auto& cfg : {dip_config(ds.features, 1.0, 20), PredictorConfig{}}) {
    const Matrix probs = predict_log_probs(p, ds.features, cfg).array().exp();
    EXPECT_LT((probs.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GE(probs.minCoeff(), 0.0);
  }
}

TEST(Predict, DipAveragesLogitsNotProbabilities) {
  const auto ds = spirals(5, 6);
  const auto p = oracle::random_params({2, 8, 2}, Activation::relu, 7, 3.0);
  const auto cfg = dip_config(ds.features, 1.0, 8, 11);
  const Vector x = ds.features.row(0).transpose();
  RngStream rng(11);
  // replay the draws: partner index then lambda, per draw
  Matrix inputs(8, 2);
  for (int j = 0; j < 8; ++j) {
    const auto k = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(ds.size())));
    const double lam = sample_lambda(cfg.prior, rng);
    inputs.row(j) = lam * x.transpose() + (1.0 - lam) * ds.features.row(k);
  }
  const RowVector expected = softmax_rows(forward(p, inputs).colwise().mean()).row(0);
  EXPECT_LT((predict(p, x, cfg).transpose() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Predict, DeterministicForFixedSeed) {
  const auto ds = spirals(10, 8);
  const auto p = oracle::random_params({2, 8, 2}, Activation::relu, 9);
  const auto cfg = dip_config(ds.features, 1.0, 30, 5);
  EXPECT_EQ(predict_log_probs(p, ds.features, cfg), predict_log_probs(p, ds.features, cfg));
  // row results do not depend on which other rows are evaluated
  const Matrix one = predict_log_probs(p, ds.features.topRows(3), cfg);
  EXPECT_EQ(Matrix(one), Matrix(predict_log_probs(p, ds.features, cfg).topRows(3)));
}

TEST(Predict, StableInSTestOnSpiralsTestSet) {
  ExperimentConfig cfg;
  cfg.mix = {MixMode::label_mixing, 1.0, 1, PartnerStrategy::batch_permutation};
  cfg.predictor.mode = PredictMode::raw;
  const auto run = run_single(cfg, 0);
  const auto& test = run.data.test;
  const auto small = argmax_rows(predict_log_probs(run.trained.params, test.features, dip_config(run.data.train.features, 1.0, 500, 1)));
  const auto big = argmax_rows(predict_log_probs(run.trained.params, test.features, dip_config(run.data.train.features, 1.0, 5000, 2)));
  std::size_t agree = 0;
  for (std::size_t i = 0; i < small.size(); ++i) agree += small[i] == big[i];
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(small.size()), 0.99);
}

TEST(Predict, ConfigErrors) {
  const auto p = mlp_init({2, 4, 2}, Activation::relu, 0);
  Vector x = Vector::Zero(2);
  PredictorConfig c;
  c.mode = PredictMode::dip;
  c.prior = prediction_prior(1.0);
  EXPECT_THROW(predict(p, x, c), ConfigError);
  c.partner_pool = std::make_shared<const Matrix>(Matrix::Zero(3, 2));
  c.S_test = 0;
  EXPECT_THROW(predict(p, x, c), ConfigError);
  c.S_test = 5;
  EXPECT_THROW(predict(p, Vector::Zero(3), c), ShapeError);
  EXPECT_THROW(predict_mode_from_string("mc"), ConfigError);
}

TEST(Evaluate, PerfectAndUniform) {
  ModelParams p;
  p.layer_sizes = {2, 2};
  p.weights = {Matrix::Identity(2, 2) * 5.0};
  p.biases = {Vector::Zero(2)};
  Dataset ds;
  ds.features.resize(4, 2);
  ds.features << 1, 0, 0, 1, 2, 0, 0, 3;
  ds.labels.resize(4, 2);
  ds.labels << 1, 0, 0, 1, 1, 0, 0, 1;
  const auto r = evaluate(p, ds, PredictorConfig{});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.misclassification_rate, 0.0);

  p.weights[0].setZero();
  const auto u = evaluate(p, ds, PredictorConfig{});
  EXPECT_EQ(u.accuracy, 0.5);  // ties go to class 0
  EXPECT_NEAR(u.mean_loss, std::log(2.0), 1e-15);
}

TEST(Evaluate, HandScoredThreeClass) {
  ModelParams p;
  p.layer_sizes = {3, 3};
  p.weights = {Matrix::Identity(3, 3)};
  p.biases = {Vector::Zero(3)};
  Dataset ds;
  ds.features.resize(3, 3);
  ds.features << 2, 0, 0, 0, 1, 0, 0, 0, 1;
  ds.labels.resize(3, 3);
  ds.labels << 1, 0, 0, 0, 1, 0, 1, 0, 0;
  const auto r = evaluate(p, ds, PredictorConfig{});
  EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-15);
  const double e = std::exp(1.0);
  const double expected = (-std::log(e * e / (e * e + 2)) - std::log(e / (e + 2)) - std::log(1.0 / (e + 2))) / 3.0;
  EXPECT_NEAR(r.mean_loss, expected, 1e-12);
}

TEST(DecisionGrid, ResolutionTwoCorners) {
  ModelParams p;
  p.layer_sizes = {2, 2};
  p.weights = {(Matrix(2, 2) << 1, -1, 0, 0).finished()};
  p.biases = {Vector::Zero(2)};
  const auto g = decision_grid(p, PredictorConfig{}, {-1, 1}, {-2, 2}, 2);
  EXPECT_EQ(g.xs, (std::vector<double>{-1, 1}));
  EXPECT_EQ(g.ys, (std::vector<double>{-2, 2}));
  // class 0 where x > 0
  EXPECT_EQ(g.classes, (std::vector<int>{1, 0, 1, 0}));
}

TEST(DecisionGrid, OddNetGivesAntisymmetricGrid) {
  // bias-free tanh net: logits are odd in x, so the two-class argmax flips
  ModelParams p = oracle::random_params({2, 8, 2}, Activation::tanh, 20, 2.0);
  for (auto& b : p.biases) b.setZero();
  const int res = 9;
  const auto g = decision_grid(p, PredictorConfig{}, {-1, 1}, {-1, 1}, res);
  for (int i = 0; i < res * res; ++i) {
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(res * res - 1 - i);
    if (std::abs(g.max_prob[a] - 0.5) > 1e-9) {
      EXPECT_NE(g.classes[a], g.classes[b]);
    }
  }
}

TEST(DecisionGrid, DipDiffersFromRaw) {
  const auto ds = spirals(50, 21);
  const auto p = oracle::random_params({2, 16, 2}, Activation::relu, 22, 3.0);
  const auto raw = decision_grid(p, PredictorConfig{}, {-2, 2}, {-2, 2}, 16);
  const auto dip = decision_grid(p, dip_config(ds.features, 1.0, 100), {-2, 2}, {-2, 2}, 16);
  EXPECT_NE(raw.max_prob, dip.max_prob);
  EXPECT_THROW(decision_grid(mlp_init({3, 2}, Activation::relu, 0), PredictorConfig{}, {0, 1}, {0, 1}, 4), ConfigError);
}

TEST(DecisionGrid, FileFormats) {
  ModelParams p;
  p.layer_sizes = {2, 3};
  p.weights = {(Matrix(2, 3) << 1, 0, -1, 0, 1, 0).finished()};
  p.biases = {Vector::Zero(3)};
  const auto g = decision_grid(p, PredictorConfig{}, {-1, 1}, {-1, 1}, 3);
  const fs::path dir = fs::temp_directory_path() / "dip_grid_test";
  fs::create_directories(dir);
  write_grid_csv(g, (dir / "g.csv").string());
  write_grid_pgm(g, (dir / "g.pgm").string());

  std::istringstream csv(slurp(dir / "g.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "x,y,class,prob");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 9);

  std::istringstream pgm(slurp(dir / "g.pgm"));
  std::string magic;
  int w, h, maxval;
  pgm >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 3);
  EXPECT_EQ(h, 3);
  EXPECT_EQ(maxval, 2);
  std::vector<int> px(9);
  for (auto& v : px) pgm >> v;
  // first image row is the top of the plot (y = 1)
  for (int c = 0; c < 3; ++c) EXPECT_EQ(px[static_cast<std::size_t>(c)], g.classes[static_cast<std::size_t>(6 + c)]);
  fs::remove_all(dir);
}
