#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "magdda/surrogate.hpp"

using namespace magdda;
using Catch::Approx;

namespace {

std::vector<Eigen::VectorXd> random_rows(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd r(dim);
    for (int q = 0; q < dim; ++q)
      r(q) = uni(rng);
    rows.push_back(r);
  }
  return rows;
}

// smallest |pre-activation| over the batch; finite differences are only
// trustworthy when no ReLU argument sits within the step of its kink
double kink_margin(const SurrogateModel& m, const std::vector<Eigen::VectorXd>& x) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& row : x) {
    const auto act = detail_nn::forward(m, row);
    for (const auto& z : act.z)
      margin = std::min(margin, z.cwiseAbs().minCoeff());
    margin = std::min(margin, act.z_fc.cwiseAbs().minCoeff());
  }
  return margin;
}

void check_gradient(const SurrogateConfig& cfg) {
  const auto x = random_rows(4, cfg.input_dim, 99);
  std::vector<double> y;
  for (int i = 0; i < 4; ++i)
    y.push_back(0.1 * i - 0.2);

  std::uint64_t seed = 42;
  SurrogateModel m = make_surrogate(cfg, seed);
  while (kink_margin(m, x) < 1e-3)
    m = make_surrogate(cfg, ++seed);

  Eigen::VectorXd grad;
  loss_and_gradient(m, x, y, grad);

  Eigen::VectorXd p = get_params(m);
  REQUIRE(grad.size() == p.size());
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    Eigen::VectorXd pp = p, pm = p;
    pp(k) += h;
    pm(k) -= h;
    SurrogateModel mp = m, mm = m;
    set_params(mp, pp);
    set_params(mm, pm);
    Eigen::VectorXd dummy;
    const double fd = (loss_and_gradient(mp, x, y, dummy) - loss_and_gradient(mm, x, y, dummy)) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad(k)) / std::max(1.0, std::abs(grad(k))));
  }
  CHECK(worst < 1e-4);
}

} // namespace

TEST_CASE("backpropagation matches finite differences", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 7;
  cfg.conv_layers = 2;
  cfg.conv_filters = 3;
  cfg.kernel = 3;
  cfg.dense_units = 5;

  SECTION("with convolution stage") { check_gradient(cfg); }
  SECTION("dense only") {
    cfg.use_conv = false;
    check_gradient(cfg);
  }
}

TEST_CASE("parameter vector round-trips through get and set", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 9;
  cfg.conv_filters = 4;
  cfg.dense_units = 6;
  SurrogateModel a = make_surrogate(cfg, 3);
  SurrogateModel b = make_surrogate(cfg, 4);
  const Eigen::VectorXd p = get_params(a);
  set_params(b, p);
  CHECK(get_params(b) == p);
  const Eigen::VectorXd x = random_rows(1, cfg.input_dim, 5)[0];
  CHECK(predict(a, x) == predict(b, x));

  Eigen::VectorXd shorter = p.head(p.size() - 1);
  CHECK_THROWS_AS(set_params(b, shorter), TrainingError);
  Eigen::VectorXd longer(p.size() + 1);
  longer << p, 0.0;
  CHECK_THROWS_AS(set_params(b, longer), TrainingError);
}

TEST_CASE("flat length tracks the valid-padding shrinkage", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 11;
  cfg.conv_layers = 2;
  cfg.conv_filters = 8;
  cfg.kernel = 3;
  const SurrogateModel m = make_surrogate(cfg, 1);
  CHECK(m.flat_len() == 8 * 7); // 11 -> 9 -> 7 positions

  cfg.input_dim = 4; // second layer would see 2 positions < kernel
  CHECK_THROWS_AS(make_surrogate(cfg, 1), TrainingError);
}

TEST_CASE("training fits a constant target", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 5;
  cfg.use_conv = false;
  cfg.dense_units = 8;
  SurrogateModel m = make_surrogate(cfg, 11);
  const auto x = random_rows(20, cfg.input_dim, 12);
  const std::vector<double> y(20, 3.5);
  TrainOptions opt;
  opt.epochs = 800;
  opt.learning_rate = 2e-2;
  opt.batch = 32; // full batch: plain gradient descent
  const TrainReport rep = train(m, x, y, opt);
  REQUIRE(rep.loss_history.size() == 800);
  CHECK(rep.loss_history.back() < 1e-6);
  CHECK(predict(m, x[7]) == Approx(3.5).epsilon(1e-3));
}

TEST_CASE("training fits a linear map through the dense stage", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 2;
  cfg.use_conv = false;
  cfg.dense_units = 16;
  SurrogateModel m = make_surrogate(cfg, 23);

  std::vector<Eigen::VectorXd> x;
  std::vector<double> y;
  double var = 0.0, mean = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int q = 0; q < 5; ++q) {
      Eigen::VectorXd r(2);
      r << 0.25 * i, 0.25 * q;
      x.push_back(r);
      y.push_back(2.0 * r(0) - r(1) + 0.5);
      mean += y.back();
    }
  mean /= static_cast<double>(y.size());
  for (const double v : y)
    var += (v - mean) * (v - mean) / static_cast<double>(y.size());

  TrainOptions opt;
  opt.epochs = 2000;
  opt.learning_rate = 2e-2;
  opt.batch = 32; // full batch: plain gradient descent
  const TrainReport rep = train(m, x, y, opt);
  CHECK(rep.loss_history.back() < 1e-4 * var);
}

TEST_CASE("log-target models train in decades and predict linearly", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 1;
  cfg.use_conv = false;
  cfg.dense_units = 12;
  cfg.log_target = true;
  SurrogateModel m = make_surrogate(cfg, 31);
  CHECK(target_transform(m, 100.0) == Approx(2.0));
  CHECK(target_transform(m, 0.0) == Approx(-12.0)); // floored

  std::vector<Eigen::VectorXd> x;
  std::vector<double> y;
  for (int i = 0; i <= 20; ++i) {
    Eigen::VectorXd r(1);
    r << i / 20.0;
    x.push_back(r);
    y.push_back(std::pow(10.0, 3.0 * r(0))); // three decades
  }
  TrainOptions opt;
  opt.epochs = 1200;
  opt.learning_rate = 2e-2;
  const TrainReport rep = train(m, x, y, opt);
  CHECK(rep.loss_history.back() < 1e-3); // MSE in log10 space
  // prediction comes back in linear units
  CHECK(predict(m, x[20]) == Approx(1000.0).epsilon(0.2));
  CHECK(predict(m, x[0]) == Approx(1.0).margin(0.5));
}

TEST_CASE("checkpoints restore the model bit for bit", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 6;
  cfg.conv_layers = 1;
  cfg.conv_filters = 4;
  cfg.dense_units = 5;
  cfg.log_target = true;
  SurrogateModel m = make_surrogate(cfg, 8);
  const auto x = random_rows(10, cfg.input_dim, 9);
  std::vector<double> y;
  for (int i = 0; i < 10; ++i)
    y.push_back(1.0 + i);
  TrainOptions opt;
  opt.epochs = 20;
  train(m, x, y, opt);

  const std::string path = "surrogate_roundtrip.ckpt";
  save_checkpoint(m, path);
  const SurrogateModel r = load_checkpoint(path);
  CHECK(get_params(r) == get_params(m));
  CHECK(r.feat_min == m.feat_min);
  CHECK(r.feat_max == m.feat_max);
  CHECK(r.cfg.log_target == m.cfg.log_target);
  for (const auto& row : x)
    CHECK(predict(r, row) == predict(m, row)); // exact, not approximate
  std::remove(path.c_str());

  std::ofstream bad("surrogate_bad.ckpt", std::ios::binary);
  bad << "not json\n";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint("surrogate_bad.ckpt"), ConfigError);
  std::remove("surrogate_bad.ckpt");
  CHECK_THROWS_AS(load_checkpoint("no_such_file.ckpt"), ConfigError);
}

TEST_CASE("same seed reproduces initialization and training exactly", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 5;
  cfg.conv_layers = 1;
  cfg.conv_filters = 3;
  cfg.dense_units = 6;
  SurrogateModel a = make_surrogate(cfg, 77);
  SurrogateModel b = make_surrogate(cfg, 77);
  CHECK(get_params(a) == get_params(b));
  CHECK(get_params(a) != get_params(make_surrogate(cfg, 78)));

  const auto x = random_rows(12, cfg.input_dim, 1);
  std::vector<double> y;
  for (int i = 0; i < 12; ++i)
    y.push_back(std::sin(0.7 * i));
  TrainOptions opt;
  opt.epochs = 40;
  const TrainReport ra = train(a, x, y, opt);
  const TrainReport rb = train(b, x, y, opt);
  CHECK(ra.loss_history == rb.loss_history);
  CHECK(get_params(a) == get_params(b));
}

TEST_CASE("training rejects degenerate batches", "[surrogate]") {
  SurrogateConfig cfg;
  cfg.input_dim = 3;
  cfg.use_conv = false;
  SurrogateModel m = make_surrogate(cfg, 1);
  CHECK_THROWS_AS(train(m, {}, {}), TrainingError);
  const auto x = random_rows(4, 3, 2);
  CHECK_THROWS_AS(train(m, x, {1.0, 2.0}), TrainingError);
  Eigen::VectorXd grad;
  CHECK_THROWS_AS(loss_and_gradient(m, {}, {}, grad), TrainingError);
}
