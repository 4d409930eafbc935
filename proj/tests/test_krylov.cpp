#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <magdda/magdda.hpp>

using namespace magdda;

namespace {

Eigen::MatrixXcd random_well_conditioned(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXcd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = std::complex<double>(u(rng), u(rng));
  return Eigen::MatrixXcd::Identity(n, n) + 0.1 * A;
}

} // namespace

TEST_CASE("gmres reproduces a dense direct solve", "[krylov]") {
  const int n = 40;
  const Eigen::MatrixXcd A = random_well_conditioned(n, 7);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXcd b(n);
  for (int i = 0; i < n; ++i) b(i) = std::complex<double>(u(rng), u(rng));

  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  GmresOptions opt;
  opt.tolerance = 1e-12;
  const GmresResult res = gmres([&](const Eigen::VectorXcd& v) { return A * v; }, b, x, opt);

  const Eigen::VectorXcd xd = A.partialPivLu().solve(b);
  CHECK((x - xd).norm() < 1e-10 * xd.norm());
  CHECK(res.residual <= 1e-12);
  CHECK(res.iterations > 0);
  CHECK((b - A * x).norm() / b.norm() <= 1.1e-12);
}

TEST_CASE("restarted cycles still converge", "[krylov]") {
  const int n = 60;
  const Eigen::MatrixXcd A = random_well_conditioned(n, 3);
  Eigen::VectorXcd b = Eigen::VectorXcd::Ones(n);
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  GmresOptions opt;
  opt.restart = 5;
  opt.tolerance = 1e-10;
  gmres([&](const Eigen::VectorXcd& v) { return A * v; }, b, x, opt);
  CHECK((b - A * x).norm() / b.norm() <= 1e-9);
}

TEST_CASE("warm start from the solution finishes immediately", "[krylov]") {
  const int n = 30;
  const Eigen::MatrixXcd A = random_well_conditioned(n, 21);
  const Eigen::VectorXcd b = Eigen::VectorXcd::Ones(n);
  Eigen::VectorXcd x = A.partialPivLu().solve(b);
  const GmresResult res = gmres([&](const Eigen::VectorXcd& v) { return A * v; }, b, x, {});
  CHECK(res.iterations == 0);
}

TEST_CASE("zero right-hand side returns zero", "[krylov]") {
  Eigen::VectorXcd x(5);
  x.setOnes();
  const GmresResult res =
      gmres([](const Eigen::VectorXcd& v) { return v; }, Eigen::VectorXcd::Zero(5), x, {});
  CHECK(x.norm() == 0.0);
  CHECK(res.iterations == 0);
}

TEST_CASE("iteration cap throws", "[krylov]") {
  const int n = 50;
  const Eigen::MatrixXcd A = random_well_conditioned(n, 5);
  const Eigen::VectorXcd b = Eigen::VectorXcd::Ones(n);
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  GmresOptions opt;
  opt.max_iterations = 2;
  opt.tolerance = 1e-14;
  CHECK_THROWS_AS(gmres([&](const Eigen::VectorXcd& v) { return A * v; }, b, x, opt),
                  ConvergenceError);
}
