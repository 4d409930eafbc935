#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "magdda/errors.hpp"
#include "magdda/stats.hpp"

using namespace magdda;
using Catch::Approx;

TEST_CASE("linear fit recovers an exact line", "[stats]") {
  std::vector<double> x, y;
  for (int i = 0; i < 7; ++i) {
    x.push_back(0.3 * i - 1.0);
    y.push_back(2.5 * x.back() - 0.75);
  }
  const LinearFit f = linear_fit(x, y);
  CHECK(f.slope == Approx(2.5).epsilon(1e-12));
  CHECK(f.intercept == Approx(-0.75).margin(1e-12));
  CHECK(f.r2 == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("linear fit r2 drops for scattered data", "[stats]") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{0.0, 1.4, 1.6, 3.5, 3.5};
  const LinearFit f = linear_fit(x, y);
  CHECK(f.r2 < 1.0);
  CHECK(f.r2 > 0.9); // still strongly linear
  // residuals of the least-squares line are orthogonal to x
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    dot += (y[i] - f.slope * x[i] - f.intercept) * x[i];
  CHECK(std::abs(dot) < 1e-12);
}

TEST_CASE("linear fit rejects degenerate input", "[stats]") {
  CHECK_THROWS_AS(linear_fit({1.0}, {2.0}), ConfigError);
  CHECK_THROWS_AS(linear_fit({1.0, 2.0}, {1.0, 2.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(linear_fit({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}), ConfigError);
  // constant ordinate is fine: slope 0, perfect fit
  const LinearFit f = linear_fit({0.0, 1.0, 2.0}, {4.0, 4.0, 4.0});
  CHECK(f.slope == Approx(0.0).margin(1e-15));
  CHECK(f.r2 == Approx(1.0));
}

TEST_CASE("spearman correlation is 1 for any monotone map", "[stats]") {
  std::vector<double> x, up, down;
  for (int i = 0; i < 9; ++i) {
    x.push_back(0.5 * i - 2.0);
    up.push_back(std::exp(x.back()) + x.back() * x.back() * x.back());
    down.push_back(-up.back());
  }
  CHECK(spearman_rank_correlation(x, up) == Approx(1.0).epsilon(1e-12));
  CHECK(spearman_rank_correlation(x, down) == Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spearman correlation averages tied ranks", "[stats]") {
  // y has a tie at 7; hand-computed rho = 8 / sqrt(10 * 9.5)
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> y{5.0, 6.0, 7.0, 8.0, 7.0};
  CHECK(spearman_rank_correlation(x, y) == Approx(8.0 / std::sqrt(95.0)).epsilon(1e-12));
  // a constant sample carries no rank information
  CHECK(spearman_rank_correlation(x, {3.0, 3.0, 3.0, 3.0, 3.0}) == 0.0);
  CHECK_THROWS_AS(spearman_rank_correlation({1.0}, {2.0}), ConfigError);
}

TEST_CASE("peak refinement is exact on a sampled parabola", "[stats]") {
  std::vector<double> x, y;
  for (int i = 0; i < 21; ++i) {
    x.push_back(0.2 * i);
    y.push_back(3.0 - (x.back() - 1.23) * (x.back() - 1.23));
  }
  const auto peaks = find_peaks(x, y);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].x == Approx(1.23).margin(1e-12));
  CHECK(peaks[0].value == Approx(3.0).margin(1e-12));
  CHECK(peaks[0].index == 6); // x = 1.2 is the discrete maximum
}

TEST_CASE("prominence measures drop to the separating saddle", "[stats]") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{0.0, 5.0, 1.0, 3.0, 0.0};
  const auto peaks = find_peaks(x, y);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].index == 1);
  CHECK(peaks[0].prominence == Approx(5.0)); // global maximum: drop to lowest base
  CHECK(peaks[1].index == 3);
  CHECK(peaks[1].prominence == Approx(2.0)); // saddle at y = 1 toward the higher peak

  const auto strong = find_peaks(x, y, 0.5); // threshold 0.5 * range = 2.5
  REQUIRE(strong.size() == 1);
  CHECK(strong[0].index == 1);
}

TEST_CASE("monotone and flat curves have no peaks", "[stats]") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  CHECK(find_peaks(x, {0.0, 1.0, 2.0, 3.0}).empty());
  CHECK(find_peaks(x, {2.0, 2.0, 2.0, 2.0}).empty());
  CHECK_THROWS_AS(find_peaks({0.0, 1.0}, {0.0, 1.0}), ConfigError);
}
