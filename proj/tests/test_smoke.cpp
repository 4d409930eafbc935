#include <catch2/catch_amalgamated.hpp>

#include <magdda/magdda.hpp>

namespace mc = magdda::constants;

TEST_CASE("umbrella header compiles and constants are sane", "[smoke]") {
  CHECK(mc::c0 == Catch::Approx(2.99792458e8));
  CHECK(mc::eps0 * mc::mu0 * mc::c0 * mc::c0 == Catch::Approx(1.0).epsilon(1e-7));
  CHECK(mc::z0 == Catch::Approx(std::sqrt(mc::mu0 / mc::eps0)).epsilon(1e-7));
}
