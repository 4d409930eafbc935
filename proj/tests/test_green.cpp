#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include <magdda/magdda.hpp>

using namespace magdda;
using Catch::Approx;
using cd = std::complex<double>;

TEST_CASE("green tensor is symmetric and even in the separation", "[green]") {
  const double k = 2.1e4;
  const Eigen::Vector3d r{11e-6, -4e-6, 7e-6}, rp{-2e-6, 9e-6, 1e-6};
  const Eigen::Matrix3cd G = green_tensor(r, rp, k);
  CHECK((G - G.transpose()).norm() < 1e-14 * G.norm());
  CHECK((G - green_tensor(rp, r, k)).norm() < 1e-14 * G.norm());
}

TEST_CASE("green tensor reduces to the static dipole kernel at small kR", "[green]") {
  const double k = 1.0;
  const Eigen::Vector3d r{1e-4, 0.5e-4, -0.3e-4};
  const Eigen::Vector3d rp = Eigen::Vector3d::Zero();
  const double R = r.norm();
  const Eigen::Vector3d n = r / R;
  const Eigen::Matrix3cd G = green_tensor(r, rp, k);
  const Eigen::Matrix3d Gstat =
      (3 * n * n.transpose() - Eigen::Matrix3d::Identity()) /
      (4 * constants::pi * k * k * R * R * R);
  CHECK((G - Gstat.cast<cd>()).norm() < 2e-8 * Gstat.norm());
}

TEST_CASE("green tensor becomes transverse in the far zone", "[green]") {
  const double k = 1e5;
  const Eigen::Vector3d r{0.3, -0.1, 0.7}; // kR ~ 7.7e4
  const double R = r.norm();
  const Eigen::Vector3d n = r / R;
  const Eigen::Matrix3cd G = green_tensor(r, Eigen::Vector3d::Zero(), k);
  const cd g = std::exp(cd(0, 1) * k * R) / (4 * constants::pi * R);
  const Eigen::Matrix3cd Gff = g * transverse_projector(n).cast<cd>();
  CHECK((G - Gff).norm() < 1e-4 * Gff.norm());
  CHECK((G * n.cast<cd>()).norm() < 1e-4 * G.norm()); // transversality
}

TEST_CASE("scalar green gradient matches central differences", "[green]") {
  const double k = 3e4;
  const Eigen::Vector3d r{40e-6, -25e-6, 60e-6};
  const Eigen::Vector3d rp{5e-6, 5e-6, 5e-6};
  auto g = [&](const Eigen::Vector3d& x) {
    const double R = (x - rp).norm();
    return std::exp(cd(0, 1) * k * R) / (4 * constants::pi * R);
  };
  const Eigen::Vector3cd grad = grad_green_scalar(r, rp, k);
  const double h = 1e-9;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d dp = r, dm = r;
    dp(a) += h;
    dm(a) -= h;
    const cd fd = (g(dp) - g(dm)) / (2 * h);
    CHECK(std::abs(grad(a) - fd) < 1e-6 * std::abs(grad(a)));
  }
}

TEST_CASE("curl application is the gradient cross product", "[green]") {
  const double k = 3e4;
  const Eigen::Vector3d r{40e-6, -25e-6, 60e-6}, rp{5e-6, 5e-6, 5e-6};
  const Eigen::Vector3cd v{cd(1, 0.5), cd(0, -2), cd(3, 0)};
  const Eigen::Vector3cd lhs = curl_green_apply(r, rp, k, v);
  const Eigen::Vector3cd g = grad_green_scalar(r, rp, k);
  // component-wise reference; the bilinear product, no conjugation anywhere
  const Eigen::Vector3cd rhs{g.y() * v.z() - g.z() * v.y(), g.z() * v.x() - g.x() * v.z(),
                             g.x() * v.y() - g.y() * v.x()};
  CHECK((lhs - rhs).norm() == 0.0);
}

TEST_CASE("complex cross product is bilinear, not sesquilinear", "[green]") {
  const Eigen::Vector3cd a{cd(0, 1), cd(2, 0), cd(0, -1)};
  const Eigen::Vector3cd b{cd(1, 1), cd(0, 3), cd(2, 0)};
  const Eigen::Vector3cd c = complex_cross(a, b);
  // scaling either factor by i must scale the product by i
  CHECK((complex_cross(cd(0, 1) * a, b) - cd(0, 1) * c).norm() < 1e-15 * c.norm());
  CHECK((complex_cross(a, cd(0, 1) * b) - cd(0, 1) * c).norm() < 1e-15 * c.norm());
  // orthogonality under the bilinear pairing
  CHECK(std::abs(cd(a.transpose() * c)) < 1e-15 * c.norm());
  CHECK(std::abs(cd(b.transpose() * c)) < 1e-15 * c.norm());
}
