#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fsplat/sym_eigen.hpp"

using namespace fsplat;

namespace {

std::mt19937_64 rng(123);

Quat random_unit_quat() {
  std::normal_distribution<double> n;
  return Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

Mat3 make_cov(const Quat& q, const Vec3& s) {
  const Mat3 r = quat_to_rotmat(q);
  return r * s.cwiseProduct(s).asDiagonal() * r.transpose();
}

Mat3 reconstruct(const SymEigen3& e) {
  const Mat3 r = quat_to_rotmat(e.q);
  return r * e.scales.cwiseProduct(e.scales).asDiagonal() * r.transpose();
}

}  // namespace

TEST_CASE("decompose_covariance round trips") {
  for (int trial = 0; trial < 200; ++trial) {
    const Quat q = random_unit_quat();
    const Vec3 s(0.5, 1.2, 2.0);
    const Mat3 sigma = 0.5 * (make_cov(q, s) + make_cov(q, s).transpose());
    const SymEigen3 e = decompose_covariance_full(sigma);
    REQUIRE(e.scales[0] == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(e.scales[1] == Catch::Approx(1.2).margin(1e-10));
    REQUIRE(e.scales[2] == Catch::Approx(0.5).margin(1e-10));
    REQUIRE((reconstruct(e) - sigma).norm() < 1e-12);
    REQUIRE(std::abs(e.q.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("decompose_covariance is deterministic and sign canonical") {
  const Mat3 sigma = make_cov(Quat{0.9, 0.1, -0.3, 0.28}.normalized(),
                              Vec3(0.4, 1.0, 1.7));
  const SymEigen3 a = decompose_covariance_full(sigma);
  const SymEigen3 b = decompose_covariance_full(sigma);
  CHECK(a.q.w == b.q.w);
  CHECK(a.q.x == b.q.x);
  CHECK(a.scales == b.scales);
  CHECK(a.vecs == b.vecs);

  for (int i = 0; i < 2; ++i) {
    int arg = 0;
    for (int k = 1; k < 3; ++k)
      if (std::abs(a.vecs(k, i)) > std::abs(a.vecs(arg, i))) arg = k;
    CHECK(a.vecs(arg, i) > 0.0);
  }
  CHECK((a.vecs.col(2) - a.vecs.col(0).cross(a.vecs.col(1))).norm() == 0.0);
  CHECK(a.vecs.determinant() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("decompose_covariance handles near degenerate spectra") {
  const Quat q = random_unit_quat();
  const Vec3 s(1.0, 1.0 + 1e-7, 0.5);
  const Mat3 sigma = 0.5 * (make_cov(q, s) + make_cov(q, s).transpose());
  const SymEigen3 e = decompose_covariance_full(sigma);
  CHECK((reconstruct(e) - sigma).norm() < 1e-9);

  const Mat3 iso = 0.25 * Mat3::Identity();
  const SymEigen3 ei = decompose_covariance_full(iso);
  CHECK((reconstruct(ei) - iso).norm() < 1e-12);
  CHECK(std::abs(ei.q.norm() - 1.0) < 1e-12);
}

TEST_CASE("decompose_covariance input validation") {
  Mat3 asym = Mat3::Identity();
  asym(0, 1) = 0.3;
  CHECK_THROWS_AS(decompose_covariance_full(asym), std::domain_error);

  Mat3 neg = Vec3(1.0, 1.0, -0.1).asDiagonal();
  CHECK_THROWS_AS(decompose_covariance_full(neg), std::domain_error);
  CHECK_THROWS_AS(decompose_covariance_full(Mat3::Zero()), std::domain_error);
}

TEST_CASE("decompose_covariance_vjp matches finite differences") {
  std::normal_distribution<double> n;
  const double h = 1e-6;
  for (int trial = 0; trial < 15; ++trial) {
    const Quat q = random_unit_quat();
    const Vec3 s(0.5, 1.1, 2.3);
    Mat3 sigma = make_cov(q, s);
    sigma = 0.5 * (sigma + sigma.transpose());

    const Vec3 scales_bar(n(rng), n(rng), n(rng));
    const Quat q_bar{n(rng), n(rng), n(rng), n(rng)};

    const SymEigen3 e = decompose_covariance_full(sigma);
    const Mat3 g = decompose_covariance_vjp(e, scales_bar, q_bar);
    const Mat3 gs = 0.5 * (g + g.transpose());

    auto obj = [&](const Mat3& m) {
      const SymEigen3 d = decompose_covariance_full(m);
      return scales_bar.dot(d.scales) + q_bar.w * d.q.w + q_bar.x * d.q.x +
             q_bar.y * d.q.y + q_bar.z * d.q.z;
    };
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        Mat3 p = sigma, m = sigma;
        p(i, j) += h;
        m(i, j) -= h;
        if (i != j) {
          p(j, i) += h;
          m(j, i) -= h;
        }
        const double fd = (obj(p) - obj(m)) / (2 * h);
        const double want = i == j ? gs(i, i) : 2.0 * gs(i, j);
        REQUIRE(want == Catch::Approx(fd).margin(2e-5 * std::max(1.0, std::abs(fd))));
      }
  }
}

TEST_CASE("decompose_covariance_vjp stays finite near degeneracy") {
  const Quat q = random_unit_quat();
  const Vec3 s(1.0, 1.0 + 1e-10, 0.5);
  Mat3 sigma = make_cov(q, s);
  sigma = 0.5 * (sigma + sigma.transpose());
  const SymEigen3 e = decompose_covariance_full(sigma);
  const Mat3 g = decompose_covariance_vjp(e, Vec3(1, 1, 1), Quat{0.1, 0.2, 0.3, 0.4});
  CHECK(g.allFinite());
}
