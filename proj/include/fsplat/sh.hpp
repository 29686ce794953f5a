#pragma once

#include "fsplat/common.hpp"

namespace fsplat {

// Real spherical harmonics in the sign convention used by common splatting
// checkpoints, so exported coefficients stay interoperable.
constexpr int kShMaxDegree = 3;
constexpr int kShCoeffs = 16;

constexpr inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

namespace detail {
constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792,
                             0.31539156525252005, -1.0925484305920792,
                             0.5462742152960396};
constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554,
                             -0.4570457994644658, 0.3731763325901154,
                             -0.4570457994644658, 1.445305721320277,
                             -0.5900435899266435};
}  // namespace detail

// Fills basis[0 .. (degree+1)^2) for a unit direction.
inline void sh_basis(const Vec3& d, int degree, double* basis) {
  using namespace detail;
  basis[0] = kShC0;
  if (degree < 1) return;
  const double x = d[0], y = d[1], z = d[2];
  basis[1] = -kShC1 * y;
  basis[2] = kShC1 * z;
  basis[3] = -kShC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  basis[4] = kShC2[0] * xy;
  basis[5] = kShC2[1] * yz;
  basis[6] = kShC2[2] * (2.0 * zz - xx - yy);
  basis[7] = kShC2[3] * xz;
  basis[8] = kShC2[4] * (xx - yy);
  if (degree < 3) return;
  basis[9] = kShC3[0] * y * (3.0 * xx - yy);
  basis[10] = kShC3[1] * xy * z;
  basis[11] = kShC3[2] * y * (4.0 * zz - xx - yy);
  basis[12] = kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  basis[13] = kShC3[4] * x * (4.0 * zz - xx - yy);
  basis[14] = kShC3[5] * z * (xx - yy);
  basis[15] = kShC3[6] * x * (xx - 3.0 * yy);
}

// d(basis_i)/d(d_k) for a unit direction, grad is (degree+1)^2 x 3 row-major.
inline void sh_basis_grad(const Vec3& d, int degree, double* grad) {
  using namespace detail;
  const double x = d[0], y = d[1], z = d[2];
  auto set = [&](int i, double gx, double gy, double gz) {
    grad[3 * i + 0] = gx;
    grad[3 * i + 1] = gy;
    grad[3 * i + 2] = gz;
  };
  set(0, 0, 0, 0);
  if (degree < 1) return;
  set(1, 0, -kShC1, 0);
  set(2, 0, 0, kShC1);
  set(3, -kShC1, 0, 0);
  if (degree < 2) return;
  set(4, kShC2[0] * y, kShC2[0] * x, 0);
  set(5, 0, kShC2[1] * z, kShC2[1] * y);
  set(6, -2.0 * kShC2[2] * x, -2.0 * kShC2[2] * y, 4.0 * kShC2[2] * z);
  set(7, kShC2[3] * z, 0, kShC2[3] * x);
  set(8, 2.0 * kShC2[4] * x, -2.0 * kShC2[4] * y, 0);
  if (degree < 3) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  set(9, kShC3[0] * 6.0 * x * y, kShC3[0] * (3.0 * xx - 3.0 * yy), 0);
  set(10, kShC3[1] * y * z, kShC3[1] * x * z, kShC3[1] * x * y);
  set(11, -2.0 * kShC3[2] * x * y, kShC3[2] * (4.0 * zz - xx - 3.0 * yy),
      8.0 * kShC3[2] * y * z);
  set(12, -6.0 * kShC3[3] * x * z, -6.0 * kShC3[3] * y * z,
      kShC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy));
  set(13, kShC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kShC3[4] * x * y,
      8.0 * kShC3[4] * x * z);
  set(14, 2.0 * kShC3[5] * x * z, -2.0 * kShC3[5] * y * z, kShC3[5] * (xx - yy));
  set(15, kShC3[6] * (3.0 * xx - 3.0 * yy), -6.0 * kShC3[6] * x * y, 0);
}

using ShCoeffs = Eigen::Matrix<double, kShCoeffs, 3>;  // rows: basis, cols: RGB

// rgb = clamp(basis . coeffs + 0.5, 0, 1); dir need not be unit.
inline Vec3 sh_to_rgb(const ShCoeffs& sh, const Vec3& dir, int degree) {
  const Vec3 d = dir.normalized();
  double basis[kShCoeffs];
  const int n = sh_coeff_count(degree);
  sh_basis(d, degree, basis);
  Vec3 rgb;
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += basis[i] * sh(i, c);
    rgb[c] = clamp01(v + 0.5);
  }
  return rgb;
}

// Accumulates into sh_bar and dir_bar (gradient w.r.t. the raw direction,
// normalization included). Clamped channels pass no gradient.
inline void sh_to_rgb_vjp(const ShCoeffs& sh, const Vec3& dir, int degree,
                          const Vec3& rgb_bar, ShCoeffs& sh_bar, Vec3& dir_bar) {
  const double norm = dir.norm();
  const Vec3 d = dir / norm;
  const int n = sh_coeff_count(degree);
  double basis[kShCoeffs];
  double grad[kShCoeffs * 3];
  sh_basis(d, degree, basis);
  sh_basis_grad(d, degree, grad);
  Vec3 d_bar = Vec3::Zero();
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += basis[i] * sh(i, c);
    v += 0.5;
    if (v <= 0.0 || v >= 1.0) continue;
    const double g = rgb_bar[c];
    for (int i = 0; i < n; ++i) {
      sh_bar(i, c) += g * basis[i];
      d_bar[0] += g * sh(i, c) * grad[3 * i + 0];
      d_bar[1] += g * sh(i, c) * grad[3 * i + 1];
      d_bar[2] += g * sh(i, c) * grad[3 * i + 2];
    }
  }
  dir_bar += (d_bar - d * d.dot(d_bar)) / norm;
}

}  // namespace fsplat
