#pragma once

#include <Eigen/Eigenvalues>

#include "fsplat/common.hpp"
#include "fsplat/quaternion.hpp"

namespace fsplat {

// Deterministic 3x3 symmetric eigendecomposition: eigenvalues descending,
// first two eigenvector signs fixed so the largest-magnitude component is
// positive, third column replaced by v1 x v2 (right-handed frame).
struct SymEigen3 {
  Vec3 lam;     // descending
  Mat3 vecs;    // columns v1, v2, v1 x v2
  Vec3 scales;  // sqrt(lam)
  Quat q;       // quaternion of vecs
};

inline SymEigen3 decompose_covariance_full(const Mat3& sigma) {
  const double scale = std::max(1.0, sigma.norm());
  if ((sigma - sigma.transpose()).norm() > 1e-9 * scale)
    throw std::domain_error("decompose_covariance: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat3> es;
  es.compute(0.5 * (sigma + sigma.transpose()));
  SymEigen3 out;
  for (int i = 0; i < 3; ++i) {
    out.lam[i] = es.eigenvalues()[2 - i];
    out.vecs.col(i) = es.eigenvectors().col(2 - i);
  }
  if (out.lam[2] <= 1e-18)
    throw std::domain_error("decompose_covariance: matrix is not positive definite");
  for (int i = 0; i < 2; ++i) {
    int arg = 0;
    for (int k = 1; k < 3; ++k)
      if (std::abs(out.vecs(k, i)) > std::abs(out.vecs(arg, i))) arg = k;
    if (out.vecs(arg, i) < 0.0) out.vecs.col(i) = -out.vecs.col(i);
  }
  out.vecs.col(2) = out.vecs.col(0).cross(out.vecs.col(1));
  out.scales = out.lam.cwiseSqrt();
  out.q = quat_from_rotmat(out.vecs);
  return out;
}

inline void decompose_covariance(const Mat3& sigma, Vec3& scales, Quat& q) {
  const SymEigen3 e = decompose_covariance_full(sigma);
  scales = e.scales;
  q = e.q;
}

// Adjoint of the decomposition. scales_bar and q_bar are upstream gradients;
// returns sigma_bar (full-matrix Frobenius convention). Near-degenerate
// eigenvalue gaps are Lorentzian-broadened.
inline Mat3 decompose_covariance_vjp(const SymEigen3& e, const Vec3& scales_bar,
                                     const Quat& q_bar, double broadening = 1e-8) {
  Vec3 lam_bar;
  for (int i = 0; i < 3; ++i) lam_bar[i] = scales_bar[i] / (2.0 * e.scales[i]);

  const Mat3 r_bar = quat_from_rotmat_vjp(e.vecs, q_bar);

  // Third column is v1 x v2, so its adjoint folds into v1, v2.
  Mat3 v_bar = Mat3::Zero();
  v_bar.col(0) = r_bar.col(0) + e.vecs.col(1).cross(r_bar.col(2));
  v_bar.col(1) = r_bar.col(1) + r_bar.col(2).cross(e.vecs.col(0));

  Mat3 sigma_bar = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    sigma_bar += lam_bar[i] * e.vecs.col(i) * e.vecs.col(i).transpose();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double gap = e.lam[i] - e.lam[j];
      const double inv_gap = gap / (gap * gap + broadening * broadening);
      const double c = e.vecs.col(j).dot(v_bar.col(i)) * inv_gap;
      sigma_bar += c * e.vecs.col(j) * e.vecs.col(i).transpose();
    }
  }
  return sigma_bar;
}

}  // namespace fsplat
