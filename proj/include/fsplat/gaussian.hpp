#pragma once

#include <vector>

#include "fsplat/common.hpp"
#include "fsplat/quaternion.hpp"
#include "fsplat/sh.hpp"

namespace fsplat {

struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Quat rotation;                      // unit, (w,x,y,z)
  Vec3 log_scales = Vec3::Zero();    // s_i = exp(log_scales_i)
  double opacity_logit = 0.0;        // o = sigmoid(opacity_logit)
  ShCoeffs sh = ShCoeffs::Zero();    // row 0 = DC
  std::vector<double> semantic_logits;
  double intensity_logit = 0.0;

  Vec3 scales() const { return log_scales.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }
};

inline Mat3 covariance_from_params(const Quat& rotation, const Vec3& scales) {
  const Mat3 r = quat_to_rotmat(rotation);
  const Mat3 a = r * scales.asDiagonal();
  Mat3 sigma;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const double v = a.row(i).dot(a.row(j));
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
  return sigma;
}

inline Mat3 covariance_from_params(const GaussianPrimitive& g) {
  return covariance_from_params(g.rotation, g.scales());
}

struct CameraPose {
  Vec3 r_c = Vec3::Zero();          // camera center, world
  Mat3 R_wc = Mat3::Identity();     // world -> camera rotation
  Vec3 r_a = Vec3::UnitZ();         // optical axis, world frame

  static CameraPose from_rt(const Mat3& r, const Vec3& t) {
    CameraPose p;
    p.R_wc = r;
    p.r_c = -r.transpose() * t;
    p.r_a = r.row(2).transpose();
    return p;
  }

  Vec3 t_wc() const { return -R_wc * r_c; }
  Vec3 world_to_camera(const Vec3& p_world) const {
    return R_wc * (p_world - r_c);
  }
};

}  // namespace fsplat
