#pragma once

#include <optional>

#include "fsplat/camera.hpp"
#include "fsplat/gaussian.hpp"
#include "fsplat/sym_eigen.hpp"

namespace fsplat {

struct WarpGeometry {
  Vec3 r_gc = Vec3::Zero();
  double theta = 0, theta_d = 0, theta_delta = 0;
  Vec3 r_rot = Vec3::UnitX();
  Quat delta_q;
  Vec3 theta_hat = Vec3::UnitX(), phi_hat = Vec3::UnitY();
  double k_phi = 1, k_theta = 1;
  double delta_theta = 0, delta_theta_d = 0;
};

struct WarpedGaussian {
  Vec3 mean_w = Vec3::Zero();
  Quat rotation_w;
  Vec3 scales_w = Vec3::Ones();
  Mat3 sigma_w = Mat3::Identity();
  int source_index = -1;
};

struct WarpOptions {
  bool stretch_phi = true;
  bool stretch_theta = true;
  int order = 1;

  bool stretched() const { return stretch_phi || stretch_theta; }
  static WarpOptions none() { return {false, false, 1}; }
};

// Everything the backward pass needs from the forward warp.
struct WarpRecord {
  bool fisheye = false;
  bool stretched = false;
  bool tiny_theta = false;
  bool frame_degenerate = false;
  bool kphi_limit = false;
  WarpOptions opts;

  Vec3 r_gc = Vec3::Zero();
  double r_norm = 0;
  Vec3 r_hat = Vec3::UnitZ();
  double theta = 0;
  detail::MirrorEval mir;

  Vec3 axis_raw = Vec3::Zero();
  double axis_norm = 0;
  Vec3 axis = Vec3::UnitX();
  Quat delta_q;
  Quat q_gp;     // delta_q (x) rotation
  Mat3 rot_gp = Mat3::Identity();
  Vec3 mean_w = Vec3::Zero();

  Vec3 d_hat = Vec3::UnitZ();
  double d_norm = 0;
  Vec3 t_pre = Vec3::Zero();  // r_a - (r_a . d_hat) d_hat
  double t_norm = 0;
  Vec3 theta_hat = Vec3::UnitX();
  Vec3 p_pre = Vec3::Zero();  // theta_hat x d_hat
  double p_norm = 0;
  Vec3 phi_hat = Vec3::UnitY();

  double k_phi = 1, k_theta = 1;
  double delta_theta = 0, delta_theta_d = 0;
  int ext_arg = 0;        // argmax axis of the angular extent
  double ext_sign = 1;    // sign of theta_hat . v_arg

  Vec3 scales = Vec3::Ones();
  Mat3 sigma = Mat3::Identity();
  Mat3 s_theta = Mat3::Identity(), s_phi = Mat3::Identity();
  Mat3 a_mat = Mat3::Identity();
  Mat3 sigma_w = Mat3::Identity();
  SymEigen3 eig;
};

inline Mat3 stretch_matrix(const Vec3& n_hat, double k) {
  Mat3 s = Mat3::Identity();
  s += (k - 1.0) * n_hat * n_hat.transpose();
  return s;
}

// Pinhole model sharing the post-warp projection intrinsics of a fisheye
// model (normalized focal for MEI).
inline CameraModel pinhole_with_matching_focal(const CameraModel& cam) {
  CameraModel m;
  m.kind = CameraKind::Pinhole;
  m.fx = cam.fx;
  m.fy = cam.fy;
  m.u0 = cam.u0;
  m.v0 = cam.v0;
  m.width = cam.width;
  m.height = cam.height;
  m.theta_max = kPi / 2 - 1e-6;
  return m;
}

struct WarpRotation {
  Quat delta_q;
  double theta = 0, theta_d = 0;
  Vec3 r_rot = Vec3::UnitX();
};

// Rotation of the camera-to-Gaussian vector so that its post-rotation angle
// to the optical axis is exactly theta_d. Returns nullopt on cull
// (theta beyond theta_max + margin, or the ray is behind an MEI mirror).
inline std::optional<WarpRotation> compute_warp_rotation(const Vec3& g_mean,
                                                         const CameraPose& pose,
                                                         const CameraModel& cam,
                                                         double margin = 0.0) {
  const Vec3 r_gc = g_mean - pose.r_c;
  const double r = r_gc.norm();
  if (r < 1e-12) return std::nullopt;
  const Vec3 r_hat = r_gc / r;
  const Vec3 cr = r_hat.cross(pose.r_a);
  const double theta = std::atan2(cr.norm(), r_hat.dot(pose.r_a));
  if (theta > cam.theta_max + margin) return std::nullopt;
  if (cam.kind == CameraKind::MEI && std::cos(theta) + cam.xi <= 1e-9)
    return std::nullopt;
  WarpRotation out;
  out.theta = theta;
  out.theta_d = detail::mirror_eval(cam, theta, MeiParam::Normalized).theta_d;
  if (theta < 1e-8) {
    out.delta_q = Quat{};
    out.r_rot = Vec3::UnitX();
  } else {
    out.r_rot = cr.normalized();
    out.delta_q = quat_from_axis_angle(out.r_rot, theta - out.theta_d);
  }
  return out;
}

inline void warp_pose(const GaussianPrimitive& g, const Quat& delta_q,
                      const CameraPose& pose, Vec3& mean_w, Quat& rotation_w) {
  mean_w = quat_rotate(delta_q, g.mean - pose.r_c) + pose.r_c;
  rotation_w = quat_multiply(delta_q, g.rotation);
}

inline void local_frame(const Vec3& mean_w, const CameraPose& pose,
                        Vec3& theta_hat, Vec3& phi_hat) {
  const Vec3 d_hat = (mean_w - pose.r_c).normalized();
  const Vec3 t_pre = pose.r_a - pose.r_a.dot(d_hat) * d_hat;
  if (t_pre.norm() < 1e-12) {
    const Vec3 e = std::abs(d_hat.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    theta_hat = (e - e.dot(d_hat) * d_hat).normalized();
    phi_hat = theta_hat.cross(d_hat).normalized();
    return;
  }
  theta_hat = t_pre.normalized();
  phi_hat = theta_hat.cross(d_hat).normalized();
}

inline double tangential_ratio(double theta, double theta_d,
                               const CameraModel& cam) {
  if (theta < 1e-6) return detail::mirror_eval(cam, 0.0, MeiParam::Normalized).d1;
  return std::sin(theta_d) / std::sin(theta);
}

// k_theta with the angular extent of the warped Gaussian. rot_gp and scales
// describe the post-rotation orientation and the world-space scales.
inline void polar_ratio(const Mat3& rot_gp, const Vec3& scales,
                        const Vec3& theta_hat, double r_norm,
                        const detail::MirrorEval& mir, int order,
                        double& k_theta, double& delta_theta,
                        double& delta_theta_d, int& ext_arg, double& ext_sign) {
  double best = -1.0;
  ext_arg = 0;
  ext_sign = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double t = theta_hat.dot(rot_gp.col(i)) * scales[i];
    if (std::abs(t) > best) {
      best = std::abs(t);
      ext_arg = i;
      ext_sign = t < 0.0 ? -1.0 : 1.0;
    }
  }
  delta_theta = 2.0 * best / r_norm;
  if (order == 1) {
    k_theta = mir.d1;
    delta_theta_d = mir.d1 * delta_theta;
  } else {
    k_theta = mir.d1 + 0.5 * mir.d2 * delta_theta;
    delta_theta_d = k_theta * delta_theta;
  }
}

inline Mat3 warp_covariance(const Mat3& sigma, const Mat3& s_theta,
                            const Mat3& s_phi) {
  const Mat3 a = s_theta * s_phi;
  const Mat3 m = a * sigma * a.transpose();
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const double v = 0.5 * (m(i, j) + m(j, i));
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

inline Mat3 warp_covariance(const Mat3& sigma, const WarpGeometry& geom) {
  return warp_covariance(sigma, stretch_matrix(geom.theta_hat, geom.k_theta),
                         stretch_matrix(geom.phi_hat, geom.k_phi));
}

// Full warp. Returns false on cull. Fills the record for the backward pass
// and, optionally, the spec-level geometry.
inline bool warp_gaussian_record(const GaussianPrimitive& g, const CameraPose& pose,
                                 const CameraModel& cam, const WarpOptions& opts,
                                 WarpedGaussian& out, WarpRecord& rec,
                                 double margin = 0.0,
                                 WarpGeometry* geom_out = nullptr) {
  rec = WarpRecord{};
  rec.opts = opts;
  rec.scales = g.scales();

  if (cam.kind == CameraKind::Pinhole) {
    out.mean_w = g.mean;
    out.rotation_w = g.rotation;
    out.scales_w = rec.scales;
    out.sigma_w = covariance_from_params(g.rotation, rec.scales);
    rec.fisheye = false;
    if (geom_out) *geom_out = WarpGeometry{};
    return true;
  }
  rec.fisheye = true;

  rec.r_gc = g.mean - pose.r_c;
  rec.r_norm = rec.r_gc.norm();
  if (rec.r_norm < 1e-12) return false;
  rec.r_hat = rec.r_gc / rec.r_norm;
  rec.axis_raw = rec.r_hat.cross(pose.r_a);
  rec.axis_norm = rec.axis_raw.norm();
  rec.theta = std::atan2(rec.axis_norm, rec.r_hat.dot(pose.r_a));
  if (rec.theta > cam.theta_max + margin) return false;
  if (cam.kind == CameraKind::MEI && std::cos(rec.theta) + cam.xi <= 1e-9)
    return false;
  rec.mir = detail::mirror_eval(cam, rec.theta, MeiParam::Normalized);

  if (rec.theta < 1e-8) {
    rec.tiny_theta = true;
    rec.delta_q = Quat{};
    rec.axis = Vec3::UnitX();
  } else {
    rec.axis = rec.axis_raw / rec.axis_norm;
    rec.delta_q = quat_from_axis_angle(rec.axis, rec.theta - rec.mir.theta_d);
  }
  rec.mean_w = quat_rotate(rec.delta_q, rec.r_gc) + pose.r_c;
  rec.q_gp = quat_multiply(rec.delta_q, g.rotation);

  out.mean_w = rec.mean_w;
  if (!opts.stretched()) {
    out.rotation_w = rec.q_gp;
    out.scales_w = rec.scales;
    out.sigma_w = covariance_from_params(rec.q_gp, rec.scales);
    if (geom_out) {
      geom_out->r_gc = rec.r_gc;
      geom_out->theta = rec.theta;
      geom_out->theta_d = rec.mir.theta_d;
      geom_out->theta_delta = rec.mir.theta_d - rec.theta;
      geom_out->r_rot = rec.axis;
      geom_out->delta_q = rec.delta_q;
    }
    return true;
  }
  rec.stretched = true;

  const Vec3 d_vec = rec.mean_w - pose.r_c;
  rec.d_norm = d_vec.norm();
  rec.d_hat = d_vec / rec.d_norm;
  rec.t_pre = pose.r_a - pose.r_a.dot(rec.d_hat) * rec.d_hat;
  rec.t_norm = rec.t_pre.norm();
  if (rec.t_norm < 1e-12) {
    rec.frame_degenerate = true;
    const Vec3 e = std::abs(rec.d_hat.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    rec.theta_hat = (e - e.dot(rec.d_hat) * rec.d_hat).normalized();
    rec.p_pre = rec.theta_hat.cross(rec.d_hat);
    rec.p_norm = rec.p_pre.norm();
    rec.phi_hat = rec.p_pre / rec.p_norm;
  } else {
    rec.theta_hat = rec.t_pre / rec.t_norm;
    rec.p_pre = rec.theta_hat.cross(rec.d_hat);
    rec.p_norm = rec.p_pre.norm();
    rec.phi_hat = rec.p_pre / rec.p_norm;
  }

  if (rec.theta < 1e-6) {
    rec.kphi_limit = true;
    rec.k_phi = detail::mirror_eval(cam, 0.0, MeiParam::Normalized).d1;
  } else {
    rec.k_phi = std::sin(rec.mir.theta_d) / std::sin(rec.theta);
  }
  rec.rot_gp = quat_to_rotmat(rec.q_gp);
  polar_ratio(rec.rot_gp, rec.scales, rec.theta_hat, rec.r_norm, rec.mir,
              opts.order, rec.k_theta, rec.delta_theta, rec.delta_theta_d,
              rec.ext_arg, rec.ext_sign);

  rec.sigma = covariance_from_params(g.rotation, rec.scales);
  rec.s_theta = opts.stretch_theta ? stretch_matrix(rec.theta_hat, rec.k_theta)
                                   : Mat3::Identity();
  rec.s_phi = opts.stretch_phi ? stretch_matrix(rec.phi_hat, rec.k_phi)
                               : Mat3::Identity();
  rec.a_mat = rec.s_theta * rec.s_phi;
  rec.sigma_w = warp_covariance(rec.sigma, rec.s_theta, rec.s_phi);
  rec.eig = decompose_covariance_full(rec.sigma_w);

  out.rotation_w = rec.eig.q;
  out.scales_w = rec.eig.scales;
  out.sigma_w = rec.sigma_w;

  if (geom_out) {
    geom_out->r_gc = rec.r_gc;
    geom_out->theta = rec.theta;
    geom_out->theta_d = rec.mir.theta_d;
    geom_out->theta_delta = rec.mir.theta_d - rec.theta;
    geom_out->r_rot = rec.axis;
    geom_out->delta_q = rec.delta_q;
    geom_out->theta_hat = rec.theta_hat;
    geom_out->phi_hat = rec.phi_hat;
    geom_out->k_phi = rec.k_phi;
    geom_out->k_theta = rec.k_theta;
    geom_out->delta_theta = rec.delta_theta;
    geom_out->delta_theta_d = rec.delta_theta_d;
  }
  return true;
}

inline std::optional<WarpedGaussian> warp_gaussian(const GaussianPrimitive& g,
                                                   const CameraPose& pose,
                                                   const CameraModel& cam,
                                                   const WarpOptions& opts = {},
                                                   double margin = 0.0,
                                                   WarpGeometry* geom = nullptr) {
  WarpedGaussian out;
  WarpRecord rec;
  if (!warp_gaussian_record(g, pose, cam, opts, out, rec, margin, geom))
    return std::nullopt;
  return out;
}

}  // namespace fsplat
