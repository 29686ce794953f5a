#pragma once

#include "fsplat/warp.hpp"

namespace fsplat {

struct WarpGrads {
  Vec3 mean = Vec3::Zero();
  Quat rotation{0, 0, 0, 0};
  Vec3 log_scales = Vec3::Zero();
};

// Reverse-mode path through warp_gaussian: upstream gradients w.r.t.
// (mean_w, rotation_w, scales_w) are pulled back onto the source primitive.
// All quaternion gradients are w.r.t. the raw polynomial forms.
inline void warp_vjp(const WarpRecord& rec, const GaussianPrimitive& g,
                     const CameraPose& pose, const Vec3& mean_w_bar,
                     const Quat& rotation_w_bar, const Vec3& scales_w_bar,
                     WarpGrads& grads) {
  const Vec3& s = rec.scales;

  if (!rec.fisheye) {
    grads.mean += mean_w_bar;
    grads.rotation.w += rotation_w_bar.w;
    grads.rotation.x += rotation_w_bar.x;
    grads.rotation.y += rotation_w_bar.y;
    grads.rotation.z += rotation_w_bar.z;
    for (int i = 0; i < 3; ++i) grads.log_scales[i] += scales_w_bar[i] * s[i];
    return;
  }

  Vec3 s_bar = Vec3::Zero();
  Vec3 mw_bar = mean_w_bar;
  Quat qgp_bar{0, 0, 0, 0};
  double theta_bar = 0, theta_d_bar = 0, rnorm_bar = 0;

  if (rec.stretched) {
    Mat3 sigw_bar = decompose_covariance_vjp(rec.eig, scales_w_bar, rotation_w_bar);
    sigw_bar = 0.5 * (sigw_bar + sigw_bar.transpose()).eval();

    const Mat3 a_bar = 2.0 * sigw_bar * rec.a_mat * rec.sigma;
    const Mat3 sig_bar = rec.a_mat.transpose() * sigw_bar * rec.a_mat;

    const Mat3 sth_bar = a_bar * rec.s_phi.transpose();
    const Mat3 sph_bar = rec.s_theta.transpose() * a_bar;

    double kth_bar = 0, kph_bar = 0;
    Vec3 thhat_bar = Vec3::Zero(), phhat_bar = Vec3::Zero();
    if (rec.opts.stretch_theta) {
      kth_bar = rec.theta_hat.dot(sth_bar * rec.theta_hat);
      thhat_bar += (rec.k_theta - 1.0) * (sth_bar + sth_bar.transpose()) * rec.theta_hat;
    }
    if (rec.opts.stretch_phi) {
      kph_bar = rec.phi_hat.dot(sph_bar * rec.phi_hat);
      phhat_bar += (rec.k_phi - 1.0) * (sph_bar + sph_bar.transpose()) * rec.phi_hat;
    }

    // Source covariance R diag(s^2) R^T.
    const Mat3 rg = quat_to_rotmat(g.rotation);
    const Mat3 rg_bar =
        (sig_bar + sig_bar.transpose()) * rg * s.cwiseProduct(s).asDiagonal();
    const Quat qg_bar_cov = quat_to_rotmat_vjp(g.rotation, rg_bar);
    grads.rotation.w += qg_bar_cov.w;
    grads.rotation.x += qg_bar_cov.x;
    grads.rotation.y += qg_bar_cov.y;
    grads.rotation.z += qg_bar_cov.z;
    const Mat3 d_bar = rg.transpose() * sig_bar * rg;
    for (int i = 0; i < 3; ++i) s_bar[i] += 2.0 * s[i] * d_bar(i, i);

    // Polar ratio.
    double dth_bar = 0;
    if (rec.opts.stretch_theta) {
      if (rec.opts.order == 1) {
        theta_bar += kth_bar * rec.mir.d2;
      } else {
        theta_bar += kth_bar * (rec.mir.d2 + 0.5 * rec.mir.d3 * rec.delta_theta);
        dth_bar += kth_bar * 0.5 * rec.mir.d2;
      }
    }
    if (dth_bar != 0.0) {
      const int ai = rec.ext_arg;
      const double coef = 2.0 * rec.ext_sign / rec.r_norm;
      thhat_bar += dth_bar * coef * s[ai] * rec.rot_gp.col(ai);
      const Vec3 va_bar = dth_bar * coef * rec.theta_hat;
      s_bar[ai] += rec.rot_gp.col(ai).dot(va_bar);
      Mat3 rp_bar = Mat3::Zero();
      rp_bar.col(ai) = s[ai] * va_bar;
      const Quat qgp_from_ext = quat_to_rotmat_vjp(rec.q_gp, rp_bar);
      qgp_bar.w += qgp_from_ext.w;
      qgp_bar.x += qgp_from_ext.x;
      qgp_bar.y += qgp_from_ext.y;
      qgp_bar.z += qgp_from_ext.z;
      rnorm_bar += -dth_bar * rec.delta_theta / rec.r_norm;
    }

    // Tangential ratio sin(theta_d)/sin(theta).
    if (rec.opts.stretch_phi && !rec.kphi_limit) {
      const double sth = std::sin(rec.theta);
      theta_d_bar += kph_bar * std::cos(rec.mir.theta_d) / sth;
      theta_bar += -kph_bar * std::sin(rec.mir.theta_d) * std::cos(rec.theta) /
                   (sth * sth);
    }

    // Local frame; the degenerate on-axis branch is treated as constant.
    if (!rec.frame_degenerate) {
      const Vec3 p_bar =
          (phhat_bar - rec.phi_hat * rec.phi_hat.dot(phhat_bar)) / rec.p_norm;
      Vec3 dhat_bar = p_bar.cross(rec.theta_hat);
      thhat_bar += rec.d_hat.cross(p_bar);

      const Vec3 t_bar =
          (thhat_bar - rec.theta_hat * rec.theta_hat.dot(thhat_bar)) / rec.t_norm;
      dhat_bar += -t_bar.dot(rec.d_hat) * pose.r_a - pose.r_a.dot(rec.d_hat) * t_bar;

      mw_bar += (dhat_bar - rec.d_hat * rec.d_hat.dot(dhat_bar)) / rec.d_norm;
    }
  } else {
    qgp_bar.w += rotation_w_bar.w;
    qgp_bar.x += rotation_w_bar.x;
    qgp_bar.y += rotation_w_bar.y;
    qgp_bar.z += rotation_w_bar.z;
    s_bar += scales_w_bar;
  }

  // mean_w = rotate(delta_q, r_gc) + r_c.
  Quat dq_bar{0, 0, 0, 0};
  Vec3 rgc_bar = Vec3::Zero();
  quat_rotate_vjp(rec.delta_q, rec.r_gc, mw_bar, dq_bar, rgc_bar);

  // q_gp = delta_q (x) rotation.
  Quat dq_bar2, qg_bar2;
  quat_multiply_vjp(rec.delta_q, g.rotation, qgp_bar, dq_bar2, qg_bar2);
  dq_bar.w += dq_bar2.w;
  dq_bar.x += dq_bar2.x;
  dq_bar.y += dq_bar2.y;
  dq_bar.z += dq_bar2.z;
  grads.rotation.w += qg_bar2.w;
  grads.rotation.x += qg_bar2.x;
  grads.rotation.y += qg_bar2.y;
  grads.rotation.z += qg_bar2.z;

  if (!rec.tiny_theta) {
    // delta_q = (cos(a/2), sin(a/2) axis), a = theta - theta_d.
    const double ha = 0.5 * (rec.theta - rec.mir.theta_d);
    const double ca = std::cos(ha), sa = std::sin(ha);
    const Vec3 dqv_bar(dq_bar.x, dq_bar.y, dq_bar.z);
    const double alpha_bar = -0.5 * sa * dq_bar.w + 0.5 * ca * rec.axis.dot(dqv_bar);
    Vec3 axis_bar = sa * dqv_bar;
    theta_bar += alpha_bar;
    theta_d_bar += -alpha_bar;

    // axis = (r_hat x r_a) / ||.||.
    const Vec3 c_bar = (axis_bar - rec.axis * rec.axis.dot(axis_bar)) / rec.axis_norm;
    const Vec3 rhat_bar = pose.r_a.cross(c_bar);

    theta_bar += theta_d_bar * rec.mir.d1;

    const double cth = std::cos(rec.theta), snth = std::sin(rec.theta);
    rgc_bar += theta_bar * (-(pose.r_a - cth * rec.r_hat) / (rec.r_norm * snth));
    rgc_bar += (rhat_bar - rec.r_hat * rec.r_hat.dot(rhat_bar)) / rec.r_norm;
    rgc_bar += rnorm_bar * rec.r_hat;
  }

  grads.mean += rgc_bar;
  for (int i = 0; i < 3; ++i) grads.log_scales[i] += s_bar[i] * s[i];
}

inline WarpGrads warp_vjp(const GaussianPrimitive& g, const CameraPose& pose,
                          const CameraModel& cam, const WarpOptions& opts,
                          const Vec3& mean_w_bar, const Quat& rotation_w_bar,
                          const Vec3& scales_w_bar) {
  WarpedGaussian out;
  WarpRecord rec;
  if (!warp_gaussian_record(g, pose, cam, opts, out, rec))
    throw std::domain_error("warp_vjp: gaussian is culled for this camera");
  WarpGrads grads;
  warp_vjp(rec, g, pose, mean_w_bar, rotation_w_bar, scales_w_bar, grads);
  return grads;
}

}  // namespace fsplat
