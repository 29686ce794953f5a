#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "fsplat/camera.hpp"
#include "fsplat/gaussian.hpp"
#include "fsplat/warp.hpp"
#include "fsplat/warp_vjp.hpp"

namespace fsplat {

constexpr int kTileSize = 16;
constexpr double kNearPlane = 0.05;
constexpr double kCovDilation = 0.3;    // px^2, isotropic
constexpr double kAlphaCap = 0.99;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kTransmittanceFloor = 1e-4;

struct ScreenGaussian {
  Vec2 pixel_mean = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();  // dilated, eigenvalues >= kCovDilation
  double view_depth = 0.0;        // camera-frame z, meters
  Vec3 color = Vec3::Zero();
  Vec3 normal_cam = Vec3::Zero();
  double intensity = 0.0;
  double opacity = 0.0;
  int source_index = -1;
};

struct RenderOutput {
  int width = 0, height = 0, classes = 0;
  std::vector<double> color;      // H*W*3, background composited
  std::vector<double> depth;      // H*W, alpha-normalized view depth
  std::vector<double> semantic;   // H*W*C logits, alpha-normalized
  std::vector<double> normal;     // H*W*3 camera frame, alpha-normalized
  std::vector<double> intensity;  // H*W, alpha-normalized
  std::vector<double> alpha;      // H*W accumulated opacity

  static RenderOutput zeros(int w, int h, int classes) {
    RenderOutput r;
    r.width = w;
    r.height = h;
    r.classes = classes;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    r.color.assign(n * 3, 0.0);
    r.depth.assign(n, 0.0);
    r.semantic.assign(n * static_cast<std::size_t>(classes), 0.0);
    r.normal.assign(n * 3, 0.0);
    r.intensity.assign(n, 0.0);
    r.alpha.assign(n, 0.0);
    return r;
  }
};

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  WarpOptions warp;
};

// Everything the backward pass needs from a forward render.
struct RenderContext {
  int width = 0, height = 0, classes = 0;
  int tiles_x = 0, tiles_y = 0;
  CameraModel pin;  // pinhole model used for projection
  CameraPose pose;
  RenderOptions opts;

  std::vector<ScreenGaussian> screen;
  std::vector<Vec3> conic;     // inverse cov2d as (a, b, c)
  std::vector<WarpRecord> recs;
  std::vector<Quat> q_w;
  std::vector<Vec3> s_w;
  std::vector<Vec3> p_cam;
  std::vector<int> normal_axis;
  std::vector<double> normal_sign;

  std::vector<std::vector<int>> tiles;  // sorted screen indices per tile
  std::vector<double> final_T;          // per pixel
  std::vector<int> last_entry;          // per pixel; -1 = background only
  RenderOutput out;
};

struct GaussianGrads {
  Vec3 mean = Vec3::Zero();
  Quat rotation{0, 0, 0, 0};  // raw-component gradients
  Vec3 log_scales = Vec3::Zero();
  double opacity_logit = 0.0;
  ShCoeffs sh = ShCoeffs::Zero();
  std::vector<double> semantic_logits;
  double intensity_logit = 0.0;
};

namespace detail {

inline double cov2d_max_eigenvalue(const Mat2& c) {
  const double mid = 0.5 * (c(0, 0) + c(1, 1));
  const double off = 0.5 * (c(0, 0) - c(1, 1));
  return mid + std::sqrt(off * off + c(0, 1) * c(0, 1));
}

inline Eigen::Matrix<double, 2, 3> perspective_jacobian(const Vec3& p, double fx,
                                                        double fy) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << fx * iz, 0.0, -fx * p.x() * iz * iz,
       0.0, fy * iz, -fy * p.y() * iz * iz;
  return j;
}

}  // namespace detail

inline std::optional<ScreenGaussian> project_to_screen(const WarpedGaussian& wg,
                                                       const CameraPose& pose,
                                                       const CameraModel& pin) {
  const Vec3 p = pose.world_to_camera(wg.mean_w);
  if (!(p.z() > kNearPlane)) return std::nullopt;

  ScreenGaussian sg;
  const double iz = 1.0 / p.z();
  sg.pixel_mean =
      Vec2(pin.fx * p.x() * iz + pin.u0, pin.fy * p.y() * iz + pin.v0);
  sg.view_depth = p.z();
  sg.source_index = wg.source_index;

  const Eigen::Matrix<double, 2, 3> j =
      detail::perspective_jacobian(p, pin.fx, pin.fy);
  const Mat3 rcg = pose.R_wc * quat_to_rotmat(wg.rotation_w);
  const Mat3 a = rcg * wg.scales_w.asDiagonal();
  const Mat2 raw = j * (a * a.transpose()) * j.transpose();
  const double off = 0.5 * (raw(0, 1) + raw(1, 0));
  sg.cov2d << raw(0, 0) + kCovDilation, off, off, raw(1, 1) + kCovDilation;

  const double radius = 3.0 * std::sqrt(detail::cov2d_max_eigenvalue(sg.cov2d));
  if (sg.pixel_mean.x() + radius < 0.0 || sg.pixel_mean.x() - radius > pin.width ||
      sg.pixel_mean.y() + radius < 0.0 || sg.pixel_mean.y() - radius > pin.height)
    return std::nullopt;
  return sg;
}

inline std::optional<ScreenGaussian> project_to_screen(const GaussianPrimitive& g,
                                                       const CameraPose& pose,
                                                       const CameraModel& pin) {
  WarpedGaussian wg;
  wg.mean_w = g.mean;
  wg.rotation_w = g.rotation;
  wg.scales_w = g.scales();
  wg.sigma_w = covariance_from_params(g);
  return project_to_screen(wg, pose, pin);
}

// Channel packing used by the blend loops:
// [r, g, b, z, nx, ny, nz, intensity, sem_0..C-1, accumulated weight].
inline RenderOutput render(const std::vector<GaussianPrimitive>& gs,
                           const CameraPose& pose, const CameraModel& cam,
                           const RenderOptions& opts = {},
                           RenderContext* ctx_out = nullptr) {
  const int width = cam.width, height = cam.height;
  const int classes = gs.empty() ? 0 : static_cast<int>(gs[0].semantic_logits.size());
  for (const auto& g : gs)
    if (static_cast<int>(g.semantic_logits.size()) != classes)
      throw std::invalid_argument("render: inconsistent semantic logit counts");
  const bool fisheye = cam.is_fisheye();

  RenderContext local;
  RenderContext& ctx = ctx_out ? *ctx_out : local;
  ctx = RenderContext{};
  ctx.width = width;
  ctx.height = height;
  ctx.classes = classes;
  ctx.pin = fisheye ? pinhole_with_matching_focal(cam) : cam;
  ctx.pose = pose;
  ctx.opts = opts;

  const std::size_t n = gs.size();
  std::vector<std::uint8_t> keep(n, 0);
  std::vector<ScreenGaussian> sg_tmp(n);
  std::vector<WarpRecord> rec_tmp(n);
  std::vector<Quat> qw_tmp(n);
  std::vector<Vec3> sw_tmp(n);
  std::vector<Vec3> pc_tmp(n);
  std::vector<int> axis_tmp(n, 0);
  std::vector<double> sign_tmp(n, 1.0);

  parallel_for(n, [&](std::size_t i) {
    const GaussianPrimitive& g = gs[i];
    double margin = 0.0;
    if (fisheye) {
      const double dist = (g.mean - pose.r_c).norm();
      if (dist < 1e-12) return;
      margin = 3.0 * g.scales().maxCoeff() / dist;
    }
    WarpedGaussian wg;
    WarpRecord rec;
    if (!warp_gaussian_record(g, pose, cam, opts.warp, wg, rec, margin)) return;
    wg.source_index = static_cast<int>(i);
    auto sg = project_to_screen(wg, pose, ctx.pin);
    if (!sg) return;

    sg->opacity = g.opacity();
    sg->color = sh_to_rgb(g.sh, g.mean - pose.r_c, 3);
    sg->intensity = sigmoid(g.intensity_logit);

    int axis = 0;
    wg.scales_w.minCoeff(&axis);
    Vec3 ek = Vec3::Zero();
    ek[axis] = 1.0;
    const Vec3 n_raw = quat_rotate(wg.rotation_w, ek);
    const double sign = n_raw.dot(pose.r_c - wg.mean_w) >= 0.0 ? 1.0 : -1.0;
    sg->normal_cam = pose.R_wc * (sign * n_raw);

    sg_tmp[i] = *sg;
    rec_tmp[i] = rec;
    qw_tmp[i] = wg.rotation_w;
    sw_tmp[i] = wg.scales_w;
    pc_tmp[i] = pose.world_to_camera(wg.mean_w);
    axis_tmp[i] = axis;
    sign_tmp[i] = sign;
    keep[i] = 1;
  });

  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    ctx.screen.push_back(sg_tmp[i]);
    ctx.recs.push_back(rec_tmp[i]);
    ctx.q_w.push_back(qw_tmp[i]);
    ctx.s_w.push_back(sw_tmp[i]);
    ctx.p_cam.push_back(pc_tmp[i]);
    ctx.normal_axis.push_back(axis_tmp[i]);
    ctx.normal_sign.push_back(sign_tmp[i]);
    const Mat2& c = ctx.screen.back().cov2d;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(0, 1);
    ctx.conic.push_back(Vec3(c(1, 1) / det, -c(0, 1) / det, c(0, 0) / det));
  }

  ctx.tiles_x = (width + kTileSize - 1) / kTileSize;
  ctx.tiles_y = (height + kTileSize - 1) / kTileSize;
  ctx.tiles.assign(static_cast<std::size_t>(ctx.tiles_x) * ctx.tiles_y, {});
  for (int s = 0; s < static_cast<int>(ctx.screen.size()); ++s) {
    const ScreenGaussian& e = ctx.screen[s];
    const double r = 3.0 * std::sqrt(detail::cov2d_max_eigenvalue(e.cov2d));
    const int tx0 = std::max(0, static_cast<int>(std::floor((e.pixel_mean.x() - r) / kTileSize)));
    const int tx1 = std::min(ctx.tiles_x - 1,
                             static_cast<int>(std::floor((e.pixel_mean.x() + r) / kTileSize)));
    const int ty0 = std::max(0, static_cast<int>(std::floor((e.pixel_mean.y() - r) / kTileSize)));
    const int ty1 = std::min(ctx.tiles_y - 1,
                             static_cast<int>(std::floor((e.pixel_mean.y() + r) / kTileSize)));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        ctx.tiles[static_cast<std::size_t>(ty) * ctx.tiles_x + tx].push_back(s);
  }
  parallel_for(ctx.tiles.size(), [&](std::size_t t) {
    std::sort(ctx.tiles[t].begin(), ctx.tiles[t].end(), [&](int a, int b) {
      const ScreenGaussian& ga = ctx.screen[a];
      const ScreenGaussian& gb = ctx.screen[b];
      if (ga.view_depth != gb.view_depth) return ga.view_depth < gb.view_depth;
      return ga.source_index < gb.source_index;
    });
  }, 1);

  const std::size_t n_pix = static_cast<std::size_t>(width) * height;
  ctx.out = RenderOutput::zeros(width, height, classes);
  ctx.final_T.assign(n_pix, 1.0);
  ctx.last_entry.assign(n_pix, -1);

  const int n_ch = 9 + classes;
  parallel_for(ctx.tiles.size(), [&](std::size_t t) {
    const auto& list = ctx.tiles[t];
    const int tx = static_cast<int>(t) % ctx.tiles_x;
    const int ty = static_cast<int>(t) / ctx.tiles_x;
    std::vector<double> acc(n_ch);
    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        double trans = 1.0;
        int last = -1;
        for (int idx = 0; idx < static_cast<int>(list.size()); ++idx) {
          const ScreenGaussian& e = ctx.screen[list[idx]];
          const Vec3& con = ctx.conic[list[idx]];
          const double dx = (x + 0.5) - e.pixel_mean.x();
          const double dy = (y + 0.5) - e.pixel_mean.y();
          const double qf = dx * (con[0] * dx + con[1] * dy) +
                            dy * (con[1] * dx + con[2] * dy);
          const double alpha = std::min(kAlphaCap, e.opacity * std::exp(-0.5 * qf));
          if (alpha < kAlphaSkip) continue;
          const double w = alpha * trans;
          acc[0] += w * e.color[0];
          acc[1] += w * e.color[1];
          acc[2] += w * e.color[2];
          acc[3] += w * e.view_depth;
          acc[4] += w * e.normal_cam[0];
          acc[5] += w * e.normal_cam[1];
          acc[6] += w * e.normal_cam[2];
          acc[7] += w * e.intensity;
          const auto& sem = gs[e.source_index].semantic_logits;
          for (int c = 0; c < classes; ++c) acc[8 + c] += w * sem[c];
          acc[8 + classes] += w;
          last = idx;
          trans *= 1.0 - alpha;
          if (trans < kTransmittanceFloor) break;
        }
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        for (int c = 0; c < 3; ++c)
          ctx.out.color[p * 3 + c] = acc[c] + trans * opts.background[c];
        const double a_sum = acc[8 + classes];
        const double inv = a_sum > 0.0 ? 1.0 / a_sum : 0.0;
        ctx.out.depth[p] = acc[3] * inv;
        for (int c = 0; c < 3; ++c) ctx.out.normal[p * 3 + c] = acc[4 + c] * inv;
        ctx.out.intensity[p] = acc[7] * inv;
        for (int c = 0; c < classes; ++c)
          ctx.out.semantic[p * classes + c] = acc[8 + c] * inv;
        ctx.out.alpha[p] = a_sum;
        ctx.final_T[p] = trans;
        ctx.last_entry[p] = last;
      }
    }
  }, 1);

  return ctx.out;
}

// adj uses RenderOutput as the adjoint container: every field holds
// d(loss)/d(that output value). Gradient layout per tile entry:
// [mu_x, mu_y, cov_xx, cov_xy, cov_yy, o, r, g, b, z, nx, ny, nz, I, sem...].
inline std::vector<GaussianGrads> render_backward(
    const RenderContext& ctx, const std::vector<GaussianPrimitive>& gs,
    const RenderOutput& adj) {
  const int width = ctx.width, height = ctx.height, classes = ctx.classes;
  const int n_ch = 9 + classes;
  const int g_w = 14 + classes;

  std::vector<std::vector<double>> tile_grads(ctx.tiles.size());
  parallel_for(ctx.tiles.size(), [&](std::size_t t) {
    const auto& list = ctx.tiles[t];
    if (list.empty()) return;
    auto& part = tile_grads[t];
    part.assign(list.size() * g_w, 0.0);
    const int tx = static_cast<int>(t) % ctx.tiles_x;
    const int ty = static_cast<int>(t) / ctx.tiles_x;
    std::vector<double> obar(n_ch), suffix(n_ch);
    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        const int last = ctx.last_entry[p];
        if (last < 0) continue;

        const double inv_a = 1.0 / ctx.out.alpha[p];
        double abar = adj.alpha[p];
        for (int c = 0; c < 3; ++c) obar[c] = adj.color[p * 3 + c];
        obar[3] = adj.depth[p] * inv_a;
        abar -= adj.depth[p] * ctx.out.depth[p] * inv_a;
        for (int c = 0; c < 3; ++c) {
          obar[4 + c] = adj.normal[p * 3 + c] * inv_a;
          abar -= adj.normal[p * 3 + c] * ctx.out.normal[p * 3 + c] * inv_a;
        }
        obar[7] = adj.intensity[p] * inv_a;
        abar -= adj.intensity[p] * ctx.out.intensity[p] * inv_a;
        for (int c = 0; c < classes; ++c) {
          obar[8 + c] = adj.semantic[p * classes + c] * inv_a;
          abar -= adj.semantic[p * classes + c] * ctx.out.semantic[p * classes + c] * inv_a;
        }
        obar[8 + classes] = abar;

        std::fill(suffix.begin(), suffix.end(), 0.0);
        const double t_fin = ctx.final_T[p];
        for (int c = 0; c < 3; ++c) suffix[c] = t_fin * ctx.opts.background[c];
        double t_cur = t_fin;
        for (int idx = last; idx >= 0; --idx) {
          const int s = list[idx];
          const ScreenGaussian& e = ctx.screen[s];
          const Vec3& con = ctx.conic[s];
          const double dx = (x + 0.5) - e.pixel_mean.x();
          const double dy = (y + 0.5) - e.pixel_mean.y();
          const double e2x = con[0] * dx + con[1] * dy;
          const double e2y = con[1] * dx + con[2] * dy;
          const double qf = dx * e2x + dy * e2y;
          const double gexp = std::exp(-0.5 * qf);
          const double alpha = std::min(kAlphaCap, e.opacity * gexp);
          if (alpha < kAlphaSkip) continue;
          const double om = 1.0 - alpha;
          const double t_i = t_cur / om;
          const double w = alpha * t_i;

          const auto& sem = gs[e.source_index].semantic_logits;
          double dalpha = 0.0;
          dalpha += obar[0] * (t_i * e.color[0] - suffix[0] / om);
          dalpha += obar[1] * (t_i * e.color[1] - suffix[1] / om);
          dalpha += obar[2] * (t_i * e.color[2] - suffix[2] / om);
          dalpha += obar[3] * (t_i * e.view_depth - suffix[3] / om);
          dalpha += obar[4] * (t_i * e.normal_cam[0] - suffix[4] / om);
          dalpha += obar[5] * (t_i * e.normal_cam[1] - suffix[5] / om);
          dalpha += obar[6] * (t_i * e.normal_cam[2] - suffix[6] / om);
          dalpha += obar[7] * (t_i * e.intensity - suffix[7] / om);
          for (int c = 0; c < classes; ++c)
            dalpha += obar[8 + c] * (t_i * sem[c] - suffix[8 + c] / om);
          dalpha += obar[8 + classes] * (t_i - suffix[8 + classes] / om);

          double* gp = part.data() + static_cast<std::size_t>(idx) * g_w;
          gp[6] += w * obar[0];
          gp[7] += w * obar[1];
          gp[8] += w * obar[2];
          gp[9] += w * obar[3];
          gp[10] += w * obar[4];
          gp[11] += w * obar[5];
          gp[12] += w * obar[6];
          gp[13] += w * obar[7];
          for (int c = 0; c < classes; ++c) gp[14 + c] += w * obar[8 + c];

          if (e.opacity * gexp < kAlphaCap) {
            gp[5] += gexp * dalpha;
            const double qbar = -0.5 * e.opacity * gexp * dalpha;
            gp[0] += -2.0 * qbar * e2x;
            gp[1] += -2.0 * qbar * e2y;
            gp[2] += -qbar * e2x * e2x;
            gp[3] += -qbar * e2x * e2y;
            gp[4] += -qbar * e2y * e2y;
          }

          suffix[0] += w * e.color[0];
          suffix[1] += w * e.color[1];
          suffix[2] += w * e.color[2];
          suffix[3] += w * e.view_depth;
          suffix[4] += w * e.normal_cam[0];
          suffix[5] += w * e.normal_cam[1];
          suffix[6] += w * e.normal_cam[2];
          suffix[7] += w * e.intensity;
          for (int c = 0; c < classes; ++c) suffix[8 + c] += w * sem[c];
          suffix[8 + classes] += w;
          t_cur = t_i;
        }
      }
    }
  }, 1);

  // Per-tile partials folded in tile-index order.
  const std::size_t n_screen = ctx.screen.size();
  std::vector<double> acc(n_screen * g_w, 0.0);
  for (std::size_t t = 0; t < ctx.tiles.size(); ++t) {
    if (tile_grads[t].empty()) continue;
    const auto& list = ctx.tiles[t];
    for (std::size_t idx = 0; idx < list.size(); ++idx) {
      double* dst = acc.data() + static_cast<std::size_t>(list[idx]) * g_w;
      const double* src = tile_grads[t].data() + idx * g_w;
      for (int k = 0; k < g_w; ++k) dst[k] += src[k];
    }
  }

  std::vector<GaussianGrads> grads(gs.size());
  for (auto& gg : grads) gg.semantic_logits.assign(classes, 0.0);

  parallel_for(n_screen, [&](std::size_t si) {
    const double* gp = acc.data() + si * g_w;
    const ScreenGaussian& e = ctx.screen[si];
    const GaussianPrimitive& g = gs[e.source_index];
    GaussianGrads& gg = grads[e.source_index];

    gg.opacity_logit += gp[5] * sigmoid_grad(g.opacity_logit);
    gg.intensity_logit += gp[13] * sigmoid_grad(g.intensity_logit);
    for (int c = 0; c < classes; ++c) gg.semantic_logits[c] += gp[14 + c];

    const Vec3 color_bar(gp[6], gp[7], gp[8]);
    Vec3 dir_bar = Vec3::Zero();
    sh_to_rgb_vjp(g.sh, g.mean - ctx.pose.r_c, 3, color_bar, gg.sh, dir_bar);
    gg.mean += dir_bar;

    const Vec3& p = ctx.p_cam[si];
    const double fx = ctx.pin.fx, fy = ctx.pin.fy;
    const double iz = 1.0 / p.z();
    const Eigen::Matrix<double, 2, 3> j = detail::perspective_jacobian(p, fx, fy);
    Mat2 cbar;
    cbar << gp[2], gp[3], gp[3], gp[4];
    const Mat3 rot = quat_to_rotmat(ctx.q_w[si]);
    const Mat3 rcg = ctx.pose.R_wc * rot;
    const Mat3 a = rcg * ctx.s_w[si].asDiagonal();
    const Mat3 m = a * a.transpose();
    const Mat3 mbar = j.transpose() * cbar * j;
    const Eigen::Matrix<double, 2, 3> jbar = 2.0 * (cbar * (j * m));
    const Mat3 abar = 2.0 * (mbar * a);
    const Vec3 sw_bar = (rcg.transpose() * abar).diagonal();
    Quat qw_bar =
        quat_to_rotmat_vjp(ctx.q_w[si], ctx.pose.R_wc.transpose() * (abar * ctx.s_w[si].asDiagonal()));

    const Vec3 normal_bar(gp[10], gp[11], gp[12]);
    if (normal_bar.squaredNorm() > 0.0) {
      const Vec3 nwb = ctx.normal_sign[si] * (ctx.pose.R_wc.transpose() * normal_bar);
      Vec3 ek = Vec3::Zero();
      ek[ctx.normal_axis[si]] = 1.0;
      Vec3 ek_bar = Vec3::Zero();
      quat_rotate_vjp(ctx.q_w[si], ek, nwb, qw_bar, ek_bar);
    }

    Vec3 pbar = Vec3::Zero();
    pbar.x() += jbar(0, 2) * (-fx * iz * iz) + gp[0] * fx * iz;
    pbar.y() += jbar(1, 2) * (-fy * iz * iz) + gp[1] * fy * iz;
    pbar.z() += jbar(0, 0) * (-fx * iz * iz) + jbar(1, 1) * (-fy * iz * iz) +
                jbar(0, 2) * (2.0 * fx * p.x() * iz * iz * iz) +
                jbar(1, 2) * (2.0 * fy * p.y() * iz * iz * iz) +
                gp[0] * (-fx * p.x() * iz * iz) + gp[1] * (-fy * p.y() * iz * iz) +
                gp[9];
    const Vec3 mean_w_bar = ctx.pose.R_wc.transpose() * pbar;

    WarpGrads wg;
    warp_vjp(ctx.recs[si], g, ctx.pose, mean_w_bar, qw_bar, sw_bar, wg);
    gg.mean += wg.mean;
    gg.rotation.w += wg.rotation.w;
    gg.rotation.x += wg.rotation.x;
    gg.rotation.y += wg.rotation.y;
    gg.rotation.z += wg.rotation.z;
    gg.log_scales += wg.log_scales;
  });

  return grads;
}

}  // namespace fsplat
