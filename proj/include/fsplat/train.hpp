#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsplat/camera_io.hpp"
#include "fsplat/dataset.hpp"
#include "fsplat/density.hpp"
#include "fsplat/losses.hpp"
#include "fsplat/metrics.hpp"
#include "fsplat/optim.hpp"
#include "fsplat/rasterize.hpp"
#include "fsplat/scene.hpp"

namespace fsplat {

struct TrainConfig {
  int iterations = 2000;
  std::uint64_t seed = 0;

  GaussianLearningRates lr;
  double lr_position_final = 1.6e-6;
  double lr_appearance = 1e-3;

  double lambda_rgb = 0.2;   // D-SSIM share of the image loss
  double weight_depth = 1.0;
  double weight_normal = 1.0;
  double weight_semantic = 0.01;
  double lambda_reg = 0.01;
  double lambda_lidar = 0.1;

  int density_start = 500;
  int density_interval = 100;
  double dead_opacity = 0.005;

  Vec3 background = Vec3::Zero();
  WarpOptions warp;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0))
        throw ConfigError(std::string("train config: ") + name +
                          " must be positive");
    };
    positive(lr.position, "lr_position");
    positive(lr_position_final, "lr_position_final");
    positive(lr.scaling, "lr_scaling");
    positive(lr.rotation, "lr_rotation");
    positive(lr.sh, "lr_sh");
    positive(lr.opacity, "lr_opacity");
    positive(lr_appearance, "lr_appearance");
    if (iterations < 0)
      throw ConfigError("train config: iterations must be >= 0");
    if (density_interval <= 0)
      throw ConfigError("train config: density_interval must be positive");
    if (warp.order != 1 && warp.order != 2)
      throw ConfigError("train config: order must be 1 or 2");
  }

  double position_lr_at(int iteration) const {
    const double f = iterations > 1
                         ? static_cast<double>(iteration - 1) / (iterations - 1)
                         : 0.0;
    return lr.position * std::pow(lr_position_final / lr.position, f);
  }
};

inline TrainConfig train_config_from_json(const Json& doc) {
  using detail::get_field;
  const std::string ctx = "train config";
  detail::check_known_fields(
      doc, {"iterations", "seed", "lr_position", "lr_position_final", "lr_scaling",
            "lr_rotation", "lr_sh", "lr_opacity", "lr_appearance", "lambda_rgb",
            "weight_depth", "weight_normal", "weight_semantic", "lambda_reg",
            "lambda_lidar", "density_start", "density_interval", "dead_opacity",
            "background", "stretch_phi", "stretch_theta", "order"},
      ctx);
  TrainConfig cfg;
  auto opt = [&](const char* key, auto& slot) {
    if (doc.contains(key))
      slot = get_field<std::decay_t<decltype(slot)>>(doc, key, ctx);
  };
  opt("iterations", cfg.iterations);
  opt("seed", cfg.seed);
  opt("lr_position", cfg.lr.position);
  opt("lr_position_final", cfg.lr_position_final);
  opt("lr_scaling", cfg.lr.scaling);
  opt("lr_rotation", cfg.lr.rotation);
  opt("lr_sh", cfg.lr.sh);
  opt("lr_opacity", cfg.lr.opacity);
  opt("lr_appearance", cfg.lr_appearance);
  opt("lambda_rgb", cfg.lambda_rgb);
  opt("weight_depth", cfg.weight_depth);
  opt("weight_normal", cfg.weight_normal);
  opt("weight_semantic", cfg.weight_semantic);
  opt("lambda_reg", cfg.lambda_reg);
  opt("lambda_lidar", cfg.lambda_lidar);
  opt("density_start", cfg.density_start);
  opt("density_interval", cfg.density_interval);
  opt("dead_opacity", cfg.dead_opacity);
  if (doc.contains("background")) {
    const auto bg = get_field<std::vector<double>>(doc, "background", ctx);
    if (bg.size() != 3)
      throw ConfigError(ctx + std::string(": background must have 3 entries"));
    cfg.background = Vec3(bg[0], bg[1], bg[2]);
  }
  opt("stretch_phi", cfg.warp.stretch_phi);
  opt("stretch_theta", cfg.warp.stretch_theta);
  opt("order", cfg.warp.order);
  cfg.validate();
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("train config: cannot open " + path);
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ConfigError("train config: parse error in " + path + ": " + e.what());
  }
  return train_config_from_json(doc);
}

struct FrameLoss {
  LossBreakdown terms;
  std::vector<GaussianGrads> grads;  // aligned with the assembled gaussian list
  Vec3 appearance_scale_bar = Vec3::Zero();
  Vec3 appearance_bias_bar = Vec3::Zero();
  double psnr_train = 0.0;
};

// loss + gradients of one frame at fixed parameters; gs is the assembled set
inline FrameLoss compute_frame_loss(
    const std::vector<GaussianPrimitive>& gs, const FrameSample& frame,
    const NamedCamera& cam,
    const std::map<std::string, AppearanceCorrection>& appearance,
    const TrainConfig& cfg) {
  RenderOptions opts;
  opts.background = cfg.background;
  opts.warp = cfg.warp;
  RenderContext ctx;
  const RenderOutput out = render(gs, frame.pose, cam.model, opts, &ctx);
  const std::size_t npix = static_cast<std::size_t>(out.width) * out.height;

  FrameLoss fl;
  RenderOutput adj = RenderOutput::zeros(out.width, out.height, out.classes);

  Image rendered(out.width, out.height, 3);
  rendered.data = apply_appearance(out.color, cam.id, appearance);
  Image img_grad;
  const double rgb =
      compute_image_loss(rendered, frame.image, &img_grad, cfg.lambda_rgb);
  (cam.model.kind == CameraKind::Pinhole ? fl.terms.rgb_pinhole
                                         : fl.terms.rgb_fisheye) = rgb;
  std::vector<double> color_bar;
  apply_appearance_vjp(out.color, cam.id, appearance, img_grad.data, color_bar,
                       fl.appearance_scale_bar, fl.appearance_bias_bar);
  adj.color = std::move(color_bar);

  std::vector<std::uint8_t> mask;
  const std::vector<double>* lidar_p = nullptr;
  const std::vector<std::uint8_t>* mask_p = nullptr;
  const std::vector<double>* mono_p = nullptr;
  if (frame.lidar_depth) {
    lidar_p = &frame.lidar_depth->data;
    mask.resize(npix);
    for (std::size_t i = 0; i < npix; ++i)
      mask[i] = frame.lidar_depth->data[i] > 0.0;
    mask_p = &mask;
  }
  if (frame.mono_depth) mono_p = &frame.mono_depth->data;
  if ((lidar_p || mono_p) && cfg.weight_depth != 0.0) {
    std::vector<double> dgrad;
    fl.terms.depth =
        cfg.weight_depth *
        compute_depth_loss(out.depth, lidar_p, mask_p, mono_p, &dgrad);
    for (std::size_t i = 0; i < npix; ++i)
      adj.depth[i] += cfg.weight_depth * dgrad[i];
  }

  if (frame.semantic && out.classes > 0) {
    std::vector<double> sgrad;
    fl.terms.semantic = compute_semantic_loss(
        out.semantic, out.classes, *frame.semantic, &sgrad, cfg.weight_semantic);
    adj.semantic = std::move(sgrad);
  }

  if (cfg.weight_normal != 0.0) {
    std::vector<double> gn, gd;
    fl.terms.normal =
        cfg.weight_normal * compute_normal_loss(out.normal, out.depth,
                                                cam.model, &gn, &gd);
    for (std::size_t i = 0; i < npix; ++i) {
      adj.depth[i] += cfg.weight_normal * gd[i];
      for (int c = 0; c < 3; ++c)
        adj.normal[i * 3 + c] += cfg.weight_normal * gn[i * 3 + c];
    }
  }

  fl.grads = render_backward(ctx, gs, adj);
  fl.terms.reg = compute_reg_loss(gs, &fl.grads, cfg.lambda_reg);
  fl.terms.finalize();
  fl.psnr_train = psnr(rendered, frame.image);
  return fl;
}

struct TrainResult {
  std::vector<std::string> metric_lines;  // deterministic given the seed
  std::vector<std::string> timing_lines;  // wall_ms sidecar
};

namespace detail {

inline void check_loss_finite(const LossBreakdown& lb, int iteration) {
  auto check = [&](double v, const char* name) {
    if (!std::isfinite(v))
      throw std::runtime_error("train: loss term " + std::string(name) +
                               " is not finite at iteration " +
                               std::to_string(iteration));
  };
  check(lb.rgb_pinhole, "rgb_pinhole");
  check(lb.rgb_fisheye, "rgb_fisheye");
  check(lb.depth, "depth");
  check(lb.semantic, "semantic");
  check(lb.normal, "normal");
  check(lb.reg, "reg");
  if (lb.lidar) check(*lb.lidar, "lidar");
  check(lb.total, "total");
}

}  // namespace detail

inline TrainResult train(const Dataset& ds, SceneModel& scene,
                         const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res;
  if (cfg.iterations == 0) return res;

  // round-robin across cameras, each cycling through its own frames
  std::vector<std::vector<int>> frames_by_cam(ds.cameras.size());
  for (int i = 0; i < static_cast<int>(ds.frames.size()); ++i) {
    for (std::size_t c = 0; c < ds.cameras.size(); ++c)
      if (ds.cameras[c].id == ds.frames[i].camera_id) {
        frames_by_cam[c].push_back(i);
        break;
      }
  }
  std::vector<int> active;
  for (std::size_t c = 0; c < ds.cameras.size(); ++c)
    if (!frames_by_cam[c].empty()) active.push_back(static_cast<int>(c));
  if (active.empty())
    throw std::invalid_argument("train: dataset has no frames");

  for (const auto& c : ds.cameras)
    scene.appearance.emplace(c.id, AppearanceCorrection{});

  GaussianAdam opt;
  std::map<std::string, AdamVec> app_opt;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> cursor(ds.cameras.size(), 0);

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ci = active[(it - 1) % active.size()];
    const NamedCamera& cam = ds.cameras[ci];
    const auto& flist = frames_by_cam[ci];
    const FrameSample& frame = ds.frames[flist[cursor[ci] % flist.size()]];
    ++cursor[ci];

    const auto assembled = assemble_frame(scene, frame.timestamp);
    FrameLoss fl = compute_frame_loss(assembled, frame, cam, scene.appearance, cfg);
    detail::check_loss_finite(fl.terms, it);

    // chain assembled-frame gradients back through the rigid object poses
    std::vector<GaussianGrads> grads = std::move(fl.grads);
    std::size_t base = scene.background.size() + scene.sky.size();
    for (const auto& obj : scene.dynamic_objects) {
      const auto [q, t] = track_pose_at(obj, frame.timestamp);
      const Mat3 rT = quat_to_rotmat(q).transpose();
      for (std::size_t k = 0; k < obj.gaussians.size(); ++k) {
        GaussianGrads& g = grads[base + k];
        g.mean = rT * g.mean;
        Quat pose_bar, local_bar;
        quat_multiply_vjp(q, obj.gaussians[k].rotation, g.rotation, pose_bar,
                          local_bar);
        g.rotation = local_bar;
      }
      base += obj.gaussians.size();
    }

    // step object-frame parameters laid out in assemble order
    std::vector<GaussianPrimitive> params;
    params.reserve(grads.size());
    params.insert(params.end(), scene.background.begin(), scene.background.end());
    params.insert(params.end(), scene.sky.begin(), scene.sky.end());
    for (const auto& obj : scene.dynamic_objects)
      params.insert(params.end(), obj.gaussians.begin(), obj.gaussians.end());
    opt.step(params, grads, cfg.lr, cfg.position_lr_at(it));
    std::size_t pos = 0;
    std::copy(params.begin(), params.begin() + scene.background.size(),
              scene.background.begin());
    pos += scene.background.size();
    std::copy(params.begin() + pos, params.begin() + pos + scene.sky.size(),
              scene.sky.begin());
    pos += scene.sky.size();
    for (auto& obj : scene.dynamic_objects) {
      std::copy(params.begin() + pos, params.begin() + pos + obj.gaussians.size(),
                obj.gaussians.begin());
      pos += obj.gaussians.size();
    }

    // appearance affine correction for the active camera
    AppearanceCorrection& app = scene.appearance.at(cam.id);
    std::vector<double> ap = {app.scale[0], app.scale[1], app.scale[2],
                              app.bias[0],  app.bias[1],  app.bias[2]};
    const std::vector<double> ag = {
        fl.appearance_scale_bar[0], fl.appearance_scale_bar[1],
        fl.appearance_scale_bar[2], fl.appearance_bias_bar[0],
        fl.appearance_bias_bar[1],  fl.appearance_bias_bar[2]};
    app_opt[cam.id].step(ap, ag, cfg.lr_appearance);
    for (int c = 0; c < 3; ++c) {
      app.scale[c] = std::max(ap[c], 1e-4);  // keep the scale invariant positive
      app.bias[c] = ap[c + 3];
    }

    if (it >= cfg.density_start && it % cfg.density_interval == 0) {
      const auto touched =
          density_control_step(scene.background, rng, cfg.dead_opacity);
      for (int i : touched) opt.reset_entry(static_cast<std::size_t>(i));
    }

    nlohmann::ordered_json line;
    line["iter"] = it;
    line["rgb_pinhole"] = fl.terms.rgb_pinhole;
    line["rgb_fisheye"] = fl.terms.rgb_fisheye;
    line["depth"] = fl.terms.depth;
    line["semantic"] = fl.terms.semantic;
    line["normal"] = fl.terms.normal;
    line["reg"] = fl.terms.reg;
    if (fl.terms.lidar) line["lidar"] = *fl.terms.lidar;
    line["total"] = fl.terms.total;
    line["psnr_train"] = fl.psnr_train;
    line["gaussian_count"] = scene.gaussian_count();
    res.metric_lines.push_back(line.dump());

    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    nlohmann::ordered_json tline;
    tline["iter"] = it;
    tline["wall_ms"] = ms;
    res.timing_lines.push_back(tline.dump());
  }
  return res;
}

}  // namespace fsplat
