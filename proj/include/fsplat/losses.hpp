#pragma once

#include <cmath>
#include <iostream>
#include <optional>
#include <vector>

#include "fsplat/camera.hpp"
#include "fsplat/metrics.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

struct LossBreakdown {
  double rgb_pinhole = 0.0;
  double rgb_fisheye = 0.0;
  double depth = 0.0;
  double semantic = 0.0;
  double normal = 0.0;
  double reg = 0.0;
  std::optional<double> lidar;
  double total = 0.0;

  void finalize() {
    total = rgb_pinhole + rgb_fisheye + depth + semantic + normal + reg +
            (lidar ? *lidar : 0.0);
  }
};

// (1 - lambda) L1 + lambda D-SSIM. grad (optional) is assigned, not accumulated.
inline double compute_image_loss(const Image& render, const Image& target,
                                 Image* grad = nullptr, double lambda = 0.2) {
  if (render.width != target.width || render.height != target.height ||
      render.channels != target.channels)
    throw std::invalid_argument("image loss: shape mismatch");
  const std::size_t n = render.data.size();
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) l1 += std::abs(render.data[i] - target.data[i]);
  l1 /= static_cast<double>(n);

  Image dgrad;
  const double ds =
      lambda != 0.0 ? dssim(render, target, grad ? &dgrad : nullptr) : 0.0;
  if (grad) {
    *grad = render;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = render.data[i] - target.data[i];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      grad->data[i] = (1.0 - lambda) * sgn / static_cast<double>(n) +
                      (lambda != 0.0 ? lambda * dgrad.data[i] : 0.0);
    }
  }
  return (1.0 - lambda) * l1 + lambda * ds;
}

namespace detail {

// 1 - sample Pearson correlation; zero variance (or < 2 samples) gives r = 0.
inline double pearson_term(const std::vector<double>& x,
                           const std::vector<double>& y,
                           const std::vector<std::uint8_t>& valid,
                           std::vector<double>* grad_x) {
  double n = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!valid[i]) continue;
    n += 1.0;
    mx += x[i];
    my += y[i];
  }
  if (n < 2.0) return 1.0;
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!valid[i]) continue;
    const double a = x[i] - mx, b = y[i] - my;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 1.0;
  const double denom = std::sqrt(sxx * syy);
  const double r = sxy / denom;
  if (grad_x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!valid[i]) continue;
      const double a = x[i] - mx, b = y[i] - my;
      (*grad_x)[i] -= (b - (sxy / sxx) * a) / denom;
    }
  }
  return 1.0 - r;
}

}  // namespace detail

// L1 over the LiDAR mask plus 1 - Pearson against monocular depth; absent
// modalities contribute 0. grad (optional) is assigned.
inline double compute_depth_loss(const std::vector<double>& render_depth,
                                 const std::vector<double>* lidar_depth,
                                 const std::vector<std::uint8_t>* lidar_mask,
                                 const std::vector<double>* mono_depth,
                                 std::vector<double>* grad = nullptr) {
  const std::size_t n = render_depth.size();
  if (grad) grad->assign(n, 0.0);
  double loss = 0.0;

  if (lidar_depth) {
    if (lidar_depth->size() != n || !lidar_mask || lidar_mask->size() != n)
      throw std::invalid_argument("depth loss: lidar shape mismatch");
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if ((*lidar_mask)[i]) count += 1.0;
    if (count == 0.0) {
      std::cerr << "depth loss: lidar mask has no valid pixels, term skipped\n";
    } else {
      double term = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(*lidar_mask)[i]) continue;
        const double diff = render_depth[i] - (*lidar_depth)[i];
        term += std::abs(diff);
        if (grad)
          (*grad)[i] += (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / count;
      }
      loss += term / count;
    }
  }

  if (mono_depth) {
    if (mono_depth->size() != n)
      throw std::invalid_argument("depth loss: mono shape mismatch");
    std::vector<std::uint8_t> valid(n);
    for (std::size_t i = 0; i < n; ++i)
      valid[i] = (*mono_depth)[i] > 0.0 && std::isfinite((*mono_depth)[i]);
    loss += detail::pearson_term(render_depth, *mono_depth, valid, grad);
  }
  return loss;
}

// weight * mean softmax cross-entropy. grad (optional) is assigned.
inline double compute_semantic_loss(const std::vector<double>& logits,
                                    int classes, const std::vector<int>& labels,
                                    std::vector<double>* grad = nullptr,
                                    double weight = 0.01) {
  if (classes <= 0) throw std::invalid_argument("semantic loss: no classes");
  if (logits.size() != labels.size() * static_cast<std::size_t>(classes))
    throw std::invalid_argument("semantic loss: shape mismatch");
  const std::size_t n = labels.size();
  if (grad) grad->assign(logits.size(), 0.0);
  double ce = 0.0;
  std::vector<double> p(classes);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || label >= classes)
      throw std::invalid_argument("semantic loss: label out of range");
    const double* z = logits.data() + i * classes;
    double zmax = z[0];
    for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    ce += std::log(sum) - (z[label] - zmax);
    if (grad) {
      double* g = grad->data() + i * classes;
      for (int c = 0; c < classes; ++c)
        g[c] = weight / static_cast<double>(n) * (p[c] / sum - (c == label ? 1.0 : 0.0));
    }
  }
  return weight * ce / static_cast<double>(n);
}

// mean |1 - N_p . N_d| over interior pixels whose central-difference stencil
// has valid depth; N_d comes from unprojected-depth tangents. Gradients flow
// into both the rendered normals and the depth map. grads are assigned.
inline double compute_normal_loss(const std::vector<double>& normal,
                                  const std::vector<double>& depth,
                                  const CameraModel& cam,
                                  std::vector<double>* grad_normal = nullptr,
                                  std::vector<double>* grad_depth = nullptr) {
  const int w = cam.width, h = cam.height;
  if (normal.size() != static_cast<std::size_t>(w) * h * 3 ||
      depth.size() != static_cast<std::size_t>(w) * h)
    throw std::invalid_argument("normal loss: shape mismatch");
  if (grad_normal) grad_normal->assign(normal.size(), 0.0);
  if (grad_depth) grad_depth->assign(depth.size(), 0.0);

  // per-pixel ray scaled to unit camera-frame z
  std::vector<Vec3> ray(static_cast<std::size_t>(w) * h);
  std::vector<std::uint8_t> ray_ok(ray.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      try {
        const Vec3 d = unproject_pixel(cam, Vec2(x + 0.5, y + 0.5));
        if (d.z() > 0.05) {
          ray[p] = d / d.z();
          ray_ok[p] = 1;
        }
      } catch (const std::domain_error&) {
      }
    }
  }
  auto valid = [&](std::size_t p) { return ray_ok[p] && depth[p] > 0.0; };

  double loss = 0.0;
  std::size_t count = 0;
  struct Entry {
    std::size_t p;
    double sgn;
    Vec3 nd, t_u, t_v, n_raw;
    double flip;
  };
  std::vector<Entry> entries;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const std::size_t pl = p - 1, pr = p + 1, pu = p - w, pd = p + w;
      if (!ray_ok[p] || !valid(pl) || !valid(pr) || !valid(pu) || !valid(pd))
        continue;
      const Vec3 t_u = ray[pr] * depth[pr] - ray[pl] * depth[pl];
      const Vec3 t_v = ray[pd] * depth[pd] - ray[pu] * depth[pu];
      const Vec3 n_raw = t_u.cross(t_v);
      const double norm = n_raw.norm();
      if (norm < 1e-15) continue;
      const double flip = n_raw.dot(ray[p]) > 0.0 ? -1.0 : 1.0;
      const Vec3 nd = flip * n_raw / norm;
      const Vec3 np(normal[p * 3], normal[p * 3 + 1], normal[p * 3 + 2]);
      const double e = 1.0 - np.dot(nd);
      loss += std::abs(e);
      ++count;
      if (grad_normal || grad_depth)
        entries.push_back({p, e >= 0.0 ? 1.0 : -1.0, nd, t_u, t_v, n_raw, flip});
    }
  }
  if (count == 0) return 0.0;
  loss /= static_cast<double>(count);

  if (grad_normal || grad_depth) {
    const double scale = 1.0 / static_cast<double>(count);
    for (const Entry& en : entries) {
      const Vec3 np(normal[en.p * 3], normal[en.p * 3 + 1], normal[en.p * 3 + 2]);
      if (grad_normal) {
        const Vec3 gnp = -en.sgn * scale * en.nd;
        for (int c = 0; c < 3; ++c) (*grad_normal)[en.p * 3 + c] += gnp[c];
      }
      if (grad_depth) {
        const Vec3 nd_bar = -en.sgn * scale * np;
        const double norm = en.n_raw.norm();
        const Vec3 nhat = en.n_raw / norm;
        const Vec3 nhat_bar = en.flip * nd_bar;
        const Vec3 nraw_bar = (nhat_bar - nhat * nhat.dot(nhat_bar)) / norm;
        const Vec3 tu_bar = en.t_v.cross(nraw_bar);
        const Vec3 tv_bar = nraw_bar.cross(en.t_u);
        const std::size_t pl = en.p - 1, pr = en.p + 1, pu = en.p - w, pd = en.p + w;
        (*grad_depth)[pr] += ray[pr].dot(tu_bar);
        (*grad_depth)[pl] -= ray[pl].dot(tu_bar);
        (*grad_depth)[pd] += ray[pd].dot(tv_bar);
        (*grad_depth)[pu] -= ray[pu].dot(tv_bar);
      }
    }
  }
  return loss;
}

// weight * (mean opacity + mean scale). grads accumulate.
inline double compute_reg_loss(const std::vector<GaussianPrimitive>& gs,
                               std::vector<GaussianGrads>* grads = nullptr,
                               double weight = 0.01) {
  if (gs.empty()) throw std::invalid_argument("reg loss: empty gaussian set");
  if (grads && grads->size() != gs.size())
    throw std::invalid_argument("reg loss: gradient accumulator size mismatch");
  const double n = static_cast<double>(gs.size());
  double o_sum = 0.0, s_sum = 0.0;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    o_sum += gs[i].opacity();
    const Vec3 s = gs[i].scales();
    s_sum += s.sum();
    if (grads) {
      (*grads)[i].opacity_logit += weight / n * sigmoid_grad(gs[i].opacity_logit);
      (*grads)[i].log_scales += weight / (3.0 * n) * s;
    }
  }
  return weight * (o_sum / n + s_sum / (3.0 * n));
}

}  // namespace fsplat
