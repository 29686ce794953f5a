#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsplat/camera.hpp"
#include "fsplat/camera_io.hpp"
#include "fsplat/common.hpp"
#include "fsplat/gaussian.hpp"
#include "fsplat/ply.hpp"
#include "fsplat/rasterize.hpp"
#include "fsplat/scene.hpp"

namespace fsplat {

// Scan directions live in the sensor frame: x forward, y left, z up.
// `sensor` carries the rig mount; its R_wc maps world into that frame.
struct LidarScanPattern {
  std::vector<Vec3> rays;
  CameraPose sensor;
};

inline LidarScanPattern scan_pattern_from_json(const Json& doc) {
  detail::check_known_fields(doc, {"azimuth", "elevations", "rays"},
                             "scan pattern");
  const bool grid = doc.contains("azimuth") || doc.contains("elevations");
  const bool list = doc.contains("rays");
  if (grid && list)
    throw ConfigError("scan pattern: give either an azimuth grid or explicit rays");
  if (!grid && !list)
    throw ConfigError("scan pattern: missing ray description");

  LidarScanPattern p;
  if (list) {
    const auto& rows = doc.at("rays");
    if (!rows.is_array() || rows.empty())
      throw ConfigError("scan pattern: rays must be a non-empty array");
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != 3)
        throw ConfigError("scan pattern: each ray needs three components");
      Vec3 d(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
      const double n = d.norm();
      if (!(n > 1e-12))
        throw ConfigError("scan pattern: ray with zero length");
      p.rays.push_back(d / n);
    }
    return p;
  }

  if (!doc.contains("azimuth") || !doc.contains("elevations"))
    throw ConfigError("scan pattern: grid form needs azimuth and elevations");
  const auto& az = doc.at("azimuth");
  detail::check_known_fields(az, {"start", "stop", "step"}, "scan pattern azimuth");
  const double start = detail::get_field<double>(az, "start", "scan pattern azimuth");
  const double stop = detail::get_field<double>(az, "stop", "scan pattern azimuth");
  const double step = detail::get_field<double>(az, "step", "scan pattern azimuth");
  if (!(step > 0.0))
    throw ConfigError("scan pattern: azimuth step must be positive");
  if (!(stop > start))
    throw ConfigError("scan pattern: azimuth stop must exceed start");
  const auto& els = doc.at("elevations");
  if (!els.is_array() || els.empty())
    throw ConfigError("scan pattern: elevations must be a non-empty array");

  for (const auto& ej : els) {
    const double e = ej.get<double>() * kDegToRad;
    if (!(e > -kPi / 2.0 && e < kPi / 2.0))
      throw ConfigError("scan pattern: elevation outside (-90, 90) degrees");
    const double ce = std::cos(e), se = std::sin(e);
    for (double a = start; a < stop - 1e-9; a += step) {
      const double ar = a * kDegToRad;
      p.rays.emplace_back(ce * std::cos(ar), ce * std::sin(ar), se);
    }
  }
  return p;
}

inline LidarScanPattern load_scan_pattern(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scan pattern: cannot open " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("scan pattern: " + path + ": " + e.what());
  }
  return scan_pattern_from_json(doc);
}

struct PseudoCamera {
  CameraModel model;
  CameraPose pose;
};

// Eight square pinholes around the sensor: yaw 0/90/180/270 looking level,
// then the same four headings pitched down 45 degrees. A 100 degree field
// per face blankets elevations from -90 up to +40 at every azimuth.
inline std::vector<PseudoCamera> build_pseudo_rig(const CameraPose& sensor,
                                                  int width, int height,
                                                  double hfov_deg = 100.0) {
  if (width < 2 || height < 2)
    throw std::invalid_argument("pseudo rig: image size too small");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0))
    throw std::invalid_argument("pseudo rig: field of view out of range");
  const double f = 0.5 * width / std::tan(0.5 * hfov_deg * kDegToRad);

  std::vector<PseudoCamera> rig;
  rig.reserve(8);
  for (int tier = 0; tier < 2; ++tier) {
    const double ca = tier == 0 ? 1.0 : std::cos(kPi / 4.0);
    const double sa = tier == 0 ? 0.0 : std::sin(kPi / 4.0);
    for (int k = 0; k < 4; ++k) {
      const double psi = k * kPi / 2.0;
      const double cp = std::cos(psi), sp = std::sin(psi);
      const Vec3 cam_x(sp, -cp, 0.0);
      const Vec3 cam_z(ca * cp, ca * sp, -sa);
      const Vec3 cam_y = cam_z.cross(cam_x);
      Mat3 r_cs;
      r_cs.row(0) = cam_x.transpose();
      r_cs.row(1) = cam_y.transpose();
      r_cs.row(2) = cam_z.transpose();

      PseudoCamera pc;
      pc.model = CameraModel::pinhole(f, f, 0.5 * width, 0.5 * height,
                                      width, height);
      pc.pose.R_wc = r_cs * sensor.R_wc;
      pc.pose.r_c = sensor.r_c;
      pc.pose.r_a = pc.pose.R_wc.row(2).transpose();
      rig.push_back(pc);
    }
  }
  return rig;
}

struct LidarSimOptions {
  int width = 256;
  int height = 256;
  double hfov_deg = 100.0;
  double alpha_threshold = 0.5;
  double timestamp = 0.0;
};

// One bilinear depth/intensity sample per returned point, kept so the
// backward pass can scatter adjoints into the source render.
struct ScanRecord {
  int cam = -1;
  int ray = -1;
  Vec3 ray_w = Vec3::Zero();
  double dirz = 0.0;
  Vec2 pixel = Vec2::Zero();
  std::array<std::size_t, 4> px{};
  std::array<double, 4> wgt{};
};

struct ScanResult {
  std::vector<Vec3> points;
  std::vector<double> intensities;
  std::vector<int> ray_indices;
  std::vector<ScanRecord> records;
  int dropped_no_return = 0;
  int dropped_outside = 0;
};

namespace detail {

struct BilinearTap {
  std::array<std::size_t, 4> px{};
  std::array<double, 4> wgt{};
};

inline BilinearTap bilinear_tap(double u, double v, int w, int h) {
  const double sx = std::clamp(u - 0.5, 0.0, static_cast<double>(w - 1));
  const double sy = std::clamp(v - 0.5, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
  const int y0 = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0, fy = sy - y0;
  BilinearTap t;
  t.px = {static_cast<std::size_t>(y0) * w + x0,
          static_cast<std::size_t>(y0) * w + x1,
          static_cast<std::size_t>(y1) * w + x0,
          static_cast<std::size_t>(y1) * w + x1};
  t.wgt = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy),
           (1.0 - fx) * fy, fx * fy};
  return t;
}

inline double tap_sample(const std::vector<double>& map, const BilinearTap& t) {
  return t.wgt[0] * map[t.px[0]] + t.wgt[1] * map[t.px[1]] +
         t.wgt[2] * map[t.px[2]] + t.wgt[3] * map[t.px[3]];
}

}  // namespace detail

inline ScanResult simulate_scan(const std::vector<GaussianPrimitive>& gs,
                                const LidarScanPattern& pattern,
                                const LidarSimOptions& opts = {},
                                std::vector<RenderContext>* contexts = nullptr) {
  const auto rig = build_pseudo_rig(pattern.sensor, opts.width, opts.height,
                                    opts.hfov_deg);
  std::vector<RenderContext> local;
  std::vector<RenderContext>& ctxs = contexts ? *contexts : local;
  ctxs.assign(rig.size(), RenderContext{});
  for (std::size_t c = 0; c < rig.size(); ++c)
    render(gs, rig[c].pose, rig[c].model, {}, &ctxs[c]);

  const Mat3 r_sw = pattern.sensor.R_wc.transpose();
  ScanResult out;
  for (std::size_t i = 0; i < pattern.rays.size(); ++i) {
    const Vec3 d_w = r_sw * pattern.rays[i];

    int best = -1;
    double best_z = 1e-9;
    Vec3 best_dir = Vec3::Zero();
    for (std::size_t c = 0; c < rig.size(); ++c) {
      const Vec3 d_c = rig[c].pose.R_wc * d_w;
      if (d_c.z() > best_z) {
        best_z = d_c.z();
        best = static_cast<int>(c);
        best_dir = d_c;
      }
    }
    if (best < 0) {
      ++out.dropped_outside;
      continue;
    }
    const CameraModel& m = rig[best].model;
    const double u = m.fx * best_dir.x() / best_dir.z() + m.u0;
    const double v = m.fy * best_dir.y() / best_dir.z() + m.v0;
    if (u < 0.0 || u > m.width || v < 0.0 || v > m.height) {
      ++out.dropped_outside;
      continue;
    }

    const auto tap = detail::bilinear_tap(u, v, m.width, m.height);
    const RenderOutput& ro = ctxs[best].out;
    if (detail::tap_sample(ro.alpha, tap) < opts.alpha_threshold) {
      ++out.dropped_no_return;
      continue;
    }
    const double z = detail::tap_sample(ro.depth, tap);
    const double range = z / best_dir.z();

    ScanRecord rec;
    rec.cam = best;
    rec.ray = static_cast<int>(i);
    rec.ray_w = d_w;
    rec.dirz = best_dir.z();
    rec.pixel = Vec2(u, v);
    rec.px = tap.px;
    rec.wgt = tap.wgt;

    out.points.push_back(pattern.sensor.r_c + d_w * range);
    out.intensities.push_back(detail::tap_sample(ro.intensity, tap));
    out.ray_indices.push_back(static_cast<int>(i));
    out.records.push_back(rec);
  }
  return out;
}

inline ScanResult simulate_scan(const SceneModel& scene,
                                const LidarScanPattern& pattern,
                                const LidarSimOptions& opts = {},
                                std::vector<RenderContext>* contexts = nullptr) {
  return simulate_scan(assemble_frame(scene, opts.timestamp), pattern, opts,
                       contexts);
}

inline std::vector<GaussianGrads> simulate_scan_backward(
    const std::vector<RenderContext>& ctxs,
    const std::vector<GaussianPrimitive>& gs, const ScanResult& scan,
    const std::vector<Vec3>& point_bars,
    const std::vector<double>& intensity_bars) {
  if (point_bars.size() != scan.records.size() ||
      intensity_bars.size() != scan.records.size())
    throw std::invalid_argument("scan backward: adjoint count mismatch");

  const int classes = ctxs.empty() ? 0 : ctxs[0].classes;
  std::vector<RenderOutput> adj(ctxs.size());
  std::vector<char> touched(ctxs.size(), 0);
  for (std::size_t c = 0; c < ctxs.size(); ++c)
    adj[c] = RenderOutput::zeros(ctxs[c].width, ctxs[c].height, classes);

  for (std::size_t k = 0; k < scan.records.size(); ++k) {
    const ScanRecord& r = scan.records[k];
    const double range_bar = r.ray_w.dot(point_bars[k]);
    const double z_bar = range_bar / r.dirz;
    auto& a = adj[r.cam];
    for (int j = 0; j < 4; ++j) {
      a.depth[r.px[j]] += z_bar * r.wgt[j];
      a.intensity[r.px[j]] += intensity_bars[k] * r.wgt[j];
    }
    touched[r.cam] = 1;
  }

  std::vector<GaussianGrads> grads(gs.size());
  for (auto& g : grads) g.semantic_logits.assign(classes, 0.0);
  for (std::size_t c = 0; c < ctxs.size(); ++c) {
    if (!touched[c]) continue;
    const auto part = render_backward(ctxs[c], gs, adj[c]);
    for (std::size_t i = 0; i < gs.size(); ++i) {
      grads[i].mean += part[i].mean;
      for (int q = 0; q < 4; ++q) grads[i].rotation[q] += part[i].rotation[q];
      grads[i].log_scales += part[i].log_scales;
      grads[i].opacity_logit += part[i].opacity_logit;
      grads[i].sh += part[i].sh;
      grads[i].intensity_logit += part[i].intensity_logit;
      for (int s = 0; s < classes; ++s)
        grads[i].semantic_logits[s] += part[i].semantic_logits[s];
    }
  }
  return grads;
}

struct LidarLossGrads {
  std::vector<Vec3> point_bars;
  std::vector<double> intensity_bars;
};

// Mean point distance plus mean intensity gap, matched by ray index.
inline double compute_lidar_loss(const std::vector<Vec3>& sim_points,
                                 const std::vector<Vec3>& gt_points,
                                 const std::vector<double>& sim_intensities,
                                 const std::vector<double>& gt_intensities,
                                 LidarLossGrads* grads = nullptr,
                                 double lambda = 0.1) {
  const std::size_t n = sim_points.size();
  if (n == 0) throw std::invalid_argument("lidar loss: no points");
  if (gt_points.size() != n || sim_intensities.size() != n ||
      gt_intensities.size() != n)
    throw std::invalid_argument("lidar loss: point count mismatch");

  if (grads) {
    grads->point_bars.assign(n, Vec3::Zero());
    grads->intensity_bars.assign(n, 0.0);
  }
  const double scale = lambda / static_cast<double>(n);
  double geo = 0.0, inten = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 dx = sim_points[i] - gt_points[i];
    const double dist = dx.norm();
    geo += dist;
    const double di = sim_intensities[i] - gt_intensities[i];
    inten += std::abs(di);
    if (grads) {
      if (dist > 1e-18) grads->point_bars[i] = scale * dx / dist;
      if (di > 0.0) grads->intensity_bars[i] = scale;
      else if (di < 0.0) grads->intensity_bars[i] = -scale;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return lambda * (geo * inv_n + inten * inv_n);
}

inline void save_lidar_ply(const std::string& path,
                           const std::vector<Vec3>& points,
                           const std::vector<double>& intensities) {
  if (points.size() != intensities.size())
    throw std::invalid_argument("lidar ply: point count mismatch");
  PlyElement e;
  e.name = "vertex";
  e.count = points.size();
  for (const char* prop : {"x", "y", "z", "intensity"})
    e.properties.push_back({prop, PlyType::F64});
  e.values.resize(points.size() * 4);
  for (std::size_t i = 0; i < points.size(); ++i) {
    e.values[i * 4 + 0] = points[i].x();
    e.values[i * 4 + 1] = points[i].y();
    e.values[i * 4 + 2] = points[i].z();
    e.values[i * 4 + 3] = intensities[i];
  }
  PlyData data;
  data.elements.push_back(std::move(e));
  save_ply(path, data);
}

}  // namespace fsplat
