#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsplat/camera.hpp"
#include "fsplat/camera_io.hpp"
#include "fsplat/common.hpp"
#include "fsplat/image.hpp"
#include "fsplat/metrics.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

// Second order Taylor remainder of the mirror transform after linearizing
// around theta: what a first-order warp misses over a step of dtheta.
inline double ktheta_truncation_error(const CameraModel& m, double theta,
                                      double dtheta,
                                      MeiParam param = MeiParam::Normalized) {
  detail::check_mirror_domain(m, theta);
  const auto e = detail::mirror_eval(m, theta, param);
  return 0.5 * e.d2 * dtheta * dtheta + e.d3 * dtheta * dtheta * dtheta / 6.0;
}

// A: bottom band inside the image circle, B: top-center band, C: outer
// annulus covering the last quarter of the distorted angle range.
inline std::map<std::string, std::vector<std::uint8_t>> make_zone_masks(
    const CameraModel& cam, MeiParam param = MeiParam::Normalized) {
  const int w = cam.width, h = cam.height;
  if (w < 1 || h < 1)
    throw std::invalid_argument("zone masks: camera has no image area");
  const double theta_d_max =
      detail::mirror_eval(cam, cam.theta_max, param).theta_d;
  const double fu = cam.focal_u(param), fv = cam.focal_v(param);
  const bool fisheye = cam.is_fisheye();

  std::map<std::string, std::vector<std::uint8_t>> zones;
  for (const char* name : {"A", "B", "C"})
    zones[name].assign(static_cast<std::size_t>(w) * h, 0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const double theta_d =
          std::atan(std::hypot((cx - cam.u0) / fu, (cy - cam.v0) / fv));
      const bool in_circle = !fisheye || theta_d <= theta_d_max + 1e-12;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (in_circle && cy >= 0.75 * h) zones["A"][i] = 1;
      if (in_circle && cy <= 0.25 * h && std::abs(cx - cam.u0) <= 0.25 * w)
        zones["B"][i] = 1;
      if (in_circle && theta_d >= 0.75 * theta_d_max) zones["C"][i] = 1;
    }
  }
  return zones;
}

// Binary mask from a hand-painted PNG: any channel value above one half
// marks the pixel as inside.
inline std::vector<std::uint8_t> load_zone_mask(const std::string& path,
                                                int width, int height) {
  const Image img = load_png(path);
  if (img.width != width || img.height != height)
    throw ConfigError("zone mask: " + path + ": size does not match the camera");
  std::vector<std::uint8_t> mask(img.pixel_count(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = img.data[i * img.channels] > 0.5 ? 1 : 0;
  return mask;
}

struct ZoneMetric {
  double psnr = 0.0;
  double ssim = 0.0;
};

namespace detail {

constexpr int kSsimPad = 5;  // window radius used by the ssim crop

inline double masked_psnr(const Image& a, const Image& b,
                          const std::vector<std::uint8_t>& mask,
                          const std::string& name) {
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    for (int c = 0; c < a.channels; ++c) {
      const double d = a.data[i * a.channels + c] - b.data[i * b.channels + c];
      se += d * d;
    }
  }
  if (count == 0)
    throw std::invalid_argument("zone_metrics: zone \"" + name + "\" is empty");
  const double mse = se / (static_cast<double>(count) * a.channels);
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

inline double masked_ssim_mean(const Image& smap,
                               const std::vector<std::uint8_t>& mask,
                               const std::string& name) {
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = kSsimPad; y < smap.height - kSsimPad; ++y) {
    for (int x = kSsimPad; x < smap.width - kSsimPad; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * smap.width + x;
      if (!mask[i]) continue;
      ++count;
      for (int c = 0; c < smap.channels; ++c)
        sum += smap.data[i * smap.channels + c];
    }
  }
  if (count == 0)
    throw std::invalid_argument("zone_metrics: zone \"" + name +
                                "\" has no interior pixels");
  return sum / (static_cast<double>(count) * smap.channels);
}

}  // namespace detail

inline std::map<std::string, ZoneMetric> zone_metrics(
    const Image& a, const Image& b,
    const std::map<std::string, std::vector<std::uint8_t>>& zones) {
  detail::check_pair(a, b, "zone_metrics");
  const std::size_t n = a.pixel_count();
  Image smap;
  ssim(a, b, nullptr, &smap);

  std::map<std::string, ZoneMetric> out;
  for (const auto& [name, mask] : zones) {
    if (mask.size() != n)
      throw std::invalid_argument("zone_metrics: zone \"" + name +
                                  "\" size does not match the images");
    ZoneMetric zm;
    zm.psnr = detail::masked_psnr(a, b, mask, name);
    zm.ssim = detail::masked_ssim_mean(smap, mask, name);
    out[name] = zm;
  }
  return out;
}

struct RedistortResult {
  Image image;
  std::vector<std::uint8_t> valid;
};

namespace detail {

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace detail

// Resamples a source camera's image as seen through a destination camera
// sharing its optical center. Destination pixels whose rays miss the source
// frustum get the fill value and a cleared validity flag.
inline RedistortResult redistort_image(const Image& src,
                                       const CameraModel& src_model,
                                       const CameraModel& dst_model,
                                       double fill = 0.0) {
  if (src.width != src_model.width || src.height != src_model.height)
    throw std::invalid_argument("redistort: image size does not match the source model");
  if (src.channels < 1 || src.width < 1 || src.height < 1)
    throw std::invalid_argument("redistort: empty source image");

  const int w = dst_model.width, h = dst_model.height, nc = src.channels;
  RedistortResult out;
  out.image = Image(w, h, nc, fill);
  out.image.channel_names = src.channel_names;
  out.valid.assign(static_cast<std::size_t>(w) * h, 0);

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < w; ++x) {
      Vec3 d;
      Vec2 uv;
      try {
        d = unproject_pixel(dst_model, Vec2(x + 0.5, y + 0.5));
        if (src_model.kind == CameraKind::Pinhole && d.z() <= 1e-12) continue;
        uv = project_point(src_model, d);
      } catch (const std::domain_error&) {
        continue;
      }
      if (!(uv.x() >= 0.0 && uv.x() <= src.width && uv.y() >= 0.0 &&
            uv.y() <= src.height))
        continue;

      const double sx =
          std::clamp(uv.x() - 0.5, 0.0, static_cast<double>(src.width - 1));
      const double sy =
          std::clamp(uv.y() - 0.5, 0.0, static_cast<double>(src.height - 1));
      const int x0 = std::min(static_cast<int>(sx), src.width > 1 ? src.width - 2 : 0);
      const int y0 = std::min(static_cast<int>(sy), src.height > 1 ? src.height - 2 : 0);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < nc; ++c) {
        const double top =
            detail::lerp(src.at(y0, x0, c), src.at(y0, x1, c), fx);
        const double bot =
            detail::lerp(src.at(y1, x0, c), src.at(y1, x1, c), fx);
        out.image.at(y, x, c) = detail::lerp(top, bot, fy);
      }
      out.valid[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }, 1);
  return out;
}

struct ErrorAnalysisRow {
  bool stretch_phi = false;
  bool stretch_theta = false;
  int order = 1;
  double psnr = 0.0;
  double ssim = 0.0;
  double wall_ms = 0.0;
};

struct ErrorAnalysisReport {
  std::vector<ErrorAnalysisRow> rows;
  std::size_t valid_pixels = 0;
  int poses = 0;

  std::string to_csv() const {
    std::string s = "stretch_phi,stretch_theta,order,psnr_db,ssim,wall_ms\n";
    char buf[160];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.3f\n",
                    r.stretch_phi ? 1 : 0, r.stretch_theta ? 1 : 0, r.order,
                    r.psnr, r.ssim, r.wall_ms);
      s += buf;
    }
    return s;
  }

  Json to_json() const {
    Json rows_j = Json::array();
    for (const auto& r : rows) {
      rows_j.push_back({{"stretch_phi", r.stretch_phi},
                        {"stretch_theta", r.stretch_theta},
                        {"order", r.order},
                        {"psnr_db", r.psnr},
                        {"ssim", r.ssim},
                        {"wall_ms", r.wall_ms}});
    }
    return Json{{"valid_pixels", valid_pixels},
                {"poses", poses},
                {"rows", rows_j}};
  }
};

inline std::vector<WarpOptions> default_warp_grid() {
  return {{false, false, 1},
          {false, true, 1},
          {true, false, 1},
          {true, true, 1},
          {true, true, 2}};
}

namespace detail {

// Undistorted reference camera sized to cover the fisheye field of view,
// capped so extreme angles cannot blow the image up past 4096 pixels.
inline CameraModel reference_pinhole(const CameraModel& fish,
                                     MeiParam param = MeiParam::Normalized) {
  if (fish.kind == CameraKind::Pinhole) return fish;
  const double theta_cover = std::min(fish.theta_max, 75.0 * kDegToRad);
  const double fu = fish.focal_u(param), fv = fish.focal_v(param);
  const double half_w = fu * std::tan(theta_cover);
  const double half_h = fv * std::tan(theta_cover);
  if (!(half_w > 1.0 && half_h > 1.0))
    throw std::invalid_argument("error analysis: cannot size a reference pinhole");
  const int w = std::min(4096, 2 * static_cast<int>(std::ceil(half_w)) + 2);
  const int h = std::min(4096, 2 * static_cast<int>(std::ceil(half_h)) + 2);
  return CameraModel::pinhole(fu, fv, 0.5 * w, 0.5 * h, w, h);
}

}  // namespace detail

// Renders every pose through the warp configuration grid and scores each
// configuration against a redistorted pinhole reference on the pixels the
// redistortion marks valid.
inline ErrorAnalysisReport run_error_analysis(
    const std::vector<GaussianPrimitive>& gs,
    const std::vector<CameraPose>& poses, const CameraModel& fish,
    const Vec3& background = Vec3::Zero(),
    const std::vector<WarpOptions>& grid = default_warp_grid()) {
  if (poses.empty())
    throw std::invalid_argument("error analysis: no poses");
  if (grid.empty())
    throw std::invalid_argument("error analysis: empty configuration grid");

  const CameraModel pin = detail::reference_pinhole(fish);
  std::vector<Image> refs;
  std::vector<std::vector<std::uint8_t>> masks;
  refs.reserve(poses.size());
  for (const auto& pose : poses) {
    RenderOptions opts;
    opts.background = background;
    const RenderOutput ro = render(gs, pose, pin, opts);
    Image img(pin.width, pin.height, 3);
    img.data = ro.color;
    RedistortResult rd = redistort_image(img, pin, fish);
    refs.push_back(std::move(rd.image));
    masks.push_back(std::move(rd.valid));
  }

  ErrorAnalysisReport report;
  report.poses = static_cast<int>(poses.size());
  for (const auto& m : masks[0])
    if (m) ++report.valid_pixels;

  for (const auto& warp : grid) {
    ErrorAnalysisRow row;
    row.stretch_phi = warp.stretch_phi;
    row.stretch_theta = warp.stretch_theta;
    row.order = warp.order;

    double se = 0.0, ssim_sum = 0.0;
    std::size_t count = 0;
    double wall = 0.0;
    for (std::size_t p = 0; p < poses.size(); ++p) {
      RenderOptions opts;
      opts.background = background;
      opts.warp = warp;
      const auto t0 = std::chrono::steady_clock::now();
      const RenderOutput ro = render(gs, poses[p], fish, opts);
      const auto t1 = std::chrono::steady_clock::now();
      wall += std::chrono::duration<double, std::milli>(t1 - t0).count();

      Image img(fish.width, fish.height, 3);
      img.data = ro.color;
      for (std::size_t i = 0; i < masks[p].size(); ++i) {
        if (!masks[p][i]) continue;
        ++count;
        for (int c = 0; c < 3; ++c) {
          const double d = img.data[i * 3 + c] - refs[p].data[i * 3 + c];
          se += d * d;
        }
      }
      Image smap;
      ssim(img, refs[p], nullptr, &smap);
      ssim_sum += detail::masked_ssim_mean(smap, masks[p], "roi");
    }
    if (count == 0)
      throw std::invalid_argument("error analysis: empty valid region");
    const double mse = se / (static_cast<double>(count) * 3.0);
    row.psnr = mse <= 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));
    row.ssim = ssim_sum / static_cast<double>(poses.size());
    row.wall_ms = wall / static_cast<double>(poses.size());
    report.rows.push_back(row);
  }
  return report;
}

inline void write_error_analysis_csv(const std::string& path,
                                     const ErrorAnalysisReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("error analysis: cannot write " + path);
  out << report.to_csv();
}

inline void write_error_analysis_json(const std::string& path,
                                      const ErrorAnalysisReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("error analysis: cannot write " + path);
  out << report.to_json().dump(2) << "\n";
}

}  // namespace fsplat
