#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsplat/gaussian.hpp"

namespace fsplat {

struct AppearanceCorrection {
  Vec3 scale = Vec3::Ones();
  Vec3 bias = Vec3::Zero();
};

struct PoseKeyframe {
  double timestamp = 0.0;
  Quat rotation;      // object frame -> world
  Vec3 translation = Vec3::Zero();
};

struct DynamicObject {
  std::string object_id;
  std::vector<GaussianPrimitive> gaussians;  // object frame
  std::vector<PoseKeyframe> keyframes;       // sorted by timestamp
};

struct SceneModel {
  std::vector<GaussianPrimitive> background;
  std::vector<DynamicObject> dynamic_objects;
  std::vector<GaussianPrimitive> sky;
  std::map<std::string, AppearanceCorrection> appearance;
  std::vector<std::string> classes;

  std::size_t gaussian_count() const {
    std::size_t n = background.size() + sky.size();
    for (const auto& obj : dynamic_objects) n += obj.gaussians.size();
    return n;
  }
};

struct ColoredPoint {
  Vec3 xyz = Vec3::Zero();
  Vec3 rgb = Vec3::Zero();  // [0, 1]
};

inline void resize_semantics(std::vector<GaussianPrimitive>& gs, int classes) {
  for (auto& g : gs) g.semantic_logits.assign(classes, 0.0);
}

namespace detail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
};

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// Distance to the k-th nearest neighbor via an expanding voxel-ring search.
inline std::vector<double> knn_distance(const std::vector<Vec3>& pts, int k,
                                        double cell) {
  std::unordered_map<VoxelKey, std::vector<int>, VoxelHash> grid;
  auto key_of = [&](const Vec3& p) {
    return VoxelKey{static_cast<std::int64_t>(std::floor(p.x() / cell)),
                    static_cast<std::int64_t>(std::floor(p.y() / cell)),
                    static_cast<std::int64_t>(std::floor(p.z() / cell))};
  };
  for (int i = 0; i < static_cast<int>(pts.size()); ++i)
    grid[key_of(pts[i])].push_back(i);

  std::vector<double> out(pts.size(), 0.0);
  parallel_for(pts.size(), [&](std::size_t i) {
    const VoxelKey c = key_of(pts[i]);
    std::vector<double> best;
    for (int ring = 1; ring < 64; ++ring) {
      best.clear();
      for (std::int64_t dz = -ring; dz <= ring; ++dz)
        for (std::int64_t dy = -ring; dy <= ring; ++dy)
          for (std::int64_t dx = -ring; dx <= ring; ++dx) {
            const auto it = grid.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
            if (it == grid.end()) continue;
            for (int j : it->second)
              if (j != static_cast<int>(i))
                best.push_back((pts[j] - pts[i]).norm());
          }
      if (static_cast<int>(best.size()) >= k) {
        std::nth_element(best.begin(), best.begin() + (k - 1), best.end());
        const double dk = best[k - 1];
        if (dk <= (ring - 1) * cell || static_cast<int>(best.size()) ==
                                           static_cast<int>(pts.size()) - 1) {
          out[i] = dk;
          return;
        }
      } else if (static_cast<int>(best.size()) ==
                 static_cast<int>(pts.size()) - 1) {
        out[i] = best.empty() ? 0.0 : *std::max_element(best.begin(), best.end());
        return;
      }
    }
    out[i] = cell * 64;
  });
  return out;
}

}  // namespace detail

inline std::vector<GaussianPrimitive> init_from_points(
    const std::vector<ColoredPoint>& points, double voxel = 0.05) {
  if (points.empty())
    throw std::invalid_argument("init_from_points: empty point list");

  std::unordered_map<detail::VoxelKey, int, detail::VoxelHash> slot;
  std::vector<Vec3> mean_sum, rgb_sum;
  std::vector<int> counts;
  for (const auto& p : points) {
    const detail::VoxelKey k{
        static_cast<std::int64_t>(std::floor(p.xyz.x() / voxel)),
        static_cast<std::int64_t>(std::floor(p.xyz.y() / voxel)),
        static_cast<std::int64_t>(std::floor(p.xyz.z() / voxel))};
    auto it = slot.find(k);
    if (it == slot.end()) {
      slot.emplace(k, static_cast<int>(mean_sum.size()));
      mean_sum.push_back(p.xyz);
      rgb_sum.push_back(p.rgb);
      counts.push_back(1);
    } else {
      mean_sum[it->second] += p.xyz;
      rgb_sum[it->second] += p.rgb;
      ++counts[it->second];
    }
  }

  std::vector<Vec3> means(mean_sum.size());
  for (std::size_t i = 0; i < means.size(); ++i)
    means[i] = mean_sum[i] / counts[i];

  std::vector<double> scale(means.size(), 0.1);
  if (means.size() > 1) scale = detail::knn_distance(means, 3, 4.0 * voxel);

  std::vector<GaussianPrimitive> gs(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    GaussianPrimitive& g = gs[i];
    g.mean = means[i];
    const double s = scale[i] > 0.0 ? scale[i] : 0.1;
    g.log_scales = Vec3::Constant(std::log(s));
    g.opacity_logit = logit(0.1);
    const Vec3 rgb = rgb_sum[i] / counts[i];
    for (int c = 0; c < 3; ++c)
      g.sh(0, c) = (rgb[c] - 0.5) / detail::kShC0;
  }
  return gs;
}

inline std::vector<GaussianPrimitive> init_sky(int n, const Vec3& center,
                                               double radius = 200.0,
                                               std::uint64_t seed = 0) {
  if (n < 1) throw std::invalid_argument("init_sky: n must be >= 1");
  if (radius < 100.0)
    throw std::invalid_argument("init_sky: radius must be >= 100 m");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double s = radius * std::sqrt(2.0 * kPi / n);
  std::vector<GaussianPrimitive> gs(n);
  for (auto& g : gs) {
    const double z = u01(rng);
    const double phi = 2.0 * kPi * u01(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    g.mean = center + radius * Vec3(r * std::cos(phi), r * std::sin(phi), z);
    g.log_scales = Vec3::Constant(std::log(s));
    g.opacity_logit = logit(0.1);
  }
  return gs;
}

inline std::pair<Quat, Vec3> track_pose_at(const DynamicObject& obj, double t) {
  const auto& kf = obj.keyframes;
  if (kf.empty() || t < kf.front().timestamp - 1e-12 ||
      t > kf.back().timestamp + 1e-12)
    throw std::invalid_argument("assemble_frame: timestamp " + std::to_string(t) +
                                " outside the track of object \"" +
                                obj.object_id + "\"");
  if (t <= kf.front().timestamp) return {kf.front().rotation, kf.front().translation};
  std::size_t hi = 1;
  while (hi < kf.size() && kf[hi].timestamp < t) ++hi;
  if (hi == kf.size()) return {kf.back().rotation, kf.back().translation};
  const PoseKeyframe& a = kf[hi - 1];
  const PoseKeyframe& b = kf[hi];
  const double span = b.timestamp - a.timestamp;
  const double f = span > 0.0 ? (t - a.timestamp) / span : 0.0;
  return {quat_slerp(a.rotation, b.rotation, f),
          (1.0 - f) * a.translation + f * b.translation};
}

inline std::vector<GaussianPrimitive> assemble_frame(const SceneModel& scene,
                                                     double timestamp) {
  std::vector<GaussianPrimitive> out;
  out.reserve(scene.gaussian_count());
  out.insert(out.end(), scene.background.begin(), scene.background.end());
  out.insert(out.end(), scene.sky.begin(), scene.sky.end());
  for (const auto& obj : scene.dynamic_objects) {
    const auto [q, t] = track_pose_at(obj, timestamp);
    const Mat3 r = quat_to_rotmat(q);
    for (const auto& g : obj.gaussians) {
      GaussianPrimitive moved = g;
      moved.mean = r * g.mean + t;
      moved.rotation = quat_multiply(q, g.rotation);
      out.push_back(moved);
    }
  }
  return out;
}

inline const AppearanceCorrection& appearance_for(
    const std::map<std::string, AppearanceCorrection>& appearance,
    const std::string& camera_id) {
  const auto it = appearance.find(camera_id);
  if (it == appearance.end())
    throw std::invalid_argument("apply_appearance: unknown camera \"" +
                                camera_id + "\"");
  return it->second;
}

inline std::vector<double> apply_appearance(
    const std::vector<double>& color, const std::string& camera_id,
    const std::map<std::string, AppearanceCorrection>& appearance) {
  const AppearanceCorrection& a = appearance_for(appearance, camera_id);
  std::vector<double> out(color.size());
  for (std::size_t i = 0; i < color.size(); ++i)
    out[i] = clamp01(a.scale[i % 3] * color[i] + a.bias[i % 3]);
  return out;
}

// Clamped pixels pass no gradient. color_bar / scale_bar / bias_bar accumulate.
inline void apply_appearance_vjp(
    const std::vector<double>& color, const std::string& camera_id,
    const std::map<std::string, AppearanceCorrection>& appearance,
    const std::vector<double>& out_bar, std::vector<double>& color_bar,
    Vec3& scale_bar, Vec3& bias_bar) {
  const AppearanceCorrection& a = appearance_for(appearance, camera_id);
  color_bar.resize(color.size(), 0.0);
  for (std::size_t i = 0; i < color.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    const double v = a.scale[c] * color[i] + a.bias[c];
    if (v <= 0.0 || v >= 1.0) continue;
    color_bar[i] += out_bar[i] * a.scale[c];
    scale_bar[c] += out_bar[i] * color[i];
    bias_bar[c] += out_bar[i];
  }
}

}  // namespace fsplat
