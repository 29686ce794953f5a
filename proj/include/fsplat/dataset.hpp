#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsplat/camera_io.hpp"
#include "fsplat/image.hpp"
#include "fsplat/scene_io.hpp"

namespace fsplat {

struct FrameSample {
  std::string camera_id;
  double timestamp = 0.0;
  Image image;                               // rgb in [0, 1]
  std::optional<Image> mono_depth;           // 1 channel, meters
  std::optional<Image> lidar_depth;          // 1 channel, 0 = no return
  std::optional<std::vector<int>> semantic;  // labels, row-major
  CameraPose pose;
};

struct Dataset {
  std::vector<NamedCamera> cameras;
  std::vector<FrameSample> frames;
  std::vector<ColoredPoint> points;
  std::vector<DynamicObject> tracks;  // poses only unless a ply is given
  int classes = 0;

  const NamedCamera& camera(const std::string& id) const {
    for (const auto& c : cameras)
      if (c.id == id) return c;
    throw ConfigError("dataset: unknown camera \"" + id + "\"");
  }
};

namespace detail {

inline std::vector<ColoredPoint> load_points_ply(const std::string& path) {
  const PlyData data = load_ply(path);
  const PlyElement& e = data.require("vertex", path);
  const int cx = e.require_column("x", path);
  const int cy = e.require_column("y", path);
  const int cz = e.require_column("z", path);
  const int cr = e.require_column("red", path);
  const int cg = e.require_column("green", path);
  const int cb = e.require_column("blue", path);
  const PlyType rt = e.properties[cr].type;
  const bool integral = rt != PlyType::F32 && rt != PlyType::F64;
  const double norm = integral ? 1.0 / 255.0 : 1.0;
  std::vector<ColoredPoint> pts(e.count);
  for (std::size_t i = 0; i < e.count; ++i) {
    pts[i].xyz = Vec3(e.value(i, cx), e.value(i, cy), e.value(i, cz));
    pts[i].rgb = norm * Vec3(e.value(i, cr), e.value(i, cg), e.value(i, cb));
  }
  return pts;
}

inline std::vector<DynamicObject> load_tracks_json(const std::string& path,
                                                   double voxel) {
  std::ifstream in(path);
  if (!in) return {};
  const std::string dir = std::filesystem::path(path).parent_path().string();
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ConfigError("tracks.json: parse error in " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw ConfigError("tracks.json: top level must be an array");
  std::vector<DynamicObject> tracks;
  for (const auto& j : doc) {
    const std::string octx = "tracks.json object entry";
    check_known_fields(j, {"object_id", "keyframes", "ply"}, octx);
    DynamicObject obj;
    obj.object_id = get_field<std::string>(j, "object_id", octx);
    const std::string ctx = "tracks.json object \"" + obj.object_id + "\"";
    for (const auto& kj : get_field<Json>(j, "keyframes", ctx)) {
      const std::string kctx = ctx + " keyframe";
      check_known_fields(kj, {"timestamp", "R", "t"}, kctx);
      PoseKeyframe kf;
      kf.timestamp = get_field<double>(kj, "timestamp", kctx);
      Json pose_obj = Json::object();
      pose_obj["R"] = get_field<Json>(kj, "R", kctx);
      pose_obj["t"] = get_field<Json>(kj, "t", kctx);
      Mat3 r;
      Vec3 t;
      parse_pose(pose_obj, kctx, r, t);
      kf.rotation = quat_from_rotmat(r);
      kf.translation = t;
      obj.keyframes.push_back(kf);
    }
    std::sort(obj.keyframes.begin(), obj.keyframes.end(),
              [](const PoseKeyframe& a, const PoseKeyframe& b) {
                return a.timestamp < b.timestamp;
              });
    if (obj.keyframes.empty())
      throw ConfigError(ctx + ": keyframes must not be empty");
    if (j.contains("ply"))
      obj.gaussians = init_from_points(
          load_points_ply(dir + "/" + get_field<std::string>(j, "ply", ctx)), voxel);
    tracks.push_back(std::move(obj));
  }
  return tracks;
}

}  // namespace detail

inline Dataset load_dataset(const std::string& root, double voxel = 0.05) {
  Dataset ds;
  ds.cameras = load_cameras_json(root + "/cameras.json");

  const std::string fpath = root + "/frames.json";
  std::ifstream in(fpath);
  if (!in) throw ConfigError("frames.json: cannot open " + fpath);
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ConfigError("frames.json: parse error in " + fpath + ": " + e.what());
  }
  if (!doc.is_array()) throw ConfigError("frames.json: top level must be an array");

  using detail::get_field;
  int idx = 0;
  for (const auto& j : doc) {
    const std::string ctx = "frames.json frame " + std::to_string(idx);
    detail::check_known_fields(
        j, {"camera_id", "timestamp", "image", "depth", "lidar_mask", "semantic", "pose"},
        ctx);
    FrameSample f;
    f.camera_id = get_field<std::string>(j, "camera_id", ctx);
    const NamedCamera& cam = ds.camera(f.camera_id);
    f.timestamp = get_field<double>(j, "timestamp", ctx);

    const std::string img_rel = get_field<std::string>(j, "image", ctx);
    f.image = load_png(root + "/" + img_rel);
    if (f.image.channels != 3)
      throw ConfigError(ctx + ": image \"" + img_rel + "\" must have 3 channels");
    if (f.image.width != cam.model.width || f.image.height != cam.model.height)
      throw ConfigError(ctx + ": image \"" + img_rel + "\" is " +
                        std::to_string(f.image.width) + "x" +
                        std::to_string(f.image.height) + " but camera \"" +
                        f.camera_id + "\" expects " +
                        std::to_string(cam.model.width) + "x" +
                        std::to_string(cam.model.height));

    auto load_depth = [&](const std::string& field) -> std::optional<Image> {
      if (!j.contains(field)) return std::nullopt;
      const std::string rel = get_field<std::string>(j, field, ctx);
      Image d = load_f32(root + "/" + rel);
      if (d.channels != 1)
        throw ConfigError(ctx + ": " + field + " \"" + rel + "\" must have 1 channel");
      if (d.width != cam.model.width || d.height != cam.model.height)
        throw ConfigError(ctx + ": " + field + " \"" + rel +
                          "\" dimensions do not match camera \"" + f.camera_id + "\"");
      return d;
    };
    f.mono_depth = load_depth("depth");
    f.lidar_depth = load_depth("lidar_mask");

    if (j.contains("semantic")) {
      const std::string rel = get_field<std::string>(j, "semantic", ctx);
      int w = 0, h = 0;
      auto labels = load_palette_png(root + "/" + rel, w, h);
      if (w != cam.model.width || h != cam.model.height)
        throw ConfigError(ctx + ": semantic \"" + rel +
                          "\" dimensions do not match camera \"" + f.camera_id + "\"");
      for (int v : labels) ds.classes = std::max(ds.classes, v + 1);
      f.semantic = std::move(labels);
    }

    if (j.contains("pose")) {
      Mat3 r;
      Vec3 t;
      detail::parse_pose(j.at("pose"), ctx + " pose", r, t);
      f.pose = CameraPose::from_rt(r, t);
    } else {
      f.pose = CameraPose::from_rt(cam.R_wc, cam.t_wc);
    }
    ds.frames.push_back(std::move(f));
    ++idx;
  }

  ds.points = detail::load_points_ply(root + "/points.ply");
  ds.tracks = detail::load_tracks_json(root + "/tracks.json", voxel);
  return ds;
}

}  // namespace fsplat
