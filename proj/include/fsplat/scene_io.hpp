#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsplat/camera_io.hpp"
#include "fsplat/ply.hpp"
#include "fsplat/scene.hpp"

namespace fsplat {

constexpr int kSceneVersion = 1;
constexpr int kShRestCount = (kShCoeffs - 1) * 3;  // f_rest_0..44

inline PlyData gaussians_to_ply(const std::vector<GaussianPrimitive>& gs) {
  const int classes =
      gs.empty() ? 0 : static_cast<int>(gs[0].semantic_logits.size());
  PlyElement e;
  e.name = "vertex";
  e.count = gs.size();
  auto prop = [&](const std::string& n) { e.properties.push_back({n, PlyType::F64}); };
  prop("x"); prop("y"); prop("z");
  for (int c = 0; c < 3; ++c) prop("f_dc_" + std::to_string(c));
  for (int k = 0; k < kShRestCount; ++k) prop("f_rest_" + std::to_string(k));
  prop("opacity");
  for (int c = 0; c < 3; ++c) prop("scale_" + std::to_string(c));
  for (int c = 0; c < 4; ++c) prop("rot_" + std::to_string(c));
  for (int c = 0; c < classes; ++c) prop("semantic_" + std::to_string(c));
  prop("intensity");

  e.values.reserve(gs.size() * e.properties.size());
  for (const auto& g : gs) {
    if (static_cast<int>(g.semantic_logits.size()) != classes)
      throw std::invalid_argument("gaussians_to_ply: inconsistent semantic logit counts");
    for (int c = 0; c < 3; ++c) e.values.push_back(g.mean[c]);
    for (int c = 0; c < 3; ++c) e.values.push_back(g.sh(0, c));
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k < kShCoeffs; ++k) e.values.push_back(g.sh(k, c));
    e.values.push_back(g.opacity_logit);
    for (int c = 0; c < 3; ++c) e.values.push_back(g.log_scales[c]);
    for (int c = 0; c < 4; ++c) e.values.push_back(g.rotation[c]);
    for (int c = 0; c < classes; ++c) e.values.push_back(g.semantic_logits[c]);
    e.values.push_back(g.intensity_logit);
  }
  PlyData data;
  data.elements.push_back(std::move(e));
  return data;
}

inline std::vector<GaussianPrimitive> gaussians_from_ply(const PlyData& data,
                                                         const std::string& path) {
  const PlyElement& e = data.require("vertex", path);
  const int cx = e.require_column("x", path);
  const int cy = e.require_column("y", path);
  const int cz = e.require_column("z", path);
  int cdc[3], crest[kShRestCount], cscale[3], crot[4];
  for (int c = 0; c < 3; ++c)
    cdc[c] = e.require_column("f_dc_" + std::to_string(c), path);
  for (int k = 0; k < kShRestCount; ++k)
    crest[k] = e.require_column("f_rest_" + std::to_string(k), path);
  const int cop = e.require_column("opacity", path);
  for (int c = 0; c < 3; ++c)
    cscale[c] = e.require_column("scale_" + std::to_string(c), path);
  for (int c = 0; c < 4; ++c)
    crot[c] = e.require_column("rot_" + std::to_string(c), path);

  int classes = 0;
  while (e.column("semantic_" + std::to_string(classes)) >= 0) ++classes;
  std::vector<int> csem(classes);
  for (int c = 0; c < classes; ++c)
    csem[c] = e.column("semantic_" + std::to_string(c));
  const int cint = e.column("intensity");

  std::vector<GaussianPrimitive> gs(e.count);
  for (std::size_t i = 0; i < e.count; ++i) {
    GaussianPrimitive& g = gs[i];
    g.mean = Vec3(e.value(i, cx), e.value(i, cy), e.value(i, cz));
    for (int c = 0; c < 3; ++c) g.sh(0, c) = e.value(i, cdc[c]);
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k < kShCoeffs; ++k)
        g.sh(k, c) = e.value(i, crest[c * (kShCoeffs - 1) + (k - 1)]);
    g.opacity_logit = e.value(i, cop);
    for (int c = 0; c < 3; ++c) g.log_scales[c] = e.value(i, cscale[c]);
    for (int c = 0; c < 4; ++c) g.rotation[c] = e.value(i, crot[c]);
    g.semantic_logits.resize(classes);
    for (int c = 0; c < classes; ++c) g.semantic_logits[c] = e.value(i, csem[c]);
    g.intensity_logit = cint >= 0 ? e.value(i, cint) : 0.0;
  }
  return gs;
}

inline void save_gaussian_ply(const std::string& path,
                              const std::vector<GaussianPrimitive>& gs) {
  save_ply(path, gaussians_to_ply(gs));
}

inline std::vector<GaussianPrimitive> load_gaussian_ply(const std::string& path) {
  return gaussians_from_ply(load_ply(path), path);
}

namespace detail {

inline Json keyframe_to_json(const PoseKeyframe& kf) {
  Json j;
  j["timestamp"] = kf.timestamp;
  j["q"] = {kf.rotation.w, kf.rotation.x, kf.rotation.y, kf.rotation.z};
  j["t"] = {kf.translation[0], kf.translation[1], kf.translation[2]};
  return j;
}

inline PoseKeyframe keyframe_from_json(const Json& j, const std::string& ctx) {
  check_known_fields(j, {"timestamp", "q", "t"}, ctx);
  PoseKeyframe kf;
  kf.timestamp = get_field<double>(j, "timestamp", ctx);
  const auto q = get_field<std::vector<double>>(j, "q", ctx);
  const auto t = get_field<std::vector<double>>(j, "t", ctx);
  if (q.size() != 4) throw ConfigError(ctx + ": q must have 4 entries");
  if (t.size() != 3) throw ConfigError(ctx + ": t must have 3 entries");
  kf.rotation = Quat{q[0], q[1], q[2], q[3]};
  kf.translation = Vec3(t[0], t[1], t[2]);
  return kf;
}

}  // namespace detail

inline void save_scene(const std::string& dir, const SceneModel& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_gaussian_ply(dir + "/background.ply", scene.background);
  save_gaussian_ply(dir + "/sky.ply", scene.sky);

  Json doc;
  doc["version"] = kSceneVersion;
  doc["classes"] = scene.classes;
  Json app = Json::object();
  for (const auto& [id, a] : scene.appearance) {
    Json j;
    j["scale"] = {a.scale[0], a.scale[1], a.scale[2]};
    j["bias"] = {a.bias[0], a.bias[1], a.bias[2]};
    app[id] = j;
  }
  doc["appearance"] = app;
  doc["background"] = "background.ply";
  doc["sky"] = "sky.ply";
  Json objs = Json::array();
  for (const auto& obj : scene.dynamic_objects) {
    const std::string ply = "object_" + obj.object_id + ".ply";
    save_gaussian_ply(dir + "/" + ply, obj.gaussians);
    Json j;
    j["object_id"] = obj.object_id;
    j["ply"] = ply;
    Json kfs = Json::array();
    for (const auto& kf : obj.keyframes) kfs.push_back(detail::keyframe_to_json(kf));
    j["keyframes"] = kfs;
    objs.push_back(j);
  }
  doc["objects"] = objs;
  std::ofstream out(dir + "/scene.json");
  if (!out) throw ConfigError("scene.json: cannot write " + dir + "/scene.json");
  out << doc.dump(2) << "\n";
}

inline SceneModel load_scene(const std::string& dir) {
  const std::string path = dir + "/scene.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("scene.json: cannot open " + path);
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ConfigError("scene.json: parse error in " + path + ": " + e.what());
  }
  using detail::get_field;
  const std::string ctx = "scene.json";
  detail::check_known_fields(
      doc, {"version", "classes", "appearance", "background", "sky", "objects"}, ctx);
  const int version = get_field<int>(doc, "version", ctx);
  if (version != kSceneVersion)
    throw ConfigError(ctx + ": version mismatch (got " + std::to_string(version) +
                      ", expected " + std::to_string(kSceneVersion) + ")");

  SceneModel scene;
  scene.classes = get_field<std::vector<std::string>>(doc, "classes", ctx);
  const Json app = get_field<Json>(doc, "appearance", ctx);
  for (auto it = app.begin(); it != app.end(); ++it) {
    const std::string actx = ctx + " appearance \"" + it.key() + "\"";
    detail::check_known_fields(it.value(), {"scale", "bias"}, actx);
    const auto s = get_field<std::vector<double>>(it.value(), "scale", actx);
    const auto b = get_field<std::vector<double>>(it.value(), "bias", actx);
    if (s.size() != 3 || b.size() != 3)
      throw ConfigError(actx + ": scale and bias must have 3 entries");
    AppearanceCorrection a;
    a.scale = Vec3(s[0], s[1], s[2]);
    a.bias = Vec3(b[0], b[1], b[2]);
    if (a.scale.minCoeff() <= 0.0)
      throw ConfigError(actx + ": scale must be positive");
    scene.appearance[it.key()] = a;
  }
  scene.background =
      load_gaussian_ply(dir + "/" + get_field<std::string>(doc, "background", ctx));
  scene.sky = load_gaussian_ply(dir + "/" + get_field<std::string>(doc, "sky", ctx));
  for (const auto& j : get_field<Json>(doc, "objects", ctx)) {
    const std::string octx = ctx + " object entry";
    detail::check_known_fields(j, {"object_id", "ply", "keyframes"}, octx);
    DynamicObject obj;
    obj.object_id = get_field<std::string>(j, "object_id", octx);
    obj.gaussians =
        load_gaussian_ply(dir + "/" + get_field<std::string>(j, "ply", octx));
    for (const auto& kj : get_field<Json>(j, "keyframes", octx))
      obj.keyframes.push_back(detail::keyframe_from_json(
          kj, octx + " \"" + obj.object_id + "\" keyframe"));
    std::sort(obj.keyframes.begin(), obj.keyframes.end(),
              [](const PoseKeyframe& a, const PoseKeyframe& b) {
                return a.timestamp < b.timestamp;
              });
    scene.dynamic_objects.push_back(std::move(obj));
  }
  return scene;
}

}  // namespace fsplat
