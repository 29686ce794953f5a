#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fsplat/camera.hpp"

namespace fsplat {

using Json = nlohmann::json;

namespace detail {

inline void check_known_fields(const Json& obj, const std::set<std::string>& allowed,
                               const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(context + ": unknown field \"" + it.key() + "\"");
  }
}

template <typename T>
T get_field(const Json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key))
    throw ConfigError(context + ": missing field \"" + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(context + ": field \"" + key + "\" has the wrong type");
  }
}

inline void check_rotation(const Mat3& r, const std::string& context,
                           double tol = 1e-3) {
  const double ortho = (r * r.transpose() - Mat3::Identity()).norm();
  if (ortho > tol || r.determinant() < 0.0)
    throw ConfigError(context + ": rotation not orthonormal (deviation " +
                      std::to_string(ortho) + ")");
}

inline void parse_pose(const Json& obj, const std::string& context, Mat3& r, Vec3& t) {
  check_known_fields(obj, {"R", "t"}, context);
  const auto rv = get_field<std::vector<double>>(obj, "R", context);
  const auto tv = get_field<std::vector<double>>(obj, "t", context);
  if (rv.size() != 9) throw ConfigError(context + ": R must have 9 entries");
  if (tv.size() != 3) throw ConfigError(context + ": t must have 3 entries");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = rv[3 * i + j];
  t = Vec3(tv[0], tv[1], tv[2]);
  check_rotation(r, context);
}

}  // namespace detail

struct NamedCamera {
  std::string id;
  CameraModel model;
  Mat3 R_wc = Mat3::Identity();  // world -> camera
  Vec3 t_wc = Vec3::Zero();
};

inline NamedCamera parse_camera_entry(const Json& obj) {
  using detail::get_field;
  const std::string id = get_field<std::string>(obj, "id", "cameras.json entry");
  const std::string ctx = "cameras.json camera \"" + id + "\"";
  detail::check_known_fields(obj,
                             {"id", "kind", "width", "height", "fx", "fy", "gamma1",
                              "gamma2", "u0", "v0", "xi", "k", "pose"},
                             ctx);
  const std::string kind = get_field<std::string>(obj, "kind", ctx);
  const int width = get_field<int>(obj, "width", ctx);
  const int height = get_field<int>(obj, "height", ctx);
  const double u0 = get_field<double>(obj, "u0", ctx);
  const double v0 = get_field<double>(obj, "v0", ctx);

  NamedCamera cam;
  cam.id = id;
  if (kind == "pinhole") {
    cam.model = CameraModel::pinhole(get_field<double>(obj, "fx", ctx),
                                     get_field<double>(obj, "fy", ctx), u0, v0,
                                     width, height);
  } else if (kind == "kb") {
    const auto kv = get_field<std::vector<double>>(obj, "k", ctx);
    if (kv.size() != 4) throw ConfigError(ctx + ": kb expects 4 distortion coefficients");
    cam.model = CameraModel::kannala_brandt(
        get_field<double>(obj, "fx", ctx), get_field<double>(obj, "fy", ctx), u0,
        v0, {kv[0], kv[1], kv[2], kv[3]}, width, height);
  } else if (kind == "mei") {
    const auto kv = get_field<std::vector<double>>(obj, "k", ctx);
    if (kv.size() != 2) throw ConfigError(ctx + ": mei expects 2 distortion coefficients");
    cam.model = CameraModel::mei(get_field<double>(obj, "gamma1", ctx),
                                 get_field<double>(obj, "gamma2", ctx), u0, v0,
                                 get_field<double>(obj, "xi", ctx), kv[0], kv[1],
                                 width, height);
  } else {
    throw ConfigError(ctx + ": unknown kind \"" + kind + "\"");
  }
  if (obj.contains("pose"))
    detail::parse_pose(obj.at("pose"), ctx + " pose", cam.R_wc, cam.t_wc);
  return cam;
}

inline std::vector<NamedCamera> parse_cameras_json(const Json& doc) {
  if (!doc.is_array()) throw ConfigError("cameras.json: top level must be an array");
  std::vector<NamedCamera> cams;
  cams.reserve(doc.size());
  for (const auto& obj : doc) cams.push_back(parse_camera_entry(obj));
  return cams;
}

inline std::vector<NamedCamera> load_cameras_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cameras.json: cannot open " + path);
  Json doc;
  try {
    in >> doc;
  } catch (const Json::exception& e) {
    throw ConfigError("cameras.json: parse error in " + path + ": " + e.what());
  }
  return parse_cameras_json(doc);
}

inline Json camera_to_json(const NamedCamera& cam) {
  Json obj;
  obj["id"] = cam.id;
  obj["width"] = cam.model.width;
  obj["height"] = cam.model.height;
  obj["u0"] = cam.model.u0;
  obj["v0"] = cam.model.v0;
  switch (cam.model.kind) {
    case CameraKind::Pinhole:
      obj["kind"] = "pinhole";
      obj["fx"] = cam.model.fx;
      obj["fy"] = cam.model.fy;
      break;
    case CameraKind::KannalaBrandt:
      obj["kind"] = "kb";
      obj["fx"] = cam.model.fx;
      obj["fy"] = cam.model.fy;
      obj["k"] = {cam.model.k[0], cam.model.k[1], cam.model.k[2], cam.model.k[3]};
      break;
    case CameraKind::MEI:
      obj["kind"] = "mei";
      obj["gamma1"] = cam.model.gamma1;
      obj["gamma2"] = cam.model.gamma2;
      obj["xi"] = cam.model.xi;
      obj["k"] = {cam.model.k[0], cam.model.k[1]};
      break;
  }
  Json pose;
  std::vector<double> rv(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rv[3 * i + j] = cam.R_wc(i, j);
  pose["R"] = rv;
  pose["t"] = {cam.t_wc[0], cam.t_wc[1], cam.t_wc[2]};
  obj["pose"] = pose;
  return obj;
}

inline void save_cameras_json(const std::string& path,
                              const std::vector<NamedCamera>& cams) {
  Json doc = Json::array();
  for (const auto& c : cams) doc.push_back(camera_to_json(c));
  std::ofstream out(path);
  if (!out) throw ConfigError("cameras.json: cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace fsplat
