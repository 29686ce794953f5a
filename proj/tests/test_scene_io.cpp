#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "fsplat/dataset.hpp"
#include "fsplat/scene_io.hpp"

using namespace fsplat;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

fs::path scratch() {
  static const fs::path dir = []() {
    fs::path d = fs::temp_directory_path() / "fsplat_scene_io_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::vector<GaussianPrimitive> random_gaussians(int count, int classes,
                                                unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  std::vector<GaussianPrimitive> gs(count);
  for (auto& g : gs) {
    g.mean = Vec3(uni(rng), uni(rng), uni(rng));
    Quat q{uni(rng), uni(rng), uni(rng), uni(rng)};
    const double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
    for (int c = 0; c < 4; ++c) q[c] /= n;
    g.rotation = q;
    g.log_scales = Vec3(uni(rng), uni(rng), uni(rng));
    g.opacity_logit = uni(rng);
    for (int k = 0; k < kShCoeffs; ++k)
      for (int c = 0; c < 3; ++c) g.sh(k, c) = uni(rng);
    g.semantic_logits.resize(classes);
    for (auto& v : g.semantic_logits) v = uni(rng);
    g.intensity_logit = uni(rng);
  }
  return gs;
}

void require_equal(const std::vector<GaussianPrimitive>& a,
                   const std::vector<GaussianPrimitive>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].mean == b[i].mean);
    for (int c = 0; c < 4; ++c) REQUIRE(a[i].rotation[c] == b[i].rotation[c]);
    REQUIRE(a[i].log_scales == b[i].log_scales);
    REQUIRE(a[i].opacity_logit == b[i].opacity_logit);
    REQUIRE(a[i].sh == b[i].sh);
    REQUIRE(a[i].semantic_logits == b[i].semantic_logits);
    REQUIRE(a[i].intensity_logit == b[i].intensity_logit);
  }
}

}  // namespace

TEST_CASE("gaussian ply round trip is bit exact") {
  const auto gs = random_gaussians(17, 3, 41);
  const std::string path = (scratch() / "gauss.ply").string();
  save_gaussian_ply(path, gs);
  require_equal(load_gaussian_ply(path), gs);
}

TEST_CASE("gaussian ply without semantics or intensity still loads") {
  auto gs = random_gaussians(4, 0, 42);
  for (auto& g : gs) g.intensity_logit = 0.0;
  const std::string path = (scratch() / "plain.ply").string();
  save_gaussian_ply(path, gs);
  const auto back = load_gaussian_ply(path);
  require_equal(back, gs);
  REQUIRE(back[0].semantic_logits.empty());
}

TEST_CASE("mixed semantic channel counts are rejected on save") {
  auto gs = random_gaussians(3, 2, 43);
  gs[1].semantic_logits.resize(1);
  REQUIRE_THROWS_AS(save_gaussian_ply((scratch() / "bad.ply").string(), gs),
                    std::invalid_argument);
}

namespace {

SceneModel demo_scene() {
  SceneModel scene;
  scene.background = random_gaussians(6, 2, 51);
  scene.sky = random_gaussians(3, 2, 52);
  scene.classes = {"road", "vehicle"};
  scene.appearance["front"] = {Vec3(1.0, 1.1, 0.9), Vec3(0.01, -0.02, 0.0)};
  scene.appearance["ring"] = {};

  DynamicObject car;
  car.object_id = "car_7";
  car.gaussians = random_gaussians(4, 2, 53);
  car.keyframes.push_back({0.25, quat_from_axis_angle(Vec3(0, 0, 1), 0.3),
                           Vec3(1.0, 2.0, 3.0)});
  car.keyframes.push_back({1.75, quat_from_axis_angle(Vec3(1, 1, 0).normalized(), -0.9),
                           Vec3(-0.5, 0.0, 4.0)});
  scene.dynamic_objects.push_back(std::move(car));
  return scene;
}

}  // namespace

TEST_CASE("scene save and load reproduce every parameter bit exactly") {
  const SceneModel scene = demo_scene();
  const std::string dir = (scratch() / "scene_rt").string();
  save_scene(dir, scene);
  const SceneModel back = load_scene(dir);

  require_equal(back.background, scene.background);
  require_equal(back.sky, scene.sky);
  REQUIRE(back.classes == scene.classes);
  REQUIRE(back.appearance.size() == 2);
  for (const auto& [id, a] : scene.appearance) {
    REQUIRE(back.appearance.at(id).scale == a.scale);
    REQUIRE(back.appearance.at(id).bias == a.bias);
  }
  REQUIRE(back.dynamic_objects.size() == 1);
  const auto& obj = back.dynamic_objects[0];
  const auto& src = scene.dynamic_objects[0];
  REQUIRE(obj.object_id == src.object_id);
  require_equal(obj.gaussians, src.gaussians);
  REQUIRE(obj.keyframes.size() == src.keyframes.size());
  for (std::size_t i = 0; i < obj.keyframes.size(); ++i) {
    REQUIRE(obj.keyframes[i].timestamp == src.keyframes[i].timestamp);
    for (int c = 0; c < 4; ++c)
      REQUIRE(obj.keyframes[i].rotation[c] == src.keyframes[i].rotation[c]);
    REQUIRE(obj.keyframes[i].translation == src.keyframes[i].translation);
  }
}

TEST_CASE("a scene with no dynamic objects round trips") {
  SceneModel scene;
  scene.background = random_gaussians(2, 0, 61);
  const std::string dir = (scratch() / "scene_static").string();
  save_scene(dir, scene);
  const SceneModel back = load_scene(dir);
  require_equal(back.background, scene.background);
  REQUIRE(back.dynamic_objects.empty());
  REQUIRE(back.sky.empty());
}

TEST_CASE("scene version mismatch is rejected") {
  const std::string dir = (scratch() / "scene_ver").string();
  save_scene(dir, demo_scene());
  Json doc;
  {
    std::ifstream in(dir + "/scene.json");
    in >> doc;
  }
  doc["version"] = 2;
  {
    std::ofstream out(dir + "/scene.json");
    out << doc.dump(2);
  }
  REQUIRE_THROWS_MATCHES(load_scene(dir), ConfigError,
                         MessageMatches(ContainsSubstring("version mismatch")));
}

TEST_CASE("missing scene pieces raise config errors") {
  const std::string dir = (scratch() / "scene_missing").string();
  save_scene(dir, demo_scene());
  fs::remove(dir + "/background.ply");
  REQUIRE_THROWS_AS(load_scene(dir), ConfigError);
  REQUIRE_THROWS_AS(load_scene((scratch() / "no_such_dir").string()), ConfigError);
}

TEST_CASE("unknown scene.json fields are named") {
  const std::string dir = (scratch() / "scene_extra").string();
  save_scene(dir, demo_scene());
  Json doc;
  {
    std::ifstream in(dir + "/scene.json");
    in >> doc;
  }
  doc["exposure"] = 1.5;
  {
    std::ofstream out(dir + "/scene.json");
    out << doc.dump(2);
  }
  REQUIRE_THROWS_MATCHES(load_scene(dir), ConfigError,
                         MessageMatches(ContainsSubstring("exposure")));
}

namespace {

Json identity_pose() {
  Json p;
  p["R"] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  p["t"] = {0, 0, 0};
  return p;
}

Json rotated_pose(const Vec3& axis, double angle, const Vec3& t) {
  const Mat3 r = quat_to_rotmat(quat_from_axis_angle(axis.normalized(), angle));
  Json p;
  std::vector<double> rv;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rv.push_back(r(i, j));
  p["R"] = rv;
  p["t"] = {t[0], t[1], t[2]};
  return p;
}

void write_json(const fs::path& path, const Json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

Image test_rgb(int w, int h, int salt) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = (((y * w + x) * 3 + c) * 7 + salt) % 256 / 255.0;
  return img;
}

void save_points(const fs::path& path, const std::vector<ColoredPoint>& pts,
                 bool u8_color) {
  PlyElement e;
  e.name = "vertex";
  e.count = pts.size();
  const PlyType ct = u8_color ? PlyType::U8 : PlyType::F64;
  e.properties = {{"x", PlyType::F64}, {"y", PlyType::F64}, {"z", PlyType::F64},
                  {"red", ct},         {"green", ct},       {"blue", ct}};
  for (const auto& p : pts) {
    for (int c = 0; c < 3; ++c) e.values.push_back(p.xyz[c]);
    for (int c = 0; c < 3; ++c)
      e.values.push_back(u8_color ? std::round(p.rgb[c] * 255.0) : p.rgb[c]);
  }
  PlyData data;
  data.elements.push_back(std::move(e));
  save_ply(path.string(), data);
}

// two pinhole cameras, four frames; frame 0 carries every modality
fs::path build_dataset_fixture(const std::string& name) {
  const fs::path root = scratch() / name;
  fs::remove_all(root);
  fs::create_directories(root / "images");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "semantic");

  Json cams = Json::array();
  {
    Json c;
    c["id"] = "front";
    c["kind"] = "pinhole";
    c["width"] = 8;
    c["height"] = 6;
    c["fx"] = 10.0;
    c["fy"] = 10.0;
    c["u0"] = 4.0;
    c["v0"] = 3.0;
    c["pose"] = identity_pose();
    cams.push_back(c);
  }
  {
    Json c;
    c["id"] = "ring";
    c["kind"] = "kb";
    c["width"] = 8;
    c["height"] = 6;
    c["fx"] = 5.0;
    c["fy"] = 5.0;
    c["u0"] = 4.0;
    c["v0"] = 3.0;
    c["k"] = {0.02, 0.001, 0.0, 0.0};
    cams.push_back(c);
  }
  write_json(root / "cameras.json", cams);

  for (int i = 0; i < 2; ++i) {
    save_png((root / "images" / ("f" + std::to_string(i) + ".png")).string(),
             test_rgb(8, 6, i));
    save_png((root / "images" / ("r" + std::to_string(i) + ".png")).string(),
             test_rgb(8, 6, 10 + i));
  }

  Image depth(8, 6, 1);
  for (std::size_t i = 0; i < depth.data.size(); ++i)
    depth.data[i] = 2.0 + 0.01 * static_cast<double>(i);
  save_f32((root / "depth" / "f0.f32").string(), depth);
  Image lidar(8, 6, 1);
  lidar.at(2, 3, 0) = 4.5;
  lidar.at(5, 7, 0) = 7.25;
  save_f32((root / "depth" / "l0.f32").string(), lidar);

  std::vector<int> labels(8 * 6, 0);
  labels[5] = 2;
  labels[11] = 6;
  save_palette_png((root / "semantic" / "f0.png").string(), labels, 8, 6, 7);

  Json frames = Json::array();
  {
    Json f;
    f["camera_id"] = "front";
    f["timestamp"] = 0.0;
    f["image"] = "images/f0.png";
    f["depth"] = "depth/f0.f32";
    f["lidar_mask"] = "depth/l0.f32";
    f["semantic"] = "semantic/f0.png";
    f["pose"] = rotated_pose(Vec3(0, 1, 0), 0.2, Vec3(0.5, 0.0, -1.0));
    frames.push_back(f);
  }
  {
    Json f;
    f["camera_id"] = "front";
    f["timestamp"] = 0.5;
    f["image"] = "images/f1.png";
    frames.push_back(f);
  }
  for (int i = 0; i < 2; ++i) {
    Json f;
    f["camera_id"] = "ring";
    f["timestamp"] = 0.5 * i;
    f["image"] = "images/r" + std::to_string(i) + ".png";
    frames.push_back(f);
  }
  write_json(root / "frames.json", frames);

  std::vector<ColoredPoint> pts = {{Vec3(0.0, 0.0, 3.0), Vec3(128 / 255.0, 0.0, 1.0)},
                                   {Vec3(1.0, -0.5, 4.0), Vec3(0.0, 1.0, 64 / 255.0)}};
  save_points(root / "points.ply", pts, true);
  save_points(root / "car.ply",
              {{Vec3(0.0, 0.0, 0.0), Vec3(0.5, 0.5, 0.5)},
               {Vec3(0.8, 0.0, 0.0), Vec3(0.2, 0.2, 0.2)}},
              false);

  Json tracks = Json::array();
  Json obj;
  obj["object_id"] = "car_1";
  Json kfs = Json::array();
  {
    Json kf;
    kf["timestamp"] = 0.5;
    const Json p = rotated_pose(Vec3(0, 0, 1), 0.8, Vec3(2.0, 0.0, 5.0));
    kf["R"] = p["R"];
    kf["t"] = p["t"];
    kfs.push_back(kf);
  }
  {
    Json kf;
    kf["timestamp"] = 0.0;
    const Json p = identity_pose();
    kf["R"] = p["R"];
    kf["t"] = p["t"];
    kfs.push_back(kf);
  }
  obj["keyframes"] = kfs;
  obj["ply"] = "car.ply";
  tracks.push_back(obj);
  write_json(root / "tracks.json", tracks);
  return root;
}

}  // namespace

TEST_CASE("the synthetic dataset fixture loads with all modalities") {
  const fs::path root = build_dataset_fixture("ds_ok");
  const Dataset ds = load_dataset(root.string());

  REQUIRE(ds.cameras.size() == 2);
  REQUIRE(ds.camera("front").model.kind == CameraKind::Pinhole);
  REQUIRE(ds.camera("ring").model.kind == CameraKind::KannalaBrandt);
  REQUIRE_THROWS_MATCHES(ds.camera("rear"), ConfigError,
                         MessageMatches(ContainsSubstring("rear")));

  REQUIRE(ds.frames.size() == 4);
  const FrameSample& f0 = ds.frames[0];
  REQUIRE(f0.camera_id == "front");
  REQUIRE(f0.timestamp == 0.0);
  REQUIRE(f0.image.width == 8);
  REQUIRE(f0.image.height == 6);
  REQUIRE(f0.image.channels == 3);
  REQUIRE(f0.image.at(0, 0, 1) == 7.0 / 255.0);

  REQUIRE(f0.mono_depth.has_value());
  REQUIRE_THAT(f0.mono_depth->at(1, 2, 0), WithinAbs(2.0 + 0.01 * 10, 1e-6));
  REQUIRE(f0.lidar_depth.has_value());
  REQUIRE_THAT(f0.lidar_depth->at(2, 3, 0), WithinAbs(4.5, 1e-9));
  REQUIRE(f0.lidar_depth->at(0, 0, 0) == 0.0);
  REQUIRE(f0.semantic.has_value());
  REQUIRE((*f0.semantic)[5] == 2);
  REQUIRE((*f0.semantic)[11] == 6);
  REQUIRE(ds.classes == 7);

  const Mat3 r0 = quat_to_rotmat(quat_from_axis_angle(Vec3(0, 1, 0), 0.2));
  REQUIRE((f0.pose.R_wc - r0).norm() < 1e-12);
  REQUIRE((f0.pose.r_c + r0.transpose() * Vec3(0.5, 0.0, -1.0)).norm() < 1e-12);

  // frame 1 falls back to the static camera pose
  const FrameSample& f1 = ds.frames[1];
  REQUIRE(!f1.mono_depth.has_value());
  REQUIRE(!f1.lidar_depth.has_value());
  REQUIRE(!f1.semantic.has_value());
  REQUIRE((f1.pose.R_wc - Mat3::Identity()).norm() == 0.0);
  REQUIRE(f1.pose.r_c.norm() == 0.0);

  REQUIRE(ds.points.size() == 2);
  REQUIRE((ds.points[0].xyz - Vec3(0.0, 0.0, 3.0)).norm() < 1e-12);
  REQUIRE_THAT(ds.points[0].rgb[0], WithinAbs(128.0 / 255.0, 1e-12));
  REQUIRE_THAT(ds.points[1].rgb[2], WithinAbs(64.0 / 255.0, 1e-12));

  REQUIRE(ds.tracks.size() == 1);
  REQUIRE(ds.tracks[0].object_id == "car_1");
  REQUIRE(ds.tracks[0].keyframes.size() == 2);
  REQUIRE(ds.tracks[0].keyframes[0].timestamp == 0.0);  // sorted on load
  REQUIRE(ds.tracks[0].keyframes[1].timestamp == 0.5);
  REQUIRE(ds.tracks[0].gaussians.size() == 2);
  REQUIRE_THAT(ds.tracks[0].gaussians[0].scales()[0], WithinAbs(0.8, 1e-9));
}

TEST_CASE("a dataset without tracks.json has no dynamic objects") {
  const fs::path root = build_dataset_fixture("ds_no_tracks");
  fs::remove(root / "tracks.json");
  const Dataset ds = load_dataset(root.string());
  REQUIRE(ds.tracks.empty());
  REQUIRE(ds.classes == 7);
}

TEST_CASE("corrupt frame poses are reported with the frame index") {
  const fs::path root = build_dataset_fixture("ds_bad_pose");
  Json frames;
  {
    std::ifstream in(root / "frames.json");
    in >> frames;
  }
  frames[0]["pose"]["R"] = {1, 0, 0, 0, 1, 0, 0, 0.5, 1};
  write_json(root / "frames.json", frames);
  REQUIRE_THROWS_MATCHES(load_dataset(root.string()), ConfigError,
                         MessageMatches(ContainsSubstring("frames.json frame 0")));
}

TEST_CASE("image dimensions must match the camera") {
  const fs::path root = build_dataset_fixture("ds_bad_dims");
  save_png((root / "images" / "small.png").string(), test_rgb(4, 4, 3));
  Json frames;
  {
    std::ifstream in(root / "frames.json");
    in >> frames;
  }
  frames[1]["image"] = "images/small.png";
  write_json(root / "frames.json", frames);
  REQUIRE_THROWS_MATCHES(load_dataset(root.string()), ConfigError,
                         MessageMatches(ContainsSubstring("frames.json frame 1")));
}

TEST_CASE("frames referencing unknown cameras are rejected") {
  const fs::path root = build_dataset_fixture("ds_bad_cam");
  Json frames;
  {
    std::ifstream in(root / "frames.json");
    in >> frames;
  }
  frames[2]["camera_id"] = "rear";
  write_json(root / "frames.json", frames);
  REQUIRE_THROWS_MATCHES(load_dataset(root.string()), ConfigError,
                         MessageMatches(ContainsSubstring("rear")));
}

TEST_CASE("unknown frame fields are named") {
  const fs::path root = build_dataset_fixture("ds_extra_field");
  Json frames;
  {
    std::ifstream in(root / "frames.json");
    in >> frames;
  }
  frames[0]["exposure"] = 0.5;
  write_json(root / "frames.json", frames);
  REQUIRE_THROWS_MATCHES(load_dataset(root.string()), ConfigError,
                         MessageMatches(ContainsSubstring("exposure")));
}

TEST_CASE("a missing points cloud is a config error") {
  const fs::path root = build_dataset_fixture("ds_no_points");
  fs::remove(root / "points.ply");
  REQUIRE_THROWS_AS(load_dataset(root.string()), ConfigError);
}
