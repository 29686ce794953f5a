#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fsplat/losses.hpp"

using namespace fsplat;
using Catch::Matchers::WithinAbs;

namespace {

Image synth(int w, int h, double (*f)(double, double)) {
  Image img(w, h, 1);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) img.at(i, j, 0) = f(i, j);
  return img;
}

double pattern_a(double i, double j) { return 0.5 + 0.4 * std::sin(0.1 * i + 0.2 * j); }

}  // namespace

TEST_CASE("image loss matches the frozen L1 + D-SSIM value") {
  Image render = synth(64, 64, pattern_a);
  for (auto& v : render.data) v *= 0.85;
  Image target = render;
  for (auto& v : target.data) v += 0.1;

  REQUIRE_THAT(compute_image_loss(render, target),
               WithinAbs(0.085167297927, 1e-9));
}

TEST_CASE("image loss of identical images is zero with zero gradient") {
  const Image a = synth(64, 64, pattern_a);
  Image grad;
  REQUIRE_THAT(compute_image_loss(a, a, &grad), WithinAbs(0.0, 1e-12));
  for (double g : grad.data) REQUIRE_THAT(g, WithinAbs(0.0, 1e-12));
}

TEST_CASE("image loss with lambda zero reduces to plain L1") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uni(0.1, 0.9);
  Image a(12, 9, 3), b(12, 9, 3);
  for (auto& v : a.data) v = uni(rng);
  for (auto& v : b.data) v = uni(rng);
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) l1 += std::abs(a.data[i] - b.data[i]);
  l1 /= static_cast<double>(a.data.size());
  REQUIRE_THAT(compute_image_loss(a, b, nullptr, 0.0), WithinAbs(l1, 1e-14));
  Image wrong(9, 12, 3);
  REQUIRE_THROWS_AS(compute_image_loss(a, wrong), std::invalid_argument);
}

TEST_CASE("image loss gradient matches finite differences") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(0.1, 0.9);
  Image a(16, 14, 3), b(16, 14, 3);
  for (auto& v : a.data) v = uni(rng);
  for (auto& v : b.data) v = uni(rng);

  Image grad;
  compute_image_loss(a, b, &grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < a.data.size(); i += 97) {
    Image ap = a, am = a;
    ap.data[i] += h;
    am.data[i] -= h;
    const double fd =
        (compute_image_loss(ap, b) - compute_image_loss(am, b)) / (2.0 * h);
    REQUIRE_THAT(grad.data[i], WithinAbs(fd, 1e-6));
  }
}

TEST_CASE("mono depth term matches the frozen Pearson value and gradient") {
  const std::size_t n = 480;
  std::vector<double> render(n), mono(n);
  for (std::size_t i = 0; i < n; ++i) {
    render[i] = 2.0 + 0.5 * std::sin(0.37 * i);
    mono[i] = 1.5 + 0.4 * std::sin(0.37 * i + 0.2) + 0.1 * std::cos(0.11 * i);
  }
  std::vector<double> grad;
  const double loss = compute_depth_loss(render, nullptr, nullptr, &mono, &grad);
  REQUIRE_THAT(loss, WithinAbs(0.048346258044, 1e-9));
  REQUIRE_THAT(grad[0], WithinAbs(-0.00358617842322, 1e-12));
  REQUIRE_THAT(grad[7], WithinAbs(-3.08390874515e-05, 1e-12));
  REQUIRE_THAT(grad[311], WithinAbs(0.00258924195574, 1e-12));
}

TEST_CASE("mono depth term vanishes under a positive affine relation") {
  std::vector<double> render(200), mono(200);
  for (std::size_t i = 0; i < render.size(); ++i) {
    render[i] = 1.0 + 0.3 * std::sin(0.21 * i);
    mono[i] = 2.0 * render[i] + 3.0;
  }
  REQUIRE_THAT(compute_depth_loss(render, nullptr, nullptr, &mono),
               WithinAbs(0.0, 1e-12));
}

TEST_CASE("constant render depth against varying mono gives the degenerate term") {
  std::vector<double> render(64, 2.5), mono(64);
  for (std::size_t i = 0; i < mono.size(); ++i) mono[i] = 1.0 + 0.1 * i;
  REQUIRE_THAT(compute_depth_loss(render, nullptr, nullptr, &mono),
               WithinAbs(1.0, 1e-12));
}

TEST_CASE("mono pixels at or below zero are excluded") {
  const std::size_t n = 480;
  std::vector<double> render(n), mono(n);
  for (std::size_t i = 0; i < n; ++i) {
    render[i] = 2.0 + 0.5 * std::sin(0.37 * i);
    mono[i] = 1.5 + 0.4 * std::sin(0.37 * i + 0.2) + 0.1 * std::cos(0.11 * i);
  }
  std::vector<double> mono_holes = mono, render_masked, mono_masked;
  for (std::size_t i = 0; i < n; i += 3) mono_holes[i] = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (mono_holes[i] > 0.0) {
      render_masked.push_back(render[i]);
      mono_masked.push_back(mono[i]);
    }
  REQUIRE_THAT(
      compute_depth_loss(render, nullptr, nullptr, &mono_holes),
      WithinAbs(compute_depth_loss(render_masked, nullptr, nullptr, &mono_masked),
                1e-12));
}

TEST_CASE("lidar depth term is masked L1 with sign gradients") {
  std::vector<double> render = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> lidar = {1.5, 2.0, 2.0, 9.0};
  std::vector<std::uint8_t> mask = {1, 1, 1, 0};
  std::vector<double> grad;
  const double loss = compute_depth_loss(render, &lidar, &mask, nullptr, &grad);
  REQUIRE_THAT(loss, WithinAbs((0.5 + 0.0 + 1.0) / 3.0, 1e-12));
  REQUIRE_THAT(grad[0], WithinAbs(-1.0 / 3.0, 1e-12));
  REQUIRE_THAT(grad[1], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(grad[2], WithinAbs(1.0 / 3.0, 1e-12));
  REQUIRE_THAT(grad[3], WithinAbs(0.0, 1e-12));

  REQUIRE_THAT(compute_depth_loss(lidar, &lidar, &mask, nullptr),
               WithinAbs(0.0, 1e-12));
}

TEST_CASE("an all-zero lidar mask skips the term") {
  std::vector<double> render = {1.0, 2.0};
  std::vector<double> lidar = {5.0, 6.0};
  std::vector<std::uint8_t> mask = {0, 0};
  std::vector<double> grad;
  REQUIRE_THAT(compute_depth_loss(render, &lidar, &mask, nullptr, &grad),
               WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(grad[0], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(grad[1], WithinAbs(0.0, 1e-12));
}

TEST_CASE("combined depth gradient matches finite differences") {
  const std::size_t n = 120;
  std::vector<double> render(n), mono(n), lidar(n);
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    render[i] = 2.0 + 0.5 * std::sin(0.37 * i);
    mono[i] = 1.5 + 0.4 * std::sin(0.37 * i + 0.2);
    lidar[i] = 2.2 + 0.4 * std::cos(0.19 * i);
    mask[i] = i % 4 == 0;
  }
  std::vector<double> grad;
  compute_depth_loss(render, &lidar, &mask, &mono, &grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < n; i += 17) {
    std::vector<double> rp = render, rm = render;
    rp[i] += h;
    rm[i] -= h;
    const double fd = (compute_depth_loss(rp, &lidar, &mask, &mono) -
                       compute_depth_loss(rm, &lidar, &mask, &mono)) /
                      (2.0 * h);
    REQUIRE_THAT(grad[i], WithinAbs(fd, 1e-7));
  }
}

TEST_CASE("semantic loss matches the frozen cross-entropy value") {
  const int classes = 5;
  const std::size_t npix = 48;
  std::vector<double> logits(npix * classes);
  for (std::size_t k = 0; k < logits.size(); ++k)
    logits[k] = 2.0 * std::sin(0.13 * static_cast<double>(k) + 0.7);
  std::vector<int> labels(npix);
  for (std::size_t i = 0; i < npix; ++i) labels[i] = static_cast<int>((3 * i) % 5);

  REQUIRE_THAT(compute_semantic_loss(logits, classes, labels),
               WithinAbs(0.016558028007, 1e-9));
}

TEST_CASE("uniform logits give weight times log class count") {
  std::vector<double> logits(30 * 5, 0.7);
  std::vector<int> labels(30, 2);
  REQUIRE_THAT(compute_semantic_loss(logits, 5, labels),
               WithinAbs(0.016094379124, 1e-9));
}

TEST_CASE("strongly peaked correct logits drive the semantic loss to zero") {
  std::vector<double> logits(8 * 3, 0.0);
  std::vector<int> labels(8);
  for (std::size_t i = 0; i < 8; ++i) {
    labels[i] = static_cast<int>(i % 3);
    logits[i * 3 + labels[i]] = 30.0;
  }
  REQUIRE_THAT(compute_semantic_loss(logits, 3, labels), WithinAbs(0.0, 1e-12));

  std::vector<int> bad = labels;
  bad[0] = 3;
  REQUIRE_THROWS_AS(compute_semantic_loss(logits, 3, bad), std::invalid_argument);
  REQUIRE_THROWS_AS(compute_semantic_loss(logits, 4, labels), std::invalid_argument);
}

TEST_CASE("semantic gradient matches finite differences") {
  const int classes = 4;
  const std::size_t npix = 12;
  std::vector<double> logits(npix * classes);
  for (std::size_t k = 0; k < logits.size(); ++k)
    logits[k] = std::sin(0.41 * static_cast<double>(k));
  std::vector<int> labels(npix);
  for (std::size_t i = 0; i < npix; ++i) labels[i] = static_cast<int>((i * 2) % 4);

  std::vector<double> grad;
  compute_semantic_loss(logits, classes, labels, &grad);
  const double h = 1e-6;
  for (std::size_t k = 0; k < logits.size(); k += 5) {
    std::vector<double> lp = logits, lm = logits;
    lp[k] += h;
    lm[k] -= h;
    const double fd = (compute_semantic_loss(lp, classes, labels) -
                       compute_semantic_loss(lm, classes, labels)) /
                      (2.0 * h);
    REQUIRE_THAT(grad[k], WithinAbs(fd, 1e-9));
  }
}

TEST_CASE("regularizer matches the closed form and rejects empty input") {
  std::vector<GaussianPrimitive> gs(5);
  for (auto& g : gs) {
    g.opacity_logit = logit(0.5);
    g.log_scales = Vec3::Constant(std::log(0.2));
  }
  REQUIRE_THAT(compute_reg_loss(gs), WithinAbs(0.007, 1e-12));

  std::vector<GaussianGrads> grads(gs.size());
  compute_reg_loss(gs, &grads);
  for (const auto& gg : grads) {
    REQUIRE_THAT(gg.opacity_logit, WithinAbs(0.01 / 5.0 * 0.25, 1e-15));
    for (int c = 0; c < 3; ++c)
      REQUIRE_THAT(gg.log_scales[c], WithinAbs(0.01 / 15.0 * 0.2, 1e-15));
  }

  std::vector<GaussianPrimitive> empty;
  REQUIRE_THROWS_AS(compute_reg_loss(empty), std::invalid_argument);
}

TEST_CASE("regularizer gradient matches finite differences") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<GaussianPrimitive> gs(4);
  for (auto& g : gs) {
    g.opacity_logit = uni(rng);
    g.log_scales = Vec3(uni(rng), uni(rng), uni(rng)) - Vec3::Constant(1.5);
  }
  std::vector<GaussianGrads> grads(gs.size());
  compute_reg_loss(gs, &grads);

  const double h = 1e-6;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    auto gp = gs, gm = gs;
    gp[i].opacity_logit += h;
    gm[i].opacity_logit -= h;
    REQUIRE_THAT(grads[i].opacity_logit,
                 WithinAbs((compute_reg_loss(gp) - compute_reg_loss(gm)) / (2.0 * h),
                           1e-9));
    for (int c = 0; c < 3; ++c) {
      gp = gs;
      gm = gs;
      gp[i].log_scales[c] += h;
      gm[i].log_scales[c] -= h;
      REQUIRE_THAT(grads[i].log_scales[c],
                   WithinAbs((compute_reg_loss(gp) - compute_reg_loss(gm)) / (2.0 * h),
                             1e-9));
    }
  }
}

namespace {

// depth map of a plane n . p = c in camera coordinates, z-depth parameterization
std::vector<double> plane_depth(const CameraModel& cam, const Vec3& n, double c) {
  std::vector<double> depth(static_cast<std::size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 ray = unproject_pixel(cam, Vec2(x + 0.5, y + 0.5));
      const Vec3 d = ray / ray.z();
      depth[static_cast<std::size_t>(y) * cam.width + x] = c / n.dot(d);
    }
  return depth;
}

std::vector<double> constant_normal(const CameraModel& cam, const Vec3& n) {
  std::vector<double> out(static_cast<std::size_t>(cam.width) * cam.height * 3);
  for (std::size_t p = 0; p < out.size() / 3; ++p)
    for (int c = 0; c < 3; ++c) out[p * 3 + c] = n[c];
  return out;
}

}  // namespace

TEST_CASE("normal loss vanishes on a plane with matching normals") {
  const CameraModel cam = CameraModel::pinhole(20.0, 20.0, 8.0, 6.0, 16, 12);
  const Vec3 n0 = Vec3(0.3, -0.2, 0.9).normalized();
  const auto depth = plane_depth(cam, n0, 5.0 * n0.z());
  const auto normal = constant_normal(cam, -n0);

  REQUIRE_THAT(compute_normal_loss(normal, depth, cam), WithinAbs(0.0, 1e-12));

  const auto flipped = constant_normal(cam, n0);
  REQUIRE_THAT(compute_normal_loss(flipped, depth, cam), WithinAbs(2.0, 1e-12));
}

TEST_CASE("frontal plane yields depth-derived normals facing the camera") {
  const CameraModel cam = CameraModel::pinhole(20.0, 20.0, 8.0, 6.0, 16, 12);
  std::vector<double> depth(16 * 12, 5.0);
  const auto normal = constant_normal(cam, Vec3(0, 0, -1));
  REQUIRE_THAT(compute_normal_loss(normal, depth, cam), WithinAbs(0.0, 1e-12));
}

TEST_CASE("pixels without full depth stencils are excluded") {
  const CameraModel cam = CameraModel::pinhole(20.0, 20.0, 8.0, 6.0, 16, 12);
  std::vector<double> depth(16 * 12, 5.0);
  const auto normal = constant_normal(cam, Vec3(0, 0, -1));
  auto holed = depth;
  holed[5 * 16 + 7] = 0.0;
  REQUIRE_THAT(compute_normal_loss(normal, holed, cam), WithinAbs(0.0, 1e-12));

  std::vector<double> all_invalid(16 * 12, 0.0);
  REQUIRE_THAT(compute_normal_loss(normal, all_invalid, cam), WithinAbs(0.0, 1e-12));
}

TEST_CASE("normal loss gradients match finite differences") {
  const CameraModel cam = CameraModel::pinhole(10.0, 11.0, 4.0, 3.5, 8, 7);
  const std::size_t np = 8 * 7;
  std::vector<double> depth(np), normal(np * 3);
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (std::size_t p = 0; p < np; ++p) {
    const int x = static_cast<int>(p % 8), y = static_cast<int>(p / 8);
    depth[p] = 3.0 + 0.2 * std::sin(0.8 * x) + 0.15 * std::cos(0.6 * y + 0.3);
    Vec3 nr(uni(rng), uni(rng), -1.0 - 0.2 * uni(rng));
    nr.normalize();
    for (int c = 0; c < 3; ++c) normal[p * 3 + c] = nr[c];
  }

  std::vector<double> gn, gd;
  compute_normal_loss(normal, depth, cam, &gn, &gd);
  const double h = 1e-6;

  for (std::size_t i = 0; i < np; i += 5) {
    auto dp = depth, dm = depth;
    dp[i] += h;
    dm[i] -= h;
    const double fd = (compute_normal_loss(normal, dp, cam) -
                       compute_normal_loss(normal, dm, cam)) /
                      (2.0 * h);
    REQUIRE_THAT(gd[i], WithinAbs(fd, 1e-6));
  }
  for (std::size_t k = 0; k < normal.size(); k += 11) {
    auto npp = normal, npm = normal;
    npp[k] += h;
    npm[k] -= h;
    const double fd = (compute_normal_loss(npp, depth, cam) -
                       compute_normal_loss(npm, depth, cam)) /
                      (2.0 * h);
    REQUIRE_THAT(gn[k], WithinAbs(fd, 1e-6));
  }
}

TEST_CASE("loss breakdown totals the present terms") {
  LossBreakdown lb;
  lb.rgb_pinhole = 0.12;
  lb.rgb_fisheye = 0.08;
  lb.depth = 0.3;
  lb.semantic = 0.016;
  lb.normal = 0.05;
  lb.reg = 0.007;
  lb.finalize();
  REQUIRE_THAT(lb.total, WithinAbs(0.573, 1e-9));

  lb.lidar = 0.2;
  lb.finalize();
  REQUIRE_THAT(lb.total, WithinAbs(0.773, 1e-9));
}
