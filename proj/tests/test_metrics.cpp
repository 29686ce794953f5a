#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fsplat/metrics.hpp"

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
double pattern_b(double i, double j) {
  return clamp01(pattern_a(i, j) + 0.05 * std::cos(0.3 * i - 0.1 * j));
}
double pattern_checker(double i, double j) {
  return static_cast<double>((static_cast<int>(i) + static_cast<int>(j)) % 2);
}

Image random_image(int w, int h, int c, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(0.05, 0.95);
  Image img(w, h, c);
  for (auto& v : img.data) v = uni(rng);
  return img;
}

}  // namespace

TEST_CASE("psnr matches frozen reference and caps at 99") {
  const Image a = synth(64, 64, pattern_a);
  const Image b = synth(64, 64, pattern_b);
  REQUIRE_THAT(psnr(a, b), WithinAbs(29.029462906294, 1e-9));
  REQUIRE(psnr(a, a) == 99.0);

  Image c = a;
  c.data[0] += 1e-9;
  REQUIRE(psnr(a, c) == 99.0);

  Image wrong(32, 64, 1);
  REQUIRE_THROWS_AS(psnr(a, wrong), std::invalid_argument);
}

TEST_CASE("ssim matches frozen scikit-image reference values") {
  const Image a = synth(64, 64, pattern_a);
  const Image b = synth(64, 64, pattern_b);
  REQUIRE_THAT(ssim(a, b), WithinAbs(0.968300245948, 1e-9));
  REQUIRE(ssim(a, a) == 1.0);

  const Image c = synth(32, 32, pattern_checker);
  Image inv = c;
  for (auto& v : inv.data) v = 1.0 - v;
  REQUIRE_THAT(ssim(c, inv), WithinAbs(-0.996406468357, 1e-9));

  Image r = a;
  for (auto& v : r.data) v *= 0.85;
  Image t = r;
  for (auto& v : t.data) v += 0.1;
  REQUIRE_THAT(ssim(r, t), WithinAbs(0.948327020731, 1e-9));

  Image tiny(8, 8, 1);
  REQUIRE_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("multichannel ssim is the mean of per-channel values") {
  std::mt19937 rng(31);
  const Image a = random_image(24, 20, 3, rng);
  const Image b = random_image(24, 20, 3, rng);
  double per_channel = 0.0;
  for (int c = 0; c < 3; ++c) {
    Image ap(24, 20, 1), bp(24, 20, 1);
    for (std::size_t p = 0; p < ap.data.size(); ++p) {
      ap.data[p] = a.data[p * 3 + c];
      bp.data[p] = b.data[p * 3 + c];
    }
    per_channel += ssim(ap, bp);
  }
  REQUIRE_THAT(ssim(a, b), WithinAbs(per_channel / 3.0, 1e-13));
}

TEST_CASE("ssim gradient matches finite differences") {
  std::mt19937 rng(404);
  Image a = random_image(18, 16, 2, rng);
  const Image b = random_image(18, 16, 2, rng);

  Image grad;
  ssim(a, b, &grad);
  REQUIRE(grad.data.size() == a.data.size());

  std::uniform_int_distribution<int> px(0, 17), py(0, 15), pc(0, 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 14; ++trial) {
    // Hit corners and borders as well as interior samples.
    int x = trial == 0 ? 0 : (trial == 1 ? 17 : px(rng));
    int y = trial == 0 ? 0 : (trial == 1 ? 15 : py(rng));
    int c = pc(rng);
    const double saved = a.at(y, x, c);
    a.at(y, x, c) = saved + h;
    const double up = ssim(a, b);
    a.at(y, x, c) = saved - h;
    const double dn = ssim(a, b);
    a.at(y, x, c) = saved;
    const double fd = (up - dn) / (2.0 * h);
    REQUIRE_THAT(grad.at(y, x, c), WithinAbs(fd, 1e-7));
  }
}

TEST_CASE("dssim wraps ssim with a negated half gradient") {
  std::mt19937 rng(77);
  const Image a = random_image(16, 16, 1, rng);
  const Image b = random_image(16, 16, 1, rng);
  Image gs, gd;
  const double s = ssim(a, b, &gs);
  const double d = dssim(a, b, &gd);
  REQUIRE_THAT(d, WithinAbs((1.0 - s) / 2.0, 1e-15));
  for (std::size_t i = 0; i < gs.data.size(); ++i)
    REQUIRE(gd.data[i] == -0.5 * gs.data[i]);
}

TEST_CASE("ssim gradient is bit-identical across thread counts") {
  std::mt19937 rng(9001);
  const Image a = random_image(40, 30, 3, rng);
  const Image b = random_image(40, 30, 3, rng);

  ThreadPool::instance().set_threads(1);
  Image g1;
  const double s1 = ssim(a, b, &g1);
  ThreadPool::instance().set_threads(5);
  Image g5;
  const double s5 = ssim(a, b, &g5);
  ThreadPool::instance().set_threads(1);

  REQUIRE(s1 == s5);
  REQUIRE(g1.data == g5.data);
}

TEST_CASE("zone metrics: full mask reproduces global values") {
  const Image a = synth(64, 64, pattern_a);
  const Image b = synth(64, 64, pattern_b);
  std::vector<std::uint8_t> all(a.pixel_count(), 1);
  const ZoneMetrics zm = zone_metrics(a, b, all);
  REQUIRE(zm.pixels == a.pixel_count());
  REQUIRE(zm.psnr == psnr(a, b));
  REQUIRE_THAT(zm.ssim, WithinAbs(ssim(a, b), 1e-12));
}

TEST_CASE("zone metrics: disjoint zone MSEs recombine by pixel count") {
  const Image a = synth(64, 64, pattern_a);
  const Image b = synth(64, 64, pattern_b);
  std::vector<std::uint8_t> left(a.pixel_count(), 0), right(a.pixel_count(), 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      (x < 20 ? left : right)[static_cast<std::size_t>(y) * 64 + x] = 1;

  const ZoneMetrics zl = zone_metrics(a, b, left);
  const ZoneMetrics zr = zone_metrics(a, b, right);
  const double mse_l = std::pow(10.0, -zl.psnr / 10.0);
  const double mse_r = std::pow(10.0, -zr.psnr / 10.0);
  const double mse_global = std::pow(10.0, -psnr(a, b) / 10.0);
  const double recombined =
      (mse_l * zl.pixels + mse_r * zr.pixels) / (zl.pixels + zr.pixels);
  REQUIRE_THAT(recombined, WithinAbs(mse_global, 1e-12 * mse_global + 1e-18));
}

TEST_CASE("zone metrics: degenerate masks are rejected") {
  const Image a = synth(32, 32, pattern_a);
  const Image b = synth(32, 32, pattern_b);
  std::vector<std::uint8_t> empty(a.pixel_count(), 0);
  REQUIRE_THROWS_AS(zone_metrics(a, b, empty), std::invalid_argument);

  // A mask only inside the window-radius border has pixels for PSNR but
  // none for the cropped ssim map.
  std::vector<std::uint8_t> border(a.pixel_count(), 0);
  border[0] = 1;
  REQUIRE_THROWS_AS(zone_metrics(a, b, border), std::invalid_argument);

  std::vector<std::uint8_t> short_mask(10, 1);
  REQUIRE_THROWS_AS(zone_metrics(a, b, short_mask), std::invalid_argument);
}
