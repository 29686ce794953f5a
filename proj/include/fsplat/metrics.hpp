#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fsplat/common.hpp"
#include "fsplat/image.hpp"

namespace fsplat {

namespace detail {

// 11-tap Gaussian window, sigma 1.5, normalized to unit sum.
inline const std::array<double, 11>& ssim_kernel() {
  static const std::array<double, 11> k = []() {
    std::array<double, 11> w{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double x = i - 5;
      w[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return k;
}

// Edge-duplicating reflection: index -1 maps to 0, n maps to n-1.
inline int reflect_idx(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -1 - i : 2 * n - 1 - i;
  return i;
}

inline void gauss_h(const std::vector<double>& in, std::vector<double>& out,
                    int w, int h) {
  const auto& k = ssim_kernel();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    const double* row = in.data() + y * w;
    double* orow = out.data() + y * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = 0; j < 11; ++j) s += k[j] * row[reflect_idx(x - 5 + j, w)];
      orow[x] = s;
    }
  }, 16);
}

inline void gauss_v(const std::vector<double>& in, std::vector<double>& out,
                    int w, int h) {
  const auto& k = ssim_kernel();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    double* orow = out.data() + y * w;
    for (int j = 0; j < 11; ++j) {
      const double* row =
          in.data() + static_cast<std::size_t>(reflect_idx(static_cast<int>(y) - 5 + j, h)) * w;
      const double kj = k[j];
      if (j == 0)
        for (int x = 0; x < w; ++x) orow[x] = kj * row[x];
      else
        for (int x = 0; x < w; ++x) orow[x] += kj * row[x];
    }
  }, 16);
}

// Horizontal then vertical pass.
inline std::vector<double> gauss_filter(const std::vector<double>& in, int w, int h) {
  std::vector<double> tmp(in.size()), out(in.size());
  gauss_h(in, tmp, w, h);
  gauss_v(tmp, out, w, h);
  return out;
}

// Adjoint of gauss_filter: scatter through the same reflected taps, passes
// applied in reverse order. Row / column tasks own disjoint state, so the
// result is bit-identical for any thread count.
inline void gauss_h_adjoint(const std::vector<double>& in, std::vector<double>& out,
                            int w, int h) {
  const auto& k = ssim_kernel();
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
    const double* row = in.data() + y * w;
    double* orow = out.data() + y * w;
    for (int x = 0; x < w; ++x) orow[x] = 0.0;
    for (int x = 0; x < w; ++x) {
      const double v = row[x];
      for (int j = 0; j < 11; ++j) orow[reflect_idx(x - 5 + j, w)] += k[j] * v;
    }
  }, 16);
}

inline void gauss_v_adjoint(const std::vector<double>& in, std::vector<double>& out,
                            int w, int h) {
  const auto& k = ssim_kernel();
  parallel_for(static_cast<std::size_t>(w), [&](std::size_t x) {
    for (int y = 0; y < h; ++y) out[static_cast<std::size_t>(y) * w + x] = 0.0;
    for (int y = 0; y < h; ++y) {
      const double v = in[static_cast<std::size_t>(y) * w + x];
      for (int j = 0; j < 11; ++j)
        out[static_cast<std::size_t>(reflect_idx(y - 5 + j, h)) * w + x] += k[j] * v;
    }
  }, 16);
}

inline std::vector<double> gauss_adjoint(const std::vector<double>& in, int w, int h) {
  std::vector<double> tmp(in.size()), out(in.size());
  gauss_v_adjoint(in, tmp, w, h);
  gauss_h_adjoint(tmp, out, w, h);
  return out;
}

inline void check_pair(const Image& a, const Image& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument(std::string(who) + ": image shapes differ");
  if (a.width == 0 || a.height == 0 || a.channels == 0)
    throw std::invalid_argument(std::string(who) + ": empty image");
}

inline std::vector<double> extract_plane(const Image& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = img.data[i * img.channels + c];
  return p;
}

}  // namespace detail

inline double psnr(const Image& a, const Image& b) {
  detail::check_pair(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
// population covariances, C1 = 0.0001, C2 = 0.0009 for unit data range,
// averaged over the window-radius-cropped interior, then over channels.
// When grad_a is given it receives d(mean ssim)/d(a). When map_out is
// given it receives the per-pixel per-channel similarity map (uncropped).
inline double ssim(const Image& a, const Image& b, Image* grad_a = nullptr,
                   Image* map_out = nullptr) {
  detail::check_pair(a, b, "ssim");
  const int w = a.width, h = a.height, nc = a.channels;
  if (w < 11 || h < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  constexpr double C1 = 1e-4, C2 = 9e-4;
  constexpr int pad = 5;
  const std::size_t crop_count =
      static_cast<std::size_t>(w - 2 * pad) * static_cast<std::size_t>(h - 2 * pad);

  if (grad_a) *grad_a = Image(w, h, nc, 0.0);
  if (map_out) *map_out = Image(w, h, nc, 0.0);

  double total = 0.0;
  for (int c = 0; c < nc; ++c) {
    const std::vector<double> x = detail::extract_plane(a, c);
    const std::vector<double> y = detail::extract_plane(b, c);
    const std::size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const std::vector<double> ux = detail::gauss_filter(x, w, h);
    const std::vector<double> uy = detail::gauss_filter(y, w, h);
    const std::vector<double> mxx = detail::gauss_filter(xx, w, h);
    const std::vector<double> myy = detail::gauss_filter(yy, w, h);
    const std::vector<double> mxy = detail::gauss_filter(xy, w, h);

    std::vector<double> smap(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double vx = mxx[i] - ux[i] * ux[i];
      const double vy = myy[i] - uy[i] * uy[i];
      const double vxy = mxy[i] - ux[i] * uy[i];
      const double a1 = 2.0 * ux[i] * uy[i] + C1;
      const double a2 = 2.0 * vxy + C2;
      const double b1 = ux[i] * ux[i] + uy[i] * uy[i] + C1;
      const double b2 = vx + vy + C2;
      smap[i] = (a1 * a2) / (b1 * b2);
    }

    double csum = 0.0;
    for (int yy_ = pad; yy_ < h - pad; ++yy_)
      for (int xx_ = pad; xx_ < w - pad; ++xx_)
        csum += smap[static_cast<std::size_t>(yy_) * w + xx_];
    total += csum / static_cast<double>(crop_count);

    if (map_out)
      for (std::size_t i = 0; i < n; ++i) map_out->data[i * nc + c] = smap[i];

    if (grad_a) {
      const double scale = 1.0 / (static_cast<double>(crop_count) * nc);
      std::vector<double> g_ux(n, 0.0), g_mxx(n, 0.0), g_mxy(n, 0.0);
      for (int yy_ = pad; yy_ < h - pad; ++yy_) {
        for (int xx_ = pad; xx_ < w - pad; ++xx_) {
          const std::size_t i = static_cast<std::size_t>(yy_) * w + xx_;
          const double vx = mxx[i] - ux[i] * ux[i];
          const double vxy = mxy[i] - ux[i] * uy[i];
          const double a1 = 2.0 * ux[i] * uy[i] + C1;
          const double a2 = 2.0 * vxy + C2;
          const double b1 = ux[i] * ux[i] + uy[i] * uy[i] + C1;
          const double b2 = myy[i] - uy[i] * uy[i] + vx + C2;
          const double inv = 1.0 / (b1 * b2);
          const double s = a1 * a2 * inv;
          const double d_a1 = a2 * inv;
          const double d_a2 = a1 * inv;
          const double d_b1 = -s / b1;
          const double d_b2 = -s / b2;
          g_ux[i] = scale * (d_a1 * 2.0 * uy[i] + d_a2 * (-2.0 * uy[i]) +
                             d_b1 * 2.0 * ux[i] + d_b2 * (-2.0 * ux[i]));
          g_mxx[i] = scale * d_b2;
          g_mxy[i] = scale * 2.0 * d_a2;
        }
      }
      const std::vector<double> t_ux = detail::gauss_adjoint(g_ux, w, h);
      const std::vector<double> t_mxx = detail::gauss_adjoint(g_mxx, w, h);
      const std::vector<double> t_mxy = detail::gauss_adjoint(g_mxy, w, h);
      for (std::size_t i = 0; i < n; ++i)
        grad_a->data[i * nc + c] =
            t_ux[i] + 2.0 * x[i] * t_mxx[i] + y[i] * t_mxy[i];
    }
  }
  return total / nc;
}

inline double dssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
  const double s = ssim(a, b, grad_a);
  if (grad_a)
    for (auto& v : grad_a->data) v *= -0.5;
  return (1.0 - s) / 2.0;
}

struct ZoneMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t pixels = 0;
};

// Metrics restricted to a per-pixel mask. PSNR uses the masked MSE, so
// disjoint zones recombine to the global value weighted by pixel count;
// SSIM averages the per-pixel similarity map over the mask intersected
// with the window-radius crop.
inline ZoneMetrics zone_metrics(const Image& a, const Image& b,
                                const std::vector<std::uint8_t>& mask) {
  detail::check_pair(a, b, "zone_metrics");
  if (mask.size() != a.pixel_count())
    throw std::invalid_argument("zone_metrics: mask size does not match image");

  ZoneMetrics zm;
  double se = 0.0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    ++zm.pixels;
    for (int c = 0; c < a.channels; ++c) {
      const double d = a.data[p * a.channels + c] - b.data[p * a.channels + c];
      se += d * d;
    }
  }
  if (zm.pixels == 0)
    throw std::invalid_argument("zone_metrics: mask selects no pixels");
  const double mse = se / (static_cast<double>(zm.pixels) * a.channels);
  zm.psnr = mse <= 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));

  Image map;
  ssim(a, b, nullptr, &map);
  constexpr int pad = 5;
  double ssum = 0.0;
  std::size_t scount = 0;
  for (int y = pad; y < a.height - pad; ++y) {
    for (int x = pad; x < a.width - pad; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * a.width + x;
      if (!mask[p]) continue;
      double m = 0.0;
      for (int c = 0; c < a.channels; ++c) m += map.data[p * a.channels + c];
      ssum += m / a.channels;
      ++scount;
    }
  }
  if (scount == 0)
    throw std::invalid_argument(
        "zone_metrics: mask selects no pixels inside the ssim crop");
  zm.ssim = ssum / static_cast<double>(scount);
  return zm;
}

}  // namespace fsplat
