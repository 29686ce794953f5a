#pragma once

#include <Eigen/QR>

#include <array>
#include <optional>

#include "fsplat/common.hpp"

namespace fsplat {

enum class CameraKind { Pinhole, KannalaBrandt, MEI };

// MEI radial distance parameterization. Raw keeps r_d = chi + k1 chi^3 +
// k2 chi^5 with pseudo focal gamma; Normalized multiplies r_d by (1+xi) and
// divides the focal by (1+xi), which is pixel-identical but has unit slope
// d(theta_d)/d(theta) = 1 at theta = 0.
enum class MeiParam { Raw, Normalized };

struct CameraModel {
  CameraKind kind = CameraKind::Pinhole;
  double fx = 0, fy = 0;          // for MEI derived: gamma / (1 + xi)
  double gamma1 = 0, gamma2 = 0;  // MEI pseudo focals
  double u0 = 0, v0 = 0;
  std::array<double, 4> k{0, 0, 0, 0};  // KB k1..k4; MEI uses k[0], k[1]
  double xi = 0;
  int width = 0, height = 0;
  double theta_max = kPi / 2;

  static CameraModel pinhole(double fx, double fy, double u0, double v0,
                             int width, int height);
  static CameraModel kannala_brandt(double fx, double fy, double u0, double v0,
                                    const std::array<double, 4>& k, int width,
                                    int height, double theta_max = -1.0);
  static CameraModel mei(double gamma1, double gamma2, double u0, double v0,
                         double xi, double k1, double k2, int width, int height,
                         double theta_max = -1.0);

  bool is_fisheye() const { return kind != CameraKind::Pinhole; }

  // Focal used with r_d = tan(theta_d) under the given parameterization.
  double focal_u(MeiParam param) const {
    if (kind == CameraKind::MEI && param == MeiParam::Raw) return gamma1;
    return fx;
  }
  double focal_v(MeiParam param) const {
    if (kind == CameraKind::MEI && param == MeiParam::Raw) return gamma2;
    return fy;
  }
};

namespace detail {

// r_d(theta) and derivatives for KB: theta (1 + k1 th^2 + ... + k4 th^8).
inline void kb_rd(const std::array<double, 4>& k, double th, double& r,
                  double& r1, double& r2, double& r3) {
  const double t2 = th * th;
  r = th * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))));
  r1 = 1.0 + t2 * (3.0 * k[0] +
                   t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])));
  r2 = th * (6.0 * k[0] +
             t2 * (20.0 * k[1] + t2 * (42.0 * k[2] + t2 * 72.0 * k[3])));
  r3 = 6.0 * k[0] + t2 * (60.0 * k[1] + t2 * (210.0 * k[2] + t2 * 504.0 * k[3]));
}

// chi = sin(theta) / (cos(theta) + xi) and derivatives.
inline void mei_chi(double xi, double th, double& chi, double& c1, double& c2,
                    double& c3) {
  const double s = std::sin(th), c = std::cos(th);
  const double d = c + xi;
  const double d2 = d * d, d3 = d2 * d, d4 = d3 * d;
  chi = s / d;
  c1 = (1.0 + xi * c) / d2;
  c2 = s * (2.0 + xi * c - xi * xi) / d3;
  c3 = ((c * (2.0 + xi * c - xi * xi) - xi * s * s) * d +
        3.0 * s * s * (2.0 + xi * c - xi * xi)) /
       d4;
}

// All mirror quantities in one pass: theta_d = atan(r_d) and its first
// three derivatives w.r.t. theta. No domain checks.
struct MirrorEval {
  double theta_d = 0;
  double d1 = 1, d2 = 0, d3 = 0;
  double r_d = 0;
};

inline MirrorEval mirror_eval(const CameraModel& m, double th, MeiParam param) {
  MirrorEval out;
  if (m.kind == CameraKind::Pinhole) {
    out.theta_d = th;
    out.r_d = std::tan(th);
    return out;
  }
  double r, r1, r2, r3;
  if (m.kind == CameraKind::KannalaBrandt) {
    kb_rd(m.k, th, r, r1, r2, r3);
  } else {
    double chi, c1, c2, c3;
    mei_chi(m.xi, th, chi, c1, c2, c3);
    const double x2 = chi * chi;
    const double g = chi * (1.0 + x2 * (m.k[0] + x2 * m.k[1]));
    const double g1 = 1.0 + x2 * (3.0 * m.k[0] + x2 * 5.0 * m.k[1]);
    const double g2 = chi * (6.0 * m.k[0] + x2 * 20.0 * m.k[1]);
    const double g3 = 6.0 * m.k[0] + x2 * 60.0 * m.k[1];
    r = g;
    r1 = g1 * c1;
    r2 = g2 * c1 * c1 + g1 * c2;
    r3 = g3 * c1 * c1 * c1 + 3.0 * g2 * c1 * c2 + g1 * c3;
    if (param == MeiParam::Normalized) {
      const double f = 1.0 + m.xi;
      r *= f;
      r1 *= f;
      r2 *= f;
      r3 *= f;
    }
  }
  const double u = 1.0 + r * r;
  const double u2 = u * u, u3 = u2 * u;
  out.theta_d = std::atan(r);
  out.r_d = r;
  out.d1 = r1 / u;
  out.d2 = r2 / u - 2.0 * r * r1 * r1 / u2;
  out.d3 = r3 / u - (6.0 * r * r1 * r2 + 2.0 * r1 * r1 * r1) / u2 +
           8.0 * r * r * r1 * r1 * r1 / u3;
  return out;
}

inline void check_mirror_domain(const CameraModel& m, double th, double margin = 0.0) {
  if (th < 0.0 || th > m.theta_max + margin)
    throw std::domain_error("mirror transform: theta " + std::to_string(th) +
                            " outside [0, theta_max]");
  if (m.kind == CameraKind::MEI && std::cos(th) + m.xi <= 0.0)
    throw std::domain_error("mirror transform: ray behind mirror (cos(theta) + xi <= 0)");
}

}  // namespace detail

inline double mirror_transform(const CameraModel& m, double theta,
                               MeiParam param = MeiParam::Normalized) {
  detail::check_mirror_domain(m, theta);
  return detail::mirror_eval(m, theta, param).theta_d;
}

inline double mirror_derivative(const CameraModel& m, double theta, int order,
                                MeiParam param = MeiParam::Normalized) {
  if (order != 1 && order != 2)
    throw std::invalid_argument("mirror_derivative: order must be 1 or 2");
  detail::check_mirror_domain(m, theta);
  const auto e = detail::mirror_eval(m, theta, param);
  return order == 1 ? e.d1 : e.d2;
}

// Inverts theta_d = mirror(theta) on [0, hi]: Newton with bisection fallback.
inline double invert_mirror(const CameraModel& m, double theta_d,
                            MeiParam param = MeiParam::Normalized,
                            double hi = -1.0) {
  if (m.kind == CameraKind::Pinhole) return theta_d;
  if (hi < 0.0) hi = m.theta_max;
  if (theta_d <= 0.0) return 0.0;
  double lo = 0.0, hi_b = hi;
  double th = std::min(theta_d, hi);
  for (int it = 0; it < 50; ++it) {
    const auto e = detail::mirror_eval(m, th, param);
    const double f = e.theta_d - theta_d;
    if (std::abs(f) < 1e-10) return th;
    if (f > 0.0)
      hi_b = th;
    else
      lo = th;
    double step = e.d1 > 1e-14 ? th - f / e.d1 : -1.0;
    th = (step > lo && step < hi_b) ? step : 0.5 * (lo + hi_b);
  }
  const auto e = detail::mirror_eval(m, th, param);
  if (std::abs(e.theta_d - theta_d) < 1e-8) return th;
  throw std::runtime_error("invert_mirror: no convergence");
}

inline Vec2 project_point(const CameraModel& m, const Vec3& p,
                          MeiParam param = MeiParam::Normalized) {
  if (m.kind == CameraKind::Pinhole) {
    if (p.z() <= 0.0)
      throw std::domain_error("project_point: point behind pinhole camera");
    return {m.fx * p.x() / p.z() + m.u0, m.fy * p.y() / p.z() + m.v0};
  }
  const double rho = std::hypot(p.x(), p.y());
  const double theta = std::atan2(rho, p.z());
  detail::check_mirror_domain(m, theta);
  if (rho == 0.0) return {m.u0, m.v0};
  const double r_d = detail::mirror_eval(m, theta, param).r_d;
  const double cphi = p.x() / rho, sphi = p.y() / rho;
  return {m.focal_u(param) * r_d * cphi + m.u0,
          m.focal_v(param) * r_d * sphi + m.v0};
}

inline Vec3 unproject_pixel(const CameraModel& m, const Vec2& px,
                            MeiParam param = MeiParam::Normalized) {
  if (m.kind == CameraKind::Pinhole) {
    return Vec3((px.x() - m.u0) / m.fx, (px.y() - m.v0) / m.fy, 1.0).normalized();
  }
  const double mx = (px.x() - m.u0) / m.focal_u(param);
  const double my = (px.y() - m.v0) / m.focal_v(param);
  const double r_d = std::hypot(mx, my);
  if (r_d == 0.0) return {0.0, 0.0, 1.0};
  const double theta_d = std::atan(r_d);
  const double theta_d_max = detail::mirror_eval(m, m.theta_max, param).theta_d;
  if (theta_d > theta_d_max + 1e-12)
    throw std::domain_error("unproject_pixel: pixel outside the valid image circle");
  const double theta = invert_mirror(m, theta_d, param);
  const double s = std::sin(theta), c = std::cos(theta);
  return {s * mx / r_d, s * my / r_d, c};
}

// Fits KB distortion to the normalized MEI transform by linear least squares
// on r_d = tan(theta_d) with basis {th^3, th^5, th^7, th^9} (linear term 1).
inline CameraModel convert_mei_to_kb(const CameraModel& mei, double theta_hi,
                                     int n_samples) {
  if (mei.kind != CameraKind::MEI)
    throw std::invalid_argument("convert_mei_to_kb: input model is not MEI");
  if (n_samples < 100)
    throw std::invalid_argument("convert_mei_to_kb: need at least 100 samples");
  if (theta_hi < 0.0 || theta_hi > kPi / 2)
    throw std::invalid_argument("convert_mei_to_kb: theta_hi outside [0, pi/2]");
  Eigen::MatrixXd a(n_samples, 4);
  Eigen::VectorXd b(n_samples);
  for (int j = 0; j < n_samples; ++j) {
    const double th = theta_hi * (j + 1) / n_samples;
    const double td = detail::mirror_eval(mei, th, MeiParam::Normalized).theta_d;
    const double t3 = th * th * th;
    a(j, 0) = t3;
    a(j, 1) = t3 * th * th;
    a(j, 2) = a(j, 1) * th * th;
    a(j, 3) = a(j, 2) * th * th;
    b(j) = std::tan(td) - th;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < 4)
    throw std::runtime_error("convert_mei_to_kb: singular normal equations (degenerate sampling)");
  const Eigen::Vector4d coeff = qr.solve(b);
  CameraModel kb;
  kb.kind = CameraKind::KannalaBrandt;
  kb.fx = mei.gamma1 / (1.0 + mei.xi);
  kb.fy = mei.gamma2 / (1.0 + mei.xi);
  kb.u0 = mei.u0;
  kb.v0 = mei.v0;
  kb.k = {coeff[0], coeff[1], coeff[2], coeff[3]};
  kb.width = mei.width;
  kb.height = mei.height;
  kb.theta_max = mei.theta_max;
  return kb;
}

namespace detail {

// theta at the farthest image corner, solved through the mirror transform.
inline double auto_theta_max(const CameraModel& m) {
  double r_corner = 0.0;
  const double cx[2] = {-0.5, m.width - 0.5};
  const double cy[2] = {-0.5, m.height - 0.5};
  for (double u : cx)
    for (double v : cy) {
      const double mx = (u - m.u0) / m.fx;
      const double my = (v - m.v0) / m.fy;
      r_corner = std::max(r_corner, std::hypot(mx, my));
    }
  const double theta_d_corner = std::atan(r_corner);
  double hi = kPi / 2 + 0.15;
  if (m.kind == CameraKind::MEI && m.xi < 1.0)
    hi = std::min(hi, std::acos(-m.xi) - 1e-6);
  double corner;
  CameraModel probe = m;
  probe.theta_max = hi;
  if (mirror_eval(m, hi, MeiParam::Normalized).theta_d <= theta_d_corner)
    corner = hi;
  else
    corner = invert_mirror(probe, theta_d_corner, MeiParam::Normalized, hi);
  return std::min(corner + 0.05, kPi / 2 + 0.2);
}

inline void validate_camera(const CameraModel& m) {
  if (m.fx <= 0 || m.fy <= 0)
    throw std::invalid_argument("camera: focal lengths must be positive");
  if (m.kind == CameraKind::MEI && (m.gamma1 <= 0 || m.gamma2 <= 0))
    throw std::invalid_argument("camera: pseudo focal lengths must be positive");
  if (m.width < 1 || m.height < 1)
    throw std::invalid_argument("camera: resolution must be at least 1x1");
  if (m.theta_max <= 0 || m.theta_max > kPi / 2 + 0.2)
    throw std::invalid_argument("camera: theta_max outside (0, pi/2 + 0.2]");
}

}  // namespace detail

inline CameraModel CameraModel::pinhole(double fx, double fy, double u0,
                                        double v0, int width, int height) {
  CameraModel m;
  m.kind = CameraKind::Pinhole;
  m.fx = fx;
  m.fy = fy;
  m.u0 = u0;
  m.v0 = v0;
  m.width = width;
  m.height = height;
  m.theta_max = std::min(detail::auto_theta_max(m), kPi / 2 - 1e-6);
  detail::validate_camera(m);
  return m;
}

inline CameraModel CameraModel::kannala_brandt(double fx, double fy, double u0,
                                               double v0,
                                               const std::array<double, 4>& k,
                                               int width, int height,
                                               double theta_max) {
  CameraModel m;
  m.kind = CameraKind::KannalaBrandt;
  m.fx = fx;
  m.fy = fy;
  m.u0 = u0;
  m.v0 = v0;
  m.k = k;
  m.width = width;
  m.height = height;
  m.theta_max = theta_max > 0 ? theta_max : detail::auto_theta_max(m);
  detail::validate_camera(m);
  return m;
}

inline CameraModel CameraModel::mei(double gamma1, double gamma2, double u0,
                                    double v0, double xi, double k1, double k2,
                                    int width, int height, double theta_max) {
  CameraModel m;
  m.kind = CameraKind::MEI;
  m.gamma1 = gamma1;
  m.gamma2 = gamma2;
  m.fx = gamma1 / (1.0 + xi);
  m.fy = gamma2 / (1.0 + xi);
  m.u0 = u0;
  m.v0 = v0;
  m.xi = xi;
  m.k = {k1, k2, 0, 0};
  m.width = width;
  m.height = height;
  m.theta_max = theta_max > 0 ? theta_max : detail::auto_theta_max(m);
  detail::validate_camera(m);
  return m;
}

}  // namespace fsplat
