#pragma once

#include "fsplat/common.hpp"

namespace fsplat {

// Hamilton convention, components (w, x, y, z).
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Vec4 vec() const { return {w, x, y, z}; }
  static Quat from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

  double& operator[](int i) { return i == 0 ? w : i == 1 ? x : i == 2 ? y : z; }
  double operator[](int i) const { return i == 0 ? w : i == 1 ? x : i == 2 ? y : z; }
};

inline Quat quat_multiply(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat quat_conjugate(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

// Valid for unit axis; tiny angles yield the identity regardless of axis.
inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  if (std::abs(angle) < 1e-12) return {};
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return {std::cos(h), axis[0] * s, axis[1] * s, axis[2] * s};
}

// Polynomial form, exact for unit q.
inline Mat3 quat_to_rotmat(const Quat& q) {
  if (std::abs(q.norm() - 1.0) > 1e-6)
    throw std::domain_error("quat_to_rotmat: quaternion is not unit norm");
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  const Vec3 u(q.x, q.y, q.z);
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w * t + u.cross(t);
}

// Shepperd's method: branch on the largest of trace / diagonal entries.
inline Quat quat_from_rotmat(const Mat3& r) {
  const double t = r(0, 0) + r(1, 1) + r(2, 2);
  Quat q;
  if (t > 0.0) {
    const double s = std::sqrt(t + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (r(2, 1) - r(1, 2)) / s;
    q.y = (r(0, 2) - r(2, 0)) / s;
    q.z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q.w = (r(2, 1) - r(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r(0, 1) + r(1, 0)) / s;
    q.z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q.w = (r(0, 2) - r(2, 0)) / s;
    q.x = (r(0, 1) + r(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r(1, 2) + r(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q.w = (r(1, 0) - r(0, 1)) / s;
    q.x = (r(0, 2) + r(2, 0)) / s;
    q.y = (r(1, 2) + r(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q;
}

inline Quat quat_slerp(const Quat& a, const Quat& b_in, double t) {
  Quat b = b_in;
  double dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (dot < 0.0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    dot = -dot;
  }
  if (dot > 0.9995) {
    Quat out{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x), a.y + t * (b.y - a.y),
             a.z + t * (b.z - a.z)};
    return out.normalized();
  }
  const double theta = std::acos(dot);
  const double s = std::sin(theta);
  const double wa = std::sin((1.0 - t) * theta) / s;
  const double wb = std::sin(t * theta) / s;
  return {wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y,
          wa * a.z + wb * b.z};
}

// --------------------------- reverse-mode adjoints -------------------------

// c = a*b; returns (a_bar, b_bar) given c_bar.
inline void quat_multiply_vjp(const Quat& a, const Quat& b, const Quat& c_bar,
                              Quat& a_bar, Quat& b_bar) {
  // a_bar = R(b)^T c_bar with R(b) the right-multiplication matrix.
  a_bar.w = b.w * c_bar.w + b.x * c_bar.x + b.y * c_bar.y + b.z * c_bar.z;
  a_bar.x = -b.x * c_bar.w + b.w * c_bar.x - b.z * c_bar.y + b.y * c_bar.z;
  a_bar.y = -b.y * c_bar.w + b.z * c_bar.x + b.w * c_bar.y - b.x * c_bar.z;
  a_bar.z = -b.z * c_bar.w - b.y * c_bar.x + b.x * c_bar.y + b.w * c_bar.z;
  // b_bar = L(a)^T c_bar.
  b_bar.w = a.w * c_bar.w + a.x * c_bar.x + a.y * c_bar.y + a.z * c_bar.z;
  b_bar.x = -a.x * c_bar.w + a.w * c_bar.x + a.z * c_bar.y - a.y * c_bar.z;
  b_bar.y = -a.y * c_bar.w - a.z * c_bar.x + a.w * c_bar.y + a.x * c_bar.z;
  b_bar.z = -a.z * c_bar.w + a.y * c_bar.x - a.x * c_bar.y + a.w * c_bar.z;
}

// u = q.normalized(); q_bar += (I - u u^T)/|q| * u_bar.
inline Quat quat_normalize_vjp(const Quat& q, const Quat& u_bar) {
  const double n = q.norm();
  const Vec4 u = q.vec() / n;
  const Vec4 ub = u_bar.vec();
  const Vec4 qb = (ub - u * u.dot(ub)) / n;
  return Quat::from_vec(qb);
}

// v_out = quat_rotate(q, v), polynomial form. Accumulates into q_bar, v_bar.
inline void quat_rotate_vjp(const Quat& q, const Vec3& v, const Vec3& out_bar,
                            Quat& q_bar, Vec3& v_bar) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  const Vec3 u(x, y, z);
  // v_bar = R(q)^T out_bar.
  v_bar += quat_to_rotmat(q).transpose() * out_bar;
  // out = v + 2w (u x v) + 2 u x (u x v), so d(out)/dw = 2 (u x v).
  const Vec3 uxv = u.cross(v);
  q_bar.w += 2.0 * uxv.dot(out_bar);
  // d(out)/du_k = 2w (e_k x v) + 2 e_k x (u x v) + 2 u x (e_k x v).
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = 1.0;
    const Vec3 d = 2.0 * w * e.cross(v) + 2.0 * e.cross(uxv) + 2.0 * u.cross(e.cross(v));
    if (k == 0) q_bar.x += d.dot(out_bar);
    if (k == 1) q_bar.y += d.dot(out_bar);
    if (k == 2) q_bar.z += d.dot(out_bar);
  }
}

// R = quat_to_rotmat(q): q_bar += dR/dq : R_bar.
inline Quat quat_to_rotmat_vjp(const Quat& q, const Mat3& rb) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Quat g{0, 0, 0, 0};
  g.w = 2.0 * (-z * rb(0, 1) + y * rb(0, 2) + z * rb(1, 0) - x * rb(1, 2) -
               y * rb(2, 0) + x * rb(2, 1));
  g.x = 2.0 * (y * rb(0, 1) + z * rb(0, 2) + y * rb(1, 0) - 2.0 * x * rb(1, 1) -
               w * rb(1, 2) + z * rb(2, 0) + w * rb(2, 1) - 2.0 * x * rb(2, 2));
  g.y = 2.0 * (-2.0 * y * rb(0, 0) + x * rb(0, 1) + w * rb(0, 2) + x * rb(1, 0) +
               z * rb(1, 2) - w * rb(2, 0) + z * rb(2, 1) - 2.0 * y * rb(2, 2));
  g.z = 2.0 * (-2.0 * z * rb(0, 0) - w * rb(0, 1) + x * rb(0, 2) + w * rb(1, 0) -
               2.0 * z * rb(1, 1) + y * rb(1, 2) + x * rb(2, 0) + y * rb(2, 1));
  return g;
}

// q = quat_from_rotmat(R): R_bar += (dq/dR)^T q_bar, same branch as forward.
inline Mat3 quat_from_rotmat_vjp(const Mat3& r, const Quat& q_bar) {
  Mat3 rb = Mat3::Zero();
  const double t = r(0, 0) + r(1, 1) + r(2, 2);
  if (t > 0.0) {
    const double s = std::sqrt(t + 1.0) * 2.0;
    const double a21 = r(2, 1) - r(1, 2);
    const double a02 = r(0, 2) - r(2, 0);
    const double a10 = r(1, 0) - r(0, 1);
    // q.w = s/4, q.x = a21/s, ... ; ds/dR_ii = 2/s.
    const double ds = (0.25 * q_bar.w - (a21 * q_bar.x + a02 * q_bar.y + a10 * q_bar.z) / (s * s)) * (2.0 / s);
    rb(0, 0) += ds;
    rb(1, 1) += ds;
    rb(2, 2) += ds;
    rb(2, 1) += q_bar.x / s;
    rb(1, 2) -= q_bar.x / s;
    rb(0, 2) += q_bar.y / s;
    rb(2, 0) -= q_bar.y / s;
    rb(1, 0) += q_bar.z / s;
    rb(0, 1) -= q_bar.z / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    const double a = r(2, 1) - r(1, 2);
    const double b = r(0, 1) + r(1, 0);
    const double c = r(0, 2) + r(2, 0);
    const double ds = (0.25 * q_bar.x - (a * q_bar.w + b * q_bar.y + c * q_bar.z) / (s * s)) * (2.0 / s);
    rb(0, 0) += ds;
    rb(1, 1) -= ds;
    rb(2, 2) -= ds;
    rb(2, 1) += q_bar.w / s;
    rb(1, 2) -= q_bar.w / s;
    rb(0, 1) += q_bar.y / s;
    rb(1, 0) += q_bar.y / s;
    rb(0, 2) += q_bar.z / s;
    rb(2, 0) += q_bar.z / s;
  } else if (r(1, 1) > r(2, 2)) {
    const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    const double a = r(0, 2) - r(2, 0);
    const double b = r(0, 1) + r(1, 0);
    const double c = r(1, 2) + r(2, 1);
    const double ds = (0.25 * q_bar.y - (a * q_bar.w + b * q_bar.x + c * q_bar.z) / (s * s)) * (2.0 / s);
    rb(1, 1) += ds;
    rb(0, 0) -= ds;
    rb(2, 2) -= ds;
    rb(0, 2) += q_bar.w / s;
    rb(2, 0) -= q_bar.w / s;
    rb(0, 1) += q_bar.x / s;
    rb(1, 0) += q_bar.x / s;
    rb(1, 2) += q_bar.z / s;
    rb(2, 1) += q_bar.z / s;
  } else {
    const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    const double a = r(1, 0) - r(0, 1);
    const double b = r(0, 2) + r(2, 0);
    const double c = r(1, 2) + r(2, 1);
    const double ds = (0.25 * q_bar.z - (a * q_bar.w + b * q_bar.x + c * q_bar.y) / (s * s)) * (2.0 / s);
    rb(2, 2) += ds;
    rb(0, 0) -= ds;
    rb(1, 1) -= ds;
    rb(1, 0) += q_bar.w / s;
    rb(0, 1) -= q_bar.w / s;
    rb(0, 2) += q_bar.x / s;
    rb(2, 0) += q_bar.x / s;
    rb(1, 2) += q_bar.y / s;
    rb(2, 1) += q_bar.y / s;
  }
  return rb;
}

}  // namespace fsplat
