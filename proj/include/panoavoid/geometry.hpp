// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Frame conventions: body x forward, y left, z up. Equirectangular images put
// longitude on columns (-pi at the left edge, forward axis at the centre) and
// latitude on rows (north pole at the top). Quaternions are Hamilton,
// scalar first.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace panoavoid {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    if (n == 0.0) throw std::invalid_argument("normalize: zero vector");
    return *this / n;
  }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Quaternion {
  double w = 1, x = 0, y = 0, z = 0;

  static constexpr Quaternion identity() { return {1, 0, 0, 0}; }

  constexpr Quaternion operator*(const Quaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }
  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
};

/// Rotation by psi radians about world z.
inline Quaternion yaw_quaternion(double psi) {
  return {std::cos(0.5 * psi), 0.0, 0.0, std::sin(0.5 * psi)};
}

inline constexpr Quaternion quat_conj(const Quaternion& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Vec3 quat_rotate(const Quaternion& q, const Vec3& v) {
  // v' = v + 2 w (u x v) + 2 u x (u x v), u = vector part
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = u.cross(v) * 2.0;
  return v + t * q.w + u.cross(t);
}

inline Vec3 up_vector(const Quaternion& q) { return quat_rotate(q, {0, 0, 1}); }

/// Row-major 3x3 matrix of the rotation by psi about z.
inline std::array<double, 9> yaw_matrix(double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0) a += two_pi;
  return a;
}

struct EquirectGrid {
  int height = 64;
  int width = 128;

  void validate() const {
    if (height < 2 || width < 4 || width % 2 != 0) {
      throw std::invalid_argument("EquirectGrid: need H >= 2, W >= 4, W even; got " +
                                  std::to_string(height) + "x" + std::to_string(width));
    }
  }

  /// Longitude of a continuous column coordinate (pixel centres at integers).
  double longitude(double col) const {
    return 2.0 * std::numbers::pi * (col + 0.5) / width - std::numbers::pi;
  }
  double latitude(double row) const {
    return 0.5 * std::numbers::pi - std::numbers::pi * (row + 0.5) / height;
  }
};

struct PixelCoord {
  double row = 0;
  double col = 0;
};

inline Vec3 direction_from_angles(double latitude, double longitude) {
  const double cl = std::cos(latitude);
  return {cl * std::cos(longitude), cl * std::sin(longitude), std::sin(latitude)};
}

inline Vec3 pixel_to_direction(const EquirectGrid& grid, int row, int col) {
  if (row < 0 || row >= grid.height || col < 0 || col >= grid.width) {
    throw std::out_of_range("pixel_to_direction: (" + std::to_string(row) + ", " +
                            std::to_string(col) + ") outside " + std::to_string(grid.height) +
                            "x" + std::to_string(grid.width));
  }
  return direction_from_angles(grid.latitude(row), grid.longitude(col));
}

inline PixelCoord direction_to_pixel(const EquirectGrid& grid, const Vec3& d) {
  const double n = d.norm();
  if (n == 0.0) throw std::invalid_argument("direction_to_pixel: zero vector");
  const double lon = std::atan2(d.y, d.x);
  const double lat = std::asin(std::clamp(d.z / n, -1.0, 1.0));
  return {(0.5 * std::numbers::pi - lat) * grid.height / std::numbers::pi - 0.5,
          (lon + std::numbers::pi) * grid.width / (2.0 * std::numbers::pi) - 0.5};
}

}  // namespace panoavoid
