// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoavoid/geometry.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/tensor.hpp"
#include "panoavoid/world.hpp"

namespace panoavoid {

inline constexpr double kDefaultMaxDepth = 30.0;
inline constexpr double kMinDepth = 1e-3;

enum class CameraModel { equirect, pinhole, cubeface };

enum class CubeFace { front, back, left, right, up, down };

inline constexpr std::array<CubeFace, 6> kCubeFaces = {CubeFace::front, CubeFace::back,
                                                       CubeFace::left,  CubeFace::right,
                                                       CubeFace::up,    CubeFace::down};

inline std::string to_string(CubeFace f) {
  switch (f) {
    case CubeFace::front: return "front";
    case CubeFace::back: return "back";
    case CubeFace::left: return "left";
    case CubeFace::right: return "right";
    case CubeFace::up: return "up";
    case CubeFace::down: return "down";
  }
  return "?";
}

/// Row-major depth in metres, every value in (0, d_max].
struct DepthImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double d_max = kDefaultMaxDepth;
  CameraModel camera = CameraModel::equirect;
  double fov = 0.0;  // radians, pinhole / cube faces only
  CubeFace face = CubeFace::front;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  double mean() const {
    double s = 0;
    for (double v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
};

// ---------------------------------------------------------------------------
// Ray casting

namespace detail {

inline constexpr double kNoHit = std::numeric_limits<double>::infinity();

inline double ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc.dot(d);
  const double cc = oc.dot(oc) - r * r;
  const double disc = b * b - cc;
  if (disc < 0) return kNoHit;
  const double sq = std::sqrt(disc);
  if (const double t0 = -b - sq; t0 > 0) return t0;
  if (const double t1 = -b + sq; t1 > 0) return t1;
  return kNoHit;
}

inline double ray_capsule(const Vec3& o, const Vec3& d, const Vec3& c, double r, double hh) {
  double best = std::min(ray_sphere(o, d, c + Vec3{0, 0, hh}, r),
                         ray_sphere(o, d, c - Vec3{0, 0, hh}, r));
  // side wall of the vertical cylinder
  const double ox = o.x - c.x, oy = o.y - c.y;
  const double a = d.x * d.x + d.y * d.y;
  if (a > 0) {
    const double b = ox * d.x + oy * d.y;
    const double cc = ox * ox + oy * oy - r * r;
    const double disc = b * b - a * cc;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (const double t : {(-b - sq) / a, (-b + sq) / a}) {
        if (t <= 0 || t >= best) continue;
        const double z = o.z + t * d.z - c.z;
        if (z >= -hh && z <= hh) {
          best = t;
          break;
        }
      }
    }
  }
  return best;
}

}  // namespace detail

/// Distance along unit ray d from o to the first surface, or d_max.
inline double cast_ray(const Scene& scene, const Vec3& o, const Vec3& d, double d_max) {
  double best = detail::kNoHit;
  for (const auto& ob : scene.obstacles) {
    double t;
    if (const auto* s = std::get_if<SphereShape>(&ob.shape)) {
      t = detail::ray_sphere(o, d, ob.position, s->radius);
    } else {
      const auto& c = std::get<CapsuleShape>(ob.shape);
      t = detail::ray_capsule(o, d, ob.position, c.radius, c.half_height);
    }
    best = std::min(best, t);
  }
  if (scene.ground_height && d.z < 0 && o.z > *scene.ground_height) {
    best = std::min(best, (*scene.ground_height - o.z) / d.z);
  }
  return std::clamp(best, kMinDepth, d_max);
}

/// 360 degree depth panorama seen from `position` with heading `yaw`.
/// Headings that are whole multiples of one column step reuse the exact
/// yaw-0 ray set, so such renders are column shifts of each other bit for bit.
inline DepthImage render_equirect(const Scene& scene, const Vec3& position, double yaw,
                                  const EquirectGrid& grid, double d_max = kDefaultMaxDepth) {
  grid.validate();
  if (!(d_max > 0)) throw std::invalid_argument("render: d_max must be > 0");
  DepthImage img;
  img.height = grid.height;
  img.width = grid.width;
  img.d_max = d_max;
  img.camera = CameraModel::equirect;
  img.values.resize(static_cast<std::size_t>(grid.height) * grid.width);

  const double shift = yaw * grid.width / (2.0 * std::numbers::pi);
  const double snapped = std::round(shift);
  const bool on_lattice = std::abs(shift - snapped) < 1e-9;
  std::vector<double> cos_lon(grid.width), sin_lon(grid.width);
  for (int c = 0; c < grid.width; ++c) {
    double lon;
    if (on_lattice) {
      const long k = static_cast<long>(snapped);
      const long cw = ((c + k) % grid.width + grid.width) % grid.width;
      lon = grid.longitude(static_cast<double>(cw));
    } else {
      lon = grid.longitude(c) + yaw;
    }
    cos_lon[c] = std::cos(lon);
    sin_lon[c] = std::sin(lon);
  }
  for (int r = 0; r < grid.height; ++r) {
    const double lat = grid.latitude(r);
    const double cl = std::cos(lat), sl = std::sin(lat);
    for (int c = 0; c < grid.width; ++c) {
      const Vec3 d{cl * cos_lon[c], cl * sin_lon[c], sl};
      img.values[static_cast<std::size_t>(r) * grid.width + c] = cast_ray(scene, position, d, d_max);
    }
  }
  return img;
}

namespace detail {

struct CameraBasis {
  Vec3 forward, right, up;
};

inline CameraBasis face_basis(CubeFace f) {
  switch (f) {
    case CubeFace::front: return {{1, 0, 0}, {0, -1, 0}, {0, 0, 1}};
    case CubeFace::back: return {{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    case CubeFace::left: return {{0, 1, 0}, {1, 0, 0}, {0, 0, 1}};
    case CubeFace::right: return {{0, -1, 0}, {-1, 0, 0}, {0, 0, 1}};
    case CubeFace::up: return {{0, 0, 1}, {0, -1, 0}, {-1, 0, 0}};
    case CubeFace::down: return {{0, 0, -1}, {0, -1, 0}, {1, 0, 0}};
  }
  return {};
}

inline DepthImage render_basis(const Scene& scene, const Vec3& position, double yaw,
                               const CameraBasis& body, double fov, int h, int w, double d_max) {
  if (h < 1 || w < 1) throw std::invalid_argument("render: image must be at least 1x1");
  if (!(fov > 0 && fov < std::numbers::pi)) {
    throw std::invalid_argument("render: fov must be in (0, pi)");
  }
  if (!(d_max > 0)) throw std::invalid_argument("render: d_max must be > 0");
  const Quaternion q = yaw_quaternion(yaw);
  const Vec3 f = quat_rotate(q, body.forward), rt = quat_rotate(q, body.right),
             up = quat_rotate(q, body.up);
  const double focal = 0.5 * w / std::tan(0.5 * fov);
  DepthImage img;
  img.height = h;
  img.width = w;
  img.d_max = d_max;
  img.camera = CameraModel::pinhole;
  img.fov = fov;
  img.values.resize(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Vec3 d = (f * focal + rt * (c + 0.5 - 0.5 * w) + up * (0.5 * h - r - 0.5)).normalized();
      img.values[static_cast<std::size_t>(r) * w + c] = cast_ray(scene, position, d, d_max);
    }
  }
  return img;
}

}  // namespace detail

/// Forward-looking pinhole depth camera with horizontal field of view `fov`
/// and square pixels.
inline DepthImage render_pinhole(const Scene& scene, const Vec3& position, double yaw,
                                 double fov, int h, int w, double d_max = kDefaultMaxDepth) {
  return detail::render_basis(scene, position, yaw, detail::face_basis(CubeFace::front), fov, h,
                              w, d_max);
}

inline DepthImage render_cubeface(const Scene& scene, const Vec3& position, double yaw,
                                  CubeFace face, int face_res, double d_max = kDefaultMaxDepth) {
  DepthImage img = detail::render_basis(scene, position, yaw, detail::face_basis(face),
                                        0.5 * std::numbers::pi, face_res, face_res, d_max);
  img.camera = CameraModel::cubeface;
  img.face = face;
  return img;
}

/// Six 90 degree faces in kCubeFaces order.
inline std::vector<DepthImage> render_cubefaces(const Scene& scene, const Vec3& position,
                                                double yaw, int face_res,
                                                double d_max = kDefaultMaxDepth) {
  std::vector<DepthImage> out;
  for (CubeFace f : kCubeFaces) out.push_back(render_cubeface(scene, position, yaw, f, face_res, d_max));
  return out;
}

// ---------------------------------------------------------------------------
// Noise and network input

struct NoiseConfig {
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

/// Adds N(0, (gamma * mean depth)^2) per pixel and clips back into (0, d_max].
inline DepthImage add_noise(const DepthImage& d, double gamma, Rng& rng) {
  if (gamma < 0) throw std::invalid_argument("add_noise: gamma must be >= 0");
  if (gamma == 0) return d;
  DepthImage out = d;
  const double sigma = gamma * d.mean();
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.values) v = std::clamp(v + noise(rng), kMinDepth, d.d_max);
  return out;
}

inline DepthImage add_noise(const DepthImage& d, const NoiseConfig& cfg) {
  Rng rng = make_rng(cfg.seed);
  return add_noise(d, cfg.gamma, rng);
}

/// Stacks images as channels of a [C,H,W] tensor scaled to depth / d_max.
template <class T = float>
Tensor<T> normalize_for_net(const std::vector<DepthImage>& views, double d_max) {
  if (views.empty()) throw std::invalid_argument("normalize_for_net: no images");
  if (!(d_max > 0)) throw std::invalid_argument("normalize_for_net: d_max must be > 0");
  const int h = views[0].height, w = views[0].width;
  std::vector<T> data;
  data.reserve(views.size() * static_cast<std::size_t>(h) * w);
  for (const auto& v : views) {
    if (v.height != h || v.width != w) throw ShapeError("normalize_for_net: mixed image sizes");
    for (double x : v.values) data.push_back(static_cast<T>(x / d_max));
  }
  return Tensor<T>(Shape{views.size(), static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                   std::move(data));
}

template <class T = float>
Tensor<T> normalize_for_net(const DepthImage& d, double d_max) {
  return normalize_for_net<T>(std::vector<DepthImage>{d}, d_max);
}

/// Each output pixel is the minimum over a factor x factor block of `d`.
inline DepthImage min_pool(const DepthImage& d, int factor) {
  if (factor < 1 || d.height % factor != 0 || d.width % factor != 0) {
    throw std::invalid_argument("min_pool: factor must divide the image size");
  }
  DepthImage out = d;
  out.height = d.height / factor;
  out.width = d.width / factor;
  out.values.assign(static_cast<std::size_t>(out.height) * out.width,
                    std::numeric_limits<double>::infinity());
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      double& o = out.values[static_cast<std::size_t>(r / factor) * out.width + c / factor];
      o = std::min(o, d.values[static_cast<std::size_t>(r) * d.width + c]);
    }
  }
  return out;
}

/// Image whose columns are those of `d` rotated left by k (column c takes c + k).
inline DepthImage column_shift(const DepthImage& d, int k) {
  DepthImage out = d;
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      const int src = ((c + k) % d.width + d.width) % d.width;
      out.values[static_cast<std::size_t>(r) * d.width + c] = d.at(r, src);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit PGM

inline void write_pgm(const std::string& path, const DepthImage& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "P5\n" << d.width << ' ' << d.height << "\n65535\n";
  for (double v : d.values) {
    const auto q = static_cast<std::uint16_t>(
        std::lround(std::clamp(v / d.d_max, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    f.write(bytes, 2);
  }
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline DepthImage read_pgm(const std::string& path, double d_max) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0) {
    throw std::runtime_error("'" + path + "' is not a 16-bit binary PGM");
  }
  f.get();
  DepthImage d;
  d.height = h;
  d.width = w;
  d.d_max = d_max;
  d.values.resize(static_cast<std::size_t>(w) * h);
  for (double& v : d.values) {
    unsigned char b[2];
    if (!f.read(reinterpret_cast<char*>(b), 2)) throw std::runtime_error("'" + path + "' is truncated");
    v = ((b[0] << 8) | b[1]) * d_max / 65535.0;
  }
  return d;
}

}  // namespace panoavoid
