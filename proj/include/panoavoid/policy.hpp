// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "panoavoid/checkpoint.hpp"
#include "panoavoid/dynamics.hpp"
#include "panoavoid/geometry.hpp"
#include "panoavoid/json_util.hpp"
#include "panoavoid/ops.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/tensor.hpp"

namespace panoavoid {

inline constexpr double kGoalClamp = 10.0;
inline constexpr std::size_t kObsDim = 10;

// ---------------------------------------------------------------------------
// Observation vector: [goal offset (body), velocity (body), up axis, radius]

struct ObservationVector {
  Vec3 d_goal;
  Vec3 v_body;
  Vec3 q_up{0, 0, 1};
  double r = 0.2;

  std::vector<double> to_array() const {
    return {d_goal.x, d_goal.y, d_goal.z, v_body.x, v_body.y, v_body.z,
            q_up.x,   q_up.y,   q_up.z,   r};
  }
};

/// Differentiable in the state's position and velocity.
template <class T>
Tensor<T> build_observation(const TensorState<T>& s, const Vec3& goal, double r,
                            double goal_clamp = kGoalClamp) {
  const Tensor<T> g = Tensor<T>::vec3(T(goal.x), T(goal.y), T(goal.z));
  const Tensor<T> d_goal = clip_norm(rotate_z(sub(g, s.p), -s.yaw), T(goal_clamp));
  const Tensor<T> v_body = rotate_z(s.v, -s.yaw);
  const Vec3 up = up_vector(yaw_quaternion(s.yaw));
  const Tensor<T> rest(Shape{4}, std::vector<T>{T(up.x), T(up.y), T(up.z), T(r)});
  return concat<T>({d_goal, v_body, rest});
}

inline ObservationVector build_observation(const UavState& s, const Vec3& goal, double r,
                                           double goal_clamp = kGoalClamp) {
  NoGradScope<double> off;
  const auto t = build_observation(TensorState<double>::from(s), goal, r, goal_clamp);
  return {{t[0], t[1], t[2]}, {t[3], t[4], t[5]}, {t[6], t[7], t[8]}, t[9]};
}

// ---------------------------------------------------------------------------
// SphereConv sampling

namespace detail {

// Gnomonic back-projection of tangent-plane point (x, y) around (lat0, lon0).
inline std::pair<double, double> gnomonic_inverse(double x, double y, double lat0, double lon0) {
  const double rho = std::hypot(x, y);
  if (rho == 0.0) return {lat0, lon0};
  const double nu = std::atan(rho);
  const double sn = std::sin(nu), cn = std::cos(nu);
  const double lat =
      std::asin(std::clamp(cn * std::sin(lat0) + y * sn * std::cos(lat0) / rho, -1.0, 1.0));
  const double lon =
      lon0 + std::atan2(x * sn, rho * std::cos(lat0) * cn - y * std::sin(lat0) * sn);
  return {lat, lon};
}

}  // namespace detail

/// Continuous equirect (row, col) sample positions of a 3x3 SphereConv with
/// the given stride, laid out as [3 Ho, 3 Wo, 2] so that a 3x3 stride-3
/// convolution over the gathered image applies the kernel. Taps lie on a
/// tangent-plane grid with one equatorial pixel of angular spacing.
inline std::vector<double> sphere_conv_coords(std::size_t in_h, std::size_t in_w,
                                              std::size_t stride) {
  if (stride < 1 || in_h < stride || in_w < stride) {
    throw ShapeError("sphere_conv: input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                     " too small for stride " + std::to_string(stride));
  }
  const std::size_t oh = in_h / stride, ow = in_w / stride;
  const double h = static_cast<double>(in_h), w = static_cast<double>(in_w);
  const double pi = std::numbers::pi;
  const double step = 2.0 * pi / w;
  const double centre_off = 0.5 * static_cast<double>(stride - 1);
  std::vector<double> coords(oh * 3 * ow * 3 * 2);
  for (std::size_t i = 0; i < oh; ++i) {
    const double row0 = static_cast<double>(stride * i) + centre_off;
    const double lat0 = 0.5 * pi - pi * (row0 + 0.5) / h;
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        // offsets are computed once per row at longitude 0 and translated per
        // column, so the layer commutes exactly with whole-column shifts
        const auto [lat, dlon] =
            detail::gnomonic_inverse(std::tan(kx * step), std::tan(-ky * step), lat0, 0.0);
        const double r = (0.5 * pi - lat) * h / pi - 0.5;
        const double dc = dlon * w / (2.0 * pi);
        for (std::size_t j = 0; j < ow; ++j) {
          const double col0 = static_cast<double>(stride * j) + centre_off;
          const std::size_t orow = 3 * i + static_cast<std::size_t>(ky + 1);
          const std::size_t ocol = 3 * j + static_cast<std::size_t>(kx + 1);
          const std::size_t k = (orow * 3 * ow + ocol) * 2;
          coords[k] = r;
          coords[k + 1] = col0 + dc;
        }
      }
    }
  }
  return coords;
}

inline std::shared_ptr<const BilinearPlan> sphere_conv_plan(std::size_t in_h, std::size_t in_w,
                                                            std::size_t stride) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
                  std::shared_ptr<const BilinearPlan>>
      cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{in_h, in_w, stride}];
  if (!slot) {
    const auto coords = sphere_conv_coords(in_h, in_w, stride);
    slot = std::make_shared<const BilinearPlan>(make_bilinear_plan(
        in_h, in_w, 3 * (in_h / stride), 3 * (in_w / stride), coords, true));
  }
  return slot;
}

/// 3x3 convolution whose taps follow the sphere rather than the pixel grid.
/// Output extent is [O, H / stride, W / stride].
template <class T>
Tensor<T> sphere_conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                        std::size_t stride) {
  if (input.rank() != 3) {
    throw ShapeError("sphere_conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("sphere_conv2d: weight must be [O,C,3,3], got " + shape_str(weight.shape()));
  }
  const auto gathered = grid_sample(input, sphere_conv_plan(input.dim(1), input.dim(2), stride));
  return conv2d(gathered, weight, bias, 3, 0);
}

// ---------------------------------------------------------------------------
// GRU (reset, update, candidate gate order)

template <class T>
struct GruParams {
  Tensor<T> w_ih;  // [3H, D]
  Tensor<T> w_hh;  // [3H, H]
  Tensor<T> b_ih;  // [3H]
  Tensor<T> b_hh;  // [3H]
};

template <class T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h, const GruParams<T>& p) {
  if (h.rank() != 1 || x.rank() != 1) throw ShapeError("gru_cell: x and h must be vectors");
  const std::size_t hd = h.size();
  if (p.w_ih.rank() != 2 || p.w_ih.dim(0) != 3 * hd || p.w_ih.dim(1) != x.size() ||
      p.w_hh.rank() != 2 || p.w_hh.dim(0) != 3 * hd || p.w_hh.dim(1) != hd ||
      p.b_ih.size() != 3 * hd || p.b_hh.size() != 3 * hd) {
    throw ShapeError("gru_cell: parameters " + shape_str(p.w_ih.shape()) + ", " +
                     shape_str(p.w_hh.shape()) + " do not fit input " + std::to_string(x.size()) +
                     " and hidden " + std::to_string(hd));
  }
  const Tensor<T> gi = linear(x, p.w_ih, p.b_ih);
  const Tensor<T> gh = linear(h, p.w_hh, p.b_hh);
  const Tensor<T> r = sigmoid(add(slice(gi, 0, hd), slice(gh, 0, hd)));
  const Tensor<T> z = sigmoid(add(slice(gi, hd, hd), slice(gh, hd, hd)));
  const Tensor<T> n = tanh(add(slice(gi, 2 * hd, hd), mul(r, slice(gh, 2 * hd, hd))));
  // h' = (1 - z) n + z h = n + z (h - n)
  return add(n, mul(z, sub(h, n)));
}

// ---------------------------------------------------------------------------
// Architecture description

enum class PolicyVariant { panoramic, forward, multiview };
enum class LayerKind { sphere, plain };
enum class Fusion { sum, concat };
enum class VelocityHead { separate, command };

PANOAVOID_JSON_ENUM(PolicyVariant, {{PolicyVariant::panoramic, "panoramic"},
                                             {PolicyVariant::forward, "forward"},
                                             {PolicyVariant::multiview, "multiview"}})
PANOAVOID_JSON_ENUM(LayerKind, {{LayerKind::sphere, "sphere"}, {LayerKind::plain, "plain"}})
PANOAVOID_JSON_ENUM(Fusion, {{Fusion::sum, "sum"}, {Fusion::concat, "concat"}})
PANOAVOID_JSON_ENUM(VelocityHead, {{VelocityHead::separate, "separate"},
                                            {VelocityHead::command, "command"}})

struct ConvSpec {
  LayerKind kind = LayerKind::plain;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConvSpec, kind, out_channels, kernel, stride, padding)

struct PolicySpec {
  PolicyVariant variant = PolicyVariant::panoramic;
  std::size_t in_channels = 1;
  std::size_t in_h = 64;
  std::size_t in_w = 128;
  std::vector<ConvSpec> convs;
  std::size_t hidden = 256;
  std::size_t obs_dim = kObsDim;
  Fusion fusion = Fusion::sum;
  VelocityHead velocity_head = VelocityHead::separate;
  double fov = 0.5 * std::numbers::pi;  // forward / multiview cameras
  double leaky_slope = 0.01;
  std::size_t supersample = 1;  // cameras render this many rays per input pixel side, min-pooled
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PolicySpec, variant, in_channels, in_h, in_w, convs, hidden,
                                   obs_dim, fusion, velocity_head, fov, leaky_slope,
                                   supersample)

inline PadMode pad_mode_for(const PolicySpec& spec) {
  return spec.variant == PolicyVariant::panoramic ? PadMode::circular_longitude : PadMode::zero;
}

namespace detail {

inline std::vector<ConvSpec> conv_chain(
    std::initializer_list<std::tuple<LayerKind, std::size_t, std::size_t, std::size_t>> rows) {
  std::vector<ConvSpec> out;
  for (const auto& [kind, ch, k, s] : rows) {
    out.push_back({kind, ch, k, s, kind == LayerKind::plain && k == 3 ? std::size_t{1} : 0});
  }
  return out;
}

}  // namespace detail

/// Panoramic network. `channels` overrides the six encoder widths.
inline PolicySpec panoramic_spec(std::size_t in_h = 64, std::size_t in_w = 128,
                                 std::vector<std::size_t> channels = {32, 64, 64, 64, 128, 128},
                                 std::size_t hidden = 256) {
  if (channels.size() != 6) throw std::invalid_argument("panoramic_spec: need 6 channel widths");
  using L = LayerKind;
  PolicySpec s;
  s.variant = PolicyVariant::panoramic;
  s.in_h = in_h;
  s.in_w = in_w;
  s.hidden = hidden;
  s.convs = detail::conv_chain({{L::sphere, channels[0], 3, 2},
                                {L::sphere, channels[1], 3, 2},
                                {L::plain, channels[2], 3, 1},
                                {L::plain, channels[3], 2, 2},
                                {L::plain, channels[4], 3, 1},
                                {L::plain, channels[5], 3, 1}});
  return s;
}

inline PolicySpec forward_spec(std::size_t in_h = 32, std::size_t in_w = 32) {
  using L = LayerKind;
  PolicySpec s;
  s.variant = PolicyVariant::forward;
  s.in_h = in_h;
  s.in_w = in_w;
  s.hidden = 192;
  s.convs = detail::conv_chain({{L::plain, 32, 2, 2}, {L::plain, 64, 3, 1}, {L::plain, 128, 3, 1}});
  return s;
}

/// Channel-stacked perspective views (6 cube faces, or 4 side views).
inline PolicySpec multiview_spec(std::size_t n_views = 6, std::size_t face_res = 32) {
  if (n_views != 6 && n_views != 4) throw std::invalid_argument("multiview_spec: 4 or 6 views");
  using L = LayerKind;
  PolicySpec s;
  s.variant = PolicyVariant::multiview;
  s.in_channels = n_views;
  s.in_h = face_res;
  s.in_w = face_res;
  s.hidden = 384;
  s.convs = detail::conv_chain({{L::plain, 256, 3, 2},
                                {L::plain, 128, 3, 1},
                                {L::plain, 128, 3, 2},
                                {L::plain, 128, 3, 1},
                                {L::plain, 128, 3, 2},
                                {L::plain, 256, 3, 1}});
  return s;
}

struct LayerShape {
  std::string name;
  Shape output;
};

/// Output extent of every stage, validating the chain on the way.
inline std::vector<LayerShape> layer_shapes(const PolicySpec& spec) {
  if (spec.in_channels == 0 || spec.hidden == 0 || spec.obs_dim == 0 || spec.supersample == 0) {
    throw std::invalid_argument("policy spec: channels, hidden, obs_dim and supersample must be positive");
  }
  std::vector<LayerShape> out;
  std::size_t c = spec.in_channels, h = spec.in_h, w = spec.in_w;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& l = spec.convs[i];
    if (l.stride < 1 || l.out_channels < 1) {
      throw std::invalid_argument("policy spec: layer " + std::to_string(i) + " is degenerate");
    }
    if (l.kind == LayerKind::sphere) {
      if (spec.variant != PolicyVariant::panoramic || l.kernel != 3) {
        throw std::invalid_argument("policy spec: SphereConv needs a 3x3 kernel on a panorama");
      }
      if (h < l.stride || w < l.stride) throw ShapeError("policy spec: input too small");
      h /= l.stride;
      w /= l.stride;
    } else {
      if (h + 2 * l.padding < l.kernel || w + 2 * l.padding < l.kernel) {
        throw ShapeError("policy spec: layer " + std::to_string(i) + " kernel exceeds input " +
                         std::to_string(h) + "x" + std::to_string(w));
      }
      h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
      w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
    }
    c = l.out_channels;
    out.push_back({"conv" + std::to_string(i + 1), {c, h, w}});
  }
  out.push_back({"flatten", {c * h * w}});
  out.push_back({"visual", {spec.hidden}});
  out.push_back({"obs", {spec.hidden}});
  out.push_back({"gru", {spec.hidden}});
  out.push_back({"head", {3}});
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

template <class T>
struct PolicyParams {
  PolicySpec spec;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  const Tensor<T>& get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return tensors[i];
    }
    throw std::out_of_range("policy has no parameter '" + name + "'");
  }
  std::vector<Tensor<T>*> pointers() {
    std::vector<Tensor<T>*> out;
    for (auto& t : tensors) out.push_back(&t);
    return out;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

/// Parameter names and shapes in storage order.
inline std::vector<std::pair<std::string, Shape>> parameter_layout(const PolicySpec& spec) {
  const auto shapes = layer_shapes(spec);
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t c = spec.in_channels;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& l = spec.convs[i];
    const std::string n = "conv" + std::to_string(i + 1);
    out.push_back({n + ".weight", {l.out_channels, c, l.kernel, l.kernel}});
    out.push_back({n + ".bias", {l.out_channels}});
    c = l.out_channels;
  }
  const std::size_t flat = shapes[spec.convs.size()].output[0];
  const std::size_t hd = spec.hidden;
  out.push_back({"visual.weight", {hd, flat}});
  out.push_back({"visual.bias", {hd}});
  out.push_back({"obs.weight", {hd, spec.obs_dim}});
  out.push_back({"obs.bias", {hd}});
  const std::size_t gru_in = spec.fusion == Fusion::sum ? hd : 2 * hd;
  out.push_back({"gru.w_ih", {3 * hd, gru_in}});
  out.push_back({"gru.w_hh", {3 * hd, hd}});
  out.push_back({"gru.b_ih", {3 * hd}});
  out.push_back({"gru.b_hh", {3 * hd}});
  out.push_back({"head.weight", {3, hd}});
  out.push_back({"head.bias", {3}});
  if (spec.velocity_head == VelocityHead::separate) {
    out.push_back({"vhat.weight", {3, hd}});
    out.push_back({"vhat.bias", {3}});
  }
  return out;
}

/// Convolutions: He-uniform weights for the leaky activations and zero
/// biases, so the visual signal keeps its scale through the encoder. Other
/// layers: Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <class T>
PolicyParams<T> init_policy(const PolicySpec& spec, Rng& rng) {
  PolicyParams<T> p;
  p.spec = spec;
  const auto layout = parameter_layout(spec);
  const double gain = std::sqrt(2.0 / (1.0 + spec.leaky_slope * spec.leaky_slope));
  std::size_t fan_in = 0;
  for (const auto& [name, shape] : layout) {
    if (shape.size() >= 2) fan_in = numel(shape) / shape[0];
    const bool conv = name.rfind("conv", 0) == 0;
    const double bound = conv ? gain * std::sqrt(3.0 / static_cast<double>(fan_in))
                              : 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> data(numel(shape), T(0));
    if (!(conv && shape.size() == 1)) {
      for (T& v : data) v = static_cast<T>(uniform(rng, -bound, bound));
    }
    p.names.push_back(name);
    p.tensors.push_back(Tensor<T>::parameter(shape, std::move(data)));
  }
  return p;
}

/// Every weight and bias zero: the policy always commands zero velocity.
template <class T>
PolicyParams<T> zero_policy(const PolicySpec& spec) {
  PolicyParams<T> p;
  p.spec = spec;
  for (const auto& [name, shape] : parameter_layout(spec)) {
    p.names.push_back(name);
    p.tensors.push_back(Tensor<T>::parameter(shape, std::vector<T>(numel(shape), T(0))));
  }
  return p;
}

template <class To, class From>
PolicyParams<To> cast_policy(const PolicyParams<From>& p) {
  PolicyParams<To> out;
  out.spec = p.spec;
  out.names = p.names;
  for (const auto& t : p.tensors) {
    out.tensors.push_back(Tensor<To>::parameter(t.shape(), {t.data().begin(), t.data().end()}));
  }
  return out;
}

template <class T>
CheckpointData policy_to_checkpoint(const PolicyParams<T>& p, nlohmann::json meta = {}) {
  CheckpointData ck;
  ck.meta = meta.is_object() ? std::move(meta) : nlohmann::json::object();
  ck.meta["policy_spec"] = p.spec;
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& t = p.tensors[i];
    ck.arrays.push_back({p.names[i], t.shape(), {t.data().begin(), t.data().end()}});
  }
  return ck;
}

template <class T = float>
PolicyParams<T> policy_from_checkpoint(const CheckpointData& ck) {
  if (!ck.meta.contains("policy_spec")) throw CheckpointError("checkpoint: no policy_spec");
  PolicyParams<T> p;
  p.spec = ck.meta.at("policy_spec").get<PolicySpec>();
  const auto layout = parameter_layout(p.spec);
  if (layout.size() != ck.arrays.size()) {
    throw CheckpointError("checkpoint: expected " + std::to_string(layout.size()) +
                          " arrays, found " + std::to_string(ck.arrays.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& a = ck.arrays[i];
    if (a.name != layout[i].first || a.shape != layout[i].second) {
      throw CheckpointError("checkpoint: array '" + a.name + "' " + shape_str(a.shape) +
                            " does not match expected '" + layout[i].first + "' " +
                            shape_str(layout[i].second));
    }
    p.names.push_back(a.name);
    p.tensors.push_back(Tensor<T>::parameter(a.shape, {a.values.begin(), a.values.end()}));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

template <class T>
struct PolicyOutput {
  Tensor<T> u_body;
  Tensor<T> v_hat;
  Tensor<T> hidden;
};

template <class T>
Tensor<T> zero_hidden(const PolicySpec& spec) {
  return Tensor<T>(Shape{spec.hidden}, T(0));
}

/// Runs one control step. `trace`, when given, receives every stage's output
/// extent in the order reported by layer_shapes.
template <class T>
PolicyOutput<T> policy_forward(const PolicyParams<T>& p, const Tensor<T>& depth,
                               const Tensor<T>& obs, const Tensor<T>& h,
                               std::vector<Shape>* trace = nullptr) {
  const PolicySpec& s = p.spec;
  if (depth.shape() != Shape{s.in_channels, s.in_h, s.in_w}) {
    throw ShapeError("policy: depth input " + shape_str(depth.shape()) + ", expected " +
                     shape_str({s.in_channels, s.in_h, s.in_w}));
  }
  if (obs.shape() != Shape{s.obs_dim}) {
    throw ShapeError("policy: observation " + shape_str(obs.shape()) + ", expected [" +
                     std::to_string(s.obs_dim) + "]");
  }
  if (h.shape() != Shape{s.hidden}) {
    throw ShapeError("policy: hidden " + shape_str(h.shape()) + ", expected [" +
                     std::to_string(s.hidden) + "]");
  }
  const std::size_t expected = 2 * s.convs.size() + 10 + (s.velocity_head == VelocityHead::separate ? 2 : 0);
  if (p.tensors.size() != expected) throw ShapeError("policy: parameter count mismatch");
  const T slope = static_cast<T>(s.leaky_slope);
  const PadMode pad = pad_mode_for(s);
  auto note = [&](const Tensor<T>& t) {
    if (trace) trace->push_back(t.shape());
  };

  Tensor<T> x = depth;
  std::size_t k = 0;
  for (const auto& l : s.convs) {
    const Tensor<T>& w = p.tensors[k++];
    const Tensor<T>& b = p.tensors[k++];
    x = l.kind == LayerKind::sphere ? sphere_conv2d(x, w, b, l.stride)
                                    : conv2d(x, w, b, l.stride, l.padding, pad);
    x = leaky_relu(x, slope);
    note(x);
  }
  x = flatten(x);
  note(x);
  const Tensor<T> visual = linear(x, p.tensors[k], p.tensors[k + 1]);
  note(visual);
  const Tensor<T> obs_e = linear(obs, p.tensors[k + 2], p.tensors[k + 3]);
  note(obs_e);
  k += 4;
  const Tensor<T> fused = s.fusion == Fusion::sum ? add(visual, obs_e) : concat<T>({visual, obs_e});
  GruParams<T> gru{p.tensors[k], p.tensors[k + 1], p.tensors[k + 2], p.tensors[k + 3]};
  k += 4;
  PolicyOutput<T> out;
  out.hidden = gru_cell(fused, h, gru);
  note(out.hidden);
  out.u_body = linear(out.hidden, p.tensors[k], p.tensors[k + 1]);
  note(out.u_body);
  out.v_hat = s.velocity_head == VelocityHead::separate
                  ? linear(out.hidden, p.tensors[k + 2], p.tensors[k + 3])
                  : out.u_body;
  return out;
}

template <class T>
PolicyOutput<T> forward_panoramic(const PolicyParams<T>& p, const Tensor<T>& depth,
                                  const Tensor<T>& obs, const Tensor<T>& h) {
  if (p.spec.variant != PolicyVariant::panoramic) throw std::invalid_argument("not a panoramic policy");
  return policy_forward(p, depth, obs, h);
}

template <class T>
PolicyOutput<T> forward_forwardview(const PolicyParams<T>& p, const Tensor<T>& depth,
                                    const Tensor<T>& obs, const Tensor<T>& h) {
  if (p.spec.variant != PolicyVariant::forward) throw std::invalid_argument("not a forward-view policy");
  return policy_forward(p, depth, obs, h);
}

template <class T>
PolicyOutput<T> forward_multiview(const PolicyParams<T>& p, const Tensor<T>& depth,
                                  const Tensor<T>& obs, const Tensor<T>& h) {
  if (p.spec.variant != PolicyVariant::multiview) throw std::invalid_argument("not a multi-view policy");
  return policy_forward(p, depth, obs, h);
}

}  // namespace panoavoid
