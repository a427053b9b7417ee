// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "panoavoid/training.hpp"

namespace panoavoid::testing {

/// Panoramic chain at 16x32 with two channels per layer and an 8-wide GRU.
inline PolicySpec tiny_spec() { return panoramic_spec(16, 32, {2, 2, 2, 2, 2, 2}, 8); }

// Five closed-loop steps with the visual input replayed from a reference
// run, so the differentiated function is exactly the one finite differences
// see. The velocity-prediction target is cut from the graph by design, so
// that term is checked only against the prediction head it trains.
struct ReplayFixture {
  PolicyParams<double> p;
  Scene scene;
  UavState start;
  SimConfig sim;
  LossConfig loss;
  double yaw = 0.7;
  std::vector<double> dts = {0.066, 0.07, 0.061, 0.068, 0.0667};
  Vec3 goal{0.5, -0.5, 3.2};
  std::vector<Tensor<double>> depths;

  ReplayFixture() {
    Rng init = make_rng(12);
    p = init_policy<double>(tiny_spec(), init);
    scene.obstacles.push_back({SphereShape{0.5}, {1.5, 0.4, 3.0}, StaticMotion{}});
    scene.obstacles.push_back({CapsuleShape{0.3, 1.0}, {-1.0, 1.2, 2.5}, StaticMotion{}});
    start.p = {0, 0, 3};
    start.v = {0.8, 0.2, 0};
    NoGradScope<double> off;
    ClosedLoop<double> loop(p, sim, loss, 0.2, 10.0, start);
    Scene sc = scene;
    Rng rng = make_rng(13);
    for (double dt : dts) depths.push_back(loop.advance(sc, goal, yaw, dt, rng).depth);
  }

  Tensor<double> loss_value() {
    ClosedLoop<double> loop(p, sim, loss, 0.2, 10.0, start);
    Scene sc = scene;
    Rng rng = make_rng(13);
    Tensor<double> total;
    for (std::size_t k = 0; k < dts.size(); ++k) {
      const auto o = loop.advance_with_depth(depths[k], sc, goal, yaw, dts[k], rng);
      total = total.defined() ? add(total, o.total) : o.total;
    }
    return scale(total, 1.0 / static_cast<double>(dts.size()));
  }

  std::vector<Tensor<double>*> head(const std::string& prefix) {
    std::vector<Tensor<double>*> out;
    for (std::size_t i = 0; i < p.names.size(); ++i) {
      if (p.names[i].rfind(prefix, 0) == 0) out.push_back(&p.tensors[i]);
    }
    return out;
  }
};

}  // namespace panoavoid::testing
