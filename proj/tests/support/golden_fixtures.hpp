#pragma once

#include "swarmcam/flow.hpp"
#include "swarmcam/image.hpp"
#include "swarmcam/model.hpp"

namespace swarmcam::oracle {

// Objects whose encodings are stored under tests/golden.

inline FlowField golden_flow() {
  FlowField f(3, 4);
  for (std::size_t i = 0; i < 12; ++i) {
    f.u[i] = 0.25 * static_cast<double>(i) - 1.0;
    f.v[i] = -0.125 * static_cast<double>(i * i);
  }
  return f;
}

inline GrayImage golden_gray() {
  GrayImage g(3, 5);
  for (std::size_t i = 0; i < 15; ++i) g.pixels[i] = static_cast<double>(i * 17) / 255.0;
  return g;
}

inline RgbImage golden_rgb() {
  RgbImage r(2, 3);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = static_cast<double>(i * 13) / 255.0;
  return r;
}

inline model::Checkpoint golden_checkpoint() {
  model::ModelSpec spec;
  spec.input_size = 8;
  spec.conv = {{2, 3, 1, true}, {2, 3, 1, true}, {2, 3, 1, true}, {2, 3, 1, false}};
  spec.hidden = {3, 2};
  return {model::build_model(spec, 11), {11, 3, 0.5}};
}

}  // namespace swarmcam::oracle
