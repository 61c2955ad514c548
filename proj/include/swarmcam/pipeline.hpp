#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "swarmcam/flow.hpp"
#include "swarmcam/simulator.hpp"

namespace swarmcam::pipeline {

/// When flow pairs are taken from an episode. Sample k starts at
/// (k + 0.5) * interval; each flow spans flow_dt and the second flow starts
/// pair_gap after the first.
struct SamplingConfig {
  double interval = 120.0;
  double flow_dt = 0.5;
  double pair_gap = 0.5;
  bool operator==(const SamplingConfig&) const = default;
};

void validate(const SamplingConfig& cfg, double frame_dt);

/// Frame indices (a, b) of the first flow and (c, d) of the second.
struct SampleWindow {
  double t0 = 0.0;
  std::array<std::size_t, 4> frames{};
};

std::vector<SampleWindow> sample_windows(double episode_len, double frame_dt, const SamplingConfig& cfg);

/// Sorted, de-duplicated frame indices a set of windows reads.
std::vector<std::size_t> required_frames(const std::vector<SampleWindow>& windows);

/// Full-resolution flows for both pairs, block-averaged to 64x64 and packed.
Sample sample_from_frames(const GrayImage& a, const GrayImage& b, const GrayImage& c, const GrayImage& d,
                          Label label, double timestamp, const HornSchunckParams& hs);

/// Bounding box of each duel active in any frame of the window, taken as the
/// union of its per-frame boxes over those frames.
std::vector<sim::BBox> active_duel_boxes(const std::vector<sim::DuelEvent>& events, const SampleWindow& window);

/// Samples of one episode with their ground truth.
struct EpisodeSamples {
  std::size_t episode_id = 0;
  Label label = Label::Stable;
  std::vector<Sample> samples;
  std::vector<std::vector<sim::BBox>> duel_boxes;  // parallel to samples
};

EpisodeSamples episode_samples(const sim::Episode& episode, std::size_t episode_id, const SamplingConfig& sampling,
                               const HornSchunckParams& hs);

/// Simulates and samples episodes for the given seeds with one label.
std::vector<EpisodeSamples> simulate_samples(const sim::SimConfig& base, Label label,
                                             const std::vector<std::uint64_t>& seeds,
                                             const SamplingConfig& sampling, const HornSchunckParams& hs,
                                             std::size_t first_episode_id);

}  // namespace swarmcam::pipeline
