#include "swarmcam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "swarmcam/errors.hpp"

namespace swarmcam::pipeline {

namespace {

std::size_t ticks(double seconds, double frame_dt, const char* what) {
  const double r = seconds / frame_dt;
  const double n = std::round(r);
  if (std::fabs(r - n) > 1e-9 || n < 0.0)
    throw ValidationError(std::string(what) + " must be a non-negative multiple of frame_dt");
  return static_cast<std::size_t>(n);
}

}  // namespace

void validate(const SamplingConfig& cfg, double frame_dt) {
  if (!(frame_dt > 0.0)) throw ValidationError("frame_dt must be positive");
  if (!(cfg.interval > 0.0)) throw ValidationError("sample interval must be positive");
  if (ticks(cfg.flow_dt, frame_dt, "flow_dt") == 0) throw ValidationError("flow_dt must be at least one frame");
  ticks(cfg.pair_gap, frame_dt, "pair_gap");
}

std::vector<SampleWindow> sample_windows(double episode_len, double frame_dt, const SamplingConfig& cfg) {
  validate(cfg, frame_dt);
  const std::size_t flow = ticks(cfg.flow_dt, frame_dt, "flow_dt");
  const std::size_t gap = ticks(cfg.pair_gap, frame_dt, "pair_gap");
  const auto last_frame = static_cast<std::size_t>(std::floor(episode_len / frame_dt + 1e-9));
  std::vector<SampleWindow> out;
  for (std::size_t k = 0;; ++k) {
    const double t0 = (static_cast<double>(k) + 0.5) * cfg.interval;
    const auto a = static_cast<std::size_t>(std::round(t0 / frame_dt));
    if (a + gap + flow > last_frame) break;
    out.push_back({static_cast<double>(a) * frame_dt, {a, a + flow, a + gap, a + gap + flow}});
  }
  return out;
}

std::vector<std::size_t> required_frames(const std::vector<SampleWindow>& windows) {
  std::vector<std::size_t> out;
  for (const auto& w : windows) out.insert(out.end(), w.frames.begin(), w.frames.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Sample sample_from_frames(const GrayImage& a, const GrayImage& b, const GrayImage& c, const GrayImage& d,
                          Label label, double timestamp, const HornSchunckParams& hs) {
  const FlowField first = downsample(horn_schunck(a, b, hs));
  const FlowField second = downsample(horn_schunck(c, d, hs));
  return make_sample(first, second, label, timestamp);
}

std::vector<sim::BBox> active_duel_boxes(const std::vector<sim::DuelEvent>& events, const SampleWindow& window) {
  std::vector<sim::BBox> out;
  for (const auto& ev : events) {
    bool any = false;
    sim::BBox u{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t f : window.frames) {
      const auto it = ev.bbox_per_frame.find(f);
      if (it == ev.bbox_per_frame.end()) continue;
      any = true;
      u = {std::min(u.x0, it->second.x0), std::min(u.y0, it->second.y0), std::max(u.x1, it->second.x1),
           std::max(u.y1, it->second.y1)};
    }
    if (any) out.push_back(u);
  }
  return out;
}

EpisodeSamples episode_samples(const sim::Episode& episode, std::size_t episode_id, const SamplingConfig& sampling,
                               const HornSchunckParams& hs) {
  const auto windows = sample_windows(episode.cfg.episode_len, episode.cfg.frame_dt, sampling);
  EpisodeSamples out;
  out.episode_id = episode_id;
  out.label = episode.label;
  out.samples.resize(windows.size());
  out.duel_boxes.resize(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (w.frames[3] >= episode.frame_count()) throw ValidationError("sample window exceeds the episode");
    out.samples[i] = sample_from_frames(episode.render_frame(w.frames[0]), episode.render_frame(w.frames[1]),
                                        episode.render_frame(w.frames[2]), episode.render_frame(w.frames[3]),
                                        episode.label, w.t0, hs);
    out.duel_boxes[i] = active_duel_boxes(episode.events, w);
  }
  return out;
}

std::vector<EpisodeSamples> simulate_samples(const sim::SimConfig& base, Label label,
                                             const std::vector<std::uint64_t>& seeds,
                                             const SamplingConfig& sampling, const HornSchunckParams& hs,
                                             std::size_t first_episode_id) {
  std::vector<EpisodeSamples> out;
  out.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    sim::SimConfig cfg = base;
    cfg.seed = seeds[i];
    out.push_back(episode_samples(sim::generate_episode(cfg, label), first_episode_id + i, sampling, hs));
  }
  return out;
}

}  // namespace swarmcam::pipeline
