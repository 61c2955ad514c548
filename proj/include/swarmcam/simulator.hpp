#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swarmcam/flow.hpp"
#include "swarmcam/image.hpp"
#include "swarmcam/rng.hpp"

namespace swarmcam::sim {

/// Behaviour and rendering constants for one colony episode. Duel
/// kinematics are stand-ins chosen to give duels a distinctive local motion
/// signature; all of them are configurable.
struct SimConfig {
  int n_ants = 59;
  int arena = 512;
  std::uint64_t seed = 0;
  double duel_rate = 1.5;          // expected duels per minute (Unstable only)
  double duel_duration_min = 4.0;  // seconds
  double duel_duration_max = 10.0;
  double frame_dt = 0.5;
  double episode_len = 600.0;
  int cricket_count = 2;

  double wander_speed_min = 5.0;  // px/s
  double wander_speed_max = 25.0;
  double heading_noise = 0.3;     // rad, std per frame interval
  double duel_spacing = 10.0;     // px between duelling partners
  double jerk_amplitude = 2.5;    // px
  double jerk_angle = 0.7853981633974483;  // jerk direction vs facing axis (45 deg), rad
  // Sampled every frame_dt = 0.5 s, a jerk near 3 Hz reverses between
  // consecutive frames instead of aliasing towards zero displacement.
  double jerk_freq_min = 2.8;     // Hz
  double jerk_freq_max = 3.2;
  double approach_speed = 30.0;   // px/s while closing in on a partner
  double exit_rate = 0.001;       // per ant per second
  double reentry_rate = 0.02;     // per hidden ant per second
  double duel_rate_decay = 0.0;   // e-folding time of duel_rate in s; 0 = constant
  double substep = 0.05;          // integration step, s

  bool operator==(const SimConfig&) const = default;
};

/// Throws ValidationError for configs outside the documented domain.
void validate(const SimConfig& cfg);

enum class AntMode { Wander, Approach, Duel, Leaving, Hidden };

struct Ant {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  // radians, 0 = +x
  double speed = 0.0;    // px/s
  AntMode mode = AntMode::Wander;
  int partner = -1;
  int duel = -1;  // index into SimState::duels while approaching/duelling
};

struct BBox {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  BBox dilated(double r) const { return {x0 - r, y0 - r, x1 + r, y1 + r}; }
  bool operator==(const BBox&) const = default;
};

/// Ground-truth record of one duel.
struct DuelEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<int> participants;
  std::map<std::size_t, BBox> bbox_per_frame;
  bool operator==(const DuelEvent&) const = default;
};

struct Cricket {
  double x, y;
};

/// Bookkeeping for a duel from pairing to expiry.
struct DuelTrack {
  int a, b;
  bool engaged = false;
  double t_paired = 0.0;
  double t_start = 0.0, t_end = 0.0;
  double anchor_x = 0.0, anchor_y = 0.0;  // midpoint between the pair at rest
  double axis = 0.0;                      // direction from a to b
  double freq = 0.0, phase = 0.0;
  bool finished = false;
};

struct SimState {
  double time = 0.0;
  Label label = Label::Stable;
  std::vector<Ant> ants;
  std::vector<Cricket> crickets;
  std::vector<DuelTrack> duels;
  Rng rng{0};
};

/// Fresh colony: ants uniformly placed and wandering, crickets fixed.
SimState initial_state(const SimConfig& cfg, Label label);

/// Advances by dt seconds (integrated in substeps of cfg.substep).
void step(SimState& state, const SimConfig& cfg, double dt);

/// Rasterizes visible ants and crickets at cfg.arena resolution.
GrayImage render(const SimState& state, const SimConfig& cfg);

/// Minimal per-frame pose record, enough to re-render.
struct AntPose {
  double x, y, heading;
  bool visible;
};

struct Episode {
  SimConfig cfg;
  Label label = Label::Stable;
  std::vector<Cricket> crickets;
  std::vector<std::vector<AntPose>> frames;  // one pose list per frame_dt tick
  std::vector<DuelEvent> events;

  std::size_t frame_count() const { return frames.size(); }
  double frame_time(std::size_t i) const { return static_cast<double>(i) * cfg.frame_dt; }
  GrayImage render_frame(std::size_t i) const;
};

inline constexpr double kMinEpisodeLen = 240.0;

/// Runs a whole episode. Frames are stored as poses and rendered on demand.
Episode generate_episode(const SimConfig& cfg, Label label);

/// Renders a single pose list.
GrayImage render_poses(const std::vector<AntPose>& poses, const std::vector<Cricket>& crickets,
                       int arena);

/// events.jsonl line for one event.
std::string event_to_json(const DuelEvent& event);
DuelEvent event_from_json(const std::string& line);

}  // namespace swarmcam::sim
