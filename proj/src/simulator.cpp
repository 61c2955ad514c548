#include "swarmcam/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "swarmcam/errors.hpp"

namespace swarmcam::sim {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWallMargin = 8.0;
constexpr double kAntHalfLength = 6.0;  // capsule is 12 px long
constexpr double kAntRadius = 1.5;      // and 3 px wide
constexpr double kCricketRadius = 4.0;
constexpr double kBackground = 0.8;
constexpr double kAntShade = 0.2;
constexpr double kCricketShade = 0.4;
constexpr double kEdgeZoneHalf = 48.0;  // half height of the foraging-chamber doorway
constexpr double kApproachTimeout = 30.0;

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  return a < 0.0 ? a + 2.0 * kPi : a;
}

double duel_offset(const DuelTrack& d, const SimConfig& cfg, double t) {
  const double arg = 2.0 * kPi * d.freq * (t - d.t_start) + d.phase;
  return cfg.jerk_amplitude * (std::sin(arg) - std::sin(d.phase));
}

void place_duellists(SimState& s, const DuelTrack& d, const SimConfig& cfg) {
  const double off = duel_offset(d, cfg, s.time);
  const double cx = std::cos(d.axis), cy = std::sin(d.axis);
  const double jx = std::cos(d.axis + cfg.jerk_angle), jy = std::sin(d.axis + cfg.jerk_angle);
  const double half = 0.5 * cfg.duel_spacing;
  Ant& a = s.ants[static_cast<std::size_t>(d.a)];
  Ant& b = s.ants[static_cast<std::size_t>(d.b)];
  a.x = d.anchor_x - half * cx + off * jx;
  a.y = d.anchor_y - half * cy + off * jy;
  b.x = d.anchor_x + half * cx + off * jx;
  b.y = d.anchor_y + half * cy + off * jy;
  a.heading = wrap_angle(d.axis);
  b.heading = wrap_angle(d.axis + kPi);
}

void release(SimState& s, int id, const SimConfig& cfg) {
  Ant& a = s.ants[static_cast<std::size_t>(id)];
  a.mode = AntMode::Wander;
  a.partner = -1;
  a.duel = -1;
  a.heading = s.rng.uniform(0.0, 2.0 * kPi);
  a.speed = s.rng.uniform(cfg.wander_speed_min, cfg.wander_speed_max);
}

void try_spawn_duel(SimState& s) {
  std::vector<int> idle;
  for (std::size_t i = 0; i < s.ants.size(); ++i)
    if (s.ants[i].mode == AntMode::Wander) idle.push_back(static_cast<int>(i));
  if (idle.size() < 2) return;
  const int a = idle[s.rng.below(idle.size())];
  int b = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int j : idle) {
    if (j == a) continue;
    const double dx = s.ants[j].x - s.ants[a].x, dy = s.ants[j].y - s.ants[a].y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      b = j;
    }
  }
  DuelTrack d{a, b};
  d.t_paired = s.time;
  s.duels.push_back(d);
  const int idx = static_cast<int>(s.duels.size() - 1);
  for (int id : {a, b}) {
    Ant& ant = s.ants[static_cast<std::size_t>(id)];
    ant.mode = AntMode::Approach;
    ant.partner = id == a ? b : a;
    ant.duel = idx;
  }
}

void engage(SimState& s, DuelTrack& d, const SimConfig& cfg) {
  const Ant& a = s.ants[static_cast<std::size_t>(d.a)];
  const Ant& b = s.ants[static_cast<std::size_t>(d.b)];
  const double lo = kWallMargin + cfg.duel_spacing;
  const double hi = cfg.arena - kWallMargin - cfg.duel_spacing;
  d.engaged = true;
  d.t_start = s.time;
  d.t_end = s.time + s.rng.uniform(cfg.duel_duration_min, cfg.duel_duration_max);
  d.anchor_x = std::clamp(0.5 * (a.x + b.x), lo, hi);
  d.anchor_y = std::clamp(0.5 * (a.y + b.y), lo, hi);
  d.axis = std::atan2(b.y - a.y, b.x - a.x);
  d.freq = s.rng.uniform(cfg.jerk_freq_min, cfg.jerk_freq_max);
  d.phase = s.rng.uniform(0.0, 2.0 * kPi);
  for (int id : {d.a, d.b}) s.ants[static_cast<std::size_t>(id)].mode = AntMode::Duel;
  place_duellists(s, d, cfg);
}

void reflect(Ant& a, const SimConfig& cfg) {
  const double lo = kWallMargin, hi = cfg.arena - kWallMargin;
  if (a.x < lo) {
    a.x = 2.0 * lo - a.x;
    a.heading = kPi - a.heading;
  } else if (a.x > hi) {
    a.x = 2.0 * hi - a.x;
    a.heading = kPi - a.heading;
  }
  if (a.y < lo) {
    a.y = 2.0 * lo - a.y;
    a.heading = -a.heading;
  } else if (a.y > hi) {
    a.y = 2.0 * hi - a.y;
    a.heading = -a.heading;
  }
  a.x = std::clamp(a.x, lo, hi);
  a.y = std::clamp(a.y, lo, hi);
  a.heading = wrap_angle(a.heading);
}

void substep(SimState& s, const SimConfig& cfg, double h) {
  if (s.label == Label::Unstable && cfg.duel_rate > 0.0) {
    double rate = cfg.duel_rate;
    if (cfg.duel_rate_decay > 0.0) rate *= std::exp(-s.time / cfg.duel_rate_decay);
    const int spawns = s.rng.poisson(rate * h / 60.0);
    for (int k = 0; k < spawns; ++k) try_spawn_duel(s);
  }

  const double noise = cfg.heading_noise * std::sqrt(h / cfg.frame_dt);
  const double door_y = 0.5 * cfg.arena;
  for (Ant& a : s.ants) {
    switch (a.mode) {
      case AntMode::Wander: {
        if (s.rng.bernoulli(cfg.exit_rate * h)) {
          a.mode = AntMode::Leaving;
          break;
        }
        a.heading += s.rng.normal(0.0, noise);
        a.speed = std::clamp(a.speed + s.rng.normal(0.0, 4.0 * std::sqrt(h)), cfg.wander_speed_min,
                             cfg.wander_speed_max);
        a.x += a.speed * std::cos(a.heading) * h;
        a.y += a.speed * std::sin(a.heading) * h;
        reflect(a, cfg);
        break;
      }
      case AntMode::Leaving: {
        a.heading = std::atan2(door_y - a.y, -a.x);
        a.speed = cfg.wander_speed_max;
        a.x += a.speed * std::cos(a.heading) * h;
        a.y += a.speed * std::sin(a.heading) * h;
        a.heading = wrap_angle(a.heading);
        if (a.x <= kWallMargin) a.mode = AntMode::Hidden;
        break;
      }
      case AntMode::Hidden: {
        if (s.rng.bernoulli(cfg.reentry_rate * h)) {
          a.mode = AntMode::Wander;
          a.x = kWallMargin;
          a.y = door_y + s.rng.uniform(-kEdgeZoneHalf, kEdgeZoneHalf);
          a.heading = wrap_angle(s.rng.normal(0.0, 0.5));
          a.speed = s.rng.uniform(cfg.wander_speed_min, cfg.wander_speed_max);
        }
        break;
      }
      case AntMode::Approach:
      case AntMode::Duel:
        break;  // handled per duel below
    }
  }

  for (DuelTrack& d : s.duels) {
    if (d.finished) continue;
    if (!d.engaged) {
      Ant& a = s.ants[static_cast<std::size_t>(d.a)];
      Ant& b = s.ants[static_cast<std::size_t>(d.b)];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double dist = std::hypot(dx, dy);
      if (dist <= cfg.duel_spacing) {
        engage(s, d, cfg);
        continue;
      }
      const double stepl = std::min(cfg.approach_speed * h, 0.5 * (dist - cfg.duel_spacing) + 1e-9);
      const double ux = dx / dist, uy = dy / dist;
      a.heading = wrap_angle(std::atan2(uy, ux));
      b.heading = wrap_angle(std::atan2(-uy, -ux));
      a.speed = b.speed = cfg.approach_speed;
      a.x += ux * stepl;
      a.y += uy * stepl;
      b.x -= ux * stepl;
      b.y -= uy * stepl;
      if (std::hypot(b.x - a.x, b.y - a.y) <= cfg.duel_spacing + 1e-6) {
        engage(s, d, cfg);
      } else if (s.time - d.t_paired > kApproachTimeout) {
        d.finished = true;
        release(s, d.a, cfg);
        release(s, d.b, cfg);
      }
      continue;
    }
    if (s.time + h >= d.t_end) {
      d.finished = true;
      release(s, d.a, cfg);
      release(s, d.b, cfg);
    }
  }

  s.time += h;
  for (DuelTrack& d : s.duels)
    if (d.engaged && !d.finished) place_duellists(s, d, cfg);
}

}  // namespace

void validate(const SimConfig& cfg) {
  auto fail = [](const std::string& what) { throw ValidationError("sim config: " + what); };
  if (cfg.n_ants < 2) fail("n_ants must be >= 2");
  if (cfg.arena < 64) fail("arena must be >= 64 px");
  if (cfg.duel_rate < 0.0) fail("duel_rate must be >= 0");
  if (!(cfg.duel_duration_min > 0.0) || cfg.duel_duration_max < cfg.duel_duration_min)
    fail("duel duration range invalid");
  if (!(cfg.frame_dt > 0.0)) fail("frame_dt must be > 0");
  if (!(cfg.substep > 0.0)) fail("substep must be > 0");
  if (cfg.cricket_count < 0) fail("cricket_count must be >= 0");
  if (cfg.wander_speed_min < 0.0 || cfg.wander_speed_max < cfg.wander_speed_min)
    fail("wander speed range invalid");
  if (cfg.jerk_freq_min <= 0.0 || cfg.jerk_freq_max < cfg.jerk_freq_min) fail("jerk frequency range invalid");
  if (cfg.duel_spacing <= 0.0) fail("duel_spacing must be > 0");
}

SimState initial_state(const SimConfig& cfg, Label label) {
  validate(cfg);
  SimState s;
  s.label = label;
  s.rng = Rng(cfg.seed ^ (label == Label::Unstable ? 0x9E3779B97F4A7C15ull : 0ull));
  const double lo = kWallMargin, hi = cfg.arena - kWallMargin;
  for (int i = 0; i < cfg.cricket_count; ++i)
    s.crickets.push_back({s.rng.uniform(lo + kCricketRadius, hi - kCricketRadius),
                          s.rng.uniform(lo + kCricketRadius, hi - kCricketRadius)});
  for (int i = 0; i < cfg.n_ants; ++i) {
    Ant a;
    a.x = s.rng.uniform(lo, hi);
    a.y = s.rng.uniform(lo, hi);
    a.heading = s.rng.uniform(0.0, 2.0 * kPi);
    a.speed = s.rng.uniform(cfg.wander_speed_min, cfg.wander_speed_max);
    s.ants.push_back(a);
  }
  return s;
}

void step(SimState& state, const SimConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw ValidationError("step: dt must be > 0");
  const int n = std::max(1, static_cast<int>(std::ceil(dt / cfg.substep - 1e-9)));
  const double h = dt / n;
  for (int k = 0; k < n; ++k) substep(state, cfg, h);
}

namespace {

std::vector<AntPose> poses_of(const SimState& s) {
  std::vector<AntPose> out;
  out.reserve(s.ants.size());
  for (const Ant& a : s.ants) out.push_back({a.x, a.y, a.heading, a.mode != AntMode::Hidden});
  return out;
}

}  // namespace

GrayImage render_poses(const std::vector<AntPose>& poses, const std::vector<Cricket>& crickets, int arena) {
  // 2x2 supersampling; sub-sample (sx, sy) sits at ((sx + 0.5) / 2, (sy + 0.5) / 2).
  const std::size_t n = static_cast<std::size_t>(arena);
  const std::size_t sn = 2 * n;
  std::vector<double> sub(sn * sn, kBackground);
  auto paint = [&](double x0, double y0, double x1, double y1, auto&& inside, double shade) {
    const long sx0 = std::max(0L, static_cast<long>(std::floor(2.0 * x0)));
    const long sy0 = std::max(0L, static_cast<long>(std::floor(2.0 * y0)));
    const long sx1 = std::min(static_cast<long>(sn) - 1, static_cast<long>(std::ceil(2.0 * x1)));
    const long sy1 = std::min(static_cast<long>(sn) - 1, static_cast<long>(std::ceil(2.0 * y1)));
    for (long sy = sy0; sy <= sy1; ++sy) {
      const double py = (sy + 0.5) * 0.5;
      for (long sx = sx0; sx <= sx1; ++sx) {
        const double px = (sx + 0.5) * 0.5;
        if (inside(px, py)) sub[static_cast<std::size_t>(sy) * sn + static_cast<std::size_t>(sx)] = shade;
      }
    }
  };
  for (const Cricket& c : crickets) {
    const double r = kCricketRadius;
    paint(c.x - r, c.y - r, c.x + r, c.y + r,
          [&](double px, double py) { return (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y) <= r * r; },
          kCricketShade);
  }
  const double seg = kAntHalfLength - kAntRadius;
  for (const AntPose& a : poses) {
    if (!a.visible) continue;
    const double dx = std::cos(a.heading), dy = std::sin(a.heading);
    const double ax = a.x - seg * dx, ay = a.y - seg * dy;
    const double ext = seg + kAntRadius;
    paint(a.x - ext, a.y - ext, a.x + ext, a.y + ext,
          [&](double px, double py) {
            double t = (px - ax) * dx + (py - ay) * dy;
            t = std::clamp(t, 0.0, 2.0 * seg);
            const double qx = ax + t * dx - px, qy = ay + t * dy - py;
            return qx * qx + qy * qy <= kAntRadius * kAntRadius;
          },
          kAntShade);
  }
  GrayImage img(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    const double* r0 = sub.data() + (2 * y) * sn;
    const double* r1 = r0 + sn;
    for (std::size_t x = 0; x < n; ++x)
      img.pixels[y * n + x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
  }
  return img;
}

GrayImage render(const SimState& state, const SimConfig& cfg) {
  return render_poses(poses_of(state), state.crickets, cfg.arena);
}

GrayImage Episode::render_frame(std::size_t i) const {
  return render_poses(frames.at(i), crickets, cfg.arena);
}

Episode generate_episode(const SimConfig& cfg, Label label) {
  validate(cfg);
  if (cfg.episode_len < kMinEpisodeLen)
    throw ValidationError("episode_len must be >= 240 s to yield a flow-pair sample");
  Episode ep;
  ep.cfg = cfg;
  ep.label = label;
  SimState s = initial_state(cfg, label);
  ep.crickets = s.crickets;
  const auto n_steps = static_cast<std::size_t>(std::floor(cfg.episode_len / cfg.frame_dt + 1e-9));
  ep.frames.reserve(n_steps + 1);
  ep.frames.push_back(poses_of(s));
  for (std::size_t k = 1; k <= n_steps; ++k) {
    step(s, cfg, cfg.frame_dt);
    // Pin the clock to the frame grid so timestamps do not drift.
    s.time = static_cast<double>(k) * cfg.frame_dt;
    ep.frames.push_back(poses_of(s));
  }

  const double t_last = static_cast<double>(n_steps) * cfg.frame_dt;
  for (const DuelTrack& d : s.duels) {
    if (!d.engaged) continue;
    DuelEvent ev;
    ev.t_start = d.t_start;
    ev.t_end = std::min(d.t_end, t_last);
    if (!(ev.t_start < ev.t_end)) continue;
    ev.participants = {d.a, d.b};
    const auto k0 = static_cast<std::size_t>(std::ceil(ev.t_start / cfg.frame_dt - 1e-9));
    for (std::size_t k = k0; k <= n_steps && ep.frame_time(k) <= ev.t_end + 1e-9; ++k) {
      BBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
      for (int id : ev.participants) {
        const AntPose& p = ep.frames[k][static_cast<std::size_t>(id)];
        box.x0 = std::min(box.x0, p.x - kAntHalfLength);
        box.y0 = std::min(box.y0, p.y - kAntHalfLength);
        box.x1 = std::max(box.x1, p.x + kAntHalfLength);
        box.y1 = std::max(box.y1, p.y + kAntHalfLength);
      }
      const double lim = cfg.arena;
      box = {std::max(0.0, box.x0), std::max(0.0, box.y0), std::min(lim, box.x1), std::min(lim, box.y1)};
      ev.bbox_per_frame.emplace(k, box);
    }
    ep.events.push_back(std::move(ev));
  }
  return ep;
}

std::string event_to_json(const DuelEvent& event) {
  nlohmann::ordered_json j;
  j["t_start"] = event.t_start;
  j["t_end"] = event.t_end;
  j["ids"] = event.participants;
  nlohmann::ordered_json boxes = nlohmann::ordered_json::object();
  for (const auto& [k, b] : event.bbox_per_frame) boxes[std::to_string(k)] = {b.x0, b.y0, b.x1, b.y1};
  j["bbox"] = std::move(boxes);
  return j.dump();
}

DuelEvent event_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    DuelEvent ev;
    ev.t_start = j.at("t_start").get<double>();
    ev.t_end = j.at("t_end").get<double>();
    ev.participants = j.at("ids").get<std::vector<int>>();
    for (const auto& [k, v] : j.at("bbox").items()) {
      const auto c = v.get<std::vector<double>>();
      if (c.size() != 4) throw FormatError("bbox must have 4 coordinates");
      ev.bbox_per_frame.emplace(std::stoul(k), BBox{c[0], c[1], c[2], c[3]});
    }
    return ev;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("events.jsonl: ") + e.what());
  }
}

}  // namespace swarmcam::sim
