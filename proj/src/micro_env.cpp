#include "dva/micro_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dva/image_io.hpp"

namespace dva {

std::string_view to_string(Scenario s) {
  return s == Scenario::kBasicShooting ? "basic" : "health";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "basic") return Scenario::kBasicShooting;
  if (s == "health") return Scenario::kHealthGathering;
  throw std::invalid_argument("unknown scenario '" + std::string(s) +
                              "' (expected basic|health)");
}

ScenarioConfig ScenarioConfig::basic() {
  ScenarioConfig c;
  c.kind = Scenario::kBasicShooting;
  c.room_width = 10.0;
  c.room_depth = 6.0;
  c.frame_limit = 300;
  return c;
}

ScenarioConfig ScenarioConfig::health() {
  ScenarioConfig c;
  c.kind = Scenario::kHealthGathering;
  c.room_width = 16.0;
  c.room_depth = 16.0;
  c.move_speed = 0.25;
  c.frame_limit = 2100;
  return c;
}

void ScenarioConfig::validate() const {
  if (!(room_width > 2 * agent_radius) || !(room_depth > 2 * agent_radius)) {
    throw std::invalid_argument("room is too small for the agent");
  }
  if (skip_count < 1) throw std::invalid_argument("skip_count must be >= 1");
  if (frame_limit < 1) throw std::invalid_argument("frame_limit must be positive");
  if (!(fov > 0 && fov < std::numbers::pi)) throw std::invalid_argument("fov out of range");
  if (move_speed < 0 || turn_rate < 0 || aim_tolerance < 0) {
    throw std::invalid_argument("speeds and tolerances must be non-negative");
  }
  if (kind == Scenario::kHealthGathering) {
    if (!(health_decay > 0)) throw std::invalid_argument("health_decay must be positive");
    if (medkit_count < 0) throw std::invalid_argument("medkit_count must be >= 0");
  }
}

namespace {

constexpr double kEyeHeight = 0.5;
constexpr double kWallHeight = 1.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Heading {
  double fx, fy;  // forward
  double rx, ry;  // right
};

double snap(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

Heading heading_of(double angle) {
  const double c = snap(std::cos(angle)), s = snap(std::sin(angle));
  return {c, s, s, -c};
}

Vec2 random_point(Rng& rng, const ScenarioConfig& c, double margin) {
  return {rng.uniform(margin, c.room_width - margin),
          rng.uniform(margin, c.room_depth - margin)};
}

struct Camera {
  Pose pose;
  Heading dir;
  double focal;
  double half;
};

Camera camera_of(const WorldState& s) {
  const double half = kFrameSize / 2.0;
  return {s.agent, heading_of(s.agent.heading), half / std::tan(s.config.fov / 2.0), half};
}

struct Sprite {
  Vec2 pos;
  double width, height;
  bool medkit;
};

struct Projection {
  double depth;
  double cx, half_w, top, bottom;
};

std::optional<Projection> project(const Camera& cam, const Sprite& sp) {
  const double dx = sp.pos.x - cam.pose.x, dy = sp.pos.y - cam.pose.y;
  const double depth = dx * cam.dir.fx + dy * cam.dir.fy;
  if (depth <= 0.05) return std::nullopt;
  const double lateral = dx * cam.dir.rx + dy * cam.dir.ry;
  Projection p;
  p.depth = depth;
  p.cx = cam.half + cam.focal * lateral / depth;
  p.half_w = cam.focal * (sp.width / 2.0) / depth;
  p.top = cam.half - cam.focal * (sp.height - kEyeHeight) / depth;
  p.bottom = cam.half + cam.focal * kEyeHeight / depth;
  return p;
}

/// Perpendicular distance from the camera to the room boundary for a column
/// ray, plus whether the hit wall is perpendicular to x.
std::pair<double, bool> cast_column(const Camera& cam, const ScenarioConfig& c, int col) {
  const double s = (col + 0.5 - cam.half) / cam.focal;
  const double dx = cam.dir.fx + s * cam.dir.rx;
  const double dy = cam.dir.fy + s * cam.dir.ry;
  double tx = INFINITY, ty = INFINITY;
  if (dx > 0) tx = (c.room_width - cam.pose.x) / dx;
  if (dx < 0) tx = -cam.pose.x / dx;
  if (dy > 0) ty = (c.room_depth - cam.pose.y) / dy;
  if (dy < 0) ty = -cam.pose.y / dy;
  return tx < ty ? std::pair{tx, true} : std::pair{ty, false};
}

std::vector<Sprite> sprites_of(const WorldState& s) {
  std::vector<Sprite> out;
  const auto& c = s.config;
  if (c.kind == Scenario::kBasicShooting) {
    if (s.monster_alive) out.push_back({s.monster, c.monster_width, c.monster_height, false});
  } else {
    for (const auto& m : s.medkits) out.push_back({m, c.medkit_width, c.medkit_height, true});
  }
  return out;
}

void clamp_agent(WorldState& s) {
  const auto& c = s.config;
  s.agent.x = std::clamp(s.agent.x, c.agent_radius, c.room_width - c.agent_radius);
  s.agent.y = std::clamp(s.agent.y, c.agent_radius, c.room_depth - c.agent_radius);
}

bool monster_in_sights(const WorldState& s) {
  if (!s.monster_alive) return false;
  const Heading h = heading_of(s.agent.heading);
  const double dx = s.monster.x - s.agent.x, dy = s.monster.y - s.agent.y;
  const double depth = dx * h.fx + dy * h.fy;
  const double lateral = dx * h.rx + dy * h.ry;
  return depth > 0 && std::abs(std::atan2(lateral, depth)) <= s.config.aim_tolerance;
}

}  // namespace

ResetResult reset(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  ResetResult r;
  WorldState& s = r.state;
  s.config = config;
  s.rng = Rng(derive_seed(seed, streams::kEnv));
  if (config.kind == Scenario::kBasicShooting) {
    s.agent = {config.room_width / 2.0, config.agent_radius, std::numbers::pi / 2.0};
    s.monster = {s.rng.uniform(config.agent_radius, config.room_width - config.agent_radius),
                 config.room_depth - config.agent_radius};
    s.monster_alive = true;
  } else {
    const Vec2 p = random_point(s.rng, config, 1.0);
    s.agent = {p.x, p.y, s.rng.uniform(0.0, kTwoPi)};
    s.monster_alive = false;
    for (int i = 0; i < config.medkit_count; ++i) {
      s.medkits.push_back(random_point(s.rng, config, 0.5));
    }
    s.health = 100.0;
  }
  r.frame = render(s);
  return r;
}

StepResult step(WorldState& s, int action) {
  if (s.done) throw std::logic_error("step() called after the episode ended");
  if (action < 0 || action >= s.config.n_actions()) {
    throw std::invalid_argument("invalid action index " + std::to_string(action));
  }
  const auto& c = s.config;
  StepResult res;
  const bool basic = c.kind == Scenario::kBasicShooting;
  if (basic) res.reward -= 1.0;

  for (int k = 0; k < c.skip_count; ++k) {
    if (basic) {
      if (action == actions::kShoot) {
        if (monster_in_sights(s)) {
          s.monster_alive = false;
          res.info.killed = true;
          res.reward += 100.0;
          s.done = true;
        }
      } else {
        s.agent.x += (action == actions::kMoveRight ? 1.0 : -1.0) * c.move_speed;
        clamp_agent(s);
      }
    } else {
      if (action == actions::kForward) {
        const Heading h = heading_of(s.agent.heading);
        s.agent.x += h.fx * c.move_speed;
        s.agent.y += h.fy * c.move_speed;
        clamp_agent(s);
      } else {
        double a = s.agent.heading + (action == actions::kTurnLeft ? 1.0 : -1.0) * c.turn_rate;
        a = std::fmod(a, kTwoPi);
        if (a < 0) a += kTwoPi;
        s.agent.heading = a;
      }
      for (auto& kit : s.medkits) {
        if (std::hypot(kit.x - s.agent.x, kit.y - s.agent.y) <= c.pickup_radius) {
          s.health = std::min(100.0, s.health + c.medkit_heal);
          res.reward += 5.0;
          ++res.info.medkits_collected;
          ++s.medkits_collected;
          kit = random_point(s.rng, c, 0.5);
        }
      }
      s.health -= c.health_decay;
      if (s.health <= 1e-9) {
        s.health = 0.0;
        res.info.died = true;
        s.done = true;
      }
    }
    ++s.tick;
    ++res.info.ticks;
    if (s.tick >= c.frame_limit) {
      res.info.timeout = !s.done;
      s.done = true;
    }
    if (s.done) break;
  }
  if (!basic && !res.info.died) res.reward += 1.0;
  ++s.decisions;
  res.done = s.done;
  res.info.health = s.health;
  res.frame = render(s);
  return res;
}

Frame render(const WorldState& s) {
  const auto& c = s.config;
  const Camera cam = camera_of(s);
  const int n = static_cast<int>(kFrameSize);
  Frame frame({kFrameSize, kFrameSize});
  std::vector<double> zbuf(kFrameSize);
  const bool health = c.kind == Scenario::kHealthGathering;

  for (int col = 0; col < n; ++col) {
    const auto [t, x_wall] = cast_column(cam, c, col);
    zbuf[col] = t;
    const double top = cam.half - cam.focal * (kWallHeight - kEyeHeight) / t;
    const double bottom = cam.half + cam.focal * kEyeHeight / t;
    const double wall = 0.7 / (1.0 + 0.12 * t) * (x_wall ? 0.8 : 1.0);
    for (int row = 0; row < n; ++row) {
      const double yc = row + 0.5;
      double v;
      if (yc < top) {
        v = 0.30 - 0.20 * (yc / cam.half);
      } else if (yc >= bottom) {
        const double u = (yc - cam.half) / cam.half;
        v = health ? 0.22 + 0.18 * u : 0.10 + 0.25 * u;
      } else {
        v = wall;
      }
      frame.at(row, col) = static_cast<float>(v);
    }
  }

  struct Placed {
    Sprite sprite;
    Projection proj;
  };
  std::vector<Placed> placed;
  for (const auto& sp : sprites_of(s)) {
    if (auto p = project(cam, sp)) placed.push_back({sp, *p});
  }
  std::stable_sort(placed.begin(), placed.end(),
                   [](const Placed& a, const Placed& b) { return a.proj.depth > b.proj.depth; });
  for (const auto& [sp, p] : placed) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(p.cx - p.half_w - 0.5)));
    const int x1 = std::min(n, static_cast<int>(std::ceil(p.cx + p.half_w - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(p.top - 0.5)));
    const int y1 = std::min(n, static_cast<int>(std::ceil(p.bottom - 0.5)));
    for (int col = x0; col < x1; ++col) {
      if (p.depth >= zbuf[col]) continue;
      const double u = (col + 0.5 - (p.cx - p.half_w)) / (2 * p.half_w);
      for (int row = y0; row < y1; ++row) {
        double v = 1.0;
        if (sp.medkit) {
          const double w = (row + 0.5 - p.top) / (p.bottom - p.top);
          const bool cross = std::abs(u - 0.5) < 0.15 || std::abs(w - 0.5) < 0.15;
          v = cross ? 0.55 : 0.92;
        }
        frame.at(row, col) = static_cast<float>(v);
      }
    }
  }
  for (float& v : frame.data()) v = std::clamp(v, 0.0f, 1.0f);
  return frame;
}

std::optional<ScreenBox> monster_screen_box(const WorldState& s) {
  if (s.config.kind != Scenario::kBasicShooting || !s.monster_alive) return std::nullopt;
  const Camera cam = camera_of(s);
  const auto& c = s.config;
  const auto p = project(cam, {s.monster, c.monster_width, c.monster_height, false});
  if (!p) return std::nullopt;
  const int n = static_cast<int>(kFrameSize);
  ScreenBox box;
  box.x0 = std::max(0, static_cast<int>(std::ceil(p->cx - p->half_w - 0.5)));
  box.x1 = std::min(n, static_cast<int>(std::ceil(p->cx + p->half_w - 0.5)));
  box.y0 = std::max(0, static_cast<int>(std::ceil(p->top - 0.5)));
  box.y1 = std::min(n, static_cast<int>(std::ceil(p->bottom - 0.5)));
  // shrink to unoccluded columns
  while (box.x0 < box.x1 && p->depth >= cast_column(cam, c, box.x0).first) ++box.x0;
  while (box.x1 > box.x0 && p->depth >= cast_column(cam, c, box.x1 - 1).first) --box.x1;
  if (box.empty()) return std::nullopt;
  return box;
}

EpisodeRecorder::EpisodeRecorder(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  csv_.open(dir_ / "episode.csv");
  if (!csv_) throw std::runtime_error("cannot write episode log in " + dir_.string());
  csv_ << "tick,action,reward,done\n";
}

void EpisodeRecorder::record(int tick, int action, double reward, bool done,
                             const Frame& frame) {
  csv_ << tick << ',' << action << ',' << reward << ',' << (done ? 1 : 0) << '\n';
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05d.pgm", index_++);
  write_pgm(dir_ / name, to_gray_image(frame));
}

}  // namespace dva
