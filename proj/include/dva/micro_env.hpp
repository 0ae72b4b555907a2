#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dva/random.hpp"
#include "dva/tensor.hpp"

namespace dva {

/// 84x84 grayscale frame, values in [0,1].
using Frame = Tensor<float>;
inline constexpr std::size_t kFrameSize = 84;

enum class Scenario { kBasicShooting, kHealthGathering };

std::string_view to_string(Scenario s);
/// Accepts "basic" and "health".
Scenario parse_scenario(std::string_view s);

struct ScenarioConfig {
  Scenario kind = Scenario::kBasicShooting;
  double room_width = 10.0;  // x extent
  double room_depth = 6.0;   // y extent
  double move_speed = 0.1;   // units per tick
  double turn_rate = 0.1;    // radians per tick
  int skip_count = 4;
  double fov = 1.5707963267948966;
  double agent_radius = 0.5;
  // basic shooting
  double aim_tolerance = 0.05;
  double monster_width = 0.5;
  double monster_height = 0.8;
  // health gathering
  double health_decay = 0.4;
  double medkit_heal = 25.0;
  int medkit_count = 8;
  double medkit_width = 0.35;
  double medkit_height = 0.35;
  double pickup_radius = 0.6;

  int frame_limit = 300;

  static ScenarioConfig basic();
  static ScenarioConfig health();
  static ScenarioConfig for_scenario(Scenario s) {
    return s == Scenario::kBasicShooting ? basic() : health();
  }
  int n_actions() const { return 3; }
  int decision_limit() const { return (frame_limit + skip_count - 1) / skip_count; }
  /// Throws std::invalid_argument on degenerate settings.
  void validate() const;
};

namespace actions {
// basic shooting
inline constexpr int kMoveLeft = 0;
inline constexpr int kMoveRight = 1;
inline constexpr int kShoot = 2;
// health gathering
inline constexpr int kTurnLeft = 0;
inline constexpr int kTurnRight = 1;
inline constexpr int kForward = 2;
}  // namespace actions

struct Vec2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Pose {
  double x = 0;
  double y = 0;
  double heading = 0;  // radians, 0 = +x, counter-clockwise
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct WorldState {
  ScenarioConfig config;
  Pose agent;
  Vec2 monster;
  bool monster_alive = true;
  std::vector<Vec2> medkits;
  double health = 100.0;
  int tick = 0;
  int decisions = 0;
  bool done = false;
  int medkits_collected = 0;
  Rng rng;

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.agent == b.agent && a.monster == b.monster &&
           a.monster_alive == b.monster_alive && a.medkits == b.medkits &&
           a.health == b.health && a.tick == b.tick && a.decisions == b.decisions &&
           a.done == b.done && a.medkits_collected == b.medkits_collected &&
           a.rng == b.rng;
  }
};

struct StepInfo {
  bool killed = false;
  int medkits_collected = 0;  // during this decision
  double health = 0;
  int ticks = 0;  // engine ticks executed during this decision
  bool timeout = false;
  bool died = false;
};

struct StepResult {
  Frame frame;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

/// Screen-space rectangle [x0,x1) x [y0,y1) in frame pixels.
struct ScreenBox {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct ResetResult {
  WorldState state;
  Frame frame;
};

ResetResult reset(const ScenarioConfig& config, std::uint64_t seed);

/// Repeats `action` for skip_count ticks. Throws std::logic_error after the
/// episode is over and std::invalid_argument for an unknown action.
StepResult step(WorldState& state, int action);

Frame render(const WorldState& state);

/// Visible, unoccluded screen extent of the live monster, if any.
std::optional<ScreenBox> monster_screen_box(const WorldState& state);

/// Convenience wrapper owning the world state.
class MicroEnv {
 public:
  explicit MicroEnv(ScenarioConfig config) : config_(std::move(config)) {
    config_.validate();
  }
  Frame reset(std::uint64_t seed) {
    auto r = dva::reset(config_, seed);
    state_ = std::move(r.state);
    return std::move(r.frame);
  }
  StepResult step(int action) { return dva::step(state_, action); }
  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const ScenarioConfig& config() const { return config_; }

 private:
  ScenarioConfig config_;
  WorldState state_;
};

/// Debug recorder: one PGM per decision plus a CSV of (tick,action,reward,done).
class EpisodeRecorder {
 public:
  explicit EpisodeRecorder(std::filesystem::path dir);
  void record(int tick, int action, double reward, bool done, const Frame& frame);

 private:
  std::filesystem::path dir_;
  std::ofstream csv_;
  int index_ = 0;
};

}  // namespace dva
