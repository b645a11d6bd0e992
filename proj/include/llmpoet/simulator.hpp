#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/error.hpp"
#include "llmpoet/grid.hpp"

namespace llmpoet::sim {

/// Physics and episode constants. `dt` is the control period; each control
/// step integrates `substeps` physics steps of dt / substeps.
struct SimConfig {
  double dt = 1.0 / 120.0;
  int substeps = 4;
  int horizon = 600;  // control steps per episode
  double cell_size = 0.1;
  double voxel_mass = 2.0;  // kg, split evenly over the voxel's corners
  double stiffness_rigid = 5e4;
  double stiffness_soft = 5e3;
  double stiffness_actuator = 1e4;
  double damping_ratio = 0.2;
  double contact_stiffness = 1e5;
  double contact_damping_ratio = 0.5;
  double friction = 0.8;
  double gravity = 9.81;
  double actuation_range = 0.3;  // rest length scales by (1 + range * a)
  double blowup_limit = 1e6;     // |position| in meters
  int spawn_width = grid::kDefaultSpawnWidth;
  // Observation normalization.
  double obs_position_scale = 0.1;
  double obs_velocity_scale = 1.0;
  double obs_height_scale = 1.0;

  double physics_dt() const { return dt / substeps; }
  void validate() const;
};

nlohmann::json to_json(const SimConfig& cfg);
/// Overlays keys from `j`; unknown keys raise ConfigError.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

enum class SimErrc { SpawnBlocked, InvalidTerrain, InvalidMorphology, NumericalBlowup, BadAction };

class SimError : public Error {
 public:
  SimError(SimErrc code, std::string message) : Error(std::move(message)), code_(code) {}
  SimErrc code() const { return code_; }

 private:
  SimErrc code_;
};

struct RobotMorphology {
  grid::VoxelGrid body{1, 1};
  int spawn_offset_x = 1;  // cells from the left edge of the terrain
  int spawn_offset_y = 0;  // extra cells of drop height

  /// 5x4: rigid top row, two soft rows, alternating H/V actuators at the bottom.
  static RobotMorphology default_walker();
  static RobotMorphology from_file(const std::string& path);

  /// Empty when the body is one 4-connected component with >= 1 actuator.
  std::vector<std::string> violations() const;
  int actuator_count() const;
  /// Lattice nodes of the built body (voxel corners, shared ones once).
  std::size_t node_count() const;
};

struct Spring {
  int a;
  int b;
  double rest_x;  // undeformed rest vector, meters
  double rest_y;
  double stiffness;
  double damping;
  int actuator;  // index into the action vector, -1 when passive
  bool horizontal_actuation;
};

struct SimState {
  std::vector<Vec2> pos;
  std::vector<Vec2> vel;
  std::vector<double> mass;
  std::vector<Spring> springs;
  std::shared_ptr<const grid::VoxelGrid> terrain;  // static collision cells
  double time = 0.0;
  double initial_com_x = 0.0;
  int actuator_count = 0;

  std::size_t node_count() const { return pos.size(); }
};

SimState build_world(const grid::VoxelGrid& terrain, const RobotMorphology& morph,
                     const SimConfig& cfg = {});

/// One semi-implicit Euler step of length `dt`. Actions are clamped to
/// [-1, 1]. Throws SimError{NumericalBlowup} on non-finite or runaway state.
void step_inplace(SimState& state, std::span<const double> action, double dt,
                  const SimConfig& cfg = {});

inline SimState step(SimState state, std::span<const double> action, double dt,
                     const SimConfig& cfg = {}) {
  step_inplace(state, action, dt, cfg);
  return state;
}

Vec2 center_of_mass(const SimState& state);

/// Per node (x, y) relative to the COM, per node (vx, vy), COM height, time
/// fraction: 4 * nodes + 2 entries.
std::vector<double> observe(const SimState& state, const SimConfig& cfg = {});

inline std::size_t observation_size(std::size_t nodes) { return 4 * nodes + 2; }

/// COM x displacement since build_world, meters.
double score(const SimState& state);

/// Kinetic + spring + gravitational energy (rest lengths at zero actuation).
double mechanical_energy(const SimState& state, const SimConfig& cfg = {});

/// Lowest point of the terrain bounding box minus a margin; a COM below this
/// ends the episode.
bool fell_off(const SimState& state, const SimConfig& cfg = {});

}  // namespace llmpoet::sim
