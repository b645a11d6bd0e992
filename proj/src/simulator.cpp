#include "llmpoet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

#include <fmt/format.h>

namespace llmpoet::sim {

using grid::Voxel;

void SimConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(fmt::format("sim.{} must be > 0", name));
  };
  positive(dt, "dt");
  positive(cell_size, "cell_size");
  positive(voxel_mass, "voxel_mass");
  positive(stiffness_rigid, "stiffness_rigid");
  positive(stiffness_soft, "stiffness_soft");
  positive(stiffness_actuator, "stiffness_actuator");
  positive(contact_stiffness, "contact_stiffness");
  positive(blowup_limit, "blowup_limit");
  positive(obs_position_scale, "obs_position_scale");
  positive(obs_velocity_scale, "obs_velocity_scale");
  positive(obs_height_scale, "obs_height_scale");
  if (substeps < 1) throw ConfigError("sim.substeps must be >= 1");
  if (horizon < 1) throw ConfigError("sim.horizon must be >= 1");
  if (spawn_width < 1) throw ConfigError("sim.spawn_width must be >= 1");
  if (damping_ratio < 0 || contact_damping_ratio < 0 || friction < 0 || gravity < 0)
    throw ConfigError("sim damping, friction and gravity must be >= 0");
  if (actuation_range < 0 || actuation_range >= 1)
    throw ConfigError("sim.actuation_range must be in [0, 1)");
}

#define LLMPOET_SIM_FIELDS(X)                                                              \
  X(dt) X(substeps) X(horizon) X(cell_size) X(voxel_mass) X(stiffness_rigid)              \
  X(stiffness_soft) X(stiffness_actuator) X(damping_ratio) X(contact_stiffness)           \
  X(contact_damping_ratio) X(friction) X(gravity) X(actuation_range) X(blowup_limit)      \
  X(spawn_width) X(obs_position_scale) X(obs_velocity_scale) X(obs_height_scale)

nlohmann::json to_json(const SimConfig& cfg) {
  nlohmann::json j;
#define X(name) j[#name] = cfg.name;
  LLMPOET_SIM_FIELDS(X)
#undef X
  return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig cfg) {
  if (!j.is_object()) throw ConfigError("[sim] must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    bool known = false;
    try {
#define X(name)                                           \
  if (key == #name) {                                     \
    cfg.name = it.value().get<decltype(cfg.name)>();      \
    known = true;                                         \
  }
      LLMPOET_SIM_FIELDS(X)
#undef X
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("sim.{}: {}", key, e.what()));
    }
    if (!known) throw ConfigError("unknown key sim." + key);
  }
  cfg.validate();
  return cfg;
}

RobotMorphology RobotMorphology::default_walker() {
  RobotMorphology m;
  m.body = grid::parse_grid("HHHHH\nSSSSS\nSSSSS\nVOVOV");
  return m;
}

RobotMorphology RobotMorphology::from_file(const std::string& path) {
  RobotMorphology m;
  m.body = grid::read_grid_file(path);
  return m;
}

int RobotMorphology::actuator_count() const {
  return static_cast<int>(body.count(Voxel::ActuatorH) + body.count(Voxel::ActuatorV));
}

std::size_t RobotMorphology::node_count() const {
  const int w = body.width(), h = body.height();
  std::vector<char> corner(static_cast<std::size_t>((w + 1) * (h + 1)), 0);
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x) {
      if (body.at(x, r) == Voxel::Empty) continue;
      for (int dr = 0; dr < 2; ++dr)
        for (int dx = 0; dx < 2; ++dx) corner[static_cast<std::size_t>((r + dr) * (w + 1) + x + dx)] = 1;
    }
  return static_cast<std::size_t>(std::count(corner.begin(), corner.end(), 1));
}

std::vector<std::string> RobotMorphology::violations() const {
  std::vector<std::string> out;
  const int w = body.width(), h = body.height();
  std::vector<char> seen(static_cast<std::size_t>(w * h), 0);
  int filled = 0, components = 0;
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x) {
      if (body.at(x, r) == Voxel::Empty) continue;
      ++filled;
      if (seen[static_cast<std::size_t>(r * w + x)]) continue;
      ++components;
      std::queue<std::pair<int, int>> q;
      q.emplace(x, r);
      seen[static_cast<std::size_t>(r * w + x)] = 1;
      while (!q.empty()) {
        auto [cx, cr] = q.front();
        q.pop();
        const int dx[] = {1, -1, 0, 0}, dr[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          int nx = cx + dx[k], nr = cr + dr[k];
          if (nx < 0 || nr < 0 || nx >= w || nr >= h) continue;
          auto idx = static_cast<std::size_t>(nr * w + nx);
          if (seen[idx] || body.at(nx, nr) == Voxel::Empty) continue;
          seen[idx] = 1;
          q.emplace(nx, nr);
        }
      }
    }
  if (filled == 0) out.push_back("body has no voxels");
  if (components > 1) out.push_back("body is not 4-connected");
  if (actuator_count() == 0) out.push_back("body has no actuator");
  return out;
}

namespace {

double voxel_stiffness(Voxel v, const SimConfig& cfg) {
  switch (v) {
    case Voxel::Rigid: return cfg.stiffness_rigid;
    case Voxel::Soft: return cfg.stiffness_soft;
    default: return cfg.stiffness_actuator;
  }
}

struct SpringDraft {
  int a, b;
  double rest_x, rest_y;
  double stiffness_sum = 0.0;
  int contributors = 0;
  int actuator = -1;
  bool horizontal = false;
};

}  // namespace

SimState build_world(const grid::VoxelGrid& terrain, const RobotMorphology& morph,
                     const SimConfig& cfg) {
  cfg.validate();
  auto issues = grid::validate_terrain(terrain, cfg.spawn_width);
  if (!issues.empty())
    throw SimError(SimErrc::InvalidTerrain,
                   fmt::format("terrain is not simulable: {}", grid::issue_name(issues.front())));
  auto bad = morph.violations();
  if (!bad.empty()) throw SimError(SimErrc::InvalidMorphology, "invalid morphology: " + bad.front());

  const auto& body = morph.body;
  const int bw = body.width(), bh = body.height();
  const double s = cfg.cell_size;
  const int span = std::min(cfg.spawn_width, terrain.width());
  if (morph.spawn_offset_x < 0 || morph.spawn_offset_x + bw > span)
    throw SimError(SimErrc::SpawnBlocked,
                   fmt::format("a {}-cell body at offset {} does not fit the {}-cell spawn span", bw,
                               morph.spawn_offset_x, span));

  double ground = 0.0;
  for (int x = 0; x < span; ++x)
    for (int r = 0; r < terrain.height(); ++r)
      if (terrain.at(x, r) != Voxel::Empty) {
        ground = std::max(ground, (terrain.height() - r) * s);
        break;
      }

  int lowest_row = 0;  // lowest lattice row (counted from the top) touched by a voxel
  for (int r = 0; r < bh; ++r)
    for (int x = 0; x < bw; ++x)
      if (body.at(x, r) != Voxel::Empty) lowest_row = std::max(lowest_row, r + 1);

  const double x0 = morph.spawn_offset_x * s;
  const double y_low = ground + s + morph.spawn_offset_y * s;

  SimState state;
  state.terrain = std::make_shared<const grid::VoxelGrid>(terrain);
  std::map<std::pair<int, int>, int> node_of;
  auto node = [&](int cx, int cr) {
    auto [it, inserted] = node_of.emplace(std::make_pair(cx, cr), static_cast<int>(state.pos.size()));
    if (inserted) {
      state.pos.push_back({x0 + cx * s, y_low + (lowest_row - cr) * s});
      state.vel.push_back({});
      state.mass.push_back(0.0);
    }
    return it->second;
  };

  std::map<std::pair<int, int>, SpringDraft> drafts;
  std::vector<std::pair<int, int>> draft_order;
  int actuator = 0;
  for (int r = 0; r < bh; ++r)
    for (int x = 0; x < bw; ++x) {
      const Voxel v = body.at(x, r);
      if (v == Voxel::Empty) continue;
      const int tl = node(x, r), tr = node(x + 1, r), bl = node(x, r + 1), br = node(x + 1, r + 1);
      for (int n : {tl, tr, bl, br}) state.mass[static_cast<std::size_t>(n)] += cfg.voxel_mass / 4.0;

      const int act = grid::is_actuator(v) ? actuator++ : -1;
      const bool act_h = v == Voxel::ActuatorH;
      struct Edge {
        int a, b;
        double rx, ry;
        bool horizontal, vertical;
      };
      const Edge edges[] = {
          {tl, tr, s, 0, true, false},  {bl, br, s, 0, true, false},
          {tl, bl, 0, -s, false, true}, {tr, br, 0, -s, false, true},
          {tl, br, s, -s, false, false}, {tr, bl, -s, -s, false, false},
      };
      for (const auto& e : edges) {
        auto key = std::minmax(e.a, e.b);
        auto [it, inserted] = drafts.try_emplace(key);
        auto& d = it->second;
        if (inserted) {
          d.a = e.a;
          d.b = e.b;
          d.rest_x = e.rx;
          d.rest_y = e.ry;
          draft_order.push_back(key);
        }
        d.stiffness_sum += voxel_stiffness(v, cfg);
        ++d.contributors;
        const bool driven = act >= 0 && (act_h ? !e.vertical : !e.horizontal);
        if (driven && d.actuator < 0) {
          d.actuator = act;
          d.horizontal = act_h;
        }
      }
    }
  state.actuator_count = actuator;

  for (const auto& key : draft_order) {
    const auto& d = drafts.at(key);
    const double k = d.stiffness_sum / d.contributors;
    const double ma = state.mass[static_cast<std::size_t>(d.a)];
    const double mb = state.mass[static_cast<std::size_t>(d.b)];
    const double reduced = ma * mb / (ma + mb);
    state.springs.push_back({d.a, d.b, d.rest_x, d.rest_y, k,
                             2.0 * cfg.damping_ratio * std::sqrt(k * reduced), d.actuator,
                             d.horizontal});
  }
  state.initial_com_x = center_of_mass(state).x;
  return state;
}

namespace {

bool solid(const grid::VoxelGrid& t, int cx, int cy) {
  if (cx < 0 || cy < 0 || cx >= t.width() || cy >= t.height()) return false;
  return t.at(cx, t.height() - 1 - cy) != Voxel::Empty;
}

double actuated_rest(const Spring& sp, std::span<const double> action, double range) {
  if (sp.actuator < 0) return std::hypot(sp.rest_x, sp.rest_y);
  const double a = std::clamp(action[static_cast<std::size_t>(sp.actuator)], -1.0, 1.0);
  const double scale = 1.0 + range * a;
  return sp.horizontal_actuation ? std::hypot(sp.rest_x * scale, sp.rest_y)
                       : std::hypot(sp.rest_x, sp.rest_y * scale);
}

}  // namespace

void step_inplace(SimState& state, std::span<const double> action, double dt,
                  const SimConfig& cfg) {
  if (action.size() != static_cast<std::size_t>(state.actuator_count))
    throw SimError(SimErrc::BadAction, fmt::format("action has {} entries, expected {}",
                                                   action.size(), state.actuator_count));
  const std::size_t n = state.node_count();
  std::vector<Vec2> force(n);
  for (std::size_t i = 0; i < n; ++i) force[i].y = -state.mass[i] * cfg.gravity;

  for (const auto& sp : state.springs) {
    const auto a = static_cast<std::size_t>(sp.a), b = static_cast<std::size_t>(sp.b);
    const double dx = state.pos[b].x - state.pos[a].x;
    const double dy = state.pos[b].y - state.pos[a].y;
    const double len = std::hypot(dx, dy);
    if (len < 1e-12) continue;
    const double ux = dx / len, uy = dy / len;
    const double rel_v = (state.vel[b].x - state.vel[a].x) * ux + (state.vel[b].y - state.vel[a].y) * uy;
    const double f = sp.stiffness * (len - actuated_rest(sp, action, cfg.actuation_range)) +
                     sp.damping * rel_v;
    force[a].x += f * ux;
    force[a].y += f * uy;
    force[b].x -= f * ux;
    force[b].y -= f * uy;
  }

  const auto& terrain = *state.terrain;
  const double s = cfg.cell_size;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = state.pos[i];
    const int cx = static_cast<int>(std::floor(p.x / s));
    const int cy = static_cast<int>(std::floor(p.y / s));
    if (!solid(terrain, cx, cy)) continue;

    const double u = p.x - cx * s, v = p.y - cy * s;
    double depth = s - v, nx = 0.0, ny = 1.0;  // buried nodes are pushed up
    bool exposed = false;
    auto consider = [&](bool open, double d, double ax, double ay) {
      if (open && (!exposed || d < depth)) {
        depth = d;
        nx = ax;
        ny = ay;
        exposed = true;
      }
    };
    consider(!solid(terrain, cx, cy + 1), s - v, 0.0, 1.0);
    consider(!solid(terrain, cx - 1, cy), u, -1.0, 0.0);
    consider(!solid(terrain, cx + 1, cy), s - u, 1.0, 0.0);
    consider(!solid(terrain, cx, cy - 1), v, 0.0, -1.0);

    const double m = state.mass[i];
    const auto& vel = state.vel[i];
    const double vn = vel.x * nx + vel.y * ny;
    const double c = 2.0 * cfg.contact_damping_ratio * std::sqrt(cfg.contact_stiffness * m);
    const double fn = std::max(0.0, cfg.contact_stiffness * depth - c * vn);
    force[i].x += fn * nx;
    force[i].y += fn * ny;

    const double tx = vel.x - vn * nx, ty = vel.y - vn * ny;
    const double vt = std::hypot(tx, ty);
    if (vt > 0.0) {
      // Kinetic friction, capped so it cannot reverse the tangential velocity.
      const double ft = std::min(cfg.friction * fn, m * vt / dt);
      force[i].x -= ft * tx / vt;
      force[i].y -= ft * ty / vt;
    }
  }

  bool finite = true;
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = state.vel[i];
    auto& p = state.pos[i];
    v.x += force[i].x / state.mass[i] * dt;
    v.y += force[i].y / state.mass[i] * dt;
    p.x += v.x * dt;
    p.y += v.y * dt;
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(v.x) || !std::isfinite(v.y) ||
        std::abs(p.x) > cfg.blowup_limit || std::abs(p.y) > cfg.blowup_limit)
      finite = false;
  }
  state.time += dt;
  if (!finite) throw SimError(SimErrc::NumericalBlowup, "simulation diverged");
}

Vec2 center_of_mass(const SimState& state) {
  double mx = 0.0, my = 0.0, m = 0.0;
  for (std::size_t i = 0; i < state.node_count(); ++i) {
    mx += state.mass[i] * state.pos[i].x;
    my += state.mass[i] * state.pos[i].y;
    m += state.mass[i];
  }
  return {mx / m, my / m};
}

std::vector<double> observe(const SimState& state, const SimConfig& cfg) {
  const auto com = center_of_mass(state);
  std::vector<double> obs;
  obs.reserve(observation_size(state.node_count()));
  for (const auto& p : state.pos) {
    obs.push_back((p.x - com.x) / cfg.obs_position_scale);
    obs.push_back((p.y - com.y) / cfg.obs_position_scale);
  }
  for (const auto& v : state.vel) {
    obs.push_back(v.x / cfg.obs_velocity_scale);
    obs.push_back(v.y / cfg.obs_velocity_scale);
  }
  obs.push_back(com.y / cfg.obs_height_scale);
  obs.push_back(state.time / (cfg.horizon * cfg.dt));
  return obs;
}

double score(const SimState& state) { return center_of_mass(state).x - state.initial_com_x; }

double mechanical_energy(const SimState& state, const SimConfig& cfg) {
  double e = 0.0;
  for (std::size_t i = 0; i < state.node_count(); ++i) {
    const auto& v = state.vel[i];
    e += 0.5 * state.mass[i] * (v.x * v.x + v.y * v.y);
    e += state.mass[i] * cfg.gravity * state.pos[i].y;
  }
  for (const auto& sp : state.springs) {
    const auto& a = state.pos[static_cast<std::size_t>(sp.a)];
    const auto& b = state.pos[static_cast<std::size_t>(sp.b)];
    const double stretch = std::hypot(b.x - a.x, b.y - a.y) - std::hypot(sp.rest_x, sp.rest_y);
    e += 0.5 * sp.stiffness * stretch * stretch;
  }
  return e;
}

bool fell_off(const SimState& state, const SimConfig& cfg) {
  return center_of_mass(state).y < -2.0 * cfg.cell_size;
}

}  // namespace llmpoet::sim
