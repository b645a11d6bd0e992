#include "llmpoet/grid.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "llmpoet/io.hpp"

namespace llmpoet::grid {

namespace {

struct CodecEntry {
  Voxel voxel;
  char symbol;
};

constexpr std::array<CodecEntry, 5> kCodec{{
    {Voxel::Empty, '-'},
    {Voxel::Rigid, 'H'},
    {Voxel::Soft, 'S'},
    {Voxel::ActuatorH, 'V'},
    {Voxel::ActuatorV, 'O'},
}};

bool is_terrain_char(char c) { return c == 'H' || c == 'S' || c == '-'; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return lines;
}

// A line counts as grid content when at least half of its visible characters
// belong to the terrain alphabet.
bool looks_like_grid_row(std::string_view line) {
  std::size_t visible = 0;
  std::size_t legal = 0;
  for (char c : line) {
    if (is_space(c)) continue;
    ++visible;
    if (is_terrain_char(c)) ++legal;
  }
  return visible > 0 && 2 * legal >= visible;
}

}  // namespace

char voxel_char(Voxel v) {
  for (const auto& e : kCodec)
    if (e.voxel == v) return e.symbol;
  return '?';
}

std::optional<Voxel> voxel_from_char(char c) {
  for (const auto& e : kCodec)
    if (e.symbol == c) return e.voxel;
  return std::nullopt;
}

VoxelGrid::VoxelGrid(int width, int height, Voxel fill) : width_(width), height_(height) {
  if (width < 1 || height < 1)
    throw Error(fmt::format("grid dimensions must be >= 1, got {}x{}", width, height));
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

VoxelGrid::VoxelGrid(int width, int height, std::vector<Voxel> cells)
    : width_(width), height_(height), cells_(std::move(cells)) {
  if (width < 1 || height < 1)
    throw Error(fmt::format("grid dimensions must be >= 1, got {}x{}", width, height));
  if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error("grid cell count does not match dimensions");
}

bool VoxelGrid::column_empty(int x) const {
  for (int row = 0; row < height_; ++row)
    if (at(x, row) != Voxel::Empty) return false;
  return true;
}

bool VoxelGrid::all_empty() const {
  return std::all_of(cells_.begin(), cells_.end(), [](Voxel v) { return v == Voxel::Empty; });
}

std::size_t VoxelGrid::count(Voxel v) const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), v));
}

std::string render_grid(const VoxelGrid& grid) {
  std::string out;
  out.reserve(static_cast<std::size_t>((grid.width() + 1) * grid.height()));
  for (int row = 0; row < grid.height(); ++row) {
    if (row > 0) out.push_back('\n');
    for (int x = 0; x < grid.width(); ++x) out.push_back(voxel_char(grid.at(x, row)));
  }
  return out;
}

VoxelGrid parse_grid(std::string_view text) {
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  if (text.empty()) throw GridError(GridErrc::EmptyInput, "empty grid text");

  auto lines = split_lines(text);
  const auto width = lines.front().size();
  if (width == 0) throw GridError(GridErrc::EmptyInput, "grid has an empty first row");

  std::vector<Voxel> cells;
  cells.reserve(width * lines.size());
  for (std::size_t row = 0; row < lines.size(); ++row) {
    const auto line = lines[row];
    if (line.size() != width)
      throw GridError(GridErrc::RaggedLines,
                      fmt::format("row {} has {} characters, expected {}", row, line.size(),
                                  width),
                      static_cast<int>(row));
    for (std::size_t col = 0; col < line.size(); ++col) {
      auto v = voxel_from_char(line[col]);
      if (!v)
        throw GridError(GridErrc::IllegalCharacter,
                        fmt::format("illegal character '{}' at ({},{})", line[col], row, col),
                        static_cast<int>(row), static_cast<int>(col));
      cells.push_back(*v);
    }
  }
  return VoxelGrid(static_cast<int>(width), static_cast<int>(lines.size()), std::move(cells));
}

VoxelGrid postprocess(std::string_view raw, int target_width, int target_height,
                      int spawn_width, bool* truncated) {
  if (target_width < 1 || target_height < 1)
    throw Error(fmt::format("target dimensions must be >= 1, got {}x{}", target_width,
                            target_height));

  // 1. prose strip
  std::vector<std::string> rows;
  for (auto line : split_lines(raw)) {
    line = trim(line);
    if (looks_like_grid_row(line)) rows.emplace_back(line);
  }
  if (rows.empty())
    throw GridError(GridErrc::NoGridContent, "generator output contains no grid rows");

  // 2. substitution
  for (auto& r : rows)
    for (auto& c : r)
      if (!is_terrain_char(c)) c = '-';

  // 3. truncate
  const auto w = static_cast<std::size_t>(target_width);
  const auto h = static_cast<std::size_t>(target_height);
  bool cut = rows.size() > h;
  if (rows.size() > h) rows.resize(h);
  for (auto& r : rows)
    if (r.size() > w) {
      r.resize(w);
      cut = true;
    }
  if (truncated) *truncated = cut;

  // 4. pad
  for (auto& r : rows) r.resize(w, '-');
  rows.insert(rows.begin(), h - rows.size(), std::string(w, '-'));

  std::vector<Voxel> cells;
  cells.reserve(w * h);
  for (const auto& r : rows)
    for (char c : r) cells.push_back(*voxel_from_char(c));
  VoxelGrid out(target_width, target_height, std::move(cells));

  // 5. spawn repair
  return repair_spawn_platform(std::move(out), std::min(spawn_width, target_width));
}

std::string_view issue_name(TerrainIssue issue) {
  switch (issue) {
    case TerrainIssue::ContainsActuator: return "ContainsActuator";
    case TerrainIssue::NoSpawnSupport: return "NoSpawnSupport";
    case TerrainIssue::AllEmpty: return "AllEmpty";
  }
  return "?";
}

std::vector<TerrainIssue> validate_terrain(const VoxelGrid& grid, int spawn_width) {
  std::vector<TerrainIssue> issues;
  if (std::any_of(grid.cells().begin(), grid.cells().end(), is_actuator))
    issues.push_back(TerrainIssue::ContainsActuator);
  if (grid.all_empty()) issues.push_back(TerrainIssue::AllEmpty);
  const int span = std::min(spawn_width, grid.width());
  for (int x = 0; x < span; ++x) {
    if (grid.column_empty(x)) {
      issues.push_back(TerrainIssue::NoSpawnSupport);
      break;
    }
  }
  return issues;
}

VoxelGrid repair_spawn_platform(VoxelGrid grid, int spawn_width) {
  if (grid.width() < spawn_width)
    throw GridError(GridErrc::GridTooNarrow,
                    fmt::format("grid width {} is narrower than the spawn span {}", grid.width(),
                                spawn_width));
  const int bottom = grid.height() - 1;
  for (int x = 0; x < spawn_width; ++x)
    if (grid.column_empty(x)) grid.set(x, bottom, Voxel::Rigid);
  return grid;
}

std::string_view generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Llm: return "llm";
    case GeneratorKind::Cppn: return "cppn";
    case GeneratorKind::Stub: return "stub";
  }
  return "?";
}

GeneratorKind generator_from_name(std::string_view name) {
  if (name == "llm") return GeneratorKind::Llm;
  if (name == "cppn") return GeneratorKind::Cppn;
  if (name == "stub") return GeneratorKind::Stub;
  throw Error(fmt::format("unknown generator '{}'", name));
}

nlohmann::json env_metadata(const EnvRecord& env) {
  nlohmann::json j;
  j["id"] = env.lineage_id;
  j["parent_id"] = env.parent_id ? nlohmann::json(*env.parent_id) : nlohmann::json(nullptr);
  j["prompt"] = env.prompt;
  j["generator"] = generator_name(env.generator);
  j["iteration"] = env.created_at_iteration;
  j["width"] = env.grid.width();
  j["height"] = env.grid.height();
  if (!env.generator_state.is_null()) j["generator_state"] = env.generator_state;
  return j;
}

EnvRecord env_from_metadata(const nlohmann::json& meta, VoxelGrid grid) {
  EnvRecord env;
  try {
    if (meta.at("width").get<int>() != grid.width() ||
        meta.at("height").get<int>() != grid.height())
      throw Error("metadata dimensions do not match the grid file");
    env.grid = std::move(grid);
    env.lineage_id = meta.at("id").get<std::string>();
    if (meta.contains("parent_id") && !meta["parent_id"].is_null())
      env.parent_id = meta["parent_id"].get<std::string>();
    env.prompt = meta.at("prompt").get<std::string>();
    env.generator = generator_from_name(meta.at("generator").get<std::string>());
    env.created_at_iteration = meta.at("iteration").get<int>();
    if (meta.contains("generator_state")) env.generator_state = meta["generator_state"];
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed environment metadata: ") + e.what());
  }
  return env;
}

VoxelGrid read_grid_file(const std::string& path) { return parse_grid(io::read_file(path)); }

void write_grid_file(const std::string& path, const VoxelGrid& grid) {
  io::write_file_atomic(path, render_grid(grid));
}

}  // namespace llmpoet::grid
