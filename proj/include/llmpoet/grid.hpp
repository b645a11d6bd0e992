#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/error.hpp"

namespace llmpoet::grid {

enum class Voxel : std::uint8_t { Empty, Rigid, Soft, ActuatorH, ActuatorV };

inline constexpr int kDefaultSpawnWidth = 8;

/// Text codec: H rigid, S soft, - empty, V horizontal actuator, O vertical actuator.
char voxel_char(Voxel v);
std::optional<Voxel> voxel_from_char(char c);

inline bool is_actuator(Voxel v) { return v == Voxel::ActuatorH || v == Voxel::ActuatorV; }
inline bool is_terrain_voxel(Voxel v) { return !is_actuator(v); }

/// Row-major lattice. Row 0 is the top row of the rendered text.
class VoxelGrid {
 public:
  VoxelGrid(int width, int height, Voxel fill = Voxel::Empty);
  VoxelGrid(int width, int height, std::vector<Voxel> cells);

  int width() const { return width_; }
  int height() const { return height_; }

  Voxel at(int x, int row) const { return cells_[index(x, row)]; }
  void set(int x, int row, Voxel v) { cells_[index(x, row)] = v; }

  const std::vector<Voxel>& cells() const { return cells_; }

  bool column_empty(int x) const;
  bool all_empty() const;
  std::size_t count(Voxel v) const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  std::size_t index(int x, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<Voxel> cells_;
};

enum class GridErrc { RaggedLines, IllegalCharacter, EmptyInput, NoGridContent, GridTooNarrow, Oversized };

class GridError : public Error {
 public:
  GridError(GridErrc code, std::string message, int row = -1, int col = -1)
      : Error(std::move(message)), code_(code), row_(row), col_(col) {}

  GridErrc code() const { return code_; }
  int row() const { return row_; }
  int col() const { return col_; }

 private:
  GridErrc code_;
  int row_;
  int col_;
};

std::string render_grid(const VoxelGrid& grid);

/// Strict inverse of render_grid. A single trailing newline is tolerated.
VoxelGrid parse_grid(std::string_view text);

/// Turns raw generator output into a terrain grid of exactly the requested
/// size. Steps, in order: drop prose lines, substitute characters outside
/// {H,S,-} with '-', truncate, pad (short rows on the right, missing rows at
/// the top), repair the spawn platform. The spawn span is clamped to the
/// target width. `truncated`, when given, reports whether step 3 cut anything.
VoxelGrid postprocess(std::string_view raw, int target_width, int target_height,
                      int spawn_width = kDefaultSpawnWidth, bool* truncated = nullptr);

enum class TerrainIssue { ContainsActuator, NoSpawnSupport, AllEmpty };

std::string_view issue_name(TerrainIssue issue);

/// Spawn support: every column of the spawn span (clamped to the grid width)
/// holds at least one non-empty cell.
std::vector<TerrainIssue> validate_terrain(const VoxelGrid& grid,
                                           int spawn_width = kDefaultSpawnWidth);

/// Sets the bottom cell of every fully empty column in [0, spawn_width) to Rigid.
VoxelGrid repair_spawn_platform(VoxelGrid grid, int spawn_width = kDefaultSpawnWidth);

enum class GeneratorKind { Llm, Cppn, Stub };

std::string_view generator_name(GeneratorKind kind);
GeneratorKind generator_from_name(std::string_view name);

/// An environment together with how it came to be.
struct EnvRecord {
  VoxelGrid grid{1, 1};
  std::string prompt;
  GeneratorKind generator = GeneratorKind::Stub;
  std::string lineage_id;
  std::optional<std::string> parent_id;
  int created_at_iteration = 0;
  // Generator-specific payload needed to mutate this env later (CPPN genome,
  // stub terrain parameters). Null for LLM environments.
  nlohmann::json generator_state;
};

/// Sidecar document: {id, parent_id, prompt, generator, iteration, width, height}
/// plus "generator_state" when non-null.
nlohmann::json env_metadata(const EnvRecord& env);

/// Inverse of env_metadata; the grid comes from the companion text file.
EnvRecord env_from_metadata(const nlohmann::json& meta, VoxelGrid grid);

VoxelGrid read_grid_file(const std::string& path);
void write_grid_file(const std::string& path, const VoxelGrid& grid);

}  // namespace llmpoet::grid
