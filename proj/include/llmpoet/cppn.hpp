#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmpoet/error.hpp"
#include "llmpoet/grid.hpp"
#include "llmpoet/rng.hpp"

namespace llmpoet::cppn {

enum class Activation { Sine, Sigmoid, Gaussian, Identity, Abs };
enum class NodeRole { Input, Output, Hidden };

double activate(Activation a, double x);

struct Node {
  int id;
  NodeRole role;
  Activation activation;
  friend bool operator==(const Node&, const Node&) = default;
};

struct Connection {
  int src;
  int dst;
  double weight;
  bool enabled;
  friend bool operator==(const Connection&, const Connection&) = default;
};

// Fixed node ids. Inputs are (x_norm, y_norm, bias); outputs are class
// scores in tie-break order.
inline constexpr int kInputX = 0;
inline constexpr int kInputY = 1;
inline constexpr int kBias = 2;
inline constexpr int kOutEmpty = 3;
inline constexpr int kOutRigid = 4;
inline constexpr int kOutSoft = 5;
inline constexpr int kFirstHidden = 6;

struct Genome {
  std::vector<Node> nodes;
  std::vector<Connection> connections;

  /// Inputs and identity outputs, no connections.
  static Genome bare();
  /// Every input wired to every output with N(0, weight_scale) weights.
  static Genome minimal_random(Rng& rng, double weight_scale = 1.5);

  const Node* find_node(int id) const;
  int next_node_id() const;

  friend bool operator==(const Genome&, const Genome&) = default;
};

enum class CppnErrc { CyclicGenome, MutationExhausted, InvalidGenome };

class CppnError : public Error {
 public:
  CppnError(CppnErrc code, std::string message) : Error(std::move(message)), code_(code) {}
  CppnErrc code() const { return code_; }

 private:
  CppnErrc code_;
};

/// Empty when the genome satisfies every structural invariant.
std::vector<std::string> invariant_violations(const Genome& genome);

/// Node ids in evaluation order (all connections count, enabled or not).
/// Throws CppnError{CyclicGenome}.
std::vector<int> topological_order(const Genome& genome);

/// Compiled feed-forward evaluator; reuse it when painting many cells.
class Evaluator {
 public:
  explicit Evaluator(const Genome& genome);
  grid::Voxel query(double x_norm, double y_norm) const;

 private:
  struct Step {
    std::size_t slot;
    Activation activation;
    std::vector<std::pair<std::size_t, double>> inputs;
  };
  std::vector<Step> steps_;
  std::size_t slots_ = 0;
  std::size_t in_slots_[3] = {0, 0, 0};
  std::size_t out_slots_[3] = {0, 0, 0};
};

grid::Voxel query(const Genome& genome, double x_norm, double y_norm);

/// Queries every cell at x/(w-1), y/(h-1); no spawn repair.
grid::VoxelGrid paint(const Genome& genome, int width, int height);

/// paint + repair_spawn_platform (span clamped to width). The prompt is
/// "cppn:<hash>" and the genome is stored as generator_state.
grid::EnvRecord generate(const Genome& genome, int width, int height,
                         int spawn_width = grid::kDefaultSpawnWidth);

struct MutationRates {
  double perturb_weight = 0.6;
  double perturb_sigma = 0.5;
  double add_connection = 0.2;
  double add_node = 0.1;
  double toggle_connection = 0.1;
};

enum class MutationOp { PerturbWeight, AddConnection, AddNode, ToggleConnection };

MutationOp draw_op(Rng& rng, const MutationRates& rates);

/// Applies `op`, falling back when it has no legal target:
/// add-connection, add-node and toggle fall back to perturb-weight, and
/// perturb-weight on a connectionless genome falls back to add-connection.
/// `applied` receives the op actually performed.
Genome apply_mutation(const Genome& parent, MutationOp op, Rng& rng, const MutationRates& rates,
                      MutationOp* applied = nullptr);

Genome mutate(const Genome& parent, Rng& rng, const MutationRates& rates = {},
              MutationOp* applied = nullptr);

std::string genome_hash(const Genome& genome);

nlohmann::json to_json(const Genome& genome);
Genome genome_from_json(const nlohmann::json& j);

}  // namespace llmpoet::cppn
