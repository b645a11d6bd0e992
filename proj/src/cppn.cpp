#include "llmpoet/cppn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include <fmt/format.h>

namespace llmpoet::cppn {

namespace {

constexpr Activation kAllActivations[] = {Activation::Sine, Activation::Sigmoid,
                                          Activation::Gaussian, Activation::Identity,
                                          Activation::Abs};

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Sine: return "sine";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Gaussian: return "gaussian";
    case Activation::Identity: return "identity";
    case Activation::Abs: return "abs";
  }
  return "?";
}

Activation activation_from_name(const std::string& s) {
  for (auto a : kAllActivations)
    if (s == activation_name(a)) return a;
  throw CppnError(CppnErrc::InvalidGenome, "unknown activation '" + s + "'");
}

const char* role_name(NodeRole r) {
  switch (r) {
    case NodeRole::Input: return "input";
    case NodeRole::Output: return "output";
    case NodeRole::Hidden: return "hidden";
  }
  return "?";
}

NodeRole role_from_name(const std::string& s) {
  if (s == "input") return NodeRole::Input;
  if (s == "output") return NodeRole::Output;
  if (s == "hidden") return NodeRole::Hidden;
  throw CppnError(CppnErrc::InvalidGenome, "unknown node role '" + s + "'");
}

// Reachability from `from` to `to`, following all or only enabled edges.
bool reaches(const Genome& g, int from, int to, bool enabled_only) {
  std::set<int> seen{from};
  std::vector<int> stack{from};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    if (n == to) return true;
    for (const auto& c : g.connections) {
      if (c.src != n || (enabled_only && !c.enabled)) continue;
      if (seen.insert(c.dst).second) stack.push_back(c.dst);
    }
  }
  return false;
}

bool has_input_output_path(const Genome& g) {
  for (int in : {kInputX, kInputY, kBias})
    for (int out : {kOutEmpty, kOutRigid, kOutSoft})
      if (reaches(g, in, out, true)) return true;
  return false;
}

std::vector<std::pair<int, int>> legal_new_connections(const Genome& g) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& s : g.nodes) {
    if (s.role == NodeRole::Output) continue;
    for (const auto& d : g.nodes) {
      if (d.role == NodeRole::Input || d.id == s.id) continue;
      bool exists = std::any_of(g.connections.begin(), g.connections.end(), [&](const auto& c) {
        return c.src == s.id && c.dst == d.id;
      });
      if (exists || reaches(g, d.id, s.id, false)) continue;
      pairs.emplace_back(s.id, d.id);
    }
  }
  return pairs;
}

}  // namespace

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Sine: return std::sin(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Gaussian: return std::exp(-x * x);
    case Activation::Identity: return x;
    case Activation::Abs: return std::abs(x);
  }
  return x;
}

Genome Genome::bare() {
  Genome g;
  for (int id : {kInputX, kInputY, kBias}) g.nodes.push_back({id, NodeRole::Input, Activation::Identity});
  for (int id : {kOutEmpty, kOutRigid, kOutSoft})
    g.nodes.push_back({id, NodeRole::Output, Activation::Identity});
  return g;
}

Genome Genome::minimal_random(Rng& rng, double weight_scale) {
  Genome g = bare();
  for (int in : {kInputX, kInputY, kBias})
    for (int out : {kOutEmpty, kOutRigid, kOutSoft})
      g.connections.push_back({in, out, gaussian(rng, 0.0, weight_scale), true});
  return g;
}

const Node* Genome::find_node(int id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

int Genome::next_node_id() const {
  int next = kFirstHidden;
  for (const auto& n : nodes) next = std::max(next, n.id + 1);
  return next;
}

std::vector<std::string> invariant_violations(const Genome& g) {
  std::vector<std::string> out;
  for (int id = kInputX; id < kFirstHidden; ++id) {
    const Node* n = g.find_node(id);
    NodeRole want = id < kOutEmpty ? NodeRole::Input : NodeRole::Output;
    if (!n || n->role != want) out.push_back(fmt::format("fixed node {} missing or mis-typed", id));
  }
  std::set<int> ids;
  for (const auto& n : g.nodes) {
    if (!ids.insert(n.id).second) out.push_back(fmt::format("duplicate node id {}", n.id));
    if (n.role == NodeRole::Hidden && n.id < kFirstHidden)
      out.push_back(fmt::format("hidden node uses reserved id {}", n.id));
  }
  for (const auto& c : g.connections) {
    const Node* s = g.find_node(c.src);
    const Node* d = g.find_node(c.dst);
    if (!s || !d) {
      out.push_back(fmt::format("connection {}->{} references a missing node", c.src, c.dst));
      continue;
    }
    if (d->role == NodeRole::Input) out.push_back(fmt::format("connection into input {}", c.dst));
    if (s->role == NodeRole::Output) out.push_back(fmt::format("connection out of output {}", c.src));
    if (!std::isfinite(c.weight)) out.push_back("non-finite weight");
  }
  try {
    topological_order(g);
  } catch (const CppnError&) {
    out.push_back("graph contains a cycle");
  }
  if (!has_input_output_path(g)) out.push_back("no enabled path from an input to an output");
  return out;
}

std::vector<int> topological_order(const Genome& g) {
  std::map<int, int> indegree;
  for (const auto& n : g.nodes) indegree[n.id] = 0;
  for (const auto& c : g.connections) {
    if (!indegree.count(c.src) || !indegree.count(c.dst))
      throw CppnError(CppnErrc::InvalidGenome, "connection references a missing node");
    ++indegree[c.dst];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (auto [id, d] : indegree)
    if (d == 0) ready.push(id);
  std::vector<int> order;
  while (!ready.empty()) {
    int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const auto& c : g.connections)
      if (c.src == id && --indegree[c.dst] == 0) ready.push(c.dst);
  }
  if (order.size() != g.nodes.size())
    throw CppnError(CppnErrc::CyclicGenome, "genome contains a cycle");
  return order;
}

Evaluator::Evaluator(const Genome& genome) {
  std::map<int, std::size_t> slot;
  for (const auto& n : genome.nodes) slot.emplace(n.id, slots_++);
  for (int id : topological_order(genome)) {
    const Node* n = genome.find_node(id);
    if (n->role == NodeRole::Input) continue;
    Step s{slot[id], n->activation, {}};
    for (const auto& c : genome.connections)
      if (c.dst == id && c.enabled) s.inputs.emplace_back(slot[c.src], c.weight);
    steps_.push_back(std::move(s));
  }
  out_slots_[0] = slot.at(kOutEmpty);
  out_slots_[1] = slot.at(kOutRigid);
  out_slots_[2] = slot.at(kOutSoft);
  in_slots_[0] = slot.at(kInputX);
  in_slots_[1] = slot.at(kInputY);
  in_slots_[2] = slot.at(kBias);
}

grid::Voxel Evaluator::query(double x_norm, double y_norm) const {
  std::vector<double> value(slots_, 0.0);
  value[in_slots_[0]] = x_norm;
  value[in_slots_[1]] = y_norm;
  value[in_slots_[2]] = 1.0;
  for (const auto& s : steps_) {
    double sum = 0.0;
    for (auto [src, w] : s.inputs) sum += w * value[src];
    value[s.slot] = activate(s.activation, sum);
  }
  // Strict comparisons keep the Empty < Rigid < Soft tie-break.
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (value[out_slots_[k]] > value[out_slots_[best]]) best = k;
  static constexpr grid::Voxel kOut[] = {grid::Voxel::Empty, grid::Voxel::Rigid, grid::Voxel::Soft};
  return kOut[best];
}

grid::Voxel query(const Genome& genome, double x_norm, double y_norm) {
  return Evaluator(genome).query(x_norm, y_norm);
}

grid::VoxelGrid paint(const Genome& genome, int width, int height) {
  Evaluator eval(genome);
  grid::VoxelGrid out(width, height);
  for (int row = 0; row < height; ++row) {
    const double y = height > 1 ? static_cast<double>(row) / (height - 1) : 0.0;
    for (int x = 0; x < width; ++x) {
      const double xn = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      out.set(x, row, eval.query(xn, y));
    }
  }
  return out;
}

grid::EnvRecord generate(const Genome& genome, int width, int height, int spawn_width) {
  grid::EnvRecord env;
  env.grid = grid::repair_spawn_platform(paint(genome, width, height),
                                         std::min(spawn_width, width));
  env.prompt = "cppn:" + genome_hash(genome);
  env.generator = grid::GeneratorKind::Cppn;
  env.generator_state = to_json(genome);
  return env;
}

MutationOp draw_op(Rng& rng, const MutationRates& r) {
  const double total = r.perturb_weight + r.add_connection + r.add_node + r.toggle_connection;
  double u = uniform01(rng) * total;
  if ((u -= r.perturb_weight) < 0) return MutationOp::PerturbWeight;
  if ((u -= r.add_connection) < 0) return MutationOp::AddConnection;
  if ((u -= r.add_node) < 0) return MutationOp::AddNode;
  return MutationOp::ToggleConnection;
}

Genome apply_mutation(const Genome& parent, MutationOp op, Rng& rng, const MutationRates& rates,
                      MutationOp* applied) {
  Genome child = parent;
  auto perturb = [&]() -> bool {
    if (child.connections.empty()) return false;
    auto& c = child.connections[uniform_index(rng, child.connections.size())];
    c.weight += gaussian(rng, 0.0, rates.perturb_sigma);
    if (applied) *applied = MutationOp::PerturbWeight;
    return true;
  };
  auto add_connection = [&]() -> bool {
    auto pairs = legal_new_connections(child);
    if (pairs.empty()) return false;
    auto [s, d] = pairs[uniform_index(rng, pairs.size())];
    child.connections.push_back({s, d, gaussian(rng, 0.0, 1.0), true});
    if (applied) *applied = MutationOp::AddConnection;
    return true;
  };

  bool done = false;
  switch (op) {
    case MutationOp::PerturbWeight:
      done = perturb() || add_connection();
      break;
    case MutationOp::AddConnection:
      done = add_connection() || perturb();
      break;
    case MutationOp::AddNode: {
      std::vector<std::size_t> enabled;
      for (std::size_t i = 0; i < child.connections.size(); ++i)
        if (child.connections[i].enabled) enabled.push_back(i);
      if (!enabled.empty()) {
        const auto idx = enabled[uniform_index(rng, enabled.size())];
        const int id = child.next_node_id();
        const auto act = kAllActivations[uniform_index(rng, std::size(kAllActivations))];
        child.nodes.push_back({id, NodeRole::Hidden, act});
        auto old = child.connections[idx];
        child.connections[idx].enabled = false;
        child.connections.push_back({old.src, id, 1.0, true});
        child.connections.push_back({id, old.dst, old.weight, true});
        if (applied) *applied = MutationOp::AddNode;
        done = true;
      } else {
        done = perturb() || add_connection();
      }
      break;
    }
    case MutationOp::ToggleConnection: {
      if (!child.connections.empty()) {
        auto& c = child.connections[uniform_index(rng, child.connections.size())];
        c.enabled = !c.enabled;
        if (has_input_output_path(child)) {
          if (applied) *applied = MutationOp::ToggleConnection;
          done = true;
        } else {
          c.enabled = !c.enabled;
        }
      }
      if (!done) done = perturb() || add_connection();
      break;
    }
  }
  if (!done)
    throw CppnError(CppnErrc::MutationExhausted, "genome has no connections and no legal additions");
  return child;
}

Genome mutate(const Genome& parent, Rng& rng, const MutationRates& rates, MutationOp* applied) {
  return apply_mutation(parent, draw_op(rng, rates), rng, rates, applied);
}

std::string genome_hash(const Genome& genome) {
  return fmt::format("{:016x}", fnv1a(to_json(genome).dump()));
}

nlohmann::json to_json(const Genome& genome) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : genome.nodes)
    nodes.push_back({{"id", n.id}, {"role", role_name(n.role)},
                     {"activation", activation_name(n.activation)}});
  nlohmann::json conns = nlohmann::json::array();
  for (const auto& c : genome.connections)
    conns.push_back({{"src", c.src}, {"dst", c.dst}, {"weight", c.weight}, {"enabled", c.enabled}});
  return {{"nodes", nodes}, {"connections", conns}};
}

Genome genome_from_json(const nlohmann::json& j) {
  Genome g;
  try {
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("id").get<int>(), role_from_name(n.at("role").get<std::string>()),
                         activation_from_name(n.at("activation").get<std::string>())});
    for (const auto& c : j.at("connections"))
      g.connections.push_back({c.at("src").get<int>(), c.at("dst").get<int>(),
                               c.at("weight").get<double>(), c.at("enabled").get<bool>()});
  } catch (const nlohmann::json::exception& e) {
    throw CppnError(CppnErrc::InvalidGenome, std::string("malformed genome: ") + e.what());
  }
  return g;
}

}  // namespace llmpoet::cppn
