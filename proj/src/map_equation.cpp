#include "pccd/map_equation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "pccd/rng.hpp"

namespace pccd {
namespace {

constexpr double kMinImprovement = 1e-12;

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

void check_edges(const FlowGraph& graph) {
  for (const auto& e : graph.edges) {
    if (e.a >= graph.num_nodes || e.b >= graph.num_nodes) {
      throw std::invalid_argument("flow graph edge references an unknown node");
    }
    if (e.a == e.b) throw std::invalid_argument("flow graph contains a self loop");
    if (!(e.weight > 0.0)) throw std::invalid_argument("flow graph edge weight must be positive");
  }
}

double total_edge_weight(const FlowGraph& graph) {
  double total = 0.0;
  for (const auto& e : graph.edges) total += e.weight;
  return total;
}

// One level of the optimizer: (super)nodes carrying flow, exit flow and
// one-directional flows to their neighbours.
struct Level {
  std::vector<double> flow;
  std::vector<double> exit;
  std::vector<std::vector<std::pair<std::size_t, double>>> neighbors;

  std::size_t size() const { return flow.size(); }
};

Level base_level(const FlowGraph& graph, const std::vector<double>& visit) {
  const double two_w = 2.0 * total_edge_weight(graph);
  Level level;
  level.flow = visit;
  level.exit.assign(graph.num_nodes, 0.0);
  level.neighbors.resize(graph.num_nodes);
  std::vector<std::unordered_map<std::size_t, double>> merged(graph.num_nodes);
  for (const auto& e : graph.edges) {
    const double f = e.weight / two_w;
    merged[e.a][e.b] += f;
    merged[e.b][e.a] += f;
    level.exit[e.a] += f;
    level.exit[e.b] += f;
  }
  for (std::size_t n = 0; n < graph.num_nodes; ++n) {
    level.neighbors[n].assign(merged[n].begin(), merged[n].end());
    std::sort(level.neighbors[n].begin(), level.neighbors[n].end());
  }
  return level;
}

// Module-level terms of the map equation, excluding the constant node entropy.
class ModuleObjective {
 public:
  ModuleObjective(const Level& level, const std::vector<std::size_t>& module_of)
      : exit_(level.size(), 0.0), flow_(level.size(), 0.0), members_(level.size(), 0) {
    for (std::size_t n = 0; n < level.size(); ++n) {
      const std::size_t m = module_of[n];
      flow_[m] += level.flow[n];
      exit_[m] += level.exit[n];
      ++members_[m];
    }
    // Subtract flow internal to each module (counted once per direction).
    for (std::size_t n = 0; n < level.size(); ++n) {
      for (const auto& [other, f] : level.neighbors[n]) {
        if (module_of[other] == module_of[n]) exit_[module_of[n]] -= f;
      }
    }
    for (std::size_t m = 0; m < level.size(); ++m) {
      if (exit_[m] < 0.0) exit_[m] = 0.0;
      sum_exit_ += exit_[m];
      sum_plogp_exit_ += plogp(exit_[m]);
      sum_plogp_within_ += plogp(exit_[m] + flow_[m]);
    }
  }

  double value() const { return plogp(sum_exit_) - 2.0 * sum_plogp_exit_ + sum_plogp_within_; }

  // Objective change if a node with (flow, exit) moves from `from` to `to`,
  // where it exchanges `to_from` flow with the rest of `from` and `to_to` with `to`.
  double delta(std::size_t from, std::size_t to, double node_flow, double node_exit,
               double to_from, double to_to) const {
    const double exit_from = std::max(0.0, exit_[from] - node_exit + 2.0 * to_from);
    const double exit_to = std::max(0.0, exit_[to] + node_exit - 2.0 * to_to);
    const double sum_exit = sum_exit_ - exit_[from] - exit_[to] + exit_from + exit_to;
    const double plogp_exit = sum_plogp_exit_ - plogp(exit_[from]) - plogp(exit_[to]) +
                              plogp(exit_from) + plogp(exit_to);
    const double plogp_within = sum_plogp_within_ - plogp(exit_[from] + flow_[from]) -
                                plogp(exit_[to] + flow_[to]) +
                                plogp(exit_from + flow_[from] - node_flow) +
                                plogp(exit_to + flow_[to] + node_flow);
    return (plogp(sum_exit) - 2.0 * plogp_exit + plogp_within) - value();
  }

  void move(std::size_t from, std::size_t to, double node_flow, double node_exit, double to_from,
            double to_to) {
    const double exit_from = std::max(0.0, exit_[from] - node_exit + 2.0 * to_from);
    const double exit_to = std::max(0.0, exit_[to] + node_exit - 2.0 * to_to);
    sum_exit_ += exit_from + exit_to - exit_[from] - exit_[to];
    sum_plogp_exit_ +=
        plogp(exit_from) + plogp(exit_to) - plogp(exit_[from]) - plogp(exit_[to]);
    sum_plogp_within_ += plogp(exit_from + flow_[from] - node_flow) +
                         plogp(exit_to + flow_[to] + node_flow) -
                         plogp(exit_[from] + flow_[from]) - plogp(exit_[to] + flow_[to]);
    exit_[from] = exit_from;
    exit_[to] = exit_to;
    flow_[from] -= node_flow;
    flow_[to] += node_flow;
    --members_[from];
    ++members_[to];
  }

  std::size_t members(std::size_t m) const { return members_[m]; }

 private:
  std::vector<double> exit_;
  std::vector<double> flow_;
  std::vector<std::size_t> members_;
  double sum_exit_ = 0.0;
  double sum_plogp_exit_ = 0.0;
  double sum_plogp_within_ = 0.0;
};

// Moves single nodes between modules while that strictly lowers the
// objective. Returns true if any node moved.
bool local_moves(const Level& level, std::vector<std::size_t>& module_of, Rng& rng,
                 int max_sweeps) {
  const std::size_t n = level.size();
  ModuleObjective objective(level, module_of);
  std::vector<std::size_t> empty;
  for (std::size_t m = n; m-- > 0;) {
    if (objective.members(m) == 0) empty.push_back(m);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> link_to(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_moved = false;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    rng.shuffle(std::span<std::size_t>(order));
    bool moved = false;
    for (std::size_t node : order) {
      if (level.neighbors[node].empty()) continue;
      const std::size_t from = module_of[node];
      touched.clear();
      for (const auto& [other, f] : level.neighbors[node]) {
        const std::size_t m = module_of[other];
        if (link_to[m] == 0.0) touched.push_back(m);
        link_to[m] += f;
      }
      std::sort(touched.begin(), touched.end());
      const double to_from = link_to[from];

      std::size_t best = from;
      double best_delta = -kMinImprovement;
      auto consider = [&](std::size_t to) {
        if (to == from) return;
        const double d =
            objective.delta(from, to, level.flow[node], level.exit[node], to_from, link_to[to]);
        if (d < best_delta) {
          best_delta = d;
          best = to;
        }
      };
      for (std::size_t m : touched) consider(m);
      if (objective.members(from) > 1 && !empty.empty()) consider(empty.back());

      if (best != from) {
        objective.move(from, best, level.flow[node], level.exit[node], to_from, link_to[best]);
        if (!empty.empty() && best == empty.back()) empty.pop_back();
        if (objective.members(from) == 0) empty.push_back(from);
        module_of[node] = best;
        moved = true;
        any_moved = true;
      }
      for (std::size_t m : touched) link_to[m] = 0.0;
      link_to[from] = 0.0;
    }
    if (!moved) break;
  }
  return any_moved;
}

// Collapses modules into supernodes. `module_of` is rewritten to the dense
// supernode index of each node.
Level aggregate(const Level& level, std::vector<std::size_t>& module_of) {
  std::vector<std::size_t> dense(level.size(), SIZE_MAX);
  std::size_t count = 0;
  for (std::size_t n = 0; n < level.size(); ++n) {
    auto& d = dense[module_of[n]];
    if (d == SIZE_MAX) d = count++;
    module_of[n] = d;
  }
  Level next;
  next.flow.assign(count, 0.0);
  next.exit.assign(count, 0.0);
  next.neighbors.resize(count);
  std::vector<std::unordered_map<std::size_t, double>> merged(count);
  for (std::size_t n = 0; n < level.size(); ++n) {
    const std::size_t m = module_of[n];
    next.flow[m] += level.flow[n];
    for (const auto& [other, f] : level.neighbors[n]) {
      const std::size_t o = module_of[other];
      if (o != m) {
        merged[m][o] += f;
        next.exit[m] += f;
      }
    }
  }
  for (std::size_t m = 0; m < count; ++m) {
    next.neighbors[m].assign(merged[m].begin(), merged[m].end());
    std::sort(next.neighbors[m].begin(), next.neighbors[m].end());
  }
  return next;
}

std::vector<int> optimize_once(const FlowGraph& graph, const Level& base, Rng& rng,
                               const DetectOptions& options) {
  std::vector<int> best(graph.num_nodes);
  std::iota(best.begin(), best.end(), 0);
  double best_length = codelength(graph, best);

  std::vector<std::size_t> start(best.begin(), best.end());
  for (int round = 0; round < 64; ++round) {
    // Node-level moves from the current partition, then coarse rounds.
    std::vector<std::size_t> node_module = start;
    local_moves(base, node_module, rng, options.max_local_sweeps);
    Level level = aggregate(base, node_module);
    std::vector<std::size_t> node_to_super = node_module;
    while (true) {
      std::vector<std::size_t> super_module(level.size());
      std::iota(super_module.begin(), super_module.end(), 0);
      if (!local_moves(level, super_module, rng, options.max_local_sweeps)) break;
      Level coarser = aggregate(level, super_module);
      for (auto& s : node_to_super) s = super_module[s];
      level = std::move(coarser);
    }

    std::vector<int> candidate(node_to_super.begin(), node_to_super.end());
    const double length = codelength(graph, candidate);
    if (length < best_length - kMinImprovement) {
      best_length = length;
      best = candidate;
      start.assign(node_to_super.begin(), node_to_super.end());
    } else {
      break;
    }
  }
  return best;
}

}  // namespace

FlowGraph to_flow_graph(const BipartiteGraph& graph) {
  FlowGraph flow;
  flow.num_nodes = graph.num_users() + graph.num_objects();
  flow.edges.reserve(graph.links().size());
  for (const Link& link : graph.links()) {
    flow.edges.push_back({link.user, graph.num_users() + link.object, link.weight});
  }
  return flow;
}

std::vector<double> stationary_visit_rates(const FlowGraph& graph) {
  check_edges(graph);
  const double total = total_edge_weight(graph);
  if (graph.edges.empty() || !(total > 0.0)) {
    throw std::invalid_argument("visit rates need a graph with at least one link");
  }
  std::vector<double> rate(graph.num_nodes, 0.0);
  for (const auto& e : graph.edges) {
    rate[e.a] += e.weight;
    rate[e.b] += e.weight;
  }
  for (double& r : rate) r /= 2.0 * total;
  return rate;
}

FlowStats flow_stats(const FlowGraph& graph, std::span<const int> assignment) {
  if (assignment.size() != graph.num_nodes) {
    throw std::invalid_argument("partition does not match the graph's node count");
  }
  int num_modules = 0;
  for (int m : assignment) {
    if (m < 0) throw std::invalid_argument("partition contains a negative community id");
    num_modules = std::max(num_modules, m + 1);
  }

  FlowStats stats;
  stats.visit_rate = stationary_visit_rates(graph);
  const double two_w = 2.0 * total_edge_weight(graph);
  stats.exit_rate.assign(num_modules, 0.0);
  for (const auto& e : graph.edges) {
    if (assignment[e.a] != assignment[e.b]) {
      stats.exit_rate[assignment[e.a]] += e.weight / two_w;
      stats.exit_rate[assignment[e.b]] += e.weight / two_w;
    }
  }
  stats.within_rate = stats.exit_rate;
  for (std::size_t n = 0; n < graph.num_nodes; ++n) {
    stats.within_rate[assignment[n]] += stats.visit_rate[n];
  }

  const double total_exit = std::accumulate(stats.exit_rate.begin(), stats.exit_rate.end(), 0.0);
  if (total_exit > 0.0) {
    for (double q : stats.exit_rate) stats.index_entropy -= plogp(q / total_exit);
  }
  stats.module_entropy.assign(num_modules, 0.0);
  for (int m = 0; m < num_modules; ++m) {
    const double within = stats.within_rate[m];
    if (within > 0.0) stats.module_entropy[m] -= plogp(stats.exit_rate[m] / within);
  }
  for (std::size_t n = 0; n < graph.num_nodes; ++n) {
    const double within = stats.within_rate[assignment[n]];
    if (within > 0.0) stats.module_entropy[assignment[n]] -= plogp(stats.visit_rate[n] / within);
  }
  return stats;
}

double codelength(const FlowGraph& graph, std::span<const int> assignment) {
  const FlowStats stats = flow_stats(graph, assignment);
  const double total_exit = std::accumulate(stats.exit_rate.begin(), stats.exit_rate.end(), 0.0);
  double length = total_exit * stats.index_entropy;
  for (std::size_t m = 0; m < stats.within_rate.size(); ++m) {
    length += stats.within_rate[m] * stats.module_entropy[m];
  }
  return length;
}

double codelength(const BipartiteGraph& graph, const CommunityPartition& partition) {
  return codelength(to_flow_graph(graph), partition.assignment);
}

CommunityPartition make_partition(std::vector<int> assignment) {
  std::unordered_map<int, int> relabel;
  for (int& m : assignment) {
    auto [it, inserted] = relabel.try_emplace(m, static_cast<int>(relabel.size()));
    m = it->second;
  }
  CommunityPartition partition;
  partition.num_communities = static_cast<int>(relabel.size());
  partition.assignment = std::move(assignment);
  return partition;
}

CommunityPartition detect_communities(const FlowGraph& graph, std::uint64_t seed,
                                      const DetectOptions& options) {
  check_edges(graph);
  const Level base = base_level(graph, stationary_visit_rates(graph));

  std::vector<int> best;
  double best_length = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < std::max(1, options.num_trials); ++trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    std::vector<int> candidate = optimize_once(graph, base, rng, options);
    const double length = codelength(graph, candidate);
    if (length < best_length - kMinImprovement) {
      best_length = length;
      best = std::move(candidate);
    }
  }

  // Never worse than putting everything in one module.
  const std::vector<int> single(graph.num_nodes, 0);
  if (codelength(graph, single) < best_length - kMinImprovement) best = single;

  CommunityPartition partition = make_partition(std::move(best));
  partition.codelength = codelength(graph, partition.assignment);
  return partition;
}

CommunityPartition detect_communities(const BipartiteGraph& graph, std::uint64_t seed,
                                      const DetectOptions& options) {
  if (graph.links().empty()) throw std::invalid_argument("cannot detect communities without links");
  return detect_communities(to_flow_graph(graph), seed, options);
}

int user_community(const CommunityPartition& partition, const BipartiteGraph& graph,
                   std::string_view user_id) {
  const auto user = graph.users().find(user_id);
  if (!user || *user >= partition.assignment.size()) return -1;
  return partition.assignment[*user];
}

std::vector<int> object_communities(const CommunityPartition& partition,
                                    const BipartiteGraph& graph) {
  if (partition.assignment.size() != graph.num_users() + graph.num_objects()) {
    throw std::invalid_argument("partition does not match the graph");
  }
  return std::vector<int>(partition.assignment.begin() + static_cast<long>(graph.num_users()),
                          partition.assignment.end());
}

std::vector<double> raw_one_hot(const CommunityPartition& partition, const BipartiteGraph& graph,
                                std::string_view user_id, std::size_t dim) {
  if (dim < static_cast<std::size_t>(partition.num_communities)) {
    throw std::invalid_argument("one-hot dimension " + std::to_string(dim) +
                                " is smaller than the community count " +
                                std::to_string(partition.num_communities));
  }
  std::vector<double> one_hot(dim, 0.0);
  const int community = user_community(partition, graph, user_id);
  if (community >= 0) one_hot[static_cast<std::size_t>(community)] = 1.0;
  return one_hot;
}

void write_partition(const CommunityPartition& partition, const BipartiteGraph& graph,
                     const std::filesystem::path& path) {
  if (partition.assignment.size() != graph.num_users() + graph.num_objects()) {
    throw std::invalid_argument("partition does not match the graph");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write partition " + path.string());
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    out << "u:" << graph.users().at(u) << '\t' << partition.assignment[u] << '\n';
  }
  for (std::size_t o = 0; o < graph.num_objects(); ++o) {
    out << "o:" << graph.objects().at(o) << '\t' << partition.assignment[graph.num_users() + o]
        << '\n';
  }
}

CommunityPartition read_partition(const BipartiteGraph& graph, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open partition " + path.string());
  std::vector<int> assignment(graph.num_users() + graph.num_objects(), -1);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.rfind('\t');
    const std::string where = " at line " + std::to_string(line_number);
    if (tab == std::string::npos || tab < 2 || line[1] != ':') {
      throw std::runtime_error("malformed partition line" + where);
    }
    const std::string id = line.substr(2, tab - 2);
    std::optional<std::size_t> node;
    if (line[0] == 'u') {
      node = graph.users().find(id);
    } else if (line[0] == 'o') {
      if (auto o = graph.objects().find(id)) node = graph.num_users() + *o;
    }
    if (!node) throw std::runtime_error("unknown node '" + line.substr(0, tab) + "'" + where);
    assignment[*node] = std::stoi(line.substr(tab + 1));
  }
  if (std::find(assignment.begin(), assignment.end(), -1) != assignment.end()) {
    throw std::runtime_error("partition file does not cover every node");
  }
  CommunityPartition partition = make_partition(std::move(assignment));
  partition.codelength = graph.links().empty() ? 0.0 : codelength(graph, partition);
  return partition;
}

}  // namespace pccd
