#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "pccd/graph.hpp"

namespace pccd {

// Undirected weighted graph over nodes 0..num_nodes-1, the input of the map
// equation. Parallel edges are allowed and add up; self loops are not.
struct FlowGraph {
  struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 1.0;
  };
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
};

// Users take nodes [0, U), objects take [U, U + O).
FlowGraph to_flow_graph(const BipartiteGraph& graph);

struct CommunityPartition {
  std::vector<int> assignment;  // node -> community in [0, num_communities)
  int num_communities = 0;
  double codelength = 0.0;  // bits
};

struct FlowStats {
  std::vector<double> visit_rate;     // per node
  std::vector<double> exit_rate;      // per community
  std::vector<double> within_rate;    // per community: exit rate + member visit rates
  double index_entropy = 0.0;         // H(Q), bits
  std::vector<double> module_entropy; // H(P^i), bits
};

// Stationary distribution of the undirected random walk: strength / (2 W).
// Throws std::invalid_argument for a graph without edges.
std::vector<double> stationary_visit_rates(const FlowGraph& graph);

// Throws std::invalid_argument when the assignment does not cover the graph.
FlowStats flow_stats(const FlowGraph& graph, std::span<const int> assignment);

// Two-level map equation: (sum q_i) H(Q) + sum p_i H(P^i).
double codelength(const FlowGraph& graph, std::span<const int> assignment);
double codelength(const BipartiteGraph& graph, const CommunityPartition& partition);

// Relabels communities to 0..C-1 in order of first appearance.
CommunityPartition make_partition(std::vector<int> assignment);

struct DetectOptions {
  // Independent restarts with shuffled node orders; the best result is kept.
  int num_trials = 4;
  int max_local_sweeps = 100;
};

// Greedy local moving plus aggregation, followed by node-level fine tuning,
// repeated until the codelength stops improving. Deterministic per seed.
CommunityPartition detect_communities(const FlowGraph& graph, std::uint64_t seed,
                                      const DetectOptions& options = {});
CommunityPartition detect_communities(const BipartiteGraph& graph, std::uint64_t seed,
                                      const DetectOptions& options = {});

// Community of a user node, or -1 when the user is not in the graph.
int user_community(const CommunityPartition& partition, const BipartiteGraph& graph,
                   std::string_view user_id);
// Communities of the object nodes, indexed by object.
std::vector<int> object_communities(const CommunityPartition& partition,
                                    const BipartiteGraph& graph);

// One-hot vector of the user's community; all zeros for an unknown user.
std::vector<double> raw_one_hot(const CommunityPartition& partition, const BipartiteGraph& graph,
                                std::string_view user_id, std::size_t dim);

// `node_id <TAB> community_id` lines with node ids written as u:<user> / o:<object>.
void write_partition(const CommunityPartition& partition, const BipartiteGraph& graph,
                     const std::filesystem::path& path);
CommunityPartition read_partition(const BipartiteGraph& graph, const std::filesystem::path& path);

}  // namespace pccd
