#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "pccd/map_equation.hpp"
#include "pccd/model.hpp"
#include "pccd/rng.hpp"

namespace pccd::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.communities = 3;
  c.direct_dim = 3;
  c.embedding_dim = 3;
  c.attention_dim = 3;
  c.correlation_dim = 3;
  c.raw_communities = 2;
  c.main_objects = 6;
  c.sparse_objects = 5;
  c.alpha = 0.1;
  return c;
}

// Model with every tensor and the memory drawn at random, so no gradient is
// trivially zero because of a zero initialisation.
inline PccdModel random_model(const ModelConfig& config, std::uint64_t seed) {
  std::vector<int> object_community(config.main_objects);
  for (std::size_t o = 0; o < object_community.size(); ++o) {
    object_community[o] = static_cast<int>(o % config.raw_communities);
  }
  PccdModel model = init_model(config, object_community, seed);
  Rng rng(derive_seed(seed, 99));
  model.params.for_each([&](std::string_view, std::span<double> values) {
    for (double& v : values) v = rng.uniform(-0.8, 0.8);
  });
  model.params.main.bn_scale.array() += 1.0;
  model.params.sparse.bn_scale.array() += 1.0;
  model.params.community_weight.array() += 1.0;
  for (Matrix* m : {&model.state.main_memory, &model.state.sparse_memory}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1.0, 1.0);
  }
  return model;
}

inline MultiHot random_view(std::size_t objects, Rng& rng, bool allow_empty) {
  MultiHot view;
  for (std::size_t o = 0; o < objects; ++o) {
    if (rng.bernoulli(0.45)) view.push_back({o, rng.bernoulli(0.3) ? 2.0 : 1.0});
  }
  if (view.empty() && !allow_empty) view.push_back({rng.uniform_index(objects), 1.0});
  return view;
}

inline std::vector<TripletInput> random_batch(const ModelConfig& config, std::size_t triplets,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TripletInput> batch(triplets);
  const double labels[] = {0.0, 0.5, 1.0};
  for (auto& t : batch) {
    for (auto& m : t.members) {
      const bool cold_main = rng.bernoulli(0.15);
      m.main = cold_main ? MultiHot{} : random_view(config.main_objects, rng, false);
      m.sparse = random_view(config.sparse_objects, rng, true);
      m.raw_community =
          cold_main ? -1 : static_cast<int>(rng.uniform_index(config.raw_communities));
    }
    t.label = labels[rng.uniform_index(3)];
  }
  return batch;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

// Central finite differences of the batch loss against backward_batch.
// Relative error uses max(|analytic|, |numeric|, floor) as the denominator.
inline GradientCheck check_gradients(PccdModel model, const std::vector<TripletInput>& batch,
                                     double step = 1e-5, double floor = 1e-6) {
  const BatchTrace trace = forward_batch(model, batch, Mode::kTrain);
  const ModelParams analytic = backward_batch(model, batch, trace);
  std::vector<std::vector<double>> grads;
  analytic.for_each([&](std::string_view, std::span<const double> g) {
    grads.emplace_back(g.begin(), g.end());
  });

  GradientCheck result;
  std::vector<std::pair<std::string, std::span<double>>> tensors;
  model.params.for_each([&](std::string_view name, std::span<double> values) {
    tensors.emplace_back(std::string(name), values);
  });
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& [name, values] = tensors[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = forward_batch(model, batch, Mode::kTrain).loss;
      values[i] = saved - step;
      const double down = forward_batch(model, batch, Mode::kTrain).loss;
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[t][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

// Every set partition of n nodes as restricted growth strings.
inline void for_each_set_partition(std::size_t n,
                                   const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> labels(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int max_label) {
    if (pos == n) {
      fn(labels);
      return;
    }
    for (int l = 0; l <= max_label + 1; ++l) {
      labels[pos] = l;
      rec(pos + 1, std::max(max_label, l));
    }
  };
  if (n == 0) return;
  labels[0] = 0;
  rec(1, 0);
}

// Brute-force minimum of the map equation over all partitions.
inline double exhaustive_min_codelength(const FlowGraph& graph) {
  double best = INFINITY;
  for_each_set_partition(graph.num_nodes, [&](const std::vector<int>& labels) {
    best = std::min(best, codelength(graph, labels));
  });
  return best;
}

// Stationary distribution by power iteration of the lazy walk
// P' = (I + P) / 2, which shares the fixed point of P but is aperiodic.
inline std::vector<double> power_iteration_rates(const FlowGraph& graph, double tol = 1e-14) {
  std::vector<double> strength(graph.num_nodes, 0.0);
  for (const auto& e : graph.edges) {
    strength[e.a] += e.weight;
    strength[e.b] += e.weight;
  }
  // Connected graphs only: the start vector fixes each component's total mass.
  std::vector<double> rate(graph.num_nodes, 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < graph.num_nodes; ++n) {
    rate[n] = strength[n] > 0.0 ? 1.0 : 0.0;
    total += rate[n];
  }
  for (double& r : rate) r /= total;
  for (int iter = 0; iter < 200000; ++iter) {
    std::vector<double> next(graph.num_nodes, 0.0);
    for (std::size_t n = 0; n < graph.num_nodes; ++n) next[n] += 0.5 * rate[n];
    for (const auto& e : graph.edges) {
      next[e.b] += 0.5 * rate[e.a] * e.weight / strength[e.a];
      next[e.a] += 0.5 * rate[e.b] * e.weight / strength[e.b];
    }
    double diff = 0.0;
    for (std::size_t n = 0; n < graph.num_nodes; ++n) diff += std::abs(next[n] - rate[n]);
    rate = std::move(next);
    if (diff < tol) break;
  }
  return rate;
}

inline FlowGraph make_flow_graph(std::size_t n,
                                 std::initializer_list<std::tuple<std::size_t, std::size_t, double>> edges) {
  FlowGraph g;
  g.num_nodes = n;
  for (const auto& [a, b, w] : edges) g.edges.push_back({a, b, w});
  return g;
}

// Random weighted graph in which every node has at least one edge.
inline FlowGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  FlowGraph g;
  g.num_nodes = n;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (rng.bernoulli(p)) g.edges.push_back({a, b, rng.bernoulli(0.5) ? 1.0 : 1.0 + rng.uniform01() * 3.0});
    }
  }
  for (std::size_t a = 0; a + 1 < n; ++a) {
    if (rng.bernoulli(0.3)) g.edges.push_back({a, a + 1, 0.5});
  }
  for (std::size_t a = 0; a < n; ++a) {
    bool touched = false;
    for (const auto& e : g.edges) touched = touched || e.a == a || e.b == a;
    if (!touched) g.edges.push_back({a, (a + 1) % n, 1.0});
  }
  return g;
}

}  // namespace pccd::testing
