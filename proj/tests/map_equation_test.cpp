#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "pccd/map_equation.hpp"
#include "pccd/rng.hpp"
#include "test_support.hpp"

namespace pccd {
namespace {

using testing::exhaustive_min_codelength;
using testing::make_flow_graph;
using testing::random_graph;

// Codelength written out term by term from visit and exit rates, without
// going through the library's flow statistics.
double reference_codelength(const FlowGraph& g, const std::vector<int>& labels) {
  const auto plogp = [](double x) { return x > 0.0 ? x * std::log2(x) : 0.0; };
  std::vector<double> strength(g.num_nodes, 0.0);
  double two_w = 0.0;
  for (const auto& e : g.edges) {
    strength[e.a] += e.weight;
    strength[e.b] += e.weight;
    two_w += 2.0 * e.weight;
  }
  std::map<int, double> exit, inside;
  for (std::size_t n = 0; n < g.num_nodes; ++n) inside[labels[n]] += strength[n] / two_w;
  for (const auto& e : g.edges) {
    if (labels[e.a] != labels[e.b]) {
      exit[labels[e.a]] += e.weight / two_w;
      exit[labels[e.b]] += e.weight / two_w;
    }
  }
  double total_exit = 0.0, sum_exit = 0.0, sum_within = 0.0, sum_nodes = 0.0;
  for (const auto& [c, p] : inside) {
    const double q = exit.contains(c) ? exit[c] : 0.0;
    total_exit += q;
    sum_exit += plogp(q);
    sum_within += plogp(q + p);
  }
  for (double s : strength) sum_nodes += plogp(s / two_w);
  return plogp(total_exit) - 2.0 * sum_exit + sum_within - sum_nodes;
}

FlowGraph two_triangles() {
  return make_flow_graph(6, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}, {2, 3, 1}});
}

TEST(VisitRateTest, StrengthOverTwiceTotalWeight) {
  const auto rates = stationary_visit_rates(two_triangles());
  EXPECT_DOUBLE_EQ(rates[0], 2.0 / 14.0);
  EXPECT_DOUBLE_EQ(rates[2], 3.0 / 14.0);
  EXPECT_THROW(stationary_visit_rates(FlowGraph{3, {}}), std::invalid_argument);
}

TEST(VisitRateTest, MatchesPowerIteration) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FlowGraph g = random_graph(12, 0.35, seed);
    for (std::size_t a = 0; a + 1 < g.num_nodes; ++a) g.edges.push_back({a, a + 1, 0.2});  // connected
    const auto exact = stationary_visit_rates(g);
    const auto iterated = testing::power_iteration_rates(g);
    for (std::size_t n = 0; n < g.num_nodes; ++n) EXPECT_NEAR(exact[n], iterated[n], 1e-10);
  }
}

TEST(CodelengthTest, SingleModuleIsNodeEntropy) {
  const FlowGraph triangle = make_flow_graph(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}});
  EXPECT_NEAR(codelength(triangle, std::vector<int>{0, 0, 0}), std::log2(3.0), 1e-12);
  EXPECT_NEAR(codelength(two_triangles(), std::vector<int>(6, 0)), 2.556656707462823, 1e-12);
}

TEST(CodelengthTest, TwoTrianglesHandValue) {
  EXPECT_NEAR(codelength(two_triangles(), std::vector<int>{0, 0, 0, 1, 1, 1}), 2.3207303568337903,
              1e-12);
}

TEST(CodelengthTest, MatchesExpandedFormOnRandomPartitions) {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const FlowGraph g = random_graph(10, 0.3, seed);
    std::vector<int> labels(g.num_nodes);
    for (int& l : labels) l = static_cast<int>(rng.uniform_index(4));
    EXPECT_NEAR(codelength(g, labels), reference_codelength(g, labels), 1e-12);
  }
}

TEST(CodelengthTest, LabelNamesDoNotMatter) {
  const FlowGraph g = two_triangles();
  EXPECT_DOUBLE_EQ(codelength(g, std::vector<int>{0, 0, 0, 1, 1, 1}),
                   codelength(g, std::vector<int>{7, 7, 7, 2, 2, 2}));
}

TEST(CodelengthTest, RejectsShortAssignment) {
  EXPECT_THROW(codelength(two_triangles(), std::vector<int>{0, 0}), std::invalid_argument);
}

TEST(FlowStatsTest, ExitAndWithinRates) {
  const FlowStats s = flow_stats(two_triangles(), std::vector<int>{0, 0, 0, 1, 1, 1});
  ASSERT_EQ(s.exit_rate.size(), 2u);
  EXPECT_DOUBLE_EQ(s.exit_rate[0], 1.0 / 14.0);
  EXPECT_NEAR(s.within_rate[1], 1.0 / 14.0 + 0.5, 1e-15);
  EXPECT_NEAR(s.index_entropy, 1.0, 1e-15);
}

TEST(PartitionTest, RelabelsInFirstAppearanceOrder) {
  const CommunityPartition p = make_partition({5, 5, 2, 9, 2});
  EXPECT_EQ(p.assignment, (std::vector<int>{0, 0, 1, 2, 1}));
  EXPECT_EQ(p.num_communities, 3);
}

TEST(DetectTest, FindsTheTwoTriangles) {
  const CommunityPartition p = detect_communities(two_triangles(), 1);
  EXPECT_EQ(p.num_communities, 2);
  EXPECT_EQ(p.assignment, (std::vector<int>{0, 0, 0, 1, 1, 1}));
  EXPECT_NEAR(p.codelength, 2.3207303568337903, 1e-12);
}

TEST(DetectTest, ReachesExhaustiveOptimumOnSmallGraphs) {
  int optimal = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const FlowGraph g = random_graph(8, 0.3, 100 + seed);
    const double best = exhaustive_min_codelength(g);
    const CommunityPartition p = detect_communities(g, seed);
    EXPECT_GE(p.codelength, best - 1e-9);
    EXPECT_NEAR(p.codelength, codelength(g, p.assignment), 1e-12);
    if (p.codelength <= best + 1e-9) ++optimal;
  }
  EXPECT_GE(optimal, 27);
}

TEST(DetectTest, NeverWorseThanOneModule) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FlowGraph g = random_graph(30, 0.5, seed);
    const CommunityPartition p = detect_communities(g, seed);
    EXPECT_LE(p.codelength, codelength(g, std::vector<int>(g.num_nodes, 0)) + 1e-12);
  }
}

TEST(DetectTest, DeterministicPerSeed) {
  const FlowGraph g = random_graph(40, 0.1, 3);
  const CommunityPartition a = detect_communities(g, 17);
  const CommunityPartition b = detect_communities(g, 17);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.codelength, b.codelength);
}

TEST(DetectTest, RecoversPlantedBlocks) {
  // Four dense blocks of 10 with a few bridges.
  Rng rng(4);
  FlowGraph g;
  g.num_nodes = 40;
  for (std::size_t a = 0; a < 40; ++a) {
    for (std::size_t b = a + 1; b < 40; ++b) {
      const bool same = a / 10 == b / 10;
      if (rng.bernoulli(same ? 0.7 : 0.02)) g.edges.push_back({a, b, 1.0});
    }
  }
  const CommunityPartition p = detect_communities(g, 2);
  EXPECT_EQ(p.num_communities, 4);
  for (std::size_t n = 0; n < 40; ++n) EXPECT_EQ(p.assignment[n], p.assignment[(n / 10) * 10]);
}

TEST(BipartiteTest, UsersThenObjects) {
  GraphBuilder b("g");
  b.add_link("u1", "a");
  b.add_link("u1", "b");
  b.add_link("u2", "a");
  b.add_link("u3", "c");
  b.add_link("u4", "c");
  const BipartiteGraph graph = std::move(b).build();
  const FlowGraph f = to_flow_graph(graph);
  EXPECT_EQ(f.num_nodes, 7u);
  EXPECT_EQ(f.edges[0].b, 4u);
  const CommunityPartition p = detect_communities(graph, 1);
  EXPECT_EQ(user_community(p, graph, "u1"), user_community(p, graph, "u2"));
  EXPECT_NE(user_community(p, graph, "u1"), user_community(p, graph, "u3"));
  EXPECT_EQ(user_community(p, graph, "ghost"), -1);
  const auto oc = object_communities(p, graph);
  EXPECT_EQ(oc[2], user_community(p, graph, "u4"));
  const auto hot = raw_one_hot(p, graph, "u3", 3);
  EXPECT_DOUBLE_EQ(hot[static_cast<std::size_t>(user_community(p, graph, "u3"))], 1.0);
  EXPECT_EQ(raw_one_hot(p, graph, "ghost", 3), std::vector<double>(3, 0.0));
  EXPECT_THROW(raw_one_hot(p, graph, "u3", 1), std::invalid_argument);
  EXPECT_NEAR(codelength(graph, p), p.codelength, 1e-12);

  const auto path = std::filesystem::temp_directory_path() / "pccd_partition.tsv";
  write_partition(p, graph, path);
  const CommunityPartition back = read_partition(graph, path);
  EXPECT_EQ(back.assignment, p.assignment);
  EXPECT_NEAR(back.codelength, p.codelength, 1e-12);
}

}  // namespace
}  // namespace pccd
