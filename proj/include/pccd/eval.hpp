#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pccd/graph.hpp"
#include "pccd/map_equation.hpp"
#include "pccd/metrics.hpp"
#include "pccd/model.hpp"
#include "pccd/trainer.hpp"

namespace pccd {

std::vector<Closeness> true_labels(std::span<const UserTriplet> triplets);

// User -> community of the user nodes of `graph` under `partition`.
CommunityMap user_communities(const CommunityPartition& partition, const BipartiteGraph& graph);

// Labels each triplet from a predicted user partition and scores it against
// the triplet's true label. Users without a predicted community are treated
// as singletons.
MetricsReport partition_baseline(const CommunityMap& predicted, std::span<const UserTriplet> triplets);

// Uniform random assignment of `users` to `num_communities` communities.
MetricsReport random_baseline(std::span<const std::string> users, int num_communities,
                              std::span<const UserTriplet> triplets, std::uint64_t seed);

MetricsReport evaluate_model(const PccdModel& model, const CrossGraphDataset& dataset,
                             const CommunityPartition& main_partition,
                             std::span<const UserTriplet> triplets);

// Balanced triplets whose three members all have `type`, scored with the model.
// Throws std::invalid_argument when the type has too few users.
MetricsReport evaluate_user_type(const PccdModel& model, const CrossGraphDataset& dataset,
                                 const CommunityPartition& main_partition, const CommunityMap& truth,
                                 UserType type, std::size_t count_per_label, std::uint64_t seed);

std::map<UserType, MetricsReport> user_type_eval(const PccdModel& model,
                                                 const CrossGraphDataset& dataset,
                                                 const CommunityPartition& main_partition,
                                                 const CommunityMap& truth,
                                                 std::size_t count_per_label, std::uint64_t seed);

// One train/evaluate run: the model sees the full main graph and a
// delta-sparsified sparse graph. Labels come from the planted truth, or, when
// the data carries none, from communities detected on the sparsified sparse graph.
struct ExperimentConfig {
  double delta = 0.5;
  std::size_t train_per_label = 1000;
  std::size_t test_per_label = 500;
  TrainConfig train;
  std::uint64_t seed = 11;
};

struct ExperimentSetup {
  CrossGraphDataset view;
  CommunityPartition main_partition;
  CommunityMap labels;  // truth or pseudo-labels
  std::vector<UserTriplet> train_triplets;
  std::vector<UserTriplet> test_triplets;
};

ExperimentSetup prepare_experiment(const PlantedData& planted, const ExperimentConfig& config);

struct BaselineReports {
  MetricsReport random;          // uniform random user partition
  MetricsReport infomap_sparse;  // map-equation communities of the sparse view
};

// `random_communities` sets the number of communities of the random baseline.
BaselineReports evaluate_baselines(const ExperimentSetup& setup, const ExperimentConfig& config,
                                   int random_communities);

struct ExperimentResult {
  MetricsReport pccd;
  MetricsReport random;
  MetricsReport infomap_sparse;
  TrainResult training;
};

ExperimentResult run_experiment(const ExperimentSetup& setup, const ExperimentConfig& config,
                                int random_communities);

struct SweepRow {
  double delta = 1.0;
  MetricsReport report;
};

// Retrains on (full main, sparsify(sparse, delta)) for every delta and scores
// a fixed mutual-user test set.
std::vector<SweepRow> sparsity_sweep(const PlantedData& planted, std::span<const double> deltas,
                                     const ExperimentConfig& config);
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

// Affiliation scores c^G, one row per user. Throws for users unknown to the dataset.
Matrix affiliation_dump(const PccdModel& model, const CrossGraphDataset& dataset,
                        const CommunityPartition& main_partition,
                        std::span<const std::string> users, Side side);
void write_affiliation_csv(const Matrix& scores, std::span<const std::string> users,
                           const std::filesystem::path& path);

}  // namespace pccd
