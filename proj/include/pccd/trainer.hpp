#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pccd/graph.hpp"
#include "pccd/map_equation.hpp"
#include "pccd/model.hpp"
#include "pccd/rng.hpp"

namespace pccd {

// ---------------------------------------------------------------------------
// Synthetic planted-community data.

struct PlantConfig {
  int communities = 6;
  std::size_t mutual_users = 300;
  std::size_t main_only_users = 60;
  std::size_t sparse_only_users = 60;
  std::size_t main_objects_per_community = 20;
  std::size_t sparse_objects_per_community = 20;
  double main_p_in = 0.3;
  double main_p_out = 0.02;
  double sparse_p_in = 0.15;
  double sparse_p_out = 0.01;
  // Popular objects without a home community, linked from every user with
  // probability hub_p.
  std::size_t main_hub_objects = 0;
  std::size_t sparse_hub_objects = 0;
  double hub_p = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PlantedData {
  CrossGraphDataset dataset;
  CommunityMap truth;  // every user
};

// Users get balanced planted communities shared by both graphs; each link is an
// independent Bernoulli draw (p_in inside the home community, p_out across).
PlantedData plant_synthetic_dataset(const PlantConfig& config);

// ---------------------------------------------------------------------------
// Triplets.

struct UserTriplet {
  std::string i;
  std::string j;
  std::string k;
  int relation = 0;  // S_jk in {-1, 0, +1}
  double label = 0.5;

  friend bool operator==(const UserTriplet&, const UserTriplet&) = default;
};

// Throws std::invalid_argument for repeated users or missing ground truth.
UserTriplet label_triplet(const std::string& i, const std::string& j, const std::string& k,
                          const CommunityMap& truth);

// Exactly count_per_label triplets of each closeness label, no duplicates,
// drawn uniformly from the triplets of `users`. Throws when a label has fewer
// than count_per_label distinct triplets.
std::vector<UserTriplet> sample_triplets(std::span<const std::string> users,
                                         const CommunityMap& truth, std::size_t count_per_label,
                                         std::uint64_t seed);

// Drops each entry independently with probability rho.
MultiHot apply_mask(const MultiHot& view, double rho, Rng& rng);

// Model input of one user from the dataset (either view may be empty).
UserInput make_user_input(const CrossGraphDataset& dataset, const CommunityPartition& main_partition,
                          const std::string& user);

// ---------------------------------------------------------------------------
// Optimisation.

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  long step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t batch_size = 200;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t communities = 8;
  double alpha = 0.1;
  double rho = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t direct_dim = 32;
  std::size_t embedding_dim = 32;
  std::size_t attention_dim = 16;
  std::size_t correlation_dim = 16;
  double validation_fraction = 0.1;
  Components components;
  std::uint64_t seed = 7;

  void validate() const;
};

struct TrainResult {
  PccdModel model;
  std::vector<double> loss_curve;       // mean training loss per epoch
  std::vector<double> validation_loss;  // eval-mode loss per epoch
};

// Mini-batch training on mutual-user triplets: masked forward, loss, backward,
// memory update, Adam step. Throws std::runtime_error on a non-finite loss.
TrainResult train(const CrossGraphDataset& dataset, std::span<const UserTriplet> triplets,
                  const CommunityPartition& main_partition, const TrainConfig& config);

// Eval-mode predictions y_hat for arbitrary triplets.
std::vector<double> predict(const PccdModel& model, const CrossGraphDataset& dataset,
                            const CommunityPartition& main_partition,
                            std::span<const UserTriplet> triplets);

void write_loss_curve(std::span<const double> curve, const std::filesystem::path& path);

}  // namespace pccd
