#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pccd/graph.hpp"

namespace pccd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Side { kMain, kSparse };

// Switches for the component-removal experiments. All on = full model.
struct Components {
  bool raw_community = true;     // v_c on the main side
  bool direct = true;            // v_e
  bool node_filter = true;       // attention over neighbours; off = uniform weights
  bool community_filter = true;  // per-community attention scale w; off = frozen at 1

  friend bool operator==(const Components&, const Components&) = default;
};

struct ModelConfig {
  std::size_t communities = 8;  // K, per graph
  std::size_t direct_dim = 32;
  std::size_t embedding_dim = 32;
  std::size_t attention_dim = 16;
  std::size_t correlation_dim = 16;
  std::size_t raw_communities = 1;  // communities found in the main graph
  std::size_t main_objects = 1;
  std::size_t sparse_objects = 1;
  double alpha = 0.1;
  double batch_norm_epsilon = 1e-5;
  double batch_norm_momentum = 0.9;
  Components components;

  // Width of the propagative representation on each side.
  std::size_t representation_dim(Side side) const {
    return (side == Side::kMain ? raw_communities : 0) + direct_dim + embedding_dim;
  }
  // Throws std::invalid_argument on a zero dimension or negative alpha.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Learnable tensors of one graph side.
struct SideParams {
  Matrix direct_weight;      // direct_dim x objects
  Vector direct_bias;        // direct_dim
  Matrix object_embedding;   // objects x embedding_dim
  Matrix attention_weight;   // attention_dim x embedding_dim
  Vector attention_bias;     // attention_dim
  Vector attention_proj;     // attention_dim
  Vector bn_scale;           // representation_dim
  Vector bn_shift;           // representation_dim
  Vector affiliation_proj;   // representation_dim
  Matrix update_weight;      // representation_dim x 2 representation_dim, acts on [v, d_k]
  Vector update_bias;        // representation_dim
  Matrix candidate_weight;   // representation_dim x representation_dim
  Vector candidate_bias;     // representation_dim
  Matrix correlation_weight; // correlation_dim x K
  Vector correlation_bias;   // correlation_dim
};

struct ModelParams {
  SideParams main;
  SideParams sparse;
  Vector community_weight;  // raw_communities, scales attention logits on the main side
  Vector head_weight;       // 2 correlation_dim, acts on [r^S, r^M]
  Vector head_bias;         // 1

  // Visits every tensor in checkpoint order as a flat span of doubles.
  void for_each(const std::function<void(std::string_view, std::span<double>)>& fn);
  void for_each(const std::function<void(std::string_view, std::span<const double>)>& fn) const;
  ModelParams zeros_like() const;
  std::size_t size() const;
};

struct BatchNormStats {
  Vector mean;
  Vector variance;
};

// Non-trainable state: community memory D (K x representation_dim per side)
// and running batch-norm statistics.
struct ModelState {
  Matrix main_memory;
  Matrix sparse_memory;
  BatchNormStats main_bn;
  BatchNormStats sparse_bn;
};

struct PccdModel {
  ModelConfig config;
  ModelParams params;
  ModelState state;
  std::vector<int> object_community;  // raw community of each main-graph object

  const SideParams& side(Side s) const { return s == Side::kMain ? params.main : params.sparse; }
  const Matrix& memory(Side s) const {
    return s == Side::kMain ? state.main_memory : state.sparse_memory;
  }
};

// Xavier-uniform weights, zero biases, unit community weights, identity batch norm.
PccdModel init_model(const ModelConfig& config, std::vector<int> object_community,
                     std::uint64_t seed);

// Everything the model reads about one user.
struct UserInput {
  MultiHot main;
  MultiHot sparse;
  int raw_community = -1;  // -1: no main-graph community
};

struct TripletInput {
  std::array<UserInput, 3> members;  // i, j, k
  double label = 0.5;                // y
};

enum class Mode { kTrain, kEval };

// Cached activations of one side for a batch of users (one row per user).
struct SideTrace {
  struct UserCache {
    std::vector<std::size_t> neighbors;  // object indices after masking
    std::vector<double> weights;         // link weights
    Vector attention_logit;              // a_j
    Vector propagation;                  // softmax weights
  };
  std::vector<UserCache> users;
  Matrix concat;       // [v_c, v_e, v_p]
  Matrix normalized;   // x_hat
  Vector inv_std;
  Matrix representation;  // v
  Matrix squashed;        // tanh(v)
  Matrix affiliation;     // c, users x K
  // Memory update caches.
  Matrix gate_from_user;    // W_s[:, :dim] v per user
  Matrix gate_from_memory;  // W_s[:, dim:] d_k per community
  Matrix candidate;         // z per user
  Matrix updated_memory;    // D*
  double constraint = 0.0;  // L_c(D*)
  BatchNormStats batch_stats;
  // Object-level attention caches (objects x attention_dim).
  Matrix object_hidden;
  Vector object_logit;
};

struct BatchTrace {
  Mode mode = Mode::kTrain;
  SideTrace main;
  SideTrace sparse;
  Matrix pair_ij;  // tanh([r^S_ij, r^M_ij]) per triplet (rows)
  Matrix pair_ik;
  std::vector<double> prediction;  // y_hat
  std::vector<double> label;
  double prediction_loss = 0.0;  // mean cross entropy
  double loss = 0.0;             // prediction_loss + alpha (L_c^S + L_c^M)
};

// Forward pass for a batch. kTrain uses batch statistics and computes the
// updated memory D*; kEval uses running statistics and leaves D* = D.
BatchTrace forward_batch(const PccdModel& model, std::span<const TripletInput> batch, Mode mode);

// Gradients of BatchTrace::loss with respect to every parameter. The memory is
// a state buffer and receives none; the update gate only sees the constraint.
ModelParams backward_batch(const PccdModel& model, std::span<const TripletInput> batch,
                           const BatchTrace& trace);

// Commits the batch: memory <- D*, running batch-norm statistics updated.
void commit_state(PccdModel& model, const BatchTrace& trace);

// Representation v and affiliation scores c of single users in eval mode.
struct UserEncoding {
  Vector representation;
  Vector affiliation;
};
UserEncoding encode_user(const PccdModel& model, const UserInput& user, Side side);

// Individual formula pieces, exposed for direct testing.
Vector affiliation_scores(const Vector& representation, const Matrix& memory,
                          const Vector& projection);
Matrix memory_update(std::span<const Vector> users, const Matrix& memory, const SideParams& side);
double community_constraint(const Matrix& memory);
double pair_prediction(const ModelParams& params, const std::array<Vector, 3>& main_affiliation,
                       const std::array<Vector, 3>& sparse_affiliation);
double total_loss(double prediction, double label, double constraint_sparse,
                  double constraint_main, double alpha);

enum class Closeness { kFarther = 0, kSimilar = 1, kCloser = 2 };
std::string_view to_string(Closeness c);
Closeness classify_score(double prediction);
Closeness closeness_from_label(double label);
double label_from_closeness(Closeness c);

void save_checkpoint(const PccdModel& model, const std::filesystem::path& path);
PccdModel load_checkpoint(const std::filesystem::path& path);

}  // namespace pccd
