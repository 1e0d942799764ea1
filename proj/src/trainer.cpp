#include "pccd/trainer.hpp"
#include "pccd/format.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pccd {
namespace {

enum Stream : std::uint64_t { kInit = 0, kSplit = 1, kOrder = 2, kMask = 3 };

using InputCache = std::unordered_map<std::string, UserInput>;

const UserInput& cached_input(InputCache& cache, const CrossGraphDataset& dataset,
                              const CommunityPartition& partition, const std::string& user) {
  auto it = cache.find(user);
  if (it == cache.end()) it = cache.emplace(user, make_user_input(dataset, partition, user)).first;
  return it->second;
}

TripletInput make_triplet_input(InputCache& cache, const CrossGraphDataset& dataset,
                                const CommunityPartition& partition, const UserTriplet& t) {
  TripletInput input;
  input.members = {cached_input(cache, dataset, partition, t.i),
                   cached_input(cache, dataset, partition, t.j),
                   cached_input(cache, dataset, partition, t.k)};
  input.label = t.label;
  return input;
}

ModelConfig model_config(const TrainConfig& cfg, const CrossGraphDataset& dataset,
                         const CommunityPartition& partition) {
  ModelConfig m;
  m.communities = cfg.communities;
  m.direct_dim = cfg.direct_dim;
  m.embedding_dim = cfg.embedding_dim;
  m.attention_dim = cfg.attention_dim;
  m.correlation_dim = cfg.correlation_dim;
  m.raw_communities = static_cast<std::size_t>(partition.num_communities);
  m.main_objects = dataset.main.num_objects();
  m.sparse_objects = dataset.sparse.num_objects();
  m.alpha = cfg.alpha;
  m.components = cfg.components;
  return m;
}

double eval_loss(const PccdModel& model, std::span<const TripletInput> inputs) {
  if (inputs.empty()) return 0.0;
  return forward_batch(model, inputs, Mode::kEval).loss;
}

}  // namespace

MultiHot apply_mask(const MultiHot& view, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1]");
  if (rho == 0.0) return view;
  MultiHot kept;
  kept.reserve(view.size());
  for (const auto& entry : view) {
    if (!rng.bernoulli(rho)) kept.push_back(entry);
  }
  return kept;
}

UserInput make_user_input(const CrossGraphDataset& dataset, const CommunityPartition& main_partition,
                          const std::string& user) {
  UserInput input;
  input.main = multi_hot(dataset.main, user);
  input.sparse = multi_hot(dataset.sparse, user);
  input.raw_community = user_community(main_partition, dataset.main, user);
  return input;
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& config) {
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

  std::vector<std::span<const double>> g;
  grads.for_each([&](std::string_view, std::span<const double> v) { g.push_back(v); });
  std::vector<std::span<double>> m;
  state.first_moment.for_each([&](std::string_view, std::span<double> v) { m.push_back(v); });
  std::vector<std::span<double>> s;
  state.second_moment.for_each([&](std::string_view, std::span<double> v) { s.push_back(v); });

  std::size_t tensor = 0;
  params.for_each([&](std::string_view name, std::span<double> p) {
    if (g[tensor].size() != p.size()) {
      throw std::invalid_argument("adam: gradient shape differs for " + std::string(name));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double grad = g[tensor][i];
      m[tensor][i] = config.beta1 * m[tensor][i] + (1.0 - config.beta1) * grad;
      s[tensor][i] = config.beta2 * s[tensor][i] + (1.0 - config.beta2) * grad * grad;
      const double m_hat = m[tensor][i] / correction1;
      const double s_hat = s[tensor][i] / correction2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(s_hat) + config.epsilon);
    }
    ++tensor;
  });
}

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0 || communities == 0 || direct_dim == 0 ||
      embedding_dim == 0 || attention_dim == 0 || correlation_dim == 0) {
    throw std::invalid_argument("train: sizes must be positive");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("train: rho must lie in [0, 1]");
  if (!(alpha >= 0.0)) throw std::invalid_argument("train: alpha must be non-negative");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: negative learning rate");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train: validation fraction must lie in [0, 1)");
  }
}

TrainResult train(const CrossGraphDataset& dataset, std::span<const UserTriplet> triplets,
                  const CommunityPartition& main_partition, const TrainConfig& config) {
  config.validate();
  if (triplets.empty()) throw std::invalid_argument("train: no training triplets");
  for (const auto& t : triplets) {
    for (const std::string* user : {&t.i, &t.j, &t.k}) {
      auto it = dataset.user_type.find(*user);
      if (it == dataset.user_type.end() || it->second != UserType::kMutual) {
        throw std::invalid_argument("train: triplet user '" + *user + "' is not a mutual user");
      }
    }
  }

  TrainResult result;
  result.model = init_model(model_config(config, dataset, main_partition),
                            object_communities(main_partition, dataset.main),
                            derive_seed(config.seed, kInit));
  PccdModel& model = result.model;

  InputCache cache;
  std::vector<TripletInput> inputs;
  inputs.reserve(triplets.size());
  for (const auto& t : triplets) inputs.push_back(make_triplet_input(cache, dataset, main_partition, t));

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(config.seed, kSplit));
  split_rng.shuffle(std::span<std::size_t>(order));
  auto validation_count =
      static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(order.size())));
  if (validation_count >= order.size()) validation_count = 0;
  std::vector<TripletInput> validation;
  for (std::size_t v = 0; v < validation_count; ++v) validation.push_back(inputs[order[v]]);
  std::vector<std::size_t> training(order.begin() + static_cast<long>(validation_count), order.end());

  AdamState adam = AdamState::zeros_like(model.params);
  const AdamConfig adam_config{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
  Rng order_rng(derive_seed(config.seed, kOrder));
  Rng mask_rng(derive_seed(config.seed, kMask));
  std::vector<TripletInput> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(training));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < training.size(); start += config.batch_size) {
      const std::size_t end = std::min(training.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t b = start; b < end; ++b) {
        TripletInput input = inputs[training[b]];
        for (auto& member : input.members) member.main = apply_mask(member.main, config.rho, mask_rng);
        batch.push_back(std::move(input));
      }
      const BatchTrace trace = forward_batch(model, batch, Mode::kTrain);
      if (!std::isfinite(trace.loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch + 1 << ", batch "
            << start / config.batch_size + 1 << " (prediction loss " << trace.prediction_loss
            << ", constraints " << trace.main.constraint << '/' << trace.sparse.constraint << ')';
        throw std::runtime_error(msg.str());
      }
      const ModelParams grads = backward_batch(model, batch, trace);
      commit_state(model, trace);
      adam_step(model.params, grads, adam, adam_config);
      loss_sum += trace.loss * static_cast<double>(batch.size());
    }
    result.loss_curve.push_back(loss_sum / static_cast<double>(training.size()));
    result.validation_loss.push_back(eval_loss(model, validation));
  }
  return result;
}

std::vector<double> predict(const PccdModel& model, const CrossGraphDataset& dataset,
                            const CommunityPartition& main_partition,
                            std::span<const UserTriplet> triplets) {
  InputCache cache;
  std::vector<TripletInput> inputs;
  inputs.reserve(triplets.size());
  for (const auto& t : triplets) inputs.push_back(make_triplet_input(cache, dataset, main_partition, t));
  if (inputs.empty()) return {};
  return forward_batch(model, inputs, Mode::kEval).prediction;
}

void write_loss_curve(std::span<const double> curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss curve " + path.string());
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) out << e + 1 << ',' << format_double(curve[e]) << '\n';
}

}  // namespace pccd
