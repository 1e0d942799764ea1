#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pccd/trainer.hpp"

namespace pccd {
namespace {

PlantConfig small_plant() {
  PlantConfig c;
  c.communities = 3;
  c.mutual_users = 60;
  c.main_only_users = 12;
  c.sparse_only_users = 12;
  c.main_objects_per_community = 8;
  c.sparse_objects_per_community = 8;
  c.main_p_in = 0.5;
  c.main_p_out = 0.03;
  c.sparse_p_in = 0.3;
  c.sparse_p_out = 0.02;
  return c;
}

TrainConfig small_train() {
  TrainConfig c;
  c.batch_size = 30;
  c.epochs = 8;
  c.communities = 4;
  c.direct_dim = 6;
  c.embedding_dim = 6;
  c.attention_dim = 4;
  c.correlation_dim = 4;
  return c;
}

TEST(PlantTest, CountsAndBalance) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  EXPECT_EQ(d.truth.size(), 84u);
  EXPECT_EQ(d.dataset.mutual_users.size(), d.dataset.users_of_type(UserType::kMutual).size());
  std::map<int, int> sizes;
  for (const auto& [u, c] : d.truth) ++sizes[c];
  for (const auto& [c, n] : sizes) EXPECT_EQ(n, 28);
  EXPECT_EQ(d.dataset.main.objects().size(), 24u);
  for (const auto& u : d.dataset.users_of_type(UserType::kSparseOnly)) EXPECT_EQ(u.rfind("so", 0), 0u);
}

TEST(PlantTest, LinkDensityFollowsProbabilities) {
  PlantConfig c = small_plant();
  c.mutual_users = 300;
  const PlantedData d = plant_synthetic_dataset(c);
  double inside = 0, across = 0;
  for (const auto& l : d.dataset.main.links()) {
    const int uc = d.truth.at(d.dataset.main.users().at(l.user));
    const int oc = std::stoi(d.dataset.main.objects().at(l.object).substr(1)) / 8;
    (uc == oc ? inside : across) += 1.0;
  }
  const double users = static_cast<double>(d.dataset.main.num_users());
  EXPECT_NEAR(inside / (users * 8), 0.5, 0.03);
  EXPECT_NEAR(across / (users * 16), 0.03, 0.01);
}

TEST(PlantTest, DeterministicAndValidated) {
  const PlantedData a = plant_synthetic_dataset(small_plant());
  const PlantedData b = plant_synthetic_dataset(small_plant());
  EXPECT_EQ(a.dataset.main, b.dataset.main);
  EXPECT_EQ(a.truth, b.truth);
  PlantConfig bad = small_plant();
  bad.main_p_out = 0.9;
  EXPECT_THROW(plant_synthetic_dataset(bad), std::invalid_argument);
}

TEST(TripletTest, Labels) {
  const CommunityMap truth = {{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}};
  EXPECT_EQ(label_triplet("a", "b", "c", truth).label, 1.0);
  EXPECT_EQ(label_triplet("a", "c", "b", truth).relation, -1);
  EXPECT_EQ(label_triplet("a", "c", "d", truth).label, 0.5);
  EXPECT_THROW(label_triplet("a", "a", "c", truth), std::invalid_argument);
  EXPECT_THROW(label_triplet("a", "b", "zz", truth), std::invalid_argument);
}

TEST(TripletTest, BalancedDistinctAndCorrect) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  const auto triplets = sample_triplets(d.dataset.mutual_users, d.truth, 200, 4);
  ASSERT_EQ(triplets.size(), 600u);
  std::map<double, int> counts;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& t : triplets) {
    ++counts[t.label];
    EXPECT_TRUE(seen.emplace(t.i, t.j, t.k).second);
    EXPECT_EQ(t, label_triplet(t.i, t.j, t.k, d.truth));
  }
  EXPECT_EQ(counts[0.0], 200);
  EXPECT_EQ(counts[0.5], 200);
  EXPECT_EQ(counts[1.0], 200);
  EXPECT_EQ(sample_triplets(d.dataset.mutual_users, d.truth, 50, 9),
            sample_triplets(d.dataset.mutual_users, d.truth, 50, 9));
}

TEST(TripletTest, InfeasibleRequestThrows) {
  const CommunityMap truth = {{"a", 0}, {"b", 0}, {"c", 0}};
  const std::vector<std::string> users = {"a", "b", "c"};
  EXPECT_THROW(sample_triplets(users, truth, 1, 1), std::invalid_argument);  // no closer triplets
  const CommunityMap mixed = {{"a", 0}, {"b", 0}, {"c", 1}};
  // Exactly 2 closer, 2 farther and 2 similar triplets exist.
  EXPECT_EQ(sample_triplets(users, mixed, 2, 1).size(), 6u);
  EXPECT_THROW(sample_triplets(users, mixed, 3, 1), std::invalid_argument);
}

TEST(MaskTest, DropRate) {
  MultiHot view;
  for (std::size_t o = 0; o < 20000; ++o) view.push_back({o, 1.0});
  Rng rng(1);
  EXPECT_EQ(apply_mask(view, 0.0, rng), view);
  EXPECT_TRUE(apply_mask(view, 1.0, rng).empty());
  EXPECT_NEAR(static_cast<double>(apply_mask(view, 0.05, rng).size()) / 20000.0, 0.95, 0.01);
  EXPECT_THROW(apply_mask(view, 1.5, rng), std::invalid_argument);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ModelConfig config;
  config.communities = 2;
  config.direct_dim = config.embedding_dim = config.attention_dim = config.correlation_dim = 2;
  config.main_objects = 2;
  config.raw_communities = 1;
  PccdModel model = init_model(config, {0, 0}, 1);
  ModelParams grads = model.params.zeros_like();
  grads.head_bias(0) = 3.0;
  grads.main.direct_bias(1) = -0.02;
  AdamState state = AdamState::zeros_like(model.params);
  const ModelParams before = model.params;
  adam_step(model.params, grads, state, {0.01, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(model.params.head_bias(0), before.head_bias(0) - 0.01, 1e-9);
  EXPECT_NEAR(model.params.main.direct_bias(1), before.main.direct_bias(1) + 0.01, 1e-8);
  EXPECT_EQ(model.params.sparse.object_embedding, before.sparse.object_embedding);
  EXPECT_EQ(state.step, 1);
  // Second step with the same gradient: bias-corrected moments stay at g and g^2.
  adam_step(model.params, grads, state, {0.01, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(model.params.head_bias(0), before.head_bias(0) - 0.02, 1e-9);
}

TEST(TrainTest, LossFallsAndRunIsReproducible) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  const auto partition = detect_communities(d.dataset.main, 1);
  const auto triplets = sample_triplets(d.dataset.mutual_users, d.truth, 100, 2);
  const TrainResult a = train(d.dataset, triplets, partition, small_train());
  ASSERT_EQ(a.loss_curve.size(), 8u);
  ASSERT_EQ(a.validation_loss.size(), 8u);
  EXPECT_LT(a.loss_curve.back(), a.loss_curve.front());
  for (double l : a.loss_curve) EXPECT_TRUE(std::isfinite(l));

  const TrainResult b = train(d.dataset, triplets, partition, small_train());
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.model.params.head_weight, b.model.params.head_weight);

  const auto y = predict(a.model, d.dataset, partition, triplets);
  ASSERT_EQ(y.size(), triplets.size());
  for (double v : y) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(TrainTest, RejectsNonMutualUsers) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  const auto partition = detect_communities(d.dataset.main, 1);
  const auto so = d.dataset.users_of_type(UserType::kSparseOnly);
  const std::vector<UserTriplet> bad = {label_triplet(so[0], so[1], so[2], d.truth)};
  EXPECT_THROW(train(d.dataset, bad, partition, small_train()), std::invalid_argument);
  EXPECT_THROW(train(d.dataset, std::vector<UserTriplet>{}, partition, small_train()), std::invalid_argument);
  TrainConfig cfg = small_train();
  cfg.rho = 2.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TrainTest, DivergenceIsReported) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  const auto partition = detect_communities(d.dataset.main, 1);
  const auto triplets = sample_triplets(d.dataset.mutual_users, d.truth, 30, 2);
  TrainConfig cfg = small_train();
  cfg.learning_rate = 1e300;
  cfg.epochs = 30;
  EXPECT_THROW(train(d.dataset, triplets, partition, cfg), std::runtime_error);
}

TEST(InputTest, UserViews) {
  const PlantedData d = plant_synthetic_dataset(small_plant());
  const auto partition = detect_communities(d.dataset.main, 1);
  const UserInput so = make_user_input(d.dataset, partition, "so0");
  EXPECT_TRUE(so.main.empty());
  EXPECT_EQ(so.raw_community, -1);
  EXPECT_FALSE(so.sparse.empty());
  const UserInput mu = make_user_input(d.dataset, partition, "u0");
  EXPECT_EQ(mu.raw_community, user_community(partition, d.dataset.main, "u0"));
}

TEST(LossCurveTest, Csv) {
  const auto path = std::filesystem::temp_directory_path() / "pccd_curve.csv";
  write_loss_curve(std::vector<double>{0.9, 0.5}, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,mean_loss");
  EXPECT_EQ(first, "1,0.9");
}

}  // namespace
}  // namespace pccd
