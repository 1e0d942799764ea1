// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures (0 = all passed). An optional argument runs only the
// criteria whose name contains it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pccd/eval.hpp"
#include "pccd/metrics.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace pccd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fixed(double v, int digits = 4) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, v);
  return buffer;
}

std::string sci(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.2e", v);
  return buffer;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Benchmarks.

// Six clean communities; both graphs carry the planted structure.
PlantConfig easy_plant(std::uint64_t seed = 1) {
  PlantConfig c;
  c.seed = seed;
  return c;
}

// Every user also links to popular hub objects that carry no community signal.
PlantConfig hub_plant(std::uint64_t seed = 1) {
  PlantConfig c;
  c.main_p_in = 0.15;
  c.main_p_out = 0.015;
  c.main_hub_objects = 40;
  c.sparse_hub_objects = 40;
  c.hub_p = 0.8;
  c.seed = seed;
  return c;
}

ExperimentConfig experiment(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.train.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome gradient_correctness() {
  ModelConfig config;
  config.communities = 3;
  config.direct_dim = 6;
  config.embedding_dim = 5;
  config.attention_dim = 4;
  config.correlation_dim = 4;
  config.raw_communities = 3;
  config.main_objects = 10;
  config.sparse_objects = 8;
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto result =
        testing::check_gradients(testing::random_model(config, seed), testing::random_batch(config, 20, 100 + seed));
    checked += result.checked;
    if (result.max_relative_error >= worst) {
      worst = result.max_relative_error;
      where = result.worst_tensor;
    }
  }
  return {worst < 1e-4, "max relative error " + sci(worst) + " at " + where + " over " +
                            std::to_string(checked) + " partials (< 1e-4)"};
}

Outcome map_equation_oracle() {
  int graphs = 0;
  int matched = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 4 + seed % 5;  // 4..8 nodes
    const FlowGraph g = testing::random_graph(n, 0.35, 500 + seed);
    const double best = testing::exhaustive_min_codelength(g);
    const double found = detect_communities(g, seed).codelength;
    ++graphs;
    worst = std::max(worst, std::abs(found - best));
    if (std::abs(found - best) <= 1e-9) ++matched;
  }
  const FlowGraph triangles =
      testing::make_flow_graph(6, {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}});
  const CommunityPartition p = detect_communities(triangles, 1);
  const bool split = p.num_communities == 2 && p.assignment == std::vector<int>{0, 0, 0, 1, 1, 1};
  return {matched == graphs && split,
          std::to_string(matched) + "/" + std::to_string(graphs) + " graphs at the exhaustive optimum (max gap " +
              sci(worst) + "); disconnected triangles -> " + std::to_string(p.num_communities) + " communities"};
}

Outcome random_baseline_check() {
  const PlantedData data = plant_synthetic_dataset(easy_plant());
  const auto triplets = sample_triplets(data.dataset.mutual_users, data.truth, 10000, 3);
  const MetricsReport r = random_baseline(data.dataset.mutual_users, 6, triplets, 4);
  const bool pass = std::abs(r.acc - 1.0 / 3.0) <= 0.02 && std::abs(r.mcc) <= 0.02;
  return {pass, "n=" + std::to_string(r.n_triplets) + " ACC " + fixed(r.acc) + " (1/3 +- 0.02), MCC " +
                    fixed(r.mcc) + " (0 +- 0.02)"};
}

Outcome learning_signal() {
  const PlantedData data = plant_synthetic_dataset(easy_plant());
  const ExperimentConfig config = experiment(11);
  const ExperimentResult r = run_experiment(prepare_experiment(data, config), config, 6);
  const bool pass = r.pccd.acc >= 0.85 && r.pccd.acc - r.random.acc >= 0.10 &&
                    r.pccd.acc - r.infomap_sparse.acc >= 0.10;
  return {pass, "PCCD ACC " + fixed(r.pccd.acc) + " vs random " + fixed(r.random.acc) + ", infomap on sparse " +
                    fixed(r.infomap_sparse.acc) + " (>= 0.85, margins >= 0.10)"};
}

Outcome sparsity_trend() {
  const std::vector<double> deltas = {0.1, 0.5, 0.9};
  std::vector<std::vector<MetricsReport>> reports(deltas.size());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const PlantedData data = plant_synthetic_dataset(hub_plant(seed));
    const auto rows = sparsity_sweep(data, deltas, experiment(20 + seed));
    for (std::size_t d = 0; d < rows.size(); ++d) reports[d].push_back(rows[d].report);
  }
  std::vector<double> acc;
  for (const auto& r : reports) acc.push_back(average_reports(r).acc);
  const bool pass = acc[2] >= acc[1] && acc[1] >= acc[0] - 0.02;
  return {pass, "mean ACC over 3 seeds: delta 0.1 " + fixed(acc[0]) + ", 0.5 " + fixed(acc[1]) + ", 0.9 " +
                    fixed(acc[2]) + " (need ACC(0.9) >= ACC(0.5) >= ACC(0.1) - 0.02)"};
}

Outcome ablation_direction() {
  struct Variant {
    const char* name;
    std::function<void(TrainConfig&)> apply;
  };
  const std::vector<Variant> variants = {
      {"full", [](TrainConfig&) {}},
      {"no-rcr", [](TrainConfig& c) { c.components.raw_community = false; }},
      {"no-dtr", [](TrainConfig& c) { c.components.direct = false; }},
      {"no-nf", [](TrainConfig& c) { c.components.node_filter = false; }},
      {"no-cf", [](TrainConfig& c) { c.components.community_filter = false; }},
      {"no-cc", [](TrainConfig& c) { c.alpha = 0.0; }},
      {"no-mt", [](TrainConfig& c) { c.rho = 0.0; }},
  };
  std::vector<double> acc(variants.size(), 0.0);
  const int seeds = 3;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const PlantedData data = plant_synthetic_dataset(hub_plant(seed));
    const ExperimentConfig base = experiment(30 + seed);
    const ExperimentSetup setup = prepare_experiment(data, base);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      TrainConfig config = base.train;
      variants[v].apply(config);
      const TrainResult trained = train(setup.view, setup.train_triplets, setup.main_partition, config);
      acc[v] += evaluate_model(trained.model, setup.view, setup.main_partition, setup.test_triplets).acc / seeds;
    }
  }
  std::size_t largest = 1;
  bool bounded = true;
  std::string detail = "mean ACC over 3 seeds: full " + fixed(acc[0]);
  for (std::size_t v = 1; v < variants.size(); ++v) {
    detail += std::string(", ") + variants[v].name + " " + fixed(acc[v]);
    if (acc[v] < acc[largest]) largest = v;
    bounded = bounded && acc[v] <= acc[0] + 0.01;
  }
  detail += std::string("; largest drop: ") + variants[largest].name;
  return {std::string(variants[largest].name) == "no-nf" && bounded, detail};
}

Outcome unit_values() {
  std::vector<std::string> failures;
  const CommunityMap truth = {{"i", 0}, {"same", 0}, {"other", 1}, {"other2", 2}};
  const struct {
    const char* j;
    const char* k;
    int relation;
    double label;
  } cases[] = {{"same", "other", 1, 1.0}, {"other", "same", -1, 0.0}, {"other", "other2", 0, 0.5}};
  for (const auto& c : cases) {
    const UserTriplet t = label_triplet("i", c.j, c.k, truth);
    if (t.relation != c.relation || t.label != c.label || t.label != 0.5 * (1.0 + c.relation)) {
      failures.push_back("label for S=" + std::to_string(c.relation));
    }
  }
  Matrix same(4, 3);
  for (int k = 0; k < 4; ++k) same.row(k) << 0.3, -1.2, 2.0;
  if (std::abs(community_constraint(same) - 0.5) > 1e-15) failures.push_back("L_c identical rows");
  for (int K : {2, 5, 8}) {
    if (std::abs(community_constraint(2.0 * Matrix::Identity(K, K)) - 1.0 / (2.0 * K)) > 1e-15) {
      failures.push_back("L_c orthogonal rows K=" + std::to_string(K));
    }
  }
  if (classify_score(0.3) != Closeness::kFarther) failures.push_back("classify_score(0.3)");
  Rng rng(1);
  const MultiHot view = {{0, 1.0}, {3, 2.0}, {7, 1.0}};
  if (apply_mask(view, 0.0, rng) != view) failures.push_back("rho=0 mask");
  std::string detail = "labels {0, 0.5, 1}, L_c 0.5 and 1/(2K), classify_score(0.3)=farther, rho=0 identity";
  for (const auto& f : failures) detail += "; FAILED " + f;
  return {failures.empty(), detail};
}

Outcome head_antisymmetry() {
  ModelConfig config = testing::tiny_config();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    PccdModel model = testing::random_model(config, seed);
    model.params.head_bias(0) = 0.0;
    auto batch = testing::random_batch(config, 1, 7000 + seed);
    std::vector<TripletInput> swapped = batch;
    std::swap(swapped[0].members[1], swapped[0].members[2]);
    const double forward = forward_batch(model, batch, Mode::kEval).prediction[0];
    const double backward = forward_batch(model, swapped, Mode::kEval).prediction[0];
    worst = std::max(worst, std::abs(forward + backward - 1.0));
  }
  return {worst <= 1e-12, "max |y(i,j,k) + y(i,k,j) - 1| = " + sci(worst) + " over 1000 models (<= 1e-12)"};
}

Outcome determinism() {
  PlantConfig plant = easy_plant();
  plant.mutual_users = 120;
  const PlantedData data = plant_synthetic_dataset(plant);
  ExperimentConfig config = experiment(5);
  config.train_per_label = 200;
  config.test_per_label = 100;
  config.train.epochs = 5;
  const fs::path dir = fs::temp_directory_path() / "pccd_acceptance";
  fs::create_directories(dir);
  std::vector<std::string> checkpoints;
  std::vector<std::string> reports;
  for (int run = 0; run < 2; ++run) {
    const ExperimentSetup setup = prepare_experiment(data, config);
    const TrainResult trained = train(setup.view, setup.train_triplets, setup.main_partition, config.train);
    const fs::path ckpt = dir / ("run" + std::to_string(run) + ".ckpt");
    save_checkpoint(trained.model, ckpt);
    checkpoints.push_back(slurp(ckpt));
    const MetricsReport r = evaluate_model(trained.model, setup.view, setup.main_partition, setup.test_triplets);
    write_report(r, dir / ("run" + std::to_string(run) + ".csv"), dir / ("run" + std::to_string(run) + ".json"));
    reports.push_back(slurp(dir / ("run" + std::to_string(run) + ".csv")) +
                      slurp(dir / ("run" + std::to_string(run) + ".json")));
  }
  const bool pass = checkpoints[0] == checkpoints[1] && reports[0] == reports[1];
  return {pass, "checkpoints " + std::string(checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER") + " (" +
                    std::to_string(checkpoints[0].size()) + " bytes), metric reports " +
                    (reports[0] == reports[1] ? "identical" : "DIFFER")};
}

Outcome user_type_trend() {
  double mu = 0.0;
  double so = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const PlantedData data = plant_synthetic_dataset(hub_plant(seed));
    const ExperimentConfig config = experiment(40 + seed);
    const ExperimentSetup setup = prepare_experiment(data, config);
    const TrainResult trained = train(setup.view, setup.train_triplets, setup.main_partition, config.train);
    const auto reports = user_type_eval(trained.model, setup.view, setup.main_partition, data.truth, 500, seed);
    mu += reports.at(UserType::kMutual).acc / 3.0;
    so += reports.at(UserType::kSparseOnly).acc / 3.0;
    per_seed += " " + fixed(reports.at(UserType::kMutual).acc, 3) + "/" +
                fixed(reports.at(UserType::kMainOnly).acc, 3) + "/" +
                fixed(reports.at(UserType::kSparseOnly).acc, 3);
  }
  return {mu >= so - 0.03, "mean MU ACC " + fixed(mu) + " vs SO " + fixed(so) +
                               " (MU >= SO - 0.03); per seed MU/MO/SO:" + per_seed};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"map-equation-oracle", map_equation_oracle},
      {"random-baseline", random_baseline_check},
      {"learning-signal", learning_signal},
      {"sparsity-trend", sparsity_trend},
      {"ablation-direction", ablation_direction},
      {"unit-values", unit_values},
      {"head-antisymmetry", head_antisymmetry},
      {"determinism", determinism},
      {"user-type-trend", user_type_trend},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::printf("%s %-22s %s [%.1f s]\n", outcome.pass ? "PASS" : "FAIL", name.c_str(), outcome.detail.c_str(),
                seconds);
    std::fflush(stdout);
  }
  return failures;
}
