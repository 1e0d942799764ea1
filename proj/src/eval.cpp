#include "pccd/eval.hpp"
#include "pccd/format.hpp"

#include <fstream>
#include <stdexcept>

namespace pccd {
namespace {

enum Stream : std::uint64_t { kSparsify = 100, kDetect = 101, kTriplets = 102, kRandom = 103 };

MetricsReport score_labels(std::span<const UserTriplet> predicted,
                           std::span<const UserTriplet> triplets) {
  std::vector<double> scores;
  scores.reserve(predicted.size());
  for (const auto& p : predicted) scores.push_back(p.label);
  return evaluate_predictions(scores, true_labels(triplets));
}

}  // namespace

std::vector<Closeness> true_labels(std::span<const UserTriplet> triplets) {
  std::vector<Closeness> labels;
  labels.reserve(triplets.size());
  for (const auto& t : triplets) labels.push_back(closeness_from_label(t.label));
  return labels;
}

CommunityMap user_communities(const CommunityPartition& partition, const BipartiteGraph& graph) {
  CommunityMap map;
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    map[graph.users().at(u)] = partition.assignment.at(u);
  }
  return map;
}

MetricsReport partition_baseline(const CommunityMap& predicted,
                                 std::span<const UserTriplet> triplets) {
  int next_singleton = 0;
  for (const auto& [user, c] : predicted) next_singleton = std::max(next_singleton, c + 1);
  CommunityMap completed = predicted;
  std::vector<UserTriplet> labelled;
  labelled.reserve(triplets.size());
  for (const auto& t : triplets) {
    for (const std::string* u : {&t.i, &t.j, &t.k}) {
      if (!completed.contains(*u)) completed[*u] = next_singleton++;
    }
    labelled.push_back(label_triplet(t.i, t.j, t.k, completed));
  }
  return score_labels(labelled, triplets);
}

MetricsReport random_baseline(std::span<const std::string> users, int num_communities,
                              std::span<const UserTriplet> triplets, std::uint64_t seed) {
  if (num_communities < 2) throw std::invalid_argument("random baseline needs >= 2 communities");
  Rng rng(seed);
  CommunityMap random;
  for (const auto& u : users) {
    random[u] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_communities)));
  }
  for (const auto& t : triplets) {
    for (const std::string* u : {&t.i, &t.j, &t.k}) {
      if (!random.contains(*u)) {
        throw std::invalid_argument("random baseline: triplet user '" + *u + "' not in user set");
      }
    }
  }
  return partition_baseline(random, triplets);
}

MetricsReport evaluate_model(const PccdModel& model, const CrossGraphDataset& dataset,
                             const CommunityPartition& main_partition,
                             std::span<const UserTriplet> triplets) {
  const std::vector<double> predictions = predict(model, dataset, main_partition, triplets);
  return evaluate_predictions(predictions, true_labels(triplets));
}

MetricsReport evaluate_user_type(const PccdModel& model, const CrossGraphDataset& dataset,
                                 const CommunityPartition& main_partition, const CommunityMap& truth,
                                 UserType type, std::size_t count_per_label, std::uint64_t seed) {
  const std::vector<std::string> users = dataset.users_of_type(type);
  if (users.size() < 3) {
    throw std::invalid_argument("user type " + std::string(to_string(type)) +
                                " has too few users for triplets");
  }
  const auto triplets = sample_triplets(users, truth, count_per_label, seed);
  return evaluate_model(model, dataset, main_partition, triplets);
}

std::map<UserType, MetricsReport> user_type_eval(const PccdModel& model,
                                                 const CrossGraphDataset& dataset,
                                                 const CommunityPartition& main_partition,
                                                 const CommunityMap& truth,
                                                 std::size_t count_per_label, std::uint64_t seed) {
  std::map<UserType, MetricsReport> reports;
  for (UserType type : {UserType::kMutual, UserType::kMainOnly, UserType::kSparseOnly}) {
    reports[type] = evaluate_user_type(model, dataset, main_partition, truth, type, count_per_label,
                                       derive_seed(seed, static_cast<std::uint64_t>(type)));
  }
  return reports;
}

ExperimentSetup prepare_experiment(const PlantedData& planted, const ExperimentConfig& config) {
  ExperimentSetup setup;
  setup.view = build_cross_dataset(planted.dataset.main,
                                   sparsify(planted.dataset.sparse, config.delta,
                                            derive_seed(config.seed, kSparsify)));
  setup.main_partition = detect_communities(setup.view.main, derive_seed(config.seed, kDetect));

  if (planted.truth.empty()) {
    const CommunityPartition sparse_partition =
        detect_communities(setup.view.sparse, derive_seed(config.seed, kDetect));
    setup.labels = user_communities(sparse_partition, setup.view.sparse);
  } else {
    setup.labels = planted.truth;
  }
  std::vector<std::string> eligible;
  for (const auto& u : setup.view.mutual_users) {
    if (setup.labels.contains(u)) eligible.push_back(u);
  }
  const auto all = sample_triplets(eligible, setup.labels,
                                   config.train_per_label + config.test_per_label,
                                   derive_seed(config.seed, kTriplets));
  std::size_t taken[3] = {0, 0, 0};
  for (const auto& t : all) {
    std::size_t& count = taken[t.relation + 1];
    (count++ < config.train_per_label ? setup.train_triplets : setup.test_triplets).push_back(t);
  }
  return setup;
}

BaselineReports evaluate_baselines(const ExperimentSetup& setup, const ExperimentConfig& config,
                                   int random_communities) {
  BaselineReports reports;
  reports.random = random_baseline(setup.view.mutual_users, random_communities, setup.test_triplets,
                                   derive_seed(config.seed, kRandom));
  const CommunityPartition sparse_partition =
      detect_communities(setup.view.sparse, derive_seed(config.seed, kDetect));
  reports.infomap_sparse =
      partition_baseline(user_communities(sparse_partition, setup.view.sparse), setup.test_triplets);
  return reports;
}

ExperimentResult run_experiment(const ExperimentSetup& setup, const ExperimentConfig& config,
                                int random_communities) {
  ExperimentResult result;
  result.training = train(setup.view, setup.train_triplets, setup.main_partition, config.train);
  result.pccd = evaluate_model(result.training.model, setup.view, setup.main_partition,
                               setup.test_triplets);
  const BaselineReports baselines = evaluate_baselines(setup, config, random_communities);
  result.random = baselines.random;
  result.infomap_sparse = baselines.infomap_sparse;
  return result;
}

std::vector<SweepRow> sparsity_sweep(const PlantedData& planted, std::span<const double> deltas,
                                     const ExperimentConfig& config) {
  if (deltas.empty()) throw std::invalid_argument("sparsity sweep needs at least one delta");
  for (double d : deltas) {
    if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("sweep deltas must lie in (0, 1]");
  }
  std::vector<SweepRow> rows;
  for (double delta : deltas) {
    ExperimentConfig run = config;
    run.delta = delta;
    const ExperimentSetup setup = prepare_experiment(planted, run);
    const TrainResult trained = train(setup.view, setup.train_triplets, setup.main_partition, run.train);
    rows.push_back({delta, evaluate_model(trained.model, setup.view, setup.main_partition,
                                          setup.test_triplets)});
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sweep " + path.string());
  out << "delta,acc,f1,mcc,mrr,ndcg,map\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << format_double(row.delta) << ',' << format_double(r.acc) << ',' << format_double(r.f1_macro)
        << ',' << format_double(r.mcc) << ',' << format_double(r.mrr) << ','
        << format_double(r.ndcg) << ',' << format_double(r.map) << '\n';
  }
}

Matrix affiliation_dump(const PccdModel& model, const CrossGraphDataset& dataset,
                        const CommunityPartition& main_partition,
                        std::span<const std::string> users, Side side) {
  Matrix scores(static_cast<Eigen::Index>(users.size()),
                static_cast<Eigen::Index>(model.config.communities));
  for (std::size_t n = 0; n < users.size(); ++n) {
    if (!dataset.user_type.contains(users[n])) {
      throw std::invalid_argument("unknown user '" + users[n] + "'");
    }
    const UserInput input = make_user_input(dataset, main_partition, users[n]);
    scores.row(static_cast<Eigen::Index>(n)) = encode_user(model, input, side).affiliation.transpose();
  }
  return scores;
}

void write_affiliation_csv(const Matrix& scores, std::span<const std::string> users,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write affiliations " + path.string());
  out << "user";
  for (Eigen::Index k = 0; k < scores.cols(); ++k) out << ",c" << k;
  out << '\n';
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out << users[static_cast<std::size_t>(r)];
    for (Eigen::Index k = 0; k < scores.cols(); ++k) out << ',' << format_double(scores(r, k));
    out << '\n';
  }
}

}  // namespace pccd
