// pccd: command-line front end. Every run writes run.json next to its outputs.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pccd/config.hpp"
#include "pccd/eval.hpp"
#include "pccd/format.hpp"
#include "pccd/run_manifest.hpp"

namespace fs = std::filesystem;
using namespace pccd;

namespace {

// Bad flags or config content: exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  // ablation switches
  bool no_rcr = false;
  bool no_dtr = false;
  bool no_nf = false;
  bool no_cf = false;
  bool no_cc = false;
  bool no_mt = false;
  bool each = false;
  // command specific
  std::string graph = "main";
  double delta = 1.0;
  int trials = DetectOptions{}.num_trials;
  std::string delta_grid = "0.1,0.3,0.5,0.7,0.9";
  std::size_t repeats = 1;
  std::size_t per_label = 200;
  std::string side = "sparse";
  std::string users;
};

struct Run {
  RunManifest manifest;
  fs::path out;

  void output(const std::string& name) { manifest.outputs.push_back(name); }
  fs::path path(const std::string& name) {
    output(name);
    return out / name;
  }
};

KeyValues load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return read_key_values(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

template <typename Fn>
auto as_usage(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void apply_ablation(ExperimentConfig& c, const Options& o) {
  if (o.no_rcr) c.train.components.raw_community = false;
  if (o.no_dtr) c.train.components.direct = false;
  if (o.no_nf) c.train.components.node_filter = false;
  if (o.no_cf) c.train.components.community_filter = false;
  if (o.no_cc) c.train.alpha = 0.0;
  if (o.no_mt) c.train.rho = 0.0;
}

ExperimentConfig experiment_config(const Options& o) {
  ExperimentConfig c = as_usage([&] { return experiment_config_from(load_config(o.config)); });
  if (o.seed) c.seed = c.train.seed = *o.seed;
  apply_ablation(c, o);
  return c;
}

// Without a truth file the truth stays empty and experiments fall back to
// pseudo-labels detected on the sparse graph.
PlantedData load_labelled(const std::string& data) {
  const DatasetManifest manifest = read_manifest(data);
  PlantedData d;
  d.dataset = load_dataset(manifest);
  if (manifest.truth_path) d.truth = load_truth(*manifest.truth_path);
  return d;
}

int truth_communities(const CommunityMap& truth) {
  std::set<int> ids;
  for (const auto& [user, c] : truth) ids.insert(c);
  return std::max(2, static_cast<int>(ids.size()));
}

Run start(const std::string& command, const Options& o, int argc, char** argv) {
  Run run;
  run.out = o.out;
  fs::create_directories(run.out);
  run.manifest.command = command;
  for (int a = 1; a < argc; ++a) run.manifest.arguments.emplace_back(argv[a]);
  run.manifest.output_directory = o.out;
  if (!o.config.empty()) run.manifest.inputs["config"] = o.config;
  if (!o.data.empty()) run.manifest.inputs["data"] = o.data;
  if (!o.checkpoint.empty()) run.manifest.inputs["checkpoint"] = o.checkpoint;
  return run;
}

void record_experiment(Run& run, const ExperimentConfig& c) {
  run.manifest.seeds["experiment"] = c.seed;
  run.manifest.seeds["train"] = c.train.seed;
  run.manifest.effective_config = to_key_values(c);
}

void finish(Run& run) {
  run.manifest.outputs.push_back("run.json");
  write_run_manifest(run.manifest, run.out / "run.json");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string metrics_row(const MetricsReport& r) {
  return format_double(r.acc) + ',' + format_double(r.f1_macro) + ',' + format_double(r.mcc) + ',' +
         format_double(r.mrr) + ',' + format_double(r.ndcg) + ',' + format_double(r.map) + ',' +
         std::to_string(r.n_triplets);
}

constexpr const char* kMetricsHeader = "acc,f1,mcc,mrr,ndcg,map,n_triplets";

PccdModel checked_checkpoint(const std::string& path, const ExperimentSetup& setup) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  PccdModel model = load_checkpoint(path);
  const ModelConfig& c = model.config;
  if (c.raw_communities != static_cast<std::size_t>(setup.main_partition.num_communities) ||
      c.main_objects != setup.view.main.num_objects() ||
      c.sparse_objects != setup.view.sparse.num_objects()) {
    throw std::runtime_error("checkpoint does not match this dataset and configuration");
  }
  return model;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--delta-grid: bad value '" + item + "'");
    }
    if (!(grid.back() > 0.0 && grid.back() <= 1.0)) throw UsageError("--delta-grid values must lie in (0, 1]");
  }
  if (grid.empty()) throw UsageError("--delta-grid is empty");
  return grid;
}

// ---------------------------------------------------------------------------

void cmd_gen(Run& run, const Options& o) {
  PlantConfig plant = as_usage([&] { return plant_config_from(load_config(o.config)); });
  if (o.seed) plant.seed = *o.seed;
  run.manifest.seeds["plant"] = plant.seed;
  run.manifest.effective_config = to_key_values(plant);
  const PlantedData data = as_usage([&] { return plant_synthetic_dataset(plant); });
  save_edge_list(data.dataset.main, run.path("main.tsv"));
  save_edge_list(data.dataset.sparse, run.path("sparse.tsv"));
  save_truth(data.truth, run.path("truth.tsv"));
  DatasetManifest manifest;
  manifest.main_path = "main.tsv";
  manifest.sparse_path = "sparse.tsv";
  manifest.truth_path = "truth.tsv";
  write_manifest(manifest, run.path("dataset.json"));
  write_text(run.path("plant.cfg"), run.manifest.effective_config);
  std::cout << "planted " << data.truth.size() << " users, " << data.dataset.mutual_users.size()
            << " mutual\n";
}

void cmd_communities(Run& run, const Options& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  run.manifest.seeds["detect"] = seed;
  if (!(o.delta > 0.0 && o.delta <= 1.0)) throw UsageError("--delta must lie in (0, 1]");
  const CrossGraphDataset dataset = load_dataset(read_manifest(o.data));
  BipartiteGraph graph = o.graph == "main" ? dataset.main : dataset.sparse;
  if (o.delta < 1.0) graph = sparsify(graph, o.delta, derive_seed(seed, 100));
  DetectOptions options;
  options.num_trials = o.trials;
  const CommunityPartition partition = detect_communities(graph, seed, options);
  write_partition(partition, graph, run.path("partition_" + o.graph + ".tsv"));

  const FlowGraph flow = to_flow_graph(graph);
  const double one_module = codelength(flow, std::vector<int>(flow.num_nodes, 0));
  std::ostringstream json;
  json << "{\n  \"graph\": \"" << o.graph << "\",\n  \"delta\": " << format_double(o.delta)
       << ",\n  \"num_communities\": " << partition.num_communities
       << ",\n  \"codelength\": " << format_double(partition.codelength)
       << ",\n  \"one_module_codelength\": " << format_double(one_module) << "\n}\n";
  write_text(run.path("communities.json"), json.str());
  std::cout << partition.num_communities << " communities, codelength "
            << format_double(partition.codelength) << " bits\n";
}

void cmd_train(Run& run, const Options& o) {
  const ExperimentConfig config = experiment_config(o);
  record_experiment(run, config);
  const PlantedData data = load_labelled(o.data);
  const ExperimentSetup setup = as_usage([&] { return prepare_experiment(data, config); });
  const TrainResult result = train(setup.view, setup.train_triplets, setup.main_partition, config.train);
  save_checkpoint(result.model, run.path("model.ckpt"));
  write_loss_curve(result.loss_curve, run.path("loss.csv"));
  write_loss_curve(result.validation_loss, run.path("validation_loss.csv"));
  std::cout << "final training loss " << format_double(result.loss_curve.back()) << '\n';
}

void cmd_eval(Run& run, const Options& o) {
  const ExperimentConfig config = experiment_config(o);
  record_experiment(run, config);
  const PlantedData data = load_labelled(o.data);
  const ExperimentSetup setup = as_usage([&] { return prepare_experiment(data, config); });
  const PccdModel model = checked_checkpoint(o.checkpoint, setup);
  const MetricsReport report = evaluate_model(model, setup.view, setup.main_partition, setup.test_triplets);
  write_report(report, run.path("metrics.csv"), run.path("metrics.json"));
  const BaselineReports baselines = evaluate_baselines(setup, config, truth_communities(setup.labels));
  std::ostringstream csv;
  csv << "method," << kMetricsHeader << '\n'
      << "pccd," << metrics_row(report) << '\n'
      << "random," << metrics_row(baselines.random) << '\n'
      << "infomap_sparse," << metrics_row(baselines.infomap_sparse) << '\n';
  write_text(run.path("baselines.csv"), csv.str());
  std::cout << "acc " << format_double(report.acc) << " (random " << format_double(baselines.random.acc)
            << ", infomap on sparse " << format_double(baselines.infomap_sparse.acc) << ")\n";
}

void cmd_sweep(Run& run, const Options& o) {
  const ExperimentConfig config = experiment_config(o);
  record_experiment(run, config);
  if (o.repeats == 0) throw UsageError("--repeats must be positive");
  const std::vector<double> grid = parse_grid(o.delta_grid);
  const PlantedData data = load_labelled(o.data);
  std::vector<std::vector<MetricsReport>> per_delta(grid.size());
  for (std::size_t r = 0; r < o.repeats; ++r) {
    ExperimentConfig repeat = config;
    repeat.seed += r;
    repeat.train.seed += r;
    const auto rows = as_usage([&] { return sparsity_sweep(data, grid, repeat); });
    for (std::size_t d = 0; d < rows.size(); ++d) per_delta[d].push_back(rows[d].report);
  }
  std::vector<SweepRow> mean;
  for (std::size_t d = 0; d < grid.size(); ++d) mean.push_back({grid[d], average_reports(per_delta[d])});
  write_sweep_csv(mean, run.path("sweep.csv"));
  for (const auto& row : mean) {
    std::cout << "delta " << format_double(row.delta) << " acc " << format_double(row.report.acc) << '\n';
  }
}

void cmd_usertypes(Run& run, const Options& o) {
  const ExperimentConfig config = experiment_config(o);
  record_experiment(run, config);
  const PlantedData data = load_labelled(o.data);
  const ExperimentSetup setup = as_usage([&] { return prepare_experiment(data, config); });
  const PccdModel model =
      o.checkpoint.empty()
          ? train(setup.view, setup.train_triplets, setup.main_partition, config.train).model
          : checked_checkpoint(o.checkpoint, setup);
  // Pseudo-labels cover only users of the sparse graph; unlabelled types are skipped.
  std::map<UserType, MetricsReport> reports;
  for (UserType type : {UserType::kMutual, UserType::kMainOnly, UserType::kSparseOnly}) {
    const auto users = setup.view.users_of_type(type);
    const bool labelled = std::all_of(users.begin(), users.end(),
                                      [&](const std::string& u) { return setup.labels.contains(u); });
    if (!labelled) {
      std::cout << to_string(type) << " skipped: users without labels\n";
      continue;
    }
    reports[type] = as_usage([&] {
      return evaluate_user_type(model, setup.view, setup.main_partition, setup.labels, type,
                                o.per_label, derive_seed(derive_seed(config.seed, 104),
                                                         static_cast<std::uint64_t>(type)));
    });
  }
  std::ostringstream csv;
  csv << "type," << kMetricsHeader << '\n';
  for (const auto& [type, report] : reports) {
    csv << to_string(type) << ',' << metrics_row(report) << '\n';
    std::cout << to_string(type) << " acc " << format_double(report.acc) << '\n';
  }
  write_text(run.path("usertypes.csv"), csv.str());
}

void cmd_affiliations(Run& run, const Options& o) {
  const ExperimentConfig config = experiment_config(o);
  record_experiment(run, config);
  const PlantedData data = load_labelled(o.data);
  const ExperimentSetup setup = as_usage([&] { return prepare_experiment(data, config); });
  const PccdModel model = checked_checkpoint(o.checkpoint, setup);
  std::vector<std::string> users;
  if (o.users.empty()) {
    for (const auto& [user, type] : setup.view.user_type) users.push_back(user);
  } else {
    std::stringstream in(o.users);
    std::string user;
    while (std::getline(in, user, ',')) users.push_back(user);
  }
  const Side side = o.side == "main" ? Side::kMain : Side::kSparse;
  const Matrix scores =
      as_usage([&] { return affiliation_dump(model, setup.view, setup.main_partition, users, side); });
  write_affiliation_csv(scores, users, run.path("affiliations_" + o.side + ".csv"));
  std::cout << users.size() << " users written\n";
}

void cmd_ablate(Run& run, const Options& o) {
  Options full_options = o;
  full_options.no_rcr = full_options.no_dtr = full_options.no_nf = false;
  full_options.no_cf = full_options.no_cc = full_options.no_mt = false;
  const ExperimentConfig full = experiment_config(full_options);
  const PlantedData data = load_labelled(o.data);
  const ExperimentSetup setup = as_usage([&] { return prepare_experiment(data, full); });

  struct Variant {
    std::string name;
    Options options;
  };
  std::vector<Variant> variants = {{"full", full_options}};
  const std::pair<const char*, bool Options::*> flags[] = {
      {"no-rcr", &Options::no_rcr}, {"no-dtr", &Options::no_dtr}, {"no-nf", &Options::no_nf},
      {"no-cf", &Options::no_cf},   {"no-cc", &Options::no_cc},   {"no-mt", &Options::no_mt}};
  if (o.each) {
    for (const auto& [name, field] : flags) {
      Options single = full_options;
      single.*field = true;
      variants.push_back({name, single});
    }
  } else {
    std::string name;
    for (const auto& [flag, field] : flags) {
      if (o.*field) name += (name.empty() ? "" : "+") + std::string(flag);
    }
    if (!name.empty()) variants.push_back({name, o});
  }
  const ExperimentConfig recorded = experiment_config(o);
  record_experiment(run, recorded);

  std::ostringstream csv;
  csv << "variant," << kMetricsHeader << ",acc_change\n";
  double full_acc = 0.0;
  for (const auto& v : variants) {
    const ExperimentConfig config = experiment_config(v.options);
    const TrainResult result = train(setup.view, setup.train_triplets, setup.main_partition, config.train);
    const MetricsReport report =
        evaluate_model(result.model, setup.view, setup.main_partition, setup.test_triplets);
    if (v.name == "full") full_acc = report.acc;
    csv << v.name << ',' << metrics_row(report) << ',' << format_double(report.acc - full_acc) << '\n';
    std::cout << v.name << " acc " << format_double(report.acc) << '\n';
  }
  write_text(run.path("ablation.csv"), csv.str());
}

void add_out(CLI::App* c, Options& o) {
  c->add_option("--out", o.out, "Output directory, created if missing")->required();
}
void add_seed(CLI::App* c, Options& o, const std::string& what) {
  c->add_option("--seed", o.seed, "Seed for " + what + "; overrides the config file");
}
void add_experiment(CLI::App* c, Options& o) {
  c->add_option("--data", o.data, "Dataset manifest (JSON); without a truth file labels come from sparse-graph communities")
      ->required()
      ->check(CLI::ExistingFile);
  c->add_option("--config", o.config, "Experiment config (key = value lines)")->check(CLI::ExistingFile);
  add_seed(c, o, "sparsification, detection, triplets and training");
  add_out(c, o);
}
void add_checkpoint(CLI::App* c, Options& o, bool required) {
  auto* opt = c->add_option("--checkpoint", o.checkpoint, "Model checkpoint written by train")
                  ->check(CLI::ExistingFile);
  if (required) opt->required();
}
void add_ablation_flags(CLI::App* c, Options& o) {
  c->add_flag("--no-rcr", o.no_rcr, "Drop the raw main-graph community input");
  c->add_flag("--no-dtr", o.no_dtr, "Drop the direct representation");
  c->add_flag("--no-nf", o.no_nf, "Uniform propagation weights instead of the node-level filter");
  c->add_flag("--no-cf", o.no_cf, "Freeze community-level weights at 1");
  c->add_flag("--no-cc", o.no_cc, "Disable the community constraint (alpha = 0)");
  c->add_flag("--no-mt", o.no_mt, "Disable mask training (rho = 0)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise cross-graph community detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto* gen = app.add_subcommand("gen", "Plant a synthetic pair of graphs with ground truth");
  gen->add_option("--config", o.config, "Planting config (key = value lines)")->check(CLI::ExistingFile);
  add_seed(gen, o, "the planted data");
  add_out(gen, o);

  auto* communities = app.add_subcommand("communities", "Map-equation communities of one graph");
  communities->add_option("--data", o.data, "Dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
  communities->add_option("--graph", o.graph, "Which graph: main or sparse")
      ->check(CLI::IsMember({"main", "sparse"}))
      ->capture_default_str();
  communities->add_option("--delta", o.delta, "Keep this fraction of links first")->capture_default_str();
  communities->add_option("--trials", o.trials, "Restarts of the optimiser")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_seed(communities, o, "detection and sparsification (default 1)");
  add_out(communities, o);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint and loss curve");
  add_experiment(train_cmd, o);
  add_ablation_flags(train_cmd, o);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint and the baselines on the test triplets");
  add_experiment(eval, o);
  add_checkpoint(eval, o, true);

  auto* sweep = app.add_subcommand("sweep", "Retrain and score over sparse-graph link fractions");
  add_experiment(sweep, o);
  sweep->add_option("--delta-grid", o.delta_grid, "Comma-separated link fractions in (0, 1]")
      ->capture_default_str();
  sweep->add_option("--repeats", o.repeats, "Runs per fraction with consecutive seeds, averaged")
      ->capture_default_str();

  auto* usertypes = app.add_subcommand("usertypes", "Score triplets of mutual, main-only and sparse-only users");
  add_experiment(usertypes, o);
  add_checkpoint(usertypes, o, false);
  usertypes->add_option("--per-label", o.per_label, "Triplets per label and user type")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* affiliations = app.add_subcommand("affiliations", "Dump per-user community affiliation scores");
  add_experiment(affiliations, o);
  add_checkpoint(affiliations, o, true);
  affiliations->add_option("--side", o.side, "Which graph's scores: main or sparse")
      ->check(CLI::IsMember({"main", "sparse"}))
      ->capture_default_str();
  affiliations->add_option("--users", o.users, "Comma-separated user ids (default: all users)");

  auto* ablate = app.add_subcommand("ablate", "Train and score the full model and ablated variants");
  add_experiment(ablate, o);
  add_ablation_flags(ablate, o);
  ablate->add_flag("--each", o.each, "Run every single-flag variant instead of the given combination");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::pair<CLI::App*, void (*)(Run&, const Options&)> commands[] = {
      {gen, cmd_gen},     {communities, cmd_communities}, {train_cmd, cmd_train},
      {eval, cmd_eval},   {sweep, cmd_sweep},             {usertypes, cmd_usertypes},
      {affiliations, cmd_affiliations}, {ablate, cmd_ablate}};
  for (const auto& [sub, fn] : commands) {
    if (!sub->parsed()) continue;
    try {
      Run run = start(sub->get_name(), o, argc, argv);
      fn(run, o);
      finish(run);
      return 0;
    } catch (const UsageError& e) {
      std::cerr << "pccd " << sub->get_name() << ": " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "pccd " << sub->get_name() << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}
