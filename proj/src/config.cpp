#include "pccd/config.hpp"
#include "pccd/format.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace pccd {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !(in >> std::ws).eof()) {
    throw std::invalid_argument("config: bad value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw std::invalid_argument("config: bad boolean '" + text + "' for " + key);
}

template <typename Config>
using Setters = std::map<std::string, std::function<void(Config&, const std::string&)>>;

template <typename Config, typename T>
void bind_key(Setters<Config>& setters, const std::string& key, T Config::*field) {
  setters[key] = [key, field](Config& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*field = parse_bool(key, v);
    } else {
      c.*field = parse_number<T>(key, v);
    }
  };
}

Setters<PlantConfig> plant_setters() {
  Setters<PlantConfig> s;
  bind_key(s, "communities", &PlantConfig::communities);
  bind_key(s, "mutual_users", &PlantConfig::mutual_users);
  bind_key(s, "main_only_users", &PlantConfig::main_only_users);
  bind_key(s, "sparse_only_users", &PlantConfig::sparse_only_users);
  bind_key(s, "main_objects_per_community", &PlantConfig::main_objects_per_community);
  bind_key(s, "sparse_objects_per_community", &PlantConfig::sparse_objects_per_community);
  bind_key(s, "main_p_in", &PlantConfig::main_p_in);
  bind_key(s, "main_p_out", &PlantConfig::main_p_out);
  bind_key(s, "sparse_p_in", &PlantConfig::sparse_p_in);
  bind_key(s, "sparse_p_out", &PlantConfig::sparse_p_out);
  bind_key(s, "main_hub_objects", &PlantConfig::main_hub_objects);
  bind_key(s, "sparse_hub_objects", &PlantConfig::sparse_hub_objects);
  bind_key(s, "hub_p", &PlantConfig::hub_p);
  bind_key(s, "seed", &PlantConfig::seed);
  return s;
}

Setters<TrainConfig> train_setters() {
  Setters<TrainConfig> s;
  bind_key(s, "batch_size", &TrainConfig::batch_size);
  bind_key(s, "learning_rate", &TrainConfig::learning_rate);
  bind_key(s, "epochs", &TrainConfig::epochs);
  bind_key(s, "communities", &TrainConfig::communities);
  bind_key(s, "alpha", &TrainConfig::alpha);
  bind_key(s, "rho", &TrainConfig::rho);
  bind_key(s, "beta1", &TrainConfig::beta1);
  bind_key(s, "beta2", &TrainConfig::beta2);
  bind_key(s, "adam_epsilon", &TrainConfig::adam_epsilon);
  bind_key(s, "direct_dim", &TrainConfig::direct_dim);
  bind_key(s, "embedding_dim", &TrainConfig::embedding_dim);
  bind_key(s, "attention_dim", &TrainConfig::attention_dim);
  bind_key(s, "correlation_dim", &TrainConfig::correlation_dim);
  bind_key(s, "validation_fraction", &TrainConfig::validation_fraction);
  bind_key(s, "seed", &TrainConfig::seed);
  s["use_raw_community"] = [](TrainConfig& c, const std::string& v) {
    c.components.raw_community = parse_bool("use_raw_community", v);
  };
  s["use_direct"] = [](TrainConfig& c, const std::string& v) {
    c.components.direct = parse_bool("use_direct", v);
  };
  s["use_node_filter"] = [](TrainConfig& c, const std::string& v) {
    c.components.node_filter = parse_bool("use_node_filter", v);
  };
  s["use_community_filter"] = [](TrainConfig& c, const std::string& v) {
    c.components.community_filter = parse_bool("use_community_filter", v);
  };
  return s;
}

template <typename Config>
Config apply(const KeyValues& values, Config config, const Setters<Config>& setters) {
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(config, value);
  }
  config.validate();
  return config;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues values;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = " at line " + std::to_string(line_number);
    if (eq == std::string::npos) throw std::invalid_argument("config: expected key = value" + where);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw std::invalid_argument("config: empty key or value" + where);
    if (!values.emplace(key, value).second) {
      throw std::invalid_argument("config: repeated key '" + key + "'" + where);
    }
  }
  return values;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str());
}

PlantConfig plant_config_from(const KeyValues& values, PlantConfig base) {
  return apply(values, std::move(base), plant_setters());
}

TrainConfig train_config_from(const KeyValues& values, TrainConfig base) {
  return apply(values, std::move(base), train_setters());
}

ExperimentConfig experiment_config_from(const KeyValues& values, ExperimentConfig base) {
  KeyValues train_values;
  for (const auto& [key, value] : values) {
    if (key == "delta") {
      base.delta = parse_number<double>(key, value);
    } else if (key == "train_per_label") {
      base.train_per_label = parse_number<std::size_t>(key, value);
    } else if (key == "test_per_label") {
      base.test_per_label = parse_number<std::size_t>(key, value);
    } else if (key != "experiment_seed") {
      if (key == "seed") base.seed = parse_number<std::uint64_t>(key, value);
      train_values.emplace(key, value);
    }
  }
  if (auto it = values.find("experiment_seed"); it != values.end()) {
    base.seed = parse_number<std::uint64_t>(it->first, it->second);
  }
  if (!(base.delta > 0.0 && base.delta <= 1.0)) throw std::invalid_argument("config: delta must lie in (0, 1]");
  if (base.train_per_label == 0 || base.test_per_label == 0) {
    throw std::invalid_argument("config: triplet counts must be positive");
  }
  base.train = train_config_from(train_values, base.train);
  return base;
}

std::string to_key_values(const PlantConfig& c) {
  std::ostringstream out;
  out << "communities = " << c.communities << '\n'
      << "mutual_users = " << c.mutual_users << '\n'
      << "main_only_users = " << c.main_only_users << '\n'
      << "sparse_only_users = " << c.sparse_only_users << '\n'
      << "main_objects_per_community = " << c.main_objects_per_community << '\n'
      << "sparse_objects_per_community = " << c.sparse_objects_per_community << '\n'
      << "main_p_in = " << format_double(c.main_p_in) << '\n'
      << "main_p_out = " << format_double(c.main_p_out) << '\n'
      << "sparse_p_in = " << format_double(c.sparse_p_in) << '\n'
      << "sparse_p_out = " << format_double(c.sparse_p_out) << '\n'
      << "main_hub_objects = " << c.main_hub_objects << '\n'
      << "sparse_hub_objects = " << c.sparse_hub_objects << '\n'
      << "hub_p = " << format_double(c.hub_p) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

std::string to_key_values(const TrainConfig& c) {
  std::ostringstream out;
  out << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "communities = " << c.communities << '\n'
      << "alpha = " << format_double(c.alpha) << '\n'
      << "rho = " << format_double(c.rho) << '\n'
      << "beta1 = " << format_double(c.beta1) << '\n'
      << "beta2 = " << format_double(c.beta2) << '\n'
      << "adam_epsilon = " << format_double(c.adam_epsilon) << '\n'
      << "direct_dim = " << c.direct_dim << '\n'
      << "embedding_dim = " << c.embedding_dim << '\n'
      << "attention_dim = " << c.attention_dim << '\n'
      << "correlation_dim = " << c.correlation_dim << '\n'
      << "validation_fraction = " << format_double(c.validation_fraction) << '\n'
      << "use_raw_community = " << c.components.raw_community << '\n'
      << "use_direct = " << c.components.direct << '\n'
      << "use_node_filter = " << c.components.node_filter << '\n'
      << "use_community_filter = " << c.components.community_filter << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

std::string to_key_values(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "delta = " << format_double(c.delta) << '\n'
      << "train_per_label = " << c.train_per_label << '\n'
      << "test_per_label = " << c.test_per_label << '\n'
      << "experiment_seed = " << c.seed << '\n';
  return out.str() + to_key_values(c.train);
}

}  // namespace pccd
