#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

#include "pccd/trainer.hpp"

namespace pccd {
namespace {

std::string numbered(const char* prefix, std::size_t n) { return prefix + std::to_string(n); }

struct PlantedUser {
  std::string id;
  int community = 0;
  bool in_main = false;
  bool in_sparse = false;
};

void draw_links(GraphBuilder& builder, const std::vector<PlantedUser>& users, bool main_side,
                std::size_t objects_per_community, std::size_t hubs, int communities, double p_in,
                double p_out, double hub_p, Rng& rng) {
  const char* prefix = main_side ? "m" : "s";
  std::vector<std::size_t> object_index;
  std::vector<int> home;
  for (int c = 0; c < communities; ++c) {
    for (std::size_t o = 0; o < objects_per_community; ++o) {
      object_index.push_back(builder.add_object(numbered(prefix, object_index.size())));
      home.push_back(c);
    }
  }
  for (std::size_t h = 0; h < hubs; ++h) {
    object_index.push_back(builder.add_object(numbered(prefix, object_index.size())));
    home.push_back(-1);
  }
  for (const auto& user : users) {
    if (main_side ? !user.in_main : !user.in_sparse) continue;
    const std::size_t u = builder.add_user(user.id);
    for (std::size_t o = 0; o < object_index.size(); ++o) {
      const double p = home[o] < 0 ? hub_p : (home[o] == user.community ? p_in : p_out);
      if (rng.bernoulli(p)) builder.add_link(u, object_index[o]);
    }
  }
}

int community_of(const CommunityMap& truth, const std::string& user) {
  auto it = truth.find(user);
  if (it == truth.end()) throw std::invalid_argument("no ground truth for user '" + user + "'");
  return it->second;
}

}  // namespace

void PlantConfig::validate() const {
  if (communities < 1) throw std::invalid_argument("plant: need at least one community");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(main_p_in) || !prob(main_p_out) || !prob(sparse_p_in) || !prob(sparse_p_out) ||
      !prob(hub_p)) {
    throw std::invalid_argument("plant: probabilities must lie in [0, 1]");
  }
  if (!(main_p_out < main_p_in) || !(sparse_p_out < sparse_p_in)) {
    throw std::invalid_argument("plant: need p_out < p_in");
  }
  if (mutual_users + main_only_users == 0 || mutual_users + sparse_only_users == 0) {
    throw std::invalid_argument("plant: both graphs need users");
  }
  if (main_objects_per_community + main_hub_objects == 0 ||
      sparse_objects_per_community + sparse_hub_objects == 0) {
    throw std::invalid_argument("plant: both graphs need objects");
  }
}

PlantedData plant_synthetic_dataset(const PlantConfig& config) {
  config.validate();
  Rng rng(config.seed);

  std::vector<PlantedUser> users;
  auto add_users = [&](const char* prefix, std::size_t count, bool main, bool sparse) {
    for (std::size_t n = 0; n < count; ++n) users.push_back({numbered(prefix, n), 0, main, sparse});
  };
  add_users("u", config.mutual_users, true, true);
  add_users("mo", config.main_only_users, true, false);
  add_users("so", config.sparse_only_users, false, true);

  // Balanced community sizes, randomly assigned.
  std::vector<int> labels(users.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    labels[n] = static_cast<int>(n % static_cast<std::size_t>(config.communities));
  }
  rng.shuffle(std::span<int>(labels));
  PlantedData planted;
  for (std::size_t n = 0; n < users.size(); ++n) {
    users[n].community = labels[n];
    planted.truth[users[n].id] = labels[n];
  }

  GraphBuilder main("main");
  draw_links(main, users, true, config.main_objects_per_community, config.main_hub_objects,
             config.communities, config.main_p_in, config.main_p_out, config.hub_p, rng);
  GraphBuilder sparse("sparse");
  draw_links(sparse, users, false, config.sparse_objects_per_community, config.sparse_hub_objects,
             config.communities, config.sparse_p_in, config.sparse_p_out, config.hub_p, rng);
  BipartiteGraph main_graph = std::move(main).build();
  BipartiteGraph sparse_graph = std::move(sparse).build();
  if (main_graph.links().empty() || sparse_graph.links().empty()) {
    throw std::invalid_argument("plant: configuration produced a graph without links");
  }
  planted.dataset = build_cross_dataset(std::move(main_graph), std::move(sparse_graph));
  return planted;
}

UserTriplet label_triplet(const std::string& i, const std::string& j, const std::string& k,
                          const CommunityMap& truth) {
  if (i == j || i == k || j == k) throw std::invalid_argument("triplet users must be distinct");
  const int ci = community_of(truth, i);
  const bool j_same = community_of(truth, j) == ci;
  const bool k_same = community_of(truth, k) == ci;
  UserTriplet t{i, j, k, 0, 0.5};
  if (j_same && !k_same) t.relation = 1;
  if (!j_same && k_same) t.relation = -1;
  t.label = 0.5 * (1.0 + t.relation);
  return t;
}

std::vector<UserTriplet> sample_triplets(std::span<const std::string> users,
                                         const CommunityMap& truth, std::size_t count_per_label,
                                         std::uint64_t seed) {
  const std::size_t n = users.size();
  std::vector<int> community(n);
  std::map<int, double> size;
  for (std::size_t u = 0; u < n; ++u) {
    community[u] = community_of(truth, users[u]);
    size[community[u]] += 1.0;
  }

  // Number of distinct ordered triplets per label: farther mirrors closer.
  const double total = static_cast<double>(n);
  double closer = 0.0;
  double similar = 0.0;
  for (const auto& [c, s] : size) {
    closer += s * (s - 1.0) * (total - s);
    similar += s * ((s - 1.0) * (s - 2.0) + (total - s) * (total - s - 1.0));
  }
  const double needed = static_cast<double>(count_per_label);
  if (closer < needed) {
    throw std::invalid_argument("cannot sample " + std::to_string(count_per_label) +
                                " closer/farther triplets from this partition");
  }
  if (similar < needed) {
    throw std::invalid_argument("cannot sample " + std::to_string(count_per_label) +
                                " similar triplets from this partition");
  }

  Rng rng(seed);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  std::size_t remaining[3] = {count_per_label, count_per_label, count_per_label};
  std::size_t left = 3 * count_per_label;
  std::vector<UserTriplet> result;
  result.reserve(left);
  // Rejection sampling from uniform distinct triplets keeps each label uniform.
  const std::size_t max_attempts = 2000 * left + 1000000;
  for (std::size_t attempt = 0; left > 0; ++attempt) {
    if (attempt >= max_attempts) {
      throw std::runtime_error("triplet sampling did not converge; request fewer triplets");
    }
    const std::size_t i = rng.uniform_index(n);
    const std::size_t j = rng.uniform_index(n);
    const std::size_t k = rng.uniform_index(n);
    if (i == j || i == k || j == k) continue;
    const bool j_same = community[j] == community[i];
    const bool k_same = community[k] == community[i];
    const int relation = (j_same && !k_same) ? 1 : (!j_same && k_same) ? -1 : 0;
    std::size_t& slot = remaining[relation + 1];
    if (slot == 0 || !seen.emplace(i, j, k).second) continue;
    --slot;
    --left;
    result.push_back({users[i], users[j], users[k], relation, 0.5 * (1.0 + relation)});
  }
  rng.shuffle(std::span<UserTriplet>(result));
  return result;
}

}  // namespace pccd
