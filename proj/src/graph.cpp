#include "pccd/graph.hpp"
#include "pccd/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pccd/rng.hpp"

namespace pccd {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool skippable(std::string_view line) {
  const auto first = line.find_first_not_of(" \t");
  return first == std::string_view::npos || line[first] == '#';
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::size_t IdSpace::insert(std::string_view id) {
  auto [it, inserted] = index_.try_emplace(std::string(id), ids_.size());
  if (inserted) ids_.emplace_back(id);
  return it->second;
}

std::optional<std::size_t> IdSpace::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double BipartiteGraph::total_weight() const {
  double total = 0.0;
  for (const Link& link : links_) total += link.weight;
  return total;
}

std::span<const WeightedIndex> BipartiteGraph::user_links(std::size_t user) const {
  if (user + 1 >= adjacency_offsets_.size()) return {};
  return std::span<const WeightedIndex>(adjacency_).subspan(
      adjacency_offsets_[user], adjacency_offsets_[user + 1] - adjacency_offsets_[user]);
}

void GraphBuilder::add_link(std::string_view user, std::string_view object, double weight) {
  add_link(add_user(user), add_object(object), weight);
}

void GraphBuilder::add_link(std::size_t user, std::size_t object, double weight) {
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw std::invalid_argument("non-positive weight");
  }
  if (user >= graph_.users_.size() || object >= graph_.objects_.size()) {
    throw std::out_of_range("link references an unknown node");
  }
  const std::uint64_t key = (static_cast<std::uint64_t>(user) << 32) | object;
  auto [it, inserted] = link_slot_.try_emplace(key, graph_.links_.size());
  if (inserted) {
    graph_.links_.push_back({user, object, weight});
  } else {
    graph_.links_[it->second].weight += weight;
  }
}

BipartiteGraph GraphBuilder::build() && {
  BipartiteGraph& g = graph_;
  const std::size_t num_users = g.users_.size();
  g.adjacency_offsets_.assign(num_users + 1, 0);
  g.object_degree_.assign(g.objects_.size(), 0);
  for (const Link& link : g.links_) {
    ++g.adjacency_offsets_[link.user + 1];
    ++g.object_degree_[link.object];
  }
  std::partial_sum(g.adjacency_offsets_.begin(), g.adjacency_offsets_.end(),
                   g.adjacency_offsets_.begin());
  g.adjacency_.resize(g.links_.size());
  std::vector<std::size_t> cursor(g.adjacency_offsets_.begin(), g.adjacency_offsets_.end() - 1);
  for (const Link& link : g.links_) {
    g.adjacency_[cursor[link.user]++] = {link.object, link.weight};
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    std::sort(g.adjacency_.begin() + g.adjacency_offsets_[u],
              g.adjacency_.begin() + g.adjacency_offsets_[u + 1],
              [](const WeightedIndex& a, const WeightedIndex& b) { return a.index < b.index; });
  }
  link_slot_.clear();
  return std::move(graph_);
}

BipartiteGraph load_edge_list(const std::filesystem::path& path, std::string domain_tag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list " + path.string());

  GraphBuilder builder(std::move(domain_tag));
  std::string raw;
  std::size_t line_number = 0;
  std::size_t num_links = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    const std::string_view line = trim_cr(raw);
    if (skippable(line)) continue;
    const auto fields = split_tabs(line);
    const std::string at_line = " at line " + std::to_string(line_number);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw std::runtime_error("malformed line" + at_line);
    }
    double weight = 1.0;
    if (fields.size() == 3) {
      const std::string text(fields[2]);
      std::size_t consumed = 0;
      try {
        weight = std::stod(text, &consumed);
      } catch (const std::exception&) {
        throw std::runtime_error("malformed weight" + at_line);
      }
      if (consumed != text.size()) throw std::runtime_error("malformed weight" + at_line);
      if (!(weight > 0.0) || !std::isfinite(weight)) {
        throw std::runtime_error("non-positive weight" + at_line);
      }
    }
    builder.add_link(fields[0], fields[1], weight);
    ++num_links;
  }
  if (num_links == 0) throw std::runtime_error("empty edge list " + path.string());
  return std::move(builder).build();
}

void save_edge_list(const BipartiteGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write edge list " + path.string());
  out << "# " << graph.domain_tag() << '\n';
  for (const Link& link : graph.links()) {
    out << graph.users().at(link.user) << '\t' << graph.objects().at(link.object);
    if (link.weight != 1.0) out << '\t' << format_double(link.weight);
    out << '\n';
  }
}

BipartiteGraph sparsify(const BipartiteGraph& graph, double delta, std::uint64_t seed) {
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw std::invalid_argument("sparsify: delta must lie in (0, 1]");
  }
  const std::size_t total = graph.links().size();
  const auto keep = static_cast<std::size_t>(std::llround(delta * static_cast<double>(total)));

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `keep` slots are a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    std::swap(order[i], order[i + rng.uniform_index(total - i)]);
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());

  GraphBuilder builder(graph.domain_tag());
  for (const auto& id : graph.users().ids()) builder.add_user(id);
  for (const auto& id : graph.objects().ids()) builder.add_object(id);
  for (std::size_t i : order) {
    const Link& link = graph.links()[i];
    builder.add_link(link.user, link.object, link.weight);
  }
  return std::move(builder).build();
}

MultiHot multi_hot(const BipartiteGraph& graph, std::string_view user_id) {
  const auto user = graph.users().find(user_id);
  if (!user) return {};
  const auto links = graph.user_links(*user);
  return MultiHot(links.begin(), links.end());
}

std::string_view to_string(UserType type) {
  switch (type) {
    case UserType::kMutual:
      return "MU";
    case UserType::kMainOnly:
      return "MO";
    case UserType::kSparseOnly:
      return "SO";
  }
  return "?";
}

UserType user_type_from_string(std::string_view name) {
  if (name == "MU") return UserType::kMutual;
  if (name == "MO") return UserType::kMainOnly;
  if (name == "SO") return UserType::kSparseOnly;
  throw std::invalid_argument("unknown user type '" + std::string(name) + "'");
}

std::vector<std::string> CrossGraphDataset::users_of_type(UserType type) const {
  std::vector<std::string> result;
  for (const auto& [id, t] : user_type) {
    if (t == type) result.push_back(id);
  }
  return result;
}

CrossGraphDataset build_cross_dataset(BipartiteGraph main, BipartiteGraph sparse) {
  if (main.num_users() == 0 || main.links().empty()) {
    throw std::invalid_argument("main graph is empty");
  }
  if (sparse.num_users() == 0) throw std::invalid_argument("sparse graph is empty");
  for (const auto& object : sparse.objects().ids()) {
    if (main.objects().find(object)) {
      throw std::invalid_argument("object id '" + object + "' appears in both graphs");
    }
  }

  CrossGraphDataset dataset;
  for (const auto& user : main.users().ids()) {
    const bool shared = sparse.users().find(user).has_value();
    dataset.user_type[user] = shared ? UserType::kMutual : UserType::kMainOnly;
    if (shared) dataset.mutual_users.push_back(user);
  }
  for (const auto& user : sparse.users().ids()) {
    dataset.user_type.try_emplace(user, UserType::kSparseOnly);
  }
  if (dataset.mutual_users.empty()) {
    dataset.warnings.push_back("no mutual users: training needs users present in both graphs");
  }
  dataset.main = std::move(main);
  dataset.sparse = std::move(sparse);
  return dataset;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  DatasetManifest manifest;
  try {
    manifest.main_path = resolve(base, doc.at("main").at("path").get<std::string>());
    manifest.main_tag = doc["main"].value("tag", "main");
    manifest.sparse_path = resolve(base, doc.at("sparse").at("path").get<std::string>());
    manifest.sparse_tag = doc["sparse"].value("tag", "sparse");
    if (doc.contains("truth")) manifest.truth_path = resolve(base, doc["truth"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest " + path.string() + " is missing a field: " + e.what());
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["main"] = {{"path", manifest.main_path.string()}, {"tag", manifest.main_tag}};
  doc["sparse"] = {{"path", manifest.sparse_path.string()}, {"tag", manifest.sparse_tag}};
  if (manifest.truth_path) doc["truth"] = manifest.truth_path->string();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

CrossGraphDataset load_dataset(const DatasetManifest& manifest) {
  return build_cross_dataset(load_edge_list(manifest.main_path, manifest.main_tag),
                             load_edge_list(manifest.sparse_path, manifest.sparse_tag));
}

CommunityMap load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file " + path.string());
  CommunityMap truth;
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    const std::string_view line = trim_cr(raw);
    if (skippable(line)) continue;
    const auto fields = split_tabs(line);
    const std::string error = "malformed line at line " + std::to_string(line_number);
    if (fields.size() != 2 || fields[0].empty()) throw std::runtime_error(error);
    int community = 0;
    const char* end = fields[1].data() + fields[1].size();
    const auto rc = std::from_chars(fields[1].data(), end, community);
    if (rc.ec != std::errc() || rc.ptr != end) throw std::runtime_error(error);
    truth[std::string(fields[0])] = community;
  }
  return truth;
}

void save_truth(const CommunityMap& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write truth file " + path.string());
  for (const auto& [user, community] : truth) out << user << '\t' << community << '\n';
}

}  // namespace pccd
