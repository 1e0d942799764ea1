#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pccd {

struct Link {
  std::size_t user = 0;
  std::size_t object = 0;
  double weight = 1.0;

  friend bool operator==(const Link&, const Link&) = default;
};

// (object index, weight) entry of a user's multi-hot view.
struct WeightedIndex {
  std::size_t index = 0;
  double weight = 1.0;

  friend bool operator==(const WeightedIndex&, const WeightedIndex&) = default;
};

using MultiHot = std::vector<WeightedIndex>;

// Ordered set of string identifiers; index = first-insertion order.
class IdSpace {
 public:
  std::size_t insert(std::string_view id);
  std::optional<std::size_t> find(std::string_view id) const;
  const std::string& at(std::size_t index) const { return ids_.at(index); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  friend bool operator==(const IdSpace& a, const IdSpace& b) { return a.ids_ == b.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Immutable weighted user-object bipartite graph. Build with GraphBuilder.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  const std::string& domain_tag() const { return domain_tag_; }
  const IdSpace& users() const { return users_; }
  const IdSpace& objects() const { return objects_; }
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_objects() const { return objects_.size(); }
  std::span<const Link> links() const { return links_; }
  double total_weight() const;

  // Links of a user sorted by object index.
  std::span<const WeightedIndex> user_links(std::size_t user) const;
  std::size_t object_degree(std::size_t object) const { return object_degree_.at(object); }

  friend bool operator==(const BipartiteGraph& a, const BipartiteGraph& b) {
    return a.domain_tag_ == b.domain_tag_ && a.users_ == b.users_ && a.objects_ == b.objects_ &&
           a.links_ == b.links_;
  }

 private:
  friend class GraphBuilder;

  std::string domain_tag_;
  IdSpace users_;
  IdSpace objects_;
  std::vector<Link> links_;
  std::vector<std::size_t> adjacency_offsets_;
  std::vector<WeightedIndex> adjacency_;
  std::vector<std::size_t> object_degree_;
};

class GraphBuilder {
 public:
  explicit GraphBuilder(std::string domain_tag) { graph_.domain_tag_ = std::move(domain_tag); }

  std::size_t add_user(std::string_view id) { return graph_.users_.insert(id); }
  std::size_t add_object(std::string_view id) { return graph_.objects_.insert(id); }

  // Repeated (user, object) pairs aggregate their weights. Throws
  // std::invalid_argument for a non-positive weight.
  void add_link(std::string_view user, std::string_view object, double weight = 1.0);
  void add_link(std::size_t user, std::size_t object, double weight = 1.0);

  BipartiteGraph build() &&;

 private:
  BipartiteGraph graph_;
  std::unordered_map<std::uint64_t, std::size_t> link_slot_;
};

// Reads `user <TAB> object [<TAB> weight]` lines; `#` lines and blank lines are skipped.
BipartiteGraph load_edge_list(const std::filesystem::path& path, std::string domain_tag);
void save_edge_list(const BipartiteGraph& graph, const std::filesystem::path& path);

// Keeps round(delta * |links|) links chosen uniformly without replacement. The
// id spaces are kept intact, so users may end up isolated.
BipartiteGraph sparsify(const BipartiteGraph& graph, double delta, std::uint64_t seed);

// Empty when the user is absent from the graph or has no links.
MultiHot multi_hot(const BipartiteGraph& graph, std::string_view user_id);

enum class UserType { kMutual, kMainOnly, kSparseOnly };

std::string_view to_string(UserType type);
UserType user_type_from_string(std::string_view name);

struct CrossGraphDataset {
  BipartiteGraph main;
  BipartiteGraph sparse;
  std::vector<std::string> mutual_users;  // in main-graph order
  std::map<std::string, UserType> user_type;
  std::vector<std::string> warnings;

  std::vector<std::string> users_of_type(UserType type) const;
};

// Throws if either graph is empty or the two graphs share object ids. An empty
// mutual-user set is recorded in `warnings`.
CrossGraphDataset build_cross_dataset(BipartiteGraph main, BipartiteGraph sparse);

struct DatasetManifest {
  std::filesystem::path main_path;
  std::string main_tag = "main";
  std::filesystem::path sparse_path;
  std::string sparse_tag = "sparse";
  std::optional<std::filesystem::path> truth_path;
};

// JSON manifest: {"main": {"path": ..., "tag": ...}, "sparse": {...}, "truth": ...}.
// Relative paths resolve against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
CrossGraphDataset load_dataset(const DatasetManifest& manifest);

using CommunityMap = std::map<std::string, int>;

// `user <TAB> community` lines.
CommunityMap load_truth(const std::filesystem::path& path);
void save_truth(const CommunityMap& truth, const std::filesystem::path& path);

}  // namespace pccd
