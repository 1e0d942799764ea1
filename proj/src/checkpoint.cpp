// Text checkpoint, one record per line:
//
//   pccd-checkpoint 1
//   config <key> <value>                 (one line per ModelConfig field)
//   object_community <n> <c_0> ... <c_n-1>
//   tensor <name> <n> <v_0> ... <v_n-1>  (ModelParams::for_each order, column-major)
//   state <name> <rows> <cols> <values>  (main_memory, sparse_memory, bn stats)
//
// Doubles are written in shortest round-trip form, so save/load is lossless
// and equal models produce byte-identical files.

#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pccd/format.hpp"
#include "pccd/model.hpp"

namespace pccd {
namespace {

constexpr const char* kFormatTag = "pccd-checkpoint";
constexpr int kFormatVersion = 1;

void write_double(std::ostream& out, double value) { out << format_double(value); }

double parse_double(const std::string& token) {
  double value = 0.0;
  const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
  if (result.ec != std::errc() || result.ptr != token.data() + token.size()) {
    throw std::runtime_error("checkpoint: bad number '" + token + "'");
  }
  return value;
}

void write_values(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    out << ' ';
    write_double(out, v);
  }
  out << '\n';
}

void write_state(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "state " << name << ' ' << m.rows() << ' ' << m.cols();
  write_values(out, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

std::istringstream expect_line(std::istream& in, const std::string& keyword) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated before " + keyword);
  std::istringstream fields(line);
  std::string word;
  fields >> word;
  if (word != keyword) {
    throw std::runtime_error("checkpoint: expected '" + keyword + "' but found '" + word + "'");
  }
  return fields;
}

void read_values(std::istringstream& fields, std::span<double> values, const std::string& what) {
  std::string token;
  for (double& v : values) {
    if (!(fields >> token)) throw std::runtime_error("checkpoint: too few values for " + what);
    v = parse_double(token);
  }
  if (fields >> token) throw std::runtime_error("checkpoint: too many values for " + what);
}

Matrix read_state(std::istream& in, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto fields = expect_line(in, "state");
  std::string found;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  fields >> found >> r >> c;
  if (found != name || r != rows || c != cols) {
    throw std::runtime_error("checkpoint: state '" + name + "' has unexpected shape");
  }
  Matrix m(rows, cols);
  read_values(fields, std::span<double>(m.data(), static_cast<std::size_t>(m.size())), name);
  return m;
}

std::map<std::string, std::string> config_fields(const ModelConfig& c) {
  auto num = [](auto v) { return std::to_string(v); };
  auto real = [](double v) {
    std::ostringstream out;
    write_double(out, v);
    return out.str();
  };
  return {
      {"communities", num(c.communities)},
      {"direct_dim", num(c.direct_dim)},
      {"embedding_dim", num(c.embedding_dim)},
      {"attention_dim", num(c.attention_dim)},
      {"correlation_dim", num(c.correlation_dim)},
      {"raw_communities", num(c.raw_communities)},
      {"main_objects", num(c.main_objects)},
      {"sparse_objects", num(c.sparse_objects)},
      {"alpha", real(c.alpha)},
      {"batch_norm_epsilon", real(c.batch_norm_epsilon)},
      {"batch_norm_momentum", real(c.batch_norm_momentum)},
      {"use_raw_community", num(int(c.components.raw_community))},
      {"use_direct", num(int(c.components.direct))},
      {"use_node_filter", num(int(c.components.node_filter))},
      {"use_community_filter", num(int(c.components.community_filter))},
  };
}

ModelConfig config_from_fields(const std::map<std::string, std::string>& f) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = f.find(key);
    if (it == f.end()) throw std::runtime_error("checkpoint: missing config field " + key);
    return it->second;
  };
  auto size = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  ModelConfig c;
  c.communities = size("communities");
  c.direct_dim = size("direct_dim");
  c.embedding_dim = size("embedding_dim");
  c.attention_dim = size("attention_dim");
  c.correlation_dim = size("correlation_dim");
  c.raw_communities = size("raw_communities");
  c.main_objects = size("main_objects");
  c.sparse_objects = size("sparse_objects");
  c.alpha = parse_double(get("alpha"));
  c.batch_norm_epsilon = parse_double(get("batch_norm_epsilon"));
  c.batch_norm_momentum = parse_double(get("batch_norm_momentum"));
  c.components.raw_community = get("use_raw_community") == "1";
  c.components.direct = get("use_direct") == "1";
  c.components.node_filter = get("use_node_filter") == "1";
  c.components.community_filter = get("use_community_filter") == "1";
  return c;
}

}  // namespace

void save_checkpoint(const PccdModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kFormatTag << ' ' << kFormatVersion << '\n';
  for (const auto& [key, value] : config_fields(model.config)) {
    out << "config " << key << ' ' << value << '\n';
  }
  out << "object_community " << model.object_community.size();
  for (int c : model.object_community) out << ' ' << c;
  out << '\n';
  model.params.for_each([&](std::string_view name, std::span<const double> values) {
    out << "tensor " << name << ' ' << values.size();
    write_values(out, values);
  });
  write_state(out, "main_memory", model.state.main_memory);
  write_state(out, "sparse_memory", model.state.sparse_memory);
  write_state(out, "main_bn_mean", model.state.main_bn.mean);
  write_state(out, "main_bn_variance", model.state.main_bn.variance);
  write_state(out, "sparse_bn_mean", model.state.sparse_bn.mean);
  write_state(out, "sparse_bn_variance", model.state.sparse_bn.variance);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

PccdModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != kFormatTag) throw std::runtime_error("not a checkpoint file: " + path.string());
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');

  std::map<std::string, std::string> fields;
  std::string line;
  while (in.peek() == 'c') {
    std::getline(in, line);
    std::istringstream parts(line);
    std::string word, key, value;
    parts >> word >> key >> value;
    if (word != "config") throw std::runtime_error("checkpoint: malformed config line");
    fields[key] = value;
  }
  const ModelConfig config = config_from_fields(fields);

  auto oc_fields = expect_line(in, "object_community");
  std::size_t count = 0;
  oc_fields >> count;
  std::vector<int> object_community(count);
  for (int& c : object_community) {
    if (!(oc_fields >> c)) throw std::runtime_error("checkpoint: truncated object communities");
  }

  PccdModel model = init_model(config, std::move(object_community), 0);
  model.params.for_each([&](std::string_view name, std::span<double> values) {
    auto t = expect_line(in, "tensor");
    std::string found;
    std::size_t size = 0;
    t >> found >> size;
    if (found != name || size != values.size()) {
      throw std::runtime_error("checkpoint: tensor '" + std::string(name) + "' mismatch");
    }
    read_values(t, values, found);
  });
  const Matrix& mm = model.state.main_memory;
  const Matrix& sm = model.state.sparse_memory;
  model.state.main_memory = read_state(in, "main_memory", mm.rows(), mm.cols());
  model.state.sparse_memory = read_state(in, "sparse_memory", sm.rows(), sm.cols());
  model.state.main_bn.mean = read_state(in, "main_bn_mean", mm.cols(), 1);
  model.state.main_bn.variance = read_state(in, "main_bn_variance", mm.cols(), 1);
  model.state.sparse_bn.mean = read_state(in, "sparse_bn_mean", sm.cols(), 1);
  model.state.sparse_bn.variance = read_state(in, "sparse_bn_variance", sm.cols(), 1);
  return model;
}

}  // namespace pccd
