#include "pccd/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pccd/rng.hpp"

namespace pccd {
namespace {

constexpr double kLogClamp = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename SideT, typename Fn>
void visit_side(SideT& s, const char* prefix, Fn&& fn) {
  const std::string p(prefix);
  fn(p + "direct_weight", s.direct_weight);
  fn(p + "direct_bias", s.direct_bias);
  fn(p + "object_embedding", s.object_embedding);
  fn(p + "attention_weight", s.attention_weight);
  fn(p + "attention_bias", s.attention_bias);
  fn(p + "attention_proj", s.attention_proj);
  fn(p + "bn_scale", s.bn_scale);
  fn(p + "bn_shift", s.bn_shift);
  fn(p + "affiliation_proj", s.affiliation_proj);
  fn(p + "update_weight", s.update_weight);
  fn(p + "update_bias", s.update_bias);
  fn(p + "candidate_weight", s.candidate_weight);
  fn(p + "candidate_bias", s.candidate_bias);
  fn(p + "correlation_weight", s.correlation_weight);
  fn(p + "correlation_bias", s.correlation_bias);
}

template <typename ParamsT, typename Fn>
void visit_params(ParamsT& params, Fn&& fn) {
  visit_side(params.main, "main.", fn);
  visit_side(params.sparse, "sparse.", fn);
  fn(std::string("community_weight"), params.community_weight);
  fn(std::string("head_weight"), params.head_weight);
  fn(std::string("head_bias"), params.head_bias);
}

template <typename Dense>
void xavier(Dense& tensor, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index i = 0; i < tensor.size(); ++i) tensor.data()[i] = rng.uniform(-limit, limit);
}

SideParams init_side(const ModelConfig& cfg, Side side, std::size_t objects, Rng& rng) {
  const auto dim = static_cast<Eigen::Index>(cfg.representation_dim(side));
  const auto de = static_cast<Eigen::Index>(cfg.direct_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.embedding_dim);
  const auto da = static_cast<Eigen::Index>(cfg.attention_dim);
  const auto dr = static_cast<Eigen::Index>(cfg.correlation_dim);
  const auto k = static_cast<Eigen::Index>(cfg.communities);
  const auto no = static_cast<Eigen::Index>(objects);

  SideParams s;
  s.direct_weight.resize(de, no);
  xavier(s.direct_weight, objects, cfg.direct_dim, rng);
  s.direct_bias = Vector::Zero(de);
  s.object_embedding.resize(no, dh);
  xavier(s.object_embedding, objects, cfg.embedding_dim, rng);
  s.attention_weight.resize(da, dh);
  xavier(s.attention_weight, cfg.embedding_dim, cfg.attention_dim, rng);
  s.attention_bias = Vector::Zero(da);
  s.attention_proj.resize(da);
  xavier(s.attention_proj, cfg.attention_dim, 1, rng);
  s.bn_scale = Vector::Ones(dim);
  s.bn_shift = Vector::Zero(dim);
  s.affiliation_proj.resize(dim);
  xavier(s.affiliation_proj, static_cast<std::size_t>(dim), 1, rng);
  s.update_weight.resize(dim, 2 * dim);
  xavier(s.update_weight, static_cast<std::size_t>(2 * dim), static_cast<std::size_t>(dim), rng);
  s.update_bias = Vector::Zero(dim);
  s.candidate_weight.resize(dim, dim);
  xavier(s.candidate_weight, static_cast<std::size_t>(dim), static_cast<std::size_t>(dim), rng);
  s.candidate_bias = Vector::Zero(dim);
  s.correlation_weight.resize(dr, k);
  xavier(s.correlation_weight, cfg.communities, cfg.correlation_dim, rng);
  s.correlation_bias = Vector::Zero(dr);
  return s;
}

const MultiHot& view_of(const UserInput& user, Side side) {
  return side == Side::kMain ? user.main : user.sparse;
}

// Gradient of the community constraint with respect to each memory row.
Matrix constraint_gradient(const Matrix& memory) {
  const Eigen::Index k = memory.rows();
  const Vector norms = memory.rowwise().norm();
  Matrix grad = Matrix::Zero(memory.rows(), memory.cols());
  const double scale = 1.0 / static_cast<double>(k * k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (norms(i) == 0.0) continue;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == i || norms(j) == 0.0) continue;
      const double cos = memory.row(i).dot(memory.row(j)) / (norms(i) * norms(j));
      grad.row(i) += scale * (memory.row(j) / (norms(i) * norms(j)) -
                              cos * memory.row(i) / (norms(i) * norms(i)));
    }
  }
  return grad;
}

SideTrace forward_side(const PccdModel& model, Side side, std::span<const UserInput* const> users,
                       Mode mode) {
  const ModelConfig& cfg = model.config;
  const SideParams& p = model.side(side);
  const Matrix& memory = model.memory(side);
  const Components& comp = cfg.components;
  const auto n = static_cast<Eigen::Index>(users.size());
  const auto dim = static_cast<Eigen::Index>(cfg.representation_dim(side));
  const Eigen::Index raw = side == Side::kMain ? static_cast<Eigen::Index>(cfg.raw_communities) : 0;
  const auto de = static_cast<Eigen::Index>(cfg.direct_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.embedding_dim);
  const auto num_objects = static_cast<std::size_t>(p.object_embedding.rows());

  SideTrace t;
  t.users.resize(users.size());
  t.concat = Matrix::Zero(n, dim);

  if (comp.node_filter) {
    t.object_hidden =
        ((p.object_embedding * p.attention_weight.transpose()).rowwise() +
         p.attention_bias.transpose())
            .array()
            .tanh()
            .matrix();
    t.object_logit = t.object_hidden * p.attention_proj;
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    const UserInput& user = *users[static_cast<std::size_t>(r)];
    auto& cache = t.users[static_cast<std::size_t>(r)];
    const MultiHot& view = view_of(user, side);

    if (side == Side::kMain && comp.raw_community && user.raw_community >= 0) {
      if (user.raw_community >= raw) throw std::out_of_range("raw community index out of range");
      t.concat(r, user.raw_community) = 1.0;
    }

    for (const auto& entry : view) {
      if (entry.index >= num_objects) throw std::out_of_range("object index out of range");
      cache.neighbors.push_back(entry.index);
      cache.weights.push_back(entry.weight);
    }

    if (comp.direct) {
      Vector pre = p.direct_bias;
      for (std::size_t a = 0; a < cache.neighbors.size(); ++a) {
        pre += cache.weights[a] * p.direct_weight.col(static_cast<Eigen::Index>(cache.neighbors[a]));
      }
      t.concat.row(r).segment(raw, de) = pre.array().tanh().matrix().transpose();
    }

    const auto count = static_cast<Eigen::Index>(cache.neighbors.size());
    if (count == 0) continue;
    cache.attention_logit = Vector::Zero(count);
    cache.propagation = Vector::Constant(count, 1.0 / static_cast<double>(count));
    if (comp.node_filter) {
      Vector score(count);
      for (Eigen::Index a = 0; a < count; ++a) {
        const std::size_t obj = cache.neighbors[static_cast<std::size_t>(a)];
        cache.attention_logit(a) = t.object_logit(static_cast<Eigen::Index>(obj));
        double scale = 1.0;
        if (side == Side::kMain && comp.community_filter) {
          scale = model.params.community_weight(model.object_community[obj]);
        }
        score(a) = cache.attention_logit(a) * scale;
      }
      const double top = score.maxCoeff();
      cache.propagation = (score.array() - top).exp().matrix();
      cache.propagation /= cache.propagation.sum();
    }
    Vector propagated = Vector::Zero(dh);
    for (Eigen::Index a = 0; a < count; ++a) {
      propagated += cache.propagation(a) *
                    p.object_embedding.row(static_cast<Eigen::Index>(cache.neighbors[static_cast<std::size_t>(a)])).transpose();
    }
    t.concat.row(r).segment(raw + de, dh) = propagated.transpose();
  }

  // Batch norm.
  if (mode == Mode::kTrain) {
    t.batch_stats.mean = t.concat.colwise().mean().transpose();
    t.batch_stats.variance =
        (t.concat.rowwise() - t.batch_stats.mean.transpose()).array().square().colwise().mean().transpose();
  } else {
    t.batch_stats = side == Side::kMain ? model.state.main_bn : model.state.sparse_bn;
  }
  t.inv_std = (t.batch_stats.variance.array() + cfg.batch_norm_epsilon).rsqrt().matrix();
  t.normalized = ((t.concat.rowwise() - t.batch_stats.mean.transpose()).array().rowwise() *
                  t.inv_std.transpose().array())
                     .matrix();
  t.representation = ((t.normalized.array().rowwise() * p.bn_scale.transpose().array()).rowwise() +
                      p.bn_shift.transpose().array())
                         .matrix();
  t.squashed = t.representation.array().tanh().matrix();

  // Affiliation gate: c_k = sigmoid(u_c . (tanh(v) * d_k)).
  const Matrix projected = (t.squashed.array().rowwise() * p.affiliation_proj.transpose().array()).matrix();
  t.affiliation = (projected * memory.transpose()).unaryExpr([](double x) { return sigmoid(x); });

  if (mode == Mode::kTrain) {
    t.gate_from_user = t.representation * p.update_weight.leftCols(dim).transpose();
    t.gate_from_memory = (memory * p.update_weight.rightCols(dim).transpose()).rowwise() +
                         p.update_bias.transpose();
    t.candidate = ((t.representation * p.candidate_weight.transpose()).rowwise() +
                   p.candidate_bias.transpose())
                      .array()
                      .tanh()
                      .matrix();
    t.updated_memory = Matrix::Zero(memory.rows(), memory.cols());
    for (Eigen::Index k = 0; k < memory.rows(); ++k) {
      for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::ArrayXd s =
            (t.gate_from_user.row(r) + t.gate_from_memory.row(k)).transpose().array().unaryExpr(
                [](double x) { return sigmoid(x); });
        t.updated_memory.row(k) += ((1.0 - s) * memory.row(k).transpose().array() +
                                    s * t.candidate.row(r).transpose().array())
                                       .matrix()
                                       .transpose();
      }
    }
    if (n > 0) t.updated_memory /= static_cast<double>(n);
  } else {
    t.updated_memory = memory;
  }
  t.constraint = community_constraint(t.updated_memory);
  return t;
}

// Backpropagates d(loss)/d(affiliation) through one side into `grad`.
void backward_side(const PccdModel& model, Side side, const SideTrace& t,
                   const Matrix& d_affiliation, double alpha, SideParams& grad,
                   Vector& d_community_weight) {
  const ModelConfig& cfg = model.config;
  const SideParams& p = model.side(side);
  const Matrix& memory = model.memory(side);
  const Components& comp = cfg.components;
  const Eigen::Index n = t.representation.rows();
  const auto dim = static_cast<Eigen::Index>(cfg.representation_dim(side));
  const Eigen::Index raw = side == Side::kMain ? static_cast<Eigen::Index>(cfg.raw_communities) : 0;
  const auto de = static_cast<Eigen::Index>(cfg.direct_dim);
  const auto dh = static_cast<Eigen::Index>(cfg.embedding_dim);

  // Affiliation gate.
  const Matrix d_logit =
      (d_affiliation.array() * t.affiliation.array() * (1.0 - t.affiliation.array())).matrix();
  const Matrix d_projected = d_logit * memory;
  grad.affiliation_proj += (d_projected.array() * t.squashed.array()).colwise().sum().transpose().matrix();
  const Matrix d_squashed = (d_projected.array().rowwise() * p.affiliation_proj.transpose().array()).matrix();
  Matrix d_rep = (d_squashed.array() * (1.0 - t.squashed.array().square())).matrix();

  // Constraint on the updated memory, reaching the update gate and v.
  if (alpha != 0.0 && n > 0) {
    const Matrix d_updated = alpha * constraint_gradient(t.updated_memory) / static_cast<double>(n);
    Matrix d_gate_user = Matrix::Zero(n, dim);
    Matrix d_gate_memory = Matrix::Zero(memory.rows(), dim);
    Matrix d_candidate = Matrix::Zero(n, dim);
    for (Eigen::Index k = 0; k < memory.rows(); ++k) {
      for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::ArrayXd s =
            (t.gate_from_user.row(r) + t.gate_from_memory.row(k)).transpose().array().unaryExpr(
                [](double x) { return sigmoid(x); });
        const Eigen::ArrayXd g = d_updated.row(k).transpose().array();
        const Eigen::ArrayXd d_pre =
            g * (t.candidate.row(r).transpose().array() - memory.row(k).transpose().array()) * s *
            (1.0 - s);
        d_gate_user.row(r) += d_pre.matrix().transpose();
        d_gate_memory.row(k) += d_pre.matrix().transpose();
        d_candidate.row(r) += (g * s).matrix().transpose();
      }
    }
    grad.update_weight.leftCols(dim) += d_gate_user.transpose() * t.representation;
    grad.update_weight.rightCols(dim) += d_gate_memory.transpose() * memory;
    grad.update_bias += d_gate_memory.colwise().sum().transpose();
    d_rep += d_gate_user * p.update_weight.leftCols(dim);

    const Matrix d_cand_pre = (d_candidate.array() * (1.0 - t.candidate.array().square())).matrix();
    grad.candidate_weight += d_cand_pre.transpose() * t.representation;
    grad.candidate_bias += d_cand_pre.colwise().sum().transpose();
    d_rep += d_cand_pre * p.candidate_weight;
  }

  // Batch norm (batch statistics).
  grad.bn_scale += (d_rep.array() * t.normalized.array()).colwise().sum().transpose().matrix();
  grad.bn_shift += d_rep.colwise().sum().transpose();
  const Matrix d_norm = (d_rep.array().rowwise() * p.bn_scale.transpose().array()).matrix();
  const Eigen::RowVectorXd mean_d = d_norm.colwise().mean();
  const Eigen::RowVectorXd mean_dx = (d_norm.array() * t.normalized.array()).colwise().mean();
  const Matrix d_concat =
      (((d_norm.rowwise() - mean_d).array() - t.normalized.array().rowwise() * mean_dx.array())
           .rowwise() *
       t.inv_std.transpose().array())
          .matrix();

  Vector d_object_logit = Vector::Zero(p.object_embedding.rows());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& cache = t.users[static_cast<std::size_t>(r)];
    if (comp.direct) {
      const Eigen::ArrayXd ve = t.concat.row(r).segment(raw, de).transpose().array();
      const Vector d_pre = (d_concat.row(r).segment(raw, de).transpose().array() * (1.0 - ve.square())).matrix();
      grad.direct_bias += d_pre;
      for (std::size_t a = 0; a < cache.neighbors.size(); ++a) {
        grad.direct_weight.col(static_cast<Eigen::Index>(cache.neighbors[a])) += cache.weights[a] * d_pre;
      }
    }
    const auto count = static_cast<Eigen::Index>(cache.neighbors.size());
    if (count == 0) continue;
    const Vector d_vp = d_concat.row(r).segment(raw + de, dh).transpose();
    Vector d_weight(count);
    for (Eigen::Index a = 0; a < count; ++a) {
      const auto obj = static_cast<Eigen::Index>(cache.neighbors[static_cast<std::size_t>(a)]);
      grad.object_embedding.row(obj) += cache.propagation(a) * d_vp.transpose();
      d_weight(a) = d_vp.dot(p.object_embedding.row(obj).transpose());
    }
    if (!comp.node_filter) continue;
    const double mean_weight = cache.propagation.dot(d_weight);
    for (Eigen::Index a = 0; a < count; ++a) {
      const std::size_t obj = cache.neighbors[static_cast<std::size_t>(a)];
      const double d_score = cache.propagation(a) * (d_weight(a) - mean_weight);
      if (side == Side::kMain && comp.community_filter) {
        const int community = model.object_community[obj];
        d_object_logit(static_cast<Eigen::Index>(obj)) +=
            d_score * model.params.community_weight(community);
        d_community_weight(community) += d_score * cache.attention_logit(a);
      } else {
        d_object_logit(static_cast<Eigen::Index>(obj)) += d_score;
      }
    }
  }

  if (comp.node_filter) {
    grad.attention_proj += t.object_hidden.transpose() * d_object_logit;
    const Matrix d_hidden_pre =
        ((d_object_logit * p.attention_proj.transpose()).array() *
         (1.0 - t.object_hidden.array().square()))
            .matrix();
    grad.attention_weight += d_hidden_pre.transpose() * p.object_embedding;
    grad.attention_bias += d_hidden_pre.colwise().sum().transpose();
    grad.object_embedding += d_hidden_pre * p.attention_weight;
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (communities == 0 || direct_dim == 0 || embedding_dim == 0 || attention_dim == 0 ||
      correlation_dim == 0 || raw_communities == 0 || main_objects == 0 || sparse_objects == 0) {
    throw std::invalid_argument("model dimensions must be at least 1");
  }
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (!(batch_norm_epsilon > 0.0)) throw std::invalid_argument("batch-norm epsilon must be positive");
  if (!(batch_norm_momentum >= 0.0 && batch_norm_momentum <= 1.0)) {
    throw std::invalid_argument("batch-norm momentum must lie in [0, 1]");
  }
}

void ModelParams::for_each(const std::function<void(std::string_view, std::span<double>)>& fn) {
  visit_params(*this, [&](const std::string& name, auto& tensor) {
    fn(name, std::span<double>(tensor.data(), static_cast<std::size_t>(tensor.size())));
  });
}

void ModelParams::for_each(
    const std::function<void(std::string_view, std::span<const double>)>& fn) const {
  visit_params(*this, [&](const std::string& name, const auto& tensor) {
    fn(name, std::span<const double>(tensor.data(), static_cast<std::size_t>(tensor.size())));
  });
}

ModelParams ModelParams::zeros_like() const {
  ModelParams zeros = *this;
  zeros.for_each([](std::string_view, std::span<double> values) {
    std::fill(values.begin(), values.end(), 0.0);
  });
  return zeros;
}

std::size_t ModelParams::size() const {
  std::size_t total = 0;
  for_each([&](std::string_view, std::span<const double> values) { total += values.size(); });
  return total;
}

PccdModel init_model(const ModelConfig& config, std::vector<int> object_community,
                     std::uint64_t seed) {
  config.validate();
  if (object_community.size() != config.main_objects) {
    throw std::invalid_argument("object community list does not match the main object count");
  }
  for (int c : object_community) {
    if (c < 0 || static_cast<std::size_t>(c) >= config.raw_communities) {
      throw std::invalid_argument("object community id out of range");
    }
  }
  Rng rng(seed);
  PccdModel model;
  model.config = config;
  model.object_community = std::move(object_community);
  model.params.main = init_side(config, Side::kMain, config.main_objects, rng);
  model.params.sparse = init_side(config, Side::kSparse, config.sparse_objects, rng);
  model.params.community_weight = Vector::Ones(static_cast<Eigen::Index>(config.raw_communities));
  model.params.head_weight.resize(static_cast<Eigen::Index>(2 * config.correlation_dim));
  xavier(model.params.head_weight, 2 * config.correlation_dim, 1, rng);
  model.params.head_bias = Vector::Zero(1);

  const auto k = static_cast<Eigen::Index>(config.communities);
  for (Side side : {Side::kMain, Side::kSparse}) {
    const auto dim = static_cast<Eigen::Index>(config.representation_dim(side));
    Matrix memory(k, dim);
    xavier(memory, static_cast<std::size_t>(dim), config.communities, rng);
    BatchNormStats bn{Vector::Zero(dim), Vector::Ones(dim)};
    if (side == Side::kMain) {
      model.state.main_memory = std::move(memory);
      model.state.main_bn = std::move(bn);
    } else {
      model.state.sparse_memory = std::move(memory);
      model.state.sparse_bn = std::move(bn);
    }
  }
  return model;
}

BatchTrace forward_batch(const PccdModel& model, std::span<const TripletInput> batch, Mode mode) {
  BatchTrace trace;
  trace.mode = mode;
  std::vector<const UserInput*> users;
  users.reserve(3 * batch.size());
  for (const auto& triplet : batch) {
    for (const auto& member : triplet.members) users.push_back(&member);
    trace.label.push_back(triplet.label);
  }
  trace.main = forward_side(model, Side::kMain, users, mode);
  trace.sparse = forward_side(model, Side::kSparse, users, mode);

  const ModelParams& p = model.params;
  const auto dr = static_cast<Eigen::Index>(model.config.correlation_dim);
  const auto b = static_cast<Eigen::Index>(batch.size());
  trace.pair_ij.resize(b, 2 * dr);
  trace.pair_ik.resize(b, 2 * dr);
  double cross_entropy = 0.0;
  for (Eigen::Index t = 0; t < b; ++t) {
    auto correlation = [&](Eigen::Index other) {
      Vector pre(2 * dr);
      pre.head(dr) = p.sparse.correlation_weight *
                         (trace.sparse.affiliation.row(3 * t) - trace.sparse.affiliation.row(3 * t + other))
                             .transpose() +
                     p.sparse.correlation_bias;
      pre.tail(dr) = p.main.correlation_weight *
                         (trace.main.affiliation.row(3 * t) - trace.main.affiliation.row(3 * t + other))
                             .transpose() +
                     p.main.correlation_bias;
      return Vector(pre.array().tanh().matrix());
    };
    trace.pair_ij.row(t) = correlation(1).transpose();
    trace.pair_ik.row(t) = correlation(2).transpose();
    const double logit =
        p.head_weight.dot((trace.pair_ij.row(t) - trace.pair_ik.row(t)).transpose()) + p.head_bias(0);
    const double y_hat = sigmoid(logit);
    trace.prediction.push_back(y_hat);
    cross_entropy += total_loss(y_hat, trace.label[static_cast<std::size_t>(t)], 0.0, 0.0, 0.0);
  }
  trace.prediction_loss = b > 0 ? cross_entropy / static_cast<double>(b) : 0.0;
  trace.loss = trace.prediction_loss +
               model.config.alpha * (trace.sparse.constraint + trace.main.constraint);
  return trace;
}

ModelParams backward_batch(const PccdModel& model, std::span<const TripletInput> batch,
                           const BatchTrace& trace) {
  if (trace.mode != Mode::kTrain) throw std::logic_error("backward needs a training-mode trace");
  const ModelParams& p = model.params;
  ModelParams grad = p.zeros_like();
  const auto dr = static_cast<Eigen::Index>(model.config.correlation_dim);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index k = static_cast<Eigen::Index>(model.config.communities);

  Matrix d_main = Matrix::Zero(3 * b, k);
  Matrix d_sparse = Matrix::Zero(3 * b, k);
  for (Eigen::Index t = 0; t < b; ++t) {
    const double d_logit = (trace.prediction[static_cast<std::size_t>(t)] -
                            trace.label[static_cast<std::size_t>(t)]) /
                           static_cast<double>(b);
    const Eigen::RowVectorXd diff = trace.pair_ij.row(t) - trace.pair_ik.row(t);
    grad.head_weight += d_logit * diff.transpose();
    grad.head_bias(0) += d_logit;

    for (Eigen::Index other : {1, 2}) {
      const double sign = other == 1 ? 1.0 : -1.0;
      const Eigen::RowVectorXd pair = other == 1 ? trace.pair_ij.row(t) : trace.pair_ik.row(t);
      const Vector d_pre =
          (sign * d_logit * p.head_weight.array() * (1.0 - pair.transpose().array().square())).matrix();
      auto accumulate = [&](const SideParams& side, SideParams& g, const SideTrace& st,
                            Matrix& d_aff, const Vector& d_r) {
        const Eigen::RowVectorXd delta = st.affiliation.row(3 * t) - st.affiliation.row(3 * t + other);
        g.correlation_weight += d_r * delta;
        g.correlation_bias += d_r;
        const Eigen::RowVectorXd d_c = (side.correlation_weight.transpose() * d_r).transpose();
        d_aff.row(3 * t) += d_c;
        d_aff.row(3 * t + other) -= d_c;
      };
      accumulate(p.sparse, grad.sparse, trace.sparse, d_sparse, d_pre.head(dr));
      accumulate(p.main, grad.main, trace.main, d_main, d_pre.tail(dr));
    }
  }

  backward_side(model, Side::kMain, trace.main, d_main, model.config.alpha, grad.main,
                grad.community_weight);
  Vector unused = Vector::Zero(grad.community_weight.size());
  backward_side(model, Side::kSparse, trace.sparse, d_sparse, model.config.alpha, grad.sparse,
                unused);
  if (!model.config.components.community_filter) grad.community_weight.setZero();
  return grad;
}

void commit_state(PccdModel& model, const BatchTrace& trace) {
  if (trace.mode != Mode::kTrain) return;
  const double m = model.config.batch_norm_momentum;
  auto update = [m](BatchNormStats& running, const BatchNormStats& batch) {
    running.mean = m * running.mean + (1.0 - m) * batch.mean;
    running.variance = m * running.variance + (1.0 - m) * batch.variance;
  };
  model.state.main_memory = trace.main.updated_memory;
  model.state.sparse_memory = trace.sparse.updated_memory;
  update(model.state.main_bn, trace.main.batch_stats);
  update(model.state.sparse_bn, trace.sparse.batch_stats);
}

UserEncoding encode_user(const PccdModel& model, const UserInput& user, Side side) {
  const UserInput* users[] = {&user};
  SideTrace t = forward_side(model, side, users, Mode::kEval);
  return {t.representation.row(0).transpose(), t.affiliation.row(0).transpose()};
}

Vector affiliation_scores(const Vector& representation, const Matrix& memory,
                          const Vector& projection) {
  if (representation.size() != memory.cols() || projection.size() != memory.cols()) {
    throw std::invalid_argument("affiliation: representation and memory widths differ");
  }
  const Vector projected = (representation.array().tanh() * projection.array()).matrix();
  return (memory * projected).unaryExpr([](double x) { return sigmoid(x); });
}

Matrix memory_update(std::span<const Vector> users, const Matrix& memory, const SideParams& side) {
  const Eigen::Index dim = memory.cols();
  if (side.update_weight.rows() != dim || side.update_weight.cols() != 2 * dim) {
    throw std::invalid_argument("memory update: gate shape does not match the memory");
  }
  Matrix updated = Matrix::Zero(memory.rows(), dim);
  if (users.empty()) return memory;
  for (const Vector& v : users) {
    if (v.size() != dim) throw std::invalid_argument("memory update: representation width differs");
    const Vector candidate = (side.candidate_weight * v + side.candidate_bias).array().tanh().matrix();
    for (Eigen::Index k = 0; k < memory.rows(); ++k) {
      Vector joint(2 * dim);
      joint << v, memory.row(k).transpose();
      const Eigen::ArrayXd s = (side.update_weight * joint + side.update_bias).array().unaryExpr(
          [](double x) { return sigmoid(x); });
      updated.row(k) += ((1.0 - s) * memory.row(k).transpose().array() + s * candidate.array())
                            .matrix()
                            .transpose();
    }
  }
  return updated / static_cast<double>(users.size());
}

double community_constraint(const Matrix& memory) {
  const Eigen::Index k = memory.rows();
  if (k == 0) return 0.0;
  const Vector norms = memory.rowwise().norm();
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (norms(i) == 0.0 || norms(j) == 0.0) continue;
      total += memory.row(i).dot(memory.row(j)) / (norms(i) * norms(j));
    }
  }
  return total / (2.0 * static_cast<double>(k * k));
}

double pair_prediction(const ModelParams& params, const std::array<Vector, 3>& main_affiliation,
                       const std::array<Vector, 3>& sparse_affiliation) {
  auto correlation = [&](int other) {
    const auto dr = params.sparse.correlation_bias.size();
    Vector pre(2 * dr);
    pre.head(dr) = params.sparse.correlation_weight * (sparse_affiliation[0] - sparse_affiliation[other]) +
                   params.sparse.correlation_bias;
    pre.tail(dr) = params.main.correlation_weight * (main_affiliation[0] - main_affiliation[other]) +
                   params.main.correlation_bias;
    return Vector(pre.array().tanh().matrix());
  };
  return sigmoid(params.head_weight.dot(correlation(1) - correlation(2)) + params.head_bias(0));
}

double total_loss(double prediction, double label, double constraint_sparse,
                  double constraint_main, double alpha) {
  const double y_hat = std::clamp(prediction, kLogClamp, 1.0 - kLogClamp);
  return -label * std::log(y_hat) - (1.0 - label) * std::log(1.0 - y_hat) +
         alpha * (constraint_sparse + constraint_main);
}

std::string_view to_string(Closeness c) {
  switch (c) {
    case Closeness::kFarther:
      return "farther";
    case Closeness::kSimilar:
      return "similar";
    case Closeness::kCloser:
      return "closer";
  }
  return "?";
}

Closeness classify_score(double prediction) {
  if (prediction < 1.0 / 3.0) return Closeness::kFarther;
  if (prediction < 2.0 / 3.0) return Closeness::kSimilar;
  return Closeness::kCloser;
}

Closeness closeness_from_label(double label) {
  if (label == 0.0) return Closeness::kFarther;
  if (label == 0.5) return Closeness::kSimilar;
  if (label == 1.0) return Closeness::kCloser;
  throw std::invalid_argument("triplet label must be 0, 0.5 or 1");
}

double label_from_closeness(Closeness c) { return 0.5 * static_cast<double>(c); }

}  // namespace pccd
