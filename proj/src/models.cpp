#include "spillcast/models.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>
#include <utility>

#include "spillcast/errors.hpp"

namespace spillcast {

namespace {

using ad::Var;

std::string layer_name(int i, const char* suffix) {
  return "l" + std::to_string(i) + "." + suffix;
}

}  // namespace

ModelKind parse_model_kind(const std::string& s) {
  if (s == "gcn") return ModelKind::gcn;
  if (s == "gat") return ModelKind::gat;
  if (s == "cgnn") return ModelKind::cgnn;
  if (s == "se-gcn") return ModelKind::se_gcn;
  if (s == "se-gat") return ModelKind::se_gat;
  if (s == "se-cgnn") return ModelKind::se_cgnn;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::cgnn: return "cgnn";
    case ModelKind::se_gcn: return "se-gcn";
    case ModelKind::se_gat: return "se-gat";
    case ModelKind::se_cgnn: return "se-cgnn";
  }
  throw ConfigError("invalid model kind value");
}

bool is_se(ModelKind k) {
  return k == ModelKind::se_gcn || k == ModelKind::se_gat || k == ModelKind::se_cgnn;
}

bool is_coupled(ModelKind k) { return k == ModelKind::cgnn || k == ModelKind::se_cgnn; }

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::gcn,    ModelKind::gat,    ModelKind::cgnn,
          ModelKind::se_gcn, ModelKind::se_gat, ModelKind::se_cgnn};
}

EdgeIndex EdgeIndex::from_graph(const SocialGraph& g, bool self_loops) {
  EdgeIndex ei;
  ei.num_nodes = static_cast<int>(g.node_count());
  std::vector<std::pair<int, int>> pairs;  // (dst, src)
  pairs.reserve(g.edge_count() + (self_loops ? g.node_count() : 0));
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    int v = static_cast<int>(i);
    for (UserId f : g.followees(g.node_at(i))) {
      pairs.emplace_back(v, g.index_of(f));
    }
    if (self_loops) pairs.emplace_back(v, v);
  }
  std::sort(pairs.begin(), pairs.end());
  ei.src.reserve(pairs.size());
  ei.dst.reserve(pairs.size());
  for (const auto& [d, s] : pairs) {
    ei.dst.push_back(d);
    ei.src.push_back(s);
  }
  return ei;
}

EdgeIndex build_edge_index(const SocialGraph& g, ModelKind kind) {
  return EdgeIndex::from_graph(g, !is_coupled(kind));
}

Var gcn_aggregate(Var z, const EdgeIndex& ei) {
  Var gathered = ad::gather_rows(z, ei.src);
  return ad::leaky_relu(ad::segment_mean(gathered, ei.dst, ei.num_nodes));
}

Var gat_aggregate(Var z, Var gamma, const EdgeIndex& ei) {
  Var zs = ad::gather_rows(z, ei.src);
  Var zd = ad::gather_rows(z, ei.dst);
  Var scores = ad::leaky_relu(ad::matmul(ad::concat_cols(zs, zd), gamma));
  Var w = ad::neighbor_softmax(scores, ei.dst, ei.num_nodes);
  return ad::leaky_relu(ad::segment_sum(ad::rowwise_scale(zs, w), ei.dst, ei.num_nodes));
}

Var influ_gate(Var r, Var W, Var beta, const EdgeIndex& ei) {
  Var z = ad::matmul(r, W);
  Var zs = ad::gather_rows(z, ei.src);
  Var zd = ad::gather_rows(z, ei.dst);
  return ad::matmul(ad::concat_cols(zs, zd), beta);
}

Var coupled_activation(Var gates, Var s, Var p, const EdgeIndex& ei) {
  Var ssrc = ad::gather_rows(s, ei.src);
  Var contrib = ad::hadamard(gates, ssrc);
  return ad::add(ad::segment_sum(contrib, ei.dst, ei.num_nodes), p);
}

Var influence_update(Var r, Var s, Var att_W, Var att_gamma, Var W_r,
                     const EdgeIndex& ei) {
  Var za = ad::matmul(r, att_W);
  Var zas = ad::gather_rows(za, ei.src);
  Var zad = ad::gather_rows(za, ei.dst);
  Var scores = ad::leaky_relu(ad::matmul(ad::concat_cols(zas, zad), att_gamma));
  Var eta = ad::neighbor_softmax(scores, ei.dst, ei.num_nodes);
  Var ssrc = ad::gather_rows(s, ei.src);
  Var gated = ad::rowwise_scale(ad::gather_rows(r, ei.src), ad::hadamard(eta, ssrc));
  Var msg = ad::segment_sum(gated, ei.dst, ei.num_nodes);
  return ad::leaky_relu(ad::matmul(ad::concat_cols(r, msg), W_r));
}

PopularityModel::PopularityModel(const ModelConfig& cfg) : cfg_(cfg) {
  validate_config();
  init_params();
}

void PopularityModel::validate_config() const {
  if (cfg_.layers < 1) throw ConfigError("model: layers must be >= 1");
  if (cfg_.hidden < 1) throw ConfigError("model: hidden must be >= 1");
  if (cfg_.msg_hidden < 1) throw ConfigError("model: msg_hidden must be >= 1");
  if (cfg_.attr_cols < 2) throw ConfigError("model: attr_cols must be >= 2");
  if (cfg_.msg_dim < 1) throw ConfigError("model: msg_dim must be >= 1");
  if (cfg_.num_nodes < 1) throw ConfigError("model: num_nodes must be >= 1");
}

void PopularityModel::init_params() {
  std::mt19937_64 rng(cfg_.seed);
  const int h = cfg_.hidden;
  const int base_cols = cfg_.attr_cols - 1;
  const bool se = is_se(cfg_.kind);
  if (!is_coupled(cfg_.kind)) {
    params_.add_glorot("l0.W_s", 1, h, rng);
    params_.add_glorot("l0.W_x", base_cols, h, rng);
    for (int i = 1; i < cfg_.layers; ++i) {
      params_.add_glorot(layer_name(i, "W"), h, h, rng);
    }
    if (cfg_.kind == ModelKind::gat || cfg_.kind == ModelKind::se_gat) {
      for (int i = 0; i < cfg_.layers; ++i) {
        params_.add_glorot(layer_name(i, "gamma"), 2 * h, 1, rng);
      }
    }
    params_.add_glorot("head.W_h", h, h, rng);
    if (se) params_.add_glorot("se.W_d", cfg_.msg_dim, cfg_.msg_hidden, rng);
    const int head_in = h + (se ? cfg_.msg_hidden : 0);
    params_.add_glorot("head.W1", head_in, h, rng);
    params_.add_const("head.b1", 1, h, 0.0);
    params_.add_glorot("head.W2", h, h, rng);
    params_.add_const("head.b2", 1, h, 0.0);
    params_.add_glorot("head.W3", h, 1, rng);
    params_.add_const("head.b3", 1, 1, 0.0);
  } else {
    params_.add_glorot("in.W_s", 1, h, rng);
    params_.add_glorot("in.W_x", base_cols, h, rng);
    params_.add_const("p_v", cfg_.num_nodes, 1, -4.0);
    if (se) params_.add_glorot("se.W_d", cfg_.msg_dim, cfg_.msg_hidden, rng);
    for (int i = 0; i < cfg_.layers; ++i) {
      params_.add_glorot(layer_name(i, "W"), h, h, rng);
      params_.add_glorot(layer_name(i, "beta"), 2 * h, 1, rng);
      if (se) params_.add_glorot(layer_name(i, "beta_d"), cfg_.msg_hidden, 1, rng);
      params_.add_const(layer_name(i, "mu_s"), 1, 1, 1.0);
      params_.add_const(layer_name(i, "mu_a"), 1, 1, 1.0);
      params_.add_glorot(layer_name(i, "att.W"), h, h, rng);
      params_.add_glorot(layer_name(i, "att.gamma"), 2 * h, 1, rng);
      params_.add_glorot(layer_name(i, "W_r"), 2 * h, h, rng);
    }
  }
}

PopularityModel::Batch PopularityModel::begin_batch(ad::Tape& tape,
                                                    const Eigen::MatrixXd& base) {
  if (base.rows() != cfg_.num_nodes || base.cols() != cfg_.attr_cols - 1) {
    throw ShapeError("model batch: base attributes are " + std::to_string(base.rows()) +
                     "x" + std::to_string(base.cols()) + ", expected " +
                     std::to_string(cfg_.num_nodes) + "x" +
                     std::to_string(cfg_.attr_cols - 1));
  }
  Var base_c = tape.constant(base);
  Var wx = tape.param(params_.at(is_coupled(cfg_.kind) ? "in.W_x" : "l0.W_x"));
  Batch b;
  b.tape = &tape;
  b.base_proj = ad::matmul(base_c, wx);
  return b;
}

PopularityModel::Forward PopularityModel::forward(Batch& batch, const EdgeIndex& ei,
                                                  const Eigen::VectorXd& s0,
                                                  const Eigen::RowVectorXd& dm) {
  if (batch.tape == nullptr) throw ShapeError("model forward: batch has no tape");
  ad::Tape& t = *batch.tape;
  if (ei.num_nodes != cfg_.num_nodes) {
    throw ShapeError("model forward: edge index covers " + std::to_string(ei.num_nodes) +
                     " nodes, model expects " + std::to_string(cfg_.num_nodes));
  }
  if (s0.size() != cfg_.num_nodes) {
    throw ShapeError("model forward: activation column has " + std::to_string(s0.size()) +
                     " entries, expected " + std::to_string(cfg_.num_nodes));
  }
  if (dm.size() != cfg_.msg_dim) {
    throw ShapeError("model forward: message vector has " + std::to_string(dm.size()) +
                     " entries, expected " + std::to_string(cfg_.msg_dim));
  }
  const int n = cfg_.num_nodes;
  const bool se = is_se(cfg_.kind);
  Var s0_c = t.constant(Eigen::MatrixXd(s0));
  Var unobs = t.constant(Eigen::MatrixXd(Eigen::VectorXd::Ones(n) - s0));
  Var dproj;
  if (se) {
    Var dm_c = t.constant(Eigen::MatrixXd(dm));
    dproj = ad::matmul(dm_c, t.param(params_.at("se.W_d")));
  }

  if (!is_coupled(cfg_.kind)) {
    Var ws = t.param(params_.at("l0.W_s"));
    Var z = ad::add(ad::matmul(s0_c, ws), batch.base_proj);
    const bool gat = cfg_.kind == ModelKind::gat || cfg_.kind == ModelKind::se_gat;
    Var h;
    for (int i = 0; i < cfg_.layers; ++i) {
      if (i > 0) z = ad::matmul(h, t.param(params_.at(layer_name(i, "W"))));
      h = gat ? gat_aggregate(z, t.param(params_.at(layer_name(i, "gamma"))), ei)
              : gcn_aggregate(z, ei);
    }
    Var head_in = ad::matmul(h, t.param(params_.at("head.W_h")));
    if (se) head_in = ad::concat_cols(head_in, ad::tile_rows(dproj, n));
    Var m1 = ad::leaky_relu(ad::add(ad::matmul(head_in, t.param(params_.at("head.W1"))),
                                    ad::tile_rows(t.param(params_.at("head.b1")), n)));
    Var m2 = ad::leaky_relu(ad::add(ad::matmul(m1, t.param(params_.at("head.W2"))),
                                    ad::tile_rows(t.param(params_.at("head.b2")), n)));
    Var probs = ad::sigmoid(ad::add(ad::matmul(m2, t.param(params_.at("head.W3"))),
                                    ad::tile_rows(t.param(params_.at("head.b3")), n)));
    Var statuses = ad::add(s0_c, ad::hadamard(unobs, probs));
    return {ad::reduce_sum(statuses), statuses};
  }

  Var r = ad::leaky_relu(
      ad::add(ad::matmul(s0_c, t.param(params_.at("in.W_s"))), batch.base_proj));
  Var s = s0_c;
  Var p = t.param(params_.at("p_v"));
  for (int i = 0; i < cfg_.layers; ++i) {
    Var gates = influ_gate(r, t.param(params_.at(layer_name(i, "W"))),
                           t.param(params_.at(layer_name(i, "beta"))), ei);
    if (se) {
      Var shift = ad::matmul(dproj, t.param(params_.at(layer_name(i, "beta_d"))));
      gates = ad::bcast_add(gates, shift);
    }
    Var a = coupled_activation(gates, s, p, ei);
    Var pre = ad::add(ad::matmul(s, t.param(params_.at(layer_name(i, "mu_s")))),
                      ad::matmul(a, t.param(params_.at(layer_name(i, "mu_a")))));
    Var s_new = ad::add(s0_c, ad::hadamard(unobs, ad::sigmoid(pre)));
    Var r_new = influence_update(r, s, t.param(params_.at(layer_name(i, "att.W"))),
                                 t.param(params_.at(layer_name(i, "att.gamma"))),
                                 t.param(params_.at(layer_name(i, "W_r"))), ei);
    s = s_new;
    r = r_new;
  }
  return {ad::reduce_sum(s), s};
}

PopularityModel::Prediction PopularityModel::predict(const EdgeIndex& ei,
                                                     const Eigen::MatrixXd& base,
                                                     const Eigen::VectorXd& s0,
                                                     const Eigen::RowVectorXd& dm) {
  ad::Tape tape;
  Batch b = begin_batch(tape, base);
  Forward f = forward(b, ei, s0, dm);
  Prediction pred;
  pred.popularity = tape.scalar(f.popularity);
  pred.statuses = tape.value(f.statuses).col(0);
  return pred;
}

void PopularityModel::save(std::ostream& out) const {
  std::map<std::string, std::string> meta;
  meta["kind"] = to_string(cfg_.kind);
  meta["layers"] = std::to_string(cfg_.layers);
  meta["hidden"] = std::to_string(cfg_.hidden);
  meta["msg_hidden"] = std::to_string(cfg_.msg_hidden);
  meta["attr_cols"] = std::to_string(cfg_.attr_cols);
  meta["msg_dim"] = std::to_string(cfg_.msg_dim);
  meta["num_nodes"] = std::to_string(cfg_.num_nodes);
  meta["seed"] = std::to_string(cfg_.seed);
  params_.save(out, meta);
}

namespace {

long long meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("model checkpoint: missing meta key " + key);
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw DataError("model checkpoint: bad value for meta key " + key);
  }
}

}  // namespace

PopularityModel PopularityModel::load(std::istream& in) {
  std::map<std::string, std::string> meta;
  ad::ParameterSet loaded = ad::ParameterSet::load(in, &meta);
  auto kind_it = meta.find("kind");
  if (kind_it == meta.end()) throw DataError("model checkpoint: missing meta key kind");
  ModelConfig cfg;
  try {
    cfg.kind = parse_model_kind(kind_it->second);
  } catch (const ConfigError& e) {
    throw DataError(std::string("model checkpoint: ") + e.what());
  }
  cfg.layers = static_cast<int>(meta_int(meta, "layers"));
  cfg.hidden = static_cast<int>(meta_int(meta, "hidden"));
  cfg.msg_hidden = static_cast<int>(meta_int(meta, "msg_hidden"));
  cfg.attr_cols = static_cast<int>(meta_int(meta, "attr_cols"));
  cfg.msg_dim = static_cast<int>(meta_int(meta, "msg_dim"));
  cfg.num_nodes = static_cast<int>(meta_int(meta, "num_nodes"));
  cfg.seed = static_cast<std::uint64_t>(meta_int(meta, "seed"));
  PopularityModel fresh(cfg);  // validates config and derives the tensor layout
  for (const ad::Tensor* expected : fresh.params_.all()) {
    if (!loaded.has(expected->name)) {
      throw DataError("model checkpoint: missing tensor " + expected->name);
    }
    const ad::Tensor& got = loaded.at(expected->name);
    if (got.value.rows() != expected->value.rows() ||
        got.value.cols() != expected->value.cols()) {
      throw DataError("model checkpoint: tensor " + expected->name + " is " +
                      std::to_string(got.value.rows()) + "x" +
                      std::to_string(got.value.cols()) + ", expected " +
                      std::to_string(expected->value.rows()) + "x" +
                      std::to_string(expected->value.cols()));
    }
  }
  if (loaded.size() != fresh.params_.size()) {
    throw DataError("model checkpoint: unexpected extra tensors");
  }
  fresh.params_ = std::move(loaded);
  return fresh;
}

void PopularityModel::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save(out);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

PopularityModel PopularityModel::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load(in);
}

}  // namespace spillcast
