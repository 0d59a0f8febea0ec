#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spillcast/autodiff.hpp"
#include "spillcast/embedding.hpp"
#include "spillcast/graph.hpp"
#include "spillcast/tensor.hpp"

namespace spillcast {

enum class ModelKind { gcn, gat, cgnn, se_gcn, se_gat, se_cgnn };

ModelKind parse_model_kind(const std::string& s);  // "gcn" ... "se-cgnn"
std::string to_string(ModelKind k);
bool is_se(ModelKind k);
bool is_coupled(ModelKind k);
std::vector<ModelKind> all_model_kinds();

// Aggregation edges over dense node indices: src is the feature source
// (someone the dst node follows), dst the receiving node. Sorted by
// (dst, src). Self loops are appended for the convolutional models only;
// the coupled state update excludes them.
struct EdgeIndex {
  int num_nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;

  static EdgeIndex from_graph(const SocialGraph& g, bool self_loops);
};

EdgeIndex build_edge_index(const SocialGraph& g, ModelKind kind);

// Single graph ops, exposed so tests can drive them with hand-picked
// weights. All take projected inputs; shapes are validated by the tape ops.

// leaky_relu(mean of z over incoming edges). Nodes with no edge get zero.
ad::Var gcn_aggregate(ad::Var z, const EdgeIndex& ei);

// Attention weights from gamma^T [z_u || z_v], softmax per dst, then
// leaky_relu of the weighted sum of z_u.
ad::Var gat_aggregate(ad::Var z, ad::Var gamma, const EdgeIndex& ei);

// Pairwise influence gates, one scalar per edge: beta^T [W r_u || W r_v].
ad::Var influ_gate(ad::Var r, ad::Var W, ad::Var beta, const EdgeIndex& ei);

// a_v = sum over incoming edges of gate_e * s_u, plus the per-node bias p.
ad::Var coupled_activation(ad::Var gates, ad::Var s, ad::Var p, const EdgeIndex& ei);

// r'_v = leaky_relu(W_r [r_v || sum_u eta_uv s_u r_u]) with GAT-style eta
// from att_W / att_gamma over incoming edges.
ad::Var influence_update(ad::Var r, ad::Var s, ad::Var att_W, ad::Var att_gamma,
                         ad::Var W_r, const EdgeIndex& ei);

struct ModelConfig {
  ModelKind kind = ModelKind::gcn;
  int layers = 2;                // propagation depth k
  int hidden = 32;
  int msg_hidden = 16;           // width of the projected root-message signal
  int attr_cols = 1 + kMessageDim + 64;  // activation bit + message mean + node embedding
  int msg_dim = kMessageDim;
  int num_nodes = 0;
  std::uint64_t seed = 1;
};

// Popularity predictor over a fixed graph. Forward pass consumes the shared
// per-node base attributes (everything except the activation column), the
// observed-activation column for one cascade, and the root message vector.
class PopularityModel {
 public:
  explicit PopularityModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // The base attribute projection does not depend on the cascade, so a batch
  // shares one tape node for it across all items on the tape.
  struct Batch {
    ad::Tape* tape = nullptr;
    ad::Var base_proj;  // num_nodes x hidden
  };
  Batch begin_batch(ad::Tape& tape, const Eigen::MatrixXd& base);

  struct Forward {
    ad::Var popularity;  // 1x1
    ad::Var statuses;    // num_nodes x 1, observed entries forced to 1
  };
  Forward forward(Batch& batch, const EdgeIndex& ei, const Eigen::VectorXd& s0,
                  const Eigen::RowVectorXd& dm);

  // Non-differentiating convenience for evaluation paths.
  struct Prediction {
    double popularity = 0.0;
    Eigen::VectorXd statuses;
  };
  Prediction predict(const EdgeIndex& ei, const Eigen::MatrixXd& base,
                     const Eigen::VectorXd& s0, const Eigen::RowVectorXd& dm);

  void save(std::ostream& out) const;
  static PopularityModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static PopularityModel load_file(const std::string& path);

 private:
  PopularityModel() = default;
  void validate_config() const;
  void init_params();

  ModelConfig cfg_;
  ad::ParameterSet params_;
};

}  // namespace spillcast
