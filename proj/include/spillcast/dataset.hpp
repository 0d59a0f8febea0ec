#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "spillcast/embedding.hpp"
#include "spillcast/graph.hpp"
#include "spillcast/models.hpp"
#include "spillcast/spillover.hpp"

namespace spillcast {

struct IngestOptions {
  int min_posts = 2;
  int min_cascade_size = 3;
  std::int64_t window = 10800;
};

// Raw edges + events -> filtered graph, tagged events, cascades. Stages:
// largest weak component, topic tagging, inactive-user pruning, event
// filtering, cascade construction.
struct IngestResult {
  SocialGraph graph;
  std::vector<Event> events;
  std::vector<Cascade> cascades;
  CascadeSummary summary;
  std::size_t nodes_loaded = 0;
  std::size_t nodes_after_wcc = 0;
  std::size_t nodes_after_prune = 0;
  std::size_t events_loaded = 0;
  std::size_t events_kept = 0;
};

IngestResult ingest(const SocialGraph& raw, std::vector<Event> events,
                    const TopicLexicon& lexicon, const IngestOptions& opt = {});

// One cascade prepared for the predictors.
struct EvalItem {
  MessageId message_id = 0;
  Eigen::VectorXd s0;          // observed-activation column over dense node indices
  Eigen::VectorXd final_mask;  // eventual adopters
  double n_obs = 0.0;
  double n_final = 0.0;
  Eigen::RowVectorXd dm;       // root message vector
  bool is_pm = false;          // root carries the preventive-measure topic
};

struct ModelDataset {
  int num_nodes = 0;
  int attr_cols = 0;  // 1 + base.cols()
  EdgeIndex conv_edges;     // with self loops
  EdgeIndex coupled_edges;  // without
  Eigen::MatrixXd base;     // per-node [message-mean || node-embedding]
  std::vector<EvalItem> items;

  const EdgeIndex& edges_for(ModelKind kind) const {
    return is_coupled(kind) ? coupled_edges : conv_edges;
  }
  ModelConfig model_config(ModelKind kind, int layers, int hidden, int msg_hidden,
                           std::uint64_t seed) const;
};

ModelDataset build_model_dataset(const SocialGraph& g, const std::vector<Cascade>& cascades,
                                 const std::vector<Event>& events,
                                 const EmbeddingMap& node_embeddings,
                                 const MessageEmbeddingProvider& provider,
                                 std::int64_t window = 10800);

}  // namespace spillcast
