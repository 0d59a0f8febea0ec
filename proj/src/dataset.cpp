#include "spillcast/dataset.hpp"

#include <algorithm>
#include <map>

#include "spillcast/errors.hpp"

namespace spillcast {

IngestResult ingest(const SocialGraph& raw, std::vector<Event> events,
                    const TopicLexicon& lexicon, const IngestOptions& opt) {
  if (opt.min_posts < 0) throw ConfigError("ingest: min_posts must be >= 0");
  if (opt.min_cascade_size < 1) throw ConfigError("ingest: min_cascade_size must be >= 1");
  if (opt.window < 0) throw ConfigError("ingest: window must be >= 0");

  IngestResult res;
  res.nodes_loaded = raw.node_count();
  res.events_loaded = events.size();

  SocialGraph wcc = largest_wcc(raw);
  res.nodes_after_wcc = wcc.node_count();

  tag_events(events, lexicon);
  SocialGraph pruned = prune_inactive(wcc, events, opt.min_posts);
  res.nodes_after_prune = pruned.node_count();

  std::size_t dropped_events = 0;
  res.events = filter_events_to_graph(events, pruned, &dropped_events);
  res.events_kept = res.events.size();

  res.cascades = build_cascades(res.events, pruned,
                                static_cast<std::size_t>(opt.min_cascade_size), &res.summary);
  res.graph = std::move(pruned);
  return res;
}

ModelConfig ModelDataset::model_config(ModelKind kind, int layers, int hidden,
                                       int msg_hidden, std::uint64_t seed) const {
  ModelConfig mc;
  mc.kind = kind;
  mc.layers = layers;
  mc.hidden = hidden;
  mc.msg_hidden = msg_hidden;
  mc.attr_cols = attr_cols;
  mc.msg_dim = kMessageDim;
  mc.num_nodes = num_nodes;
  mc.seed = seed;
  return mc;
}

ModelDataset build_model_dataset(const SocialGraph& g, const std::vector<Cascade>& cascades,
                                 const std::vector<Event>& events,
                                 const EmbeddingMap& node_embeddings,
                                 const MessageEmbeddingProvider& provider,
                                 std::int64_t window) {
  if (g.empty()) throw DataError("model dataset: empty graph");
  if (window < 0) throw ConfigError("model dataset: window must be >= 0");

  ModelDataset ds;
  ds.num_nodes = static_cast<int>(g.node_count());
  ds.conv_edges = EdgeIndex::from_graph(g, true);
  ds.coupled_edges = EdgeIndex::from_graph(g, false);

  EmbeddingMap msg_vectors = user_message_vectors(events, g, provider);
  Eigen::Index node_dim = -1;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    UserId u = g.node_at(i);
    auto ne = node_embeddings.find(u);
    if (ne == node_embeddings.end()) {
      throw DataError("model dataset: no node embedding for user " + std::to_string(u));
    }
    if (node_dim < 0) {
      node_dim = ne->second.size();
      ds.base.resize(static_cast<Eigen::Index>(g.node_count()), kMessageDim + node_dim);
    } else if (ne->second.size() != node_dim) {
      throw DataError("model dataset: node embedding for user " + std::to_string(u) +
                      " has dimension " + std::to_string(ne->second.size()));
    }
    Eigen::Index r = static_cast<Eigen::Index>(i);
    ds.base.block(r, 0, 1, kMessageDim) = msg_vectors.at(u).transpose();
    ds.base.block(r, kMessageDim, 1, node_dim) = ne->second.transpose();
  }
  ds.attr_cols = 1 + static_cast<int>(ds.base.cols());

  std::map<MessageId, const Event*> roots;
  for (const Event& ev : events) {
    if (ev.is_original()) roots.emplace(ev.message_id, &ev);
  }

  ds.items.reserve(cascades.size());
  for (const Cascade& c : cascades) {
    auto rit = roots.find(c.message_id);
    if (rit == roots.end()) {
      throw DataError("model dataset: no root event for cascade " +
                      std::to_string(c.message_id));
    }
    const Event& root = *rit->second;
    EvalItem item;
    item.message_id = c.message_id;
    item.s0 = Eigen::VectorXd::Zero(ds.num_nodes);
    item.final_mask = Eigen::VectorXd::Zero(ds.num_nodes);
    ObservedCascade oc = observe(c, window);
    for (const Adoption& a : oc.observed) item.s0(g.index_of(a.user)) = 1.0;
    for (const Adoption& a : c.adopters) item.final_mask(g.index_of(a.user)) = 1.0;
    item.n_obs = static_cast<double>(oc.observed.size());
    item.n_final = static_cast<double>(c.adopters.size());
    Eigen::VectorXd dm = provider.embed(root);
    if (dm.size() != kMessageDim) {
      throw DataError("model dataset: message embedding for " +
                      std::to_string(root.message_id) + " has dimension " +
                      std::to_string(dm.size()));
    }
    item.dm = dm.transpose();
    item.is_pm = std::binary_search(root.topics.begin(), root.topics.end(),
                                    std::string(kPreventiveTopic));
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace spillcast
