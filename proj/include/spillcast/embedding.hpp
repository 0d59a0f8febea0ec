#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spillcast/graph.hpp"

namespace spillcast {

// Width of every message embedding and of the per-user mean message vector.
inline constexpr int kMessageDim = 128;

using EmbeddingMap = std::map<UserId, Eigen::VectorXd>;

struct DeepWalkParams {
  int dim = 64;
  int walks_per_node = 10;
  int walk_length = 40;
  int window = 5;
  int negatives = 5;
  int epochs = 3;
  double learning_rate = 0.02;
  std::uint64_t seed = 1;
};

// Truncated random walks over the undirected view of g followed by
// skip-gram training with negative sampling. Fully deterministic for a
// fixed (graph, params) pair. Nodes with no neighbors receive zero vectors
// and are reported through `isolated`.
EmbeddingMap deepwalk_embed(const SocialGraph& g, const DeepWalkParams& params = {},
                            std::vector<UserId>* isolated = nullptr);

// "user-id v1 v2 ... vd" per line.
void save_embeddings(std::ostream& out, const EmbeddingMap& emb);
EmbeddingMap load_embeddings(std::istream& in);
EmbeddingMap load_embeddings_file(const std::string& path);

class MessageEmbeddingProvider {
 public:
  virtual ~MessageEmbeddingProvider() = default;
  // Returns a vector of length kMessageDim.
  virtual Eigen::VectorXd embed(const Event& message) const = 0;
};

// Default provider: hashed bag of tokens over `bins` buckets followed by a
// fixed seeded linear projection to kMessageDim. Tokens are maximal runs of
// lowercase alphanumerics; bucket = fnv1a64(token) mod bins. The projection
// matrix is filled row-major with uniform draws from [-0.1, 0.1] using
// mt19937_64(seed). Empty or token-free text maps to the zero vector.
class HashedProjectionEmbedder : public MessageEmbeddingProvider {
 public:
  explicit HashedProjectionEmbedder(int bins = 4096, std::uint64_t seed = 0x746f6b656e736564ull);
  Eigen::VectorXd embed(const Event& message) const override;

  int bins() const { return static_cast<int>(projection_.rows()); }

 private:
  Eigen::MatrixXd projection_;  // bins x kMessageDim
};

// Provider backed by a precomputed "message-id v1 ... v128" file. Missing
// ids raise DataError.
class PrecomputedEmbedder : public MessageEmbeddingProvider {
 public:
  static PrecomputedEmbedder parse(std::istream& in);
  static PrecomputedEmbedder load_file(const std::string& path);

  Eigen::VectorXd embed(const Event& message) const override;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<MessageId, Eigen::VectorXd> table_;
};

std::uint64_t fnv1a64(const std::string& s);
std::vector<std::string> tokenize_lower(const std::string& text);

// Mean embedding of each graph user's posted messages (originals and
// retweets alike); users with no messages get the zero vector. Contains an
// entry for every graph node.
EmbeddingMap user_message_vectors(const std::vector<Event>& events, const SocialGraph& g,
                                  const MessageEmbeddingProvider& provider);

// Node attribute matrix for one observed cascade, rows in graph dense-index
// order: [activation s_v | mean message vector (kMessageDim) | node embedding].
// A node missing from either map raises DataError naming the node.
Eigen::MatrixXd assemble_attributes(const SocialGraph& g, const ObservedCascade& oc,
                                    const EmbeddingMap& node_embeddings,
                                    const EmbeddingMap& message_vectors);

}  // namespace spillcast
