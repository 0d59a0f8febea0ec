#include "spillcast/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "spillcast/errors.hpp"
#include "spillcast/rng.hpp"

namespace spillcast {

namespace {

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EmbeddingMap deepwalk_embed(const SocialGraph& g, const DeepWalkParams& p,
                            std::vector<UserId>* isolated) {
  if (p.dim <= 0 || p.walks_per_node <= 0 || p.walk_length <= 0 || p.window <= 0 ||
      p.negatives < 0 || p.epochs <= 0 || p.learning_rate <= 0.0) {
    throw ConfigError("deepwalk: non-positive hyperparameter");
  }
  const std::size_t n = g.node_count();
  EmbeddingMap result;
  if (n == 0) return result;

  // Undirected adjacency over dense indices.
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    UserId u = g.node_at(i);
    std::set<UserId> nb(g.followees(u).begin(), g.followees(u).end());
    nb.insert(g.followers(u).begin(), g.followers(u).end());
    nb.erase(u);
    for (UserId v : nb) adj[i].push_back(g.index_of(v));
  }

  std::vector<char> lonely(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (adj[i].empty()) {
      lonely[i] = 1;
      if (isolated) isolated->push_back(g.node_at(i));
    }
  }

  // Walk corpus, generated per (node, walk) from independent substreams.
  std::vector<std::vector<int>> walks;
  walks.reserve(n * static_cast<std::size_t>(p.walks_per_node));
  for (std::size_t i = 0; i < n; ++i) {
    if (lonely[i]) continue;
    for (int w = 0; w < p.walks_per_node; ++w) {
      std::mt19937_64 rng(mix64(p.seed, g.node_at(i), static_cast<std::uint64_t>(w)));
      std::vector<int> walk;
      walk.reserve(p.walk_length);
      int cur = static_cast<int>(i);
      walk.push_back(cur);
      for (int s = 1; s < p.walk_length; ++s) {
        const auto& nb = adj[static_cast<std::size_t>(cur)];
        cur = nb[uniform_index(rng, nb.size())];
        walk.push_back(cur);
      }
      walks.push_back(std::move(walk));
    }
  }

  // Negative-sampling table with unigram^0.75 weighting over walk counts.
  std::vector<double> freq(n, 0.0);
  for (const auto& w : walks) {
    for (int v : w) freq[static_cast<std::size_t>(v)] += 1.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    freq[i] = std::pow(freq[i], 0.75);
    total += freq[i];
  }
  std::vector<int> neg_table;
  if (total > 0.0) {
    const std::size_t table_size = std::max<std::size_t>(n * 16, 1 << 16);
    neg_table.reserve(table_size);
    std::size_t node = 0;
    double cum = freq[0] / total;
    for (std::size_t i = 0; i < table_size; ++i) {
      double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(table_size);
      while (frac > cum && node + 1 < n) {
        ++node;
        cum += freq[node] / total;
      }
      neg_table.push_back(static_cast<int>(node));
    }
  }

  Eigen::MatrixXd in_vec(n, p.dim);
  Eigen::MatrixXd out_vec = Eigen::MatrixXd::Zero(n, p.dim);
  {
    std::mt19937_64 init_rng(mix64(p.seed, 0x696e6974ull));
    double scale = 0.5 / p.dim;
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < p.dim; ++d) {
        in_vec(static_cast<Eigen::Index>(i), d) = uniform(init_rng, -scale, scale);
      }
    }
  }

  std::mt19937_64 train_rng(mix64(p.seed, 0x747261696eull));
  Eigen::VectorXd accum(p.dim);
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    for (const auto& walk : walks) {
      for (std::size_t center = 0; center < walk.size(); ++center) {
        int w = walk[center];
        std::size_t lo = center >= static_cast<std::size_t>(p.window)
                             ? center - static_cast<std::size_t>(p.window)
                             : 0;
        std::size_t hi = std::min(walk.size() - 1, center + static_cast<std::size_t>(p.window));
        for (std::size_t pos = lo; pos <= hi; ++pos) {
          if (pos == center) continue;
          int c = walk[pos];
          accum.setZero();
          for (int k = 0; k <= p.negatives; ++k) {
            int target;
            double label;
            if (k == 0) {
              target = c;
              label = 1.0;
            } else {
              target = neg_table[uniform_index(train_rng, neg_table.size())];
              if (target == c) continue;
              label = 0.0;
            }
            double score =
                sigmoid_stable(in_vec.row(w).dot(out_vec.row(target)));
            double gscale = (label - score) * p.learning_rate;
            accum += gscale * out_vec.row(target).transpose();
            out_vec.row(target) += gscale * in_vec.row(w);
          }
          in_vec.row(w) += accum.transpose();
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p.dim);
    if (!lonely[i]) v = in_vec.row(static_cast<Eigen::Index>(i)).transpose();
    result.emplace(g.node_at(i), std::move(v));
  }
  return result;
}

void save_embeddings(std::ostream& out, const EmbeddingMap& emb) {
  out.precision(17);
  for (const auto& [id, vec] : emb) {
    out << id;
    for (Eigen::Index i = 0; i < vec.size(); ++i) out << ' ' << vec(i);
    out << '\n';
  }
}

EmbeddingMap load_embeddings(std::istream& in) {
  EmbeddingMap emb;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    UserId id;
    if (!(ls >> id)) {
      throw DataError("embedding file line " + std::to_string(line_no) + ": bad id");
    }
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) {
      throw DataError("embedding file line " + std::to_string(line_no) + ": no values");
    }
    if (dim < 0) {
      dim = static_cast<Eigen::Index>(vals.size());
    } else if (dim != static_cast<Eigen::Index>(vals.size())) {
      throw DataError("embedding file line " + std::to_string(line_no) +
                      ": inconsistent dimension");
    }
    Eigen::VectorXd vec(dim);
    for (Eigen::Index i = 0; i < dim; ++i) vec(i) = vals[static_cast<std::size_t>(i)];
    if (!emb.emplace(id, std::move(vec)).second) {
      throw DataError("embedding file line " + std::to_string(line_no) + ": duplicate id");
    }
  }
  return emb;
}

EmbeddingMap load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);
  return load_embeddings(in);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> tokenize_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    unsigned char low = static_cast<unsigned char>(std::tolower(c));
    if (std::isalnum(low)) {
      cur.push_back(static_cast<char>(low));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

HashedProjectionEmbedder::HashedProjectionEmbedder(int bins, std::uint64_t seed) {
  if (bins <= 0) throw ConfigError("hashed embedder: bins must be positive");
  projection_.resize(bins, kMessageDim);
  std::mt19937_64 rng(seed);
  for (int b = 0; b < bins; ++b) {
    for (int d = 0; d < kMessageDim; ++d) {
      projection_(b, d) = uniform(rng, -0.1, 0.1);
    }
  }
}

Eigen::VectorXd HashedProjectionEmbedder::embed(const Event& message) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kMessageDim);
  for (const std::string& tok : tokenize_lower(message.text)) {
    auto b = static_cast<Eigen::Index>(fnv1a64(tok) % static_cast<std::uint64_t>(bins()));
    out += projection_.row(b).transpose();
  }
  return out;
}

PrecomputedEmbedder PrecomputedEmbedder::parse(std::istream& in) {
  PrecomputedEmbedder emb;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    MessageId id;
    if (!(ls >> id)) {
      throw DataError("message embedding line " + std::to_string(line_no) + ": bad id");
    }
    Eigen::VectorXd vec(kMessageDim);
    for (int i = 0; i < kMessageDim; ++i) {
      if (!(ls >> vec(i))) {
        throw DataError("message embedding line " + std::to_string(line_no) + ": expected " +
                        std::to_string(kMessageDim) + " values");
      }
    }
    emb.table_[id] = std::move(vec);
  }
  return emb;
}

PrecomputedEmbedder PrecomputedEmbedder::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open message embedding file: " + path);
  return parse(in);
}

Eigen::VectorXd PrecomputedEmbedder::embed(const Event& message) const {
  auto it = table_.find(message.message_id);
  if (it == table_.end()) {
    throw DataError("no embedding for message " + std::to_string(message.message_id));
  }
  return it->second;
}

EmbeddingMap user_message_vectors(const std::vector<Event>& events, const SocialGraph& g,
                                  const MessageEmbeddingProvider& provider) {
  std::map<UserId, std::pair<Eigen::VectorXd, std::size_t>> sums;
  for (const Event& ev : events) {
    if (!g.has_node(ev.user_id)) continue;
    Eigen::VectorXd e = provider.embed(ev);
    if (e.size() != kMessageDim) {
      throw DataError("message embedding for " + std::to_string(ev.message_id) +
                      " has dimension " + std::to_string(e.size()));
    }
    auto it = sums.find(ev.user_id);
    if (it == sums.end()) {
      sums.emplace(ev.user_id, std::make_pair(std::move(e), std::size_t{1}));
    } else {
      it->second.first += e;
      it->second.second += 1;
    }
  }
  EmbeddingMap out;
  for (UserId u : g.nodes()) {
    auto it = sums.find(u);
    if (it == sums.end()) {
      out.emplace(u, Eigen::VectorXd::Zero(kMessageDim));
    } else {
      out.emplace(u, it->second.first / static_cast<double>(it->second.second));
    }
  }
  return out;
}

Eigen::MatrixXd assemble_attributes(const SocialGraph& g, const ObservedCascade& oc,
                                    const EmbeddingMap& node_embeddings,
                                    const EmbeddingMap& message_vectors) {
  if (g.empty()) throw DataError("assemble_attributes: empty graph");
  Eigen::Index node_dim = -1;
  Eigen::MatrixXd out;
  std::set<UserId> active;
  for (const Adoption& a : oc.observed) active.insert(a.user);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    UserId u = g.node_at(i);
    auto ne = node_embeddings.find(u);
    if (ne == node_embeddings.end()) {
      throw DataError("assemble_attributes: no node embedding for user " + std::to_string(u));
    }
    auto mv = message_vectors.find(u);
    if (mv == message_vectors.end()) {
      throw DataError("assemble_attributes: no message vector for user " + std::to_string(u));
    }
    if (mv->second.size() != kMessageDim) {
      throw DataError("assemble_attributes: message vector for user " + std::to_string(u) +
                      " has dimension " + std::to_string(mv->second.size()));
    }
    if (node_dim < 0) {
      node_dim = ne->second.size();
      out.resize(static_cast<Eigen::Index>(g.node_count()), 1 + kMessageDim + node_dim);
    }
    if (ne->second.size() != node_dim) {
      throw DataError("assemble_attributes: node embedding for user " + std::to_string(u) +
                      " has dimension " + std::to_string(ne->second.size()));
    }
    Eigen::Index r = static_cast<Eigen::Index>(i);
    out(r, 0) = active.count(u) ? 1.0 : 0.0;
    out.block(r, 1, 1, kMessageDim) = mv->second.transpose();
    out.block(r, 1 + kMessageDim, 1, node_dim) = ne->second.transpose();
  }
  return out;
}

}  // namespace spillcast
