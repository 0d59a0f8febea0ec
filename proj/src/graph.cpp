#include "spillcast/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spillcast/errors.hpp"

namespace spillcast {

using nlohmann::json;

SocialGraph SocialGraph::from_edges(const std::vector<std::pair<UserId, UserId>>& edges,
                                    const std::vector<UserId>& extra_nodes,
                                    EdgeLoadStats* stats) {
  SocialGraph g;
  std::set<UserId> ids(extra_nodes.begin(), extra_nodes.end());
  std::size_t self_loops = 0;
  for (const auto& [u, f] : edges) {
    // a dropped self-loop still registers its endpoint as a node
    ids.insert(u);
    ids.insert(f);
    if (u == f) ++self_loops;
  }
  g.nodes_.assign(ids.begin(), ids.end());
  g.index_.reserve(g.nodes_.size());
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    g.index_.emplace(g.nodes_[i], static_cast<int>(i));
  }
  g.out_.resize(g.nodes_.size());
  g.in_.resize(g.nodes_.size());

  std::set<std::pair<UserId, UserId>> seen;
  std::size_t duplicates = 0;
  for (const auto& [u, f] : edges) {
    if (u == f) continue;
    if (!seen.insert({u, f}).second) {
      ++duplicates;
      continue;
    }
    g.out_[g.index_.at(u)].push_back(f);
    g.in_[g.index_.at(f)].push_back(u);
    ++g.edges_;
  }
  for (auto& v : g.out_) std::sort(v.begin(), v.end());
  for (auto& v : g.in_) std::sort(v.begin(), v.end());
  if (stats) {
    stats->self_loops += self_loops;
    stats->duplicates += duplicates;
  }
  return g;
}

int SocialGraph::index_of(UserId u) const {
  auto it = index_.find(u);
  return it == index_.end() ? -1 : it->second;
}

int SocialGraph::checked_index(UserId u) const {
  auto it = index_.find(u);
  if (it == index_.end()) {
    throw DataError("unknown user id " + std::to_string(u));
  }
  return it->second;
}

bool SocialGraph::has_edge(UserId follower, UserId followee) const {
  auto it = index_.find(follower);
  if (it == index_.end()) return false;
  const auto& v = out_[it->second];
  return std::binary_search(v.begin(), v.end(), followee);
}

const std::vector<UserId>& SocialGraph::followees(UserId u) const {
  return out_[checked_index(u)];
}

const std::vector<UserId>& SocialGraph::followers(UserId u) const {
  return in_[checked_index(u)];
}

SocialGraph SocialGraph::induced(const std::vector<UserId>& keep) const {
  std::set<UserId> wanted;
  for (UserId u : keep) {
    if (has_node(u)) wanted.insert(u);
  }
  std::vector<std::pair<UserId, UserId>> edges;
  for (UserId u : wanted) {
    for (UserId f : followees(u)) {
      if (wanted.count(f)) edges.emplace_back(u, f);
    }
  }
  return from_edges(edges, {wanted.begin(), wanted.end()});
}

std::vector<std::pair<UserId, UserId>> SocialGraph::edges() const {
  std::vector<std::pair<UserId, UserId>> out;
  out.reserve(edges_);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (UserId f : out_[i]) out.emplace_back(nodes_[i], f);
  }
  return out;
}

SocialGraph load_graph(std::istream& in, EdgeLoadStats* stats) {
  std::vector<std::pair<UserId, UserId>> edges;
  std::string line;
  std::size_t line_no = 0;
  std::size_t lines_used = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra)) {
      throw DataError("edge file line " + std::to_string(line_no) +
                      ": expected two user ids, got '" + line + "'");
    }
    UserId u, f;
    try {
      u = std::stoull(a);
      f = std::stoull(b);
    } catch (const std::exception&) {
      throw DataError("edge file line " + std::to_string(line_no) +
                      ": non-numeric user id in '" + line + "'");
    }
    edges.emplace_back(u, f);
    ++lines_used;
  }
  if (stats) stats->lines = lines_used;
  return SocialGraph::from_edges(edges, {}, stats);
}

SocialGraph load_graph_file(const std::string& path, EdgeLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file: " + path);
  return load_graph(in, stats);
}

void save_graph(std::ostream& out, const SocialGraph& g) {
  for (const auto& [u, f] : g.edges()) {
    out << u << '\t' << f << '\n';
  }
}

namespace {

// Union-find over dense indices.
class Dsu {
 public:
  explicit Dsu(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

SocialGraph largest_wcc(const SocialGraph& g) {
  if (g.empty()) throw DataError("largest_wcc: graph has no nodes");
  Dsu dsu(g.node_count());
  for (const auto& [u, f] : g.edges()) {
    dsu.unite(g.index_of(u), g.index_of(f));
  }
  // Components keyed by root; nodes ascend, so the first member has the
  // smallest id. Track the largest component, ties toward smaller min id.
  std::map<int, std::vector<UserId>> comps;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    comps[dsu.find(static_cast<int>(i))].push_back(g.node_at(i));
  }
  const std::vector<UserId>* best = nullptr;
  for (const auto& [root, members] : comps) {
    if (!best || members.size() > best->size() ||
        (members.size() == best->size() && members.front() < best->front())) {
      best = &members;
    }
  }
  return g.induced(*best);
}

std::vector<Event> load_events(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("event file line " + std::to_string(line_no) + ": " + e.what());
    }
    Event ev;
    try {
      ev.message_id = j.at("message_id").get<MessageId>();
      ev.root_id = j.at("root_id").get<MessageId>();
      ev.user_id = j.at("user_id").get<UserId>();
      ev.timestamp = j.at("timestamp").get<std::int64_t>();
      if (j.contains("topics")) {
        if (j["topics"].is_string()) {
          std::string all = j["topics"].get<std::string>();
          std::size_t pos = 0;
          while (pos <= all.size()) {
            std::size_t comma = all.find(',', pos);
            std::string t = all.substr(pos, comma == std::string::npos ? comma : comma - pos);
            std::size_t b = t.find_first_not_of(" \t");
            std::size_t e = t.find_last_not_of(" \t");
            if (b != std::string::npos) ev.topics.push_back(t.substr(b, e - b + 1));
            if (comma == std::string::npos) break;
            pos = comma + 1;
          }
        } else if (j["topics"].is_array()) {
          for (const auto& t : j["topics"]) ev.topics.push_back(t.get<std::string>());
        }
      }
      if (j.contains("text")) ev.text = j["text"].get<std::string>();
    } catch (const json::exception& e) {
      throw DataError("event file line " + std::to_string(line_no) + ": " + e.what());
    }
    std::sort(ev.topics.begin(), ev.topics.end());
    ev.topics.erase(std::unique(ev.topics.begin(), ev.topics.end()), ev.topics.end());
    if (ev.timestamp < 0) {
      throw DataError("event file line " + std::to_string(line_no) + ": negative timestamp");
    }
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<Event> load_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file: " + path);
  return load_events(in);
}

void save_events(std::ostream& out, const std::vector<Event>& events) {
  for (const Event& ev : events) {
    json j;
    j["message_id"] = ev.message_id;
    j["root_id"] = ev.root_id;
    j["user_id"] = ev.user_id;
    j["timestamp"] = ev.timestamp;
    if (!ev.topics.empty()) {
      std::string joined;
      for (std::size_t i = 0; i < ev.topics.size(); ++i) {
        if (i) joined += ',';
        joined += ev.topics[i];
      }
      j["topics"] = joined;
    }
    if (!ev.text.empty()) j["text"] = ev.text;
    out << j.dump() << '\n';
  }
}

std::vector<Event> filter_events_to_graph(const std::vector<Event>& events,
                                          const SocialGraph& g, std::size_t* dropped) {
  std::vector<Event> kept;
  kept.reserve(events.size());
  std::size_t removed = 0;
  for (const Event& ev : events) {
    if (g.has_node(ev.user_id)) {
      kept.push_back(ev);
    } else {
      ++removed;
    }
  }
  if (dropped) *dropped = removed;
  return kept;
}

SocialGraph prune_inactive(const SocialGraph& g, const std::vector<Event>& events,
                           int min_posts) {
  if (g.empty()) throw DataError("prune_inactive: graph has no nodes");
  {
    Dsu check(g.node_count());
    std::size_t comps = g.node_count();
    for (const auto& [u, f] : g.edges()) {
      if (check.unite(g.index_of(u), g.index_of(f))) --comps;
    }
    if (comps > 1) throw DataError("prune_inactive: graph is not weakly connected");
  }

  std::unordered_map<UserId, int> activity;
  for (const Event& ev : events) activity[ev.user_id] += 1;

  std::vector<UserId> present;
  std::vector<UserId> inactive;
  for (UserId u : g.nodes()) {
    auto it = activity.find(u);
    int posts = it == activity.end() ? 0 : it->second;
    if (posts >= min_posts) {
      present.push_back(u);
    } else {
      inactive.push_back(u);
    }
  }
  if (present.empty()) return SocialGraph{};

  // Greedy reconnect: walk removed users in ascending id order, adding each
  // until everything present sits in one weak component.
  Dsu dsu(g.node_count());
  std::vector<char> in_set(g.node_count(), 0);
  std::size_t comps = 0;
  auto add_node = [&](UserId u) {
    int idx = g.index_of(u);
    in_set[idx] = 1;
    ++comps;
    for (UserId f : g.followees(u)) {
      int fi = g.index_of(f);
      if (in_set[fi] && dsu.unite(idx, fi)) --comps;
    }
    for (UserId f : g.followers(u)) {
      int fi = g.index_of(f);
      if (in_set[fi] && dsu.unite(idx, fi)) --comps;
    }
  };
  for (UserId u : present) add_node(u);
  for (std::size_t i = 0; comps > 1 && i < inactive.size(); ++i) {
    add_node(inactive[i]);
    present.push_back(inactive[i]);
  }
  return g.induced(present);
}

std::vector<Cascade> build_cascades(const std::vector<Event>& events, const SocialGraph& g,
                                    std::size_t min_size, CascadeSummary* summary) {
  // Canonical processing order makes the result independent of the order
  // events were supplied in.
  std::vector<const Event*> ordered;
  ordered.reserve(events.size());
  for (const Event& ev : events) ordered.push_back(&ev);
  std::sort(ordered.begin(), ordered.end(), [](const Event* a, const Event* b) {
    if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
    if (a->user_id != b->user_id) return a->user_id < b->user_id;
    return a->message_id < b->message_id;
  });

  CascadeSummary sum;
  std::unordered_map<MessageId, const Event*> roots;
  std::set<MessageId> seen_ids;
  for (const Event* ev : ordered) {
    if (!seen_ids.insert(ev->message_id).second) {
      throw DataError("duplicate message id " + std::to_string(ev->message_id));
    }
    if (ev->is_original()) roots.emplace(ev->message_id, ev);
  }
  sum.total_built = roots.size();

  struct Partial {
    const Event* root;
    std::vector<Adoption> adopters;
    std::set<UserId> users;
  };
  std::map<MessageId, Partial> partial;
  for (const auto& [id, root] : roots) {
    Partial p;
    p.root = root;
    if (g.has_node(root->user_id)) {
      p.adopters.push_back({root->user_id, root->timestamp});
      p.users.insert(root->user_id);
    }
    partial.emplace(id, std::move(p));
  }

  for (const Event* ev : ordered) {
    if (ev->is_original()) continue;
    auto it = partial.find(ev->root_id);
    if (it == partial.end()) {
      ++sum.skipped_orphans;
      continue;
    }
    if (ev->timestamp < it->second.root->timestamp) {
      ++sum.skewed_retweets;
      continue;
    }
    if (!g.has_node(ev->user_id)) continue;
    if (!it->second.users.insert(ev->user_id).second) {
      ++sum.duplicate_adoptions;
      continue;
    }
    it->second.adopters.push_back({ev->user_id, ev->timestamp});
  }

  std::vector<Cascade> out;
  std::size_t retained_adopters = 0;
  for (auto& [id, p] : partial) {
    if (p.adopters.size() < min_size) {
      ++sum.dropped;
      continue;
    }
    Cascade c;
    c.message_id = id;
    c.root_time = p.root->timestamp;
    c.adopters = std::move(p.adopters);
    retained_adopters += c.adopters.size();
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const Cascade& a, const Cascade& b) {
    if (a.root_time != b.root_time) return a.root_time < b.root_time;
    return a.message_id < b.message_id;
  });
  sum.retained = out.size();
  sum.mean_retained_size =
      out.empty() ? 0.0 : static_cast<double>(retained_adopters) / static_cast<double>(out.size());
  if (summary) *summary = sum;
  return out;
}

ObservedCascade observe(const Cascade& c, std::int64_t window) {
  if (window < 0) throw ConfigError("observe: negative window");
  ObservedCascade oc;
  oc.message_id = c.message_id;
  oc.root_time = c.root_time;
  oc.window = window;
  for (const Adoption& a : c.adopters) {
    if (a.time - c.root_time <= window) oc.observed.push_back(a);
  }
  return oc;
}

void save_cascades(std::ostream& out, const std::vector<Cascade>& cascades) {
  for (const Cascade& c : cascades) {
    json j;
    j["message_id"] = c.message_id;
    j["root_time"] = c.root_time;
    json ad = json::array();
    for (const Adoption& a : c.adopters) ad.push_back({a.user, a.time});
    j["adopters"] = ad;
    j["final_size"] = c.final_size();
    out << j.dump() << '\n';
  }
}

std::vector<Cascade> load_cascades(std::istream& in) {
  std::vector<Cascade> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      Cascade c;
      c.message_id = j.at("message_id").get<MessageId>();
      c.root_time = j.at("root_time").get<std::int64_t>();
      for (const auto& a : j.at("adopters")) {
        c.adopters.push_back({a.at(0).get<UserId>(), a.at(1).get<std::int64_t>()});
      }
      if (j.contains("final_size") &&
          j["final_size"].get<std::size_t>() != c.adopters.size()) {
        throw DataError("cascade file line " + std::to_string(line_no) +
                        ": final_size does not match adopter count");
      }
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw DataError("cascade file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace spillcast
