#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace spillcast {

using UserId = std::uint64_t;
using MessageId = std::uint64_t;

struct EdgeLoadStats {
  std::size_t lines = 0;
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

// Directed follower graph. An edge u -> f means u follows f: u perceives
// what f posts, and information diffuses from f to u. Immutable once built;
// neighbor lists are sorted by id so queries never depend on construction
// order.
class SocialGraph {
 public:
  SocialGraph() = default;

  static SocialGraph from_edges(const std::vector<std::pair<UserId, UserId>>& edges,
                                const std::vector<UserId>& extra_nodes = {},
                                EdgeLoadStats* stats = nullptr);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_; }
  bool empty() const { return nodes_.empty(); }

  bool has_node(UserId u) const { return index_.count(u) > 0; }
  bool has_edge(UserId follower, UserId followee) const;

  // Ascending user ids; dense index i corresponds to nodes()[i].
  const std::vector<UserId>& nodes() const { return nodes_; }
  int index_of(UserId u) const;
  UserId node_at(std::size_t idx) const { return nodes_.at(idx); }

  const std::vector<UserId>& followees(UserId u) const;  // out-neighbors
  const std::vector<UserId>& followers(UserId u) const;  // in-neighbors

  std::size_t out_degree(UserId u) const { return followees(u).size(); }
  std::size_t in_degree(UserId u) const { return followers(u).size(); }

  SocialGraph induced(const std::vector<UserId>& keep) const;

  std::vector<std::pair<UserId, UserId>> edges() const;

 private:
  int checked_index(UserId u) const;

  std::vector<UserId> nodes_;
  std::unordered_map<UserId, int> index_;
  std::vector<std::vector<UserId>> out_;
  std::vector<std::vector<UserId>> in_;
  std::size_t edges_ = 0;
};

// Tab-separated "follower followee" pairs, one per line. Blank lines and
// lines starting with '#' are skipped; self-loops are dropped and counted;
// duplicate pairs are merged. Malformed lines raise DataError with the line
// number.
SocialGraph load_graph(std::istream& in, EdgeLoadStats* stats = nullptr);
SocialGraph load_graph_file(const std::string& path, EdgeLoadStats* stats = nullptr);
void save_graph(std::ostream& out, const SocialGraph& g);

// Largest weakly connected component; ties broken toward the component
// containing the smallest node id. Empty input raises DataError.
SocialGraph largest_wcc(const SocialGraph& g);

// One post or retweet. An original message has root_id == message_id; a
// retweet points at the original via root_id.
struct Event {
  MessageId message_id = 0;
  MessageId root_id = 0;
  UserId user_id = 0;
  std::int64_t timestamp = 0;
  std::vector<std::string> topics;  // sorted, unique
  std::string text;

  bool is_original() const { return message_id == root_id; }
};

// One JSON object per line with fields message_id, root_id, user_id,
// timestamp, optional topics (comma-separated string) and text.
std::vector<Event> load_events(std::istream& in);
std::vector<Event> load_events_file(const std::string& path);
void save_events(std::ostream& out, const std::vector<Event>& events);

std::vector<Event> filter_events_to_graph(const std::vector<Event>& events,
                                          const SocialGraph& g,
                                          std::size_t* dropped = nullptr);

// Removes users with fewer than min_posts events, then re-adds removed users
// in ascending id order until the remaining graph is one weak component.
// Active users are never removed. Requires g weakly connected.
SocialGraph prune_inactive(const SocialGraph& g, const std::vector<Event>& events,
                           int min_posts = 2);

struct Adoption {
  UserId user = 0;
  std::int64_t time = 0;
};

// Adoption sequence of one message: originator first, then retweeters in
// timestamp order, each user at most once.
struct Cascade {
  MessageId message_id = 0;
  std::int64_t root_time = 0;
  std::vector<Adoption> adopters;

  std::size_t final_size() const { return adopters.size(); }
};

struct CascadeSummary {
  std::size_t total_built = 0;          // original messages seen
  std::size_t retained = 0;             // cascades at or above min_size
  std::size_t dropped = 0;              // cascades below min_size
  std::size_t skipped_orphans = 0;      // retweets whose root message is absent
  std::size_t duplicate_adoptions = 0;  // repeat adoptions, first timestamp kept
  std::size_t skewed_retweets = 0;      // retweets timestamped before their root
  double mean_retained_size = 0.0;
};

// Groups events by root message and keeps cascades with at least min_size
// adopters after restricting to users present in g. Output is independent of
// the input event order.
std::vector<Cascade> build_cascades(const std::vector<Event>& events, const SocialGraph& g,
                                    std::size_t min_size = 3,
                                    CascadeSummary* summary = nullptr);

// Prefix of a cascade visible within `window` seconds of the root post,
// boundary inclusive.
struct ObservedCascade {
  MessageId message_id = 0;
  std::int64_t root_time = 0;
  std::int64_t window = 0;
  std::vector<Adoption> observed;

  std::size_t observed_size() const { return observed.size(); }
};

ObservedCascade observe(const Cascade& c, std::int64_t window = 10800);

// One JSON object per line: message_id, root_time, adopters as [user, time]
// pairs, final_size.
void save_cascades(std::ostream& out, const std::vector<Cascade>& cascades);
std::vector<Cascade> load_cascades(std::istream& in);

}  // namespace spillcast
