#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spillcast/graph.hpp"

namespace spillcast {

inline constexpr const char* kPreventiveTopic = "preventive-measure";

// Keyword lexicon for topic tagging: a message carries a topic when its
// lowercased text contains any of the topic's keywords as a substring.
class TopicLexicon {
 public:
  TopicLexicon() = default;

  // Built-in four-topic COVID lexicon.
  static TopicLexicon defaults();

  // One topic per line: "name: keyword, keyword, ...".
  static TopicLexicon parse(std::istream& in);
  static TopicLexicon load_file(const std::string& path);

  void add(const std::string& topic, const std::vector<std::string>& keywords);

  const std::vector<std::string>& topics() const { return order_; }
  const std::vector<std::string>& keywords(const std::string& topic) const;
  bool has_topic(const std::string& topic) const { return words_.count(topic) > 0; }
  bool empty() const { return order_.empty(); }

  void save(std::ostream& out) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> words_;
};

std::string lowercase_ascii(const std::string& s);

// Topics whose keywords occur in `text`, sorted.
std::vector<std::string> tag_topics(const std::string& text, const TopicLexicon& lex);

// Unions detected topics into each event's tag set.
void tag_events(std::vector<Event>& events, const TopicLexicon& lex);

// Cross-sectional one-hop exposure: everything a user posted plus everything
// their followees posted, with no time ordering. Contains an entry for every
// graph node.
using ExposureProfile = std::map<UserId, std::set<std::string>>;

ExposureProfile compute_exposure(const SocialGraph& g, const std::vector<Event>& events);

// Disjoint user groups covering the profile domain; groups[control] is the
// reference group for elasticity.
struct GroupDivision {
  struct Group {
    std::string name;
    std::vector<std::string> composition;  // restricted topic subset
    std::vector<UserId> users;
  };
  std::vector<Group> groups;
  std::size_t control = 0;
};

// One group per exact subset of `topics` (2^k groups, some possibly empty);
// the empty subset is the control group.
GroupDivision partition_by_composition(const ExposureProfile& profile,
                                       const std::vector<std::string>& topics);

// Two groups: exposed to `topic` and not; the unexposed group is control.
GroupDivision split_by_topic(const ExposureProfile& profile, const std::string& topic);

// |group ∩ adopters| / |group|. Empty group raises DataError.
double activation_likelihood(const std::vector<UserId>& group,
                             const std::set<UserId>& adopters);

// (alpha_group - alpha_control) / alpha_control. Zero control raises DataError.
double spillover_elasticity(double alpha_group, double alpha_control);

// Users who retweeted any message whose root is tagged preventive-measure.
std::set<UserId> preventive_adopters(const std::vector<Event>& events);

struct GroupStats {
  std::string name;
  std::size_t users = 0;
  std::size_t adopters = 0;
  std::optional<double> alpha;       // absent for empty groups
  std::optional<double> elasticity;  // absent for control / empty / zero control
  bool control = false;
};

struct ElasticityTable {
  std::string division;
  std::vector<GroupStats> rows;

  const GroupStats* find(const std::string& name) const;
};

ElasticityTable build_elasticity_table(const std::string& division_name,
                                       const GroupDivision& division,
                                       const std::set<UserId>& adopters);

std::string format_elasticity_table(const ElasticityTable& table);

}  // namespace spillcast
