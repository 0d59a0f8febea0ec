#include "spillcast/spillover.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "spillcast/errors.hpp"

namespace spillcast {

TopicLexicon TopicLexicon::defaults() {
  TopicLexicon lex;
  lex.add(kPreventiveTopic,
          {"stayathome", "mask", "masque", "maske", "washhand", "wash hand",
           "social distancing", "socialdistancing", "staysafe", "lockdown"});
  lex.add("unemployment",
          {"job", "jobsearching", "jobsearch", "unemployment", "employment", "career",
           "resume", "recruitment", "recession", "economy", "economic", "emploi",
           "stelle", "employ", "arbeitslos", "ch\xc3\xb4meurs"});
  lex.add("panic-buying", {"panicbuying", "panicshopping", "panicbuyers", "toiletpaper",
                           "handsanitizer", "coronashopping"});
  lex.add("school-closures",
          {"schoolclos", "closenypublicschools", "closenycschools", "suny", "cuny",
           "homeschool", "noschool", "closetheschools", "shutdownschools"});
  return lex;
}

void TopicLexicon::add(const std::string& topic, const std::vector<std::string>& keywords) {
  if (topic.empty()) throw ConfigError("lexicon: empty topic name");
  auto [it, inserted] = words_.try_emplace(topic);
  if (inserted) order_.push_back(topic);
  for (const std::string& kw : keywords) {
    std::string low = lowercase_ascii(kw);
    if (low.empty()) throw ConfigError("lexicon: empty keyword for topic " + topic);
    if (std::find(it->second.begin(), it->second.end(), low) == it->second.end()) {
      it->second.push_back(low);
    }
  }
}

const std::vector<std::string>& TopicLexicon::keywords(const std::string& topic) const {
  auto it = words_.find(topic);
  if (it == words_.end()) throw ConfigError("lexicon: unknown topic " + topic);
  return it->second;
}

TopicLexicon TopicLexicon::parse(std::istream& in) {
  TopicLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": expected 'topic: keywords'");
    }
    auto trim = [](std::string s) {
      std::size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      std::size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string topic = trim(line.substr(0, colon));
    if (topic.empty()) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": empty topic name");
    }
    std::vector<std::string> kws;
    std::string rest = line.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      std::size_t comma = rest.find(',', pos);
      std::string kw = trim(rest.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (!kw.empty()) kws.push_back(kw);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (kws.empty()) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": no keywords for " + topic);
    }
    lex.add(topic, kws);
  }
  return lex;
}

TopicLexicon TopicLexicon::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon file: " + path);
  return parse(in);
}

void TopicLexicon::save(std::ostream& out) const {
  for (const std::string& t : order_) {
    out << t << ": ";
    const auto& kws = words_.at(t);
    for (std::size_t i = 0; i < kws.size(); ++i) {
      if (i) out << ", ";
      out << kws[i];
    }
    out << '\n';
  }
}

std::string lowercase_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> tag_topics(const std::string& text, const TopicLexicon& lex) {
  std::vector<std::string> tags;
  if (text.empty()) return tags;
  std::string low = lowercase_ascii(text);
  for (const std::string& topic : lex.topics()) {
    for (const std::string& kw : lex.keywords(topic)) {
      if (low.find(kw) != std::string::npos) {
        tags.push_back(topic);
        break;
      }
    }
  }
  std::sort(tags.begin(), tags.end());
  return tags;
}

void tag_events(std::vector<Event>& events, const TopicLexicon& lex) {
  for (Event& ev : events) {
    std::vector<std::string> tags = tag_topics(ev.text, lex);
    ev.topics.insert(ev.topics.end(), tags.begin(), tags.end());
    std::sort(ev.topics.begin(), ev.topics.end());
    ev.topics.erase(std::unique(ev.topics.begin(), ev.topics.end()), ev.topics.end());
  }
}

ExposureProfile compute_exposure(const SocialGraph& g, const std::vector<Event>& events) {
  std::unordered_map<UserId, std::set<std::string>> posted;
  for (const Event& ev : events) {
    if (ev.topics.empty() || !g.has_node(ev.user_id)) continue;
    posted[ev.user_id].insert(ev.topics.begin(), ev.topics.end());
  }
  ExposureProfile profile;
  for (UserId u : g.nodes()) {
    std::set<std::string>& exp = profile[u];
    auto own = posted.find(u);
    if (own != posted.end()) exp.insert(own->second.begin(), own->second.end());
    for (UserId f : g.followees(u)) {
      auto it = posted.find(f);
      if (it != posted.end()) exp.insert(it->second.begin(), it->second.end());
    }
  }
  return profile;
}

GroupDivision partition_by_composition(const ExposureProfile& profile,
                                       const std::vector<std::string>& topics) {
  if (topics.empty()) throw ConfigError("partition_by_composition: no topics given");
  std::vector<std::string> sorted = topics;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() > 16) throw ConfigError("partition_by_composition: too many topics");

  GroupDivision div;
  div.groups.resize(std::size_t{1} << sorted.size());
  for (std::size_t mask = 0; mask < div.groups.size(); ++mask) {
    GroupDivision::Group& grp = div.groups[mask];
    std::string name;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (mask & (std::size_t{1} << i)) {
        grp.composition.push_back(sorted[i]);
        if (!name.empty()) name += '+';
        name += sorted[i];
      }
    }
    grp.name = name.empty() ? "none" : name;
  }
  div.control = 0;

  for (const auto& [user, exposure] : profile) {
    std::size_t mask = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (exposure.count(sorted[i])) mask |= std::size_t{1} << i;
    }
    div.groups[mask].users.push_back(user);
  }
  return div;
}

GroupDivision split_by_topic(const ExposureProfile& profile, const std::string& topic) {
  if (topic.empty()) throw ConfigError("split_by_topic: empty topic");
  GroupDivision div;
  div.groups.resize(2);
  div.groups[0].name = "unexposed";
  div.groups[1].name = "exposed";
  div.groups[1].composition = {topic};
  div.control = 0;
  for (const auto& [user, exposure] : profile) {
    div.groups[exposure.count(topic) ? 1 : 0].users.push_back(user);
  }
  return div;
}

double activation_likelihood(const std::vector<UserId>& group,
                             const std::set<UserId>& adopters) {
  if (group.empty()) throw DataError("activation_likelihood: empty group");
  std::size_t hits = 0;
  for (UserId u : group) {
    if (adopters.count(u)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(group.size());
}

double spillover_elasticity(double alpha_group, double alpha_control) {
  if (alpha_control == 0.0) {
    throw DataError("spillover_elasticity: control activation likelihood is zero");
  }
  return (alpha_group - alpha_control) / alpha_control;
}

std::set<UserId> preventive_adopters(const std::vector<Event>& events) {
  std::unordered_map<MessageId, const Event*> roots;
  for (const Event& ev : events) {
    if (ev.is_original()) roots.emplace(ev.message_id, &ev);
  }
  std::set<UserId> adopters;
  for (const Event& ev : events) {
    if (ev.is_original()) continue;
    auto it = roots.find(ev.root_id);
    if (it == roots.end()) continue;
    const auto& topics = it->second->topics;
    if (std::binary_search(topics.begin(), topics.end(), std::string(kPreventiveTopic))) {
      adopters.insert(ev.user_id);
    }
  }
  return adopters;
}

const GroupStats* ElasticityTable::find(const std::string& name) const {
  for (const GroupStats& row : rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

ElasticityTable build_elasticity_table(const std::string& division_name,
                                       const GroupDivision& division,
                                       const std::set<UserId>& adopters) {
  if (division.control >= division.groups.size()) {
    throw ConfigError("build_elasticity_table: control index out of range");
  }
  ElasticityTable table;
  table.division = division_name;
  std::optional<double> alpha_control;
  const auto& control_users = division.groups[division.control].users;
  if (!control_users.empty()) {
    alpha_control = activation_likelihood(control_users, adopters);
  }
  for (std::size_t i = 0; i < division.groups.size(); ++i) {
    const auto& grp = division.groups[i];
    GroupStats row;
    row.name = grp.name;
    row.users = grp.users.size();
    row.control = i == division.control;
    if (!grp.users.empty()) {
      std::size_t hits = 0;
      for (UserId u : grp.users) {
        if (adopters.count(u)) ++hits;
      }
      row.adopters = hits;
      row.alpha = static_cast<double>(hits) / static_cast<double>(grp.users.size());
      if (!row.control && alpha_control && *alpha_control > 0.0) {
        row.elasticity = spillover_elasticity(*row.alpha, *alpha_control);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_elasticity_table(const ElasticityTable& table) {
  std::ostringstream out;
  out << "division: " << table.division << '\n';
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-34s %10s %10s %8s %12s\n", "group", "users",
                "adopters", "alpha", "elasticity");
  out << buf;
  for (const GroupStats& row : table.rows) {
    std::string alpha = "n/a";
    std::string elas = row.control ? "control" : "n/a";
    if (row.alpha) {
      std::snprintf(buf, sizeof(buf), "%.4f", *row.alpha);
      alpha = buf;
    }
    if (row.elasticity) {
      std::snprintf(buf, sizeof(buf), "%.4f", *row.elasticity);
      elas = buf;
    }
    std::snprintf(buf, sizeof(buf), "%-34s %10zu %10zu %8s %12s\n", row.name.c_str(),
                  row.users, row.adopters, alpha.c_str(), elas.c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace spillcast
