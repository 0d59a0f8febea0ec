#include "spillcast/synth.hpp"

#include <algorithm>
#include <cmath>

#include "spillcast/embedding.hpp"
#include "spillcast/errors.hpp"
#include "spillcast/rng.hpp"

namespace spillcast {

namespace {

constexpr std::uint64_t kGraphSalt = 0x6772617068ull;
constexpr std::uint64_t kPostSalt = 0x706f7374ull;
constexpr std::uint64_t kGroupSalt = 0x67726f7570ull;
constexpr std::uint64_t kMessageSalt = 0x6d736753ull;

const std::vector<std::string>& neutral_texts() {
  static const std::vector<std::string> texts = {
      "good morning everyone",      "coffee first today",
      "watching the rain outside",  "weekend plans soon",
      "new playlist is out",        "long walk by the river",
      "cooking dinner tonight",     "reading a good novel",
      "sunset photos from the hill", "board games with family"};
  return texts;
}

const std::vector<std::string>& filler_texts() {
  static const std::vector<std::string> texts = {
      "please remember", "daily reminder",    "tips for everyone", "quick note",
      "for your weekend", "sharing with friends", "before heading out", "stay well"};
  return texts;
}

}  // namespace

void GraphSpec::validate() const {
  if (kind != "small-world" && kind != "preferential-attachment") {
    throw ConfigError("graph spec: unknown kind " + kind);
  }
  if (n < 3) throw ConfigError("graph spec: n must be >= 3");
  if (kind == "small-world") {
    if (k < 2 || k % 2 != 0) throw ConfigError("graph spec: k must be even and >= 2");
    if (k / 2 > n - 1) throw ConfigError("graph spec: k/2 must be < n");
    if (rewire < 0.0 || rewire > 1.0) {
      throw ConfigError("graph spec: rewire must be in [0, 1]");
    }
  } else {
    if (m < 1) throw ConfigError("graph spec: m must be >= 1");
    if (m > n - 1) throw ConfigError("graph spec: m must be < n");
  }
}

namespace {

SocialGraph generate_small_world(const GraphSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, kGraphSalt));
  const auto n = static_cast<std::uint64_t>(spec.n);
  std::vector<std::pair<UserId, UserId>> edges;
  std::set<std::pair<UserId, UserId>> seen;
  auto try_add = [&](UserId a, UserId b) {
    if (a == b) return false;
    if (!seen.emplace(a, b).second) return false;
    edges.emplace_back(a, b);
    return true;
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    for (int j = 1; j <= spec.k / 2; ++j) {
      UserId target = (i + static_cast<std::uint64_t>(j)) % n;
      if (j > 1 && uniform01(rng) < spec.rewire) {
        bool placed = false;
        for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
          UserId cand = uniform_index(rng, n);
          placed = try_add(i, cand);
        }
        if (placed) continue;
      }
      try_add(i, target);
    }
  }
  std::vector<UserId> all(n);
  for (std::uint64_t i = 0; i < n; ++i) all[i] = i;
  return SocialGraph::from_edges(edges, all);
}

SocialGraph generate_preferential(const GraphSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed, kGraphSalt));
  std::vector<std::pair<UserId, UserId>> edges;
  std::set<std::pair<UserId, UserId>> seen;
  std::vector<UserId> endpoints;  // node repeated once per incident edge
  auto add_edge = [&](UserId a, UserId b) {
    if (a == b || !seen.emplace(a, b).second) return;
    edges.emplace_back(a, b);
    endpoints.push_back(a);
    endpoints.push_back(b);
  };
  for (int t = 1; t < spec.n; ++t) {
    const auto u = static_cast<UserId>(t);
    const int wanted = std::min(spec.m, t);
    std::set<UserId> targets;
    int attempts = 0;
    while (static_cast<int>(targets.size()) < wanted && attempts < 64 * wanted) {
      ++attempts;
      UserId cand = endpoints.empty()
                        ? uniform_index(rng, static_cast<std::uint64_t>(t))
                        : endpoints[uniform_index(rng, endpoints.size())];
      if (cand != u) targets.insert(cand);
    }
    for (UserId v = 0; static_cast<int>(targets.size()) < wanted &&
                       v < static_cast<UserId>(t);
         ++v) {
      targets.insert(v);
    }
    for (UserId v : targets) {
      add_edge(u, v);
      if (spec.mutual) add_edge(v, u);
    }
  }
  std::vector<UserId> all(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) all[static_cast<std::size_t>(i)] = static_cast<UserId>(i);
  return SocialGraph::from_edges(edges, all);
}

}  // namespace

SocialGraph generate_graph(const GraphSpec& spec, std::uint64_t seed) {
  spec.validate();
  return spec.kind == "small-world" ? generate_small_world(spec, seed)
                                    : generate_preferential(spec, seed);
}

void SpilloverScenario::validate() const {
  graph.validate();
  if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("scenario: p0 must be in (0, 1)");
  double total = p0;
  std::set<std::string> topic_set;
  for (const std::string& t : topics) {
    if (t == kPreventiveTopic) {
      throw ConfigError("scenario: exposure topics must not include the preventive topic");
    }
    if (!topic_set.insert(t).second) throw ConfigError("scenario: duplicate topic " + t);
    auto pp = post_prob.find(t);
    if (pp == post_prob.end()) throw ConfigError("scenario: missing post_prob for " + t);
    if (pp->second < 0.0 || pp->second > 1.0) {
      throw ConfigError("scenario: post_prob for " + t + " must be in [0, 1]");
    }
    auto b = boost.find(t);
    if (b == boost.end()) throw ConfigError("scenario: missing boost for " + t);
    if (b->second < 0.0) throw ConfigError("scenario: boost for " + t + " must be >= 0");
    total += b->second;
  }
  for (const auto& [t, unused] : boost) {
    (void)unused;
    if (!topic_set.count(t)) throw ConfigError("scenario: boost for unknown topic " + t);
  }
  if (total > 1.0 + 1e-12) {
    throw ConfigError("scenario: p0 plus all boosts must not exceed 1");
  }
  if (rounds < 1) throw ConfigError("scenario: rounds must be >= 1");
  if (round_seconds < 1) throw ConfigError("scenario: round_seconds must be >= 1");
  if (pm_fraction < 0.0 || pm_fraction > 1.0) {
    throw ConfigError("scenario: pm_fraction must be in [0, 1]");
  }
  if (nonpm_adopt < 0.0 || nonpm_adopt > 1.0) {
    throw ConfigError("scenario: nonpm_adopt must be in [0, 1]");
  }
  if (adoption_mode != "per-user" && adoption_mode != "per-message") {
    throw ConfigError("scenario: adoption_mode must be per-user or per-message");
  }
}

double planted_probability(const SpilloverScenario& sc,
                           const std::vector<std::string>& composition) {
  double q = sc.p0;
  std::set<std::string> seen;
  for (const std::string& t : composition) {
    if (!seen.insert(t).second) continue;
    auto it = sc.boost.find(t);
    if (it == sc.boost.end()) {
      throw ConfigError("planted probability: composition topic " + t +
                        " is not part of the scenario");
    }
    q += it->second;
  }
  return std::min(1.0, q);
}

double planted_elasticity(const SpilloverScenario& sc,
                          const std::vector<std::string>& composition) {
  return (planted_probability(sc, composition) - sc.p0) / sc.p0;
}

namespace {

// First lexicon keyword of `topic` that tags to exactly {topic}.
std::string pick_keyword(const TopicLexicon& lex, const std::string& topic) {
  if (!lex.has_topic(topic)) throw ConfigError("scenario: unknown topic " + topic);
  for (const std::string& kw : lex.keywords(topic)) {
    auto tags = tag_topics(kw, lex);
    if (tags.size() == 1 && tags[0] == topic) return kw;
  }
  throw ConfigError("scenario: no unambiguous keyword for topic " + topic);
}

void check_tags(const TopicLexicon& lex, const std::string& text,
                const std::vector<std::string>& expected) {
  if (tag_topics(text, lex) != expected) {
    throw ConfigError("scenario text '" + text + "' does not tag as intended");
  }
}

}  // namespace

SynthResult simulate_cascades(const SpilloverScenario& sc, int count) {
  sc.validate();
  if (count < 1) throw ConfigError("simulate: count must be >= 1");
  const bool per_user = sc.adoption_mode == "per-user";
  if (per_user && count != 1) {
    throw ConfigError("simulate: per-user mode uses a single broadcast seed (count 1)");
  }

  TopicLexicon lex = TopicLexicon::defaults();
  std::map<std::string, std::string> topic_text;
  for (const std::string& t : sc.topics) topic_text[t] = pick_keyword(lex, t);
  const std::string pm_base = pick_keyword(lex, kPreventiveTopic);

  std::vector<std::string> pm_keywords;
  for (const std::string& kw : lex.keywords(kPreventiveTopic)) {
    auto tags = tag_topics(kw, lex);
    if (tags.size() == 1 && tags[0] == kPreventiveTopic) pm_keywords.push_back(kw);
  }

  SynthResult res;
  SocialGraph base_graph = generate_graph(sc.graph, mix64(sc.seed, kGraphSalt));
  const auto n = static_cast<std::uint64_t>(sc.graph.n);
  if (per_user) {
    res.hub = n;
    res.has_hub = true;
    auto edges = base_graph.edges();
    edges.reserve(edges.size() + n);
    for (std::uint64_t u = 0; u < n; ++u) edges.emplace_back(u, res.hub);
    res.graph = SocialGraph::from_edges(edges);
  } else {
    res.graph = std::move(base_graph);
  }

  MessageId next_id = 1;
  for (const std::string& t : sc.topics) {
    std::mt19937_64 rng(mix64(sc.seed, fnv1a64(t), kPostSalt));
    const double pp = sc.post_prob.at(t);
    const std::string& text = topic_text.at(t);
    check_tags(lex, text, {t});
    for (std::uint64_t u = 0; u < n; ++u) {
      if (uniform01(rng) < pp) {
        Event ev;
        ev.message_id = next_id;
        ev.root_id = next_id;
        ++next_id;
        ev.user_id = u;
        ev.timestamp = 0;
        ev.text = text;
        ev.topics = {t};
        res.events.push_back(std::move(ev));
      }
    }
  }

  ExposureProfile exposure = compute_exposure(res.graph, res.events);
  GroupDivision division = partition_by_composition(exposure, sc.topics);

  // Planted table rows, control first.
  const double control_q = sc.p0;
  std::vector<std::size_t> group_order;
  group_order.push_back(division.control);
  for (std::size_t gi = 0; gi < division.groups.size(); ++gi) {
    if (gi != division.control) group_order.push_back(gi);
  }

  if (per_user) {
    const auto& control_group = division.groups[division.control];
    if (control_group.users.empty()) {
      throw DataError("simulate: control group is empty; lower post probabilities");
    }

    std::map<std::size_t, std::vector<UserId>> latent_per_group;
    for (std::size_t gi = 0; gi < division.groups.size(); ++gi) {
      const auto& grp = division.groups[gi];
      if (grp.users.empty()) continue;
      const double q = planted_probability(sc, grp.composition);
      std::vector<UserId> eligible;
      eligible.reserve(grp.users.size());
      for (UserId u : grp.users) {
        if (!(res.has_hub && u == res.hub)) eligible.push_back(u);
      }
      auto want = static_cast<std::size_t>(
          std::llround(q * static_cast<double>(grp.users.size())));
      want = std::min(want, eligible.size());
      std::mt19937_64 rng(mix64(sc.seed, kGroupSalt, gi));
      shuffle_vec(eligible, rng);
      eligible.resize(want);
      std::sort(eligible.begin(), eligible.end());
      latent_per_group[gi] = std::move(eligible);
    }

    const auto control_latent =
        static_cast<double>(latent_per_group[division.control].size());
    const double control_alpha =
        control_latent / static_cast<double>(control_group.users.size());
    if (control_alpha <= 0.0) {
      throw DataError("simulate: planted control likelihood is zero; raise p0 or n");
    }
    for (std::size_t gi : group_order) {
      const auto& grp = division.groups[gi];
      if (grp.users.empty()) continue;
      PlantedGroup row;
      row.name = grp.name;
      row.composition = grp.composition;
      row.size = grp.users.size();
      row.latent = latent_per_group[gi].size();
      row.probability = planted_probability(sc, grp.composition);
      row.alpha = static_cast<double>(row.latent) / static_cast<double>(row.size);
      row.control = gi == division.control;
      row.elasticity = row.control ? 0.0 : (row.alpha - control_alpha) / control_alpha;
      res.groups.push_back(std::move(row));
      for (UserId u : latent_per_group[gi]) res.latent_adopters.insert(u);
    }

    check_tags(lex, pm_base, {kPreventiveTopic});
    Event seed_ev;
    seed_ev.message_id = next_id;
    seed_ev.root_id = next_id;
    const MessageId seed_id = next_id;
    ++next_id;
    seed_ev.user_id = res.hub;
    seed_ev.timestamp = 0;
    seed_ev.text = pm_base;
    seed_ev.topics = {kPreventiveTopic};
    res.events.push_back(std::move(seed_ev));
    res.preventive_roots = 1;

    for (UserId u : res.latent_adopters) {
      Event rt;
      rt.message_id = next_id++;
      rt.root_id = seed_id;
      rt.user_id = u;
      rt.timestamp = sc.round_seconds;
      rt.text = pm_base;
      rt.topics = {kPreventiveTopic};
      res.events.push_back(std::move(rt));
    }
    return res;
  }

  // per-message mode: expected rates only in the table.
  for (std::size_t gi : group_order) {
    const auto& grp = division.groups[gi];
    if (grp.users.empty()) continue;
    PlantedGroup row;
    row.name = grp.name;
    row.composition = grp.composition;
    row.size = grp.users.size();
    row.latent = 0;
    row.probability = planted_probability(sc, grp.composition);
    row.alpha = row.probability;
    row.control = gi == division.control;
    row.elasticity = row.control ? 0.0 : (row.probability - control_q) / control_q;
    res.groups.push_back(std::move(row));
  }

  std::vector<double> adopt_prob(n, sc.p0);
  for (std::uint64_t u = 0; u < n; ++u) {
    double q = sc.p0;
    const auto& seen = exposure.at(u);
    for (const std::string& t : sc.topics) {
      if (seen.count(t)) q += sc.boost.at(t);
    }
    adopt_prob[u] = std::min(1.0, q);
  }

  const auto n_pm = static_cast<int>(std::llround(sc.pm_fraction * count));
  const auto& fillers = filler_texts();
  const auto& neutrals = neutral_texts();
  for (int m = 0; m < count; ++m) {
    const bool is_pm = m < n_pm;
    std::mt19937_64 rng(mix64(sc.seed, kMessageSalt, static_cast<std::uint64_t>(m)));
    const UserId originator = uniform_index(rng, n);
    std::string text;
    std::vector<std::string> tags;
    if (is_pm) {
      const auto mi = static_cast<std::size_t>(m);
      text = fillers[mi % fillers.size()] + " " + pm_keywords[mi % pm_keywords.size()];
      tags = {kPreventiveTopic};
    } else {
      text = neutrals[static_cast<std::size_t>(m) % neutrals.size()];
    }
    check_tags(lex, text, tags);

    Event root;
    root.message_id = next_id;
    root.root_id = next_id;
    const MessageId root_id = next_id;
    ++next_id;
    root.user_id = originator;
    root.timestamp = 0;
    root.text = text;
    root.topics = tags;
    res.events.push_back(std::move(root));
    if (is_pm) {
      ++res.preventive_roots;
    } else {
      ++res.other_roots;
    }

    std::set<UserId> adopted = {originator};
    std::vector<UserId> frontier = {originator};
    for (int r = 1; r <= sc.rounds && !frontier.empty(); ++r) {
      std::vector<UserId> next;
      for (UserId u : frontier) {
        for (UserId v : res.graph.followers(u)) {
          if (adopted.count(v)) continue;
          const double q = is_pm ? adopt_prob[v] : sc.nonpm_adopt;
          if (uniform01(rng) < q) {
            adopted.insert(v);
            next.push_back(v);
            Event rt;
            rt.message_id = next_id++;
            rt.root_id = root_id;
            rt.user_id = v;
            rt.timestamp = static_cast<std::int64_t>(r) * sc.round_seconds;
            rt.text = text;
            rt.topics = tags;
            res.events.push_back(std::move(rt));
          }
        }
      }
      std::sort(next.begin(), next.end());
      frontier = std::move(next);
    }
  }
  return res;
}

}  // namespace spillcast
