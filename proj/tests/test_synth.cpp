#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "spillcast/errors.hpp"
#include "spillcast/graph.hpp"
#include "spillcast/spillover.hpp"
#include "spillcast/synth.hpp"

using namespace spillcast;

namespace {

SpilloverScenario base_scenario() {
  SpilloverScenario sc;
  sc.graph.kind = "small-world";
  sc.graph.n = 400;
  sc.graph.k = 4;
  sc.graph.rewire = 0.1;
  sc.topics = {"unemployment", "panic-buying"};
  sc.post_prob = {{"unemployment", 0.15}, {"panic-buying", 0.15}};
  sc.p0 = 0.2;
  sc.boost = {{"unemployment", 0.3}, {"panic-buying", 0.1}};
  sc.rounds = 2;
  sc.round_seconds = 600;
  sc.seed = 14;
  return sc;
}

const PlantedGroup* find_group(const SynthResult& res, const std::string& name) {
  for (const PlantedGroup& g : res.groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("graph spec validation") {
  GraphSpec spec;
  spec.validate();
  spec.kind = "mystery";
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = GraphSpec{};
  spec.n = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = GraphSpec{};
  spec.k = 3;  // odd
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = GraphSpec{};
  spec.n = 4;
  spec.k = 8;  // k/2 >= n
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = GraphSpec{};
  spec.rewire = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = GraphSpec{};
  spec.kind = "preferential-attachment";
  spec.m = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.m = 10;
  spec.n = 5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("small-world generator keeps its ring backbone") {
  GraphSpec ring;
  ring.n = 3;
  ring.k = 2;
  ring.rewire = 0.0;
  SocialGraph g = generate_graph(ring, 1);
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 3);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 2));
  CHECK(g.has_edge(2, 0));

  GraphSpec sw;
  sw.n = 6;
  sw.k = 4;
  sw.rewire = 0.0;
  SocialGraph g2 = generate_graph(sw, 1);
  CHECK(g2.edge_count() == 12);  // every node follows its two successors
  for (UserId u = 0; u < 6; ++u) {
    CHECK(g2.has_edge(u, (u + 1) % 6));
    CHECK(g2.has_edge(u, (u + 2) % 6));
  }

  // full rewiring never touches the immediate successor edges
  GraphSpec wild;
  wild.n = 40;
  wild.k = 6;
  wild.rewire = 1.0;
  SocialGraph g3 = generate_graph(wild, 9);
  CHECK(g3.node_count() == 40);
  for (UserId u = 0; u < 40; ++u) {
    CHECK(g3.has_edge(u, (u + 1) % 40));
  }
  SocialGraph wcc = largest_wcc(g3);
  CHECK(wcc.node_count() == 40);  // backbone keeps it connected
}

TEST_CASE("preferential attachment grows hubs") {
  GraphSpec pa;
  pa.kind = "preferential-attachment";
  pa.n = 100;
  pa.m = 2;
  SocialGraph g = generate_graph(pa, 5);
  CHECK(g.node_count() == 100);
  CHECK(g.edge_count() == 197);  // 1 + 2 per arriving node, deduplicated by design
  CHECK(largest_wcc(g).node_count() == 100);

  double mean = 0.0;
  double max_deg = 0.0;
  for (UserId u : g.nodes()) {
    double deg = static_cast<double>(g.out_degree(u) + g.in_degree(u));
    mean += deg;
    max_deg = std::max(max_deg, deg);
  }
  mean /= 100.0;
  CHECK(max_deg > 3.0 * mean);  // heavy tail

  GraphSpec mu = pa;
  mu.mutual = true;
  SocialGraph g2 = generate_graph(mu, 5);
  CHECK(g2.edge_count() == 394);
  for (auto [a, b] : g2.edges()) CHECK(g2.has_edge(b, a));
}

TEST_CASE("graph generation is deterministic per seed") {
  GraphSpec sw;
  sw.n = 60;
  sw.k = 4;
  sw.rewire = 0.3;
  CHECK(generate_graph(sw, 7).edges() == generate_graph(sw, 7).edges());
  CHECK(generate_graph(sw, 7).edges() != generate_graph(sw, 8).edges());

  GraphSpec pa;
  pa.kind = "preferential-attachment";
  pa.n = 80;
  pa.m = 3;
  CHECK(generate_graph(pa, 7).edges() == generate_graph(pa, 7).edges());
  CHECK(generate_graph(pa, 7).edges() != generate_graph(pa, 9).edges());
}

TEST_CASE("planted probabilities and elasticities have the closed form") {
  SpilloverScenario sc;
  sc.p0 = 0.25;
  sc.topics = {"unemployment"};
  sc.post_prob = {{"unemployment", 0.1}};
  sc.boost = {{"unemployment", 0.42}};

  CHECK(planted_probability(sc, {}) == 0.25);
  CHECK(planted_elasticity(sc, {}) == 0.0);
  CHECK(planted_probability(sc, {"unemployment"}) == doctest::Approx(0.67).epsilon(1e-12));
  CHECK(planted_elasticity(sc, {"unemployment"}) == doctest::Approx(1.68).epsilon(1e-9));

  // duplicates in the composition count once
  CHECK(planted_probability(sc, {"unemployment", "unemployment"}) ==
        doctest::Approx(0.67).epsilon(1e-12));
  CHECK_THROWS_AS(planted_probability(sc, {"ghost"}), ConfigError);

  // the cap applies even for configurations that would fail validation
  SpilloverScenario capped;
  capped.p0 = 0.5;
  capped.topics = {"a", "b"};
  capped.boost = {{"a", 0.3}, {"b", 0.5}};
  CHECK(planted_probability(capped, {"a", "b"}) == 1.0);
  CHECK(planted_elasticity(capped, {"a", "b"}) == doctest::Approx(1.0));

  // boosting by exactly p0 doubles the adoption probability
  SpilloverScenario twice = base_scenario();
  twice.boost["unemployment"] = twice.p0;
  CHECK(planted_elasticity(twice, {"unemployment"}) == doctest::Approx(1.0));
}

TEST_CASE("scenario validation rejects inconsistent settings") {
  SpilloverScenario sc = base_scenario();
  sc.validate();

  sc = base_scenario();
  sc.p0 = 0.0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.p0 = 0.5;
  sc.boost["unemployment"] = 0.45;
  sc.boost["panic-buying"] = 0.1;  // total 1.05
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.topics.push_back("unemployment");
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.topics.push_back(kPreventiveTopic);
  sc.post_prob[kPreventiveTopic] = 0.1;
  sc.boost[kPreventiveTopic] = 0.0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.post_prob.erase("panic-buying");
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.boost.erase("panic-buying");
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.boost["ghost"] = 0.1;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.rounds = 0;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.pm_fraction = 1.2;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = base_scenario();
  sc.adoption_mode = "weird";
  CHECK_THROWS_AS(sc.validate(), ConfigError);

  CHECK_THROWS_AS(simulate_cascades(base_scenario(), 0), ConfigError);
  CHECK_THROWS_AS(simulate_cascades(base_scenario(), 2), ConfigError);  // per-user: count 1
}

TEST_CASE("per-user simulation plants group likelihoods exactly up to rounding") {
  SpilloverScenario sc = base_scenario();
  SynthResult res = simulate_cascades(sc, 1);

  REQUIRE(res.has_hub);
  CHECK(res.hub == 400);
  CHECK(res.graph.node_count() == 401);  // hub added
  CHECK(res.preventive_roots == 1);
  CHECK(res.other_roots == 0);
  CHECK(!res.latent_adopters.count(res.hub));

  REQUIRE(!res.groups.empty());
  CHECK(res.groups.front().control);
  std::size_t covered = 0;
  for (const PlantedGroup& g : res.groups) {
    CHECK((g.control ? 1 : 0) == (&g == &res.groups.front() ? 1 : 0));
    covered += g.size;
    REQUIRE(g.size > 0);
    // latent adopters are the rounded planted fraction of the group
    CHECK(std::abs(g.alpha - g.probability) <= 0.5 / static_cast<double>(g.size) + 1e-12);
    CHECK(g.latent <= g.size);
  }
  CHECK(covered == 401);

  const PlantedGroup* both = find_group(res, "panic-buying+unemployment");
  REQUIRE(both != nullptr);
  CHECK(both->probability == doctest::Approx(0.6));
  const PlantedGroup* control = find_group(res, "none");
  REQUIRE(control != nullptr);
  CHECK(control->probability == doctest::Approx(0.2));
  CHECK(control->elasticity == 0.0);

  // the emitted event log replays through the measurement pipeline
  ExposureProfile profile = compute_exposure(res.graph, res.events);
  GroupDivision division = partition_by_composition(profile, sc.topics);
  std::set<UserId> adopters = preventive_adopters(res.events);
  CHECK(adopters == res.latent_adopters);
  ElasticityTable table = build_elasticity_table("composition", division, adopters);
  for (const PlantedGroup& g : res.groups) {
    const GroupStats* row = table.find(g.name);
    REQUIRE(row != nullptr);
    CHECK(row->users == g.size);
    CHECK(row->adopters == g.latent);
    REQUIRE(row->alpha.has_value());
    CHECK(*row->alpha == doctest::Approx(g.alpha).epsilon(1e-12));
    if (!g.control) {
      REQUIRE(row->elasticity.has_value());
      CHECK(*row->elasticity == doctest::Approx(g.elasticity).epsilon(1e-9));
    }
  }

  // the cascade itself: hub root plus one retweet per latent adopter
  CascadeSummary summary;
  std::vector<Cascade> cascades = build_cascades(res.events, res.graph, 3, &summary);
  REQUIRE(cascades.size() == 1);
  CHECK(cascades[0].final_size() == 1 + res.latent_adopters.size());
  CHECK(cascades[0].adopters.front().user == res.hub);
}

TEST_CASE("null and proportional scenarios plant the advertised elasticities") {
  SpilloverScenario null_sc = base_scenario();
  null_sc.graph.n = 2000;
  null_sc.p0 = 0.3;
  null_sc.boost = {{"unemployment", 0.0}, {"panic-buying", 0.0}};
  SynthResult res = simulate_cascades(null_sc, 1);
  for (const PlantedGroup& g : res.groups) {
    CHECK(g.probability == doctest::Approx(0.3));
    CHECK(std::abs(g.elasticity) < 0.1);  // rounding noise only
  }

  SpilloverScenario prop = base_scenario();
  prop.boost = {{"unemployment", prop.p0}, {"panic-buying", 0.1}};
  SynthResult res2 = simulate_cascades(prop, 1);
  const PlantedGroup* u_only = find_group(res2, "unemployment");
  REQUIRE(u_only != nullptr);
  CHECK(u_only->probability == doctest::Approx(2.0 * prop.p0));
  // measured elasticity approximately 1, up to the rounding of both groups
  CHECK(std::abs(u_only->elasticity - 1.0) < 0.1);
}

TEST_CASE("per-user simulation is deterministic") {
  SpilloverScenario sc = base_scenario();
  SynthResult a = simulate_cascades(sc, 1);
  SynthResult b = simulate_cascades(sc, 1);
  std::ostringstream ea, eb;
  save_events(ea, a.events);
  save_events(eb, b.events);
  CHECK(ea.str() == eb.str());
  CHECK(a.graph.edges() == b.graph.edges());
  CHECK(a.latent_adopters == b.latent_adopters);

  SpilloverScenario other = sc;
  other.seed = sc.seed + 1;
  SynthResult c = simulate_cascades(other, 1);
  std::ostringstream ec;
  save_events(ec, c.events);
  CHECK(ea.str() != ec.str());
}

TEST_CASE("per-message simulation seeds preventive and neutral roots") {
  SpilloverScenario sc;
  sc.graph.kind = "preferential-attachment";
  sc.graph.n = 120;
  sc.graph.m = 2;
  sc.graph.mutual = true;
  sc.topics = {"unemployment"};
  sc.post_prob = {{"unemployment", 0.2}};
  sc.p0 = 0.15;
  sc.boost = {{"unemployment", 0.25}};
  sc.rounds = 2;
  sc.round_seconds = 300;
  sc.pm_fraction = 0.5;
  sc.nonpm_adopt = 0.1;
  sc.adoption_mode = "per-message";
  sc.seed = 3;

  SynthResult res = simulate_cascades(sc, 10);
  CHECK(!res.has_hub);
  CHECK(res.graph.node_count() == 120);
  CHECK(res.preventive_roots == 5);
  CHECK(res.other_roots == 5);

  // planted table reports expected rates in per-message mode
  for (const PlantedGroup& g : res.groups) {
    CHECK(g.latent == 0);
    CHECK(g.alpha == g.probability);
  }
  const PlantedGroup* exposed = find_group(res, "unemployment");
  REQUIRE(exposed != nullptr);
  CHECK(exposed->elasticity == doctest::Approx(0.25 / 0.15).epsilon(1e-12));

  TopicLexicon lex = TopicLexicon::defaults();
  std::map<MessageId, const Event*> roots;
  std::size_t pm_roots = 0, neutral_roots = 0, retweets = 0;
  for (const Event& ev : res.events) {
    if (ev.is_original()) roots.emplace(ev.message_id, &ev);
  }
  for (const Event& ev : res.events) {
    if (ev.is_original()) {
      if (ev.timestamp == 0 && !ev.topics.empty() &&
          ev.topics[0] == kPreventiveTopic) {
        ++pm_roots;
        CHECK(tag_topics(ev.text, lex) == std::vector<std::string>{kPreventiveTopic});
      } else if (ev.timestamp == 0 && ev.topics.empty() && !ev.text.empty() &&
                 roots.count(ev.message_id)) {
        if (tag_topics(ev.text, lex).empty()) ++neutral_roots;
      }
    } else {
      ++retweets;
      const Event* root = roots.at(ev.root_id);
      CHECK(ev.text == root->text);
      CHECK(ev.topics == root->topics);
      CHECK(ev.timestamp >= sc.round_seconds);
      CHECK(ev.timestamp <= sc.rounds * sc.round_seconds);
      CHECK(ev.timestamp % sc.round_seconds == 0);
    }
  }
  // 5 preventive + 5 neutral roots, plus the topic seed posts at time zero
  CHECK(pm_roots == 5);
  CHECK(neutral_roots >= 5);  // neutral cascade roots (topic posts carry tags)
  CHECK(retweets > 0);

  SynthResult again = simulate_cascades(sc, 10);
  std::ostringstream ea, eb;
  save_events(ea, res.events);
  save_events(eb, again.events);
  CHECK(ea.str() == eb.str());
}

TEST_CASE("degenerate scenarios fail loudly") {
  // saturating post probability leaves no usable control group
  SpilloverScenario sc = base_scenario();
  sc.graph.n = 50;
  sc.post_prob = {{"unemployment", 1.0}, {"panic-buying", 1.0}};
  CHECK_THROWS_AS(simulate_cascades(sc, 1), DataError);

  // control too small for even one planted adopter
  SpilloverScenario tiny = base_scenario();
  tiny.graph.n = 30;
  tiny.p0 = 0.001;
  CHECK_THROWS_AS(simulate_cascades(tiny, 1), DataError);
}
