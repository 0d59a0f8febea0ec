#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spillcast/graph.hpp"
#include "spillcast/spillover.hpp"

namespace spillcast {

// Random graph recipe. small-world: a directed ring where node i follows its
// k/2 successors and every non-ring edge is redirected to a uniform target
// with probability `rewire` (the i -> i+1 backbone is never rewired, keeping
// the graph connected). preferential-attachment: nodes arrive one at a time
// and follow m existing nodes sampled proportionally to current degree;
// `mutual` adds the reciprocal follow.
struct GraphSpec {
  std::string kind = "small-world";  // or "preferential-attachment"
  int n = 1000;
  int k = 4;
  double rewire = 0.1;
  int m = 2;
  bool mutual = false;

  void validate() const;
};

SocialGraph generate_graph(const GraphSpec& spec, std::uint64_t seed);

// A diffusion scenario with a known planted spillover effect. Topic posts
// are seeded per user at time zero; a user's adoption probability for a
// preventive-measure message is min(1, p0 + sum of boosts over the exposure
// topics the user sees). Two adoption modes:
//   per-user: one broadcast seed from a hub everyone follows; adopters are
//     assigned per exposure group at exactly the planted rate (rounded), so
//     measured likelihoods match the closed form up to rounding.
//   per-message: `count` root messages diffuse independent-cascade style,
//     one hop per round; preventive roots use the planted probabilities,
//     other roots a flat base rate.
struct SpilloverScenario {
  GraphSpec graph;
  std::vector<std::string> topics;          // exposure topics to seed and boost
  std::map<std::string, double> post_prob;  // per-topic seeding probability
  double p0 = 0.2;
  std::map<std::string, double> boost;      // additive per-topic adoption boost
  int rounds = 3;
  std::int64_t round_seconds = 3600;
  double pm_fraction = 1.0;   // per-message mode: fraction of preventive roots
  double nonpm_adopt = 0.05;  // per-message mode: adoption rate of other roots
  std::string adoption_mode = "per-user";  // or "per-message"
  std::uint64_t seed = 1;

  void validate() const;
};

// min(1, p0 + sum of boosts over `composition`).
double planted_probability(const SpilloverScenario& sc,
                           const std::vector<std::string>& composition);

// (planted_probability - p0) / p0.
double planted_elasticity(const SpilloverScenario& sc,
                          const std::vector<std::string>& composition);

struct PlantedGroup {
  std::string name;
  std::vector<std::string> composition;
  std::size_t size = 0;
  std::size_t latent = 0;    // assigned latent adopters (per-user mode)
  double probability = 0.0;  // planted adoption probability
  double alpha = 0.0;        // latent / size
  double elasticity = 0.0;   // against the planted control alpha
  bool control = false;
};

struct SynthResult {
  SocialGraph graph;
  std::vector<Event> events;
  std::vector<PlantedGroup> groups;  // non-empty exposure groups, control first
  UserId hub = 0;                    // per-user mode broadcast node, else unused
  bool has_hub = false;
  std::set<UserId> latent_adopters;  // per-user mode ground truth
  std::size_t preventive_roots = 0;
  std::size_t other_roots = 0;
};

// `count` root messages (per-user mode requires count == 1).
SynthResult simulate_cascades(const SpilloverScenario& sc, int count);

}  // namespace spillcast
