#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spillcast/graph.hpp"

namespace spillcast {

inline constexpr int kNumCascadeFeatures = 7;

// Structural features of one observed cascade, fixed order:
//   0 observed size n_T
//   1 distinct first-hop spreaders (observed adopters following the originator)
//   2 edge count of the subgraph induced by observed adopters
//   3 mean out-degree of observed adopters
//   4 max out-degree of observed adopters
//   5 seconds until half (rounded up) of the observed adopters had adopted
//   6 originator out-degree
Eigen::RowVectorXd cascade_features(const ObservedCascade& oc, const SocialGraph& g);

Eigen::MatrixXd feature_matrix(const std::vector<ObservedCascade>& cascades,
                               const SocialGraph& g);

// Closed-form ridge regression with an intercept column appended to X; the
// penalty applies to all coefficients including the intercept.
struct RidgeModel {
  Eigen::VectorXd weights;  // feature weights then intercept
};

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double l2);
Eigen::VectorXd ridge_predict(const RidgeModel& model, const Eigen::MatrixXd& X);
// Affine predictions floored at the observed size (feature column 0).
Eigen::VectorXd ridge_predict_clipped(const RidgeModel& model, const Eigen::MatrixXd& X);

struct SeismicParams {
  double theta = 0.242;         // power-law decay exponent
  double const_period = 300.0;  // seconds of constant kernel before the decay
  double correction_cap = 0.9;  // cap on the branching correction p * mean-followers
};

// Integral of the memory kernel over [0, x]; approaches 1 as x grows.
double seismic_kernel_mass(double x, const SeismicParams& p);

// Point-process estimate of the final size at time `now` (absolute seconds).
// Follower counts must cover every observed adopter. Zero kernel-weighted
// follower mass yields the observed size.
double seismic_predict(const ObservedCascade& oc,
                       const std::map<UserId, double>& follower_counts, double now,
                       const SeismicParams& p = {});

// In-degree of every node (their audience on the follow graph).
std::map<UserId, double> follower_counts_from_graph(const SocialGraph& g);

// "user-id count" per line.
std::map<UserId, double> load_follower_counts(std::istream& in);
std::map<UserId, double> load_follower_counts_file(const std::string& path);

}  // namespace spillcast
