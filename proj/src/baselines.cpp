#include "spillcast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spillcast/errors.hpp"

namespace spillcast {

Eigen::RowVectorXd cascade_features(const ObservedCascade& oc, const SocialGraph& g) {
  if (oc.observed.empty()) throw DataError("features: observed cascade is empty");
  Eigen::RowVectorXd f(kNumCascadeFeatures);
  const UserId originator = oc.observed.front().user;
  std::vector<UserId> users;
  users.reserve(oc.observed.size());
  double first_hop = 0.0;
  double sum_out = 0.0;
  double max_out = 0.0;
  for (const Adoption& a : oc.observed) {
    if (!g.has_node(a.user)) {
      throw DataError("features: adopter " + std::to_string(a.user) + " not in graph");
    }
    users.push_back(a.user);
    const auto deg = static_cast<double>(g.out_degree(a.user));
    sum_out += deg;
    max_out = std::max(max_out, deg);
    if (a.user != originator && g.has_edge(a.user, originator)) first_hop += 1.0;
  }
  const std::size_t half = (oc.observed.size() + 1) / 2;
  const std::int64_t half_time = oc.observed[half - 1].time - oc.root_time;

  f(0) = static_cast<double>(oc.observed.size());
  f(1) = first_hop;
  f(2) = static_cast<double>(g.induced(users).edge_count());
  f(3) = sum_out / static_cast<double>(oc.observed.size());
  f(4) = max_out;
  f(5) = static_cast<double>(half_time);
  f(6) = static_cast<double>(g.out_degree(originator));
  return f;
}

Eigen::MatrixXd feature_matrix(const std::vector<ObservedCascade>& cascades,
                               const SocialGraph& g) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(cascades.size()), kNumCascadeFeatures);
  for (std::size_t i = 0; i < cascades.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = cascade_features(cascades[i], g);
  }
  return X;
}

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double l2) {
  if (X.rows() < 2) throw DataError("ridge: need at least 2 training rows");
  if (X.rows() != y.size()) {
    throw DataError("ridge: " + std::to_string(X.rows()) + " rows vs " +
                    std::to_string(y.size()) + " targets");
  }
  if (!(l2 > 0.0)) throw ConfigError("ridge: l2 must be > 0");
  Eigen::MatrixXd Xa(X.rows(), X.cols() + 1);
  Xa << X, Eigen::VectorXd::Ones(X.rows());
  Eigen::MatrixXd gram = Xa.transpose() * Xa;
  gram.diagonal().array() += l2;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw NumericError("ridge: factorization failed");
  RidgeModel model;
  model.weights = solver.solve(Xa.transpose() * y);
  if (!model.weights.allFinite()) throw NumericError("ridge: non-finite solution");
  return model;
}

Eigen::VectorXd ridge_predict(const RidgeModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() + 1 != model.weights.size()) {
    throw ShapeError("ridge: " + std::to_string(X.cols()) + " features vs " +
                     std::to_string(model.weights.size() - 1) + " weights");
  }
  return X * model.weights.head(X.cols()) +
         Eigen::VectorXd::Constant(X.rows(), model.weights(X.cols()));
}

Eigen::VectorXd ridge_predict_clipped(const RidgeModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd pred = ridge_predict(model, X);
  return pred.cwiseMax(X.col(0));
}

double seismic_kernel_mass(double x, const SeismicParams& p) {
  if (!(p.theta > 0.0) || !(p.const_period > 0.0)) {
    throw ConfigError("seismic: theta and const_period must be > 0");
  }
  if (x <= 0.0) return 0.0;
  const double c = p.theta / (p.const_period * (1.0 + p.theta));
  if (x <= p.const_period) return c * x;
  const double tail = (c * p.const_period / p.theta) *
                      (1.0 - std::pow(x / p.const_period, -p.theta));
  return c * p.const_period + tail;
}

double seismic_predict(const ObservedCascade& oc,
                       const std::map<UserId, double>& follower_counts, double now,
                       const SeismicParams& p) {
  if (oc.observed.empty()) throw DataError("seismic: observed cascade is empty");
  const auto n_t = static_cast<double>(oc.observed.size());
  double spent = 0.0;      // follower mass already swept by the kernel
  double remaining = 0.0;  // follower mass still to come
  double total = 0.0;
  for (const Adoption& a : oc.observed) {
    auto it = follower_counts.find(a.user);
    if (it == follower_counts.end()) {
      throw DataError("seismic: no follower count for user " + std::to_string(a.user));
    }
    const double ni = it->second;
    if (ni < 0.0) {
      throw DataError("seismic: negative follower count for user " + std::to_string(a.user));
    }
    const double age = now - static_cast<double>(a.time);
    if (age < 0.0) throw DataError("seismic: adoption after evaluation time");
    const double mass = seismic_kernel_mass(age, p);
    spent += ni * mass;
    remaining += ni * (1.0 - mass);
    total += ni;
  }
  if (total <= 0.0 || spent <= 0.0) return n_t;
  const double retweets = n_t - 1.0;
  const double infectiousness = retweets / spent;
  const double mean_followers = total / n_t;
  const double branching = std::min(infectiousness * mean_followers, p.correction_cap);
  const double pred = n_t + infectiousness * remaining / (1.0 - branching);
  return std::max(pred, n_t);
}

std::map<UserId, double> follower_counts_from_graph(const SocialGraph& g) {
  std::map<UserId, double> counts;
  for (UserId u : g.nodes()) counts[u] = static_cast<double>(g.in_degree(u));
  return counts;
}

std::map<UserId, double> load_follower_counts(std::istream& in) {
  std::map<UserId, double> counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    UserId id;
    double c;
    if (!(ls >> id >> c)) {
      throw DataError("follower counts line " + std::to_string(line_no) + ": expected id and count");
    }
    counts[id] = c;
  }
  return counts;
}

std::map<UserId, double> load_follower_counts_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open follower counts: " + path);
  return load_follower_counts(in);
}

}  // namespace spillcast
